use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use demandscope::cli::{self, CliError, Command};
use demandscope::config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "demandscope",
    version,
    about = "Explainable travel-demand classification pipeline"
)]
struct Args {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `paths.out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Generate the synthetic survey and its ground-truth log.
    Synth,
    /// Drop IQR outliers from the survey.
    Clean,
    /// Fit selection, balancing and SpaceNet on all cleaned rows.
    Train,
    /// Cross-validate the selected and all-feature pipelines.
    Eval,
    /// Shapley explanations of the trained checkpoint.
    Explain,
    /// Markdown summary of the evaluation and explanations.
    Report,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let line = serde_json::json!({"error": "Usage", "exit_code": 1, "message": e.kind().to_string()});
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    let mut overrides = args.set.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!(
            "paths.out_dir={}",
            toml::Value::String(out.display().to_string())
        ));
    }
    let command = match args.command {
        Sub::Synth => Command::Synth,
        Sub::Clean => Command::Clean,
        Sub::Train => Command::Train,
        Sub::Eval => Command::Eval,
        Sub::Explain => Command::Explain,
        Sub::Report => Command::Report,
    };
    let result = PipelineConfig::load(args.config.as_deref(), &overrides)
        .map_err(CliError::from)
        .and_then(|config| {
            cli::init_threads(&config);
            cli::run(command, &config)
        });
    match result {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
