//! Every command from synthesis to the markdown report, in a temp directory.
//! Same as running the binary with each subcommand in turn.

use demandscope::cli::{run, Command};
use demandscope::config::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("demandscope_full_pipeline");
    let config = PipelineConfig::from_toml_str(
        r#"
        seed = 1
        synth.n_rows = 500
        selection.top_k = 10
        selection.n_trees = 50
        model.d_model = 16
        model.ff_hidden = 32
        model.mlp_hidden = 16
        train.epochs = 6
        cv.k = 3
        explain.n_instances = 6
        explain.background_size = 10
        explain.n_permutations = 2
        "#,
        &[format!(
            "paths.out_dir={}",
            toml::Value::String(out.display().to_string())
        )],
    )?;
    for command in [
        Command::Synth,
        Command::Clean,
        Command::Train,
        Command::Eval,
        Command::Explain,
        Command::Report,
    ] {
        let written = run(command, &config)?;
        println!("{command:?}: {} files", written.len());
    }
    let report = std::fs::read_to_string(out.join("report.md"))?;
    println!("\n{report}");
    Ok(())
}
