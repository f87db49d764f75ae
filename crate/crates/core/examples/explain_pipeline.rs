//! Fit the pipeline on a small survey and explain the trained model.

use demandscope::config::PipelineConfig;
use demandscope::data::TravelClass;
use demandscope::{pipeline, synth};

const CONFIG: &str = r#"
seed = 5
synth.n_rows = 600
selection.top_k = 10
selection.n_trees = 60
model.d_model = 16
model.ff_hidden = 32
model.mlp_hidden = 16
train.epochs = 10
train.lr = 0.003
explain.n_instances = 12
explain.background_size = 20
explain.n_permutations = 4
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = PipelineConfig::from_toml_str(CONFIG, &[])?;
    let data = synth::generate(&config.generator_config())?.dataset;
    let (cleaned, _) = pipeline::clean(&config, &data)?;
    let fit = pipeline::fit_full(&config, &cleaned)?;
    let run = pipeline::explain_model(&config, &fit.checkpoint, &cleaned)?;

    println!("global ranking by mean |phi| over {} rows:", run.global.n_explanations);
    for (rank, name) in run.global.ranked_names().iter().take(8).enumerate() {
        println!("  {:>2}. {name}", rank + 1);
    }
    for summary in &run.per_class {
        let top: Vec<&str> = summary.features.iter().take(3).map(|f| f.feature.as_str()).collect();
        println!("{:<10} {}", TravelClass::ALL[summary.class].name(), top.join(", "));
    }

    let w = &run.instance.waterfall;
    println!(
        "\nrow {} predicted {} with p = {:.3} (base {:.3})",
        run.instance.explanation.instance,
        TravelClass::ALL[w.class].name(),
        w.prediction,
        w.base
    );
    for step in w.steps.iter().take(5) {
        println!(
            "  {:<32} {:>10}  {:+.4}",
            step.feature, step.raw_value, step.contribution
        );
    }
    Ok(())
}
