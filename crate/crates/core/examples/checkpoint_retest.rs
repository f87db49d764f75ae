//! Save a trained checkpoint, reload it and confirm predictions match bit for bit.

use demandscope::config::PipelineConfig;
use demandscope::metrics::{matrix_digest, test_retest};
use demandscope::spacenet::Checkpoint;
use demandscope::{pipeline, synth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = PipelineConfig::from_toml_str(
        "synth.n_rows = 300\nselection.top_k = 8\nselection.n_trees = 30\nmodel.d_model = 8\nmodel.ff_hidden = 16\nmodel.mlp_hidden = 8\ntrain.epochs = 3",
        &[],
    )?;
    let data = synth::generate(&config.generator_config())?.dataset;
    let (cleaned, _) = pipeline::clean(&config, &data)?;
    let fit = pipeline::fit_full(&config, &cleaned)?;

    let path = std::env::temp_dir().join("demandscope_checkpoint_example.json");
    fit.checkpoint.save(&path)?;
    let reloaded = Checkpoint::load(&path)?;
    println!("saved {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let (model, rows) = pipeline::model_rows(&reloaded, &cleaned)?;
    let before = fit.checkpoint.model.predict_proba(&rows)?;
    let after = model.predict_proba(&rows)?;
    println!("in memory {}", matrix_digest(&before));
    println!("reloaded  {}", matrix_digest(&after));

    let report = test_retest(&reloaded, &rows, 3, Some(&before))?;
    println!("consistent over {} repeats: {}", report.repeats, report.consistent);
    std::fs::remove_file(&path)?;
    Ok(())
}
