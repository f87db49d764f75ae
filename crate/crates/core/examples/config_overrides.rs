//! Load a config, apply command-line style overrides and derive stage settings.

use demandscope::config::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "seed = 3\n[train]\nepochs = 20\n";
    let overrides = vec![
        "train.lr=0.0005".to_string(),
        "selection.top_k=15".to_string(),
        "paths.out_dir=runs/a".to_string(),
        "preprocess.outlier_columns=[\"average_price_dollars\"]".to_string(),
    ];
    let config = PipelineConfig::from_toml_str(text, &overrides)?;
    println!("{}", config.to_toml());
    println!("digest {}", config.digest());

    let forest = config.forest_params(0);
    let model = config.model_config(0);
    println!(
        "fold 0 forest seed {:#018x}, model seed {:#018x}",
        forest.seed, model.seed
    );
    let other = config.model_config(1);
    println!("fold 1 model seed {:#018x}", other.seed);

    for bad in ["train.epochz=3", "cv.k=1", "model.n_heads=3"] {
        match PipelineConfig::from_toml_str(text, &[bad.to_string()]) {
            Ok(_) => println!("{bad}: accepted"),
            Err(e) => println!("{bad}: {e}"),
        }
    }
    Ok(())
}
