//! Retrain SpaceNet from several initializations on one fixed feature
//! selection and report how far each feature's global SHAP rank moves.
//! Observational only, nothing is asserted.

use std::collections::BTreeMap;

use demandscope::config::PipelineConfig;
use demandscope::pipeline::{self, FULL_FIT};
use demandscope::spacenet::{train, Checkpoint};
use demandscope::synth;

const CONFIG: &str = r#"
synth.n_rows = 600
selection.top_k = 10
selection.n_trees = 60
model.d_model = 16
model.ff_hidden = 32
model.mlp_hidden = 16
train.epochs = 8
train.lr = 0.003
explain.n_instances = 16
explain.background_size = 20
explain.n_permutations = 4
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = PipelineConfig::from_toml_str(CONFIG, &[])?;
    let data = synth::generate(&base.generator_config())?.dataset;
    let (cleaned, _) = pipeline::clean(&base, &data)?;

    let all: Vec<usize> = (0..cleaned.len()).collect();
    let prepared = pipeline::prepare_fold(&base, &cleaned, &all, FULL_FIT)?;
    println!("selected: {}\n", prepared.input.selected_features.join(", "));

    let seeds = [1u64, 2, 3, 4, 5];
    let mut ranks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &seed in &seeds {
        let mut model_config = base.model_config(FULL_FIT);
        let mut train_config = base.train_config(FULL_FIT);
        model_config.seed = seed;
        train_config.seed = seed;
        let (model, _) = train(&prepared.train_x, &prepared.train_y, None, &model_config, &train_config)?;
        let checkpoint = Checkpoint {
            model,
            input: Some(prepared.input.clone()),
            config_digest: None,
        };
        let run = pipeline::explain_model(&base, &checkpoint, &cleaned)?;
        let names = run.global.ranked_names();
        println!(
            "seed {seed}: {}",
            names.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
        );
        for (r, name) in names.iter().enumerate() {
            ranks.entry(name.to_string()).or_default().push(r + 1);
        }
    }

    let mut rows: Vec<(f64, &String, &Vec<usize>)> = ranks
        .iter()
        .map(|(name, r)| (r.iter().sum::<usize>() as f64 / r.len() as f64, name, r))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!(
        "\n{:<32} {:>6} {:>5} {:>5} {:>6}",
        "feature", "mean", "min", "max", "span"
    );
    for (mean, name, r) in rows {
        let (lo, hi) = (r.iter().min().unwrap(), r.iter().max().unwrap());
        println!("{name:<32} {mean:>6.2} {lo:>5} {hi:>5} {:>6}", hi - lo);
    }
    Ok(())
}
