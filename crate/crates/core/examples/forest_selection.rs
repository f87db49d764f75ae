//! Gini impurity by hand, then a small forest ranking survey features.

use demandscope::data::encode;
use demandscope::forest::{feature_importance, fit_forest, gini, impurity_decrease, select_top_k, ForestParams};
use demandscope::preprocess::fit_standardizer;
use demandscope::synth::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 4 classes, one node split into two
    let parent = [6, 2, 2, 0];
    let (left, right) = ([6, 0, 1, 0], [0, 2, 1, 0]);
    println!("gini(parent) = {:.4}", gini(&parent)?);
    println!("impurity decrease = {:.4}", impurity_decrease(&parent, &left, &right)?);

    let generated = generate(&GeneratorConfig {
        n_rows: 1200,
        seed: 11,
        ..GeneratorConfig::default()
    })?;
    let data = &generated.dataset;
    let encoded = encode(data);
    let all: Vec<usize> = (0..encoded.rows()).collect();
    let encoded = fit_standardizer(&encoded, &all)?.apply(&encoded)?;

    let params = ForestParams {
        n_trees: 60,
        max_depth: 4,
        min_samples_split: 20,
        seed: 1,
        ..ForestParams::default()
    };
    let forest = fit_forest(&encoded, data.labels(), &params)?;
    let report = feature_importance(&forest)?;
    println!("\ntop features by mean impurity decrease:");
    for &f in report.ranking.iter().take(12) {
        let marker = if generated.truth.signal_features.contains(&report.features[f]) {
            "*"
        } else {
            " "
        };
        println!("  {marker} {:<32} {:.4}", report.features[f], report.scores[f]);
    }
    println!("(* = carries signal in the generator)");

    let top = select_top_k(&report, 10)?;
    let hits = top
        .iter()
        .filter(|f| generated.truth.signal_features.contains(f))
        .count();
    println!(
        "signal features in the top 10: {hits}/{}",
        generated.truth.signal_features.len()
    );
    Ok(())
}
