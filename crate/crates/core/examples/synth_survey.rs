//! Generate a small synthetic survey and look at what the generator planted.

use demandscope::data::TravelClass;
use demandscope::synth::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GeneratorConfig {
        n_rows: 500,
        seed: 7,
        ..GeneratorConfig::default()
    };
    let generated = generate(&config)?;
    let data = &generated.dataset;

    println!("{} rows, {} features", data.len(), data.schema().len());
    for class in TravelClass::ALL {
        let share = generated.truth.realized_shares[class.index()];
        println!("  {:<10} {:>5.1}%", class.name(), 100.0 * share);
    }
    println!("signal features: {}", generated.truth.signal_features.join(", "));
    println!("injected outliers: {}", generated.truth.outliers.len());
    if let Some(auc) = generated.truth.bayes_macro_auc {
        println!("macro AUC of the true probabilities: {auc:.3}");
    }

    let csv = data.to_csv_string()?;
    for line in csv.lines().take(3) {
        let shown: String = line.chars().take(100).collect();
        println!("{shown}...");
    }
    Ok(())
}
