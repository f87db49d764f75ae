//! IQR fences on a hand-made column, then cleaning a generated survey.

use demandscope::preprocess::{filter_outliers, iqr_bounds, quantile};
use demandscope::synth::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut prices = vec![410.0, 395.0, 430.0, 388.0, 402.0, 415.0, 9_800.0, 399.0];
    let bounds = iqr_bounds(&prices)?;
    println!(
        "q1 {:.2}  q3 {:.2}  fences [{:.2}, {:.2}]",
        bounds.q1, bounds.q3, bounds.lo, bounds.hi
    );
    for p in &prices {
        println!("  {p:>8.1} {}", if bounds.is_outlier(*p) { "outlier" } else { "" });
    }
    prices.sort_by(f64::total_cmp);
    println!("median {:.2}", quantile(&prices, 0.5)?);

    let generated = generate(&GeneratorConfig {
        n_rows: 800,
        seed: 3,
        ..GeneratorConfig::default()
    })?;
    let data = &generated.dataset;
    let continuous: Vec<String> = data
        .schema()
        .features()
        .iter()
        .filter(|f| f.is_continuous())
        .map(|f| f.name.clone())
        .collect();
    let (cleaned, report) = filter_outliers(data, &continuous)?;
    let injected = generated.truth.outlier_rows();
    let caught = injected.iter().filter(|r| report.dropped.contains(r)).count();
    println!(
        "kept {} of {} rows; dropped {}; injected outliers caught {}/{}",
        cleaned.len(),
        data.len(),
        report.dropped.len(),
        caught,
        injected.len()
    );
    Ok(())
}
