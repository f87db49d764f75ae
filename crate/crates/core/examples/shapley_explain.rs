//! Exact and sampled Shapley values for a toy four-class model with an
//! interaction term.

use demandscope::explain::{
    exact_attribution, instance_explanation, sampled_attribution, BackgroundSet, FeatureGroups, FnModel, ShapleyMethod,
};
use demandscope::matrix::Matrix;

fn softmax(z: [f64; 4]) -> [f64; 4] {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names: Vec<String> = ["price", "income", "age", "risk", "children"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let model = FnModel(|rows: &Matrix| {
        let out: Vec<[f64; 4]> = rows
            .iter_rows()
            .map(|x| softmax([1.5 * x[0], x[1] - 0.5 * x[2], 0.8 * x[2] + x[0] * x[3], -x[4]]))
            .collect();
        Matrix::from_rows(&out)
    });

    let background = BackgroundSet::new(Matrix::from_rows(&[
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, -1.0, 0.5, 0.0, 1.0],
        [-1.0, 0.5, -0.5, 1.0, 0.0],
        [0.5, 0.5, 1.0, -1.0, 2.0],
    ]))?;
    let groups = FeatureGroups::singletons(&names);
    let x = [1.2, -0.3, 0.8, 1.5, 0.0];

    let exact = exact_attribution(&model, &x, &background, &groups)?;
    let sampled = sampled_attribution(&model, &x, &background, &groups, 40, 42)?;
    let se = sampled.std_err.as_ref().unwrap();
    println!("class 0 (no travel)");
    println!("{:<10} {:>9} {:>9} {:>8}", "feature", "exact", "sampled", "se");
    for (f, name) in names.iter().enumerate() {
        println!(
            "{name:<10} {:>9.5} {:>9.5} {:>8.5}",
            exact.phi.get(f, 0),
            sampled.phi.get(f, 0),
            se.get(f, 0)
        );
    }
    println!(
        "efficiency gap: exact {:.1e}, sampled {:.1e}",
        exact.efficiency_gap(),
        sampled.efficiency_gap()
    );

    // 5! = 120 orderings, so 120 permutations enumerate them all
    let all = sampled_attribution(&model, &x, &background, &groups, 120, 0)?;
    println!("exhaustive ordering pass: {}", all.exhaustive);

    let shown = instance_explanation(&model, &x, 0, &background, &groups, ShapleyMethod::Exact, 0)?;
    println!("\n{}", shown.waterfall.describe(3));
    Ok(())
}
