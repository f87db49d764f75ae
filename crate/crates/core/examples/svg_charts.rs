//! Write one of each chart kind to the temp directory.

use demandscope::svg::{bar_chart, beeswarm, line_chart, waterfall, Series, SwarmPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("demandscope_charts");
    std::fs::create_dir_all(&dir)?;
    let labels: Vec<String> = ["average_price_dollars", "age", "annual_income", "gender"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let bars = bar_chart(
        "Feature importance",
        &labels,
        &[0.31, 0.18, 0.12, 0.04],
        "mean impurity decrease",
    );
    let swarm_rows: Vec<Vec<SwarmPoint>> = (0..labels.len())
        .map(|f| {
            (0..30)
                .map(|i| {
                    let c = i as f64 / 29.0;
                    SwarmPoint {
                        x: (c - 0.5) * 0.2 / (f + 1) as f64,
                        color: c,
                    }
                })
                .collect()
        })
        .collect();
    let swarm = beeswarm("No travel", &labels, &swarm_rows, "SHAP value");
    let steps: Vec<(String, f64)> = labels.iter().cloned().zip([0.21, -0.08, 0.05, 0.01]).collect();
    let fall = waterfall("Row 0", 0.42, &steps, "P(no travel)");
    let roc = line_chart(
        "ROC",
        &[Series {
            name: "fold 1".into(),
            points: vec![(0.0, 0.0), (0.1, 0.5), (0.3, 0.8), (1.0, 1.0)],
        }],
        "false positive rate",
        "true positive rate",
        true,
    );

    for (name, svg) in [("bars", bars), ("beeswarm", swarm), ("waterfall", fall), ("roc", roc)] {
        let path = dir.join(format!("{name}.svg"));
        std::fs::write(&path, svg)?;
        println!("{}", path.display());
    }
    Ok(())
}
