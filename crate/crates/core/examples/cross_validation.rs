//! Plug a nearest-centroid classifier into the stratified k-fold harness.

use demandscope::data::{encode, Dataset, N_CLASSES};
use demandscope::matrix::Matrix;
use demandscope::metrics::{cross_validate, FoldModel, MetricsError};
use demandscope::preprocess::fit_standardizer;
use demandscope::synth::{generate, GeneratorConfig};

struct NearestCentroid {
    features: Vec<String>,
}

impl FoldModel for NearestCentroid {
    type Error = MetricsError;

    fn fit_predict(
        &self,
        dataset: &Dataset,
        train: &[usize],
        test: &[usize],
        _fold: usize,
    ) -> Result<Matrix, MetricsError> {
        let encoded = encode(dataset).select_features(&self.features);
        let encoded = fit_standardizer(&encoded, train)
            .expect("non-empty train rows")
            .apply(&encoded)
            .expect("same layout");
        let x = &encoded.values;
        let mut centroids = Matrix::zeros(N_CLASSES, x.cols());
        let mut counts = [0.0f64; N_CLASSES];
        for &i in train {
            let c = dataset.labels()[i].index();
            counts[c] += 1.0;
            for (acc, v) in centroids.row_mut(c).iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        for (c, n) in counts.iter().enumerate() {
            centroids.row_mut(c).iter_mut().for_each(|v| *v /= n.max(1.0));
        }
        let mut probs = Matrix::zeros(test.len(), N_CLASSES);
        for (r, &i) in test.iter().enumerate() {
            let d: Vec<f64> = (0..N_CLASSES)
                .map(|c| {
                    centroids
                        .row(c)
                        .iter()
                        .zip(x.row(i))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum()
                })
                .collect();
            let z: f64 = d.iter().map(|d| (-d / 2.0).exp()).sum();
            for (c, d) in d.iter().enumerate() {
                probs.set(r, c, (-d / 2.0).exp() / z);
            }
        }
        Ok(probs)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let generated = generate(&GeneratorConfig {
        n_rows: 1500,
        seed: 21,
        ..GeneratorConfig::default()
    })?;
    let data = &generated.dataset;

    let signal_only = NearestCentroid {
        features: generated.truth.signal_features.clone(),
    };
    let everything = NearestCentroid {
        features: data.schema().feature_names(),
    };
    for (name, model) in [("signal features", &signal_only), ("all features", &everything)] {
        let cv = cross_validate(data, model, 5, 0)?;
        let folds: Vec<String> = cv.summary.per_fold.iter().map(|a| format!("{a:.3}")).collect();
        println!(
            "{name:<16} macro AUC {:.3} +/- {:.3}  [{}]",
            cv.summary.mean,
            cv.summary.std,
            folds.join(" ")
        );
    }
    Ok(())
}
