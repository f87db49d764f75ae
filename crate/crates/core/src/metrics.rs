//! ROC analysis, AUC, one-vs-rest multiclass AUC and k-fold aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{stratified_kfold, DataError, Dataset, FoldPlan, TravelClass, N_CLASSES};
use crate::matrix::{mean, population_std, Matrix};
use crate::spacenet::{Checkpoint, SpaceNetError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("AUC needs both positive and negative samples")]
    SingleClassOnly,
    #[error("class {0} is absent from the labels")]
    MissingClass(TravelClass),
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("probability matrix has {0} columns, expected {N_CLASSES}")]
    ProbabilityWidth(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] SpaceNetError),
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(s));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClassOnly);
    }
    Ok((pos, neg))
}

/// ROC curve over every distinct score threshold. A sample is called
/// positive when its score is at least the threshold; the first threshold is
/// `+inf`, which gives the `(0, 0)` corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub tn: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.fpr.iter().copied().zip(self.tpr.iter().copied()).collect()
    }

    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[1] + y[0]) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr,tp,fp,tn,fn\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.thresholds[i], self.fpr[i], self.tpr[i], self.tp[i], self.fp[i], self.tn[i], self.fn_[i]
            ));
        }
        out
    }
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricsError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = RocCurve {
        thresholds: vec![f64::INFINITY],
        fpr: vec![0.0],
        tpr: vec![0.0],
        tp: vec![0],
        fp: vec![0],
        tn: vec![neg],
        fn_: vec![pos],
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.thresholds.push(tau);
        curve.tp.push(tp);
        curve.fp.push(fp);
        curve.tn.push(neg - fp);
        curve.fn_.push(pos - tp);
        curve.fpr.push(fp as f64 / neg as f64);
        curve.tpr.push(tp as f64 / pos as f64);
    }
    Ok(curve)
}

/// Area under the ROC curve by the rank-sum statistic
/// `(R_pos - P(P+1)/2) / (P N)` with mid-ranks for ties.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their average
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    pub macro_auc: f64,
    pub per_class: [f64; N_CLASSES],
}

/// Macro average of the four one-vs-rest AUCs.
pub fn macro_ovr_auc(probs: &Matrix, labels: &[TravelClass]) -> Result<MulticlassAuc, MetricsError> {
    if probs.cols() != N_CLASSES {
        return Err(MetricsError::ProbabilityWidth(probs.cols()));
    }
    if probs.rows() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: probs.rows(),
            labels: labels.len(),
        });
    }
    let mut per_class = [0.0; N_CLASSES];
    for class in TravelClass::ALL {
        let truth: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        if !truth.contains(&true) {
            return Err(MetricsError::MissingClass(class));
        }
        per_class[class.index()] = binary_auc(&probs.column(class.index()), &truth)?;
    }
    Ok(MulticlassAuc {
        macro_auc: per_class.iter().sum::<f64>() / N_CLASSES as f64,
        per_class,
    })
}

/// A pipeline evaluated fold by fold: fit on `train` rows, return class
/// probabilities for `test` rows.
pub trait FoldModel: Sync {
    type Error: From<MetricsError> + Send;
    fn fit_predict(
        &self,
        dataset: &Dataset,
        train: &[usize],
        test: &[usize],
        fold: usize,
    ) -> Result<Matrix, Self::Error>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub probs: Matrix,
    pub auc: MulticlassAuc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub k: usize,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    /// Mean over folds of each class's one-vs-rest AUC.
    pub per_class_auc: [f64; N_CLASSES],
}

impl CvSummary {
    pub fn from_folds(folds: &[FoldOutcome]) -> Self {
        let per_fold: Vec<f64> = folds.iter().map(|f| f.auc.macro_auc).collect();
        let mut per_class_auc = [0.0; N_CLASSES];
        for (c, slot) in per_class_auc.iter_mut().enumerate() {
            *slot = mean(&folds.iter().map(|f| f.auc.per_class[c]).collect::<Vec<_>>());
        }
        Self {
            k: folds.len(),
            mean: mean(&per_fold),
            std: population_std(&per_fold),
            per_fold,
            per_class_auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    pub summary: CvSummary,
}

/// Stratified k-fold evaluation. Folds run concurrently on the current rayon
/// pool; results are collected in fold order.
pub fn cross_validate<M: FoldModel>(dataset: &Dataset, model: &M, k: usize, seed: u64) -> Result<CvResult, M::Error> {
    let plan = stratified_kfold(dataset.labels(), k, seed).map_err(MetricsError::from)?;
    let folds = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train = plan.train_indices(fold);
            let test = plan.test_indices(fold);
            let probs = model.fit_predict(dataset, &train, &test, fold)?;
            let labels: Vec<TravelClass> = test.iter().map(|&i| dataset.labels()[i]).collect();
            let auc = macro_ovr_auc(&probs, &labels)?;
            Ok(FoldOutcome {
                fold,
                test_indices: test,
                probs,
                auc,
            })
        })
        .collect::<Result<Vec<_>, M::Error>>()?;
    let summary = CvSummary::from_folds(&folds);
    Ok(CvResult { plan, folds, summary })
}

/// SHA-256 over the little-endian bytes of every value.
pub fn matrix_digest(m: &Matrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update((m.rows() as u64).to_le_bytes());
    hasher.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMismatch {
    pub repeat: usize,
    pub row: usize,
    pub col: usize,
    pub expected: f64,
    pub found: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetestReport {
    pub consistent: bool,
    pub repeats: usize,
    pub reference_digest: String,
    pub digests: Vec<String>,
    pub first_mismatch: Option<CellMismatch>,
}

fn first_difference(reference: &Matrix, found: &Matrix, repeat: usize) -> Option<CellMismatch> {
    if (reference.rows(), reference.cols()) != (found.rows(), found.cols()) {
        return Some(CellMismatch {
            repeat,
            row: reference.rows().min(found.rows()),
            col: 0,
            expected: f64::NAN,
            found: f64::NAN,
        });
    }
    reference
        .as_slice()
        .iter()
        .zip(found.as_slice())
        .position(|(a, b)| a.to_bits() != b.to_bits())
        .map(|i| CellMismatch {
            repeat,
            row: i / reference.cols(),
            col: i % reference.cols(),
            expected: reference.as_slice()[i],
            found: found.as_slice()[i],
        })
}

/// Re-evaluates `checkpoint` on `rows` `repeats` times, each time after a
/// serialize/reload round trip, and checks every probability matrix against
/// `reference` bit for bit. Without a reference the in-memory model's own
/// predictions are used.
pub fn test_retest(
    checkpoint: &Checkpoint,
    rows: &Matrix,
    repeats: usize,
    reference: Option<&Matrix>,
) -> Result<RetestReport, MetricsError> {
    let reference = match reference {
        Some(r) => r.clone(),
        None => checkpoint.model.predict_proba(rows)?,
    };
    let text = checkpoint.to_json()?;
    let mut digests = Vec::with_capacity(repeats);
    let mut first_mismatch = None;
    for repeat in 0..repeats {
        let reloaded = Checkpoint::from_json(&text)?;
        let probs = reloaded.model.predict_proba(rows)?;
        digests.push(matrix_digest(&probs));
        if first_mismatch.is_none() {
            first_mismatch = first_difference(&reference, &probs, repeat);
        }
    }
    Ok(RetestReport {
        consistent: first_mismatch.is_none(),
        repeats,
        reference_digest: matrix_digest(&reference),
        digests,
        first_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, FeatureSpec, Schema};
    use crate::spacenet::{ModelConfig, SpaceNet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn hand_example() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert!((binary_auc(&scores, &labels).unwrap() - 0.75).abs() < 1e-12);
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(
            curve.points(),
            vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
        );
        assert!((curve.area() - 0.75).abs() < 1e-12);
        for i in 0..curve.len() {
            assert_eq!(curve.tp[i] + curve.fn_[i], 2);
            assert_eq!(curve.fp[i] + curve.tn[i], 2);
        }
    }

    #[test]
    fn extremes() {
        let labels = [false, false, true, true];
        assert_eq!(binary_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(binary_auc(&[0.3; 4], &labels).unwrap(), 0.5);
        assert!(roc_curve(&[0.1, 0.2, 0.8, 0.9], &labels)
            .unwrap()
            .points()
            .contains(&(0.0, 1.0)));
        assert!(matches!(
            binary_auc(&[0.1, 0.2], &[true, true]),
            Err(MetricsError::SingleClassOnly)
        ));
        assert!(matches!(
            binary_auc(&[0.1], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            binary_auc(&[f64::NAN, 1.0], &[true, false]),
            Err(MetricsError::NonFiniteScore(_))
        ));
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
        let n = rng.gen_range(2..=30);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse grid so ties are common
        let scores = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
        (scores, labels)
    }

    #[test]
    fn matches_brute_force_concordance() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let (scores, labels) = random_instance(&mut rng);
            let auc = binary_auc(&scores, &labels).unwrap();
            assert!((auc - concordance(&scores, &labels)).abs() < 1e-12);
            assert!((auc - roc_curve(&scores, &labels).unwrap().area()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn increasing_transform_and_complement(
            raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assume!(labels.contains(&true) && labels.contains(&false));
            let auc = binary_auc(&scores, &labels).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert!((auc - binary_auc(&transformed, &labels).unwrap()).abs() < 1e-12);
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((auc + binary_auc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
            let curve = roc_curve(&scores, &labels).unwrap();
            prop_assert_eq!(curve.points().first().copied(), Some((0.0, 0.0)));
            prop_assert_eq!(curve.points().last().copied(), Some((1.0, 1.0)));
            for i in 0..curve.len() {
                prop_assert_eq!(curve.fpr[i], curve.fp[i] as f64 / (curve.fp[i] + curve.tn[i]) as f64);
                prop_assert_eq!(curve.tpr[i], curve.tp[i] as f64 / (curve.tp[i] + curve.fn_[i]) as f64);
                if i > 0 {
                    prop_assert!(curve.fpr[i] >= curve.fpr[i - 1] && curve.tpr[i] >= curve.tpr[i - 1]);
                }
            }
        }
    }

    fn balanced_labels(n: usize) -> Vec<TravelClass> {
        (0..n).map(|i| TravelClass::ALL[i % 4]).collect()
    }

    #[test]
    fn multiclass_examples() {
        let labels = balanced_labels(12);
        let mut onehot = Matrix::zeros(12, 4);
        for (i, l) in labels.iter().enumerate() {
            onehot.set(i, l.index(), 1.0);
        }
        assert_eq!(macro_ovr_auc(&onehot, &labels).unwrap().macro_auc, 1.0);
        assert_eq!(
            macro_ovr_auc(&Matrix::filled(12, 4, 0.25), &labels).unwrap().macro_auc,
            0.5
        );
        let missing = vec![TravelClass::Moon; 12];
        assert!(matches!(
            macro_ovr_auc(&onehot, &missing),
            Err(MetricsError::MissingClass(TravelClass::NoTravel))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = balanced_labels(50);
        let probs = Matrix::new(50, 4, (0..200).map(|_| rng.gen::<f64>()).collect());
        let got = macro_ovr_auc(&probs, &labels).unwrap();
        let mut expected = 0.0;
        for c in 0..4 {
            let truth: Vec<bool> = labels.iter().map(|l| l.index() == c).collect();
            let oracle = concordance(&probs.column(c), &truth);
            assert_eq!(got.per_class[c], oracle);
            expected += oracle / 4.0;
        }
        assert!((got.macro_auc - expected).abs() < 1e-15);
    }

    fn toy_dataset(n: usize) -> Dataset {
        let schema = Schema::new(vec![FeatureSpec::continuous("x")], "label").unwrap();
        let labels = balanced_labels(n);
        let rows = (0..n).map(|i| vec![Cell::Number(i as f64)]).collect();
        Dataset::new(schema, rows, labels).unwrap()
    }

    struct Oracle;
    impl FoldModel for Oracle {
        type Error = MetricsError;
        fn fit_predict(&self, d: &Dataset, _: &[usize], test: &[usize], _: usize) -> Result<Matrix, MetricsError> {
            let mut m = Matrix::zeros(test.len(), 4);
            for (r, &i) in test.iter().enumerate() {
                m.set(r, d.labels()[i].index(), 1.0);
            }
            Ok(m)
        }
    }

    struct Noise;
    impl FoldModel for Noise {
        type Error = MetricsError;
        fn fit_predict(&self, _: &Dataset, _: &[usize], test: &[usize], fold: usize) -> Result<Matrix, MetricsError> {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + fold as u64);
            Ok(Matrix::new(
                test.len(),
                4,
                (0..test.len() * 4).map(|_| rng.gen::<f64>()).collect(),
            ))
        }
    }

    #[test]
    fn cross_validation_with_oracles() {
        let data = toy_dataset(1000);
        let perfect = cross_validate(&data, &Oracle, 5, 7).unwrap();
        assert_eq!(perfect.summary.mean, 1.0);
        assert_eq!(perfect.summary.std, 0.0);
        assert_eq!(perfect.summary.k, 5);
        let covered: usize = perfect.folds.iter().map(|f| f.test_indices.len()).sum();
        assert_eq!(covered, 1000);
        let random = cross_validate(&data, &Noise, 5, 7).unwrap();
        assert!((random.summary.mean - 0.5).abs() < 0.05, "{}", random.summary.mean);
        assert_eq!(random, cross_validate(&data, &Noise, 5, 7).unwrap());
    }

    #[test]
    fn retest_detects_corruption() {
        let config = ModelConfig {
            d_model: 8,
            ff_hidden: 16,
            mlp_hidden: 8,
            n_layers: 1,
            ..ModelConfig::default()
        };
        let model = SpaceNet::new(config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = Matrix::new(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let ckpt = Checkpoint {
            model,
            input: None,
            config_digest: None,
        };
        let report = test_retest(&ckpt, &rows, 3, None).unwrap();
        assert!(report.consistent);
        assert_eq!(report.digests, vec![report.reference_digest.clone(); 3]);

        let reference = ckpt.model.predict_proba(&rows).unwrap();
        let mut corrupted = ckpt.clone();
        corrupted.model.params.head_b2.data_mut()[2] += 0.5;
        let report = test_retest(&corrupted, &rows, 3, Some(&reference)).unwrap();
        assert!(!report.consistent);
        let diff = report.first_mismatch.unwrap();
        assert_eq!((diff.repeat, diff.row), (0, 0));
        assert_eq!(diff.expected, reference.get(0, diff.col));
    }
}
