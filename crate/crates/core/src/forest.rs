//! Random-forest classifier built from CART trees split on Gini impurity,
//! with impurity-decrease feature importance for feature selection.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EncodedMatrix, TravelClass, N_CLASSES};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("node with no samples")]
    EmptyNode,
    #[error("child counts do not add up to the parent, or a child is empty")]
    InconsistentCounts,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("row has {found} columns, forest was trained on {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("forest has no splits, importance is undefined")]
    NoSplits,
    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
}

/// Gini impurity `1 - sum p_i^2` of a node's class counts.
pub fn gini(counts: &[usize]) -> Result<f64, ForestError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    Ok(gini_unchecked(counts, total as f64))
}

fn gini_unchecked(counts: &[usize], total: f64) -> f64 {
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum::<f64>()
}

/// Parent impurity minus the size-weighted impurities of the two children.
pub fn impurity_decrease(parent: &[usize], left: &[usize], right: &[usize]) -> Result<f64, ForestError> {
    if parent.len() != left.len() || parent.len() != right.len() {
        return Err(ForestError::InconsistentCounts);
    }
    if parent.iter().zip(left.iter().zip(right)).any(|(p, (l, r))| *p != l + r) {
        return Err(ForestError::InconsistentCounts);
    }
    let n: usize = parent.iter().sum();
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    if nl == 0 || nr == 0 {
        return Err(ForestError::InconsistentCounts);
    }
    let n = n as f64;
    Ok(gini_unchecked(parent, n)
        - (nl as f64 / n) * gini_unchecked(left, nl as f64)
        - (nr as f64 / n) * gini_unchecked(right, nr as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Columns sampled per split; `None` means ceil(sqrt(m)).
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 12,
            min_samples_split: 2,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn mtry(&self, m: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
        decrease: f64,
    },
    Leaf {
        counts: [usize; N_CLASSES],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub bootstrap: Vec<usize>,
}

impl DecisionTree {
    /// Index of the leaf a row lands in. Rows go left when `x <= threshold`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    column,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*column] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> TravelClass {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { counts } => majority(counts),
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { column, decrease, .. } => Some((*column, *decrease)),
            Node::Leaf { .. } => None,
        })
    }
}

/// Most frequent class; the lowest class code wins ties.
fn majority(counts: &[usize; N_CLASSES]) -> TravelClass {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    TravelClass::ALL[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub n_columns: usize,
    /// Source feature of each column, used to roll importance up.
    pub origin: Vec<usize>,
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree>,
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [usize],
    max_depth: usize,
    min_samples_split: usize,
    mtry: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(&mut self, samples: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let mut counts = [0usize; N_CLASSES];
        for &s in samples.iter() {
            counts[self.labels[s]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || samples.len() < self.min_samples_split || pure {
            return id;
        }
        let Some((column, threshold, decrease)) = self.best_split(samples, &counts, rng) else {
            return id;
        };
        let mut mid = 0;
        for i in 0..samples.len() {
            if self.columns[column][samples[i]] <= threshold {
                samples.swap(i, mid);
                mid += 1;
            }
        }
        let (left_samples, right_samples) = samples.split_at_mut(mid);
        let left = self.build(left_samples, depth + 1, rng);
        let right = self.build(right_samples, depth + 1, rng);
        self.nodes[id] = Node::Split {
            column,
            threshold,
            left,
            right,
            decrease,
        };
        id
    }

    /// Exact scan over midpoints of consecutive distinct values of each
    /// sampled column. The first strictly best candidate wins.
    fn best_split<R: Rng>(
        &mut self,
        samples: &[usize],
        parent: &[usize; N_CLASSES],
        rng: &mut R,
    ) -> Option<(usize, f64, f64)> {
        let n = samples.len() as f64;
        let parent_gini = gini_unchecked(parent, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let candidates = index::sample(rng, self.columns.len(), self.mtry);
        for column in candidates.iter() {
            let values = &self.columns[column];
            self.scratch.clear();
            self.scratch
                .extend(samples.iter().map(|&s| (values[s], self.labels[s])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; N_CLASSES];
            let mut right = *parent;
            for i in 0..self.scratch.len() - 1 {
                let (v, label) = self.scratch[i];
                left[label] += 1;
                right[label] -= 1;
                let next = self.scratch[i + 1].0;
                if next <= v {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = n - nl;
                let decrease =
                    parent_gini - (nl / n) * gini_unchecked(&left, nl) - (nr / n) * gini_unchecked(&right, nr);
                if decrease > 0.0 && best.is_none_or(|b| decrease > b.2) {
                    let mut threshold = v + (next - v) / 2.0;
                    // midpoint can round up to `next` for adjacent floats
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((column, threshold, decrease));
                }
            }
        }
        best
    }
}

/// Fits `n_trees` trees, each on a bootstrap resample of all rows drawn with a
/// per-tree seed derived from the master seed. Trees fit in parallel; the
/// result does not depend on the thread count.
pub fn fit_forest(
    matrix: &EncodedMatrix,
    labels: &[TravelClass],
    params: &ForestParams,
) -> Result<RandomForest, ForestError> {
    let n = matrix.rows();
    let m = matrix.cols();
    if labels.len() != n {
        return Err(ForestError::LabelCount {
            rows: n,
            labels: labels.len(),
        });
    }
    let mtry = params.mtry(m);
    if params.n_trees == 0 || params.max_depth == 0 || mtry == 0 || mtry > m {
        return Err(ForestError::InvalidParams(format!(
            "n_trees={} max_depth={} mtry={mtry} columns={m}",
            params.n_trees, params.max_depth
        )));
    }
    if n == 0 || n < params.min_samples_split {
        return Err(ForestError::InvalidParams(format!(
            "{n} rows, min_samples_split={}",
            params.min_samples_split
        )));
    }
    let columns: Vec<Vec<f64>> = (0..m).map(|c| matrix.values.column(c)).collect();
    let labels: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::rng_for(params.seed, &[rng::STREAM_FOREST, t as u64]);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut samples = bootstrap.clone();
            let mut builder = TreeBuilder {
                columns: &columns,
                labels: &labels,
                max_depth: params.max_depth,
                min_samples_split: params.min_samples_split.max(2),
                mtry,
                nodes: Vec::new(),
                scratch: Vec::with_capacity(n),
            };
            builder.build(&mut samples, 0, &mut rng);
            DecisionTree {
                nodes: builder.nodes,
                bootstrap,
            }
        })
        .collect();
    Ok(RandomForest {
        params: params.clone(),
        n_columns: m,
        origin: matrix.origin.clone(),
        feature_names: matrix.source_names(),
        trees,
    })
}

impl RandomForest {
    /// Majority vote over trees; ties go to the lowest class code.
    pub fn predict(&self, row: &[f64]) -> Result<TravelClass, ForestError> {
        if row.len() != self.n_columns {
            return Err(ForestError::LayoutMismatch {
                expected: self.n_columns,
                found: row.len(),
            });
        }
        let mut votes = [0usize; N_CLASSES];
        for tree in &self.trees {
            votes[tree.predict(row).index()] += 1;
        }
        Ok(majority(&votes))
    }

    pub fn predict_all(&self, matrix: &Matrix) -> Result<Vec<TravelClass>, ForestError> {
        matrix.iter_rows().map(|r| self.predict(r)).collect()
    }
}

pub fn predict_forest(forest: &RandomForest, row: &[f64]) -> Result<TravelClass, ForestError> {
    forest.predict(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    /// Normalized to sum to 1.
    pub scores: Vec<f64>,
    /// Mean decrease per tree before normalization.
    pub raw: Vec<f64>,
    /// Feature indices by descending score, ties in feature order.
    pub ranking: Vec<usize>,
    pub n_trees: usize,
}

/// Sums the impurity decrease of every split on each feature over all trees,
/// divides by the tree count, rolls one-hot columns up into their source
/// feature and normalizes the scores to sum to one.
pub fn feature_importance(forest: &RandomForest) -> Result<ImportanceReport, ForestError> {
    let n_features = forest.feature_names.len();
    let mut raw = vec![0.0; n_features];
    let mut any_split = false;
    for tree in &forest.trees {
        for (column, decrease) in tree.splits() {
            raw[forest.origin[column]] += decrease;
            any_split = true;
        }
    }
    if !any_split {
        return Err(ForestError::NoSplits);
    }
    let n_trees = forest.trees.len();
    for r in &mut raw {
        *r /= n_trees as f64;
    }
    let total: f64 = raw.iter().sum();
    let scores: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mut ranking: Vec<usize> = (0..n_features).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(ImportanceReport {
        features: forest.feature_names.clone(),
        scores,
        raw,
        ranking,
        n_trees,
    })
}

impl ImportanceReport {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        let idx = self.features.iter().position(|f| f == feature)?;
        self.ranking.iter().position(|&r| r == idx)
    }

    /// `feature,score,rank` with 1-based ranks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,score,rank\n");
        for (rank, &f) in self.ranking.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.features[f], self.scores[f], rank + 1));
        }
        out
    }
}

/// Names of the `k` highest-scoring features, in ranking order.
pub fn select_top_k(report: &ImportanceReport, k: usize) -> Result<Vec<String>, ForestError> {
    if k == 0 || k > report.features.len() {
        return Err(ForestError::KOutOfRange {
            k,
            n: report.features.len(),
        });
    }
    Ok(report.ranking[..k]
        .iter()
        .map(|&f| report.features[f].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceFeature;
    use proptest::{prop_assert, prop_assert_eq, prop_assume, proptest};
    use rand::SeedableRng;

    fn matrix_of(rows: &[Vec<f64>]) -> EncodedMatrix {
        let m = rows[0].len();
        EncodedMatrix {
            values: Matrix::from_rows(rows),
            column_names: (0..m).map(|i| format!("x{i}")).collect(),
            origin: (0..m).collect(),
            sources: (0..m)
                .map(|i| SourceFeature {
                    name: format!("x{i}"),
                    continuous: true,
                })
                .collect(),
        }
    }

    #[test]
    fn gini_examples() {
        assert!((gini(&[10, 10]).unwrap() - 0.5).abs() < 1e-9);
        assert!(gini(&[7, 0, 0, 0]).unwrap().abs() < 1e-9);
        assert!((gini(&[5, 5, 5, 5]).unwrap() - 0.75).abs() < 1e-9);
        assert_eq!(gini(&[0, 0]), Err(ForestError::EmptyNode));
    }

    #[test]
    fn impurity_decrease_examples() {
        assert!((impurity_decrease(&[4, 4], &[4, 0], &[0, 4]).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(
            impurity_decrease(&[4, 4], &[4, 4], &[0, 0]),
            Err(ForestError::InconsistentCounts)
        );
        assert_eq!(
            impurity_decrease(&[4, 4], &[3, 0], &[0, 4]),
            Err(ForestError::InconsistentCounts)
        );
    }

    #[test]
    fn impurity_decrease_is_never_negative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let left: Vec<usize> = (0..4).map(|_| rng.gen_range(0..20)).collect();
            let right: Vec<usize> = (0..4).map(|_| rng.gen_range(0..20)).collect();
            if left.iter().sum::<usize>() == 0 || right.iter().sum::<usize>() == 0 {
                continue;
            }
            let parent: Vec<usize> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
            assert!(impurity_decrease(&parent, &left, &right).unwrap() >= -1e-15);
        }
    }

    fn separable(n: usize) -> (EncodedMatrix, Vec<TravelClass>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let x = i as f64 - n as f64 / 2.0 + 0.5;
            rows.push(vec![x, (i * 7 % 13) as f64]);
            labels.push(if x < 0.0 {
                TravelClass::NoTravel
            } else {
                TravelClass::Moon
            });
        }
        (matrix_of(&rows), labels)
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (x, y) = separable(40);
        let params = ForestParams {
            n_trees: 10,
            max_depth: 3,
            seed: 3,
            ..Default::default()
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let pred = forest.predict_all(&x.values).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn fitting_is_deterministic() {
        let (x, y) = separable(30);
        let params = ForestParams {
            n_trees: 5,
            seed: 9,
            ..Default::default()
        };
        let a = serde_json::to_vec(&fit_forest(&x, &y, &params).unwrap()).unwrap();
        let b = serde_json::to_vec(&fit_forest(&x, &y, &params).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    fn stump_data() -> (EncodedMatrix, Vec<TravelClass>) {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![if i < 4 { 0.0 } else { 1.0 }, 0.5]).collect();
        let labels = (0..8)
            .map(|i| {
                if i < 4 {
                    TravelClass::NoTravel
                } else {
                    TravelClass::Moon
                }
            })
            .collect();
        (matrix_of(&rows), labels)
    }

    #[test]
    fn stump_matches_hand_decrease() {
        let (x, y) = stump_data();
        // a single tree on the exact rows: bypass the bootstrap through a huge forest is not
        // possible, so check the split on a deterministic-bootstrap-free builder instead.
        let columns: Vec<Vec<f64>> = (0..2).map(|c| x.values.column(c)).collect();
        let labels: Vec<usize> = y.iter().map(|l| l.index()).collect();
        let mut builder = TreeBuilder {
            columns: &columns,
            labels: &labels,
            max_depth: 1,
            min_samples_split: 2,
            mtry: 2,
            nodes: Vec::new(),
            scratch: Vec::new(),
        };
        let mut samples: Vec<usize> = (0..8).collect();
        builder.build(&mut samples, 0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        match &builder.nodes[0] {
            Node::Split {
                column,
                threshold,
                decrease,
                ..
            } => {
                assert_eq!(*column, 0);
                assert_eq!(*threshold, 0.5);
                assert!((decrease - 0.5).abs() < 1e-12);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(builder.nodes.len(), 3);
    }

    #[test]
    fn stump_importance_and_selection() {
        let (x, y) = stump_data();
        let params = ForestParams {
            n_trees: 1,
            max_depth: 1,
            features_per_split: Some(2),
            seed: 1,
            ..Default::default()
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let report = feature_importance(&forest).unwrap();
        assert_eq!(report.scores, vec![1.0, 0.0]);
        assert_eq!(select_top_k(&report, 1).unwrap(), vec!["x0"]);
        assert_eq!(select_top_k(&report, 2).unwrap(), vec!["x0", "x1"]);
        assert_eq!(select_top_k(&report, 3), Err(ForestError::KOutOfRange { k: 3, n: 2 }));
        assert!(report.to_csv().starts_with("feature,score,rank\nx0,1,1\n"));
    }

    #[test]
    fn voting_and_tie_break() {
        let leaf = |c: usize| DecisionTree {
            nodes: vec![Node::Leaf {
                counts: {
                    let mut k = [0; 4];
                    k[c] = 1;
                    k
                },
            }],
            bootstrap: vec![],
        };
        let forest = |trees: Vec<DecisionTree>| RandomForest {
            params: ForestParams::default(),
            n_columns: 1,
            origin: vec![0],
            feature_names: vec!["x".into()],
            trees,
        };
        assert_eq!(
            forest(vec![leaf(2), leaf(2), leaf(2)]).predict(&[0.0]).unwrap(),
            TravelClass::Suborbital
        );
        assert_eq!(
            forest(vec![leaf(3), leaf(1), leaf(3), leaf(1)])
                .predict(&[0.0])
                .unwrap(),
            TravelClass::Moon
        );
        assert_eq!(forest(vec![leaf(3)]).predict(&[0.0]).unwrap(), TravelClass::Orbital);
        assert!(matches!(
            forest(vec![leaf(3)]).predict(&[0.0, 1.0]),
            Err(ForestError::LayoutMismatch { .. })
        ));
        assert_eq!(feature_importance(&forest(vec![leaf(0)])), Err(ForestError::NoSplits));
    }

    #[test]
    fn one_hot_importance_rolls_up() {
        // column 1 and 2 are a one-hot block of source feature 1
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|i| {
                let g = (i % 2) as f64;
                vec![(i % 5) as f64, g, 1.0 - g]
            })
            .collect();
        let labels: Vec<TravelClass> = (0..16).map(|i| TravelClass::ALL[i % 2]).collect();
        let mut x = matrix_of(&rows);
        x.origin = vec![0, 1, 1];
        x.sources.truncate(2);
        let forest = fit_forest(
            &x,
            &labels,
            &ForestParams {
                n_trees: 8,
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let report = feature_importance(&forest).unwrap();
        assert_eq!(report.scores.len(), 2);
        assert!((report.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(report.ranking[0], 1);
    }

    #[test]
    fn signal_features_rank_first() {
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..300 {
                let row: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let u = 1.5 * row[0] + 1.0 * row[1] - 1.2 * row[2] + 0.3 * rng.gen_range(-1.0..1.0);
                let class = if u > 0.8 {
                    3
                } else if u > 0.0 {
                    2
                } else if u > -0.8 {
                    1
                } else {
                    0
                };
                labels.push(TravelClass::ALL[class]);
                rows.push(row);
            }
            let x = matrix_of(&rows);
            let params = ForestParams {
                n_trees: 30,
                max_depth: 8,
                seed,
                ..Default::default()
            };
            let report = feature_importance(&fit_forest(&x, &labels, &params).unwrap()).unwrap();
            let mut top: Vec<usize> = report.ranking[..3].to_vec();
            top.sort_unstable();
            if top == [0, 1, 2] {
                hits += 1;
            }
        }
        assert!(hits >= 95, "signal recovered in {hits}/100 seeds");
    }

    proptest! {
        #[test]
        fn gini_bounds(counts in proptest::collection::vec(0usize..50, 4)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let g = gini(&counts).unwrap();
            prop_assert!((0.0..=0.75 + 1e-12).contains(&g));
        }

        #[test]
        fn every_row_reaches_one_leaf(seed in 0u64..50) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let labels: Vec<TravelClass> = (0..40).map(|_| TravelClass::ALL[rng.gen_range(0..4)]).collect();
            let x = matrix_of(&rows);
            let forest = fit_forest(&x, &labels, &ForestParams { n_trees: 3, max_depth: 5, seed, ..Default::default() }).unwrap();
            for tree in &forest.trees {
                let mut leaf_counts = vec![0usize; tree.nodes.len()];
                for &b in &tree.bootstrap {
                    leaf_counts[tree.leaf_index(x.values.row(b))] += 1;
                }
                for (i, node) in tree.nodes.iter().enumerate() {
                    if let Node::Leaf { counts } = node {
                        prop_assert!(counts.iter().sum::<usize>() > 0);
                        prop_assert_eq!(counts.iter().sum::<usize>(), leaf_counts[i]);
                    } else {
                        prop_assert_eq!(leaf_counts[i], 0);
                    }
                }
            }
        }
    }
}
