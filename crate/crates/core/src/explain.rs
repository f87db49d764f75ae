//! Shapley-value attributions at source-feature granularity.
//!
//! The value of a coalition `S` is the mean model output over background rows
//! with every feature outside `S` taken from the background row and every
//! feature inside `S` taken from the explained instance. Categorical features
//! are toggled as whole one-hot blocks.

use std::collections::HashMap;

use rand::seq::{IteratorRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EncodedMatrix, TravelClass, N_CLASSES};
use crate::matrix::{argmax, Matrix};
use crate::rng;
use crate::spacenet::SpaceNet;

/// Largest source-feature count handled by full subset enumeration.
pub const EXACT_LIMIT: usize = 14;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("{m} features exceeds the exact enumeration limit of {limit}")]
    TooManyFeaturesForExact { m: usize, limit: usize },
    #[error("nothing to summarize")]
    EmptyInput,
    #[error("background set is empty")]
    EmptyBackground,
    #[error("row has {found} columns, expected {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model evaluation failed: {0}")]
    Model(String),
}

/// Anything mapping a batch of model-space rows to class probabilities.
pub trait ProbabilityModel: Sync {
    fn predict(&self, rows: &Matrix) -> Result<Matrix, ExplainError>;
}

impl ProbabilityModel for SpaceNet {
    fn predict(&self, rows: &Matrix) -> Result<Matrix, ExplainError> {
        self.predict_proba(rows).map_err(|e| ExplainError::Model(e.to_string()))
    }
}

/// Wraps a closure as a model, mainly for toy models in tests and examples.
pub struct FnModel<F>(pub F);

impl<F> ProbabilityModel for FnModel<F>
where
    F: Fn(&Matrix) -> Matrix + Sync,
{
    fn predict(&self, rows: &Matrix) -> Result<Matrix, ExplainError> {
        Ok((self.0)(rows))
    }
}

/// Source features and the encoded columns each one owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroups {
    pub names: Vec<String>,
    pub columns: Vec<Vec<usize>>,
    pub continuous: Vec<bool>,
}

impl FeatureGroups {
    /// One group per column.
    pub fn singletons(names: &[String]) -> Self {
        Self {
            names: names.to_vec(),
            columns: (0..names.len()).map(|j| vec![j]).collect(),
            continuous: vec![true; names.len()],
        }
    }

    pub fn from_encoded(matrix: &EncodedMatrix) -> Self {
        Self {
            names: matrix.sources.iter().map(|s| s.name.clone()).collect(),
            columns: matrix.feature_columns(),
            continuous: matrix.sources.iter().map(|s| s.continuous).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.iter().flatten().map(|&c| c + 1).max().unwrap_or(0)
    }

    /// One scalar per source feature: the column value for continuous
    /// features, the active category's position for one-hot blocks.
    pub fn feature_values(&self, x: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .zip(&self.continuous)
            .map(|(cols, &cont)| {
                if cont && cols.len() == 1 {
                    x[cols[0]]
                } else {
                    argmax(&cols.iter().map(|&c| x[c]).collect::<Vec<_>>()) as f64
                }
            })
            .collect()
    }
}

/// Reference rows drawn from the training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub rows: Matrix,
    pub indices: Vec<usize>,
}

impl BackgroundSet {
    pub fn new(rows: Matrix) -> Result<Self, ExplainError> {
        if rows.rows() == 0 {
            return Err(ExplainError::EmptyBackground);
        }
        let indices = (0..rows.rows()).collect();
        Ok(Self { rows, indices })
    }

    /// Up to `size` distinct rows of `pool`, chosen with `seed`, kept in index order.
    pub fn sample(matrix: &Matrix, pool: &[usize], size: usize, seed: u64) -> Result<Self, ExplainError> {
        if pool.is_empty() || size == 0 {
            return Err(ExplainError::EmptyBackground);
        }
        let mut rng = rng::rng_for(seed, &[rng::STREAM_BACKGROUND]);
        let mut indices: Vec<usize> = pool.iter().copied().choose_multiple(&mut rng, size.min(pool.len()));
        indices.sort_unstable();
        Ok(Self {
            rows: matrix.select_rows(&indices),
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }
}

/// Coalition values `v(S)`, cached by membership mask.
struct Coalitions<'a, M: ProbabilityModel> {
    model: &'a M,
    x: &'a [f64],
    background: &'a BackgroundSet,
    groups: &'a FeatureGroups,
    cache: HashMap<u64, Vec<f64>>,
    n_outputs: usize,
}

const MAX_BATCH_ROWS: usize = 4096;

impl<'a, M: ProbabilityModel> Coalitions<'a, M> {
    fn new(
        model: &'a M,
        x: &'a [f64],
        background: &'a BackgroundSet,
        groups: &'a FeatureGroups,
    ) -> Result<Self, ExplainError> {
        if background.is_empty() {
            return Err(ExplainError::EmptyBackground);
        }
        if background.rows.cols() != x.len() || groups.width() > x.len() {
            return Err(ExplainError::LayoutMismatch {
                expected: background.rows.cols(),
                found: x.len(),
            });
        }
        if groups.len() > 63 {
            return Err(ExplainError::InvalidParams(format!(
                "{} features exceeds 63",
                groups.len()
            )));
        }
        let mut out = Self {
            model,
            x,
            background,
            groups,
            cache: HashMap::new(),
            n_outputs: 0,
        };
        let fx = model.predict(&Matrix::from_rows(&[x]))?;
        out.n_outputs = fx.cols();
        out.cache.insert(out.full_mask(), fx.row(0).to_vec());
        Ok(out)
    }

    fn full_mask(&self) -> u64 {
        (1u64 << self.groups.len()) - 1
    }

    fn fx(&self) -> &[f64] {
        &self.cache[&self.full_mask()]
    }

    fn value(&self, mask: u64) -> &[f64] {
        &self.cache[&mask]
    }

    /// Evaluates every mask not yet cached.
    fn ensure(&mut self, masks: &[u64]) -> Result<(), ExplainError> {
        let mut todo: Vec<u64> = masks.iter().copied().filter(|m| !self.cache.contains_key(m)).collect();
        todo.sort_unstable();
        todo.dedup();
        let b = self.background.len();
        let per_batch = (MAX_BATCH_ROWS / b).max(1);
        for chunk in todo.chunks(per_batch) {
            let mut rows = Matrix::zeros(0, 0);
            for &mask in chunk {
                for bg in self.background.rows.iter_rows() {
                    let mut row = bg.to_vec();
                    for (f, cols) in self.groups.columns.iter().enumerate() {
                        if mask >> f & 1 == 1 {
                            for &c in cols {
                                row[c] = self.x[c];
                            }
                        }
                    }
                    rows.push_row(&row);
                }
            }
            let probs = self.model.predict(&rows)?;
            for (k, &mask) in chunk.iter().enumerate() {
                let mut v = vec![0.0; probs.cols()];
                for r in k * b..(k + 1) * b {
                    for (slot, p) in v.iter_mut().zip(probs.row(r)) {
                        *slot += p;
                    }
                }
                v.iter_mut().for_each(|s| *s /= b as f64);
                self.cache.insert(mask, v);
            }
        }
        Ok(())
    }
}

/// Attributions for every output class at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// `[n_features, n_outputs]`.
    pub phi: Matrix,
    pub base: Vec<f64>,
    pub prediction: Vec<f64>,
    /// Standard errors, present only for sampled estimates.
    pub std_err: Option<Matrix>,
    pub n_permutations: usize,
    pub exhaustive: bool,
}

impl Attribution {
    pub fn class_phi(&self, class: usize) -> Vec<f64> {
        self.phi.column(class)
    }

    /// `|sum(phi) - (f(x) - base)|`, worst over classes.
    pub fn efficiency_gap(&self) -> f64 {
        (0..self.phi.cols())
            .map(|c| (self.phi.column(c).iter().sum::<f64>() - (self.prediction[c] - self.base[c])).abs())
            .fold(0.0, f64::max)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values by enumerating all `2^M` coalitions.
pub fn exact_attribution<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    background: &BackgroundSet,
    groups: &FeatureGroups,
) -> Result<Attribution, ExplainError> {
    let m = groups.len();
    if m > EXACT_LIMIT {
        return Err(ExplainError::TooManyFeaturesForExact { m, limit: EXACT_LIMIT });
    }
    let mut coalitions = Coalitions::new(model, x, background, groups)?;
    let masks: Vec<u64> = (0..1u64 << m).collect();
    coalitions.ensure(&masks)?;
    let weights: Vec<f64> = (0..m.max(1))
        .map(|s| factorial(s) * factorial(m.saturating_sub(s + 1)) / factorial(m))
        .collect();
    let c = coalitions.n_outputs;
    let mut phi = Matrix::zeros(m, c);
    for f in 0..m {
        let bit = 1u64 << f;
        for &mask in masks.iter().filter(|&&s| s & bit == 0) {
            let w = weights[mask.count_ones() as usize];
            let with = coalitions.value(mask | bit);
            let without = coalitions.value(mask);
            for k in 0..c {
                let cur = phi.get(f, k);
                phi.set(f, k, cur + w * (with[k] - without[k]));
            }
        }
    }
    Ok(Attribution {
        phi,
        base: coalitions.value(0).to_vec(),
        prediction: coalitions.fx().to_vec(),
        std_err: None,
        n_permutations: 0,
        exhaustive: true,
    })
}

/// Exact Shapley values for one class.
pub fn exact_shapley<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    background: &BackgroundSet,
    groups: &FeatureGroups,
    class: usize,
) -> Result<Vec<f64>, ExplainError> {
    Ok(exact_attribution(model, x, background, groups)?.class_phi(class))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Permutation-sampling Shapley estimate. When `n_permutations` covers all
/// `M!` orderings each ordering is visited once instead. The estimate is
/// shifted by an equal share of the efficiency residual so that attributions
/// sum to `f(x) - base` exactly.
pub fn sampled_attribution<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    background: &BackgroundSet,
    groups: &FeatureGroups,
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution, ExplainError> {
    if n_permutations == 0 {
        return Err(ExplainError::InvalidParams("n_permutations must be at least 1".into()));
    }
    let m = groups.len();
    let mut coalitions = Coalitions::new(model, x, background, groups)?;
    let c = coalitions.n_outputs;
    let exhaustive = m <= 20 && factorial(m) <= n_permutations as f64;
    let orderings: Vec<Vec<usize>> = if exhaustive {
        let mut p: Vec<usize> = (0..m).collect();
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        all
    } else {
        let mut rng = rng::rng_for(seed, &[rng::STREAM_PERMUTATION]);
        (0..n_permutations)
            .map(|_| {
                let mut p: Vec<usize> = (0..m).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect()
    };
    let n = orderings.len();
    let mut sum = Matrix::zeros(m, c);
    let mut sum_sq = Matrix::zeros(m, c);
    for block in orderings.chunks(16) {
        let mut masks = vec![0u64];
        for order in block {
            let mut mask = 0u64;
            for &f in order {
                mask |= 1 << f;
                masks.push(mask);
            }
        }
        coalitions.ensure(&masks)?;
        for order in block {
            let mut mask = 0u64;
            for &f in order {
                let next = mask | 1 << f;
                let (with, without) = (coalitions.value(next), coalitions.value(mask));
                for k in 0..c {
                    let d = with[k] - without[k];
                    sum.set(f, k, sum.get(f, k) + d);
                    sum_sq.set(f, k, sum_sq.get(f, k) + d * d);
                }
                mask = next;
            }
        }
    }
    let base = coalitions.value(0).to_vec();
    let prediction = coalitions.fx().to_vec();
    let mut phi = Matrix::zeros(m, c);
    let mut std_err = Matrix::zeros(m, c);
    for f in 0..m {
        for k in 0..c {
            let mean = sum.get(f, k) / n as f64;
            phi.set(f, k, mean);
            if !exhaustive && n > 1 {
                let var = ((sum_sq.get(f, k) - n as f64 * mean * mean) / (n - 1) as f64).max(0.0);
                std_err.set(f, k, (var / n as f64).sqrt());
            }
        }
    }
    if m > 0 {
        for k in 0..c {
            let residual = (prediction[k] - base[k]) - phi.column(k).iter().sum::<f64>();
            for f in 0..m {
                phi.set(f, k, phi.get(f, k) + residual / m as f64);
            }
        }
    }
    Ok(Attribution {
        phi,
        base,
        prediction,
        std_err: Some(std_err),
        n_permutations: n,
        exhaustive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledShapley {
    pub phi: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Sampled Shapley values for one class.
pub fn sampled_shapley<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    background: &BackgroundSet,
    groups: &FeatureGroups,
    class: usize,
    n_permutations: usize,
    seed: u64,
) -> Result<SampledShapley, ExplainError> {
    let a = sampled_attribution(model, x, background, groups, n_permutations, seed)?;
    Ok(SampledShapley {
        phi: a.class_phi(class),
        std_err: a.std_err.expect("sampled").column(class),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ShapleyMethod {
    Exact,
    Sampled {
        n_permutations: usize,
    },
    /// Exact up to the enumeration limit, sampled above it.
    Auto {
        n_permutations: usize,
    },
}

pub fn attribute<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    background: &BackgroundSet,
    groups: &FeatureGroups,
    method: ShapleyMethod,
    seed: u64,
) -> Result<Attribution, ExplainError> {
    match method {
        ShapleyMethod::Exact => exact_attribution(model, x, background, groups),
        ShapleyMethod::Auto { .. } if groups.len() <= EXACT_LIMIT => exact_attribution(model, x, background, groups),
        ShapleyMethod::Sampled { n_permutations } | ShapleyMethod::Auto { n_permutations } => {
            sampled_attribution(model, x, background, groups, n_permutations, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance: usize,
    pub features: Vec<String>,
    pub attribution: Attribution,
    /// Per-feature scalar in model space, used for colour mapping.
    pub values: Vec<f64>,
    /// Per-feature value as shown to a reader.
    pub raw_values: Vec<String>,
}

impl Explanation {
    pub fn class_probs(&self) -> &[f64] {
        &self.attribution.prediction
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.attribution.prediction)
    }

    pub fn to_export(&self) -> ExplanationExport {
        ExplanationExport {
            instance: self.instance,
            class_probs: self.attribution.prediction.clone(),
            base: self.attribution.base.clone(),
            phi: self
                .features
                .iter()
                .enumerate()
                .map(|(f, name)| (name.clone(), self.attribution.phi.row(f).to_vec()))
                .collect(),
            raw_values: self
                .features
                .iter()
                .cloned()
                .zip(self.raw_values.iter().cloned())
                .collect(),
            std_err: self.attribution.std_err.as_ref().map(|se| {
                self.features
                    .iter()
                    .enumerate()
                    .map(|(f, name)| (name.clone(), se.row(f).to_vec()))
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationExport {
    pub instance: usize,
    pub class_probs: Vec<f64>,
    pub base: Vec<f64>,
    pub phi: std::collections::BTreeMap<String, Vec<f64>>,
    pub raw_values: std::collections::BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_err: Option<std::collections::BTreeMap<String, Vec<f64>>>,
}

/// Explains one model-space row. `raw_values` defaults to the model-space
/// feature values.
pub fn explain_row<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    instance: usize,
    background: &BackgroundSet,
    groups: &FeatureGroups,
    method: ShapleyMethod,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    let attribution = attribute(model, x, background, groups, method, seed)?;
    let values = groups.feature_values(x);
    Ok(Explanation {
        instance,
        features: groups.names.clone(),
        raw_values: values.iter().map(|v| format!("{v:.4}")).collect(),
        attribution,
        values,
    })
}

/// Explains the given rows of `matrix` in parallel. Each instance gets its
/// own permutation seed derived from `seed` and its row index.
pub fn explain_rows<M: ProbabilityModel>(
    model: &M,
    matrix: &Matrix,
    instances: &[usize],
    background: &BackgroundSet,
    groups: &FeatureGroups,
    method: ShapleyMethod,
    seed: u64,
) -> Result<Vec<Explanation>, ExplainError> {
    instances
        .par_iter()
        .map(|&i| {
            let s = rng::derive_seed(seed, &[rng::STREAM_PERMUTATION, i as u64]);
            explain_row(model, matrix.row(i), i, background, groups, method, s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub features: Vec<String>,
    /// Mean `|phi|` per feature and class, `[n_features, n_outputs]`.
    pub mean_abs: Matrix,
    pub total: Vec<f64>,
    /// Feature indices by descending total.
    pub ordering: Vec<usize>,
    pub n_explanations: usize,
}

impl GlobalSummary {
    /// 1-based rank of a feature.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.ordering
            .iter()
            .position(|&f| self.features[f] == name)
            .map(|r| r + 1)
    }

    pub fn ranked_names(&self) -> Vec<&str> {
        self.ordering.iter().map(|&f| self.features[f].as_str()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,feature");
        for c in 0..self.mean_abs.cols() {
            out.push_str(&format!(",{}", class_label(c)));
        }
        out.push_str(",total\n");
        for (r, &f) in self.ordering.iter().enumerate() {
            out.push_str(&format!("{},{}", r + 1, self.features[f]));
            for v in self.mean_abs.row(f) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", self.total[f]));
        }
        out
    }
}

pub(crate) fn class_label(c: usize) -> String {
    TravelClass::from_code(c as u8)
        .map(|t| t.name().to_string())
        .unwrap_or_else(|| format!("class_{c}"))
}

fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn check_consistent(explanations: &[Explanation]) -> Result<&Explanation, ExplainError> {
    let first = explanations.first().ok_or(ExplainError::EmptyInput)?;
    if let Some(bad) = explanations.iter().find(|e| e.features != first.features) {
        return Err(ExplainError::LayoutMismatch {
            expected: first.features.len(),
            found: bad.features.len(),
        });
    }
    Ok(first)
}

pub fn global_summary(explanations: &[Explanation]) -> Result<GlobalSummary, ExplainError> {
    let first = check_consistent(explanations)?;
    let (m, c) = (first.attribution.phi.rows(), first.attribution.phi.cols());
    let mut mean_abs = Matrix::zeros(m, c);
    for e in explanations {
        for (slot, v) in mean_abs.as_mut_slice().iter_mut().zip(e.attribution.phi.as_slice()) {
            *slot += v.abs();
        }
    }
    let n = explanations.len() as f64;
    mean_abs.as_mut_slice().iter_mut().for_each(|v| *v /= n);
    let total: Vec<f64> = mean_abs.iter_rows().map(|r| r.iter().sum()).collect();
    Ok(GlobalSummary {
        features: first.features.clone(),
        ordering: descending(&total),
        mean_abs,
        total,
        n_explanations: explanations.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmPoint {
    pub instance: usize,
    pub phi: f64,
    pub value: f64,
    /// `value` min-max scaled to `[0, 1]` across instances; 0.5 when constant.
    pub color: f64,
    pub raw_value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeature {
    pub feature: String,
    pub mean_abs: f64,
    pub points: Vec<BeeswarmPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: usize,
    /// Ordered by mean `|phi|` for this class, descending.
    pub features: Vec<ClassFeature>,
}

impl ClassSummary {
    pub fn feature(&self, name: &str) -> Option<&ClassFeature> {
        self.features.iter().find(|f| f.feature == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,instance,phi,value,color,raw_value\n");
        for f in &self.features {
            for p in &f.points {
                out.push_str(&format!(
                    "{},{},{},{},{},\"{}\"\n",
                    f.feature,
                    p.instance,
                    p.phi,
                    p.value,
                    p.color,
                    p.raw_value.replace('"', "\"\"")
                ));
            }
        }
        out
    }
}

pub fn class_summary(explanations: &[Explanation], class: usize) -> Result<ClassSummary, ExplainError> {
    let first = check_consistent(explanations)?;
    if class >= first.attribution.phi.cols() {
        return Err(ExplainError::InvalidParams(format!("class {class} out of range")));
    }
    let n = explanations.len() as f64;
    let mut features = Vec::with_capacity(first.features.len());
    for (f, name) in first.features.iter().enumerate() {
        let values: Vec<f64> = explanations.iter().map(|e| e.values[f]).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let points = explanations
            .iter()
            .map(|e| BeeswarmPoint {
                instance: e.instance,
                phi: e.attribution.phi.get(f, class),
                value: e.values[f],
                color: if hi > lo { (e.values[f] - lo) / (hi - lo) } else { 0.5 },
                raw_value: e.raw_values[f].clone(),
            })
            .collect::<Vec<_>>();
        features.push(ClassFeature {
            feature: name.clone(),
            mean_abs: points.iter().map(|p| p.phi.abs()).sum::<f64>() / n,
            points,
        });
    }
    let scores: Vec<f64> = features.iter().map(|f| f.mean_abs).collect();
    let order = descending(&scores);
    let mut slots: Vec<Option<ClassFeature>> = features.into_iter().map(Some).collect();
    Ok(ClassSummary {
        class,
        features: order.iter().map(|&i| slots[i].take().expect("permutation")).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallStep {
    pub feature: String,
    pub raw_value: String,
    pub contribution: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waterfall {
    pub class: usize,
    pub base: f64,
    pub steps: Vec<WaterfallStep>,
    /// Base plus every contribution.
    pub endpoint: f64,
    /// Model probability for `class`.
    pub prediction: f64,
}

impl Waterfall {
    pub fn from_explanation(e: &Explanation, class: usize) -> Self {
        let phi = e.attribution.phi.column(class);
        let base = e.attribution.base[class];
        let mut order: Vec<usize> = (0..phi.len()).filter(|&f| phi[f] != 0.0).collect();
        order.sort_by(|&a, &b| phi[b].abs().total_cmp(&phi[a].abs()).then(a.cmp(&b)));
        let mut cumulative = base;
        let steps = order
            .into_iter()
            .map(|f| {
                cumulative += phi[f];
                WaterfallStep {
                    feature: e.features[f].clone(),
                    raw_value: e.raw_values[f].clone(),
                    contribution: phi[f],
                    cumulative,
                }
            })
            .collect();
        Self {
            class,
            base,
            steps,
            endpoint: cumulative,
            prediction: e.attribution.prediction[class],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,feature,raw_value,contribution,cumulative\n");
        out.push_str(&format!("0,base,,,{}\n", self.base));
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{},{},\"{}\",{},{}\n",
                i + 1,
                s.feature,
                s.raw_value.replace('"', "\"\""),
                s.contribution,
                s.cumulative
            ));
        }
        out
    }

    /// One-line reading such as `age = 65, ticket price = 65,547`.
    pub fn describe(&self, top: usize) -> String {
        self.steps
            .iter()
            .take(top)
            .map(|s| format!("{} = {}", s.feature, s.raw_value))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    pub explanation: Explanation,
    pub waterfall: Waterfall,
}

/// Explanation of one row together with the waterfall for its argmax class.
pub fn instance_explanation<M: ProbabilityModel>(
    model: &M,
    x: &[f64],
    instance: usize,
    background: &BackgroundSet,
    groups: &FeatureGroups,
    method: ShapleyMethod,
    seed: u64,
) -> Result<InstanceExplanation, ExplainError> {
    let explanation = explain_row(model, x, instance, background, groups, method, seed)?;
    let waterfall = Waterfall::from_explanation(&explanation, explanation.predicted_class());
    Ok(InstanceExplanation { explanation, waterfall })
}

/// Width of the class axis used by exports.
pub const N_OUTPUTS: usize = N_CLASSES;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::pearson;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("x{i}")).collect()
    }

    /// Single-output model returned as a one-column "probability" matrix.
    fn scalar_model<F: Fn(&[f64]) -> f64 + Sync>(f: F) -> FnModel<impl Fn(&Matrix) -> Matrix + Sync> {
        FnModel(move |rows: &Matrix| {
            let v: Vec<f64> = rows.iter_rows().map(&f).collect();
            Matrix::new(v.len(), 1, v)
        })
    }

    #[test]
    fn additive_hand_example() {
        let model = scalar_model(|r| r[0] + r[1]);
        let bg = BackgroundSet::new(Matrix::zeros(1, 2)).unwrap();
        let groups = FeatureGroups::singletons(&names(2));
        let phi = exact_shapley(&model, &[3.0, 5.0], &bg, &groups, 0).unwrap();
        assert!((phi[0] - 3.0).abs() < 1e-12 && (phi[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dummy_and_symmetry() {
        let constant = scalar_model(|_| 0.7);
        let bg = BackgroundSet::new(Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0]])).unwrap();
        let groups = FeatureGroups::singletons(&names(3));
        let x = [0.3, 0.9, -2.0];
        assert!(exact_shapley(&constant, &x, &bg, &groups, 0)
            .unwrap()
            .iter()
            .all(|&p| p == 0.0));
        let s = sampled_shapley(&constant, &x, &bg, &groups, 0, 10, 1).unwrap();
        assert!(s.phi.iter().all(|&p| p == 0.0) && s.std_err.iter().all(|&e| e == 0.0));

        let ignores_third = scalar_model(|r| r[0] * r[1] + r[0].sin());
        assert_eq!(exact_shapley(&ignores_third, &x, &bg, &groups, 0).unwrap()[2], 0.0);

        let sym = scalar_model(|r| (r[0] + r[1]).tanh() + r[2]);
        let sym_bg = BackgroundSet::new(Matrix::from_rows(&[vec![1.0, -1.0, 0.0], vec![-1.0, 1.0, 0.0]])).unwrap();
        let phi = exact_shapley(&sym, &[0.4, 0.4, 1.0], &sym_bg, &groups, 0).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn categorical_blocks_toggle_together() {
        // column 1..3 one-hot block; model reads only column 2
        let model = scalar_model(|r| 2.0 * r[2] + r[0]);
        let groups = FeatureGroups {
            names: vec!["a".into(), "colour".into()],
            columns: vec![vec![0], vec![1, 2, 3]],
            continuous: vec![true, false],
        };
        let bg = BackgroundSet::new(Matrix::from_rows(&[vec![0.0, 1.0, 0.0, 0.0]])).unwrap();
        let phi = exact_shapley(&model, &[1.0, 0.0, 1.0, 0.0], &bg, &groups, 0).unwrap();
        assert_eq!(phi.len(), 2);
        assert!((phi[0] - 1.0).abs() < 1e-12 && (phi[1] - 2.0).abs() < 1e-12);
        assert_eq!(groups.feature_values(&[1.0, 0.0, 1.0, 0.0]), vec![1.0, 1.0]);
    }

    fn toy_softmax_model(m: usize, seed: u64) -> FnModel<impl Fn(&Matrix) -> Matrix + Sync> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..m * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pair: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FnModel(move |rows: &Matrix| {
            let mut out = Matrix::zeros(rows.rows(), 4);
            for (i, r) in rows.iter_rows().enumerate() {
                let mut z: Vec<f64> = (0..4)
                    .map(|c| (0..m).map(|j| w[j * 4 + c] * r[j]).sum::<f64>() + pair[c] * r[0] * r[1])
                    .collect();
                crate::autograd::softmax_in_place(&mut z);
                out.row_mut(i).copy_from_slice(&z);
            }
            out
        })
    }

    fn random_setup(m: usize, seed: u64) -> (Vec<f64>, BackgroundSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let bg = Matrix::new(5, m, (0..5 * m).map(|_| rng.gen_range(-2.0..2.0)).collect());
        (x, BackgroundSet::new(bg).unwrap())
    }

    #[test]
    fn exhaustive_orderings_equal_exact() {
        for m in [3, 6] {
            let model = toy_softmax_model(m, m as u64);
            let groups = FeatureGroups::singletons(&names(m));
            let (x, bg) = random_setup(m, 9);
            let exact = exact_attribution(&model, &x, &bg, &groups).unwrap();
            let sampled = sampled_attribution(&model, &x, &bg, &groups, factorial(m) as usize, 0).unwrap();
            assert!(sampled.exhaustive);
            for (a, b) in exact.phi.as_slice().iter().zip(sampled.phi.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(exact.efficiency_gap() < 1e-9);
        }
    }

    #[test]
    fn sampled_estimates_fall_within_standard_errors() {
        let m = 8;
        let model = toy_softmax_model(m, 21);
        let groups = FeatureGroups::singletons(&names(m));
        let (x, bg) = random_setup(m, 22);
        let exact = exact_attribution(&model, &x, &bg, &groups).unwrap();
        let mut within = 0;
        let mut total = 0;
        for seed in 0..100 {
            let s = sampled_shapley(&model, &x, &bg, &groups, 0, 2000, seed).unwrap();
            for f in 0..m {
                total += 1;
                if (s.phi[f] - exact.phi.get(f, 0)).abs() < 3.0 * s.std_err[f] {
                    within += 1;
                }
            }
            assert!(
                (s.phi.iter().sum::<f64>() - (exact.prediction[0] - exact.base[0])).abs() < 1e-12,
                "efficiency enforced"
            );
        }
        assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");
    }

    #[test]
    fn exact_limit_enforced() {
        let model = scalar_model(|r| r[0]);
        let groups = FeatureGroups::singletons(&names(15));
        let bg = BackgroundSet::new(Matrix::zeros(1, 15)).unwrap();
        assert!(matches!(
            exact_shapley(&model, &[0.0; 15], &bg, &groups, 0),
            Err(ExplainError::TooManyFeaturesForExact { m: 15, limit: 14 })
        ));
        let auto = attribute(
            &model,
            &[1.0; 15],
            &bg,
            &groups,
            ShapleyMethod::Auto { n_permutations: 4 },
            0,
        )
        .unwrap();
        assert_eq!(auto.n_permutations, 4);
        assert!((auto.phi.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_sampling() {
        let m = Matrix::new(10, 1, (0..10).map(|i| i as f64).collect());
        let pool = [1, 3, 5, 7, 9];
        let bg = BackgroundSet::sample(&m, &pool, 3, 4).unwrap();
        assert_eq!(bg.len(), 3);
        assert!(bg.indices.iter().all(|i| pool.contains(i)));
        assert_eq!(bg, BackgroundSet::sample(&m, &pool, 3, 4).unwrap());
        assert_eq!(BackgroundSet::sample(&m, &pool, 100, 4).unwrap().len(), 5);
        assert!(BackgroundSet::sample(&m, &[], 3, 4).is_err());
    }

    fn two_signal() -> (FnModel<impl Fn(&Matrix) -> Matrix + Sync>, Vec<Explanation>) {
        // class 0 driven by x0, class 1 by x1 (weaker globally)
        let model = FnModel(|rows: &Matrix| {
            let mut out = Matrix::zeros(rows.rows(), 2);
            for (i, r) in rows.iter_rows().enumerate() {
                out.set(i, 0, 3.0 * r[0]);
                out.set(i, 1, r[1]);
            }
            out
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Matrix::new(30, 2, (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let bg = BackgroundSet::sample(&data, &(0..30).collect::<Vec<_>>(), 10, 1).unwrap();
        let groups = FeatureGroups::singletons(&names(2));
        let ex = explain_rows(
            &model,
            &data,
            &(0..30).collect::<Vec<_>>(),
            &bg,
            &groups,
            ShapleyMethod::Exact,
            0,
        )
        .unwrap();
        (model, ex)
    }

    #[test]
    fn summaries() {
        let (_, ex) = two_signal();
        let global = global_summary(&ex).unwrap();
        assert_eq!(global.ranked_names(), vec!["x0", "x1"]);
        assert!(global.mean_abs.as_slice().iter().all(|&v| v >= 0.0));
        let class1 = class_summary(&ex, 1).unwrap();
        assert_eq!(class1.features[0].feature, "x1");
        assert!(class1.features.iter().all(|f| f.points.len() == 30));
        let x0 = class_summary(&ex, 0).unwrap();
        let f = x0.feature("x0").unwrap();
        let phis: Vec<f64> = f.points.iter().map(|p| p.phi).collect();
        let vals: Vec<f64> = f.points.iter().map(|p| p.value).collect();
        assert!(pearson(&vals, &phis) > 0.99);

        let single = global_summary(&ex[..1]).unwrap();
        for (a, b) in single.mean_abs.as_slice().iter().zip(ex[0].attribution.phi.as_slice()) {
            assert_eq!(*a, b.abs());
        }
        assert!(matches!(global_summary(&[]), Err(ExplainError::EmptyInput)));
        assert!(matches!(class_summary(&[], 0), Err(ExplainError::EmptyInput)));
    }

    #[test]
    fn waterfall_endpoints() {
        let model = toy_softmax_model(4, 2);
        let groups = FeatureGroups::singletons(&names(4));
        let (x, bg) = random_setup(4, 3);
        let inst = instance_explanation(&model, &x, 0, &bg, &groups, ShapleyMethod::Exact, 0).unwrap();
        let w = &inst.waterfall;
        assert_eq!(w.class, inst.explanation.predicted_class());
        assert!((w.endpoint - w.prediction).abs() < 1e-9);
        for pair in w.steps.windows(2) {
            assert!(pair[0].contribution.abs() >= pair[1].contribution.abs());
        }
        assert!(w.to_csv().lines().count() == w.steps.len() + 2);

        let constant = FnModel(|rows: &Matrix| Matrix::filled(rows.rows(), 4, 0.25));
        let inst = instance_explanation(&constant, &x, 0, &bg, &groups, ShapleyMethod::Exact, 0).unwrap();
        assert!(inst.waterfall.steps.is_empty());
        assert_eq!(inst.waterfall.endpoint, inst.waterfall.base);

        let export = serde_json::to_value(inst.explanation.to_export()).unwrap();
        assert_eq!(export["phi"]["x2"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn sampled_is_deterministic_given_seed() {
        let model = toy_softmax_model(8, 4);
        let groups = FeatureGroups::singletons(&names(8));
        let (x, bg) = random_setup(8, 5);
        let a = sampled_attribution(&model, &x, &bg, &groups, 30, 11).unwrap();
        let b = sampled_attribution(&model, &x, &bg, &groups, 30, 11).unwrap();
        assert_eq!(a, b);
        assert!(!a.exhaustive);
        assert_ne!(a, sampled_attribution(&model, &x, &bg, &groups, 30, 12).unwrap());
    }
}
