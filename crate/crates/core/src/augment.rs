//! SMOTE: oversample minority classes by interpolating between a row and
//! one of its nearest same-class neighbours.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{class_counts, TravelClass, N_CLASSES};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("class {0} has no rows to interpolate from")]
    EmptyClass(TravelClass),
    #[error("invalid SMOTE parameters: {0}")]
    InvalidParams(String),
}

/// How the interpolation coefficient is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lambda {
    Uniform,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteParams {
    pub k_neighbors: usize,
    /// Target count per class; `None` means the majority-class count for all.
    pub targets: Option<[usize; N_CLASSES]>,
    pub seed: u64,
    pub lambda: Lambda,
}

impl Default for SmoteParams {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            targets: None,
            seed: 0,
            lambda: Lambda::Uniform,
        }
    }
}

/// Provenance of one synthetic row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub class: TravelClass,
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub values: Matrix,
    pub labels: Vec<TravelClass>,
    /// One record per synthetic row, in output order after the originals.
    pub log: Vec<SyntheticRecord>,
}

/// `x + lambda * (neighbor - x)`
pub fn interpolate(x: &[f64], neighbor: &[f64], lambda: f64) -> Vec<f64> {
    x.iter().zip(neighbor).map(|(a, b)| a + lambda * (b - a)).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest rows to `members[q]` among `members` (excluding itself),
/// Euclidean distance, ties by row index.
fn nearest(values: &Matrix, members: &[usize], q: usize, k: usize) -> Vec<usize> {
    let x = values.row(members[q]);
    let mut dist: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != q)
        .map(|(_, &r)| (squared_distance(x, values.row(r)), r))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.truncate(k);
    dist.into_iter().map(|(_, r)| r).collect()
}

/// Grows every class to its target count. Original rows come first and are
/// untouched; synthetic rows follow, class by class in code order.
///
/// A class with fewer than `k_neighbors + 1` rows uses `count - 1` neighbours;
/// a single-row class duplicates that row.
pub fn smote(values: &Matrix, labels: &[TravelClass], params: &SmoteParams) -> Result<Augmented, AugmentError> {
    if params.k_neighbors == 0 {
        return Err(AugmentError::InvalidParams("k_neighbors must be at least 1".into()));
    }
    if labels.len() != values.rows() {
        return Err(AugmentError::InvalidParams(format!(
            "{} labels for {} rows",
            labels.len(),
            values.rows()
        )));
    }
    if let Lambda::Fixed(l) = params.lambda {
        if !(0.0..=1.0).contains(&l) {
            return Err(AugmentError::InvalidParams(format!("lambda {l} outside [0, 1]")));
        }
    }
    let counts = class_counts(labels);
    let majority = counts.iter().copied().max().unwrap_or(0);
    let targets = params.targets.unwrap_or([majority; N_CLASSES]);
    for c in 0..N_CLASSES {
        if targets[c] < counts[c] {
            return Err(AugmentError::InvalidParams(format!(
                "target {} below current count {} for class {}",
                targets[c],
                counts[c],
                TravelClass::ALL[c]
            )));
        }
    }

    let mut out = values.clone();
    let mut out_labels = labels.to_vec();
    let mut log = Vec::new();
    let mut rng = rng::rng_for(params.seed, &[rng::STREAM_SMOTE]);
    for class in TravelClass::ALL {
        let needed = targets[class.index()] - counts[class.index()];
        if needed == 0 {
            continue;
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(AugmentError::EmptyClass(class));
        }
        let k = params.k_neighbors.min(members.len() - 1);
        let neighbors: Vec<Vec<usize>> = (0..members.len()).map(|q| nearest(values, &members, q, k)).collect();
        for _ in 0..needed {
            let q = rng.gen_range(0..members.len());
            let parent = members[q];
            let neighbor = if k == 0 {
                parent
            } else {
                neighbors[q][rng.gen_range(0..k)]
            };
            let lambda = match params.lambda {
                Lambda::Uniform => rng.gen_range(0.0..=1.0),
                Lambda::Fixed(l) => l,
            };
            out.push_row(&interpolate(values.row(parent), values.row(neighbor), lambda));
            out_labels.push(class);
            log.push(SyntheticRecord {
                class,
                parent,
                neighbor,
                lambda,
            });
        }
    }
    Ok(Augmented {
        values: out,
        labels: out_labels,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_point_minority() -> (Matrix, Vec<TravelClass>) {
        let values = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![2.0, 2.0],
            vec![9.0, 9.0],
            vec![9.5, 9.0],
            vec![9.0, 9.5],
        ]);
        let labels = vec![
            TravelClass::Moon,
            TravelClass::Moon,
            TravelClass::NoTravel,
            TravelClass::NoTravel,
            TravelClass::NoTravel,
        ];
        (values, labels)
    }

    #[test]
    fn midpoint_with_fixed_lambda() {
        let (values, labels) = two_point_minority();
        let params = SmoteParams {
            k_neighbors: 1,
            targets: Some([3, 3, 0, 0]),
            lambda: Lambda::Fixed(0.5),
            ..Default::default()
        };
        let out = smote(&values, &labels, &params).unwrap();
        assert_eq!(out.values.rows(), 6);
        assert_eq!(out.values.row(5), &[1.0, 1.0]);
        assert_eq!(out.labels[5], TravelClass::Moon);
    }

    #[test]
    fn zero_lambda_copies_parent() {
        let (values, labels) = two_point_minority();
        let params = SmoteParams {
            k_neighbors: 1,
            targets: Some([3, 5, 0, 0]),
            lambda: Lambda::Fixed(0.0),
            ..Default::default()
        };
        let out = smote(&values, &labels, &params).unwrap();
        for (i, rec) in out.log.iter().enumerate() {
            assert_eq!(out.values.row(5 + i), values.row(rec.parent));
        }
    }

    #[test]
    fn default_targets_balance_to_majority() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let counts = [100, 40, 60, 80];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                rows.push(vec![rng.gen_range(-1.0..1.0) + c as f64, rng.gen_range(-1.0..1.0)]);
                labels.push(TravelClass::ALL[c]);
            }
        }
        let values = Matrix::from_rows(&rows);
        let out = smote(&values, &labels, &SmoteParams::default()).unwrap();
        assert_eq!(class_counts(&out.labels), [100; 4]);
        assert_eq!(out.log.len(), 60 + 40 + 20);
        // originals first, unchanged
        assert_eq!(&out.values.as_slice()[..values.as_slice().len()], values.as_slice());
        let again = smote(&values, &labels, &SmoteParams::default()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn singleton_class_duplicates_itself() {
        let values = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let labels = vec![TravelClass::Moon, TravelClass::NoTravel, TravelClass::NoTravel];
        let params = SmoteParams {
            targets: Some([2, 2, 0, 0]),
            ..Default::default()
        };
        let out = smote(&values, &labels, &params).unwrap();
        assert_eq!(out.values.row(3), &[1.0]);
    }

    #[test]
    fn empty_class_with_positive_target() {
        let values = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        let labels = vec![TravelClass::Moon, TravelClass::Moon];
        let err = smote(&values, &labels, &SmoteParams::default()).unwrap_err();
        assert_eq!(err, AugmentError::EmptyClass(TravelClass::NoTravel));
    }

    #[test]
    fn neighbors_come_from_the_k_nearest() {
        let (values, labels) = two_point_minority();
        let params = SmoteParams {
            k_neighbors: 1,
            targets: Some([6, 3, 0, 0]),
            seed: 4,
            ..Default::default()
        };
        let out = smote(&values, &labels, &params).unwrap();
        for rec in &out.log {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == rec.class).collect();
            let q = members.iter().position(|&m| m == rec.parent).unwrap();
            assert!(nearest(&values, &members, q, 1).contains(&rec.neighbor));
            assert!((0.0..=1.0).contains(&rec.lambda));
        }
    }
}
