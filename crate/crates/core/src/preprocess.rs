//! Interquartile-range outlier filtering and standard normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, EncodedMatrix};
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("quantile of an empty sample")]
    EmptyInput,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("interquartile range needs at least 4 values, got {0}")]
    TooFewValues(usize),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not continuous")]
    NotContinuous(String),
    #[error("standardizer fitted on an empty row subset")]
    EmptySubset,
    #[error("matrix has {found} columns, standardizer expects {expected}")]
    LayoutMismatch { expected: usize, found: usize },
}

/// Linear-interpolation quantile of an ascending sample at position `q * (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64, PreprocessError> {
    if sorted.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(PreprocessError::NonFinite);
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "quantile input must be sorted");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqrBounds {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lo: f64,
    pub hi: f64,
}

impl IqrBounds {
    pub fn is_outlier(&self, x: f64) -> bool {
        x < self.lo || x > self.hi
    }
}

pub const IQR_MULTIPLIER: f64 = 1.5;

pub fn iqr_bounds(values: &[f64]) -> Result<IqrBounds, PreprocessError> {
    if values.len() < 4 {
        return Err(PreprocessError::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(PreprocessError::NonFinite);
    }
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25)?;
    let q3 = quantile(&sorted, 0.75)?;
    let iqr = q3 - q1;
    Ok(IqrBounds {
        q1,
        q3,
        iqr,
        lo: q1 - IQR_MULTIPLIER * iqr,
        hi: q3 + IQR_MULTIPLIER * iqr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub bounds: BTreeMap<String, IqrBounds>,
    pub dropped: Vec<usize>,
    pub kept: usize,
}

/// Drops every row in which any of the named continuous columns falls outside
/// its 1.5 x IQR fences. Fences come from the full input, computed once, so a
/// second pass over the output can drop more rows.
pub fn filter_outliers(dataset: &Dataset, columns: &[String]) -> Result<(Dataset, CleaningReport), PreprocessError> {
    let schema = dataset.schema();
    let mut fences = Vec::with_capacity(columns.len());
    let mut bounds = BTreeMap::new();
    for name in columns {
        let f = schema
            .index_of(name)
            .ok_or_else(|| PreprocessError::UnknownColumn(name.clone()))?;
        let values = dataset
            .numeric_column(f)
            .ok_or_else(|| PreprocessError::NotContinuous(name.clone()))?;
        let b = iqr_bounds(&values)?;
        fences.push((f, b));
        bounds.insert(name.clone(), b);
    }
    let mut kept_rows = Vec::with_capacity(dataset.len());
    let mut dropped = Vec::new();
    for (i, row) in dataset.rows().iter().enumerate() {
        let flagged = fences
            .iter()
            .any(|&(f, b)| row[f].as_number().is_some_and(|x| b.is_outlier(x)));
        if flagged {
            dropped.push(i);
        } else {
            kept_rows.push(i);
        }
    }
    let report = CleaningReport {
        bounds,
        dropped,
        kept: kept_rows.len(),
    };
    Ok((dataset.subset(&kept_rows), report))
}

/// Per-column mean and population standard deviation of the continuous
/// columns of an encoded matrix. One-hot columns pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub width: usize,
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fitted_on: usize,
}

pub fn fit_standardizer(matrix: &EncodedMatrix, rows: &[usize]) -> Result<Standardizer, PreprocessError> {
    if rows.is_empty() {
        return Err(PreprocessError::EmptySubset);
    }
    let columns: Vec<usize> = (0..matrix.cols()).filter(|&c| matrix.is_continuous_column(c)).collect();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; columns.len()];
    let mut std = vec![0.0; columns.len()];
    for (k, &c) in columns.iter().enumerate() {
        let m = rows.iter().map(|&r| matrix.values.get(r, c)).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|&r| {
                let d = matrix.values.get(r, c) - m;
                d * d
            })
            .sum::<f64>()
            / n;
        mean[k] = m;
        std[k] = var.sqrt();
    }
    Ok(Standardizer {
        width: matrix.cols(),
        columns,
        mean,
        std,
        fitted_on: rows.len(),
    })
}

impl Standardizer {
    pub fn apply(&self, matrix: &EncodedMatrix) -> Result<EncodedMatrix, PreprocessError> {
        Ok(matrix.with_values(self.apply_values(&matrix.values)?))
    }

    pub fn apply_values(&self, values: &Matrix) -> Result<Matrix, PreprocessError> {
        self.check(values)?;
        let mut out = values.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (k, &c) in self.columns.iter().enumerate() {
                row[c] = if self.std[k] > 0.0 {
                    (row[c] - self.mean[k]) / self.std[k]
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    /// Inverse transform; constant columns come back as their mean.
    pub fn invert_values(&self, values: &Matrix) -> Result<Matrix, PreprocessError> {
        self.check(values)?;
        let mut out = values.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (k, &c) in self.columns.iter().enumerate() {
                row[c] = row[c] * self.std[k] + self.mean[k];
            }
        }
        Ok(out)
    }

    fn check(&self, values: &Matrix) -> Result<(), PreprocessError> {
        if values.cols() != self.width {
            return Err(PreprocessError::LayoutMismatch {
                expected: self.width,
                found: values.cols(),
            });
        }
        Ok(())
    }
}

pub fn apply_standardizer(std: &Standardizer, matrix: &EncodedMatrix) -> Result<EncodedMatrix, PreprocessError> {
    std.apply(matrix)
}
