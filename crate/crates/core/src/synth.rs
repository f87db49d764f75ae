//! Seeded synthetic survey generator.
//!
//! Features are drawn from fixed marginals. Each class gets a linear utility
//! over standardized features, and the label is the class with the highest
//! utility after adding Gumbel noise of scale `noise_scale`. That is the same
//! as sampling from `softmax(utility / noise_scale)`; a scale of zero makes
//! the label the plain argmax. Intercepts are calibrated so expected class
//! shares match the configured targets.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::softmax_in_place;
use crate::data::{Cell, DataError, Dataset, FeatureSpec, Schema, TravelClass, N_CLASSES};
use crate::matrix::Matrix;
use crate::metrics::macro_ovr_auc;
use crate::rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Survey class shares: no travel, moon, suborbital, orbital.
pub const SURVEY_SHARES: [f64; N_CLASSES] = [0.234, 0.265, 0.281, 0.220];

pub const PRICE: &str = "average_price_dollars";
pub const AGE: &str = "age";
pub const DELTA_PRICE_MOON: &str = "delta_price_dollars_moon_trip";
pub const INCOME: &str = "annual_income";
pub const GENDER: &str = "gender";
pub const FATALITY: &str = "fatality_probability";
pub const CHILDREN: &str = "number_of_children";
pub const REGION: &str = "region";
pub const GENERATION: &str = "generation";
pub const EDUCATION: &str = "education";

pub const SIGNAL_FEATURES: [&str; 10] = [
    PRICE,
    AGE,
    DELTA_PRICE_MOON,
    INCOME,
    GENDER,
    FATALITY,
    CHILDREN,
    REGION,
    GENERATION,
    EDUCATION,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Symmetric triangular on `[lo, hi]`.
    Triangular {
        lo: f64,
        hi: f64,
    },
    ClippedNormal {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
    /// `exp(U(ln lo, ln hi))`; standardized on the log scale.
    LogUniform {
        lo: f64,
        hi: f64,
    },
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    Categorical {
        categories: Vec<String>,
        probs: Vec<f64>,
    },
    /// Category chosen by which band of another feature's value the row falls
    /// in; `upper[i]` is the inclusive upper edge of band `i`.
    Bands {
        source: String,
        categories: Vec<String>,
        upper: Vec<f64>,
    },
}

impl Marginal {
    fn categories(&self) -> Option<&[String]> {
        match self {
            Marginal::Categorical { categories, .. } | Marginal::Bands { categories, .. } => Some(categories),
            _ => None,
        }
    }

    /// Centre and scale used to standardize a numeric draw for the utility.
    fn standardization(&self) -> (f64, f64) {
        match self {
            Marginal::Uniform { lo, hi } => ((lo + hi) / 2.0, (hi - lo) / 12f64.sqrt()),
            Marginal::Triangular { lo, hi } => ((lo + hi) / 2.0, (hi - lo) / 24f64.sqrt()),
            Marginal::ClippedNormal { mean, sd, .. } => (*mean, *sd),
            Marginal::LogUniform { lo, hi } => ((lo.ln() + hi.ln()) / 2.0, (hi.ln() - lo.ln()) / 12f64.sqrt()),
            Marginal::Discrete { values, probs } => {
                let total: f64 = probs.iter().sum();
                let mean = values.iter().zip(probs).map(|(v, p)| v * p).sum::<f64>() / total;
                let var = values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (v - mean).powi(2))
                    .sum::<f64>()
                    / total;
                (mean, var.sqrt())
            }
            Marginal::Categorical { .. } | Marginal::Bands { .. } => (0.0, 1.0),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, lookup: impl Fn(&str) -> f64) -> Cell {
        match self {
            Marginal::Uniform { lo, hi } => Cell::Number(rng.gen_range(*lo..*hi)),
            Marginal::Triangular { lo, hi } => {
                let u: f64 = rng.gen::<f64>() + rng.gen::<f64>();
                Cell::Number(lo + (hi - lo) * u / 2.0)
            }
            Marginal::ClippedNormal { mean, sd, lo, hi } => {
                let z: f64 = rand_distr_normal(rng);
                Cell::Number((mean + sd * z).clamp(*lo, *hi))
            }
            Marginal::LogUniform { lo, hi } => Cell::Number(rng.gen_range(lo.ln()..hi.ln()).exp()),
            Marginal::Discrete { values, probs } => {
                let idx = WeightedIndex::new(probs).expect("validated weights").sample(rng);
                Cell::Number(values[idx])
            }
            Marginal::Categorical { probs, .. } => {
                Cell::Category(WeightedIndex::new(probs).expect("validated weights").sample(rng))
            }
            Marginal::Bands {
                source,
                upper,
                categories,
            } => {
                let v = lookup(source);
                Cell::Category(upper.iter().position(|&u| v <= u).unwrap_or(categories.len() - 1))
            }
        }
    }
}

/// Box-Muller standard normal.
fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFeature {
    pub name: String,
    pub marginal: Marginal,
}

/// Utility contribution of one feature. For numeric features the weights
/// multiply the standardized value; for categorical features `category`
/// names the level whose indicator the weights multiply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTerm {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub weights: [f64; N_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_rows: usize,
    pub seed: u64,
    pub features: Vec<GeneratedFeature>,
    /// Features absent from this list carry no signal.
    pub coefficients: Vec<UtilityTerm>,
    pub noise_scale: f64,
    pub class_shares: [f64; N_CLASSES],
    /// Fraction of rows whose price cell is overwritten with an extreme value.
    pub outlier_rate: f64,
    pub outlier_feature: String,
    /// Outlier values are the feature's upper bound times `U(lo, hi)`.
    pub outlier_multiplier: (f64, f64),
}

fn term(feature: &str, weights: [f64; N_CLASSES]) -> UtilityTerm {
    UtilityTerm {
        feature: feature.into(),
        category: None,
        weights,
    }
}

fn level(feature: &str, category: &str, weights: [f64; N_CLASSES]) -> UtilityTerm {
    UtilityTerm {
        feature: feature.into(),
        category: Some(category.into()),
        weights,
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub const N_CONTINUOUS_FILLERS: usize = 30;
pub const N_BINARY_FILLERS: usize = 4;

pub fn default_features() -> Vec<GeneratedFeature> {
    let f = |name: &str, marginal| GeneratedFeature {
        name: name.into(),
        marginal,
    };
    let mut out = vec![
        f(
            PRICE,
            Marginal::Uniform {
                lo: 20_000.0,
                hi: 250_000.0,
            },
        ),
        f(
            AGE,
            Marginal::ClippedNormal {
                mean: 40.0,
                sd: 13.0,
                lo: 18.0,
                hi: 69.0,
            },
        ),
        f(DELTA_PRICE_MOON, Marginal::Uniform { lo: 0.0, hi: 150_000.0 }),
        f(
            INCOME,
            Marginal::LogUniform {
                lo: 25_000.0,
                hi: 250_000.0,
            },
        ),
        f(
            GENDER,
            Marginal::Categorical {
                categories: strings(&["male", "female"]),
                probs: vec![0.55, 0.45],
            },
        ),
        f(FATALITY, Marginal::Uniform { lo: 0.5, hi: 15.0 }),
        f(
            CHILDREN,
            Marginal::Discrete {
                values: vec![0.0, 1.0, 2.0, 3.0, 4.0],
                probs: vec![0.35, 0.25, 0.2, 0.12, 0.08],
            },
        ),
        f(
            REGION,
            Marginal::Categorical {
                categories: strings(&["west", "south", "midwest", "northeast"]),
                probs: vec![0.24, 0.38, 0.21, 0.17],
            },
        ),
        f(
            GENERATION,
            Marginal::Bands {
                source: AGE.into(),
                categories: strings(&["gen_z", "millennial", "gen_x", "baby_boomer"]),
                upper: vec![26.0, 42.0, 58.0],
            },
        ),
        f(
            EDUCATION,
            Marginal::Categorical {
                categories: strings(&["high_school", "some_college", "bachelor", "graduate"]),
                probs: vec![0.3, 0.25, 0.28, 0.17],
            },
        ),
    ];
    for i in 0..N_CONTINUOUS_FILLERS {
        let hi = 10.0 * (1 + i % 5) as f64;
        let lo = -((i % 3) as f64) * hi / 4.0;
        let marginal = if i % 2 == 0 {
            Marginal::Uniform { lo, hi }
        } else {
            Marginal::Triangular { lo, hi }
        };
        out.push(f(&format!("filler_c{:02}", i + 1), marginal));
    }
    for i in 0..N_BINARY_FILLERS {
        let p = 0.3 + 0.1 * i as f64;
        out.push(f(
            &format!("filler_b{:02}", i + 1),
            Marginal::Categorical {
                categories: strings(&["no", "yes"]),
                probs: vec![1.0 - p, p],
            },
        ));
    }
    out
}

/// Class order in every weight array: no travel, moon, suborbital, orbital.
pub fn default_coefficients() -> Vec<UtilityTerm> {
    vec![
        term(PRICE, [2.4, -0.6, -0.9, -0.9]),
        term(AGE, [0.9, 0.1, -0.6, -0.4]),
        term(DELTA_PRICE_MOON, [0.3, -1.0, 0.3, 0.4]),
        term(INCOME, [-0.8, 0.2, 0.0, 0.6]),
        level(GENDER, "male", [-2.0, 0.0, 0.5, 1.2]),
        term(FATALITY, [0.7, 0.0, -0.3, -0.4]),
        term(CHILDREN, [0.8, -0.8, 0.2, -0.2]),
        level(REGION, "south", [1.0, -0.4, 0.0, -0.6]),
        level(REGION, "west", [-0.6, 0.0, 0.0, 1.0]),
        level(REGION, "northeast", [0.0, 1.0, -0.4, 0.0]),
        level(GENERATION, "gen_z", [-0.8, 0.0, 1.2, 0.0]),
        level(GENERATION, "millennial", [0.0, 0.8, 0.0, -0.4]),
        level(GENERATION, "baby_boomer", [0.8, 0.0, -0.6, 0.0]),
        level(EDUCATION, "graduate", [-0.6, 0.0, -0.4, 1.2]),
        level(EDUCATION, "high_school", [1.0, 0.0, 0.0, -0.6]),
        level(EDUCATION, "bachelor", [0.0, 0.8, 0.0, 0.0]),
    ]
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_rows: 1860,
            seed: 0,
            features: default_features(),
            coefficients: default_coefficients(),
            noise_scale: 1.0,
            class_shares: SURVEY_SHARES,
            outlier_rate: 0.01,
            outlier_feature: PRICE.into(),
            outlier_multiplier: (3.0, 8.0),
        }
    }
}

impl GeneratorConfig {
    pub fn schema(&self) -> Result<Schema, SynthError> {
        let specs = self
            .features
            .iter()
            .map(|f| match f.marginal.categories() {
                Some(c) => FeatureSpec::categorical(&f.name, c.to_vec()),
                None => FeatureSpec::continuous(&f.name),
            })
            .collect();
        Ok(Schema::new(specs, "travel_class")?)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_rows == 0 {
            return bad("n_rows must be positive".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!(
                "noise_scale {} must be finite and non-negative",
                self.noise_scale
            ));
        }
        if self.class_shares.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return bad("class shares must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!("outlier_rate {} outside [0, 1]", self.outlier_rate));
        }
        let (lo, hi) = self.outlier_multiplier;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return bad(format!(
                "outlier multiplier range ({lo}, {hi}) must be positive and increasing"
            ));
        }
        let schema = self.schema()?;
        for (i, f) in self.features.iter().enumerate() {
            let probs_ok = |p: &[f64], n: usize| {
                p.len() == n && p.iter().all(|&v| v >= 0.0 && v.is_finite()) && p.iter().sum::<f64>() > 0.0
            };
            let ok = match &f.marginal {
                Marginal::Uniform { lo, hi } | Marginal::Triangular { lo, hi } => lo < hi,
                Marginal::ClippedNormal { sd, lo, hi, .. } => *sd > 0.0 && lo < hi,
                Marginal::LogUniform { lo, hi } => *lo > 0.0 && lo < hi,
                Marginal::Discrete { values, probs } => !values.is_empty() && probs_ok(probs, values.len()),
                Marginal::Categorical { categories, probs } => probs_ok(probs, categories.len()),
                Marginal::Bands {
                    source,
                    categories,
                    upper,
                } => {
                    upper.len() + 1 == categories.len()
                        && self.features[..i]
                            .iter()
                            .any(|g| &g.name == source && g.marginal.categories().is_none())
                }
            };
            if !ok {
                return bad(format!("feature `{}` has an invalid marginal", f.name));
            }
        }
        for t in &self.coefficients {
            let Some(idx) = schema.index_of(&t.feature) else {
                return bad(format!("coefficient for unknown feature `{}`", t.feature));
            };
            let cats = schema.features()[idx].categories();
            match (&t.category, cats) {
                (None, None) => {}
                (Some(c), Some(cats)) if cats.contains(c) => {}
                _ => return bad(format!("coefficient for `{}` does not match its kind", t.feature)),
            }
            if t.weights.iter().any(|w| !w.is_finite()) {
                return bad(format!("non-finite coefficient for `{}`", t.feature));
            }
        }
        if self.outlier_rate > 0.0 {
            match schema
                .index_of(&self.outlier_feature)
                .map(|i| &self.features[i].marginal)
            {
                Some(m) if m.categories().is_none() => {}
                _ => return bad(format!("outlier feature `{}` must be numeric", self.outlier_feature)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedOutlier {
    pub row: usize,
    pub feature: String,
    pub original: f64,
    pub injected: f64,
}

/// Everything needed to check downstream results against the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub intercepts: [f64; N_CLASSES],
    pub realized_shares: [f64; N_CLASSES],
    pub expected_shares: [f64; N_CLASSES],
    pub outliers: Vec<InjectedOutlier>,
    /// Macro one-vs-rest AUC of the true class probabilities; absent when
    /// labels are deterministic.
    pub bayes_macro_auc: Option<f64>,
    pub signal_features: Vec<String>,
}

impl GroundTruth {
    pub fn outlier_rows(&self) -> Vec<usize> {
        self.outliers.iter().map(|o| o.row).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    rng::rng_for(seed, &[rng::STREAM_SYNTH, k])
}

/// Utilities without intercepts, `[n, 4]`.
fn utilities(config: &GeneratorConfig, schema: &Schema, rows: &[Vec<Cell>]) -> Matrix {
    let mut u = Matrix::zeros(rows.len(), N_CLASSES);
    for t in &config.coefficients {
        let f = schema.index_of(&t.feature).expect("validated");
        let (centre, scale) = config.features[f].marginal.standardization();
        let level = t.category.as_ref().map(|c| {
            schema.features()[f]
                .categories()
                .expect("validated")
                .iter()
                .position(|k| k == c)
                .expect("validated")
        });
        for (i, row) in rows.iter().enumerate() {
            let x = match (row[f], level) {
                (Cell::Number(v), None) => {
                    let v = if matches!(config.features[f].marginal, Marginal::LogUniform { .. }) {
                        v.ln()
                    } else {
                        v
                    };
                    (v - centre) / scale
                }
                (Cell::Category(k), Some(l)) => (k == l) as u8 as f64,
                _ => unreachable!("validated term kind"),
            };
            for c in 0..N_CLASSES {
                u.set(i, c, u.get(i, c) + t.weights[c] * x);
            }
        }
    }
    u
}

fn class_probabilities(u: &Matrix, intercepts: &[f64; N_CLASSES], scale: f64) -> Matrix {
    let mut p = u.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        for c in 0..N_CLASSES {
            row[c] = (row[c] + intercepts[c]) / scale;
        }
        softmax_in_place(row);
    }
    p
}

/// Intercepts whose expected class shares over these rows match `targets`.
fn calibrate(u: &Matrix, targets: &[f64; N_CLASSES], scale: f64) -> [f64; N_CLASSES] {
    let total: f64 = targets.iter().sum();
    let mut alpha = [0.0; N_CLASSES];
    for _ in 0..500 {
        let p = class_probabilities(u, &alpha, scale);
        let mut worst = 0.0f64;
        for c in 0..N_CLASSES {
            let share = p.column(c).iter().sum::<f64>() / p.rows() as f64;
            let step = scale * (targets[c] / total / share).ln();
            alpha[c] += step;
            worst = worst.max(step.abs());
        }
        let shift = alpha[0];
        alpha.iter_mut().for_each(|a| *a -= shift);
        if worst < 1e-12 {
            break;
        }
    }
    alpha
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated, SynthError> {
    config.validate()?;
    let schema = config.schema()?;
    let n = config.n_rows;
    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(n);
    let mut feature_rng = stream(config.seed, 0);
    for _ in 0..n {
        let mut row: Vec<Cell> = Vec::with_capacity(config.features.len());
        for f in &config.features {
            let cell = f.marginal.draw(&mut feature_rng, |name| {
                let idx = schema.index_of(name).expect("validated");
                match row[idx] {
                    Cell::Number(v) => v,
                    Cell::Category(k) => k as f64,
                }
            });
            row.push(cell);
        }
        rows.push(row);
    }

    let u = utilities(config, &schema, &rows);
    let mut label_rng = stream(config.seed, 1);
    let (intercepts, probs) = if config.noise_scale > 0.0 {
        let alpha = calibrate(&u, &config.class_shares, config.noise_scale);
        (alpha, Some(class_probabilities(&u, &alpha, config.noise_scale)))
    } else {
        ([0.0; N_CLASSES], None)
    };
    let labels: Vec<TravelClass> = (0..n)
        .map(|i| {
            let noisy: Vec<f64> = (0..N_CLASSES)
                .map(|c| {
                    let g = if config.noise_scale > 0.0 {
                        let e: f64 = 1.0 - label_rng.gen::<f64>();
                        -(-e.ln()).ln()
                    } else {
                        0.0
                    };
                    u.get(i, c) + intercepts[c] + config.noise_scale * g
                })
                .collect();
            TravelClass::ALL[crate::matrix::argmax(&noisy)]
        })
        .collect();

    let mut outliers = Vec::new();
    if config.outlier_rate > 0.0 {
        let f = schema.index_of(&config.outlier_feature).expect("validated");
        let upper = match &config.features[f].marginal {
            Marginal::Uniform { hi, .. }
            | Marginal::Triangular { hi, .. }
            | Marginal::ClippedNormal { hi, .. }
            | Marginal::LogUniform { hi, .. } => *hi,
            Marginal::Discrete { values, .. } => values.iter().copied().fold(f64::MIN, f64::max),
            _ => unreachable!("validated numeric"),
        };
        let mut out_rng = stream(config.seed, 2);
        let count = (config.outlier_rate * n as f64).round() as usize;
        let mut picked = sample(&mut out_rng, n, count.min(n)).into_vec();
        picked.sort_unstable();
        let (lo, hi) = config.outlier_multiplier;
        for row in picked {
            let Cell::Number(original) = rows[row][f] else {
                unreachable!("numeric feature")
            };
            let injected = upper * out_rng.gen_range(lo..hi);
            rows[row][f] = Cell::Number(injected);
            outliers.push(InjectedOutlier {
                row,
                feature: config.outlier_feature.clone(),
                original,
                injected,
            });
        }
    }

    let counts = crate::data::class_counts(&labels);
    let realized_shares = counts.map(|c| c as f64 / n as f64);
    let mut expected_shares = [0.0; N_CLASSES];
    let mut bayes_macro_auc = None;
    if let Some(p) = &probs {
        for (c, slot) in expected_shares.iter_mut().enumerate() {
            *slot = p.column(c).iter().sum::<f64>() / n as f64;
        }
        bayes_macro_auc = macro_ovr_auc(p, &labels).ok().map(|a| a.macro_auc);
    } else {
        expected_shares = realized_shares;
    }
    let signal_features = {
        let mut names: Vec<String> = Vec::new();
        for t in &config.coefficients {
            if t.weights.iter().any(|&w| w != 0.0) && !names.contains(&t.feature) {
                names.push(t.feature.clone());
            }
        }
        names
    };
    let dataset = Dataset::new(schema, rows, labels)?;
    Ok(Generated {
        dataset,
        truth: GroundTruth {
            config: config.clone(),
            intercepts,
            realized_shares,
            expected_shares,
            outliers,
            bayes_macro_auc,
            signal_features,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::filter_outliers;

    fn continuous_names(d: &Dataset) -> Vec<String> {
        d.schema()
            .features()
            .iter()
            .filter(|f| f.is_continuous())
            .map(|f| f.name.clone())
            .collect()
    }

    #[test]
    fn default_schema_shape() {
        let config = GeneratorConfig::default();
        let schema = config.schema().unwrap();
        assert_eq!(schema.len(), 44);
        for name in SIGNAL_FEATURES {
            assert!(schema.index_of(name).is_some(), "{name}");
        }
        config.validate().unwrap();
    }

    #[test]
    fn default_class_shares_match_survey() {
        let g = generate(&GeneratorConfig::default()).unwrap();
        assert_eq!(g.dataset.len(), 1860);
        for c in 0..4 {
            assert!(
                (g.truth.realized_shares[c] - SURVEY_SHARES[c]).abs() < 0.04,
                "{:?}",
                g.truth.realized_shares
            );
            assert!((g.truth.expected_shares[c] - SURVEY_SHARES[c]).abs() < 1e-6);
        }
        let auc = g.truth.bayes_macro_auc.unwrap();
        assert!((0.78..0.92).contains(&auc), "bayes auc {auc}");
    }

    #[test]
    fn deterministic_per_seed() {
        let config = GeneratorConfig {
            n_rows: 200,
            ..GeneratorConfig::default()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.dataset.to_csv_string().unwrap(), b.dataset.to_csv_string().unwrap());
        assert_eq!(a.truth, b.truth);
        let c = generate(&GeneratorConfig { seed: 1, ..config }).unwrap();
        assert_ne!(a.dataset.to_csv_string().unwrap(), c.dataset.to_csv_string().unwrap());
    }

    #[test]
    fn zero_noise_single_coefficient_is_deterministic() {
        let config = GeneratorConfig {
            n_rows: 300,
            features: vec![GeneratedFeature {
                name: "x".into(),
                marginal: Marginal::Uniform { lo: -1.0, hi: 1.0 },
            }],
            coefficients: vec![term("x", [-1.0, 1.0, 0.0, 0.0])],
            noise_scale: 0.0,
            outlier_rate: 0.0,
            ..GeneratorConfig::default()
        };
        let g = generate(&config).unwrap();
        for (row, label) in g.dataset.rows().iter().zip(g.dataset.labels()) {
            let Cell::Number(x) = row[0] else { panic!() };
            let expected = if x > 0.0 {
                TravelClass::Moon
            } else {
                TravelClass::NoTravel
            };
            assert_eq!(*label, expected);
        }
        assert!(g.truth.bayes_macro_auc.is_none());
    }

    #[test]
    fn outliers_are_flagged_and_clean_data_is_not() {
        let g = generate(&GeneratorConfig::default()).unwrap();
        assert_eq!(g.truth.outliers.len(), 19);
        let (_, report) = filter_outliers(&g.dataset, &continuous_names(&g.dataset)).unwrap();
        for row in g.truth.outlier_rows() {
            assert!(report.dropped.contains(&row), "{row}");
        }
        assert_eq!(report.dropped, g.truth.outlier_rows());
        for seed in 0..10 {
            let clean = generate(&GeneratorConfig {
                outlier_rate: 0.0,
                seed,
                ..GeneratorConfig::default()
            })
            .unwrap();
            let (kept, report) = filter_outliers(&clean.dataset, &continuous_names(&clean.dataset)).unwrap();
            assert!(report.dropped.is_empty(), "seed {seed}: {:?}", report.dropped);
            assert_eq!(kept.len(), 1860);
        }
    }

    #[test]
    fn generation_follows_age() {
        let g = generate(&GeneratorConfig {
            n_rows: 300,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let schema = g.dataset.schema();
        let (a, gen) = (schema.index_of(AGE).unwrap(), schema.index_of(GENERATION).unwrap());
        for row in g.dataset.rows() {
            let (Cell::Number(age), Cell::Category(k)) = (row[a], row[gen]) else {
                panic!()
            };
            let expected = [26.0, 42.0, 58.0].iter().position(|&u| age <= u).unwrap_or(3);
            assert_eq!(k, expected);
        }
    }

    #[test]
    fn invalid_configs() {
        let zero = GeneratorConfig {
            n_rows: 0,
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate(&zero), Err(SynthError::InvalidConfig(_))));
        let mut unknown = GeneratorConfig::default();
        unknown.coefficients.push(term("nope", [0.0; 4]));
        assert!(unknown.validate().is_err());
        let mut wrong_kind = GeneratorConfig::default();
        wrong_kind.coefficients.push(term(GENDER, [0.0; 4]));
        assert!(wrong_kind.validate().is_err());
        let negative = GeneratorConfig {
            noise_scale: -1.0,
            ..GeneratorConfig::default()
        };
        assert!(negative.validate().is_err());
    }
}
