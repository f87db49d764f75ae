//! Pipeline configuration: one TOML document with dotted keys such as
//! `train.batch_size = 64`, overridable key by key with `key=value` strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{Lambda, SmoteParams};
use crate::explain::ShapleyMethod;
use crate::forest::ForestParams;
use crate::rng;
use crate::spacenet::{ModelConfig, TrainConfig};
use crate::synth::GeneratorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Survey CSV; defaults to `<out_dir>/survey.csv`.
    pub input: Option<PathBuf>,
    /// Schema JSON; defaults to `<out_dir>/schema.json`.
    pub schema: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            input: None,
            schema: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PathsSection {
    pub fn input(&self) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.out_dir.join("survey.csv"))
    }

    pub fn schema(&self) -> PathBuf {
        self.schema.clone().unwrap_or_else(|| self.out_dir.join("schema.json"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_rows: usize,
    pub noise_scale: f64,
    pub outlier_rate: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        Self {
            n_rows: g.n_rows,
            noise_scale: g.noise_scale,
            outlier_rate: g.outlier_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub enabled: bool,
    /// Continuous columns checked for outliers; empty means all of them.
    pub outlier_columns: Vec<String>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            enabled: true,
            outlier_columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub top_k: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Columns tried per split; 0 means `ceil(sqrt(m))`.
    pub features_per_split: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            top_k: 25,
            n_trees: 200,
            max_depth: 4,
            min_samples_split: 20,
            features_per_split: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSection {
    pub enabled: bool,
    pub k_neighbors: usize,
}

impl Default for SmoteSection {
    fn default() -> Self {
        Self {
            enabled: true,
            k_neighbors: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_hidden: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            ff_hidden: m.ff_hidden,
            mlp_hidden: m.mlp_hidden,
            dropout: m.dropout_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { k: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMode {
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub mode: ExplainMode,
    pub n_permutations: usize,
    pub background_size: usize,
    /// Rows explained for the global and per-class summaries.
    pub n_instances: usize,
    /// Row (after cleaning) shown in the instance explanation.
    pub instance: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            mode: ExplainMode::Auto,
            n_permutations: 2,
            background_size: 50,
            n_instances: 40,
            instance: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Worker threads; 0 means one per CPU.
    pub threads: usize,
    pub paths: PathsSection,
    pub synth: SynthSection,
    pub preprocess: PreprocessSection,
    pub selection: SelectionSection,
    pub smote: SmoteSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub cv: CvSection,
    pub explain: ExplainSection,
}

fn parse_scalar(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(key.to_string()));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("`{part}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses a TOML document and applies `key=value` overrides in order.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            set_path(&mut table, key.trim(), parse_scalar(value.trim()))?;
        }
        let config: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.cv.k < 2 {
            return bad(format!("cv.k = {} must be at least 2", self.cv.k));
        }
        if self.selection.top_k == 0 {
            return bad("selection.top_k must be positive".into());
        }
        if self.selection.n_trees == 0 || self.selection.max_depth == 0 {
            return bad("selection.n_trees and selection.max_depth must be positive".into());
        }
        if self.smote.k_neighbors == 0 {
            return bad("smote.k_neighbors must be positive".into());
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return bad("train.batch_size and train.epochs must be positive".into());
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite())
            || self.train.weight_decay.is_nan()
            || self.train.weight_decay < 0.0
        {
            return bad("train.lr must be positive and train.weight_decay non-negative".into());
        }
        if self.explain.n_permutations == 0 || self.explain.background_size == 0 || self.explain.n_instances == 0 {
            return bad("explain sizes must be positive".into());
        }
        self.model_config(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Checks that referenced columns exist and `top_k` fits the schema.
    pub fn validate_against(&self, schema: &crate::data::Schema) -> Result<(), ConfigError> {
        for c in &self.preprocess.outlier_columns {
            match schema.index_of(c) {
                Some(i) if schema.features()[i].is_continuous() => {}
                Some(_) => return Err(ConfigError::Invalid(format!("outlier column `{c}` is not continuous"))),
                None => {
                    return Err(ConfigError::Invalid(format!(
                        "outlier column `{c}` is not in the schema"
                    )))
                }
            }
        }
        if self.selection.top_k > schema.len() {
            return Err(ConfigError::Invalid(format!(
                "selection.top_k = {} exceeds the {} schema features",
                self.selection.top_k,
                schema.len()
            )));
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            n_rows: self.synth.n_rows,
            seed: self.seed,
            noise_scale: self.synth.noise_scale,
            outlier_rate: self.synth.outlier_rate,
            ..GeneratorConfig::default()
        }
    }

    /// Outlier columns to check for a dataset with this schema.
    pub fn outlier_columns(&self, schema: &crate::data::Schema) -> Vec<String> {
        if self.preprocess.outlier_columns.is_empty() {
            schema
                .features()
                .iter()
                .filter(|f| f.is_continuous())
                .map(|f| f.name.clone())
                .collect()
        } else {
            self.preprocess.outlier_columns.clone()
        }
    }

    /// Seed for one pipeline stage of one fold. The full-data fit uses
    /// `fold = u64::MAX`.
    pub fn stage_seed(&self, stream: u64, fold: u64) -> u64 {
        rng::derive_seed(self.seed, &[stream, fold])
    }

    pub fn forest_params(&self, fold: u64) -> ForestParams {
        ForestParams {
            n_trees: self.selection.n_trees,
            max_depth: self.selection.max_depth,
            min_samples_split: self.selection.min_samples_split,
            features_per_split: (self.selection.features_per_split > 0).then_some(self.selection.features_per_split),
            seed: self.stage_seed(rng::STREAM_FOREST, fold),
        }
    }

    pub fn smote_params(&self, fold: u64) -> SmoteParams {
        SmoteParams {
            k_neighbors: self.smote.k_neighbors,
            targets: None,
            seed: self.stage_seed(rng::STREAM_SMOTE, fold),
            lambda: Lambda::Uniform,
        }
    }

    pub fn model_config(&self, fold: u64) -> ModelConfig {
        ModelConfig {
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            ff_hidden: self.model.ff_hidden,
            mlp_hidden: self.model.mlp_hidden,
            dropout_p: self.model.dropout,
            seed: self.stage_seed(rng::STREAM_INIT, fold),
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self, fold: u64) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.stage_seed(rng::STREAM_SHUFFLE, fold),
        }
    }

    pub fn shapley_method(&self) -> ShapleyMethod {
        let n_permutations = self.explain.n_permutations;
        match self.explain.mode {
            ExplainMode::Auto => ShapleyMethod::Auto { n_permutations },
            ExplainMode::Exact => ShapleyMethod::Exact,
            ExplainMode::Sampled => ShapleyMethod::Sampled { n_permutations },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_document() {
        let c = PipelineConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.train.epochs, 50);
        assert_eq!(c.selection.top_k, 25);
        assert_eq!(c.cv.k, 5);
        assert_eq!(c.paths.input(), PathBuf::from("out/survey.csv"));
    }

    #[test]
    fn dotted_keys_and_overrides() {
        let text = "seed = 3\ntrain.batch_size = 32\n[explain]\nmode = \"sampled\"\n";
        let c = PipelineConfig::from_toml_str(text, &["train.epochs=7".into(), "paths.out_dir=runs/a".into()]).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.explain.mode, ExplainMode::Sampled);
        assert_eq!(c.paths.out_dir, PathBuf::from("runs/a"));
        let c2 = PipelineConfig::from_toml_str("", &["preprocess.outlier_columns=[\"age\"]".into()]).unwrap();
        assert_eq!(c2.preprocess.outlier_columns, vec!["age"]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            PipelineConfig::from_toml_str("train.bogus = 1", &[]),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("", &["cv.k=1".into()]),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("", &["novalue".into()]),
            Err(ConfigError::BadOverride(_))
        ));
        assert!(PipelineConfig::from_toml_str("", &["model.n_heads=3".into()]).is_err());
        assert!(PipelineConfig::from_toml_str("", &["seed.x=3".into()]).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        assert_eq!(
            a.digest(),
            PipelineConfig::from_toml_str(&a.to_toml(), &[]).unwrap().digest()
        );
        assert_eq!(a.digest().len(), 64);
        let b = PipelineConfig::from_toml_str("", &["train.lr=0.002".into()]).unwrap();
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn stage_seeds_differ() {
        let c = PipelineConfig::default();
        assert_ne!(c.forest_params(0).seed, c.forest_params(1).seed);
        assert_ne!(c.model_config(0).seed, c.train_config(0).seed);
    }
}
