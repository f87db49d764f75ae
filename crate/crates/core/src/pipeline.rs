//! End-to-end pipeline: cleaning, per-fold feature selection, balancing,
//! SpaceNet training, cross-validated evaluation and explanation.

use std::path::PathBuf;
use std::sync::Mutex;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{smote, AugmentError};
use crate::config::{ConfigError, PipelineConfig};
use crate::data::{encode, DataError, Dataset, EncodedMatrix, TravelClass};
use crate::explain::{
    class_summary, explain_rows, global_summary, instance_explanation, BackgroundSet, ClassSummary, ExplainError,
    Explanation, FeatureGroups, GlobalSummary, InstanceExplanation, Waterfall, N_OUTPUTS,
};
use crate::forest::{feature_importance, fit_forest, select_top_k, ForestError, ImportanceReport};
use crate::matrix::Matrix;
use crate::metrics::{cross_validate, CvResult, FoldModel, MetricsError};
use crate::preprocess::{filter_outliers, fit_standardizer, CleaningReport, PreprocessError};
use crate::rng;
use crate::spacenet::{self, Checkpoint, InputSpec, SpaceNet, SpaceNetError, TrainHistory};
use crate::synth::SynthError;

/// Fold tag used for seeds of the fit on all rows.
pub const FULL_FIT: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] SpaceNetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("missing artifact {0}; run the producing stage first")]
    MissingArtifact(PathBuf),
    #[error("checkpoint has no input specification")]
    NoInputSpec,
    #[error("checkpoint schema does not match the dataset schema")]
    SchemaMismatch,
    #[error("instance {index} out of range for {rows} rows")]
    InstanceOutOfRange { index: usize, rows: usize },
}

/// Drops outlier rows when cleaning is enabled.
pub fn clean(config: &PipelineConfig, dataset: &Dataset) -> Result<(Dataset, CleaningReport), PipelineError> {
    if !config.preprocess.enabled {
        let report = CleaningReport {
            bounds: Default::default(),
            dropped: Vec::new(),
            kept: dataset.len(),
        };
        return Ok((dataset.clone(), report));
    }
    let columns = config.outlier_columns(dataset.schema());
    Ok(filter_outliers(dataset, &columns)?)
}

/// Encodes a dataset into the layout a checkpoint expects.
pub fn transform(spec: &InputSpec, dataset: &Dataset) -> Result<EncodedMatrix, PipelineError> {
    if &spec.schema != dataset.schema() {
        return Err(PipelineError::SchemaMismatch);
    }
    let z = spec.standardizer.apply(&encode(dataset))?;
    Ok(z.select_features(&spec.selected_features))
}

/// Everything fitted on one training partition before the network.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub input: InputSpec,
    pub importance: ImportanceReport,
    pub train_x: Matrix,
    pub train_y: Vec<TravelClass>,
    pub n_synthetic: usize,
}

/// Standardizes, selects features with the forest and balances the classes,
/// all fitted on `train` rows only.
pub fn prepare_fold(
    config: &PipelineConfig,
    dataset: &Dataset,
    train: &[usize],
    fold: u64,
) -> Result<PreparedFold, PipelineError> {
    let encoded = encode(dataset);
    let standardizer = fit_standardizer(&encoded, train)?;
    let z = standardizer.apply(&encoded)?;
    let z_train = z.select_rows(train);
    let labels: Vec<TravelClass> = train.iter().map(|&i| dataset.labels()[i]).collect();

    let forest = fit_forest(&z_train, &labels, &config.forest_params(fold))?;
    let importance = feature_importance(&forest)?;
    let k = config.selection.top_k.min(importance.features.len());
    let selected = select_top_k(&importance, k)?;
    let chosen = z_train.select_features(&selected);

    let (train_x, train_y, n_synthetic) = if config.smote.enabled {
        let aug = smote(&chosen.values, &labels, &config.smote_params(fold))?;
        let n = aug.log.len();
        (aug.values, aug.labels, n)
    } else {
        (chosen.values.clone(), labels, 0)
    };
    Ok(PreparedFold {
        input: InputSpec {
            schema: dataset.schema().clone(),
            selected_features: selected,
            standardizer,
            column_names: chosen.column_names.clone(),
        },
        importance,
        train_x,
        train_y,
        n_synthetic,
    })
}

/// Artifacts of one trained fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub selected_features: Vec<String>,
    pub importance: ImportanceReport,
    pub history: TrainHistory,
    pub n_synthetic: usize,
}

/// The full pipeline as a cross-validation fold model.
pub struct SpaceNetPipeline<'a> {
    pub config: &'a PipelineConfig,
    runs: Mutex<Vec<FoldRun>>,
}

impl<'a> SpaceNetPipeline<'a> {
    pub fn new(config: &'a PipelineConfig) -> Self {
        Self {
            config,
            runs: Mutex::new(Vec::new()),
        }
    }

    /// Fold runs sorted by fold index.
    pub fn into_runs(self) -> Vec<FoldRun> {
        let mut runs = self.runs.into_inner().expect("fold runs lock");
        runs.sort_by_key(|r| r.fold);
        runs
    }
}

impl FoldModel for SpaceNetPipeline<'_> {
    type Error = PipelineError;

    fn fit_predict(
        &self,
        dataset: &Dataset,
        train: &[usize],
        test: &[usize],
        fold: usize,
    ) -> Result<Matrix, PipelineError> {
        let prepared = prepare_fold(self.config, dataset, train, fold as u64)?;
        let test_x = transform(&prepared.input, &dataset.subset(test))?.values;
        let test_y: Vec<TravelClass> = test.iter().map(|&i| dataset.labels()[i]).collect();
        let (model, history) = spacenet::train(
            &prepared.train_x,
            &prepared.train_y,
            Some((&test_x, &test_y)),
            &self.config.model_config(fold as u64),
            &self.config.train_config(fold as u64),
        )?;
        let probs = model.predict_proba(&test_x)?;
        self.runs.lock().expect("fold runs lock").push(FoldRun {
            fold,
            selected_features: prepared.input.selected_features,
            importance: prepared.importance,
            history,
            n_synthetic: prepared.n_synthetic,
        });
        Ok(probs)
    }
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub result: CvResult,
    pub runs: Vec<FoldRun>,
}

/// Stratified k-fold evaluation of the whole pipeline on a cleaned dataset.
pub fn run_cv(config: &PipelineConfig, dataset: &Dataset) -> Result<CvRun, PipelineError> {
    config.validate_against(dataset.schema())?;
    let pipeline = SpaceNetPipeline::new(config);
    let seed = rng::derive_seed(config.seed, &[rng::STREAM_FOLDS, config.cv.seed]);
    let result = cross_validate(dataset, &pipeline, config.cv.k, seed)?;
    Ok(CvRun {
        result,
        runs: pipeline.into_runs(),
    })
}

#[derive(Debug, Clone)]
pub struct FullFit {
    pub checkpoint: Checkpoint,
    pub importance: ImportanceReport,
    pub history: TrainHistory,
    pub n_synthetic: usize,
}

/// Fits the pipeline on every row of a cleaned dataset.
pub fn fit_full(config: &PipelineConfig, dataset: &Dataset) -> Result<FullFit, PipelineError> {
    config.validate_against(dataset.schema())?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let prepared = prepare_fold(config, dataset, &all, FULL_FIT)?;
    let (model, history) = spacenet::train(
        &prepared.train_x,
        &prepared.train_y,
        None,
        &config.model_config(FULL_FIT),
        &config.train_config(FULL_FIT),
    )?;
    Ok(FullFit {
        checkpoint: Checkpoint {
            model,
            input: Some(prepared.input),
            config_digest: Some(config.digest()),
        },
        importance: prepared.importance,
        history,
        n_synthetic: prepared.n_synthetic,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainRun {
    pub explanations: Vec<Explanation>,
    pub global: GlobalSummary,
    pub per_class: Vec<ClassSummary>,
    pub instance: InstanceExplanation,
}

fn with_raw_values(mut e: Explanation, dataset: &Dataset) -> Explanation {
    let schema = dataset.schema();
    e.raw_values = e
        .features
        .iter()
        .map(|name| {
            let f = schema.index_of(name).expect("selected feature is in the schema");
            dataset.display_cell(e.instance, f)
        })
        .collect();
    e
}

/// Shapley explanations of a trained checkpoint over rows of `dataset`.
/// The background and the explained rows are drawn with seeds derived from
/// the config seed.
pub fn explain_model(
    config: &PipelineConfig,
    checkpoint: &Checkpoint,
    dataset: &Dataset,
) -> Result<ExplainRun, PipelineError> {
    let spec = checkpoint.input.as_ref().ok_or(PipelineError::NoInputSpec)?;
    let x = transform(spec, dataset)?;
    let n = x.rows();
    if config.explain.instance >= n {
        return Err(PipelineError::InstanceOutOfRange {
            index: config.explain.instance,
            rows: n,
        });
    }
    let groups = FeatureGroups::from_encoded(&x);
    let pool: Vec<usize> = (0..n).collect();
    let background = BackgroundSet::sample(
        &x.values,
        &pool,
        config.explain.background_size.min(n),
        config.stage_seed(rng::STREAM_BACKGROUND, 0),
    )?;
    let mut pick = rng::rng_for(config.seed, &[rng::STREAM_BACKGROUND, 1]);
    let mut instances = sample(&mut pick, n, config.explain.n_instances.min(n)).into_vec();
    instances.sort_unstable();

    let method = config.shapley_method();
    let seed = config.stage_seed(rng::STREAM_PERMUTATION, 0);
    let explanations: Vec<Explanation> = explain_rows(
        &checkpoint.model,
        &x.values,
        &instances,
        &background,
        &groups,
        method,
        seed,
    )?
    .into_iter()
    .map(|e| with_raw_values(e, dataset))
    .collect();
    let global = global_summary(&explanations)?;
    let per_class = (0..N_OUTPUTS)
        .map(|c| class_summary(&explanations, c))
        .collect::<Result<Vec<_>, _>>()?;

    let i = config.explain.instance;
    let s = rng::derive_seed(seed, &[rng::STREAM_PERMUTATION, i as u64]);
    let mut instance = instance_explanation(&checkpoint.model, x.values.row(i), i, &background, &groups, method, s)?;
    instance.explanation = with_raw_values(instance.explanation, dataset);
    instance.waterfall = Waterfall::from_explanation(&instance.explanation, instance.waterfall.class);
    Ok(ExplainRun {
        explanations,
        global,
        per_class,
        instance,
    })
}

/// The model of a checkpoint paired with the rows it was built for.
pub fn model_rows(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<(SpaceNet, Matrix), PipelineError> {
    let spec = checkpoint.input.as_ref().ok_or(PipelineError::NoInputSpec)?;
    Ok((checkpoint.model.clone(), transform(spec, dataset)?.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GeneratorConfig};

    fn small_config() -> PipelineConfig {
        PipelineConfig::from_toml_str(
            r#"
            synth.n_rows = 240
            selection.top_k = 8
            selection.n_trees = 30
            model.d_model = 8
            model.ff_hidden = 16
            model.mlp_hidden = 8
            model.n_layers = 1
            train.epochs = 3
            train.batch_size = 32
            cv.k = 3
            explain.n_instances = 4
            explain.background_size = 8
            explain.n_permutations = 2
            explain.mode = "sampled"
            "#,
            &[],
        )
        .unwrap()
    }

    fn data(config: &PipelineConfig) -> Dataset {
        generate(&GeneratorConfig {
            n_rows: config.synth.n_rows,
            ..GeneratorConfig::default()
        })
        .unwrap()
        .dataset
    }

    #[test]
    fn prepare_fold_uses_train_rows_only() {
        let config = small_config();
        let ds = data(&config);
        let train: Vec<usize> = (0..120).collect();
        let p = prepare_fold(&config, &ds, &train, 0).unwrap();
        assert_eq!(p.input.standardizer.fitted_on, 120);
        assert_eq!(p.input.selected_features.len(), 8);
        assert_eq!(p.train_x.cols(), p.input.column_names.len());
        let counts = crate::data::class_counts(&p.train_y);
        assert!(counts.iter().all(|&c| c == counts[0]), "{counts:?}");
        assert_eq!(p.train_x.rows(), 120 + p.n_synthetic);
    }

    #[test]
    fn cleaning_can_be_disabled() {
        let mut config = small_config();
        let ds = data(&config);
        let (kept, report) = clean(&config, &ds).unwrap();
        assert!(kept.len() < ds.len());
        assert_eq!(report.kept, kept.len());
        config.preprocess.enabled = false;
        assert_eq!(clean(&config, &ds).unwrap().0.len(), ds.len());
    }

    #[test]
    fn cv_fit_and_explain_run() {
        let config = small_config();
        let ds = clean(&config, &data(&config)).unwrap().0;
        let cv = run_cv(&config, &ds).unwrap();
        assert_eq!(cv.runs.len(), 3);
        assert_eq!(cv.result.folds.len(), 3);
        assert!(cv.result.summary.mean > 0.0 && cv.result.summary.mean <= 1.0);
        assert!(cv.runs.iter().all(|r| r.history.val_loss.is_some()));

        let fit = fit_full(&config, &ds).unwrap();
        let text = fit.checkpoint.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        let (model, x) = model_rows(&back, &ds).unwrap();
        assert_eq!(
            model.predict_proba(&x).unwrap(),
            fit.checkpoint.model.predict_proba(&x).unwrap()
        );

        let run = explain_model(&config, &back, &ds).unwrap();
        assert_eq!(run.explanations.len(), 4);
        assert_eq!(run.global.features.len(), 8);
        assert_eq!(run.per_class.len(), 4);
        let e = &run.instance.explanation;
        let f = ds.schema().index_of(&e.features[0]).unwrap();
        assert_eq!(e.raw_values[0], ds.display_cell(0, f));
        let step = &run.instance.waterfall.steps[0];
        let g = ds.schema().index_of(&step.feature).unwrap();
        assert_eq!(step.raw_value, ds.display_cell(0, g));
        assert!(e.attribution.efficiency_gap() < 1e-9);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let config = small_config();
        let ds = data(&config);
        let p = prepare_fold(&config, &ds, &(0..100).collect::<Vec<_>>(), 0).unwrap();
        let other = generate(&GeneratorConfig {
            n_rows: 50,
            features: GeneratorConfig::default().features[..12].to_vec(),
            ..GeneratorConfig::default()
        });
        if let Ok(other) = other {
            assert!(matches!(
                transform(&p.input, &other.dataset),
                Err(PipelineError::SchemaMismatch)
            ));
        }
    }
}
