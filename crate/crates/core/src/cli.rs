//! The pipeline stages as file-to-file commands. Every command reads its
//! inputs from and writes its artifacts under `paths.out_dir`:
//!
//! ```text
//! survey.csv  schema.json  ground_truth.json          synth
//! clean/      survey_clean.csv  cleaning_report.json  clean
//! train/      checkpoint.json  history.*  importance.*  retest.json
//! eval/       comparison.*  selected/  all_features/
//! explain/    global/  class/  instance/
//! report.md                                            report
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::data::{DataError, Dataset, Schema, TravelClass, N_CLASSES};
use crate::explain::{ClassSummary, GlobalSummary, InstanceExplanation};
use crate::forest::ImportanceReport;
use crate::metrics::{roc_curve, test_retest, CvSummary, MetricsError, RetestReport};
use crate::pipeline::{self, CvRun, FoldRun, PipelineError};
use crate::preprocess::PreprocessError;
use crate::spacenet::{Checkpoint, SpaceNetError, TrainHistory};
use crate::svg;
use crate::synth::{generate, GroundTruth, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Clean,
    Train,
    Eval,
    Explain,
    Report,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

macro_rules! via_pipeline {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(e.into())
            }
        }
    )*};
}
via_pipeline!(
    ConfigError,
    DataError,
    SpaceNetError,
    MetricsError,
    SynthError,
    PreprocessError
);

impl CliError {
    /// Short machine-readable name of the failure.
    pub fn kind(&self) -> String {
        match self {
            CliError::Io { .. } => "Io".into(),
            CliError::Json { .. } => "Json".into(),
            CliError::Pipeline(p) => match p {
                PipelineError::Config(ConfigError::Parse(_)) => "ConfigParse".into(),
                PipelineError::Config(ConfigError::BadOverride(_)) => "BadOverride".into(),
                PipelineError::Config(_) => "InvalidConfig".into(),
                PipelineError::Synth(SynthError::InvalidConfig(_)) => "InvalidConfig".into(),
                PipelineError::Preprocess(PreprocessError::UnknownColumn(_)) => "UnknownColumn".into(),
                PipelineError::Preprocess(PreprocessError::NotContinuous(_)) => "NotContinuous".into(),
                PipelineError::MissingArtifact(_) => "MissingArtifact".into(),
                PipelineError::SchemaMismatch => "SchemaMismatch".into(),
                PipelineError::NoInputSpec => "NoInputSpec".into(),
                PipelineError::InstanceOutOfRange { .. } => "InstanceOutOfRange".into(),
                PipelineError::Data(_) | PipelineError::Synth(SynthError::Data(_)) => "DataError".into(),
                PipelineError::Model(SpaceNetError::DivergenceDetected { .. }) => "DivergenceDetected".into(),
                PipelineError::Model(SpaceNetError::NonFiniteActivation) => "NonFiniteActivation".into(),
                PipelineError::Model(_) => "ModelError".into(),
                PipelineError::Metrics(_) => "MetricsError".into(),
                PipelineError::Forest(_) => "ForestError".into(),
                PipelineError::Augment(_) => "AugmentError".into(),
                PipelineError::Explain(_) => "ExplainError".into(),
                PipelineError::Preprocess(_) => "PreprocessError".into(),
            },
        }
    }

    /// 1 for input and configuration problems, 2 for runtime and numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(
                PipelineError::Config(_)
                | PipelineError::Synth(_)
                | PipelineError::Data(_)
                | PipelineError::Preprocess(PreprocessError::UnknownColumn(_) | PreprocessError::NotContinuous(_))
                | PipelineError::MissingArtifact(_)
                | PipelineError::SchemaMismatch
                | PipelineError::NoInputSpec
                | PipelineError::InstanceOutOfRange { .. },
            ) => 1,
            _ => 2,
        }
    }

    /// One-line JSON record for stderr.
    pub fn error_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

/// Artifact locations under an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn survey(&self) -> PathBuf {
        self.root.join("survey.csv")
    }
    pub fn schema(&self) -> PathBuf {
        self.root.join("schema.json")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.json")
    }
    pub fn cleaned(&self) -> PathBuf {
        self.root.join("clean/survey_clean.csv")
    }
    pub fn cleaning_report(&self) -> PathBuf {
        self.root.join("clean/cleaning_report.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("train/checkpoint.json")
    }
    pub fn train_dir(&self) -> PathBuf {
        self.root.join("train")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn comparison(&self) -> PathBuf {
        self.root.join("eval/comparison.json")
    }
    pub fn explain_dir(&self) -> PathBuf {
        self.root.join("explain")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.md")
    }
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    config_digest: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn write_json<T: Serialize>(
    path: &Path,
    config: &PipelineConfig,
    body: &T,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let digest = config.digest();
    let stamped = Stamped {
        config_digest: &digest,
        body,
    };
    let mut text = serde_json::to_string_pretty(&stamped).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text, written)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = require(path).and_then(|p| fs::read_to_string(&p).map_err(io_err(path)))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn require(path: &Path) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(PipelineError::MissingArtifact(path.to_path_buf()).into())
    }
}

fn load_dataset(csv: &Path, schema: &Path) -> Result<Dataset, CliError> {
    let schema = Schema::load_json(&require(schema)?)?;
    Ok(Dataset::load_csv(&require(csv)?, &schema)?)
}

fn load_cleaned(config: &PipelineConfig) -> Result<Dataset, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    load_dataset(&layout.cleaned(), &config.paths.schema())
}

/// Runs one command and returns the files it wrote.
pub fn run(command: Command, config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Synth => cmd_synth(config),
        Command::Clean => cmd_clean(config),
        Command::Train => cmd_train(config),
        Command::Eval => cmd_eval(config),
        Command::Explain => cmd_explain(config),
        Command::Report => cmd_report(config),
    }
}

/// Sizes the global worker pool from `DEMANDSCOPE_THREADS`, then the config.
pub fn init_threads(config: &PipelineConfig) {
    let threads = std::env::var("DEMANDSCOPE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(config.threads);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

pub fn cmd_synth(config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    let generated = generate(&config.generator_config())?;
    let mut written = Vec::new();
    write_text(&layout.survey(), &generated.dataset.to_csv_string()?, &mut written)?;
    let schema = serde_json::to_string_pretty(generated.dataset.schema()).expect("schema serializes") + "\n";
    write_text(&layout.schema(), &schema, &mut written)?;
    write_json(&layout.ground_truth(), config, &generated.truth, &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanSummary {
    pub input_rows: usize,
    pub report: crate::preprocess::CleaningReport,
    /// Injected outlier rows from the ground-truth log, when one exists.
    pub injected_rows: Option<Vec<usize>>,
    pub injected_flagged: Option<usize>,
}

pub fn cmd_clean(config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    let input = config.paths.input();
    let dataset = load_dataset(&input, &config.paths.schema())?;
    let (cleaned, report) = pipeline::clean(config, &dataset)?;
    let truth: Option<GroundTruth> = if config.paths.input.is_none() && layout.ground_truth().exists() {
        Some(read_json(&layout.ground_truth())?)
    } else {
        None
    };
    let injected_rows = truth.map(|t| t.outlier_rows());
    let injected_flagged = injected_rows
        .as_ref()
        .map(|rows| rows.iter().filter(|r| report.dropped.binary_search(r).is_ok()).count());
    let summary = CleanSummary {
        input_rows: dataset.len(),
        report,
        injected_rows,
        injected_flagged,
    };
    let mut written = Vec::new();
    write_text(&layout.cleaned(), &cleaned.to_csv_string()?, &mut written)?;
    write_json(&layout.cleaning_report(), config, &summary, &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceExport {
    pub top_k: usize,
    pub selected: Vec<String>,
    pub report: ImportanceReport,
}

fn history_csv(h: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    out.push_str(&format!("0,{},\n", h.initial_loss));
    for (e, l) in h.train_loss.iter().enumerate() {
        let v = h.val_loss.as_ref().map(|v| v[e].to_string()).unwrap_or_default();
        out.push_str(&format!("{},{l},{v}\n", e + 1));
    }
    out
}

fn loss_svg(title: &str, h: &TrainHistory) -> String {
    let points = |v: &[f64]| v.iter().enumerate().map(|(e, &l)| ((e + 1) as f64, l)).collect();
    let mut series = vec![svg::Series {
        name: "train".into(),
        points: points(&h.train_loss),
    }];
    if let Some(v) = &h.val_loss {
        series.push(svg::Series {
            name: "held out".into(),
            points: points(v),
        });
    }
    svg::line_chart(title, &series, "epoch", "cross-entropy", false)
}

fn importance_svg(report: &ImportanceReport, top: usize) -> String {
    let idx: Vec<usize> = report.ranking.iter().take(top).copied().collect();
    let labels: Vec<String> = idx.iter().map(|&i| report.features[i].clone()).collect();
    let values: Vec<f64> = idx.iter().map(|&i| report.scores[i]).collect();
    svg::bar_chart(
        "Random forest importance",
        &labels,
        &values,
        "normalized impurity decrease",
    )
}

pub fn cmd_train(config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    let dataset = load_cleaned(config)?;
    let fit = pipeline::fit_full(config, &dataset)?;
    let dir = layout.train_dir();
    let mut written = Vec::new();
    let ckpt_path = layout.checkpoint();
    write_text(&ckpt_path, &fit.checkpoint.to_json()?, &mut written)?;
    write_json(&dir.join("history.json"), config, &fit.history, &mut written)?;
    write_text(&dir.join("history.csv"), &history_csv(&fit.history), &mut written)?;
    write_text(
        &dir.join("loss.svg"),
        &loss_svg("Training loss", &fit.history),
        &mut written,
    )?;

    let selected = fit
        .checkpoint
        .input
        .as_ref()
        .expect("fit sets input")
        .selected_features
        .clone();
    let export = ImportanceExport {
        top_k: config.selection.top_k,
        selected,
        report: fit.importance.clone(),
    };
    write_json(&dir.join("importance.json"), config, &export, &mut written)?;
    write_text(&dir.join("importance.csv"), &fit.importance.to_csv(), &mut written)?;
    write_text(
        &dir.join("importance.svg"),
        &importance_svg(&fit.importance, config.selection.top_k),
        &mut written,
    )?;

    let reloaded = Checkpoint::load(&ckpt_path)?;
    let (_, rows) = pipeline::model_rows(&reloaded, &dataset)?;
    let reference = fit.checkpoint.model.predict_proba(&rows)?;
    let retest: RetestReport = test_retest(&reloaded, &rows, 3, Some(&reference))?;
    write_json(&dir.join("retest.json"), config, &retest, &mut written)?;
    Ok(written)
}

/// One cross-validated feature-set run as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub name: String,
    pub top_k: usize,
    pub k: usize,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub per_class_auc: BTreeMap<String, f64>,
    pub averaging: String,
}

impl EvalSummary {
    fn new(name: &str, top_k: usize, s: &CvSummary) -> Self {
        Self {
            name: name.into(),
            top_k,
            k: s.k,
            per_fold: s.per_fold.clone(),
            mean: s.mean,
            std: s.std,
            per_class_auc: TravelClass::ALL
                .iter()
                .map(|c| (c.name().to_string(), s.per_class_auc[c.index()]))
                .collect(),
            averaging: "macro one-vs-rest".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldsExport {
    pub folds: Vec<FoldRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<EvalSummary>,
}

/// `0.82 ± 0.088`: mean to two decimals, spread to three.
pub fn mean_pm_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.3}")
}

fn write_cv_run(
    dir: &Path,
    config: &PipelineConfig,
    summary: &EvalSummary,
    cv: &CvRun,
    labels: &[TravelClass],
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    write_json(&dir.join("summary.json"), config, summary, written)?;
    let folds = FoldsExport { folds: cv.runs.clone() };
    write_json(&dir.join("folds.json"), config, &folds, written)?;
    let mut pooled: Vec<Vec<(f64, bool)>> = vec![Vec::new(); N_CLASSES];
    for fold in &cv.result.folds {
        let truth: Vec<TravelClass> = fold.test_indices.iter().map(|&i| labels[i]).collect();
        let mut csv = String::from("class,threshold,fpr,tpr,tp,fp,tn,fn\n");
        for c in TravelClass::ALL {
            let scores = fold.probs.column(c.index());
            let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            let curve = roc_curve(&scores, &positive)?;
            for line in curve.to_csv().lines().skip(1) {
                csv.push_str(&format!("{},{line}\n", c.name()));
            }
            pooled[c.index()].extend(scores.into_iter().zip(positive));
        }
        write_text(&dir.join(format!("roc_fold{}.csv", fold.fold + 1)), &csv, written)?;
    }
    let series = TravelClass::ALL
        .iter()
        .map(|c| {
            let (s, l): (Vec<f64>, Vec<bool>) = pooled[c.index()].iter().copied().unzip();
            let curve = roc_curve(&s, &l)?;
            Ok(svg::Series {
                name: format!("{} ({:.3})", c.name(), summary.per_class_auc[c.name()]),
                points: curve.points(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let title = format!(
        "ROC, {} (macro AUC {})",
        summary.name,
        mean_pm_std(summary.mean, summary.std)
    );
    write_text(
        &dir.join("roc.svg"),
        &svg::line_chart(&title, &series, "false positive rate", "true positive rate", true),
        written,
    )?;
    Ok(())
}

pub fn cmd_eval(config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    let dataset = load_cleaned(config)?;
    let mut all = config.clone();
    all.selection.top_k = dataset.schema().len();
    let runs = [("selected", config), ("all_features", &all)];
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for (name, c) in runs {
        let cv = pipeline::run_cv(c, &dataset)?;
        let summary = EvalSummary::new(name, c.selection.top_k, &cv.result.summary);
        write_cv_run(
            &layout.eval_dir().join(name),
            config,
            &summary,
            &cv,
            dataset.labels(),
            &mut written,
        )?;
        summaries.push(summary);
    }
    let header: Vec<String> = TravelClass::ALL.iter().map(|c| format!("auc_{}", c.name())).collect();
    let mut csv = format!("run,top_k,mean_auc,std_auc,{}\n", header.join(","));
    for s in &summaries {
        csv.push_str(&format!("{},{},{},{}", s.name, s.top_k, s.mean, s.std));
        for c in TravelClass::ALL {
            csv.push_str(&format!(",{}", s.per_class_auc[c.name()]));
        }
        csv.push('\n');
    }
    write_text(&layout.eval_dir().join("comparison.csv"), &csv, &mut written)?;
    write_json(
        &layout.comparison(),
        config,
        &Comparison { runs: summaries },
        &mut written,
    )?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalExport {
    pub ranking: Vec<String>,
    pub summary: GlobalSummary,
    pub explanations: Vec<crate::explain::ExplanationExport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceExport {
    pub class: String,
    pub description: String,
    pub export: crate::explain::ExplanationExport,
    pub detail: InstanceExplanation,
}

fn class_svg(summary: &ClassSummary) -> String {
    let labels: Vec<String> = summary.features.iter().map(|f| f.feature.clone()).collect();
    let rows: Vec<Vec<svg::SwarmPoint>> = summary
        .features
        .iter()
        .map(|f| {
            f.points
                .iter()
                .map(|p| svg::SwarmPoint {
                    x: p.phi,
                    color: p.color,
                })
                .collect()
        })
        .collect();
    let name = crate::explain::class_label(summary.class);
    svg::beeswarm(
        &format!("SHAP values, class {name}"),
        &labels,
        &rows,
        "phi (probability)",
    )
}

pub fn cmd_explain(config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    let dataset = load_cleaned(config)?;
    let checkpoint = Checkpoint::load(&require(&layout.checkpoint())?)?;
    let run = pipeline::explain_model(config, &checkpoint, &dataset)?;
    let dir = layout.explain_dir();
    let mut written = Vec::new();

    let g = &run.global;
    let ranking: Vec<String> = g.ranked_names().into_iter().map(String::from).collect();
    let global = GlobalExport {
        ranking: ranking.clone(),
        summary: g.clone(),
        explanations: run.explanations.iter().map(|e| e.to_export()).collect(),
    };
    write_json(&dir.join("global/summary.json"), config, &global, &mut written)?;
    write_text(&dir.join("global/summary.csv"), &g.to_csv(), &mut written)?;
    let totals: Vec<f64> = g.ordering.iter().map(|&f| g.total[f]).collect();
    write_text(
        &dir.join("global/summary.svg"),
        &svg::bar_chart(
            "Mean |SHAP| over classes",
            &ranking,
            &totals,
            "mean |phi| summed over classes",
        ),
        &mut written,
    )?;

    for summary in &run.per_class {
        let name = crate::explain::class_label(summary.class);
        write_json(&dir.join(format!("class/{name}.json")), config, summary, &mut written)?;
        write_text(&dir.join(format!("class/{name}.csv")), &summary.to_csv(), &mut written)?;
        write_text(
            &dir.join(format!("class/{name}.svg")),
            &class_svg(summary),
            &mut written,
        )?;
    }

    let w = &run.instance.waterfall;
    let export = InstanceExport {
        class: crate::explain::class_label(w.class),
        description: w.describe(5),
        export: run.instance.explanation.to_export(),
        detail: run.instance.clone(),
    };
    write_json(&dir.join("instance/instance.json"), config, &export, &mut written)?;
    write_text(&dir.join("instance/waterfall.csv"), &w.to_csv(), &mut written)?;
    let steps: Vec<(String, f64)> = w
        .steps
        .iter()
        .map(|s| {
            (
                format!("{} = {}", s.feature, pretty_value(&s.raw_value)),
                s.contribution,
            )
        })
        .collect();
    let title = format!(
        "Row {}: P({}) = {:.3}",
        run.instance.explanation.instance, export.class, w.prediction
    );
    write_text(
        &dir.join("instance/waterfall.svg"),
        &svg::waterfall(&title, w.base, &steps, "probability"),
        &mut written,
    )?;
    Ok(written)
}

/// Renders a CSV cell for prose: large numbers rounded with thousands
/// separators, small ones to at most two decimals, text untouched.
pub fn pretty_value(raw: &str) -> String {
    let Ok(v) = raw.parse::<f64>() else {
        return raw.to_string();
    };
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        let digits = format!("{:.0}", v.abs());
        let mut grouped = String::new();
        for (i, ch) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i) % 3 == 0 {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        if v < 0.0 {
            grouped.insert(0, '-');
        }
        grouped
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Deserialize)]
struct DigestOnly {
    config_digest: String,
}

pub fn cmd_report(config: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::new(&config.paths.out_dir);
    let comparison: Comparison = read_json(&layout.comparison())?;
    let eval_digest: DigestOnly = read_json(&layout.comparison())?;
    let mut md = String::from("# Travel demand model report\n\n");
    md.push_str(&format!("Config digest: `{}`\n\n", eval_digest.config_digest));

    md.push_str("## Cross-validated ROC AUC\n\n");
    md.push_str("AUC is the macro (unweighted) mean of the four one-vs-rest class AUCs; ");
    md.push_str("spread is the population standard deviation over folds.\n\n");
    md.push_str("| run | features | AUC | ");
    let classes: Vec<&str> = TravelClass::ALL.iter().map(|c| c.name()).collect();
    md.push_str(&classes.join(" | "));
    md.push_str(" |\n|---|---|---|");
    md.push_str(&"---|".repeat(classes.len()));
    md.push('\n');
    for r in &comparison.runs {
        md.push_str(&format!(
            "| {} | {} | {} |",
            r.name,
            r.top_k,
            mean_pm_std(r.mean, r.std)
        ));
        for c in &classes {
            md.push_str(&format!(
                " {:.3} |",
                r.per_class_auc.get(*c).copied().unwrap_or(f64::NAN)
            ));
        }
        md.push('\n');
    }
    md.push_str("\nPer fold:\n\n");
    for r in &comparison.runs {
        let folds: Vec<String> = r.per_fold.iter().map(|v| format!("{v:.3}")).collect();
        md.push_str(&format!("- {}: {}\n", r.name, folds.join(", ")));
    }

    let importance_path = layout.train_dir().join("importance.json");
    let (selected, source) = if importance_path.exists() {
        let imp: ImportanceExport = read_json(&importance_path)?;
        (imp.selected, "full-data fit")
    } else {
        let folds: FoldsExport = read_json(&layout.eval_dir().join("selected/folds.json"))?;
        (folds.folds[0].selected_features.clone(), "fold 1")
    };
    md.push_str(&format!("\n## Selected features ({source})\n\n"));
    for (i, f) in selected.iter().enumerate() {
        md.push_str(&format!("{}. {f}\n", i + 1));
    }

    let global_path = layout.explain_dir().join("global/summary.json");
    if global_path.exists() {
        let global: GlobalExport = read_json(&global_path)?;
        md.push_str(&format!(
            "\n## Global explanation\n\nMean |SHAP| over {} rows, summed over classes:\n\n",
            global.summary.n_explanations
        ));
        md.push_str("| rank | feature | mean abs phi |\n|---|---|---|\n");
        for (r, &f) in global.summary.ordering.iter().enumerate().take(10) {
            md.push_str(&format!(
                "| {} | {} | {:.4} |\n",
                r + 1,
                global.summary.features[f],
                global.summary.total[f]
            ));
        }
        md.push_str("\n## Per-class explanation\n\n");
        for c in TravelClass::ALL {
            let path = layout.explain_dir().join(format!("class/{}.json", c.name()));
            let summary: ClassSummary = read_json(&path)?;
            let top: Vec<String> = summary.features.iter().take(3).map(|f| f.feature.clone()).collect();
            md.push_str(&format!("- {}: {}\n", c.name(), top.join(", ")));
        }
        let instance: InstanceExport = read_json(&layout.explain_dir().join("instance/instance.json"))?;
        let w = &instance.detail.waterfall;
        let e = &instance.detail.explanation;
        let reading: Vec<String> = w
            .steps
            .iter()
            .take(5)
            .map(|s| {
                let shown = format!("{} = {}", s.feature, pretty_value(&s.raw_value));
                let f = e.features.iter().position(|n| *n == s.feature);
                match (s.raw_value.parse::<f64>(), f) {
                    (Ok(_), Some(f)) => format!("{shown} (normalized {:.2})", e.values[f]),
                    _ => shown,
                }
            })
            .collect();
        md.push_str(&format!(
            "\n## Instance explanation\n\nRow {}: predicted {} with probability {:.3} (base {:.3}). ",
            instance.detail.explanation.instance, instance.class, w.prediction, w.base
        ));
        md.push_str(&format!("Largest contributions: {}.\n", reading.join(", ")));
    } else {
        md.push_str("\n## Explanations\n\nNot yet produced; run `explain`.\n");
    }
    let mut written = Vec::new();
    write_text(&layout.report(), &md, &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(mean_pm_std(0.8213, 0.08812), "0.82 ± 0.088");
        assert_eq!(pretty_value("65547.28"), "65,547");
        assert_eq!(pretty_value("65"), "65");
        assert_eq!(pretty_value("7.5"), "7.5");
        assert_eq!(pretty_value("-1234567"), "-1,234,567");
        assert_eq!(pretty_value("male"), "male");
    }

    #[test]
    fn exit_codes() {
        let missing = CliError::from(PipelineError::MissingArtifact("x".into()));
        assert_eq!(missing.exit_code(), 1);
        assert_eq!(missing.kind(), "MissingArtifact");
        let unknown = CliError::from(PreprocessError::UnknownColumn("wingspan".into()));
        assert_eq!(unknown.exit_code(), 1);
        let div = CliError::from(SpaceNetError::DivergenceDetected { epoch: 1, batch: 0 });
        assert_eq!(div.exit_code(), 2);
        let line: serde_json::Value = serde_json::from_str(&div.error_line()).unwrap();
        assert_eq!(line["error"], "DivergenceDetected");
        assert_eq!(line["exit_code"], 2);
    }
}
