//! Tabular survey data: schemas, typed rows, CSV exchange, one-hot encoding
//! and stratified fold assignment.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: unknown category `{token}` for feature `{feature}`")]
    UnknownCategory { row: usize, feature: String, token: String },
    #[error("row {row}: non-finite value for feature `{feature}`")]
    NonFiniteValue { row: usize, feature: String },
    #[error("row {row}: missing value for `{feature}`")]
    MissingValue { row: usize, feature: String },
    #[error("row {row}: label `{value}` is not a class code 0-3")]
    LabelOutOfRange { row: usize, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("{0} labels for {1} rows")]
    LabelCount(usize, usize),
    #[error("class {class} has {count} samples, fewer than the fold count")]
    TooFewSamplesForClass { class: TravelClass, count: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const N_CLASSES: usize = 4;

/// The four travel choices, with stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TravelClass {
    NoTravel = 0,
    Moon = 1,
    Suborbital = 2,
    Orbital = 3,
}

impl TravelClass {
    pub const ALL: [TravelClass; N_CLASSES] = [
        TravelClass::NoTravel,
        TravelClass::Moon,
        TravelClass::Suborbital,
        TravelClass::Orbital,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TravelClass::NoTravel => "no_travel",
            TravelClass::Moon => "moon",
            TravelClass::Suborbital => "suborbital",
            TravelClass::Orbital => "orbital",
        }
    }
}

impl From<TravelClass> for u8 {
    fn from(c: TravelClass) -> u8 {
        c.code()
    }
}

impl TryFrom<u8> for TravelClass {
    type Error = String;
    fn try_from(code: u8) -> Result<Self, String> {
        TravelClass::from_code(code).ok_or_else(|| format!("class code {code} out of range"))
    }
}

impl fmt::Display for TravelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous)
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { categories } => Some(categories),
            FeatureKind::Continuous => None,
        }
    }

    /// Number of encoded columns this feature occupies.
    pub fn width(&self) -> usize {
        self.categories().map_or(1, <[String]>::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    label_name: String,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, label_name: impl Into<String>) -> Result<Self, DataError> {
        let label_name = label_name.into();
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(DataError::InvalidSchema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
            if let Some(cats) = f.categories() {
                if cats.len() < 2 {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical feature `{}` needs at least 2 categories",
                        f.name
                    )));
                }
                let distinct: HashSet<_> = cats.iter().collect();
                if distinct.len() != cats.len() {
                    return Err(DataError::InvalidSchema(format!("duplicate category in `{}`", f.name)));
                }
            }
        }
        if label_name.is_empty() || seen.contains(label_name.as_str()) {
            return Err(DataError::InvalidSchema(format!(
                "label name `{label_name}` is empty or collides with a feature"
            )));
        }
        Ok(Self { features, label_name })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(FeatureSpec::width).sum()
    }

    pub fn load_json(path: &Path) -> Result<Self, DataError> {
        let raw: Schema = serde_json::from_slice(&std::fs::read(path)?)?;
        Schema::new(raw.features, raw.label_name)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// A raw cell: a finite number, or the index of a declared category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Number(f64),
    Category(usize),
}

impl Cell {
    pub fn as_number(self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(v),
            Cell::Category(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<Cell>>,
    labels: Vec<TravelClass>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Cell>>, labels: Vec<TravelClass>) -> Result<Self, DataError> {
        if rows.len() != labels.len() {
            return Err(DataError::LabelCount(labels.len(), rows.len()));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DataError::RowLength {
                    row: r,
                    expected: schema.len(),
                    found: row.len(),
                });
            }
            for (spec, cell) in schema.features.iter().zip(row) {
                match (&spec.kind, cell) {
                    (FeatureKind::Continuous, Cell::Number(v)) if v.is_finite() => {}
                    (FeatureKind::Continuous, Cell::Number(_)) => {
                        return Err(DataError::NonFiniteValue {
                            row: r,
                            feature: spec.name.clone(),
                        })
                    }
                    (FeatureKind::Categorical { categories }, Cell::Category(i)) if *i < categories.len() => {}
                    (FeatureKind::Categorical { .. }, Cell::Category(i)) => {
                        return Err(DataError::UnknownCategory {
                            row: r,
                            feature: spec.name.clone(),
                            token: format!("#{i}"),
                        })
                    }
                    _ => {
                        return Err(DataError::InvalidSchema(format!(
                            "row {r}: cell kind does not match feature `{}`",
                            spec.name
                        )))
                    }
                }
            }
        }
        Ok(Self { schema, rows, labels })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn labels(&self) -> &[TravelClass] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        class_counts(&self.labels)
    }

    /// Values of one continuous feature, or `None` for categoricals.
    pub fn numeric_column(&self, feature: usize) -> Option<Vec<f64>> {
        if !self.schema.features[feature].is_continuous() {
            return None;
        }
        Some(
            self.rows
                .iter()
                .map(|r| r[feature].as_number().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Renders a cell the way it appears in CSV.
    pub fn display_cell(&self, row: usize, feature: usize) -> String {
        match (self.rows[row][feature], &self.schema.features[feature].kind) {
            (Cell::Number(v), _) => format!("{v}"),
            (Cell::Category(i), FeatureKind::Categorical { categories }) => categories[i].clone(),
            (Cell::Category(i), FeatureKind::Continuous) => format!("#{i}"),
        }
    }

    pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
        let reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        Self::from_csv_reader(reader, schema)
    }

    pub fn from_csv_str(text: &str, schema: &Schema) -> Result<Dataset, DataError> {
        let reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        Self::from_csv_reader(reader, schema)
    }

    fn from_csv_reader<R: std::io::Read>(mut reader: csv::Reader<R>, schema: &Schema) -> Result<Dataset, DataError> {
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
        let col_of = |name: &str| {
            position
                .get(name)
                .copied()
                .ok_or_else(|| DataError::MissingColumn(name.to_string()))
        };
        let feature_cols = schema
            .features
            .iter()
            .map(|f| col_of(&f.name))
            .collect::<Result<Vec<_>, _>>()?;
        let label_col = col_of(&schema.label_name)?;

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(DataError::RowLength {
                    row: r,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            let mut row = Vec::with_capacity(schema.len());
            for (spec, &c) in schema.features.iter().zip(&feature_cols) {
                let token = record[c].trim();
                if token.is_empty() {
                    return Err(DataError::MissingValue {
                        row: r,
                        feature: spec.name.clone(),
                    });
                }
                row.push(parse_cell(spec, token, r)?);
            }
            let token = record[label_col].trim();
            let label = token
                .parse::<u8>()
                .ok()
                .and_then(TravelClass::from_code)
                .ok_or_else(|| DataError::LabelOutOfRange {
                    row: r,
                    value: token.to_string(),
                })?;
            rows.push(row);
            labels.push(label);
        }
        Dataset::new(schema.clone(), rows, labels)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, DataError> {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = self.schema.feature_names();
        header.push(self.schema.label_name.clone());
        writer.write_record(&header)?;
        for (r, label) in self.labels.iter().enumerate() {
            let mut record: Vec<String> = (0..self.schema.len()).map(|f| self.display_cell(r, f)).collect();
            record.push(label.code().to_string());
            writer.write_record(&record)?;
        }
        let bytes = writer.into_inner().map_err(|e| DataError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn parse_cell(spec: &FeatureSpec, token: &str, row: usize) -> Result<Cell, DataError> {
    match &spec.kind {
        FeatureKind::Continuous => match token.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Cell::Number(v)),
            _ => Err(DataError::NonFiniteValue {
                row,
                feature: spec.name.clone(),
            }),
        },
        FeatureKind::Categorical { categories } => categories
            .iter()
            .position(|c| c == token)
            .map(Cell::Category)
            .ok_or_else(|| DataError::UnknownCategory {
                row,
                feature: spec.name.clone(),
                token: token.to_string(),
            }),
    }
}

pub fn class_counts(labels: &[TravelClass]) -> [usize; N_CLASSES] {
    let mut counts = [0; N_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

/// Source feature behind one or more encoded columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFeature {
    pub name: String,
    pub continuous: bool,
}

/// Numeric design matrix. Columns follow schema order; a categorical feature
/// becomes a one-hot block in declared category order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub values: Matrix,
    pub column_names: Vec<String>,
    /// For each column, the index into `sources` of the feature it came from.
    pub origin: Vec<usize>,
    pub sources: Vec<SourceFeature>,
}

impl EncodedMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn is_continuous_column(&self, col: usize) -> bool {
        self.sources[self.origin[col]].continuous
    }

    /// Column indices of each source feature, in source order.
    pub fn feature_columns(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.sources.len()];
        for (col, &src) in self.origin.iter().enumerate() {
            groups[src].push(col);
        }
        groups
    }

    pub fn source_names(&self) -> Vec<String> {
        self.sources.iter().map(|s| s.name.clone()).collect()
    }

    pub fn with_values(&self, values: Matrix) -> EncodedMatrix {
        assert_eq!(values.cols(), self.cols());
        EncodedMatrix {
            values,
            column_names: self.column_names.clone(),
            origin: self.origin.clone(),
            sources: self.sources.clone(),
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> EncodedMatrix {
        self.with_values(self.values.select_rows(indices))
    }

    /// Keeps only the columns of the named source features, preserving the current order.
    pub fn select_features(&self, names: &[String]) -> EncodedMatrix {
        let keep: Vec<usize> = (0..self.sources.len())
            .filter(|&s| names.contains(&self.sources[s].name))
            .collect();
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let cols: Vec<usize> = (0..self.cols())
            .filter(|c| remap.contains_key(&self.origin[*c]))
            .collect();
        EncodedMatrix {
            values: self.values.select_cols(&cols),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            origin: cols.iter().map(|&c| remap[&self.origin[c]]).collect(),
            sources: keep.iter().map(|&s| self.sources[s].clone()).collect(),
        }
    }
}

pub fn encode(dataset: &Dataset) -> EncodedMatrix {
    let schema = dataset.schema();
    let mut column_names = Vec::with_capacity(schema.encoded_width());
    let mut origin = Vec::with_capacity(schema.encoded_width());
    for (f, spec) in schema.features().iter().enumerate() {
        match spec.categories() {
            None => column_names.push(spec.name.clone()),
            Some(cats) => column_names.extend(cats.iter().map(|c| format!("{}={}", spec.name, c))),
        }
        origin.extend(std::iter::repeat_n(f, spec.width()));
    }
    let width = column_names.len();
    let mut data = Vec::with_capacity(dataset.len() * width);
    for row in dataset.rows() {
        for (spec, cell) in schema.features().iter().zip(row) {
            match *cell {
                Cell::Number(v) => data.push(v),
                Cell::Category(i) => {
                    let k = spec.width();
                    data.extend((0..k).map(|j| if j == i { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    EncodedMatrix {
        values: Matrix::new(dataset.len(), width, data),
        column_names,
        origin,
        sources: schema
            .features()
            .iter()
            .map(|f| SourceFeature {
                name: f.name.clone(),
                continuous: f.is_continuous(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    /// `counts[fold][class]`.
    pub fn class_counts(&self, labels: &[TravelClass]) -> Vec<[usize; N_CLASSES]> {
        let mut counts = vec![[0; N_CLASSES]; self.k];
        for (&f, l) in self.assignments.iter().zip(labels) {
            counts[f][l.index()] += 1;
        }
        counts
    }
}

/// Shuffles each class with a seeded RNG and deals its members round-robin
/// over the folds. The dealing offset carries over between classes so total
/// fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[TravelClass], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidFoldCount(k));
    }
    let counts = class_counts(labels);
    for class in TravelClass::ALL {
        let count = counts[class.index()];
        if count < k {
            return Err(DataError::TooFewSamplesForClass { class, count });
        }
    }
    let mut rng = rng::rng_for(seed, &[rng::STREAM_FOLDS]);
    let mut assignments = vec![0; labels.len()];
    let mut offset = 0;
    for class in TravelClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignments[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::continuous("age"),
                FeatureSpec::categorical("gender", ["male", "female"]),
            ],
            "travel_class",
        )
        .unwrap()
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        let dup = Schema::new(vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("a")], "y");
        assert!(matches!(dup, Err(DataError::InvalidSchema(_))));
        let one_cat = Schema::new(vec![FeatureSpec::categorical("g", ["x"])], "y");
        assert!(matches!(one_cat, Err(DataError::InvalidSchema(_))));
        let clash = Schema::new(vec![FeatureSpec::continuous("y")], "y");
        assert!(matches!(clash, Err(DataError::InvalidSchema(_))));
    }

    #[test]
    fn loads_three_rows_in_any_column_order() {
        let text = "travel_class,gender,age\n0,male,30\n3,female,41.5\n2,male,65\n";
        let ds = Dataset::from_csv_str(text, &toy_schema()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.rows()[1], vec![Cell::Number(41.5), Cell::Category(1)]);
        assert_eq!(
            ds.labels(),
            &[TravelClass::NoTravel, TravelClass::Orbital, TravelClass::Suborbital]
        );
    }

    #[test]
    fn load_errors() {
        let schema = toy_schema();
        let unknown = Dataset::from_csv_str("age,gender,travel_class\n30,Mars,0\n", &schema);
        assert!(matches!(unknown, Err(DataError::UnknownCategory { row: 0, ref token, .. }) if token == "Mars"));
        let missing = Dataset::from_csv_str("age,travel_class\n30,0\n", &schema);
        assert!(matches!(missing, Err(DataError::MissingColumn(ref c)) if c == "gender"));
        let nan = Dataset::from_csv_str("age,gender,travel_class\nNaN,male,0\n", &schema);
        assert!(matches!(nan, Err(DataError::NonFiniteValue { .. })));
        let inf = Dataset::from_csv_str("age,gender,travel_class\ninf,male,0\n", &schema);
        assert!(matches!(inf, Err(DataError::NonFiniteValue { .. })));
        let label = Dataset::from_csv_str("age,gender,travel_class\n30,male,4\n", &schema);
        assert!(matches!(label, Err(DataError::LabelOutOfRange { .. })));
        let blank = Dataset::from_csv_str("age,gender,travel_class\n,male,1\n", &schema);
        assert!(matches!(blank, Err(DataError::MissingValue { .. })));
    }

    #[test]
    fn encode_counts_and_one_hot() {
        let ds = Dataset::from_csv_str("age,gender,travel_class\n30,male,0\n40,female,1\n", &toy_schema()).unwrap();
        let enc = encode(&ds);
        assert_eq!(enc.cols(), 3);
        assert_eq!(enc.column_names, vec!["age", "gender=male", "gender=female"]);
        assert_eq!(enc.values.row(0), &[30.0, 1.0, 0.0]);
        assert_eq!(enc.values.row(1), &[40.0, 0.0, 1.0]);
        assert_eq!(enc.feature_columns(), vec![vec![0], vec![1, 2]]);
        let sel = enc.select_features(&["gender".to_string()]);
        assert_eq!(sel.cols(), 2);
        assert_eq!(sel.origin, vec![0, 0]);
    }

    #[test]
    fn kfold_divisible_case_has_one_per_class_per_fold() {
        let labels: Vec<TravelClass> = (0..20).map(|i| TravelClass::ALL[i % 4]).collect();
        let plan = stratified_kfold(&labels, 5, 11).unwrap();
        for counts in plan.class_counts(&labels) {
            assert_eq!(counts, [1, 1, 1, 1]);
        }
        assert_eq!(plan, stratified_kfold(&labels, 5, 11).unwrap());
    }

    #[test]
    fn kfold_rejects_small_classes() {
        let mut labels = vec![TravelClass::NoTravel; 10];
        labels.extend([TravelClass::Moon, TravelClass::Suborbital, TravelClass::Orbital].repeat(5));
        labels[10] = TravelClass::NoTravel;
        let err = stratified_kfold(&labels, 5, 0).unwrap_err();
        assert!(matches!(
            err,
            DataError::TooFewSamplesForClass {
                class: TravelClass::Moon,
                count: 4
            }
        ));
        assert!(matches!(
            stratified_kfold(&labels, 1, 0),
            Err(DataError::InvalidFoldCount(1))
        ));
    }

    #[test]
    fn kfold_survey_sized_counts_within_one() {
        // 1860 rows at the survey's class shares
        let counts = [435, 493, 523, 409];
        assert_eq!(counts.iter().sum::<usize>(), 1860);
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(TravelClass::ALL[c], n));
        }
        let plan = stratified_kfold(&labels, 5, 2024).unwrap();
        for fold in plan.class_counts(&labels) {
            for c in 0..4 {
                let expected = counts[c] as f64 / 5.0;
                assert!((fold[c] as f64 - expected).abs() <= 1.0, "{fold:?}");
            }
        }
    }
}
