//! Tabular datasets with mixed categorical/numeric features.
//!
//! Data enters through a CSV file plus a JSON schema sidecar that declares
//! feature kinds, the target column, and the positive label. Categorical
//! values are interned as indices into the per-feature category list;
//! numeric values are finite doubles. Datasets are immutable after load and
//! safe to share read-only across workers.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("schema file {path}: {message}")]
    Schema { path: String, message: String },
    #[error("column '{0}' declared in schema but missing from CSV header")]
    MissingColumn(String),
    #[error("duplicate feature name '{0}'")]
    DuplicateFeature(String),
    #[error("row {row}: feature '{feature}' expected a number, got '{value}'")]
    NonNumeric {
        row: usize,
        feature: String,
        value: String,
    },
    #[error("row {row}: feature '{feature}' has non-finite value {value}")]
    NonFinite {
        row: usize,
        feature: String,
        value: f64,
    },
    #[error("row {row}: feature '{feature}' value '{value}' not in declared categories")]
    UnseenCategory {
        row: usize,
        feature: String,
        value: String,
    },
    #[error("row {row}: missing value for '{feature}'")]
    MissingValue { row: usize, feature: String },
    #[error("target column has {0} distinct values, expected exactly 2")]
    NonBinaryTarget(usize),
    #[error("positive label '{0}' never appears in the target column")]
    PositiveLabelUnobserved(String),
    #[error("dataset has {0} instances, need at least 2")]
    TooFewInstances(usize),
    #[error("cannot split {n} instances with test_min {test_min}")]
    SplitTooSmall { n: usize, test_min: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

/// One column of the feature universe `F_D`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    /// Category tokens in canonical order; empty for numeric features.
    pub categories: Vec<String>,
    /// 0-based position within the schema.
    pub index: usize,
}

/// Dataset-level metadata shared by train/test splits.
#[derive(Debug, Clone)]
pub struct Schema {
    pub dataset_name: String,
    pub target: String,
    pub positive_label: String,
    pub negative_label: String,
    pub features: Vec<FeatureSchema>,
}

impl Schema {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// A single cell: a category id (index into the feature's category list) or
/// a finite double.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue {
    Cat(u32),
    Num(f64),
}

impl FeatureValue {
    pub fn as_num(&self) -> f64 {
        match self {
            FeatureValue::Num(v) => *v,
            FeatureValue::Cat(_) => panic!("categorical value used as numeric"),
        }
    }

    pub fn as_cat(&self) -> u32 {
        match self {
            FeatureValue::Cat(c) => *c,
            FeatureValue::Num(_) => panic!("numeric value used as categorical"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Opaque identifier; the loader uses the 0-based CSV row index.
    pub id: String,
    /// Values aligned to schema order.
    pub values: Vec<FeatureValue>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub instances: Vec<Instance>,
    /// true = positive label.
    pub labels: Vec<bool>,
}

impl Dataset {
    pub fn name(&self) -> &str {
        &self.schema.dataset_name
    }

    pub fn n_features(&self) -> usize {
        self.schema.features.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Resolve a value to its display token (category string or shortest
    /// round-trip decimal).
    pub fn display_value(&self, feature: usize, value: &FeatureValue) -> String {
        match value {
            FeatureValue::Cat(c) => self.schema.features[feature].categories[*c as usize].clone(),
            FeatureValue::Num(v) => format!("{v}"),
        }
    }
}

/// Train/test split parameters.
///
/// The test partition takes `max(ceil(test_fraction * n), test_min)`
/// instances, so small datasets still yield a usable test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub test_min: usize,
    pub explanandum_sample: usize,
    pub seed: u64,
    /// Preserve class proportions in the test set. Off by default.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            test_min: 200,
            explanandum_sample: 200,
            seed: 0,
            stratified: false,
        }
    }
}

#[derive(Deserialize)]
struct SidecarFile {
    name: String,
    target: String,
    positive_label: String,
    features: Vec<SidecarFeature>,
}

#[derive(Deserialize)]
struct SidecarFeature {
    name: String,
    kind: FeatureKind,
    #[serde(default)]
    categories: Option<Vec<String>>,
}

/// Load a dataset from a CSV file and its JSON schema sidecar.
///
/// The CSV must have a header row containing every schema feature and the
/// target column; extra columns are ignored. Declared category lists win
/// over observed order; with no declaration, categories are interned in
/// first-appearance order. Missing values are rejected.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<Dataset, DataError> {
    let sidecar_file = File::open(schema_path).map_err(|e| DataError::Io {
        path: schema_path.display().to_string(),
        source: e,
    })?;
    let sidecar: SidecarFile =
        serde_json::from_reader(sidecar_file).map_err(|e| DataError::Schema {
            path: schema_path.display().to_string(),
            message: e.to_string(),
        })?;

    let mut seen = BTreeSet::new();
    for f in &sidecar.features {
        if !seen.insert(f.name.clone()) {
            return Err(DataError::DuplicateFeature(f.name.clone()));
        }
    }
    if sidecar.features.is_empty() {
        return Err(DataError::Schema {
            path: schema_path.display().to_string(),
            message: "schema declares no features".into(),
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)
        .map_err(|e| DataError::Csv {
            path: csv_path.display().to_string(),
            source: e,
        })?;
    let header = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: csv_path.display().to_string(),
            source: e,
        })?
        .clone();

    let col_of = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    let feature_cols: Vec<usize> = sidecar
        .features
        .iter()
        .map(|f| col_of(&f.name))
        .collect::<Result<_, _>>()?;
    let target_col = col_of(&sidecar.target)?;

    let declared: Vec<Option<Vec<String>>> =
        sidecar.features.iter().map(|f| f.categories.clone()).collect();
    let mut categories: Vec<Vec<String>> = declared
        .iter()
        .map(|d| d.clone().unwrap_or_default())
        .collect();

    let mut instances = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv {
            path: csv_path.display().to_string(),
            source: e,
        })?;
        let mut values = Vec::with_capacity(sidecar.features.len());
        for (fi, feat) in sidecar.features.iter().enumerate() {
            let raw = record.get(feature_cols[fi]).unwrap_or("");
            if raw.is_empty() {
                return Err(DataError::MissingValue {
                    row: row_idx,
                    feature: feat.name.clone(),
                });
            }
            match feat.kind {
                FeatureKind::Numeric => {
                    let v: f64 = raw.trim().parse().map_err(|_| DataError::NonNumeric {
                        row: row_idx,
                        feature: feat.name.clone(),
                        value: raw.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::NonFinite {
                            row: row_idx,
                            feature: feat.name.clone(),
                            value: v,
                        });
                    }
                    values.push(FeatureValue::Num(v));
                }
                FeatureKind::Categorical => {
                    let pos = categories[fi].iter().position(|c| c == raw);
                    let id = match pos {
                        Some(p) => p,
                        None => {
                            if declared[fi].is_some() {
                                return Err(DataError::UnseenCategory {
                                    row: row_idx,
                                    feature: feat.name.clone(),
                                    value: raw.to_string(),
                                });
                            }
                            categories[fi].push(raw.to_string());
                            categories[fi].len() - 1
                        }
                    };
                    values.push(FeatureValue::Cat(id as u32));
                }
            }
        }
        let raw_target = record.get(target_col).unwrap_or("");
        if raw_target.is_empty() {
            return Err(DataError::MissingValue {
                row: row_idx,
                feature: sidecar.target.clone(),
            });
        }
        raw_labels.push(raw_target.to_string());
        instances.push(Instance {
            id: row_idx.to_string(),
            values,
        });
    }

    if instances.len() < 2 {
        return Err(DataError::TooFewInstances(instances.len()));
    }

    let distinct: BTreeSet<&String> = raw_labels.iter().collect();
    if distinct.len() != 2 {
        return Err(DataError::NonBinaryTarget(distinct.len()));
    }
    if !distinct.contains(&sidecar.positive_label) {
        return Err(DataError::PositiveLabelUnobserved(
            sidecar.positive_label.clone(),
        ));
    }
    let negative_label = distinct
        .into_iter()
        .find(|l| **l != sidecar.positive_label)
        .expect("two distinct labels")
        .clone();
    let labels: Vec<bool> = raw_labels
        .iter()
        .map(|l| *l == sidecar.positive_label)
        .collect();

    let features: Vec<FeatureSchema> = sidecar
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| FeatureSchema {
            name: f.name.clone(),
            kind: f.kind,
            categories: categories[i].clone(),
            index: i,
        })
        .collect();

    Ok(Dataset {
        schema: Arc::new(Schema {
            dataset_name: sidecar.name,
            target: sidecar.target,
            positive_label: sidecar.positive_label,
            negative_label,
            features,
        }),
        instances,
        labels,
    })
}

/// Build a dataset in memory. Intended for tests and synthetic corpora; the
/// same validation as [`load_dataset`] applies to sizes and labels.
pub fn dataset_from_parts(
    schema: Schema,
    instances: Vec<Instance>,
    labels: Vec<bool>,
) -> Result<Dataset, DataError> {
    if instances.len() < 2 {
        return Err(DataError::TooFewInstances(instances.len()));
    }
    assert_eq!(instances.len(), labels.len());
    Ok(Dataset {
        schema: Arc::new(schema),
        instances,
        labels,
    })
}

fn subset(d: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        schema: Arc::clone(&d.schema),
        instances: indices.iter().map(|&i| d.instances[i].clone()).collect(),
        labels: indices.iter().map(|&i| d.labels[i]).collect(),
    }
}

/// Partition a dataset into disjoint train/test subsets.
///
/// `|test| = max(ceil(test_fraction * n), test_min)`; deterministic under
/// the spec seed, independent of thread count. Instances keep their
/// original ids, and each subset preserves original row order.
pub fn split_train_test(d: &Dataset, s: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
        return Err(DataError::InvalidSplit(format!(
            "test_fraction {} outside (0, 1)",
            s.test_fraction
        )));
    }
    if s.test_min < 1 {
        return Err(DataError::InvalidSplit("test_min must be >= 1".into()));
    }
    let n = d.len();
    if n <= s.test_min {
        return Err(DataError::SplitTooSmall {
            n,
            test_min: s.test_min,
        });
    }
    let test_size = ((s.test_fraction * n as f64).ceil() as usize).max(s.test_min);
    if test_size >= n {
        return Err(DataError::SplitTooSmall {
            n,
            test_min: s.test_min,
        });
    }

    let mut rng = seeded_rng(s.seed, &["split", d.name()]);
    let mut test_idx: Vec<usize> = if s.stratified {
        let mut pos: Vec<usize> = (0..n).filter(|&i| d.labels[i]).collect();
        let mut neg: Vec<usize> = (0..n).filter(|&i| !d.labels[i]).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        // Largest-remainder apportionment of test_size between classes.
        let pos_exact = test_size as f64 * pos.len() as f64 / n as f64;
        let mut pos_take = (pos_exact.floor() as usize).min(pos.len());
        let neg_take_f = test_size - pos_take;
        let mut neg_take = neg_take_f.min(neg.len());
        if pos_take + neg_take < test_size {
            pos_take = (test_size - neg_take).min(pos.len());
        }
        neg_take = (test_size - pos_take).min(neg.len());
        let mut idx: Vec<usize> = pos[..pos_take].to_vec();
        idx.extend_from_slice(&neg[..neg_take]);
        idx
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all[..test_size].to_vec()
    };
    test_idx.sort_unstable();
    let test_set: BTreeSet<usize> = test_idx.iter().copied().collect();
    let train_idx: Vec<usize> = (0..n).filter(|i| !test_set.contains(i)).collect();

    Ok((subset(d, &train_idx), subset(d, &test_idx)))
}

/// Uniform sample without replacement from a dataset, seeded; returns
/// instance indices in ascending order. Caps at the dataset size.
pub fn sample_explananda(d: &Dataset, count: usize, seed: u64) -> Vec<usize> {
    let n = d.len();
    let take = count.min(n);
    let mut rng = seeded_rng(seed, &["explananda", d.name()]);
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut rng);
    let mut chosen = all[..take].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Min-max / one-hot encoder fit on a training set.
///
/// Numeric features scale to `[0, 1]` with train ranges (out-of-range test
/// values clamp for encoding but stay raw elsewhere); a zero-width range
/// encodes to a constant 0. Categorical features one-hot over the schema's
/// category list, so the mapping is bijective on observed values.
#[derive(Debug, Clone)]
pub struct Encoder {
    schema: Arc<Schema>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    offsets: Vec<usize>,
    width: usize,
}

impl Encoder {
    pub fn fit(train: &Dataset) -> Encoder {
        let nf = train.n_features();
        let mut mins = vec![f64::INFINITY; nf];
        let mut maxs = vec![f64::NEG_INFINITY; nf];
        for inst in &train.instances {
            for (fi, v) in inst.values.iter().enumerate() {
                if let FeatureValue::Num(x) = v {
                    mins[fi] = mins[fi].min(*x);
                    maxs[fi] = maxs[fi].max(*x);
                }
            }
        }
        let mut offsets = Vec::with_capacity(nf);
        let mut width = 0usize;
        for f in &train.schema.features {
            offsets.push(width);
            width += match f.kind {
                FeatureKind::Numeric => 1,
                FeatureKind::Categorical => f.categories.len().max(1),
            };
        }
        Encoder {
            schema: Arc::clone(&train.schema),
            mins,
            maxs,
            offsets,
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Raw train range of a numeric feature as `(min, max)`.
    pub fn numeric_range(&self, feature: usize) -> (f64, f64) {
        (self.mins[feature], self.maxs[feature])
    }

    pub fn encode(&self, inst: &Instance) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        self.encode_into(inst, &mut out);
        out
    }

    pub fn encode_into(&self, inst: &Instance, out: &mut [f64]) {
        debug_assert_eq!(inst.values.len(), self.schema.features.len());
        for slot in out.iter_mut() {
            *slot = 0.0;
        }
        for (fi, v) in inst.values.iter().enumerate() {
            let off = self.offsets[fi];
            match v {
                FeatureValue::Num(x) => {
                    let range = self.maxs[fi] - self.mins[fi];
                    out[off] = if range > 0.0 {
                        ((x - self.mins[fi]) / range).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
                FeatureValue::Cat(c) => {
                    out[off + *c as usize] = 1.0;
                }
            }
        }
    }

    /// Inverse of [`Encoder::encode`] on in-range values. Categorical blocks
    /// decode by argmax (ties to the first category); zero-width numeric
    /// ranges decode to the constant train value.
    pub fn decode(&self, encoded: &[f64]) -> Instance {
        let mut values = Vec::with_capacity(self.schema.features.len());
        for (fi, f) in self.schema.features.iter().enumerate() {
            let off = self.offsets[fi];
            match f.kind {
                FeatureKind::Numeric => {
                    let range = self.maxs[fi] - self.mins[fi];
                    let v = if range > 0.0 {
                        self.mins[fi] + encoded[off] * range
                    } else {
                        self.mins[fi]
                    };
                    values.push(FeatureValue::Num(v));
                }
                FeatureKind::Categorical => {
                    let block = &encoded[off..off + f.categories.len().max(1)];
                    let mut best = 0usize;
                    for (i, x) in block.iter().enumerate() {
                        if *x > block[best] {
                            best = i;
                        }
                    }
                    values.push(FeatureValue::Cat(best as u32));
                }
            }
        }
        Instance {
            id: String::new(),
            values,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use std::io::Write;

    fn write_files(csv: &str, schema: &str) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("d.csv");
        let schema_path = dir.path().join("d.json");
        File::create(&csv_path)
            .unwrap()
            .write_all(csv.as_bytes())
            .unwrap();
        File::create(&schema_path)
            .unwrap()
            .write_all(schema.as_bytes())
            .unwrap();
        (dir, csv_path, schema_path)
    }

    const SCHEMA: &str = r#"{
        "name": "toy", "target": "y", "positive_label": "1",
        "features": [
            {"name": "color", "kind": "categorical", "categories": ["red", "green", "blue"]},
            {"name": "size", "kind": "numeric"}
        ]
    }"#;

    #[test]
    fn loads_mixed_csv() {
        let (_d, csv, schema) = write_files("color,size,y\nred,1.5,0\nblue,3.0,1\ngreen,2.0,0\n", SCHEMA);
        let ds = load_dataset(&csv, &schema).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels, vec![false, true, false]);
        assert_eq!(ds.instances[1].values[0], FeatureValue::Cat(2));
        assert_eq!(ds.instances[1].values[1], FeatureValue::Num(3.0));
        assert_eq!(ds.schema.negative_label, "0");
    }

    #[test]
    fn rejects_single_row() {
        let (_d, csv, schema) = write_files("color,size,y\nred,1.5,0\n", SCHEMA);
        match load_dataset(&csv, &schema) {
            Err(DataError::TooFewInstances(1)) => {}
            other => panic!("expected TooFewInstances, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nonbinary_target() {
        let (_d, csv, schema) =
            write_files("color,size,y\nred,1,0\nblue,2,1\ngreen,3,2\n", SCHEMA);
        match load_dataset(&csv, &schema) {
            Err(DataError::NonBinaryTarget(3)) => {}
            other => panic!("expected NonBinaryTarget, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unseen_category_and_bad_number() {
        let (_d, csv, schema) = write_files("color,size,y\nred,1,0\npink,2,1\n", SCHEMA);
        assert!(matches!(
            load_dataset(&csv, &schema),
            Err(DataError::UnseenCategory { .. })
        ));
        let (_d2, csv2, schema2) = write_files("color,size,y\nred,abc,0\nblue,2,1\n", SCHEMA);
        assert!(matches!(
            load_dataset(&csv2, &schema2),
            Err(DataError::NonNumeric { .. })
        ));
    }

    #[test]
    fn rejects_missing_column_and_missing_value() {
        let (_d, csv, schema) = write_files("color,y\nred,0\nblue,1\n", SCHEMA);
        assert!(matches!(
            load_dataset(&csv, &schema),
            Err(DataError::MissingColumn(c)) if c == "size"
        ));
        let (_d2, csv2, schema2) = write_files("color,size,y\nred,,0\nblue,2,1\n", SCHEMA);
        assert!(matches!(
            load_dataset(&csv2, &schema2),
            Err(DataError::MissingValue { .. })
        ));
    }

    fn numeric_rows(n: usize) -> Dataset {
        let rows: Vec<(Vec<FeatureValue>, bool)> =
            (0..n).map(|i| (vec![num(i as f64)], i % 2 == 0)).collect();
        make_dataset("n", vec![("x", FeatureKind::Numeric, vec![])], rows)
    }

    #[test]
    fn split_applies_minimum_rule() {
        // 512 instances, 20% would be 103; the 200-instance floor wins.
        let d = numeric_rows(512);
        let spec = SplitSpec::default();
        let (train, test) = split_train_test(&d, &spec).unwrap();
        assert_eq!(test.len(), 200);
        assert_eq!(train.len(), 312);
    }

    #[test]
    fn split_sizes_match_formula() {
        let spec = SplitSpec::default();
        let (_, test) = split_train_test(&numeric_rows(1000), &spec).unwrap();
        assert_eq!(test.len(), 200);
        let (_, test) = split_train_test(&numeric_rows(10_000), &spec).unwrap();
        // oracle: max(ceil(0.2 * 10000), 200) = 2000
        assert_eq!(test.len(), 2000);
    }

    #[test]
    fn split_is_a_partition_and_deterministic() {
        let d = numeric_rows(300);
        let spec = SplitSpec {
            test_min: 50,
            ..SplitSpec::default()
        };
        let (tr1, te1) = split_train_test(&d, &spec).unwrap();
        let (tr2, te2) = split_train_test(&d, &spec).unwrap();
        assert_eq!(
            tr1.instances.iter().map(|i| &i.id).collect::<Vec<_>>(),
            tr2.instances.iter().map(|i| &i.id).collect::<Vec<_>>()
        );
        assert_eq!(te1.len(), te2.len());
        let mut ids: Vec<&String> = tr1
            .instances
            .iter()
            .chain(te1.instances.iter())
            .map(|i| &i.id)
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 300);

        let other = SplitSpec { seed: 99, ..spec };
        let (_, te3) = split_train_test(&d, &other).unwrap();
        assert_ne!(
            te1.instances.iter().map(|i| &i.id).collect::<Vec<_>>(),
            te3.instances.iter().map(|i| &i.id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn split_rejects_small_dataset() {
        let d = numeric_rows(100);
        assert!(matches!(
            split_train_test(&d, &SplitSpec::default()),
            Err(DataError::SplitTooSmall { .. })
        ));
    }

    #[test]
    fn stratified_split_keeps_proportions() {
        let rows: Vec<(Vec<FeatureValue>, bool)> =
            (0..400).map(|i| (vec![num(i as f64)], i % 4 == 0)).collect();
        let d = make_dataset("s", vec![("x", FeatureKind::Numeric, vec![])], rows);
        let spec = SplitSpec {
            test_min: 100,
            stratified: true,
            ..SplitSpec::default()
        };
        let (_, test) = split_train_test(&d, &spec).unwrap();
        assert_eq!(test.len(), 100);
        let pos = test.labels.iter().filter(|l| **l).count();
        assert_eq!(pos, 25);
    }

    #[test]
    fn encoder_scales_and_one_hots() {
        let d = make_dataset(
            "e",
            vec![
                ("c", FeatureKind::Categorical, vec!["a", "b", "z"]),
                ("x", FeatureKind::Numeric, vec![]),
            ],
            vec![
                (vec![cat(0), num(10.0)], false),
                (vec![cat(1), num(20.0)], true),
            ],
        );
        let enc = Encoder::fit(&d);
        assert_eq!(enc.width(), 4);
        // categorical one-hot: 2nd of 3 categories
        let v = enc.encode(&Instance {
            id: "t".into(),
            values: vec![cat(1), num(20.0)],
        });
        assert_eq!(&v[..3], &[0.0, 1.0, 0.0]);
        // numeric at train max encodes to 1.0, midpoint to 0.5
        assert_eq!(v[3], 1.0);
        let mid = enc.encode(&Instance {
            id: "m".into(),
            values: vec![cat(0), num(15.0)],
        });
        assert_eq!(mid[3], 0.5);
        // out-of-range clamps
        let hi = enc.encode(&Instance {
            id: "h".into(),
            values: vec![cat(0), num(99.0)],
        });
        assert_eq!(hi[3], 1.0);
    }

    #[test]
    fn encoder_zero_width_range_is_constant_zero() {
        let d = make_dataset(
            "z",
            vec![("x", FeatureKind::Numeric, vec![])],
            vec![(vec![num(5.0)], false), (vec![num(5.0)], true)],
        );
        let enc = Encoder::fit(&d);
        assert_eq!(enc.encode(&d.instances[0]), vec![0.0]);
        assert_eq!(enc.decode(&[0.0]).values[0], num(5.0));
    }

    #[test]
    fn encode_decode_round_trips_training_instances() {
        let d = make_dataset(
            "r",
            vec![
                ("c", FeatureKind::Categorical, vec!["a", "b"]),
                ("x", FeatureKind::Numeric, vec![]),
            ],
            vec![
                (vec![cat(0), num(0.1)], false),
                (vec![cat(1), num(0.7)], true),
                (vec![cat(1), num(0.3)], false),
            ],
        );
        let enc = Encoder::fit(&d);
        for inst in &d.instances {
            let back = enc.decode(&enc.encode(inst));
            for (a, b) in inst.values.iter().zip(back.values.iter()) {
                match (a, b) {
                    (FeatureValue::Cat(x), FeatureValue::Cat(y)) => assert_eq!(x, y),
                    (FeatureValue::Num(x), FeatureValue::Num(y)) => {
                        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0))
                    }
                    _ => panic!("kind changed in round trip"),
                }
            }
        }
    }

    #[test]
    fn explananda_sampling_is_seeded_and_capped() {
        let d = numeric_rows(50);
        let a = sample_explananda(&d, 10, 7);
        let b = sample_explananda(&d, 10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let all = sample_explananda(&d, 500, 7);
        assert_eq!(all.len(), 50);
        let c = sample_explananda(&d, 10, 8);
        assert_ne!(a, c);
    }
}
