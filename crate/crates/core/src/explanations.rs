//! Canonical explanations and the interchange format.
//!
//! Every method's raw output reduces to a set of feature indices: changed
//! features for counterfactuals, mentioned features for anchor rules, the
//! top-k features by importance for attributions. The interchange JSON
//! format carries these sets with feature names, so explanations produced
//! by external tooling can be audited with the same metrics.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attrib::{AnchorRule, Attribution};
use crate::cfgen::Counterfactual;
use crate::data::Instance;
use crate::metrics::FeatureSpace;

#[derive(Debug, Error)]
pub enum ExplanationError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed interchange file {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("unknown feature name '{0}' in interchange records")]
    UnknownFeature(String),
    #[error("unknown method group '{0}' (expected Plaus, Prox, or Other)")]
    UnknownGroup(String),
    #[error("duplicate record for method '{method}' on instance '{instance}'")]
    DuplicateRecord { method: String, instance: String },
    #[error("method '{0}' appears with conflicting groups")]
    ConflictingGroup(String),
    #[error("record for '{method}' on '{instance}' is not-found but lists features")]
    NotFoundWithFeatures { method: String, instance: String },
}

/// Taxonomy tag carried by every method in an explanation set. Built-in
/// counterfactual generators map to Plaus/Prox; attribution baselines and
/// unknown externals are Other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExplanationGroup {
    Plaus,
    Prox,
    Other,
}

impl ExplanationGroup {
    pub fn name(&self) -> &'static str {
        match self {
            ExplanationGroup::Plaus => "Plaus",
            ExplanationGroup::Prox => "Prox",
            ExplanationGroup::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<ExplanationGroup> {
        match s {
            "Plaus" => Some(ExplanationGroup::Plaus),
            "Prox" => Some(ExplanationGroup::Prox),
            "Other" => Some(ExplanationGroup::Other),
            _ => None,
        }
    }
}

impl From<crate::cfgen::MethodGroup> for ExplanationGroup {
    fn from(g: crate::cfgen::MethodGroup) -> Self {
        match g {
            crate::cfgen::MethodGroup::Plaus => ExplanationGroup::Plaus,
            crate::cfgen::MethodGroup::Prox => ExplanationGroup::Prox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub name: String,
    pub group: ExplanationGroup,
}

impl MethodInfo {
    pub fn builtin(method: crate::cfgen::Method) -> MethodInfo {
        MethodInfo {
            name: method.name().to_string(),
            group: method.group().into(),
        }
    }

    pub fn other(name: impl Into<String>) -> MethodInfo {
        MethodInfo {
            name: name.into(),
            group: ExplanationGroup::Other,
        }
    }
}

/// One method's explanation for one instance: a set of feature indices.
/// `found = false` means the method produced nothing for this instance and
/// implies an empty set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: String,
    pub origin_id: String,
    pub features: BTreeSet<usize>,
    pub found: bool,
}

impl Explanation {
    pub fn new(
        method: impl Into<String>,
        origin_id: impl Into<String>,
        features: BTreeSet<usize>,
        found: bool,
    ) -> Explanation {
        let features = if found { features } else { BTreeSet::new() };
        Explanation {
            method: method.into(),
            origin_id: origin_id.into(),
            features,
            found,
        }
    }

    pub fn missing(method: impl Into<String>, origin_id: impl Into<String>) -> Explanation {
        Explanation::new(method, origin_id, BTreeSet::new(), false)
    }
}

/// All explanations for one (dataset, classifier) audit, grouped by
/// instance. `(method, origin_id)` pairs are unique.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub dataset: String,
    pub classifier: String,
    pub methods: Vec<MethodInfo>,
    pub records: Vec<Explanation>,
}

impl ExplanationSet {
    pub fn new(dataset: impl Into<String>, classifier: impl Into<String>) -> ExplanationSet {
        ExplanationSet {
            dataset: dataset.into(),
            classifier: classifier.into(),
            methods: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        method: MethodInfo,
        record: Explanation,
    ) -> Result<(), ExplanationError> {
        if !record.found && !record.features.is_empty() {
            return Err(ExplanationError::NotFoundWithFeatures {
                method: record.method.clone(),
                instance: record.origin_id.clone(),
            });
        }
        match self.methods.iter().find(|m| m.name == method.name) {
            Some(existing) if existing.group != method.group => {
                return Err(ExplanationError::ConflictingGroup(method.name));
            }
            Some(_) => {}
            None => self.methods.push(method),
        }
        if self
            .records
            .iter()
            .any(|r| r.method == record.method && r.origin_id == record.origin_id)
        {
            return Err(ExplanationError::DuplicateRecord {
                method: record.method,
                instance: record.origin_id,
            });
        }
        self.records.push(record);
        Ok(())
    }

    /// Origin ids in first-appearance order.
    pub fn instances(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.origin_id.as_str()) {
                out.push(r.origin_id.as_str());
            }
        }
        out
    }

    pub fn for_instance(&self, origin_id: &str) -> Vec<&Explanation> {
        self.records
            .iter()
            .filter(|r| r.origin_id == origin_id)
            .collect()
    }

    pub fn record(&self, method: &str, origin_id: &str) -> Option<&Explanation> {
        self.records
            .iter()
            .find(|r| r.method == method && r.origin_id == origin_id)
    }

    pub fn method_names(&self) -> Vec<&str> {
        self.methods.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn group_of(&self, method: &str) -> Option<ExplanationGroup> {
        self.methods
            .iter()
            .find(|m| m.name == method)
            .map(|m| m.group)
    }
}

/// Feature indices where the counterfactual differs from the original.
///
/// Categorical features change on token inequality, numeric on strict
/// inequality; there is no epsilon, so a one-unit change in a six-digit
/// value counts. A not-found counterfactual yields an empty, not-found
/// explanation.
pub fn diff_to_explanation(orig: &Instance, cf: &Counterfactual) -> Explanation {
    match &cf.instance {
        None => Explanation::missing(cf.method.name(), &cf.origin_id),
        Some(inst) => {
            let features: BTreeSet<usize> = orig
                .values
                .iter()
                .zip(inst.values.iter())
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, _)| i)
                .collect();
            Explanation::new(cf.method.name(), &cf.origin_id, features, true)
        }
    }
}

/// Indices of the `k` most important features. Importance is `|value|` by
/// default (`signed = false`) or the raw value otherwise; ties break to the
/// lower index. With `k >= n_features` every feature is returned.
pub fn topk_to_explanation(
    attribution: &Attribution,
    k: usize,
    signed: bool,
    method: &str,
    origin_id: &str,
) -> Explanation {
    assert!(k >= 1, "k must be >= 1");
    let mut order: Vec<usize> = (0..attribution.values.len()).collect();
    let key = |i: usize| {
        if signed {
            attribution.values[i]
        } else {
            attribution.values[i].abs()
        }
    };
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).expect("finite values").then(a.cmp(&b)));
    let features: BTreeSet<usize> = order.into_iter().take(k).collect();
    Explanation::new(method, origin_id, features, true)
}

/// The features mentioned by an anchor rule.
pub fn rule_to_explanation(rule: &AnchorRule, method: &str, origin_id: &str) -> Explanation {
    let features: BTreeSet<usize> = rule.predicates.iter().map(|p| p.feature).collect();
    Explanation::new(method, origin_id, features, true)
}

#[derive(Serialize, Deserialize)]
struct InterchangeFile {
    dataset: String,
    classifier: String,
    records: Vec<InterchangeRecord>,
}

#[derive(Serialize, Deserialize)]
struct InterchangeRecord {
    method: String,
    group: String,
    instance: String,
    found: bool,
    features: Vec<String>,
}

/// Write an explanation set as interchange JSON with feature names.
pub fn write_interchange(
    set: &ExplanationSet,
    space: &FeatureSpace,
    path: &Path,
) -> Result<(), ExplanationError> {
    let records = set
        .records
        .iter()
        .map(|r| InterchangeRecord {
            method: r.method.clone(),
            group: set
                .group_of(&r.method)
                .unwrap_or(ExplanationGroup::Other)
                .name()
                .to_string(),
            instance: r.origin_id.clone(),
            found: r.found,
            features: r.features.iter().map(|&i| space.names[i].clone()).collect(),
        })
        .collect();
    let file = InterchangeFile {
        dataset: set.dataset.clone(),
        classifier: set.classifier.clone(),
        records,
    };
    let out = File::create(path).map_err(|e| ExplanationError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::to_writer_pretty(out, &file).map_err(|e| ExplanationError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Read an interchange file, resolving feature names against the feature
/// space. Enforces unique `(method, instance)` pairs, consistent groups,
/// and empty feature lists on not-found records.
pub fn read_interchange(
    path: &Path,
    space: &FeatureSpace,
) -> Result<ExplanationSet, ExplanationError> {
    let file = File::open(path).map_err(|e| ExplanationError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let parsed: InterchangeFile =
        serde_json::from_reader(file).map_err(|e| ExplanationError::Malformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let mut set = ExplanationSet::new(parsed.dataset, parsed.classifier);
    for r in parsed.records {
        let group = ExplanationGroup::parse(&r.group)
            .ok_or_else(|| ExplanationError::UnknownGroup(r.group.clone()))?;
        let mut features = BTreeSet::new();
        for name in &r.features {
            let idx = space
                .index_of(name)
                .ok_or_else(|| ExplanationError::UnknownFeature(name.clone()))?;
            features.insert(idx);
        }
        if !r.found && !features.is_empty() {
            return Err(ExplanationError::NotFoundWithFeatures {
                method: r.method,
                instance: r.instance,
            });
        }
        set.push(
            MethodInfo {
                name: r.method.clone(),
                group,
            },
            Explanation::new(r.method, r.instance, features, r.found),
        )?;
    }
    Ok(set)
}
