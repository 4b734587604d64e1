//! Audit toolkit for the disagreement problem among post-hoc explanations of
//! binary tabular classifiers.
//!
//! The crate generates counterfactual explanations with a family of
//! desk-scale algorithms (plus Monte-Carlo Shapley values and anchor rules),
//! canonicalizes every method's output into feature sets, and computes
//! set-based disagreement metrics: relative feature exclusion and span,
//! scaled L0, feature disagreement, Jaccard similarity, sparsity, group
//! statistics, and adversarial include/exclude probes. An analysis layer
//! aggregates per-instance numbers into dataset tables, boxplot statistics,
//! and classical MDS embeddings of method dissimilarity.
//!
//! Models are pluggable: a built-in bagged-tree ensemble or any external
//! process speaking the line-delimited JSON bridge protocol (see
//! [`model::bridge`]). Externally produced explanations enter through the
//! interchange format in [`explanations`], which makes the metrics layer
//! independent of how an explanation was generated.

pub mod analysis;
pub mod attrib;
pub mod cfgen;
pub mod data;
pub mod explanations;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod rng;

pub use data::{Dataset, Encoder, FeatureKind, FeatureSchema, FeatureValue, Instance, SplitSpec};
pub use model::{auc, ForestConfig, PredictionModel};
pub use cfgen::{Counterfactual, GeneratorConfig, Method, MethodGroup};
pub use explanations::{Explanation, ExplanationGroup, ExplanationSet, MethodInfo};
pub use metrics::FeatureSpace;
pub use pipeline::{run_audit, AuditConfig, AuditReport};
