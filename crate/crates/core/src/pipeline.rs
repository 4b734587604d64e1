//! Audit orchestration: datasets -> models -> explainers -> metrics.
//!
//! A declarative config drives the full run. Work is scheduled as
//! (dataset, method, instance) cells over a rayon pool; every cell derives
//! its RNG from the global seed and its labels, so the emitted numbers are
//! identical for any worker count. Generators that miss on an instance are
//! recorded in coverage and never abort the run; model transport failures
//! do abort.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    aggregate, boxplot_stats, classical_mds, column_summary, mds_input_from_matrix,
    standard_subsets, AnalysisError, BoxplotStats, ColumnSummary, MdsEmbedding, MethodSubset,
    SubsetAverages,
};
use crate::attrib::{anchor_rule, shapley_estimate};
use crate::cfgen::{generate, GenerationContext, GeneratorConfig, Method};
use crate::data::{
    load_dataset, sample_explananda, split_train_test, DataError, Dataset, Encoder, SplitSpec,
};
use crate::explanations::{
    diff_to_explanation, read_interchange, rule_to_explanation, topk_to_explanation, Explanation,
    ExplanationError, ExplanationGroup, ExplanationSet, MethodInfo,
};
use crate::metrics::{
    effective, group_disagreement, pairwise_matrix, probe, sparsity, DisagreementMatrix,
    FeatureSpace, GroupDisagreement, MatrixKind, ProbeMode,
};
use crate::model::{auc_from_scores, bridge_model, train_forest, BridgeConfig, ForestConfig, ModelError, PredictionModel};
use crate::rng::{chain_seed, fnv1a64};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Explanation(#[from] ExplanationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// CLI exit code: 1 for configuration/input problems, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Data(_)
            | PipelineError::Explanation(_) => 1,
            PipelineError::Model(_)
            | PipelineError::Metrics(_)
            | PipelineError::Analysis(_)
            | PipelineError::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSource {
    pub csv: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Forest(ForestConfig),
    Bridge {
        command: String,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Forest(ForestConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdsInput {
    /// Jaccard dissimilarity (Eq. B2) averaged per method pair.
    Jaccard,
    /// Raw scaled-L0 matrix with a zeroed diagonal, for fidelity runs.
    L0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdsAverage {
    /// Mean over all (dataset, instance) pair cells.
    Global,
    /// Per-dataset matrix means, then the mean over datasets.
    PerDataset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditFlags {
    pub missing_as_empty: bool,
    pub shap_k: usize,
    pub shap_signed: bool,
    pub shap_samples: usize,
    pub anchor_precision_target: f64,
    pub mds_input: MdsInput,
    pub mds_average: MdsAverage,
    pub stratified_split: bool,
}

impl Default for AuditFlags {
    fn default() -> Self {
        AuditFlags {
            missing_as_empty: false,
            shap_k: 7,
            shap_signed: false,
            shap_samples: 2000,
            anchor_precision_target: 0.95,
            mds_input: MdsInput::Jaccard,
            mds_average: MdsAverage::Global,
            stratified_split: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub test_min: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            test_fraction: 0.2,
            test_min: 200,
        }
    }
}

fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_string()).collect()
}

fn default_sample() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub datasets: Vec<DatasetSource>,
    #[serde(default)]
    pub model: ModelConfig,
    /// Built-in method names plus optionally "Anchors" and "SHAP".
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Interchange files with externally produced explanations, merged by
    /// dataset name.
    #[serde(default)]
    pub external_explanations: Vec<PathBuf>,
    /// Explananda sampled per dataset from its test split.
    #[serde(default = "default_sample")]
    pub sample: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitOptions,
    #[serde(default)]
    pub flags: AuditFlags,
    #[serde(default)]
    pub generator: GeneratorConfig,
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<AuditConfig, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Stable hash of the canonical config serialization, for the manifest.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Explainer {
    Cf(Method),
    Anchors,
    Shap,
}

impl Explainer {
    fn parse(name: &str) -> Option<Explainer> {
        if name.eq_ignore_ascii_case("anchors") {
            return Some(Explainer::Anchors);
        }
        if name.eq_ignore_ascii_case("shap") {
            return Some(Explainer::Shap);
        }
        Method::parse(name).map(Explainer::Cf)
    }

    fn info(&self) -> MethodInfo {
        match self {
            Explainer::Cf(m) => MethodInfo::builtin(*m),
            Explainer::Anchors => MethodInfo::other("Anchors"),
            Explainer::Shap => MethodInfo::other("SHAP"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodCoverage {
    pub method: String,
    pub found: usize,
    pub total: usize,
    pub rate: f64,
    pub mean_evaluations: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSparsity {
    pub method: String,
    /// Mean |E|/|F_D| over found explanations; None when never found.
    pub sparsity: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeIndexRow {
    pub feature: String,
    pub excludable_rate: f64,
    pub includable_rate: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedBoxplot {
    pub name: String,
    pub stats: BoxplotStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct Matrices {
    pub scaled_l0: DisagreementMatrix,
    pub feature_disagreement: DisagreementMatrix,
    pub jaccard_similarity: DisagreementMatrix,
    pub jaccard_dissimilarity: DisagreementMatrix,
}

/// Everything derivable from one explanation set, with no knowledge of how
/// the explanations were produced. Shared by the audit pipeline and the
/// standalone metrics command.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetAnalysis {
    pub subset_averages: Vec<SubsetAverages>,
    pub sparsity: Vec<MethodSparsity>,
    pub matrices: Matrices,
    pub group_disagreement: Option<Vec<GroupDisagreement>>,
    pub group_disagreement_note: Option<String>,
    pub probe_index: Vec<ProbeIndexRow>,
    /// Boxplot statistics over per-instance span values, one per subset.
    pub boxplots: Vec<NamedBoxplot>,
    pub mds: Option<MdsEmbedding>,
    pub mds_note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub n_instances: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub sample_size: usize,
    pub auc: Option<f64>,
    pub coverage: Vec<MethodCoverage>,
    #[serde(flatten)]
    pub analysis: DatasetAnalysis,
    #[serde(skip)]
    pub explanations: ExplanationSet,
    #[serde(skip)]
    pub feature_space: FeatureSpace,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryColumn {
    pub subset: String,
    /// Per-dataset averages in dataset order (None when undefined).
    pub values: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossDatasetSummary {
    pub datasets: Vec<String>,
    pub exclusion: Vec<SummaryColumn>,
    pub span: Vec<SummaryColumn>,
    /// Boxplots over per-dataset span averages, one per subset.
    pub boxplots: Vec<NamedBoxplot>,
    pub mds: Option<MdsEmbedding>,
    pub mds_note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub classifier: String,
    pub datasets: Vec<DatasetReport>,
    pub summary: CrossDatasetSummary,
}

fn build_model(
    cfg: &ModelConfig,
    train: &Dataset,
    seed: u64,
) -> Result<PredictionModel, PipelineError> {
    match cfg {
        ModelConfig::Forest(fc) => {
            let mut fc = fc.clone();
            fc.seed = chain_seed(seed, &["forest", train.name(), &fc.seed.to_string()]);
            Ok(train_forest(train, &fc)?)
        }
        ModelConfig::Bridge {
            command,
            timeout_secs,
        } => {
            let mut bc = BridgeConfig::new(command.clone());
            if let Some(secs) = timeout_secs {
                bc.timeout = Duration::from_secs(*secs);
            }
            Ok(bridge_model(&bc, &train.schema, 0.5)?)
        }
    }
}

struct Cell {
    explainer: Explainer,
    instance_idx: usize,
}

fn run_cell(
    cell: &Cell,
    ctx: &GenerationContext,
    test: &Dataset,
    cfg: &AuditConfig,
) -> Result<(Explanation, usize), PipelineError> {
    let orig = &test.instances[cell.instance_idx];
    let ds_name = ctx.train.name();
    match cell.explainer {
        Explainer::Cf(method) => {
            let seed = chain_seed(cfg.seed, &["cell", ds_name, method.name(), &orig.id]);
            let cf = generate(method, ctx, orig, seed)?;
            let evals = cf.evaluations;
            Ok((diff_to_explanation(orig, &cf), evals))
        }
        Explainer::Anchors => {
            let seed = chain_seed(cfg.seed, &["cell", ds_name, "Anchors", &orig.id]);
            let rule = anchor_rule(
                ctx.model,
                orig,
                ctx.train,
                cfg.flags.anchor_precision_target,
                seed,
            )?;
            Ok((rule_to_explanation(&rule, "Anchors", &orig.id), 0))
        }
        Explainer::Shap => {
            let seed = chain_seed(cfg.seed, &["cell", ds_name, "SHAP", &orig.id]);
            let attribution =
                shapley_estimate(ctx.model, orig, ctx.train, cfg.flags.shap_samples, seed)?;
            Ok((
                topk_to_explanation(
                    &attribution,
                    cfg.flags.shap_k,
                    cfg.flags.shap_signed,
                    "SHAP",
                    &orig.id,
                ),
                0,
            ))
        }
    }
}

/// Analysis of a finished explanation set: tables, matrices, group stats,
/// probe index, boxplots, and the MDS embedding over CF methods.
pub fn analyze_set(
    set: &ExplanationSet,
    space: &FeatureSpace,
    flags: &AuditFlags,
) -> Result<DatasetAnalysis, PipelineError> {
    let subsets: Vec<MethodSubset> = standard_subsets(&set.methods);
    let subset_averages = aggregate(set, space, &subsets, flags.missing_as_empty)?;

    let instances = set.instances();
    let method_sparsity = set
        .methods
        .iter()
        .map(|m| {
            let values: Vec<f64> = instances
                .iter()
                .filter_map(|origin| set.record(&m.name, origin))
                .filter(|r| r.found)
                .map(|r| sparsity(r, space))
                .collect();
            MethodSparsity {
                method: m.name.clone(),
                sparsity: (!values.is_empty())
                    .then(|| values.iter().sum::<f64>() / values.len() as f64),
            }
        })
        .collect();

    let matrices = Matrices {
        scaled_l0: pairwise_matrix(set, MatrixKind::ScaledL0, space, flags.missing_as_empty),
        feature_disagreement: pairwise_matrix(
            set,
            MatrixKind::FeatureDisagreement,
            space,
            flags.missing_as_empty,
        ),
        jaccard_similarity: pairwise_matrix(
            set,
            MatrixKind::JaccardSim,
            space,
            flags.missing_as_empty,
        ),
        jaccard_dissimilarity: pairwise_matrix(
            set,
            MatrixKind::JaccardDissim,
            space,
            flags.missing_as_empty,
        ),
    };

    let (group_rows, group_note) = match group_disagreement(set, flags.missing_as_empty) {
        Ok(rows) => (Some(rows), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut probe_index = Vec::with_capacity(space.size());
    for f in 0..space.size() {
        let mut used = 0usize;
        let mut excludable = 0usize;
        let mut includable = 0usize;
        for origin in &instances {
            let records = set.for_instance(origin);
            let usable = effective(&records, flags.missing_as_empty);
            if usable.is_empty() {
                continue;
            }
            let refs: Vec<&Explanation> = usable.iter().map(|c| c.as_ref()).collect();
            used += 1;
            if probe(&refs, f, ProbeMode::Exclude, space)?.possible {
                excludable += 1;
            }
            if probe(&refs, f, ProbeMode::Include, space)?.possible {
                includable += 1;
            }
        }
        probe_index.push(ProbeIndexRow {
            feature: space.names[f].clone(),
            excludable_rate: if used > 0 {
                excludable as f64 / used as f64
            } else {
                0.0
            },
            includable_rate: if used > 0 {
                includable as f64 / used as f64
            } else {
                0.0
            },
            instances: used,
        });
    }

    let boxplots = subset_averages
        .iter()
        .filter(|s| !s.span_values.is_empty())
        .map(|s| {
            Ok(NamedBoxplot {
                name: s.subset.clone(),
                stats: boxplot_stats(&s.span_values)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let (mds, mds_note) = dataset_mds(set, &matrices, flags);

    Ok(DatasetAnalysis {
        subset_averages,
        sparsity: method_sparsity,
        matrices,
        group_disagreement: group_rows,
        group_disagreement_note: group_note,
        probe_index,
        boxplots,
        mds,
        mds_note,
    })
}

fn cf_method_names(set: &ExplanationSet) -> Vec<String> {
    set.methods
        .iter()
        .filter(|m| m.group != ExplanationGroup::Other)
        .map(|m| m.name.clone())
        .collect()
}

fn submatrix(matrix: &DisagreementMatrix, keep: &[String]) -> DisagreementMatrix {
    let idx: Vec<usize> = keep
        .iter()
        .filter_map(|name| matrix.methods.iter().position(|m| m == name))
        .collect();
    DisagreementMatrix {
        kind: matrix.kind,
        methods: idx.iter().map(|&i| matrix.methods[i].clone()).collect(),
        values: idx
            .iter()
            .map(|&i| idx.iter().map(|&j| matrix.values[i][j]).collect())
            .collect(),
    }
}

fn dataset_mds(
    set: &ExplanationSet,
    matrices: &Matrices,
    flags: &AuditFlags,
) -> (Option<MdsEmbedding>, Option<String>) {
    let cf_methods = cf_method_names(set);
    if cf_methods.len() < 2 {
        return (
            None,
            Some("fewer than 2 counterfactual methods; MDS skipped".into()),
        );
    }
    let source = match flags.mds_input {
        MdsInput::Jaccard => &matrices.jaccard_dissimilarity,
        MdsInput::L0 => &matrices.scaled_l0,
    };
    let sub = submatrix(source, &cf_methods);
    match mds_input_from_matrix(&sub).and_then(|(methods, d)| classical_mds(&methods, &d, 2)) {
        Ok(embedding) => (Some(embedding), None),
        Err(e) => (None, Some(format!("MDS skipped: {e}"))),
    }
}

fn merge_external(
    set: &mut ExplanationSet,
    path: &Path,
    space: &FeatureSpace,
) -> Result<(), PipelineError> {
    let external = read_interchange(path, space)?;
    for record in external.records {
        let info = external
            .methods
            .iter()
            .find(|m| m.name == record.method)
            .cloned()
            .unwrap_or_else(|| MethodInfo::other(record.method.clone()));
        set.push(info, record)?;
    }
    Ok(())
}

fn audit_dataset(
    source: &DatasetSource,
    cfg: &AuditConfig,
    explainers: &[Explainer],
    externals_by_dataset: &BTreeMap<String, Vec<PathBuf>>,
) -> Result<DatasetReport, PipelineError> {
    let dataset = load_dataset(&source.csv, &source.schema)?;
    let spec = SplitSpec {
        test_fraction: cfg.split.test_fraction,
        test_min: cfg.split.test_min,
        explanandum_sample: cfg.sample,
        seed: cfg.seed,
        stratified: cfg.flags.stratified_split,
    };
    let (train, test) = split_train_test(&dataset, &spec)?;
    let model = build_model(&cfg.model, &train, cfg.seed)?;
    let encoder = Encoder::fit(&train);
    let train_predicted = model.predict_labels(&train.instances)?;
    let test_scores = model.predict(&test.instances)?;
    let auc = auc_from_scores(&test_scores, &test.labels).ok();

    let sample_idx = sample_explananda(&test, cfg.sample, cfg.seed);
    let ctx = GenerationContext {
        model: &model,
        train: &train,
        encoder: &encoder,
        train_predicted: &train_predicted,
        cfg: &cfg.generator,
    };

    let cells: Vec<Cell> = explainers
        .iter()
        .flat_map(|&explainer| {
            sample_idx.iter().map(move |&instance_idx| Cell {
                explainer,
                instance_idx,
            })
        })
        .collect();
    let results: Vec<Result<(Explanation, usize), PipelineError>> = cells
        .par_iter()
        .map(|cell| run_cell(cell, &ctx, &test, cfg))
        .collect();

    let mut set = ExplanationSet::new(dataset.name(), model.tag());
    let mut evals: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new(); // found, total, evals
    for (cell, result) in cells.iter().zip(results) {
        let (explanation, cell_evals) = result?;
        let entry = evals
            .entry(cell.explainer.info().name)
            .or_insert((0, 0, 0));
        entry.1 += 1;
        entry.2 += cell_evals;
        if explanation.found {
            entry.0 += 1;
        }
        set.push(cell.explainer.info(), explanation)?;
    }

    let space = FeatureSpace::from_schema(&dataset.schema);
    if let Some(paths) = externals_by_dataset.get(dataset.name()) {
        for path in paths {
            merge_external(&mut set, path, &space)?;
        }
    }

    let coverage: Vec<MethodCoverage> = set
        .methods
        .iter()
        .map(|m| match evals.get(&m.name) {
            Some(&(found, total, spent)) => MethodCoverage {
                method: m.name.clone(),
                found,
                total,
                rate: found as f64 / total.max(1) as f64,
                mean_evaluations: spent as f64 / total.max(1) as f64,
            },
            None => {
                // merged externally: coverage from the records themselves
                let records: Vec<&Explanation> = set
                    .records
                    .iter()
                    .filter(|r| r.method == m.name)
                    .collect();
                let found = records.iter().filter(|r| r.found).count();
                MethodCoverage {
                    method: m.name.clone(),
                    found,
                    total: records.len(),
                    rate: found as f64 / records.len().max(1) as f64,
                    mean_evaluations: 0.0,
                }
            }
        })
        .collect();

    let analysis = analyze_set(&set, &space, &cfg.flags)?;

    Ok(DatasetReport {
        dataset: dataset.name().to_string(),
        n_instances: dataset.len(),
        n_features: dataset.n_features(),
        n_train: train.len(),
        n_test: test.len(),
        sample_size: sample_idx.len(),
        auc,
        coverage,
        analysis,
        explanations: set,
        feature_space: space,
    })
}

fn summary_columns(
    datasets: &[DatasetReport],
    pick: impl Fn(&SubsetAverages) -> Option<f64>,
) -> Vec<SummaryColumn> {
    let mut subset_names: Vec<String> = Vec::new();
    for d in datasets {
        for s in &d.analysis.subset_averages {
            if !subset_names.contains(&s.subset) {
                subset_names.push(s.subset.clone());
            }
        }
    }
    subset_names
        .into_iter()
        .map(|name| {
            let values: Vec<Option<f64>> = datasets
                .iter()
                .map(|d| {
                    d.analysis
                        .subset_averages
                        .iter()
                        .find(|s| s.subset == name)
                        .and_then(&pick)
                })
                .collect();
            let defined: Vec<f64> = values.iter().flatten().copied().collect();
            let summary: Option<ColumnSummary> =
                (!defined.is_empty()).then(|| column_summary(&defined).expect("non-empty"));
            SummaryColumn {
                subset: name,
                values,
                mean: summary.map(|s| s.mean),
                std: summary.map(|s| s.std),
            }
        })
        .collect()
}

fn summary_mds(
    datasets: &[DatasetReport],
    flags: &AuditFlags,
) -> (Option<MdsEmbedding>, Option<String>) {
    // methods present in every dataset, in first-dataset order
    let Some(first) = datasets.first() else {
        return (None, Some("no datasets".into()));
    };
    let common: Vec<String> = cf_method_names(&first.explanations)
        .into_iter()
        .filter(|name| {
            datasets
                .iter()
                .all(|d| d.explanations.methods.iter().any(|m| m.name == *name))
        })
        .collect();
    if common.len() < 2 {
        return (
            None,
            Some("fewer than 2 counterfactual methods shared by all datasets".into()),
        );
    }
    let kind = match flags.mds_input {
        MdsInput::Jaccard => MatrixKind::JaccardDissim,
        MdsInput::L0 => MatrixKind::ScaledL0,
    };
    let space_of = |d: &DatasetReport| d.feature_space.clone();

    let n = common.len();
    let mut cells = vec![vec![0.0f64; n]; n];
    let mut counts = vec![vec![0usize; n]; n];
    match flags.mds_average {
        MdsAverage::Global => {
            for d in datasets {
                let space = space_of(d);
                for origin in d.explanations.instances() {
                    let records = d.explanations.for_instance(origin);
                    let usable = effective(&records, flags.missing_as_empty);
                    for (i, a_name) in common.iter().enumerate() {
                        let Some(a) = usable.iter().find(|e| e.method == *a_name) else {
                            continue;
                        };
                        for (j, b_name) in common.iter().enumerate() {
                            let Some(b) = usable.iter().find(|e| e.method == *b_name) else {
                                continue;
                            };
                            let value = match kind {
                                MatrixKind::JaccardDissim => {
                                    crate::metrics::jaccard(a, b).map(|p| p.dissimilarity)
                                }
                                MatrixKind::ScaledL0 => {
                                    Some(crate::metrics::scaled_l0(a, b, &space))
                                }
                                _ => unreachable!(),
                            };
                            if let Some(v) = value {
                                cells[i][j] += v;
                                counts[i][j] += 1;
                            }
                        }
                    }
                }
            }
        }
        MdsAverage::PerDataset => {
            for d in datasets {
                let source = match kind {
                    MatrixKind::JaccardDissim => &d.analysis.matrices.jaccard_dissimilarity,
                    MatrixKind::ScaledL0 => &d.analysis.matrices.scaled_l0,
                    _ => unreachable!(),
                };
                let sub = submatrix(source, &common);
                for i in 0..n {
                    for j in 0..n {
                        if let Some(v) = sub.values[i][j] {
                            cells[i][j] += v;
                            counts[i][j] += 1;
                        }
                    }
                }
            }
        }
    }

    let mut matrix = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if counts[i][j] == 0 {
                return (
                    None,
                    Some(format!(
                        "MDS skipped: pair ({}, {}) never defined",
                        common[i], common[j]
                    )),
                );
            }
            matrix[i][j] = cells[i][j] / counts[i][j] as f64;
        }
    }
    // force exact symmetry lost to averaging different cell counts
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (matrix[i][j] + matrix[j][i]);
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    match classical_mds(&common, &matrix, 2) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(format!("MDS skipped: {e}"))),
    }
}

fn parse_explainers(cfg: &AuditConfig) -> Result<Vec<Explainer>, PipelineError> {
    let mut out = Vec::new();
    for name in &cfg.methods {
        let explainer = Explainer::parse(name)
            .ok_or_else(|| PipelineError::Config(format!("unknown method '{name}'")))?;
        if out.contains(&explainer) {
            return Err(PipelineError::Config(format!("duplicate method '{name}'")));
        }
        out.push(explainer);
    }
    if out.len() < 2 && cfg.external_explanations.is_empty() {
        return Err(PipelineError::Config(
            "need at least 2 methods for pairwise metrics".into(),
        ));
    }
    Ok(out)
}

/// Run the full audit described by the config.
///
/// `jobs` sets the rayon worker count (None uses the rayon default). The
/// report is identical for any worker count.
pub fn run_audit(cfg: &AuditConfig, jobs: Option<usize>) -> Result<AuditReport, PipelineError> {
    if cfg.datasets.is_empty() {
        return Err(PipelineError::Config("no datasets configured".into()));
    }
    let explainers = parse_explainers(cfg)?;

    // group external files by their declared dataset name
    let mut externals_by_dataset: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for path in &cfg.external_explanations {
        let name = peek_interchange_dataset(path)?;
        externals_by_dataset.entry(name).or_default().push(path.clone());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;

    let datasets: Vec<DatasetReport> = pool.install(|| {
        cfg.datasets
            .iter()
            .map(|source| audit_dataset(source, cfg, &explainers, &externals_by_dataset))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let classifier = datasets
        .first()
        .map(|d| d.explanations.classifier.clone())
        .unwrap_or_default();

    let exclusion = summary_columns(&datasets, |s| s.exclusion);
    let span = summary_columns(&datasets, |s| s.span);
    let boxplots = span
        .iter()
        .filter_map(|col| {
            let defined: Vec<f64> = col.values.iter().flatten().copied().collect();
            (!defined.is_empty()).then(|| NamedBoxplot {
                name: col.subset.clone(),
                stats: boxplot_stats(&defined).expect("non-empty"),
            })
        })
        .collect();
    let (mds, mds_note) = summary_mds(&datasets, &cfg.flags);

    Ok(AuditReport {
        seed: cfg.seed,
        classifier,
        summary: CrossDatasetSummary {
            datasets: datasets.iter().map(|d| d.dataset.clone()).collect(),
            exclusion,
            span,
            boxplots,
            mds,
            mds_note,
        },
        datasets,
    })
}

fn peek_interchange_dataset(path: &Path) -> Result<String, PipelineError> {
    #[derive(Deserialize)]
    struct Head {
        dataset: String,
    }
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let head: Head = serde_json::from_reader(file).map_err(|e| PipelineError::Config(format!(
        "interchange file {}: {e}",
        path.display()
    )))?;
    Ok(head.dataset)
}

/// Schema sidecar loader for the metrics/probe commands: builds a feature
/// space from the `features` array of the dataset schema JSON.
pub fn feature_space_from_sidecar(path: &Path) -> Result<FeatureSpace, PipelineError> {
    #[derive(Deserialize)]
    struct Sidecar {
        features: Vec<SidecarFeature>,
    }
    #[derive(Deserialize)]
    struct SidecarFeature {
        name: String,
    }
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let sidecar: Sidecar = serde_json::from_reader(file)
        .map_err(|e| PipelineError::Config(format!("schema file {}: {e}", path.display())))?;
    if sidecar.features.is_empty() {
        return Err(PipelineError::Config(format!(
            "schema file {} declares no features",
            path.display()
        )));
    }
    Ok(FeatureSpace::from_names(
        sidecar.features.into_iter().map(|f| f.name).collect(),
    ))
}
