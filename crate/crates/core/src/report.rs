//! Report emission: canonical JSON payload, CSV tables, markdown mirrors,
//! MDS coordinates, and the interchange export of every explanation set.
//!
//! Everything except `manifest.json` is a pure function of the audit
//! results, so reruns with the same config and seed produce byte-identical
//! payloads; timestamps live only in the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::MdsEmbedding;
use crate::explanations::write_interchange;
use crate::metrics::DisagreementMatrix;
use crate::pipeline::{AuditConfig, AuditReport, DatasetAnalysis, DatasetReport, PipelineError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, &text)
}

/// File-system-safe slug for dataset names.
fn slug(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if out.is_empty() {
        out.push('d');
    }
    out
}

fn csv_float(v: f64) -> String {
    format!("{v}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(csv_float).unwrap_or_default()
}

fn matrix_csv(matrix: &DisagreementMatrix) -> String {
    let mut out = String::from("method");
    for m in &matrix.methods {
        write!(out, ",{m}").unwrap();
    }
    out.push('\n');
    for (i, m) in matrix.methods.iter().enumerate() {
        write!(out, "{m}").unwrap();
        for j in 0..matrix.methods.len() {
            write!(out, ",{}", csv_opt(matrix.values[i][j])).unwrap();
        }
        out.push('\n');
    }
    out
}

fn matrix_markdown(title: &str, matrix: &DisagreementMatrix) -> String {
    let mut out = format!("### {title}\n\n| |");
    for m in &matrix.methods {
        write!(out, " {m} |").unwrap();
    }
    out.push('\n');
    out.push('|');
    for _ in 0..=matrix.methods.len() {
        out.push_str("---|");
    }
    out.push('\n');
    for (i, m) in matrix.methods.iter().enumerate() {
        write!(out, "| {m} |").unwrap();
        for j in 0..matrix.methods.len() {
            match matrix.values[i][j] {
                Some(v) => write!(out, " {:.1} |", v * 100.0).unwrap(),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');
    out
}

fn mds_csv(embedding: &MdsEmbedding) -> String {
    let mut out = String::from("method,x,y\n");
    for (m, coords) in embedding.methods.iter().zip(embedding.coordinates.iter()) {
        let x = coords.first().copied().unwrap_or(0.0);
        let y = coords.get(1).copied().unwrap_or(0.0);
        writeln!(out, "{m},{},{}", csv_float(x), csv_float(y)).unwrap();
    }
    out
}

fn dataset_tables(report: &DatasetReport) -> Vec<(String, String)> {
    let analysis: &DatasetAnalysis = &report.analysis;
    let mut files = Vec::new();

    let mut excl_span = String::from("subset,exclusion,span,instances\n");
    for s in &analysis.subset_averages {
        writeln!(
            excl_span,
            "{},{},{},{}",
            s.subset,
            csv_opt(s.exclusion),
            csv_opt(s.span),
            s.instances
        )
        .unwrap();
    }
    files.push(("exclusion_span.csv".into(), excl_span));

    let mut coverage = String::from("method,found,total,rate,mean_evaluations\n");
    for c in &report.coverage {
        writeln!(
            coverage,
            "{},{},{},{},{}",
            c.method,
            c.found,
            c.total,
            csv_float(c.rate),
            csv_float(c.mean_evaluations)
        )
        .unwrap();
    }
    files.push(("coverage.csv".into(), coverage));

    let mut sparsity = String::from("method,sparsity\n");
    for s in &analysis.sparsity {
        writeln!(sparsity, "{},{}", s.method, csv_opt(s.sparsity)).unwrap();
    }
    files.push(("sparsity.csv".into(), sparsity));

    files.push(("l0.csv".into(), matrix_csv(&analysis.matrices.scaled_l0)));
    files.push((
        "feature_disagreement.csv".into(),
        matrix_csv(&analysis.matrices.feature_disagreement),
    ));
    files.push((
        "jaccard_similarity.csv".into(),
        matrix_csv(&analysis.matrices.jaccard_similarity),
    ));
    files.push((
        "jaccard_dissimilarity.csv".into(),
        matrix_csv(&analysis.matrices.jaccard_dissimilarity),
    ));

    let mut group = String::from("method,group,intra,inter\n");
    if let Some(rows) = &analysis.group_disagreement {
        for r in rows {
            writeln!(
                group,
                "{},{},{},{}",
                r.method,
                r.group.name(),
                csv_opt(r.intra),
                csv_opt(r.inter)
            )
            .unwrap();
        }
    }
    files.push(("group_disagreement.csv".into(), group));

    let mut probe = String::from("feature,excludable_rate,includable_rate,instances\n");
    for r in &analysis.probe_index {
        writeln!(
            probe,
            "{},{},{},{}",
            r.feature,
            csv_float(r.excludable_rate),
            csv_float(r.includable_rate),
            r.instances
        )
        .unwrap();
    }
    files.push(("probe_index.csv".into(), probe));

    if let Some(mds) = &analysis.mds {
        files.push(("mds.csv".into(), mds_csv(mds)));
    }

    // markdown mirror with paper-style percentages
    let mut md = format!("## Dataset {}\n\n", report.dataset);
    writeln!(
        md,
        "{} instances, {} features, train {}, test {}, sample {}, AUC {}\n",
        report.n_instances,
        report.n_features,
        report.n_train,
        report.n_test,
        report.sample_size,
        report
            .auc
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "n/a".into())
    )
    .unwrap();
    md.push_str("### Exclusion / span (%)\n\n| subset | exclusion | span |\n|---|---|---|\n");
    for s in &analysis.subset_averages {
        writeln!(
            md,
            "| {} | {} | {} |",
            s.subset,
            s.exclusion
                .map(|v| format!("{:.1}", v * 100.0))
                .unwrap_or_else(|| "-".into()),
            s.span
                .map(|v| format!("{:.1}", v * 100.0))
                .unwrap_or_else(|| "-".into())
        )
        .unwrap();
    }
    md.push('\n');
    md.push_str("### Coverage\n\n| method | found rate |\n|---|---|\n");
    for c in &report.coverage {
        writeln!(md, "| {} | {:.2} |", c.method, c.rate).unwrap();
    }
    md.push('\n');
    md.push_str(&matrix_markdown(
        "Scaled L0 (%)",
        &analysis.matrices.scaled_l0,
    ));
    md.push_str(&matrix_markdown(
        "Feature disagreement (%)",
        &analysis.matrices.feature_disagreement,
    ));
    md.push_str(&matrix_markdown(
        "Jaccard dissimilarity (%)",
        &analysis.matrices.jaccard_dissimilarity,
    ));
    if let Some(rows) = &analysis.group_disagreement {
        md.push_str("### Intra / inter group disagreement (%)\n\n| method | group | intra | inter |\n|---|---|---|---|\n");
        for r in rows {
            writeln!(
                md,
                "| {} | {} | {} | {} |",
                r.method,
                r.group.name(),
                r.intra
                    .map(|v| format!("{:.1}", v * 100.0))
                    .unwrap_or_else(|| "-".into()),
                r.inter
                    .map(|v| format!("{:.1}", v * 100.0))
                    .unwrap_or_else(|| "-".into())
            )
            .unwrap();
        }
        md.push('\n');
    }
    files.push(("tables.md".into(), md));

    files
}

fn summary_table_csv(
    datasets: &[String],
    columns: &[crate::pipeline::SummaryColumn],
) -> String {
    let mut out = String::from("dataset");
    for c in columns {
        write!(out, ",{}", c.subset).unwrap();
    }
    out.push('\n');
    for (i, d) in datasets.iter().enumerate() {
        write!(out, "{d}").unwrap();
        for c in columns {
            write!(out, ",{}", csv_opt(c.values[i])).unwrap();
        }
        out.push('\n');
    }
    write!(out, "Average").unwrap();
    for c in columns {
        write!(out, ",{}", csv_opt(c.mean)).unwrap();
    }
    out.push('\n');
    write!(out, "Standard Deviation").unwrap();
    for c in columns {
        write!(out, ",{}", csv_opt(c.std)).unwrap();
    }
    out.push('\n');
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: String,
    seed: u64,
    versions: std::collections::BTreeMap<&'a str, &'a str>,
    generated_unix_secs: u64,
}

/// Write the full report tree under `out_dir`:
///
/// ```text
/// out/
///   report.json                      # canonical payload
///   manifest.json                    # config hash, seed, versions, timestamp
///   boxplots.json
///   mds.csv                          # summary embedding (when computed)
///   summary/{exclusion,span}_summary.csv
///   explanations/<dataset>.json      # interchange export
///   tables/<dataset>/*.csv, tables.md
/// ```
pub fn write_report(
    report: &AuditReport,
    cfg: &AuditConfig,
    out_dir: &Path,
) -> Result<(), PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("report.json"), report)?;

    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        versions: [("cfaudit-core", env!("CARGO_PKG_VERSION"))].into_iter().collect(),
        generated_unix_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    #[derive(Serialize)]
    struct BoxplotsOut<'a> {
        per_dataset: std::collections::BTreeMap<String, &'a Vec<crate::pipeline::NamedBoxplot>>,
        summary: &'a Vec<crate::pipeline::NamedBoxplot>,
    }
    let boxplots = BoxplotsOut {
        per_dataset: report
            .datasets
            .iter()
            .map(|d| (d.dataset.clone(), &d.analysis.boxplots))
            .collect(),
        summary: &report.summary.boxplots,
    };
    write_json(&out_dir.join("boxplots.json"), &boxplots)?;

    let summary_dir = out_dir.join("summary");
    fs::create_dir_all(&summary_dir).map_err(io_err(&summary_dir))?;
    write_file(
        &summary_dir.join("exclusion_summary.csv"),
        &summary_table_csv(&report.summary.datasets, &report.summary.exclusion),
    )?;
    write_file(
        &summary_dir.join("span_summary.csv"),
        &summary_table_csv(&report.summary.datasets, &report.summary.span),
    )?;
    if let Some(mds) = &report.summary.mds {
        write_file(&out_dir.join("mds.csv"), &mds_csv(mds))?;
    }

    let expl_dir = out_dir.join("explanations");
    fs::create_dir_all(&expl_dir).map_err(io_err(&expl_dir))?;
    for d in &report.datasets {
        let path = expl_dir.join(format!("{}.json", slug(&d.dataset)));
        write_interchange(&d.explanations, &d.feature_space, &path)?;
    }

    for d in &report.datasets {
        let dir: PathBuf = out_dir.join("tables").join(slug(&d.dataset));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (name, contents) in dataset_tables(d) {
            write_file(&dir.join(name), &contents)?;
        }
    }
    Ok(())
}

/// Write the analysis of a standalone explanation set (the `metrics`
/// command): the same per-dataset tables, no coverage/model metadata.
pub fn write_analysis(
    analysis: &DatasetAnalysis,
    dataset: &str,
    out_dir: &Path,
) -> Result<(), PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("analysis.json"), analysis)?;

    let mut files = Vec::new();
    let mut excl_span = String::from("subset,exclusion,span,instances\n");
    for s in &analysis.subset_averages {
        writeln!(
            excl_span,
            "{},{},{},{}",
            s.subset,
            csv_opt(s.exclusion),
            csv_opt(s.span),
            s.instances
        )
        .unwrap();
    }
    files.push(("exclusion_span.csv".to_string(), excl_span));
    files.push(("l0.csv".into(), matrix_csv(&analysis.matrices.scaled_l0)));
    files.push((
        "feature_disagreement.csv".into(),
        matrix_csv(&analysis.matrices.feature_disagreement),
    ));
    files.push((
        "jaccard_similarity.csv".into(),
        matrix_csv(&analysis.matrices.jaccard_similarity),
    ));
    files.push((
        "jaccard_dissimilarity.csv".into(),
        matrix_csv(&analysis.matrices.jaccard_dissimilarity),
    ));
    let mut sparsity = String::from("method,sparsity\n");
    for s in &analysis.sparsity {
        writeln!(sparsity, "{},{}", s.method, csv_opt(s.sparsity)).unwrap();
    }
    files.push(("sparsity.csv".into(), sparsity));
    let mut probe = String::from("feature,excludable_rate,includable_rate,instances\n");
    for r in &analysis.probe_index {
        writeln!(
            probe,
            "{},{},{},{}",
            r.feature,
            csv_float(r.excludable_rate),
            csv_float(r.includable_rate),
            r.instances
        )
        .unwrap();
    }
    files.push(("probe_index.csv".into(), probe));
    if let Some(mds) = &analysis.mds {
        files.push(("mds.csv".into(), mds_csv(mds)));
    }

    let dir = out_dir.join("tables").join(slug(dataset));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, contents) in files {
        write_file(&dir.join(name), &contents)?;
    }
    Ok(())
}
