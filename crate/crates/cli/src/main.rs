//! `cfaudit` — audit the disagreement among post-hoc explanation methods.
//!
//! Subcommands:
//! - `run`: full audit from a JSON config (datasets, model, methods).
//! - `metrics`: disagreement tables from an explanation interchange file.
//! - `probe`: can a feature be excluded from / included in an explanation?
//! - `mds`: embed a dissimilarity matrix CSV into 2-D coordinates.
//!
//! Exit codes: 0 ok, 1 config error, 2 runtime failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::exit;

use clap::{Parser, Subcommand, ValueEnum};

use cfaudit_core::analysis::classical_mds;
use cfaudit_core::explanations::{read_interchange, Explanation};
use cfaudit_core::metrics::{effective, probe, FeatureSpace, ProbeMode};
use cfaudit_core::pipeline::{
    analyze_set, feature_space_from_sidecar, run_audit, AuditConfig, AuditFlags, MdsInput,
    PipelineError,
};
use cfaudit_core::report::{write_analysis, write_report};

#[derive(Parser)]
#[command(
    name = "cfaudit",
    version,
    about = "Counterfactual explanation disagreement audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeModeArg {
    Exclude,
    Include,
}

#[derive(Clone, Copy, ValueEnum)]
enum MdsInputArg {
    Jaccard,
    L0,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full audit described by a config file.
    Run {
        /// JSON config path.
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory for the report tree.
        #[arg(short, long)]
        output: PathBuf,
        /// Worker threads (default: all cores). Results do not depend on this.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute disagreement metrics from an interchange file.
    Metrics {
        /// Explanation interchange JSON.
        #[arg(long)]
        explanations: PathBuf,
        /// Dataset schema sidecar declaring the feature universe.
        #[arg(long)]
        features: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
        /// Treat not-found explanations as empty sets instead of dropping them.
        #[arg(long)]
        missing_as_empty: bool,
        /// Dissimilarity fed to MDS.
        #[arg(long, value_enum, default_value = "jaccard")]
        mds_input: MdsInputArg,
    },
    /// Probe whether a feature can be excluded or included by choosing a method.
    Probe {
        /// Explanation interchange JSON.
        #[arg(long)]
        explanations: PathBuf,
        /// Feature name to probe.
        #[arg(long)]
        feature: String,
        /// exclude: find methods omitting the feature; include: containing it.
        #[arg(long, value_enum)]
        mode: ProbeModeArg,
        /// Optional schema sidecar; validates the feature name against the
        /// full universe instead of the names observed in the file.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        missing_as_empty: bool,
    },
    /// Classical MDS on a dissimilarity matrix CSV (header row + method column).
    Mds {
        #[arg(long)]
        matrix: PathBuf,
        /// Output CSV of method,x,y coordinates.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        dims: usize,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap usage problems are config errors per the exit-code contract
            let _ = e.print();
            exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("cfaudit: {e}");
            exit(e.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run {
            config,
            output,
            jobs,
            seed,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| PipelineError::Io {
                path: config.display().to_string(),
                source: e,
            })?;
            let mut cfg = AuditConfig::from_json(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let report = run_audit(&cfg, jobs)?;
            write_report(&report, &cfg, &output)?;
            for d in &report.datasets {
                let found: usize = d.coverage.iter().map(|c| c.found).sum();
                let total: usize = d.coverage.iter().map(|c| c.total).sum();
                println!(
                    "{}: {} features, sample {}, explanations {}/{} found, AUC {}",
                    d.dataset,
                    d.n_features,
                    d.sample_size,
                    found,
                    total,
                    d.auc
                        .map(|a| format!("{a:.3}"))
                        .unwrap_or_else(|| "n/a".into())
                );
            }
            println!("report written to {}", output.display());
            Ok(())
        }
        Command::Metrics {
            explanations,
            features,
            output,
            missing_as_empty,
            mds_input,
        } => {
            let space = feature_space_from_sidecar(&features)?;
            let set = read_interchange(&explanations, &space)?;
            let flags = AuditFlags {
                missing_as_empty,
                mds_input: match mds_input {
                    MdsInputArg::Jaccard => MdsInput::Jaccard,
                    MdsInputArg::L0 => MdsInput::L0,
                },
                ..AuditFlags::default()
            };
            let analysis = analyze_set(&set, &space, &flags)?;
            write_analysis(&analysis, &set.dataset, &output)?;
            println!(
                "{}: {} methods, {} instances; tables written to {}",
                set.dataset,
                set.methods.len(),
                set.instances().len(),
                output.display()
            );
            Ok(())
        }
        Command::Probe {
            explanations,
            feature,
            mode,
            features,
            missing_as_empty,
        } => {
            let space = match &features {
                Some(path) => feature_space_from_sidecar(path)?,
                None => {
                    // fall back to the names observed in the file plus the
                    // probed name, so an unused feature probes as false
                    let names = observed_names(&explanations, &feature)?;
                    FeatureSpace::from_names(names)
                }
            };
            let set = read_interchange(&explanations, &space)?;
            let target = space.index_of(&feature).ok_or_else(|| {
                PipelineError::Config(format!("feature '{feature}' not in the schema"))
            })?;
            let mode = match mode {
                ProbeModeArg::Exclude => ProbeMode::Exclude,
                ProbeModeArg::Include => ProbeMode::Include,
            };

            let mut possible_count = 0usize;
            let mut used = 0usize;
            let mut witness_counts: BTreeMap<String, usize> = BTreeMap::new();
            for origin in set.instances() {
                let records = set.for_instance(origin);
                let usable = effective(&records, missing_as_empty);
                if usable.is_empty() {
                    continue;
                }
                let refs: Vec<&Explanation> = usable.iter().map(|c| c.as_ref()).collect();
                let outcome = probe(&refs, target, mode, &space)?;
                used += 1;
                if outcome.possible {
                    possible_count += 1;
                }
                for w in outcome.witnesses {
                    *witness_counts.entry(w).or_default() += 1;
                }
            }
            let out = serde_json::json!({
                "feature": feature,
                "mode": match mode {
                    ProbeMode::Exclude => "exclude",
                    ProbeMode::Include => "include",
                },
                "instances": used,
                "possible_instances": possible_count,
                "possible_rate": if used > 0 { possible_count as f64 / used as f64 } else { 0.0 },
                "witness_counts": witness_counts,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
            Ok(())
        }
        Command::Mds {
            matrix,
            output,
            dims,
        } => {
            let (methods, values) = read_matrix_csv(&matrix)?;
            let embedding = classical_mds(&methods, &values, dims)?;
            let mut out = String::from("method,x,y\n");
            for (m, coords) in embedding.methods.iter().zip(embedding.coordinates.iter()) {
                let x = coords.first().copied().unwrap_or(0.0);
                let y = coords.get(1).copied().unwrap_or(0.0);
                out.push_str(&format!("{m},{x},{y}\n"));
            }
            std::fs::write(&output, out).map_err(|e| PipelineError::Io {
                path: output.display().to_string(),
                source: e,
            })?;
            println!(
                "embedded {} methods, stress {:.6}; coordinates in {}",
                embedding.methods.len(),
                embedding.stress,
                output.display()
            );
            Ok(())
        }
    }
}

fn observed_names(path: &PathBuf, extra: &str) -> Result<Vec<String>, PipelineError> {
    #[derive(serde::Deserialize)]
    struct Head {
        records: Vec<Rec>,
    }
    #[derive(serde::Deserialize)]
    struct Rec {
        features: Vec<String>,
    }
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let head: Head = serde_json::from_reader(file)
        .map_err(|e| PipelineError::Config(format!("interchange file {}: {e}", path.display())))?;
    let mut names: Vec<String> = Vec::new();
    for r in head.records {
        for f in r.features {
            if !names.contains(&f) {
                names.push(f);
            }
        }
    }
    if !names.iter().any(|n| n == extra) {
        names.push(extra.to_string());
    }
    Ok(names)
}

fn read_matrix_csv(path: &PathBuf) -> Result<(Vec<String>, Vec<Vec<f64>>), PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let bad = |msg: String| PipelineError::Config(format!("matrix {}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let methods: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    if methods.is_empty() {
        return Err(bad("header has no method columns".into()));
    }
    let mut values = Vec::new();
    for line in lines {
        let mut cells = line.split(',');
        let _name = cells.next();
        let row: Vec<f64> = cells
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad number: {e}")))?;
        if row.len() != methods.len() {
            return Err(bad(format!(
                "row width {} does not match {} methods",
                row.len(),
                methods.len()
            )));
        }
        values.push(row);
    }
    if values.len() != methods.len() {
        return Err(bad(format!(
            "{} rows for {} methods",
            values.len(),
            methods.len()
        )));
    }
    Ok((methods, values))
}
