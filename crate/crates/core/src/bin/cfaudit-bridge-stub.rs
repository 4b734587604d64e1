//! Minimal external model speaking the bridge protocol.
//!
//! Serves as a demo bridge child and as the test double for the bridge
//! transport. Modes:
//!
//! ```text
//! cfaudit-bridge-stub --features x1,x2 --positive-label yes constant 0.5
//! cfaudit-bridge-stub --features x1,x2 --positive-label yes linear 0.4,-0.2 0.5
//! cfaudit-bridge-stub --features x1,x2 --positive-label yes stump 0 0.0
//! cfaudit-bridge-stub --features x1,x2 --positive-label yes die-after 1
//! ```
//!
//! `linear` computes `w . x + bias` over numeric features (categorical
//! values count as 0) and clamps into [0, 1]; `stump` scores 1.0 when the
//! chosen feature exceeds the threshold; `die-after N` answers N predict
//! requests and then exits mid-request.

use std::io::{BufRead, Write};
use std::process::exit;

use serde_json::{json, Value};

enum Mode {
    Constant(f64),
    Linear { weights: Vec<f64>, bias: f64 },
    Stump { feature: usize, threshold: f64 },
    DieAfter(usize),
}

struct Args {
    features: Vec<String>,
    positive_label: String,
    mode: Mode,
}

fn usage() -> ! {
    eprintln!(
        "usage: cfaudit-bridge-stub --features <a,b,..> --positive-label <l> \
         (constant <p> | linear <w1,w2,..> <bias> | stump <idx> <t> | die-after <n>)"
    );
    exit(64);
}

fn parse_args() -> Args {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut features = None;
    let mut positive_label = None;
    let mut rest = Vec::new();
    let mut i = 0;
    while i < argv.len() {
        match argv[i].as_str() {
            "--features" => {
                i += 1;
                features = Some(
                    argv.get(i)
                        .unwrap_or_else(|| usage())
                        .split(',')
                        .map(str::to_string)
                        .collect::<Vec<_>>(),
                );
            }
            "--positive-label" => {
                i += 1;
                positive_label = Some(argv.get(i).unwrap_or_else(|| usage()).clone());
            }
            other => rest.push(other.to_string()),
        }
        i += 1;
    }
    let mode = match rest.first().map(String::as_str) {
        Some("constant") => Mode::Constant(rest.get(1).and_then(|s| s.parse().ok()).unwrap_or_else(|| usage())),
        Some("linear") => {
            let weights = rest
                .get(1)
                .unwrap_or_else(|| usage())
                .split(',')
                .map(|w| w.parse().unwrap_or_else(|_| usage()))
                .collect();
            let bias = rest.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.0);
            Mode::Linear { weights, bias }
        }
        Some("stump") => Mode::Stump {
            feature: rest.get(1).and_then(|s| s.parse().ok()).unwrap_or_else(|| usage()),
            threshold: rest.get(2).and_then(|s| s.parse().ok()).unwrap_or_else(|| usage()),
        },
        Some("die-after") => {
            Mode::DieAfter(rest.get(1).and_then(|s| s.parse().ok()).unwrap_or_else(|| usage()))
        }
        _ => usage(),
    };
    Args {
        features: features.unwrap_or_else(|| usage()),
        positive_label: positive_label.unwrap_or_else(|| usage()),
        mode,
    }
}

fn numeric(v: &Value) -> f64 {
    v.as_f64().unwrap_or(0.0)
}

fn score(mode: &Mode, row: &[Value]) -> f64 {
    match mode {
        Mode::Constant(p) => *p,
        Mode::Linear { weights, bias } => {
            let dot: f64 = weights
                .iter()
                .zip(row.iter())
                .map(|(w, v)| w * numeric(v))
                .sum();
            (dot + bias).clamp(0.0, 1.0)
        }
        Mode::Stump { feature, threshold } => {
            if numeric(&row[*feature]) > *threshold {
                1.0
            } else {
                0.0
            }
        }
        Mode::DieAfter(_) => 0.5,
    }
}

fn main() {
    let args = parse_args();
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut served = 0usize;

    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) if !l.trim().is_empty() => l,
            Ok(_) => continue,
            Err(_) => break,
        };
        let request: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("stub: bad request: {e}");
                exit(1);
            }
        };
        let id = request["id"].clone();
        match request["op"].as_str() {
            Some("schema") => {
                let reply = json!({
                    "id": id,
                    "features": args.features,
                    "positive_label": args.positive_label,
                });
                writeln!(out, "{reply}").unwrap();
                out.flush().unwrap();
            }
            Some("predict_proba") => {
                if let Mode::DieAfter(n) = args.mode {
                    if served >= n {
                        // simulate a crash while the request is pending
                        exit(1);
                    }
                    served += 1;
                }
                let rows = request["instances"].as_array().cloned().unwrap_or_default();
                let scores: Vec<f64> = rows
                    .iter()
                    .map(|r| score(&args.mode, r.as_array().map(Vec::as_slice).unwrap_or(&[])))
                    .collect();
                let reply = json!({ "id": id, "scores": scores });
                writeln!(out, "{reply}").unwrap();
                out.flush().unwrap();
            }
            _ => {
                eprintln!("stub: unknown op in {line}");
                exit(1);
            }
        }
    }
}
