//! Child-process model bridge.
//!
//! The bridge spawns a command (via `sh -c`) and exchanges one JSON object
//! per line over the child's stdin/stdout:
//!
//! ```text
//! -> {"id": 1, "op": "schema"}
//! <- {"id": 1, "features": ["age", ...], "positive_label": "yes"}
//! -> {"id": 2, "op": "predict_proba", "instances": [["blue", 4.5], ...]}
//! <- {"id": 2, "scores": [0.73, ...]}
//! ```
//!
//! Categorical values travel as strings, numeric as doubles; responses must
//! echo the request id. The handshake validates the announced feature list
//! against the dataset schema, and every response is checked for id, length,
//! and score range. Requests are serialized through a single child process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{ModelError, PredictionModel, Scorer};
use crate::data::{FeatureValue, Instance, Schema};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("failed to spawn bridge command '{command}': {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("bridge handshake failed: {0}")]
    Handshake(String),
    #[error("bridge io error on request {id}: {message}")]
    Io { id: u64, message: String },
    #[error("bridge child exited while request {id} was pending")]
    ChildExited { id: u64 },
    #[error("bridge response timed out after {timeout:?} on request {id}")]
    Timeout { id: u64, timeout: Duration },
    #[error("bridge response id {got} does not match request {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("malformed bridge response on request {id}: {message}")]
    Malformed { id: u64, message: String },
    #[error("bridge returned {got} scores for {expected} instances (request {id})")]
    WrongLength { id: u64, expected: usize, got: usize },
    #[error("bridge score {score} outside [0, 1] (request {id})")]
    ScoreOutOfRange { id: u64, score: f64 },
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub command: String,
    pub timeout: Duration,
}

impl BridgeConfig {
    pub fn new(command: impl Into<String>) -> Self {
        BridgeConfig {
            command: command.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Serialize)]
struct SchemaRequest<'a> {
    id: u64,
    op: &'a str,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    id: u64,
    op: &'a str,
    instances: Vec<Vec<Value>>,
}

#[derive(Deserialize)]
struct SchemaResponse {
    id: u64,
    features: Vec<String>,
    positive_label: String,
}

#[derive(Deserialize)]
struct PredictResponse {
    id: u64,
    scores: Vec<f64>,
}

struct Transport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
}

impl Transport {
    fn spawn(cfg: &BridgeConfig) -> Result<Transport, BridgeError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cfg.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Spawn {
                command: cfg.command.clone(),
                source: e,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Transport {
            child,
            stdin,
            lines: rx,
            next_id: 1,
            timeout: cfg.timeout,
        })
    }

    fn round_trip(&mut self, request: &str, id: u64) -> Result<String, BridgeError> {
        self.stdin
            .write_all(request.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| BridgeError::Io {
                id,
                message: e.to_string(),
            })?;
        loop {
            match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Ok(line);
                }
                Ok(Err(e)) => {
                    return Err(BridgeError::Io {
                        id,
                        message: e.to_string(),
                    })
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(BridgeError::Timeout {
                        id,
                        timeout: self.timeout,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(BridgeError::ChildExited { id })
                }
            }
        }
    }
}

impl Drop for Transport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct BridgeModel {
    transport: Mutex<Transport>,
    schema: Arc<Schema>,
    pub features: Vec<String>,
    pub positive_label: String,
}

impl BridgeModel {
    fn instance_to_wire(&self, inst: &Instance) -> Result<Vec<Value>, ModelError> {
        if inst.values.len() != self.schema.features.len() {
            return Err(ModelError::SchemaMismatch(format!(
                "expected {} features, got {}",
                self.schema.features.len(),
                inst.values.len()
            )));
        }
        let mut row = Vec::with_capacity(inst.values.len());
        for (fi, v) in inst.values.iter().enumerate() {
            row.push(match v {
                FeatureValue::Num(x) => serde_json::json!(x),
                FeatureValue::Cat(c) => {
                    Value::String(self.schema.features[fi].categories[*c as usize].clone())
                }
            });
        }
        Ok(row)
    }
}

impl Scorer for BridgeModel {
    fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
        let instances: Vec<Vec<Value>> = batch
            .iter()
            .map(|i| self.instance_to_wire(i))
            .collect::<Result<_, _>>()?;
        let mut transport = self.transport.lock().expect("bridge transport poisoned");
        let id = transport.next_id;
        transport.next_id += 1;
        let request = serde_json::to_string(&PredictRequest {
            id,
            op: "predict_proba",
            instances,
        })
        .expect("request serialization");
        let line = transport.round_trip(&request, id)?;
        let response: PredictResponse =
            serde_json::from_str(&line).map_err(|e| BridgeError::Malformed {
                id,
                message: e.to_string(),
            })?;
        if response.id != id {
            return Err(BridgeError::IdMismatch {
                expected: id,
                got: response.id,
            }
            .into());
        }
        if response.scores.len() != batch.len() {
            return Err(BridgeError::WrongLength {
                id,
                expected: batch.len(),
                got: response.scores.len(),
            }
            .into());
        }
        for &s in &response.scores {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(BridgeError::ScoreOutOfRange { id, score: s }.into());
            }
        }
        Ok(response.scores)
    }

    fn tag(&self) -> &str {
        "bridge"
    }
}

/// Spawn a bridge child and validate its schema handshake against the
/// dataset schema.
pub fn bridge_model(
    cfg: &BridgeConfig,
    schema: &Arc<Schema>,
    threshold: f64,
) -> Result<PredictionModel, ModelError> {
    let mut transport = Transport::spawn(cfg)?;
    let id = transport.next_id;
    transport.next_id += 1;
    let request =
        serde_json::to_string(&SchemaRequest { id, op: "schema" }).expect("request serialization");
    let line = transport.round_trip(&request, id)?;
    let response: SchemaResponse =
        serde_json::from_str(&line).map_err(|e| BridgeError::Handshake(e.to_string()))?;
    if response.id != id {
        return Err(BridgeError::IdMismatch {
            expected: id,
            got: response.id,
        }
        .into());
    }
    let expected: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
    if response.features != expected {
        return Err(BridgeError::Handshake(format!(
            "feature list mismatch: bridge announced {:?}, dataset has {:?}",
            response.features, expected
        ))
        .into());
    }
    if response.positive_label != schema.positive_label {
        return Err(BridgeError::Handshake(format!(
            "positive label mismatch: bridge '{}', dataset '{}'",
            response.positive_label, schema.positive_label
        ))
        .into());
    }
    Ok(PredictionModel::new(
        Box::new(BridgeModel {
            transport: Mutex::new(transport),
            schema: Arc::clone(schema),
            features: response.features,
            positive_label: response.positive_label,
        }),
        threshold,
    ))
}
