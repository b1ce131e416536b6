//! Result records and output files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::tasks::{reproduces, run_task, Invariant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub task: String,
    pub config_hash: String,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub output_dir: PathBuf,
    /// Files written, relative to `output_dir`.
    pub outputs: Vec<String>,
    pub summary: Map<String, Value>,
    pub invariants: Vec<Invariant>,
}

impl ResultRecord {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }

    /// Scalar summary field, if present and numeric.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.canonical().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Runs `cfg` and writes into its configured output directory.
pub fn run(cfg: &RunConfig) -> Result<ResultRecord, CliError> {
    run_in(cfg, &cfg.output_dir())
}

/// Runs `cfg` and writes task files, `summary.json` and `record.json` into `dir`.
pub fn run_in(cfg: &RunConfig, dir: &Path) -> Result<ResultRecord, CliError> {
    let started = now();
    let out = run_task(cfg)?;
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for (name, body) in &out.files {
        std::fs::write(dir.join(name), body)?;
        outputs.push(name.clone());
    }
    let mut summary = Map::new();
    summary.insert("task".into(), json!(cfg.task.name()));
    summary.insert("reproduces".into(), json!(reproduces(cfg.task)));
    summary.extend(out.summary);
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    outputs.push("summary.json".into());
    let record = ResultRecord {
        task: cfg.task.name().to_string(),
        config_hash: config_hash(cfg),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now(),
        output_dir: dir.to_path_buf(),
        outputs,
        summary,
        invariants: out.invariants,
    };
    std::fs::write(dir.join("record.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(record)
}
