//! Parameter sweeps over one config leaf.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use twistlab_core::report::fmt17;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::record::{run_in, ResultRecord};

/// Dotted config path for an axis name or alias.
pub fn axis_path(axis: &str) -> String {
    match axis {
        "beta" => "tube.twist.beta",
        "w" | "width" => "tube.twist.width",
        "L" | "half_length" => "tube.half_length",
        "h'" | "section_h" => "grid.section_h",
        "h_coarse" => "grid.h_coarse",
        "h_fine" => "grid.h_fine",
        "n" | "gaussian_n" => "params.gaussian_n",
        "c_h" | "cH" => "params.c_h",
        "dt" => "params.dt",
        "t_end" => "params.t_end",
        "y_half_length" => "params.y_half_length",
        other => other,
    }
    .to_string()
}

fn set_leaf(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::ConfigInvalid(format!("{path} does not name a config leaf")))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::ConfigInvalid(format!("{path} does not name a config leaf")))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// `base` with the axis set to `value`.
pub fn with_axis(base: &RunConfig, axis: &str, value: f64) -> Result<RunConfig, CliError> {
    let mut tree: toml::Value =
        toml::from_str(&base.canonical()).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    match axis {
        "I_epsilon" | "eps" => set_leaf(
            &mut tree,
            "params.interval",
            toml::Value::Array(vec![toml::Value::Float(-value), toml::Value::Float(value)]),
        )?,
        "seed" => set_leaf(&mut tree, "seed", toml::Value::Integer(value as i64))?,
        "beta" => {
            let twist = tree.get("tube").and_then(|t| t.get("twist"));
            if twist.and_then(|t| t.get("kind")).and_then(toml::Value::as_str) != Some("bump") {
                return Err(CliError::ConfigInvalid("axis beta needs a bump twist".into()));
            }
            set_leaf(&mut tree, "tube.twist.beta", toml::Value::Float(value))?;
        }
        other => set_leaf(&mut tree, &axis_path(other), toml::Value::Float(value))?,
    }
    let text = toml::to_string(&tree).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    RunConfig::from_toml(&text)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub status: String,
    pub record: Option<ResultRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: String,
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status == "ok")
    }

    /// One row per value: axis value, status and every scalar summary field.
    pub fn csv(&self) -> String {
        let mut keys = BTreeSet::new();
        for e in &self.entries {
            if let Some(r) = &e.record {
                for (k, v) in &r.summary {
                    if v.is_number() || v.is_boolean() {
                        keys.insert(k.clone());
                    }
                }
            }
        }
        let mut out = format!("{},status", self.axis);
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for e in &self.entries {
            out.push_str(&fmt17(e.value));
            out.push(',');
            out.push_str(&e.status.replace(',', ";"));
            for k in &keys {
                out.push(',');
                match e.record.as_ref().and_then(|r| r.summary.get(k)) {
                    Some(Value::Bool(b)) => out.push_str(&b.to_string()),
                    Some(v) => {
                        if let Some(x) = v.as_f64() {
                            out.push_str(&fmt17(x));
                        }
                    }
                    None => {}
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs one config per value concurrently on `workers` threads (default: all
/// cores) and writes `sweep_summary.csv` and `sweep.json` into `root`.
pub fn sweep(base: &RunConfig, axis: &str, values: &[f64], root: &Path) -> Result<SweepResult, CliError> {
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| with_axis(base, axis, v))
        .collect::<Result<_, _>>()?;
    let threads = base
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let entries: Vec<SweepEntry> = pool.install(|| {
        configs
            .par_iter()
            .zip(values)
            .map(|(cfg, &value)| {
                let dir = root.join(format!("{axis}={value}"));
                match run_in(cfg, &dir) {
                    Ok(r) => SweepEntry {
                        value,
                        status: if r.passed() { "ok" } else { "invariant_failed" }.to_string(),
                        record: Some(r),
                    },
                    Err(e) => SweepEntry {
                        value,
                        status: format!("error: {e}"),
                        record: None,
                    },
                }
            })
            .collect()
    });
    let result = SweepResult {
        axis: axis.to_string(),
        entries,
    };
    std::fs::create_dir_all(root)?;
    std::fs::write(root.join("sweep_summary.csv"), result.csv())?;
    std::fs::write(root.join("sweep.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
task = "hardy"
[tube]
half_length = 20.0
[tube.section]
shape = "rectangle"
width = 3.0
height = 2.0
[tube.twist]
kind = "bump"
beta = 1.0
width = 1.0
[grid]
section_h = 0.25
h_coarse = 0.5
"#;

    #[test]
    fn aliases_set_leaves() {
        let base = RunConfig::from_toml(BASE).unwrap();
        let c = with_axis(&base, "beta", 0.5).unwrap();
        assert_eq!(c.tube.twist, twistlab_core::TwistProfile::Bump { beta: 0.5, width: 1.0 });
        let c = with_axis(&base, "I_epsilon", 0.25).unwrap();
        assert_eq!(c.params.interval, Some([-0.25, 0.25]));
        let c = with_axis(&base, "L", 40.0).unwrap();
        assert_eq!(c.tube.half_length, 40.0);
        assert!(with_axis(&base, "params.bogus", 1.0).is_err());
    }
}
