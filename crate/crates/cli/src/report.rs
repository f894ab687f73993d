use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;

/// A reported number with its unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub value: Value,
    pub unit: &'static str,
}

/// Outcome of one declared tolerance or expected verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<bool>,
    pub passed: bool,
}

/// Discretization parameters every result was computed at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub h: f64,
    pub norm: &'static str,
    #[serde(rename = "K")]
    pub neighborhood: u32,
    pub k: Option<u32>,
    pub mass_scale: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub k: u32,
    pub error: f64,
}

/// Plot series kept alongside the report but not serialized into it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    /// Vector field dump, same schema as the field CSV.
    pub field: Option<Vec<u8>>,
    /// Arc CSV of a flow solution.
    pub flow: Option<Vec<u8>>,
    pub convergence: Option<Vec<ConvergenceRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub inputs_digest: String,
    pub params: Params,
    pub results: BTreeMap<String, Quantity>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub series: Series,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// SHA-256 over the command, the effective configuration and the bytes of
/// every referenced file.
pub fn inputs_digest(command: &str, cfg: &LoadedConfig) -> String {
    let config = serde_json::to_value(&cfg.config).expect("config serializes");
    let files: BTreeMap<&String, String> =
        cfg.referenced.iter().map(|(k, v)| (k, hex::encode(Sha256::digest(v)))).collect();
    let doc = serde_json::json!({
        "command": command,
        "config": config,
        "seed": cfg.seed,
        "mass_scale": cfg.mass_scale,
        "files": files,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}
