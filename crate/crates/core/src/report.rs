//! JSON report envelope `{format_version, config, results, metrics, status}`.
//!
//! Wall-clock timings are only included when asked for, so that reports of
//! identical runs are byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn new(config: serde_json::Value, results: serde_json::Value, status: Status) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            results,
            metrics: BTreeMap::new(),
            status,
            timings: None,
        }
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
