//! Serializable evaluation report.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Result of one retrieval evaluation. Schema version 1.
///
/// `cmc` values are percentages, `map` is in `[0, 1]`.
/// `per_query_ranks[i]` lists gallery identities for query `i`, nearest
/// first.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub version: u32,
    pub config_fingerprint: String,
    pub cmc: BTreeMap<usize, f64>,
    pub map: f64,
    pub per_query_ranks: Vec<Vec<usize>>,
    pub query_rates: BTreeSet<u32>,
    pub num_query: usize,
    pub num_gallery: usize,
}

impl EvalReport {
    pub fn rank1(&self) -> f64 {
        self.cmc.get(&1).copied().unwrap_or(0.0)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Checkpoint(format!("report serialize: {e}")))?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&body).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Structural sanity: CMC non-decreasing in rank and bounded mAP.
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0;
        for (&k, &v) in &self.cmc {
            if v + 1e-9 < prev {
                return Err(Error::Protocol(format!(
                    "cmc decreases at rank {k}: {v} < {prev}"
                )));
            }
            prev = v;
        }
        if !(0.0..=1.0).contains(&self.map) {
            return Err(Error::Protocol(format!("map out of range: {}", self.map)));
        }
        Ok(())
    }
}
