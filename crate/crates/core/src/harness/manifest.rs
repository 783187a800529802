//! Run manifest written next to each report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{AcbError, Result};

/// Per-replicate seed rule, recorded verbatim in every manifest.
pub const SEED_RULE: &str = "seed_rep = derive_seed(master_seed, label_id(\"<tag>|<truth>|<n>\"), rep): \
three chained splitmix64 finalisers over master_seed, the FNV-1a 64 hash of the label and rep; \
design point i uses normal index i-1 of the ChaCha8 Box-Muller stream keyed by seed_rep";

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CalibratedConstants {
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l_const: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "M_const", skip_serializing_if = "Option::is_none")]
    pub m_const: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_hat: Option<f64>,
    /// Calibrated values that vary with `n`, keyed by name then `n`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_n: BTreeMap<String, BTreeMap<usize, f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub constants: CalibratedConstants,
    pub seed_rule: String,
    pub rows: usize,
    pub started_unix: u64,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }
}

/// `<out>.manifest.json`
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| io_error(e, dir))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(e, path))
}

fn io_error(e: std::io::Error, path: &Path) -> AcbError {
    AcbError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
