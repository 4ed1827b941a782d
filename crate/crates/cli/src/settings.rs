//! Optional JSON settings file. Explicit flags win over file values, which
//! win over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub threads: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "L")]
    pub n_basis: Option<usize>,
    pub degree: Option<usize>,
    /// Same syntax as `--penalty`.
    pub penalty: Option<String>,
    /// Same syntax as `--lambda`.
    pub lambda: Option<String>,
    pub truncate: Option<usize>,
    pub max_outer_iters: Option<usize>,
    pub tol: Option<f64>,
    pub kmax: Option<usize>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    /// Same syntax as `--cells`.
    pub cells: Option<String>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub data_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub queue_capacity: Option<usize>,
    pub cors_origin: Option<String>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Settings>(r#"{"K": 3, "colour": 1}"#).is_err());
        let s: Settings = serde_json::from_str(r#"{"K": 3, "lambda": "fixed:2"}"#).unwrap();
        assert_eq!((s.k, s.lambda.as_deref()), (Some(3), Some("fixed:2")));
    }
}
