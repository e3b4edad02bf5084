//! Run manifests: everything needed to re-execute a run bit-identically.

use std::path::Path;

use gjn_core::network::NetworkFile;
use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "gjn-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRef {
    pub r: String,
    pub horizon: String,
    pub seed: u64,
    pub replications: u64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub code_version: String,
    pub subcommand: String,
    pub spec_source: String,
    pub spec_hash: String,
    pub spec: NetworkFile,
    pub seed: u64,
    pub jobs: usize,
    pub command: Command,
    pub started: String,
    pub finished: String,
    pub files: Vec<String>,
    pub points: Vec<PointRef>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("{}: malformed manifest: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(CliError::invalid(format!(
                "{}: manifest schema {} is not {MANIFEST_SCHEMA}",
                path.display(),
                m.schema
            )));
        }
        Ok(m)
    }
}
