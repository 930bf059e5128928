//! File formats: model JSON, bench CSVs, the JSON report, SVG charts and
//! MJCF export.

pub mod mjcf;
pub mod svg;
pub mod tables;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{BenchSetup, ErrorReport};
use crate::error::Result;
use crate::model::FootModel;
use crate::solver::SolverSettings;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reads and parses a model file. Parse failures carry line and column.
pub fn load_model(path: &Path) -> Result<FootModel> {
    let text = std::fs::read_to_string(path)?;
    FootModel::from_json(&text)
}

pub fn save_model(model: &FootModel, path: &Path) -> Result<()> {
    let mut text = model.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Hex SHA-256 of the compact JSON form of `value`. Object keys are sorted,
/// so the hash ignores the key order of the source document.
pub fn canonical_hash(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("a JSON value always serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of everything that determines bench outputs.
pub fn config_hash(model: &FootModel, settings: &SolverSettings, setup: &BenchSetup) -> Result<String> {
    let value = serde_json::json!({
        "model": serde_json::to_value(model)?,
        "settings": serde_json::to_value(settings)?,
        "setup": serde_json::to_value(setup)?,
    });
    Ok(canonical_hash(&value))
}

/// What a CLI run was asked to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_path: PathBuf,
    /// Settings flags given on the command line, as `name=value`.
    pub overrides: Vec<String>,
    pub output_dir: PathBuf,
    pub tool_version: String,
    pub config_hash: String,
}

impl RunManifest {
    pub fn new(
        model_path: &Path,
        overrides: Vec<String>,
        output_dir: &Path,
        model: &FootModel,
        settings: &SolverSettings,
        setup: &BenchSetup,
    ) -> Result<Self> {
        Ok(Self {
            model_path: model_path.to_path_buf(),
            overrides,
            output_dir: output_dir.to_path_buf(),
            tool_version: TOOL_VERSION.into(),
            config_hash: config_hash(model, settings, setup)?,
        })
    }
}

/// Contents of `report.json`. Paths are left out so reruns from other
/// directories produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool_version: String,
    pub config_hash: String,
    pub report: ErrorReport,
}

impl ReportFile {
    pub fn new(manifest: &RunManifest, report: ErrorReport) -> Self {
        Self {
            tool_version: manifest.tool_version.clone(),
            config_hash: manifest.config_hash.clone(),
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
