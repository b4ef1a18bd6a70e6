//! Run manifests, stored as TOML.
//!
//! A manifest records the complete experiment configuration (seed
//! included), the artifacts written and one summary row per trial. Running
//! the stored configuration again reproduces every per-trial error bit for
//! bit; [`replay`] does exactly that and reports any difference.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rlloop::{self, ExperimentConfig, NoObserver, TrialKind, TrialRecord};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArtifactPaths {
    /// Paths are relative to the manifest's directory.
    pub dataset: String,
    pub error_curve: String,
    #[serde(default)]
    pub checkpoints: Vec<String>,
    #[serde(default)]
    pub loss_curves: Vec<String>,
    #[serde(default)]
    pub control_logs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_map: Option<String>,
    #[serde(default)]
    pub filmstrips: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub kind: TrialKind,
    pub frames: usize,
    pub final_error_deg: f64,
    pub final_link_errors_deg: Vec<f64>,
    pub random_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    pub train_secs: f64,
    pub control_secs: f64,
}

impl TrialSummary {
    pub fn of(r: &TrialRecord) -> Self {
        TrialSummary {
            index: r.index,
            kind: r.kind,
            frames: r.trajectory.len(),
            final_error_deg: r.evaluation.final_error_deg,
            final_link_errors_deg: r.evaluation.final_link_errors_deg.clone(),
            random_fraction: r.random_fraction,
            final_train_loss: r.train_history.last().map(|l| l.total),
            train_secs: r.train_secs,
            control_secs: r.control_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted_at_trial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub artifacts: ArtifactPaths,
    #[serde(default)]
    pub trials: Vec<TrialSummary>,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> Self {
        RunManifest {
            format_version: MANIFEST_VERSION,
            status: RunStatus::Running,
            aborted_at_trial: None,
            error: None,
            config,
            artifacts: ArtifactPaths::default(),
            trials: Vec::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("manifest serialisation: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| Error::parse("manifest", "toml", e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::parse("manifest", "format_version", format!("unsupported version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunManifest::from_toml(&text)
    }
}

/// One trial whose replayed error differs from the recorded one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub trial: usize,
    pub recorded: f64,
    pub replayed: f64,
}

/// Re-run the manifest's configuration and compare per-trial errors
/// bitwise. Only the trials the manifest recorded are compared.
pub fn replay(manifest: &RunManifest) -> Result<Vec<ReplayMismatch>> {
    let outcome = rlloop::run_experiment(&manifest.config, &mut NoObserver)?;
    let mut out = Vec::new();
    for s in &manifest.trials {
        let replayed = outcome
            .records
            .get(s.index)
            .map(|r| r.evaluation.final_error_deg)
            .ok_or_else(|| Error::InvalidArgument(format!("replay produced no trial {}", s.index)))?;
        if replayed.to_bits() != s.final_error_deg.to_bits() {
            out.push(ReplayMismatch {
                trial: s.index,
                recorded: s.final_error_deg,
                replayed,
            });
        }
    }
    Ok(out)
}
