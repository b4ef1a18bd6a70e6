//! On-disk layout of an experiment run.
//!
//! ```text
//! <out>/manifest.toml
//! <out>/dataset.pxtq              every trial collected so far
//! <out>/errors.csv                one row per trial
//! <out>/checkpoints/trial_NN.ddmc model used to drive trial NN
//! <out>/losses/trial_NN.csv       retraining curve before trial NN
//! <out>/control/trial_NN.csv      greedy evaluation rollout of trial NN
//! <out>/latent_map.csv            final encoder over the first joint angle
//! <out>/filmstrip/start_NNNN.pgm  truth above prediction, held-out data
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis;
use crate::ddm::{Checkpoint, DdmModel};
use crate::error::{Error, Result};
use crate::harness::csv;
use crate::harness::dataset::DatasetFile;
use crate::harness::manifest::{RunManifest, RunStatus, TrialSummary};
use crate::nncore::PcaProjector;
use crate::render;
use crate::rlloop::{self, ExperimentConfig, ExperimentObserver, ExperimentOutcome, SeedStream, TrialRecord, Trajectory};

/// Prediction horizon of the filmstrips.
pub const FILMSTRIP_HORIZON: usize = 8;
/// Number of filmstrips written.
pub const FILMSTRIP_COUNT: usize = 4;
/// Angle step of the latent map, degrees.
pub const LATENT_MAP_STEP_DEG: f64 = 5.0;

/// Observer that persists everything as the run progresses.
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: RunManifest,
    trajectories: Vec<Trajectory>,
    records: Vec<TrialRecord>,
}

fn rel(name: &str, k: usize, ext: &str) -> String {
    format!("{name}/trial_{k:02}.{ext}")
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        for sub in ["", "checkpoints", "losses", "control", "filmstrip"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut manifest = RunManifest::new(config.clone());
        manifest.artifacts.dataset = "dataset.pxtq".into();
        manifest.artifacts.error_curve = "errors.csv".into();
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            manifest,
            trajectories: Vec::new(),
            records: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn flush(&mut self) -> Result<()> {
        if !self.trajectories.is_empty() {
            DatasetFile::from_trajectories(self.manifest.config.env, &self.trajectories)?.save(&self.path("dataset.pxtq"))?;
        }
        let errors = self.path("errors.csv");
        fs::write(&errors, csv::error_curve_csv(&self.records)).map_err(|e| Error::io(&errors, e))?;
        self.manifest.save(&self.path("manifest.toml"))
    }

    fn push(&mut self, record: &TrialRecord) -> Result<()> {
        let k = record.index;
        if record.kind == rlloop::TrialKind::Controlled {
            let c = rel("control", k, "csv");
            csv::write_control_csv(&self.path(&c), &record.evaluation, self.manifest.config.env.n_u())?;
            self.manifest.artifacts.control_logs.push(c);
        }
        if !record.train_history.is_empty() {
            let l = rel("losses", k, "csv");
            csv::write_loss_csv(&self.path(&l), &record.train_history)?;
            self.manifest.artifacts.loss_curves.push(l);
        }
        self.trajectories.push(record.trajectory.clone());
        self.manifest.trials.push(TrialSummary::of(record));
        self.records.push(record.clone());
        self.flush()
    }

    /// Write the final-model artifacts and mark the run completed.
    pub fn finish(&mut self, outcome: &ExperimentOutcome) -> Result<()> {
        let cfg = &outcome.config;
        let scene = cfg.scene();
        let map = analysis::latent_map(&outcome.model, &outcome.pca, &scene, LATENT_MAP_STEP_DEG)?;
        csv::write_latent_map_csv(&self.path("latent_map.csv"), &map)?;
        self.manifest.artifacts.latent_map = Some("latent_map.csv".into());

        let (held_out, _) = rlloop::random_trial(
            cfg.env,
            &cfg.params,
            &scene,
            cfg.dt,
            cfg.trial_frames,
            rlloop::derive_seed(cfg.seed, SeedStream::HeldOut, 0),
        )?;
        for start in analysis::spread_starts(held_out.len(), FILMSTRIP_HORIZON, FILMSTRIP_COUNT) {
            let strip = analysis::filmstrip(&outcome.model, &outcome.pca, &held_out, start, FILMSTRIP_HORIZON)?;
            let name = format!("filmstrip/start_{start:04}.pgm");
            render::write_pgm(&strip, &self.path(&name))?;
            self.manifest.artifacts.filmstrips.push(name);
        }
        self.manifest.status = RunStatus::Completed;
        self.flush()
    }
}

impl ExperimentObserver for ArtifactWriter {
    fn bootstrap(&mut self, _config: &ExperimentConfig, _pca: &PcaProjector, record: &TrialRecord) -> Result<()> {
        self.push(record)
    }

    fn trial_finished(&mut self, record: &TrialRecord, model: &DdmModel, pca: &PcaProjector) -> Result<()> {
        let name = rel("checkpoints", record.index, "ddmc");
        Checkpoint::new(model.clone(), self.manifest.config.train.alpha, pca.clone())?.save(&self.path(&name))?;
        self.manifest.artifacts.checkpoints.push(name);
        self.push(record)
    }

    fn aborted(&mut self, trial: usize, _records: &[TrialRecord], error: &Error) {
        self.manifest.status = RunStatus::Aborted;
        self.manifest.aborted_at_trial = Some(trial);
        self.manifest.error = Some(error.to_string());
        // The original error is what the caller reports.
        let _ = self.flush();
    }
}
