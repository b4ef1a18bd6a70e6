//! The work behind each CLI subcommand, callable without a process.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis;
use crate::ddm::{self, Architecture, Checkpoint, DdmDims, DdmModel, LossBreakdown, TrainConfig};
use crate::error::{Error, Result};
use crate::harness::csv;
use crate::harness::dataset::DatasetFile;
use crate::nmpc::NmpcConfig;
use crate::nncore::{AdamConfig, PcaProjector};
use crate::render::{self, Frame, Scene};
use crate::rlloop::{self, Evaluation, NmpcController, Trajectory};
use crate::simworld::{ControlSignal, Env, PendulumParams, PendulumState, DEFAULT_DT};

/// Default frame side for an environment.
pub fn default_frame_size(env: Env) -> usize {
    match env {
        Env::Single => 40,
        Env::Double => 48,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenLoopPolicy {
    Zero,
    Random,
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub env: Env,
    pub steps: usize,
    pub policy: OpenLoopPolicy,
    pub seed: u64,
    pub frame_size: usize,
    pub out: PathBuf,
    pub dump_frames: Option<PathBuf>,
}

fn dump_frames(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        render::write_pgm(f, &dir.join(format!("frame_{i:05}.pgm")))?;
    }
    Ok(())
}

/// Record one open-loop trial from rest.
pub fn simulate(args: &SimulateArgs) -> Result<DatasetFile> {
    if args.steps == 0 {
        return Err(Error::InvalidArgument("--steps must be at least 1".into()));
    }
    let params = args.env.default_params();
    let scene = Scene::square(args.frame_size, &params.link_lengths);
    let traj = match args.policy {
        OpenLoopPolicy::Random => rlloop::random_trial(args.env, &params, &scene, DEFAULT_DT, args.steps, args.seed)?.0,
        OpenLoopPolicy::Zero => {
            let n_u = args.env.n_u();
            rlloop::run_episode(&PendulumState::rest(args.env.links()), &params, &scene, DEFAULT_DT, args.steps, |_, _| Ok(ControlSignal::zeros(n_u)))?.0
        }
    };
    let data = DatasetFile::from_trajectories(args.env, std::slice::from_ref(&traj))?;
    data.save(&args.out)?;
    if let Some(dir) = &args.dump_frames {
        dump_frames(dir, &traj.frames)?;
    }
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub arch: Env,
    pub alpha: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Defaults to 100 (single) or 512 (double).
    pub pca_components: Option<usize>,
    pub out_checkpoint: PathBuf,
    pub metrics_csv: Option<PathBuf>,
}

/// Fit the PCA on the first trial of a dataset and train a fresh model on
/// every trial.
pub fn train(args: &TrainArgs) -> Result<(Checkpoint, Vec<LossBreakdown>)> {
    let data = DatasetFile::load(&args.data)?;
    let base = rlloop::ExperimentConfig::for_env(args.arch);
    if data.n_u != args.arch.n_u() {
        return Err(Error::dim(format!("dataset n_u for the {} architecture", args.arch), args.arch.n_u(), data.n_u));
    }
    let trajectories = data.trajectories();
    let first = trajectories.first().ok_or_else(|| Error::InvalidArgument("dataset has no trials".into()))?;
    let p = args.pca_components.unwrap_or(base.pca_components);
    if p > first.len() || p > data.width * data.height {
        return Err(Error::InvalidArgument(format!(
            "pca_components = {p} needs at least that many frames in the first trial ({}) and pixels per frame ({})",
            first.len(),
            data.width * data.height
        )));
    }
    let pixels: Vec<Vec<f64>> = first.frames.iter().map(|f| f.pixels.clone()).collect();
    let pca = PcaProjector::fit(&pixels, p)?;
    let mut triples = Vec::new();
    for t in &trajectories {
        triples.extend(rlloop::trial_transitions(&pca, t)?);
    }
    if triples.is_empty() {
        return Err(Error::InvalidArgument("dataset yields no transitions (trials need 3 frames)".into()));
    }
    let dims = DdmDims {
        n_x: p,
        n_z: base.latent_dim,
        n_u: data.n_u,
    };
    let arch = match args.arch {
        Env::Single => Architecture::single(),
        Env::Double => Architecture::double(),
    };
    let model = DdmModel::init(dims, &arch, args.seed)?;
    let cfg = TrainConfig {
        alpha: args.alpha,
        epochs: args.epochs,
        batch_size: args.batch,
        adam: AdamConfig {
            step_size: args.learning_rate,
            ..AdamConfig::default()
        },
        seed: args.seed,
    };
    let (model, history) = ddm::train(&model, &triples, &cfg)?;
    let ckpt = Checkpoint::new(model, args.alpha, pca)?;
    ckpt.save(&args.out_checkpoint)?;
    if let Some(path) = &args.metrics_csv {
        csv::write_loss_csv(path, &history)?;
    }
    Ok((ckpt, history))
}

/// Frame size implied by a checkpoint's PCA.
pub fn checkpoint_frame_size(ckpt: &Checkpoint, env: Env) -> Result<usize> {
    let raw = ckpt.pca.raw_dim();
    let side = (raw as f64).sqrt().round() as usize;
    if side * side != raw {
        return Err(Error::parse("checkpoint", "raw_dim", format!("{raw} pixels is not a square frame")));
    }
    if ckpt.model.dims().n_u != env.n_u() {
        return Err(Error::dim(format!("checkpoint n_u for the {env} pendulum"), env.n_u(), ckpt.model.dims().n_u));
    }
    Ok(side)
}

#[derive(Debug, Clone)]
pub struct ControlArgs {
    pub checkpoint: PathBuf,
    pub env: Env,
    /// Target angle of the first joint, degrees; further joints straight.
    pub ref_angle_deg: f64,
    pub horizon: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
    pub metrics_csv: Option<PathBuf>,
    pub dump_frames: Option<PathBuf>,
}

pub struct ControlOutcome {
    pub evaluation: Evaluation,
    pub trajectory: Trajectory,
    pub target: Vec<f64>,
}

/// Greedy NMPC from rest toward the reference pose.
pub fn control(args: &ControlArgs) -> Result<ControlOutcome> {
    if args.steps == 0 {
        return Err(Error::InvalidArgument("--steps must be at least 1".into()));
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let size = checkpoint_frame_size(&ckpt, args.env)?;
    let params: PendulumParams = args.env.default_params();
    let scene = Scene::square(size, &params.link_lengths);
    let mut target = vec![0.0; args.env.links()];
    target[0] = args.ref_angle_deg.to_radians();
    let reference = rlloop::capture(&PendulumState::at_angles(&target), &scene)?;
    let cfg = NmpcConfig {
        horizon: args.horizon,
        lambda: args.lambda,
        torque_limit: params.torque_limit,
        iterations: args.iterations,
        restarts: args.restarts,
        seed: args.seed,
        ..NmpcConfig::default()
    };
    let mut ctl = NmpcController::new(&ckpt.model, &ckpt.pca, &reference, cfg)?;
    let mut costs = Vec::with_capacity(args.steps);
    let (traj, states) = rlloop::run_episode(&PendulumState::rest(args.env.links()), &params, &scene, DEFAULT_DT, args.steps, |_, frame| {
        let (u, plan) = ctl.act(frame)?;
        costs.push(plan.cost);
        Ok(u)
    })?;
    let controls = traj.controls.iter().map(|u| u.0.clone()).collect();
    let evaluation = Evaluation::from_states(&states, &target, controls, costs);
    if let Some(path) = &args.metrics_csv {
        csv::write_control_csv(path, &evaluation, args.env.n_u())?;
    }
    if let Some(dir) = &args.dump_frames {
        dump_frames(dir, &traj.frames)?;
    }
    Ok(ControlOutcome {
        evaluation,
        trajectory: traj,
        target,
    })
}

/// Encode static frames around the first joint's circle.
pub fn latent_map(checkpoint: &Path, env: Env, step_deg: f64, out_csv: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let size = checkpoint_frame_size(&ckpt, env)?;
    let scene = Scene::square(size, &env.default_params().link_lengths);
    let rows = analysis::latent_map(&ckpt.model, &ckpt.pca, &scene, step_deg)?;
    csv::write_latent_map_csv(out_csv, &rows)?;
    Ok(rows)
}
