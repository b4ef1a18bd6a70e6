//! The adaptive learning loop: a random bootstrap trial, then alternating
//! retraining on everything collected so far and ε-greedy NMPC trials.
//!
//! True pendulum states stay inside [`run_episode`]; policies only ever
//! receive rendered frames, and the training set is built from frames and
//! controls alone.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddm::{self, Architecture, DdmDims, DdmModel, LossBreakdown, TrainConfig, TransitionTriple};
use crate::error::{Error, Result};
use crate::nmpc::{self, ControlPlan, FrameEncoder, NmpcConfig};
use crate::nncore::PcaProjector;
use crate::render::{self, Frame, Scene};
use crate::simworld::{self, ControlSignal, Env, PendulumParams, PendulumState};

/// Number of trailing steps averaged into a trial's error.
pub const FINAL_WINDOW: usize = 10;

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedStream {
    Bootstrap = 1,
    Exploration = 2,
    Planning = 3,
    Training = 4,
    Init = 5,
    HeldOut = 6,
}

/// Deterministically mix a run seed, a stream and an index into a seed.
pub fn derive_seed(seed: u64, stream: SeedStream, index: u64) -> u64 {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ stream as u64) ^ index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: Env,
    /// Side of the square frames, pixels.
    pub frame_size: usize,
    /// Number of controlled trials after the random bootstrap trial.
    pub trials: usize,
    /// Frames recorded per trial.
    pub trial_frames: usize,
    /// Length of the greedy evaluation rollout after each trial.
    pub eval_steps: usize,
    pub epsilon: f64,
    pub pca_components: usize,
    /// Refit the PCA on every frame collected so far before each retraining
    /// and carry the model over with [`DdmModel::rebase`]. When false the
    /// bootstrap PCA is kept for the whole run.
    pub refit_pca: bool,
    pub latent_dim: usize,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub nmpc: NmpcConfig,
    pub params: PendulumParams,
    pub dt: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn single() -> Self {
        let params = Env::Single.default_params();
        ExperimentConfig {
            env: Env::Single,
            frame_size: 40,
            trials: 18,
            trial_frames: 500,
            eval_steps: 100,
            epsilon: 0.2,
            pca_components: 100,
            refit_pca: false,
            latent_dim: 2,
            arch: Architecture::single(),
            train: TrainConfig::default(),
            nmpc: NmpcConfig {
                torque_limit: params.torque_limit,
                ..NmpcConfig::default()
            },
            params,
            dt: simworld::DEFAULT_DT,
            seed: 0,
        }
    }

    pub fn double() -> Self {
        let params = Env::Double.default_params();
        ExperimentConfig {
            env: Env::Double,
            frame_size: 48,
            trials: 7,
            trial_frames: 1000,
            eval_steps: 100,
            epsilon: 0.2,
            pca_components: 512,
            refit_pca: false,
            latent_dim: 4,
            arch: Architecture::double(),
            train: TrainConfig::default(),
            nmpc: NmpcConfig {
                torque_limit: params.torque_limit,
                ..NmpcConfig::default()
            },
            params,
            dt: simworld::DEFAULT_DT,
            seed: 0,
        }
    }

    /// Double pendulum on 24 × 24 frames with 128 PCA components.
    pub fn double_half_scale() -> Self {
        ExperimentConfig {
            frame_size: 24,
            pca_components: 128,
            ..ExperimentConfig::double()
        }
    }

    pub fn for_env(env: Env) -> Self {
        match env {
            Env::Single => ExperimentConfig::single(),
            Env::Double => ExperimentConfig::double(),
        }
    }

    pub fn scene(&self) -> Scene {
        Scene::square(self.frame_size, &self.params.link_lengths)
    }

    pub fn dims(&self) -> DdmDims {
        DdmDims {
            n_x: self.pca_components,
            n_z: self.latent_dim,
            n_u: self.env.n_u(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.nmpc.validate()?;
        if self.params.links() != self.env.links() {
            return Err(Error::dim("pendulum links", self.env.links(), self.params.links()));
        }
        if self.trial_frames < 3 {
            return Err(Error::InvalidArgument("a trial needs at least 3 frames".into()));
        }
        if self.trial_frames < self.pca_components {
            return Err(Error::InvalidArgument(format!(
                "the bootstrap trial ({} frames) cannot support {} PCA components",
                self.trial_frames, self.pca_components
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument("epsilon must lie in [0, 1]".into()));
        }
        if self.frame_size == 0 || self.pca_components > self.frame_size * self.frame_size {
            return Err(Error::InvalidArgument("PCA components exceed the pixel count".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        Ok(())
    }
}

/// What a policy may see: frames and controls, nothing else.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub controls: Vec<ControlSignal>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Greedy-rollout score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean per-link error at every step, degrees.
    pub errors_deg: Vec<f64>,
    pub plan_costs: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    /// Mean over the last [`FINAL_WINDOW`] steps of `errors_deg`.
    pub final_error_deg: f64,
    /// Per-link means over the same window.
    pub final_link_errors_deg: Vec<f64>,
}

impl Evaluation {
    pub fn from_states(states: &[PendulumState], target: &[f64], controls: Vec<Vec<f64>>, plan_costs: Vec<f64>) -> Self {
        let errors_deg: Vec<f64> = states.iter().map(|s| simworld::canonical_angle_error(s, target)).collect();
        let tail = &states[states.len().saturating_sub(FINAL_WINDOW)..];
        let mut link = vec![0.0; target.len()];
        for s in tail {
            for (acc, e) in link.iter_mut().zip(simworld::per_link_angle_errors(s, target)) {
                *acc += e / tail.len() as f64;
            }
        }
        let final_error_deg = errors_deg[errors_deg.len() - tail.len()..].iter().sum::<f64>() / tail.len() as f64;
        Evaluation {
            errors_deg,
            plan_costs,
            controls,
            final_error_deg,
            final_link_errors_deg: link,
        }
    }

    /// Every link within `threshold_deg` over the final window.
    pub fn all_links_within(&self, threshold_deg: f64) -> bool {
        self.final_link_errors_deg.iter().all(|&e| e < threshold_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialKind {
    Random,
    Controlled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub kind: TrialKind,
    pub trajectory: Trajectory,
    /// Ground truth, for evaluation only.
    pub states: Vec<PendulumState>,
    /// NMPC cost at every step (`NaN` for random steps).
    pub plan_costs: Vec<f64>,
    /// Fraction of steps where the random action replaced the planned one.
    pub random_fraction: f64,
    pub evaluation: Evaluation,
    pub train_secs: f64,
    pub control_secs: f64,
    pub eval_secs: f64,
    /// Loss history of the retraining that preceded this trial.
    pub train_history: Vec<LossBreakdown>,
}

/// Run a closed loop for `n_steps` from `initial`. The policy is called with
/// the step index and the frame just captured; frames are 8-bit quantised
/// as a camera would deliver them.
pub fn run_episode<P>(
    initial: &PendulumState,
    params: &PendulumParams,
    scene: &Scene,
    dt: f64,
    n_steps: usize,
    mut policy: P,
) -> Result<(Trajectory, Vec<PendulumState>)>
where
    P: FnMut(usize, &Frame) -> Result<ControlSignal>,
{
    let mut traj = Trajectory::default();
    let mut states = Vec::with_capacity(n_steps);
    let mut state = initial.clone();
    for t in 0..n_steps {
        let frame = capture(&state, scene)?;
        let u = policy(t, &frame)?.saturated(params.torque_limit);
        let next = simworld::step(&state, &u, params, dt)?;
        traj.frames.push(frame);
        traj.controls.push(u);
        states.push(state);
        state = next;
    }
    Ok((traj, states))
}

/// Render and quantise to 8 bits.
pub fn capture(state: &PendulumState, scene: &Scene) -> Result<Frame> {
    let f = render::render(state, scene);
    Frame::from_bytes(f.width, f.height, &f.to_bytes())
}

fn uniform_control(n_u: usize, bound: f64, rng: &mut impl Rng) -> ControlSignal {
    ControlSignal((0..n_u).map(|_| rng.random_range(-bound..=bound)).collect())
}

/// A trial driven by uniform random torques.
pub fn random_trial(env: Env, params: &PendulumParams, scene: &Scene, dt: f64, n_frames: usize, seed: u64) -> Result<(Trajectory, Vec<PendulumState>)> {
    if n_frames == 0 {
        return Err(Error::InvalidArgument("a trial needs at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = params.torque_limit;
    run_episode(&PendulumState::rest(env.links()), params, scene, dt, n_frames, |_, _| {
        Ok(uniform_control(env.n_u(), bound, &mut rng))
    })
}

/// Keep `planned` with probability `1 − ε`, otherwise draw uniformly within
/// the bounds. The flag is true when the random action was taken.
pub fn epsilon_greedy(planned: &ControlSignal, epsilon: f64, bound: f64, rng: &mut impl Rng) -> (ControlSignal, bool) {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        (uniform_control(planned.0.len(), bound, rng), true)
    } else {
        (planned.clone(), false)
    }
}

/// Receding-horizon controller that sees only frames.
pub struct NmpcController<'a> {
    encoder: FrameEncoder<'a>,
    z_ref: Vec<f64>,
    config: NmpcConfig,
    prev: Option<Frame>,
    warm: Option<ControlPlan>,
    steps: u64,
}

impl<'a> NmpcController<'a> {
    pub fn new(model: &'a DdmModel, pca: &'a PcaProjector, reference: &Frame, config: NmpcConfig) -> Result<Self> {
        config.validate()?;
        let encoder = FrameEncoder { model, pca };
        let z_ref = encoder.encode(reference)?;
        Ok(NmpcController {
            encoder,
            z_ref,
            config,
            prev: None,
            warm: None,
            steps: 0,
        })
    }

    /// Plan from the newest frame; the first call uses it as its own
    /// predecessor.
    pub fn act(&mut self, frame: &Frame) -> Result<(ControlSignal, ControlPlan)> {
        let prev = self.prev.take().unwrap_or_else(|| frame.clone());
        let cfg = NmpcConfig {
            seed: derive_seed(self.config.seed, SeedStream::Planning, self.steps),
            ..self.config.clone()
        };
        let warm = self.warm.as_ref().map(ControlPlan::shifted);
        let (u, plan) = nmpc::policy_step_latent(self.encoder, &prev, frame, &self.z_ref, &cfg, warm.as_ref())?;
        self.prev = Some(frame.clone());
        self.warm = Some(plan.clone());
        self.steps += 1;
        Ok((u, plan))
    }

    /// Forget the previous frame and the warm start.
    pub fn reset(&mut self) {
        self.prev = None;
        self.warm = None;
    }
}

/// Project every frame of a trajectory through the PCA.
pub fn project_frames(pca: &PcaProjector, frames: &[Frame]) -> Result<Vec<Vec<f64>>> {
    frames.iter().map(|f| pca.project(&f.pixels)).collect()
}

/// Callbacks for persisting progress; every method defaults to a no-op.
pub trait ExperimentObserver {
    fn bootstrap(&mut self, _config: &ExperimentConfig, _pca: &PcaProjector, _record: &TrialRecord) -> Result<()> {
        Ok(())
    }
    fn trial_finished(&mut self, _record: &TrialRecord, _model: &DdmModel, _pca: &PcaProjector) -> Result<()> {
        Ok(())
    }
    fn aborted(&mut self, _trial: usize, _records: &[TrialRecord], _error: &Error) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl ExperimentObserver for NoObserver {}

pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub pca: PcaProjector,
    /// Model after the last retraining (trained on every trial but the last).
    pub model: DdmModel,
    pub records: Vec<TrialRecord>,
}

impl ExperimentOutcome {
    pub fn final_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.evaluation.final_error_deg).collect()
    }

    /// Every transition collected, trial boundaries respected.
    pub fn transitions(&self) -> Result<Vec<TransitionTriple>> {
        let mut all = Vec::new();
        for r in &self.records {
            all.extend(trial_transitions(&self.pca, &r.trajectory)?);
        }
        Ok(all)
    }
}

/// Training transitions from one trajectory.
pub fn trial_transitions(pca: &PcaProjector, traj: &Trajectory) -> Result<Vec<TransitionTriple>> {
    let inputs = project_frames(pca, &traj.frames)?;
    let controls: Vec<Vec<f64>> = traj.controls.iter().map(|u| u.0.clone()).collect();
    ddm::triples_from_trial(&inputs, &controls)
}

/// Greedy NMPC rollout from rest.
pub fn evaluate(config: &ExperimentConfig, model: &DdmModel, pca: &PcaProjector, reference: &Frame, seed: u64) -> Result<Evaluation> {
    let scene = config.scene();
    let nmpc_cfg = NmpcConfig {
        seed,
        ..config.nmpc.clone()
    };
    let mut ctl = NmpcController::new(model, pca, reference, nmpc_cfg)?;
    let mut costs = Vec::with_capacity(config.eval_steps);
    let (traj, states) = run_episode(&PendulumState::rest(config.env.links()), &config.params, &scene, config.dt, config.eval_steps, |_, frame| {
        let (u, plan) = ctl.act(frame)?;
        costs.push(plan.cost);
        Ok(u)
    })?;
    let controls = traj.controls.into_iter().map(|u| u.0).collect();
    Ok(Evaluation::from_states(&states, &config.env.upright(), controls, costs))
}

/// Target image: the pendulum held upright.
pub fn reference_frame(config: &ExperimentConfig) -> Result<Frame> {
    capture(&PendulumState::at_angles(&config.env.upright()), &config.scene())
}

/// Execute the whole loop. On failure the observer's `aborted` hook sees the
/// records collected so far and the error is wrapped with the trial index.
pub fn run_experiment(config: &ExperimentConfig, observer: &mut dyn ExperimentObserver) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut records: Vec<TrialRecord> = Vec::with_capacity(config.trials + 1);
    match run_inner(config, observer, &mut records) {
        Ok((pca, model)) => Ok(ExperimentOutcome {
            config: config.clone(),
            pca,
            model,
            records,
        }),
        Err(e) => {
            let trial = records.len();
            observer.aborted(trial, &records, &e);
            Err(Error::Trial {
                trial,
                source: Box::new(e),
            })
        }
    }
}

fn run_inner(config: &ExperimentConfig, observer: &mut dyn ExperimentObserver, records: &mut Vec<TrialRecord>) -> Result<(PcaProjector, DdmModel)> {
    let scene = config.scene();
    let target = config.env.upright();
    let n_u = config.env.n_u();
    let bound = config.params.torque_limit;

    let started = Instant::now();
    let (traj, states) = random_trial(
        config.env,
        &config.params,
        &scene,
        config.dt,
        config.trial_frames,
        derive_seed(config.seed, SeedStream::Bootstrap, 0),
    )?;
    let control_secs = started.elapsed().as_secs_f64();
    let pixels: Vec<Vec<f64>> = traj.frames.iter().map(|f| f.pixels.clone()).collect();
    let mut pca = PcaProjector::fit(&pixels, config.pca_components)?;
    let mut dataset = trial_transitions(&pca, &traj)?;
    let mut collected = vec![traj.clone()];
    let controls = traj.controls.iter().map(|u| u.0.clone()).collect();
    let bootstrap = TrialRecord {
        index: 0,
        kind: TrialKind::Random,
        evaluation: Evaluation::from_states(&states, &target, controls, vec![f64::NAN; states.len()]),
        plan_costs: vec![f64::NAN; states.len()],
        random_fraction: 1.0,
        trajectory: traj,
        states,
        train_secs: 0.0,
        control_secs,
        eval_secs: 0.0,
        train_history: Vec::new(),
    };
    observer.bootstrap(config, &pca, &bootstrap)?;
    records.push(bootstrap);

    let reference = reference_frame(config)?;
    let mut model = DdmModel::init(config.dims(), &config.arch, derive_seed(config.seed, SeedStream::Init, 0))?;

    for k in 1..=config.trials {
        let started = Instant::now();
        if config.refit_pca && k > 1 {
            let pixels: Vec<Vec<f64>> = collected.iter().flat_map(|t| t.frames.iter().map(|f| f.pixels.clone())).collect();
            let refit = PcaProjector::fit(&pixels, config.pca_components)?;
            model = model.rebase(&pca, &refit)?;
            pca = refit;
            dataset.clear();
            for t in &collected {
                dataset.extend(trial_transitions(&pca, t)?);
            }
        }
        let train_cfg = TrainConfig {
            seed: derive_seed(config.seed, SeedStream::Training, k as u64),
            ..config.train.clone()
        };
        let (trained, history) = ddm::train(&model, &dataset, &train_cfg)?;
        model = trained;
        let train_secs = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let mut ctl = NmpcController::new(
            &model,
            &pca,
            &reference,
            NmpcConfig {
                seed: derive_seed(config.seed, SeedStream::Planning, k as u64),
                ..config.nmpc.clone()
            },
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SeedStream::Exploration, k as u64));
        let mut costs = Vec::with_capacity(config.trial_frames);
        let mut random_steps = 0usize;
        let (traj, states) = run_episode(&PendulumState::rest(config.env.links()), &config.params, &scene, config.dt, config.trial_frames, |_, frame| {
            let (planned, plan) = ctl.act(frame)?;
            debug_assert_eq!(planned.0.len(), n_u);
            costs.push(plan.cost);
            let (u, random) = epsilon_greedy(&planned, config.epsilon, bound, &mut rng);
            random_steps += usize::from(random);
            Ok(u)
        })?;
        let control_secs = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let evaluation = evaluate(config, &model, &pca, &reference, derive_seed(config.seed, SeedStream::Planning, 1_000_000 + k as u64))?;
        let eval_secs = started.elapsed().as_secs_f64();

        dataset.extend(trial_transitions(&pca, &traj)?);
        collected.push(traj.clone());
        let record = TrialRecord {
            index: k,
            kind: TrialKind::Controlled,
            random_fraction: random_steps as f64 / traj.len() as f64,
            trajectory: traj,
            states,
            plan_costs: costs,
            evaluation,
            train_secs,
            control_secs,
            eval_secs,
            train_history: history,
        };
        observer.trial_finished(&record, &model, &pca)?;
        records.push(record);
    }
    Ok((pca, model))
}
