use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pixtorque::harness::commands::{self, ControlArgs, OpenLoopPolicy, SimulateArgs, TrainArgs};
use pixtorque::harness::config;
use pixtorque::harness::manifest::{self, RunManifest};
use pixtorque::harness::ArtifactWriter;
use pixtorque::rlloop::{self, ExperimentConfig};
use pixtorque::simworld::Env;
use pixtorque::Result;

/// Learn to swing up simulated pendulums from rendered frames.
#[derive(Parser)]
#[command(name = "pixtorque", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Single,
    Double,
}

impl From<EnvArg> for Env {
    fn from(e: EnvArg) -> Env {
        match e {
            EnvArg::Single => Env::Single,
            EnvArg::Double => Env::Double,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Zero,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Record an open-loop trial into a dataset file.
    Simulate {
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value = "random")]
        policy: PolicyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frame side in pixels (40 single, 48 double).
        #[arg(long)]
        frame_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for numbered PGM frames.
        #[arg(long)]
        dump_frames: Option<PathBuf>,
    },
    /// Fit PCA and train a model on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        arch: EnvArg,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        pca_components: Option<usize>,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        metrics_csv: Option<PathBuf>,
    },
    /// Closed-loop NMPC from rest; exits 0 only if the final error is below 10°.
    Control {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        env: EnvArg,
        /// Target angle of the first joint in degrees.
        #[arg(long, default_value_t = 180.0, allow_hyphen_values = true)]
        ref_angle: f64,
        #[arg(long, default_value_t = 15)]
        horizon: usize,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        metrics_csv: Option<PathBuf>,
        #[arg(long)]
        dump_frames: Option<PathBuf>,
    },
    /// Run the full adaptive learning loop.
    Experiment {
        #[arg(long, value_enum, default_value = "single")]
        env: EnvArg,
        /// Flat key = value file applied before the flags below.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Double pendulum on 24 × 24 frames with 128 PCA components.
        #[arg(long)]
        half_scale: bool,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        trial_frames: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, required_unless_present = "replay")]
        out_dir: Option<PathBuf>,
        /// Re-run a manifest and check every per-trial error bit for bit.
        #[arg(long, conflicts_with_all = ["config", "trials", "trial_frames", "epsilon", "seed", "out_dir"])]
        replay: Option<PathBuf>,
    },
    /// Encode frames around the circle and write the latent coordinates.
    LatentMap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long, default_value_t = 5.0)]
        step_deg: f64,
        #[arg(long)]
        out_csv: PathBuf,
    },
}

const SUCCESS_DEG: f64 = 10.0;

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            env,
            steps,
            policy,
            seed,
            frame_size,
            out,
            dump_frames,
        } => {
            let env = Env::from(env);
            let data = commands::simulate(&SimulateArgs {
                env,
                steps,
                policy: match policy {
                    PolicyArg::Zero => OpenLoopPolicy::Zero,
                    PolicyArg::Random => OpenLoopPolicy::Random,
                },
                seed,
                frame_size: frame_size.unwrap_or_else(|| commands::default_frame_size(env)),
                out: out.clone(),
                dump_frames,
            })?;
            println!("wrote {} frames of {}x{} to {}", data.n_frames(), data.width, data.height, out.display());
        }
        Command::Train {
            data,
            arch,
            alpha,
            epochs,
            batch,
            learning_rate,
            seed,
            pca_components,
            out_checkpoint,
            metrics_csv,
        } => {
            let (_, history) = commands::train(&TrainArgs {
                data,
                arch: arch.into(),
                alpha,
                epochs,
                batch,
                learning_rate,
                seed,
                pca_components,
                out_checkpoint: out_checkpoint.clone(),
                metrics_csv,
            })?;
            let (first, last) = (history[0], history[history.len() - 1]);
            println!("loss {:.6} -> {:.6}; checkpoint {}", first.total, last.total, out_checkpoint.display());
        }
        Command::Control {
            checkpoint,
            env,
            ref_angle,
            horizon,
            lambda,
            iterations,
            restarts,
            steps,
            seed,
            metrics_csv,
            dump_frames,
        } => {
            let out = commands::control(&ControlArgs {
                checkpoint,
                env: env.into(),
                ref_angle_deg: ref_angle,
                horizon,
                lambda,
                iterations,
                restarts,
                steps,
                seed,
                metrics_csv,
                dump_frames,
            })?;
            let e = &out.evaluation;
            println!("final error {:.2} deg (per link {:?})", e.final_error_deg, e.final_link_errors_deg);
            if !e.all_links_within(SUCCESS_DEG) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Experiment {
            env,
            config: config_path,
            half_scale,
            trials,
            trial_frames,
            epsilon,
            seed,
            out_dir,
            replay,
        } => {
            if let Some(path) = replay {
                let m = RunManifest::load(&path)?;
                let mismatches = manifest::replay(&m)?;
                for mm in &mismatches {
                    println!("trial {}: recorded {} replayed {}", mm.trial, mm.recorded, mm.replayed);
                }
                println!("replayed {} trials, {} mismatches", m.trials.len(), mismatches.len());
                return Ok(if mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(4) });
            }
            let env = Env::from(env);
            let mut cfg = if half_scale {
                if env != Env::Double {
                    return Err(pixtorque::Error::InvalidArgument("--half-scale applies to the double pendulum".into()));
                }
                ExperimentConfig::double_half_scale()
            } else {
                ExperimentConfig::for_env(env)
            };
            if let Some(p) = config_path {
                for (k, v) in config::load_pairs(&p)? {
                    config::apply(&mut cfg, &k, &v)?;
                }
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(f) = trial_frames {
                cfg.trial_frames = f;
            }
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out_dir.expect("required by clap without --replay");
            let mut writer = ArtifactWriter::new(&dir, &cfg)?;
            let outcome = rlloop::run_experiment(&cfg, &mut writer)?;
            writer.finish(&outcome)?;
            for r in &outcome.records {
                println!("trial {:2}: final error {:7.2} deg", r.index, r.evaluation.final_error_deg);
            }
            println!("artifacts in {}", dir.display());
        }
        Command::LatentMap {
            checkpoint,
            env,
            step_deg,
            out_csv,
        } => {
            let rows = commands::latent_map(&checkpoint, env.into(), step_deg, &out_csv)?;
            println!("wrote {} rows to {}", rows.len(), out_csv.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
