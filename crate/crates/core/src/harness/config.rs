//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not listed in
//! [`KEYS`] are rejected so that typos do not pass silently.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rlloop::ExperimentConfig;
use crate::simworld::Env;

pub const KEYS: &[&str] = &[
    "env",
    "seed",
    "trials",
    "trial_frames",
    "eval_steps",
    "epsilon",
    "frame_size",
    "pca_components",
    "refit_pca",
    "latent_dim",
    "alpha",
    "epochs",
    "batch_size",
    "learning_rate",
    "horizon",
    "lambda",
    "torque_limit",
    "iterations",
    "restarts",
    "step_size",
    "dt",
];

/// Parse `text` into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    const WHAT: &str = "config";
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(WHAT, format!("line {}", i + 1), "expected key = value"))?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(Error::parse(WHAT, key, "unknown key"));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::parse("config", key, e.to_string()))
}

/// Build a config: environment defaults (the `env` key, else `env`) with
/// every other pair applied on top, in order.
pub fn config_from_pairs(env: Env, pairs: &[(String, String)]) -> Result<ExperimentConfig> {
    let env = match pairs.iter().find(|(k, _)| k == "env") {
        Some((_, v)) => v.parse::<Env>()?,
        None => env,
    };
    let mut c = ExperimentConfig::for_env(env);
    for (k, v) in pairs {
        apply(&mut c, k, v)?;
    }
    Ok(c)
}

/// Set one field.
pub fn apply(c: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "env" => {
            let env: Env = value.parse()?;
            if env != c.env {
                return Err(Error::parse("config", key, "the environment cannot change after defaults are chosen"));
            }
        }
        "seed" => c.seed = num(key, value)?,
        "trials" => c.trials = num(key, value)?,
        "trial_frames" => c.trial_frames = num(key, value)?,
        "eval_steps" => c.eval_steps = num(key, value)?,
        "epsilon" => c.epsilon = num(key, value)?,
        "frame_size" => c.frame_size = num(key, value)?,
        "pca_components" => c.pca_components = num(key, value)?,
        "refit_pca" => c.refit_pca = num(key, value)?,
        "latent_dim" => c.latent_dim = num(key, value)?,
        "alpha" => c.train.alpha = num(key, value)?,
        "epochs" => c.train.epochs = num(key, value)?,
        "batch_size" => c.train.batch_size = num(key, value)?,
        "learning_rate" => c.train.adam.step_size = num(key, value)?,
        "horizon" => c.nmpc.horizon = num(key, value)?,
        "lambda" => c.nmpc.lambda = num(key, value)?,
        "torque_limit" => {
            let t: f64 = num(key, value)?;
            c.params.torque_limit = t;
            c.nmpc.torque_limit = t;
        }
        "iterations" => c.nmpc.iterations = num(key, value)?,
        "restarts" => c.nmpc.restarts = num(key, value)?,
        "step_size" => c.nmpc.step_size = num(key, value)?,
        "dt" => c.dt = num(key, value)?,
        _ => return Err(Error::parse("config", key, "unknown key")),
    }
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text)
}
