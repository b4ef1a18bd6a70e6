//! Offline diagnostics of a trained model: multi-step prediction quality,
//! the latent map over pendulum angles, and prediction filmstrips.

use crate::ddm::DdmModel;
use crate::error::{Error, Result};
use crate::nncore::PcaProjector;
use crate::render::{Frame, Scene};
use crate::rlloop::{self, Trajectory};
use crate::simworld::PendulumState;

/// Open-loop prediction quality over many starting points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionReport {
    pub starts: usize,
    pub horizon: usize,
    /// Per-pixel MSE of the predicted frames, averaged over all horizons.
    pub frame_mse: f64,
    /// Per-pixel MSE of the predicted frame at the last horizon only.
    pub final_frame_mse: f64,
    /// Per-pixel MSE of predicting an all-background frame.
    pub baseline_mse: f64,
    /// Mean squared latent distance between the rollout and the encoded
    /// true frames, averaged over all horizons.
    pub latent_error: f64,
}

/// Starting indices `t` (needing `t − 1` and `t + horizon`) spread evenly
/// over a trajectory of `len` frames.
pub fn spread_starts(len: usize, horizon: usize, count: usize) -> Vec<usize> {
    if len < horizon + 2 || count == 0 {
        return Vec::new();
    }
    let (lo, hi) = (1, len - 1 - horizon);
    let span = hi - lo;
    let count = count.min(span + 1);
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo + i * span / (count - 1)).collect()
}

/// Roll the model forward `horizon` steps from each start using the
/// recorded controls and compare with what was actually observed.
pub fn prediction_report(model: &DdmModel, pca: &PcaProjector, traj: &Trajectory, starts: &[usize], horizon: usize) -> Result<PredictionReport> {
    if starts.is_empty() || horizon == 0 {
        return Err(Error::InvalidArgument("prediction report needs starts and a horizon".into()));
    }
    let inputs = rlloop::project_frames(pca, &traj.frames)?;
    let latents: Vec<Vec<f64>> = inputs.iter().map(|x| model.encode(x)).collect::<Result<_>>()?;
    let n_px = traj.frames[0].pixels.len() as f64;
    let (mut mse, mut last_mse, mut base, mut lat) = (0.0, 0.0, 0.0, 0.0);
    for &t in starts {
        if t == 0 || t + horizon >= traj.len() {
            return Err(Error::InvalidArgument(format!("start {t} leaves no room for {horizon} steps")));
        }
        let controls: Vec<Vec<f64>> = traj.controls[t..t + horizon].iter().map(|u| u.0.clone()).collect();
        let rollout = model.rollout_latent(&latents[t - 1], &latents[t], &controls)?;
        for (k, z) in rollout.iter().enumerate() {
            let truth = &traj.frames[t + k + 1].pixels;
            let pixels = pca.reconstruct(&model.decode(z)?)?;
            let e = pixels.iter().zip(truth).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / n_px;
            mse += e;
            if k + 1 == horizon {
                last_mse += e;
            }
            base += truth.iter().map(|q| q * q).sum::<f64>() / n_px;
            lat += z.iter().zip(&latents[t + k + 1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    let n = (starts.len() * horizon) as f64;
    Ok(PredictionReport {
        starts: starts.len(),
        horizon,
        frame_mse: mse / n,
        final_frame_mse: last_mse / starts.len() as f64,
        baseline_mse: base / n,
        latent_error: lat / n,
    })
}

/// Encode the static frame at every `step_deg` of the first joint (the
/// others held straight), starting from 0°.
pub fn latent_map(model: &DdmModel, pca: &PcaProjector, scene: &Scene, step_deg: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    if !(step_deg > 0.0 && step_deg <= 360.0) {
        return Err(Error::InvalidArgument(format!("step must lie in (0, 360], got {step_deg}")));
    }
    let links = scene.link_lengths.len();
    let count = (360.0 / step_deg - 1e-9).ceil() as usize;
    (0..count)
        .map(|i| {
            let deg = i as f64 * step_deg;
            let mut angles = vec![0.0; links];
            angles[0] = deg.to_radians();
            let frame = rlloop::capture(&PendulumState::at_angles(&angles), scene)?;
            Ok((deg, model.encode(&pca.project(&frame.pixels)?)?))
        })
        .collect()
}

/// Gap statistics of a polyline closed back onto its first point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveMetrics {
    /// Distance from the last point back to the first.
    pub closure: f64,
    /// Median and maximum of the consecutive (open) gaps.
    pub median_gap: f64,
    pub max_gap: f64,
}

impl CurveMetrics {
    pub fn of(points: &[Vec<f64>]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument("a closed curve needs at least 3 points".into()));
        }
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let mut gaps: Vec<f64> = points.windows(2).map(|w| dist(&w[0], &w[1])).collect();
        let closure = dist(&points[points.len() - 1], &points[0]);
        let max_gap = gaps.iter().copied().fold(0.0, f64::max);
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len();
        let median_gap = if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) };
        Ok(CurveMetrics {
            closure,
            median_gap,
            max_gap,
        })
    }

    /// Closure within 3 median gaps and no gap beyond 5 median gaps.
    pub fn is_closed_loop(&self) -> bool {
        self.median_gap > 0.0 && self.closure <= 3.0 * self.median_gap && self.max_gap <= 5.0 * self.median_gap
    }
}

/// Ground truth (top row) above the model's open-loop prediction (bottom
/// row) for `horizon` steps after `start`.
pub fn filmstrip(model: &DdmModel, pca: &PcaProjector, traj: &Trajectory, start: usize, horizon: usize) -> Result<Frame> {
    if start == 0 || start + horizon >= traj.len() {
        return Err(Error::InvalidArgument(format!("start {start} leaves no room for {horizon} steps")));
    }
    let (w, h) = (traj.frames[0].width, traj.frames[0].height);
    let x_prev = pca.project(&traj.frames[start - 1].pixels)?;
    let x_cur = pca.project(&traj.frames[start].pixels)?;
    let controls: Vec<Vec<f64>> = traj.controls[start..start + horizon].iter().map(|u| u.0.clone()).collect();
    let predicted = model.predict_frames(&x_prev, &x_cur, &controls)?;
    let mut strip = Frame::blank(w * horizon, h * 2);
    for k in 0..horizon {
        let truth = &traj.frames[start + k + 1];
        let guess = Frame::from_clamped(w, h, &pca.reconstruct(&predicted[k])?)?;
        for (row, frame) in [truth, &guess].into_iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    strip.pixels[(row * h + y) * strip.width + k * w + x] = frame.at(x, y);
                }
            }
        }
    }
    Ok(strip)
}
