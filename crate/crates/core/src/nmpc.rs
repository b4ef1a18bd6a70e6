//! Receding-horizon control through the learned latent dynamics.
//!
//! A plan `u_0 … u_{K-1}` is scored by
//! `Σ_{t=0}^{K-1} ‖ẑ_t − z_ref‖² + λ‖u_t‖²` with `ẑ_0 = z_0` and the later
//! latents produced by iterating the predictor. Plans are improved by
//! projected gradient descent with Adam-style per-coordinate scaling; the
//! gradient is back-propagated through the unrolled predictor. Several
//! starting plans are optimised side by side and the cheapest iterate seen
//! wins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddm::DdmModel;
use crate::error::{Error, Result};
use crate::nncore::{Matrix, PcaProjector, Tape};
use crate::render::Frame;
use crate::simworld::ControlSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpcConfig {
    /// Planning horizon K.
    pub horizon: usize,
    /// Control penalty λ.
    pub lambda: f64,
    /// Symmetric box bound on every control component.
    pub torque_limit: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Initial step size of the plan optimiser, in control units.
    pub step_size: f64,
    /// Step size after the last iteration, as a fraction of `step_size`.
    pub final_step_fraction: f64,
    pub seed: u64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        NmpcConfig {
            horizon: 15,
            lambda: 0.01,
            torque_limit: 5.0,
            iterations: 100,
            restarts: 4,
            step_size: 0.5,
            final_step_fraction: 1e-3,
            seed: 0,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("NMPC horizon must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument("NMPC lambda must be non-negative".into()));
        }
        if !(self.torque_limit > 0.0) || !(self.step_size > 0.0) {
            return Err(Error::InvalidArgument("NMPC bounds and step size must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("NMPC needs at least one restart".into()));
        }
        Ok(())
    }
}

/// An optimised open-loop control sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub controls: Vec<Vec<f64>>,
    pub cost: f64,
    /// Horizon and penalty the plan was optimised with.
    pub horizon: usize,
    pub lambda: f64,
}

impl ControlPlan {
    pub fn zeros(horizon: usize, n_u: usize, lambda: f64) -> Self {
        ControlPlan {
            controls: vec![vec![0.0; n_u]; horizon],
            cost: f64::INFINITY,
            horizon,
            lambda,
        }
    }

    /// Drop the first control and repeat the last, for warm-starting the
    /// next receding-horizon step.
    pub fn shifted(&self) -> ControlPlan {
        let mut controls: Vec<Vec<f64>> = self.controls.iter().skip(1).cloned().collect();
        if let Some(last) = self.controls.last() {
            controls.push(last.clone());
        }
        ControlPlan {
            controls,
            cost: f64::INFINITY,
            horizon: self.horizon,
            lambda: self.lambda,
        }
    }

    pub fn first(&self) -> ControlSignal {
        ControlSignal(self.controls[0].clone())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_latents(model: &DdmModel, z_prev: &[f64], z_0: &[f64], z_ref: &[f64]) -> Result<()> {
    let n_z = model.dims().n_z;
    for (what, z) in [("z_prev", z_prev), ("z_0", z_0), ("z_ref", z_ref)] {
        if z.len() != n_z {
            return Err(Error::dim(format!("planning latent {what}"), n_z, z.len()));
        }
    }
    Ok(())
}

/// Plan cost for one control sequence.
pub fn plan_cost(model: &DdmModel, z_prev: &[f64], z_0: &[f64], z_ref: &[f64], controls: &[Vec<f64>], lambda: f64) -> Result<f64> {
    let (costs, _) = batched_cost(model, z_prev, z_0, z_ref, &[controls.to_vec()], lambda, false)?;
    Ok(costs[0])
}

/// Plan cost and its gradient with respect to every control.
pub fn plan_cost_grad(
    model: &DdmModel,
    z_prev: &[f64],
    z_0: &[f64],
    z_ref: &[f64],
    controls: &[Vec<f64>],
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let (costs, grads) = batched_cost(model, z_prev, z_0, z_ref, &[controls.to_vec()], lambda, true)?;
    Ok((costs[0], grads.expect("requested").remove(0)))
}

/// Cost (and optionally gradient) of several plans at once; plan `r` is
/// row `r` of every batched predictor call.
#[allow(clippy::type_complexity)]
fn batched_cost(
    model: &DdmModel,
    z_prev: &[f64],
    z_0: &[f64],
    z_ref: &[f64],
    plans: &[Vec<Vec<f64>>],
    lambda: f64,
    want_grad: bool,
) -> Result<(Vec<f64>, Option<Vec<Vec<Vec<f64>>>>)> {
    check_latents(model, z_prev, z_0, z_ref)?;
    let dims = model.dims();
    let (n_z, n_u) = (dims.n_z, dims.n_u);
    let r = plans.len();
    let k = plans.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(Error::InvalidArgument("a plan needs at least one control".into()));
    }
    for plan in plans {
        if plan.len() != k {
            return Err(Error::dim("plan length", k, plan.len()));
        }
        for u in plan {
            if u.len() != n_u {
                return Err(Error::dim("plan control", n_u, u.len()));
            }
        }
    }

    let base = sq_dist(z_0, z_ref);
    let mut costs: Vec<f64> = plans
        .iter()
        .map(|p| base + lambda * p.iter().map(|u| u.iter().map(|v| v * v).sum::<f64>()).sum::<f64>())
        .collect();

    // latents[t] holds ẑ_t for every plan, t = 0 … K-1.
    let repeat = |z: &[f64]| Matrix::from_fn(r, n_z, |_, c| z[c]);
    let mut latents = vec![repeat(z_0)];
    let mut tapes: Vec<Tape> = Vec::with_capacity(k.saturating_sub(1));
    let mut prev = repeat(z_prev);
    for t in 0..k - 1 {
        let u_t = Matrix::from_fn(r, n_u, |row, c| plans[row][t][c]);
        let input = Matrix::hstack(&[&prev, &latents[t], &u_t])?;
        let next = if want_grad {
            let (out, tape) = model.pred.forward_batch(&input)?;
            tapes.push(tape);
            out
        } else {
            model.pred.infer(&input)?
        };
        for row in 0..r {
            if next.row(row).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("latent rollout at step {}", t + 1)));
            }
            costs[row] += sq_dist(next.row(row), z_ref);
        }
        prev = latents[t].clone();
        latents.push(next);
    }

    if !want_grad {
        return Ok((costs, None));
    }

    let mut grads: Vec<Vec<Vec<f64>>> = plans
        .iter()
        .map(|p| p.iter().map(|u| u.iter().map(|v| 2.0 * lambda * v).collect()).collect())
        .collect();
    // d_z[t] accumulates ∂cost/∂ẑ_t; ẑ_0 is fixed and needs none.
    let mut d_z: Vec<Matrix> = latents
        .iter()
        .map(|z| Matrix::from_fn(r, n_z, |row, c| 2.0 * (z[(row, c)] - z_ref[c])))
        .collect();
    for t in (0..k - 1).rev() {
        let d_in = model.pred.backward_input(&tapes[t], &d_z[t + 1])?;
        for row in 0..r {
            let g = d_in.row(row);
            for c in 0..n_u {
                grads[row][t][c] += g[2 * n_z + c];
            }
            for c in 0..n_z {
                d_z[t][(row, c)] += g[n_z + c];
                if t >= 1 {
                    d_z[t - 1][(row, c)] += g[c];
                }
            }
        }
    }
    Ok((costs, Some(grads)))
}

/// Optimise a `K`-step plan from the latent pair `(z_prev, z_0)` toward
/// `z_ref`.
///
/// Starting plans are, in order: all zeros, the warm start (if any), then
/// seeded uniform draws within the bounds. The returned plan is the cheapest
/// iterate seen across all of them, so it is never worse than the zero plan
/// or the warm start.
pub fn optimize_plan(
    model: &DdmModel,
    z_prev: &[f64],
    z_0: &[f64],
    z_ref: &[f64],
    config: &NmpcConfig,
    warm_start: Option<&ControlPlan>,
) -> Result<ControlPlan> {
    config.validate()?;
    check_latents(model, z_prev, z_0, z_ref)?;
    let n_u = model.dims().n_u;
    let k = config.horizon;
    let bound = config.torque_limit;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut plans: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; n_u]; k]];
    if config.restarts > 1 {
        if let Some(ws) = warm_start {
            if ws.controls.len() != k {
                return Err(Error::dim("warm-start plan length", k, ws.controls.len()));
            }
            plans.push(
                ws.controls
                    .iter()
                    .map(|u| u.iter().map(|v| v.clamp(-bound, bound)).collect())
                    .collect(),
            );
        }
    }
    while plans.len() < config.restarts {
        plans.push((0..k).map(|_| (0..n_u).map(|_| rng.random_range(-bound..=bound)).collect()).collect());
    }

    let r = plans.len();
    let mut first_moment = vec![vec![vec![0.0; n_u]; k]; r];
    let mut second_moment = first_moment.clone();
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut best: Vec<(f64, Vec<Vec<f64>>)> = vec![(f64::INFINITY, Vec::new()); r];
    let decay = config.final_step_fraction.max(1e-12).ln();

    for it in 0..=config.iterations {
        let (costs, grads) = batched_cost(model, z_prev, z_0, z_ref, &plans, config.lambda, it < config.iterations)?;
        for (row, &c) in costs.iter().enumerate() {
            if c.is_finite() && c < best[row].0 {
                best[row] = (c, plans[row].clone());
            }
        }
        let Some(grads) = grads else { break };
        let frac = if config.iterations > 1 {
            it as f64 / (config.iterations - 1) as f64
        } else {
            0.0
        };
        let lr = config.step_size * (decay * frac).exp();
        let t = (it + 1) as i32;
        let (bc1, bc2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for row in 0..r {
            for step in 0..k {
                for c in 0..n_u {
                    let g = grads[row][step][c];
                    let m = &mut first_moment[row][step][c];
                    let v = &mut second_moment[row][step][c];
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let upd = lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    let u = &mut plans[row][step][c];
                    *u = (*u - upd).clamp(-bound, bound);
                }
            }
        }
    }

    // Lowest cost wins; ties go to the earlier restart.
    let (cost, controls) = best
        .into_iter()
        .filter(|(c, _)| c.is_finite())
        .fold(None::<(f64, Vec<Vec<f64>>)>, |acc, cand| match acc {
            Some(a) if a.0 <= cand.0 => Some(a),
            _ => Some(cand),
        })
        .ok_or_else(|| Error::Planning("every restart diverged to a non-finite cost".into()))?;
    Ok(ControlPlan {
        controls,
        cost,
        horizon: k,
        lambda: config.lambda,
    })
}

/// Maps frames to latents: PCA projection followed by the encoder.
#[derive(Debug, Clone, Copy)]
pub struct FrameEncoder<'a> {
    pub model: &'a DdmModel,
    pub pca: &'a PcaProjector,
}

impl FrameEncoder<'_> {
    pub fn encode(&self, frame: &Frame) -> Result<Vec<f64>> {
        self.model.encode(&self.pca.project(&frame.pixels)?)
    }
}

/// One closed-loop decision: encode the two latest frames and the target
/// frame, optimise a plan and return its first control.
pub fn policy_step(
    encoder: FrameEncoder<'_>,
    x_prev: &Frame,
    x_cur: &Frame,
    x_ref: &Frame,
    config: &NmpcConfig,
    warm_start: Option<&ControlPlan>,
) -> Result<(ControlSignal, ControlPlan)> {
    let z_ref = encoder.encode(x_ref)?;
    policy_step_latent(encoder, x_prev, x_cur, &z_ref, config, warm_start)
}

/// [`policy_step`] with the reference already encoded.
pub fn policy_step_latent(
    encoder: FrameEncoder<'_>,
    x_prev: &Frame,
    x_cur: &Frame,
    z_ref: &[f64],
    config: &NmpcConfig,
    warm_start: Option<&ControlPlan>,
) -> Result<(ControlSignal, ControlPlan)> {
    let z_prev = encoder.encode(x_prev)?;
    let z_cur = encoder.encode(x_cur)?;
    let plan = optimize_plan(encoder.model, &z_prev, &z_cur, z_ref, config, warm_start)?;
    Ok((plan.first(), plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddm::{Architecture, DdmDims};
    use crate::nncore::{LinearLayer, Mlp, Parameters};

    fn random_model(seed: u64, n_z: usize, n_u: usize) -> DdmModel {
        let dims = DdmDims { n_x: 5, n_z, n_u };
        let arch = Architecture {
            enc_hidden: vec![4],
            pred_hidden: vec![8, 8],
            dec_hidden: vec![4],
        };
        let mut m = DdmModel::init(dims, &arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in m.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v * 0.8 + rng.random_range(-0.1..0.1);
            }
        }
        m
    }

    /// `ẑ_{t+1} = ẑ_t + B u_t` as a single linear predictor layer.
    fn integrator_model(b: &[[f64; 1]; 2]) -> DdmModel {
        let dims = DdmDims { n_x: 2, n_z: 2, n_u: 1 };
        let identity = || Mlp::from_layers(vec![LinearLayer { weights: Matrix::identity(2), biases: vec![0.0; 2] }]).unwrap();
        let mut w = Matrix::zeros(2, 5);
        w[(0, 2)] = 1.0;
        w[(1, 3)] = 1.0;
        w[(0, 4)] = b[0][0];
        w[(1, 4)] = b[1][0];
        let pred = Mlp::from_layers(vec![LinearLayer { weights: w, biases: vec![0.0; 2] }]).unwrap();
        DdmModel::from_parts(identity(), identity(), pred, dims).unwrap()
    }

    /// Straight-line evaluation of the plan cost.
    fn oracle_cost(m: &DdmModel, zp: &[f64], z0: &[f64], zr: &[f64], us: &[Vec<f64>], lambda: f64) -> f64 {
        let mut cost = 0.0;
        let (mut a, mut b) = (zp.to_vec(), z0.to_vec());
        for (t, u) in us.iter().enumerate() {
            cost += sq_dist(&b, zr) + lambda * u.iter().map(|v| v * v).sum::<f64>();
            if t + 1 < us.len() {
                let next = m.predict_latent(&a, &b, u).unwrap();
                a = b;
                b = next;
            }
        }
        cost
    }

    #[test]
    fn cost_matches_straight_line_evaluation() {
        let m = random_model(1, 2, 1);
        let us = vec![vec![0.3], vec![-1.2], vec![2.0]];
        let (zp, z0, zr) = ([0.1, -0.3], [0.4, 0.2], [1.0, -1.0]);
        let c = plan_cost(&m, &zp, &z0, &zr, &us, 0.05).unwrap();
        assert!((c - oracle_cost(&m, &zp, &z0, &zr, &us, 0.05)).abs() < 1e-12);
        let c0 = plan_cost(&m, &zp, &z0, &zr, &us, 0.0).unwrap();
        assert!((c - c0 - 0.05 * (0.09 + 1.44 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_at_a_fixed_point() {
        let m = integrator_model(&[[0.5], [-0.2]]);
        let z = [0.7, -0.1];
        let c = plan_cost(&m, &z, &z, &z, &vec![vec![0.0]; 6], 0.01).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, n_z, n_u) in [(2, 2, 1), (3, 4, 2)] {
            let m = random_model(seed, n_z, n_u);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let (zp, z0, zr) = (v(n_z), v(n_z), v(n_z));
            let us: Vec<Vec<f64>> = (0..6).map(|_| v(n_u)).collect();
            let (_, g) = plan_cost_grad(&m, &zp, &z0, &zr, &us, 0.1).unwrap();
            let h = 1e-5;
            for t in 0..us.len() {
                for c in 0..n_u {
                    let mut up = us.clone();
                    let mut dn = us.clone();
                    up[t][c] += h;
                    dn[t][c] -= h;
                    let fd = (plan_cost(&m, &zp, &z0, &zr, &up, 0.1).unwrap() - plan_cost(&m, &zp, &z0, &zr, &dn, 0.1).unwrap()) / (2.0 * h);
                    let rel = (g[t][c] - fd).abs() / g[t][c].abs().max(fd.abs()).max(1e-6);
                    assert!(rel < 1e-4 || (g[t][c] - fd).abs() < 1e-8, "t={t} c={c}: {} vs {fd}", g[t][c]);
                }
            }
        }
    }

    /// Closed-form minimiser of the quadratic plan cost for the integrator
    /// model: cost = Σ_t ‖z0 + B Σ_{s<t} u_s − z_ref‖² + λ Σ u_t², solved by
    /// Gaussian elimination on the normal equations.
    fn quadratic_optimum(b: [f64; 2], z0: [f64; 2], zr: [f64; 2], k: usize, lambda: f64) -> Vec<f64> {
        // Residual r_t(u) = (z0 - zr) + B * Σ_{s<t} u_s for t = 0..k-1.
        let mut a = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        let d = [z0[0] - zr[0], z0[1] - zr[1]];
        let bb = b[0] * b[0] + b[1] * b[1];
        let bd = b[0] * d[0] + b[1] * d[1];
        for t in 0..k {
            for i in 0..t {
                for j in 0..t {
                    a[i][j] += bb;
                }
                rhs[i] -= bd;
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += lambda;
        }
        for col in 0..k {
            let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            a.swap(col, piv);
            rhs.swap(col, piv);
            for row in 0..k {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for c in col..k {
                        a[row][c] -= f * a[col][c];
                    }
                    rhs[row] -= f * rhs[col];
                }
            }
        }
        (0..k).map(|i| rhs[i] / a[i][i]).collect()
    }

    #[test]
    fn recovers_the_quadratic_optimum() {
        let b = [0.6, 0.3];
        let m = integrator_model(&[[b[0]], [b[1]]]);
        let (z0, zr) = ([0.0, 0.0], [1.0, 0.2]);
        let k = 5;
        let lambda = 0.1;
        let want = quadratic_optimum(b, z0, zr, k, lambda);
        assert!(want.iter().all(|u| u.abs() < 5.0));
        let cfg = NmpcConfig {
            horizon: k,
            lambda,
            iterations: 1000,
            ..NmpcConfig::default()
        };
        let plan = optimize_plan(&m, &z0, &z0, &zr, &cfg, None).unwrap();
        for (got, w) in plan.controls.iter().zip(&want) {
            assert!((got[0] - w).abs() < 1e-3, "got {:?}, want {want:?}", plan.controls);
        }
    }

    #[test]
    fn stays_at_zero_at_a_fixed_point() {
        let m = integrator_model(&[[0.5], [0.5]]);
        let z = [0.3, 0.3];
        let plan = optimize_plan(&m, &z, &z, &z, &NmpcConfig::default(), None).unwrap();
        let norm: f64 = plan.controls.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-3);
        assert_eq!(plan.cost, 0.0);
    }

    #[test]
    fn never_worse_than_zero_or_warm_start_and_always_feasible() {
        for seed in 0..5 {
            let m = random_model(seed, 2, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let mut v = || vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (zp, z0, zr) = (v(), v(), v());
            let cfg = NmpcConfig {
                iterations: 5,
                seed,
                ..NmpcConfig::default()
            };
            let warm = ControlPlan {
                controls: (0..15).map(|t| vec![((t as f64) * 0.7).sin() * 4.0]).collect(),
                cost: 0.0,
                horizon: 15,
                lambda: 0.01,
            };
            let plan = optimize_plan(&m, &zp, &z0, &zr, &cfg, Some(&warm)).unwrap();
            let zero_cost = plan_cost(&m, &zp, &z0, &zr, &vec![vec![0.0]; 15], 0.01).unwrap();
            let warm_cost = plan_cost(&m, &zp, &z0, &zr, &warm.controls, 0.01).unwrap();
            assert!(plan.cost <= zero_cost && plan.cost <= warm_cost);
            assert!(plan.controls.iter().flatten().all(|u| u.abs() <= 5.0));
            assert!((plan.cost - plan_cost(&m, &zp, &z0, &zr, &plan.controls, 0.01).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn planning_is_deterministic() {
        let m = random_model(9, 2, 1);
        let cfg = NmpcConfig {
            iterations: 20,
            seed: 4,
            ..NmpcConfig::default()
        };
        let a = optimize_plan(&m, &[0.1, 0.2], &[0.3, 0.1], &[1.0, 1.0], &cfg, None).unwrap();
        let b = optimize_plan(&m, &[0.1, 0.2], &[0.3, 0.1], &[1.0, 1.0], &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.horizon, a.lambda), (15, 0.01));
    }

    #[test]
    fn shift_drops_first_and_repeats_last() {
        let p = ControlPlan {
            controls: vec![vec![1.0], vec![2.0], vec![3.0]],
            cost: 1.0,
            horizon: 3,
            lambda: 0.0,
        };
        assert_eq!(p.shifted().controls, vec![vec![2.0], vec![3.0], vec![3.0]]);
    }

    #[test]
    fn horizon_one_plan_has_no_rollout() {
        let m = random_model(1, 2, 1);
        let c = plan_cost(&m, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], &[vec![2.0]], 0.5).unwrap();
        assert!((c - (1.0 + 0.5 * 4.0)).abs() < 1e-15);
    }
}
