//! Ground-truth physics for the planar single and double pendulum.
//!
//! Angles are joint coordinates measured from the downward vertical: the
//! first joint angle is absolute, the second (double pendulum only) is
//! relative to the first link. `0` hangs down, `±π` points up. Masses are
//! point masses at the link ends and every joint has viscous friction and
//! its own actuator.
//!
//! Nothing in here is visible to the learner; only the renderer and the
//! evaluation code read [`PendulumState`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Control interval between frames, seconds.
pub const DEFAULT_DT: f64 = 0.2;
/// RK4 substeps per control interval.
pub const DEFAULT_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Env {
    Single,
    Double,
}

impl Env {
    pub fn links(self) -> usize {
        match self {
            Env::Single => 1,
            Env::Double => 2,
        }
    }

    /// Control dimension; every joint is actuated.
    pub fn n_u(self) -> usize {
        self.links()
    }

    pub fn default_params(self) -> PendulumParams {
        PendulumParams::uniform(self.links())
    }

    /// Upright target in joint coordinates.
    pub fn upright(self) -> Vec<f64> {
        match self {
            Env::Single => vec![PI],
            Env::Double => vec![PI, 0.0],
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Env::Single => 0,
            Env::Double => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Env> {
        match tag {
            0 => Some(Env::Single),
            1 => Some(Env::Double),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Env::Single => "single",
            Env::Double => "double",
        }
    }
}

impl std::str::FromStr for Env {
    type Err = Error;
    fn from_str(s: &str) -> Result<Env> {
        match s {
            "single" => Ok(Env::Single),
            "double" => Ok(Env::Double),
            other => Err(Error::InvalidArgument(format!("unknown environment `{other}` (single|double)"))),
        }
    }
}

impl std::fmt::Display for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumState {
    /// Joint angles, radians, unwrapped.
    pub angles: Vec<f64>,
    /// Joint angular velocities, rad/s.
    pub velocities: Vec<f64>,
}

impl PendulumState {
    /// Hanging straight down, at rest.
    pub fn rest(links: usize) -> Self {
        PendulumState {
            angles: vec![0.0; links],
            velocities: vec![0.0; links],
        }
    }

    pub fn at_angles(angles: &[f64]) -> Self {
        PendulumState {
            angles: angles.to_vec(),
            velocities: vec![0.0; angles.len()],
        }
    }

    pub fn links(&self) -> usize {
        self.angles.len()
    }

    pub fn is_finite(&self) -> bool {
        self.angles.iter().chain(&self.velocities).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// Metres.
    pub link_lengths: Vec<f64>,
    /// Kilograms, concentrated at each link's end.
    pub link_masses: Vec<f64>,
    /// Viscous joint friction, N·m·s/rad.
    pub friction: Vec<f64>,
    /// m/s².
    pub gravity: f64,
    /// Symmetric bound on every joint torque, N·m.
    pub torque_limit: f64,
}

impl PendulumParams {
    /// 1 m, 1 kg, friction 1 per link; g = 9.81, torque limit 5 N·m.
    pub fn uniform(links: usize) -> Self {
        PendulumParams {
            link_lengths: vec![1.0; links],
            link_masses: vec![1.0; links],
            friction: vec![1.0; links],
            gravity: 9.81,
            torque_limit: 5.0,
        }
    }

    pub fn links(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.links();
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidArgument(format!("only 1 or 2 links are supported, got {n}")));
        }
        if self.link_masses.len() != n || self.friction.len() != n {
            return Err(Error::InvalidArgument("link parameter vectors differ in length".into()));
        }
        let all = self
            .link_lengths
            .iter()
            .chain(&self.link_masses)
            .chain(&self.friction)
            .chain([&self.gravity, &self.torque_limit]);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pendulum parameters".into()));
        }
        if self.link_lengths.iter().chain(&self.link_masses).any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument("link lengths and masses must be positive".into()));
        }
        if self.friction.iter().any(|&b| b < 0.0) {
            return Err(Error::InvalidArgument("friction must be non-negative".into()));
        }
        if self.torque_limit <= 0.0 {
            return Err(Error::InvalidArgument("torque limit must be positive".into()));
        }
        Ok(())
    }
}

/// Joint torques, N·m.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal(pub Vec<f64>);

impl ControlSignal {
    pub fn zeros(n_u: usize) -> Self {
        ControlSignal(vec![0.0; n_u])
    }

    /// Clamp every component into `[-limit, limit]`.
    pub fn saturated(&self, limit: f64) -> Self {
        ControlSignal(self.0.iter().map(|u| u.clamp(-limit, limit)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Time derivative of `[q, q̇]` for constant joint torques `u`.
fn derivative(p: &PendulumParams, x: &[f64], u: &[f64], out: &mut [f64]) {
    let g = p.gravity;
    match p.links() {
        1 => {
            let (q, qd) = (x[0], x[1]);
            let (m, l, b) = (p.link_masses[0], p.link_lengths[0], p.friction[0]);
            out[0] = qd;
            out[1] = (u[0] - b * qd - m * g * l * q.sin()) / (m * l * l);
        }
        2 => {
            let (q1, q2, qd1, qd2) = (x[0], x[1], x[2], x[3]);
            let (m1, m2) = (p.link_masses[0], p.link_masses[1]);
            let (l1, l2) = (p.link_lengths[0], p.link_lengths[1]);
            let c2 = q2.cos();
            let h = m2 * l1 * l2 * q2.sin();
            let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
            let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
            let m22 = m2 * l2 * l2;
            let s12 = (q1 + q2).sin();
            let grav1 = (m1 + m2) * g * l1 * q1.sin() + m2 * g * l2 * s12;
            let grav2 = m2 * g * l2 * s12;
            let cor1 = -h * (2.0 * qd1 * qd2 + qd2 * qd2);
            let cor2 = h * qd1 * qd1;
            let r1 = u[0] - p.friction[0] * qd1 - cor1 - grav1;
            let r2 = u[1] - p.friction[1] * qd2 - cor2 - grav2;
            let det = m11 * m22 - m12 * m12;
            out[0] = qd1;
            out[1] = qd2;
            out[2] = (m22 * r1 - m12 * r2) / det;
            out[3] = (m11 * r2 - m12 * r1) / det;
        }
        _ => unreachable!("validated link count"),
    }
}

/// Advance the state by `dt` seconds with the default RK4 substep count.
pub fn step(state: &PendulumState, u: &ControlSignal, params: &PendulumParams, dt: f64) -> Result<PendulumState> {
    step_with_substeps(state, u, params, dt, DEFAULT_SUBSTEPS)
}

/// Classical RK4 with `substeps` equal internal steps, torque held constant.
pub fn step_with_substeps(
    state: &PendulumState,
    u: &ControlSignal,
    params: &PendulumParams,
    dt: f64,
    substeps: usize,
) -> Result<PendulumState> {
    params.validate()?;
    let n = params.links();
    if state.angles.len() != n || state.velocities.len() != n {
        return Err(Error::dim("pendulum state links", n, state.angles.len()));
    }
    if u.0.len() != n {
        return Err(Error::dim("control dimension", n, u.0.len()));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite(format!("pendulum state {state:?}")));
    }
    if u.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("control {u:?}")));
    }
    if !(dt > 0.0 && dt.is_finite()) || substeps == 0 {
        return Err(Error::InvalidArgument(format!("need dt > 0 and substeps >= 1, got dt={dt}, substeps={substeps}")));
    }

    let dim = 2 * n;
    let mut x: Vec<f64> = state.angles.iter().chain(&state.velocities).copied().collect();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        derivative(params, &x, &u.0, &mut k1);
        for i in 0..dim {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        derivative(params, &tmp, &u.0, &mut k2);
        for i in 0..dim {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        derivative(params, &tmp, &u.0, &mut k3);
        for i in 0..dim {
            tmp[i] = x[i] + h * k3[i];
        }
        derivative(params, &tmp, &u.0, &mut k4);
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let next = PendulumState {
        angles: x[..n].to_vec(),
        velocities: x[n..].to_vec(),
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("integration produced a non-finite state".into()));
    }
    Ok(next)
}

/// Roll out `n_steps` control intervals. Entry `t` holds the state before
/// `u_t` is applied, together with the (saturated) `u_t`.
pub fn simulate<F>(
    initial: &PendulumState,
    mut policy: F,
    n_steps: usize,
    params: &PendulumParams,
    dt: f64,
) -> Result<Vec<(PendulumState, ControlSignal)>>
where
    F: FnMut(usize) -> ControlSignal,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("simulate needs n_steps >= 1".into()));
    }
    let mut out = Vec::with_capacity(n_steps);
    let mut state = initial.clone();
    for t in 0..n_steps {
        let u = policy(t).saturated(params.torque_limit);
        let next = step(&state, &u, params, dt)?;
        out.push((state, u));
        state = next;
    }
    Ok(out)
}

/// Kinetic plus potential energy, with the pivot at zero height.
pub fn mechanical_energy(state: &PendulumState, params: &PendulumParams) -> f64 {
    let g = params.gravity;
    match params.links() {
        1 => {
            let (m, l) = (params.link_masses[0], params.link_lengths[0]);
            let qd = state.velocities[0];
            0.5 * m * l * l * qd * qd - m * g * l * state.angles[0].cos()
        }
        _ => {
            let (q1, q2) = (state.angles[0], state.angles[1]);
            let (qd1, qd2) = (state.velocities[0], state.velocities[1]);
            let (m1, m2) = (params.link_masses[0], params.link_masses[1]);
            let (l1, l2) = (params.link_lengths[0], params.link_lengths[1]);
            let c2 = q2.cos();
            let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
            let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
            let m22 = m2 * l2 * l2;
            let kinetic = 0.5 * (m11 * qd1 * qd1 + 2.0 * m12 * qd1 * qd2 + m22 * qd2 * qd2);
            let potential = -(m1 + m2) * g * l1 * q1.cos() - m2 * g * l2 * (q1 + q2).cos();
            kinetic + potential
        }
    }
}

/// Map any angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Absolute distance on the circle between each joint angle and its target,
/// in degrees, within `[0, 180]`.
pub fn per_link_angle_errors(state: &PendulumState, target: &[f64]) -> Vec<f64> {
    state
        .angles
        .iter()
        .zip(target)
        .map(|(a, t)| wrap_angle(a - t).abs().to_degrees())
        .collect()
}

/// Mean of [`per_link_angle_errors`] across links.
pub fn canonical_angle_error(state: &PendulumState, target: &[f64]) -> f64 {
    let errs = per_link_angle_errors(state, target);
    errs.iter().sum::<f64>() / errs.len() as f64
}
