//! Closed-loop double lane change.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteModel;
use crate::error::{Error, Result};
use crate::vehicle::{idx, STATE_DIM};

/// State norm treated as closed-loop divergence.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Segment lengths along the road, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub straight: f64,
    pub transition: f64,
    pub hold: f64,
    pub return_transition: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            straight: 100.0,
            transition: 50.0,
            hold: 100.0,
            return_transition: 50.0,
        }
    }
}

impl Geometry {
    pub fn length(&self) -> f64 {
        self.straight + self.transition + self.hold + self.return_transition
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub x0: DVector<f64>,
    pub duration: f64,
    pub ts: f64,
    pub payload_true: f64,
    pub payload_design: f64,
    pub steering_limit: f64,
    pub lane_offset: f64,
    pub geometry: Geometry,
    pub v: f64,
    /// Add the reference steering to the feedback.
    pub feedforward: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            x0: DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 0.3, -0.1]),
            duration: 30.0,
            ts: 0.01,
            payload_true: 24000.0,
            payload_design: 24000.0,
            steering_limit: 0.44,
            lane_offset: 3.5,
            geometry: Geometry::default(),
            v: 16.667,
            feedforward: true,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("ts", self.ts),
            ("steering_limit", self.steering_limit),
            ("v", self.v),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.x0.len() != STATE_DIM || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("x0", format!("must hold {STATE_DIM} finite entries")));
        }
        if !self.lane_offset.is_finite() {
            return Err(Error::param("lane_offset", "must be finite"));
        }
        let g = &self.geometry;
        for (name, value) in [
            ("straight", g.straight),
            ("transition", g.transition),
            ("hold", g.hold),
            ("return_transition", g.return_transition),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {value}")));
            }
        }
        if !(g.transition > 0.0 && g.return_transition > 0.0) {
            return Err(Error::param("transition", "transition lengths must be > 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }
}

/// Reference trajectory of the nominal model.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<f64>,
}

/// One period of `sin(2πτ)` on `[t0, t1]`, zero outside.
fn doublet(t: f64, t0: f64, t1: f64) -> f64 {
    let tau = (t - t0) / (t1 - t0);
    if (0.0..=1.0).contains(&tau) {
        (2.0 * std::f64::consts::PI * tau).sin()
    } else {
        0.0
    }
}

fn propagate(model: &DiscreteModel, u: &[f64]) -> Vec<DVector<f64>> {
    let g = model.g_mat.column(0);
    let mut x = DVector::zeros(model.n());
    let mut out = Vec::with_capacity(u.len());
    out.push(x.clone());
    for &ui in &u[..u.len() - 1] {
        x = &model.f_mat * &x + g * ui;
        out.push(x.clone());
    }
    out
}

fn require_single_input(model: &DiscreteModel) -> Result<()> {
    if model.m() != 1 || model.n() != STATE_DIM {
        return Err(Error::Dimension(format!(
            "simulator needs a {STATE_DIM}-state single-input model, got n={} m={}",
            model.n(),
            model.m()
        )));
    }
    Ok(())
}

/// Steering doublets for the lane change and the return, applied to the nominal model.
///
/// Each transition is one sine period of steering, the steering of a cycloidal
/// lateral path. The amplitude is set so the nominal lateral offset equals
/// `lane_offset` at the start of the return. The profile is sampled at the
/// middle of each sampling interval.
pub fn generate_reference(scn: &Scenario, nominal: &DiscreteModel) -> Result<Reference> {
    scn.validate()?;
    require_single_input(nominal)?;
    let available = scn.v * scn.duration;
    let length = scn.geometry.length();
    if length > available {
        return Err(Error::GeometryTooLong { length, available });
    }
    let n_steps = scn.steps();
    let t: Vec<f64> = (0..=n_steps).map(|i| i as f64 * scn.ts).collect();
    let g = &scn.geometry;
    let t0 = g.straight / scn.v;
    let t1 = t0 + g.transition / scn.v;
    let t2 = t1 + g.hold / scn.v;
    let t3 = t2 + g.return_transition / scn.v;
    let mid = |ti: f64| ti + 0.5 * scn.ts;

    let unit: Vec<f64> = t.iter().map(|&ti| doublet(mid(ti), t0, t1)).collect();
    let unit_x = propagate(nominal, &unit);
    let i2 = ((t2 / scn.ts).round() as usize).min(n_steps);
    let unit_offset = unit_x[i2][idx::RHO];
    let amplitude = if scn.lane_offset == 0.0 {
        0.0
    } else if unit_offset.abs() > 0.0 {
        scn.lane_offset / unit_offset
    } else {
        return Err(Error::param("geometry", "lane change produces no lateral offset"));
    };
    let u: Vec<f64> = t
        .iter()
        .map(|&ti| amplitude * (doublet(mid(ti), t0, t1) - doublet(mid(ti), t2, t3)))
        .collect();
    let x = propagate(nominal, &u);
    Ok(Reference { t, x, u })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2_rho: f64,
    pub l2_theta: f64,
    pub max_steer_rate: f64,
    pub max_abs_steer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub ts: f64,
    pub t: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<f64>,
    pub reference: Reference,
    pub x_global: Vec<f64>,
    pub y_global: Vec<f64>,
    pub metrics: Metrics,
}

/// Planar position of the tractor integrated from speed, lateral velocity and heading.
pub fn integrate_position(states: &[DVector<f64>], v: f64, ts: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(states.len());
    let mut ys = Vec::with_capacity(states.len());
    let (mut x, mut y) = (0.0, states.first().map_or(0.0, |s| s[idx::RHO]));
    for s in states {
        xs.push(x);
        ys.push(y);
        let (heading, lateral) = (s[idx::THETA], s[idx::YDOT1]);
        x += ts * (v * heading.cos() - lateral * heading.sin());
        y += ts * (v * heading.sin() + lateral * heading.cos());
    }
    (xs, ys)
}

/// `u_i = sat(u_ref_i − K e_i + K_z z_i)` with `e_i = x_ref_i − x_i` and
/// `z_i` the previous feedback contribution, `z_0 = 0`.
pub fn simulate_closed_loop(
    plant: &DiscreteModel,
    k: &DMatrix<f64>,
    aux: Option<&DMatrix<f64>>,
    scn: &Scenario,
    refs: &Reference,
) -> Result<SimResult> {
    scn.validate()?;
    require_single_input(plant)?;
    let n_steps = scn.steps();
    if refs.x.len() != n_steps + 1 || refs.u.len() != n_steps + 1 {
        return Err(Error::Dimension(format!(
            "reference has {} samples, scenario needs {}",
            refs.x.len(),
            n_steps + 1
        )));
    }
    if k.shape() != (1, STATE_DIM) {
        return Err(Error::Dimension(format!("gain is {:?}", k.shape())));
    }
    let kz = aux.map(|m| m[(0, 0)]).unwrap_or(0.0);
    let g = plant.g_mat.column(0);
    let k_row = k.row(0).transpose();

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut controls = Vec::with_capacity(n_steps + 1);
    let mut x = scn.x0.clone();
    let mut z = 0.0;
    for i in 0..=n_steps {
        if !(x.norm() <= DIVERGENCE_NORM) {
            return Err(Error::ClosedLoopDiverged { step: i });
        }
        let e = &refs.x[i] - &x;
        let ff = if scn.feedforward { refs.u[i] } else { 0.0 };
        let raw = ff - k_row.dot(&e) + kz * z;
        let u = raw.clamp(-scn.steering_limit, scn.steering_limit);
        z = u - ff;
        controls.push(u);
        states.push(x.clone());
        if i < n_steps {
            x = &plant.f_mat * &x + g * u;
        }
    }
    let (x_global, y_global) = integrate_position(&states, scn.v, scn.ts);
    let mut result = SimResult {
        ts: scn.ts,
        t: refs.t.clone(),
        states,
        controls,
        reference: refs.clone(),
        x_global,
        y_global,
        metrics: Metrics {
            l2_rho: 0.0,
            l2_theta: 0.0,
            max_steer_rate: 0.0,
            max_abs_steer: 0.0,
        },
    };
    result.metrics = compute_metrics(&result);
    Ok(result)
}

/// Discrete L2 norm `sqrt(ts·Σ v_i²)`.
pub fn l2_norm(values: impl IntoIterator<Item = f64>, ts: f64) -> f64 {
    (ts * values.into_iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Tracking-error norms of `ρ` and `θ` plus steering statistics.
pub fn compute_metrics(r: &SimResult) -> Metrics {
    let err = |j: usize| {
        r.states
            .iter()
            .zip(&r.reference.x)
            .map(move |(x, xr)| x[j] - xr[j])
    };
    let max_steer_rate = r
        .controls
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / r.ts)
        .fold(0.0, f64::max);
    let max_abs_steer = r.controls.iter().map(|u| u.abs()).fold(0.0, f64::max);
    Metrics {
        l2_rho: l2_norm(err(idx::RHO), r.ts),
        l2_theta: l2_norm(err(idx::THETA), r.ts),
        max_steer_rate,
        max_abs_steer,
    }
}
