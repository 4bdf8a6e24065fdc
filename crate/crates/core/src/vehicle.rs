//! Linear single-track model of a tractor-semitrailer in path coordinates.
//!
//! The state is `[ẏ1, ψ̇1, φ̇, φ, ρ, θ]`: tractor lateral velocity, tractor yaw
//! rate, articulation rate, articulation angle, lateral offset from the path
//! and heading error. The single input is the front steering angle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const STATE_DIM: usize = 6;
pub const STATE_LABELS: [&str; STATE_DIM] = ["ydot1", "psidot1", "phidot", "phi", "rho", "theta"];

/// Row/column indices into the state vector.
pub mod idx {
    pub const YDOT1: usize = 0;
    pub const PSIDOT1: usize = 1;
    pub const PHIDOT: usize = 2;
    pub const PHI: usize = 3;
    pub const RHO: usize = 4;
    pub const THETA: usize = 5;
}

/// How the trailer yaw inertia follows the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InertiaScaling {
    /// `J2 · m2_eff / (m2 + payload_nominal)`.
    #[default]
    Linear,
    /// `J2` regardless of payload.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub l1: f64,
    pub l2: f64,
    pub d1: f64,
    pub h1: f64,
    pub l1_star: f64,
    pub width_eps: f64,
    pub v: f64,
    pub m1: f64,
    pub m2: f64,
    pub payload: f64,
    /// Payload at which `j2` is quoted.
    pub payload_nominal: f64,
    pub j1: f64,
    pub j2: f64,
    pub f_norm: f64,
    pub g: f64,
    pub inertia_scaling: InertiaScaling,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            a1: 1.734,
            a2: 4.8,
            b1: 2.415,
            b2: 3.2,
            l1: 4.149,
            l2: 8.0,
            d1: -0.29,
            h1: 2.125,
            l1_star: 3.859,
            width_eps: 2.6,
            v: 16.667,
            m1: 8909.0,
            m2: 9370.0,
            payload: 24000.0,
            payload_nominal: 24000.0,
            j1: 41566.0,
            j2: 404360.0,
            f_norm: 5.73,
            g: 9.81,
            inertia_scaling: InertiaScaling::Linear,
        }
    }
}

fn close_rel(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

impl VehicleParams {
    /// Same vehicle carrying a different payload.
    pub fn with_payload(&self, payload: f64) -> Self {
        Self {
            payload,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("h1", self.h1),
            ("l1_star", self.l1_star),
            ("width_eps", self.width_eps),
            ("v", self.v),
            ("m1", self.m1),
            ("m2", self.m2),
            ("j1", self.j1),
            ("j2", self.j2),
            ("f_norm", self.f_norm),
            ("g", self.g),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {value}")));
            }
        }
        for (name, value) in [("payload", self.payload), ("payload_nominal", self.payload_nominal)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        if !self.d1.is_finite() {
            return Err(Error::param("d1", "must be finite"));
        }
        let relations = [
            ("l1", self.l1, self.a1 + self.b1, "l1 = a1 + b1"),
            ("l1_star", self.l1_star, self.a1 + self.h1, "l1_star = a1 + h1"),
        ];
        for (name, value, expected, rule) in relations {
            if !close_rel(value, expected, 1e-9) {
                return Err(Error::param(name, format!("{rule} violated: {value} vs {expected}")));
            }
        }
        let d1 = self.h1 - self.b1;
        if !close_rel(self.d1, d1, 1e-9) {
            return Err(Error::param("d1", format!("d1 = h1 - b1 violated: {} vs {d1}", self.d1)));
        }
        Ok(())
    }

    pub fn trailer_mass(&self) -> f64 {
        self.m2 + self.payload
    }

    pub fn trailer_inertia(&self) -> f64 {
        match self.inertia_scaling {
            InertiaScaling::Linear => self.j2 * self.trailer_mass() / (self.m2 + self.payload_nominal),
            InertiaScaling::Fixed => self.j2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxleLoads {
    pub fz1: f64,
    pub fz2: f64,
    pub fz3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Static axle loads and the load-proportional cornering stiffnesses.
pub fn compute_axle_loads(params: &VehicleParams) -> Result<AxleLoads> {
    params.validate()?;
    let p = params;
    let m2 = p.trailer_mass();
    let fz1 = p.m1 * p.g * p.b1 / p.l1 - m2 * p.g * p.b2 * p.d1 / (p.l2 * p.l1);
    let fz2 = p.m1 * p.g * p.a1 / p.l1 + m2 * p.g * p.b2 * p.l1_star / (p.l2 * p.l1);
    let fz3 = m2 * p.g * p.a2 / p.l2;
    for (axle, force) in [(1, fz1), (2, fz2), (3, fz3)] {
        if force < 0.0 {
            return Err(Error::AxleLift { axle, force });
        }
    }
    Ok(AxleLoads {
        fz1,
        fz2,
        fz3,
        c1: p.f_norm * fz1,
        c2: p.f_norm * fz2,
        c3: p.f_norm * fz3,
    })
}

/// Descriptor system `M ẋ = A x + B α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub mass_matrix: DMatrix<f64>,
    pub state_matrix: DMatrix<f64>,
    pub input_matrix: DMatrix<f64>,
}

impl ContinuousModel {
    pub fn state_order(&self) -> [&'static str; STATE_DIM] {
        STATE_LABELS
    }
}

pub fn assemble_continuous(params: &VehicleParams, loads: &AxleLoads) -> Result<ContinuousModel> {
    params.validate()?;
    let p = params;
    let m2 = p.trailer_mass();
    let j2 = p.trailer_inertia();
    let (m1, j1, a1, a2, b1, h1, l2, v) = (p.m1, p.j1, p.a1, p.a2, p.b1, p.h1, p.l2, p.v);
    let (c1, c2, c3) = (loads.c1, loads.c2, loads.c3);

    let mut mass = DMatrix::identity(STATE_DIM, STATE_DIM);
    let inertia = [
        [m1 + m2, -m2 * (h1 + a2), -m2 * a2],
        [-m2 * h1, j1 + m2 * h1 * (h1 + a2), m2 * h1 * a2],
        [-m2 * a2, j2 + m2 * a2 * (h1 + a2), j2 + m2 * a2 * a2],
    ];
    for (r, row) in inertia.iter().enumerate() {
        for (c, &value) in row.iter().enumerate() {
            mass[(r, c)] = value;
        }
    }

    let mut a = DMatrix::zeros(STATE_DIM, STATE_DIM);
    let dynamics = [
        [
            (-c1 - c2 - c3) / v,
            (c3 * (h1 + l2) - a1 * c1 + b1 * c2 - (m1 + m2) * v * v) / v,
            c3 * l2 / v,
            c3,
        ],
        [
            (c3 * h1 - a1 * c1 + b1 * c2) / v,
            (m2 * h1 * v * v - a1 * a1 * c1 - b1 * b1 * c2 - c3 * h1 * (h1 + l2)) / v,
            -c3 * h1 * l2 / v,
            -c3 * h1,
        ],
        [
            c3 * l2 / v,
            (m2 * a2 * v * v - c3 * l2 * (h1 + l2)) / v,
            -c3 * l2 * l2 / v,
            -c3 * l2,
        ],
    ];
    for (r, row) in dynamics.iter().enumerate() {
        for (c, &value) in row.iter().enumerate() {
            a[(r, c)] = value;
        }
    }
    a[(idx::PHI, idx::PHIDOT)] = 1.0;
    a[(idx::RHO, idx::YDOT1)] = 1.0;
    a[(idx::RHO, idx::THETA)] = v;
    a[(idx::THETA, idx::PSIDOT1)] = 1.0;

    let mut b = DMatrix::zeros(STATE_DIM, 1);
    b[(0, 0)] = c1;
    b[(1, 0)] = a1 * c1;

    let sv = linalg::singular_values(&mass);
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    if !sigma_min.is_finite() || sigma_min <= f64::EPSILON * sigma_max {
        return Err(Error::SingularMassMatrix { sigma_min });
    }
    Ok(ContinuousModel {
        mass_matrix: mass,
        state_matrix: a,
        input_matrix: b,
    })
}

/// Largest mass-matrix condition number accepted by [`standard_form`].
pub const MAX_MASS_CONDITION: f64 = 1e12;

/// Explicit form `ẋ = Ac x + Bc α` with `Ac = M⁻¹A`, `Bc = M⁻¹B`.
pub fn standard_form(model: &ContinuousModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let cond = linalg::condition_number(&model.mass_matrix);
    if !(cond <= MAX_MASS_CONDITION) {
        return Err(Error::IllConditioned {
            cond,
            params: "j1, j2, m1, m2, payload (inertia block of the mass matrix)".into(),
        });
    }
    let lu = model.mass_matrix.clone().lu();
    let ac = lu
        .solve(&model.state_matrix)
        .ok_or(Error::Singular("mass matrix"))?;
    let bc = lu
        .solve(&model.input_matrix)
        .ok_or(Error::Singular("mass matrix"))?;
    Ok((ac, bc))
}

/// Parameters through loads, assembly and reduction to `(Ac, Bc)`.
pub fn continuous_standard_form(params: &VehicleParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let loads = compute_axle_loads(params)?;
    let model = assemble_continuous(params, &loads)?;
    standard_form(&model)
}
