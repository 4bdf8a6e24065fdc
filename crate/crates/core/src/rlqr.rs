//! Robust recursive LQR.
//!
//! Each backward step solves one linear block system whose solution contains
//! the closed-loop matrix `L`, the gain `K` and the cost matrix `P`.
//! Block sizes are `[n, m, n, n + l, n, m]`; with `𝓘 = [I; 0]`, `𝓖 = [G; E_G]`
//! and `𝓕 = [F; E_F]` the system reads
//!
//! ```text
//! [ I  0  0  0    P'  0  ]       [ 0  ]
//! [ 0  I  0  0    0   R  ]       [ 0  ]
//! [ 0  0  I  0    0   0  ]  Y =  [ −Q ]
//! [ 0  0  0  Σ    𝓘   −𝓖 ]       [ 𝓕  ]
//! [ I  0  0  𝓘ᵀ   0   0  ]       [ 0  ]
//! [ 0  I  0  −𝓖ᵀ  0   0  ]       [ 0  ]
//! ```
//!
//! which is the usual form with its first three block rows multiplied through
//! by `P'`, `R` and `Q`, so no weight is ever inverted. Then `L = Y₅`, `K = Y₆`
//! and `P = −Y₃ + 𝓕ᵀY₄`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteModel;
use crate::error::{Error, Result};
use crate::linalg::{self, BlockMatrix};
use crate::robust_ls::{self, RlsProblem, RobustRlsProblem};
use crate::uncertainty::{check_rank_condition, UncertaintyModel};

/// Cost-matrix norm treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e14;
/// Relative margin of the default multiplier above `μ‖HᵀH‖`.
pub const LAMBDA_MARGIN: f64 = 1e-6;

/// How the multiplier λ is picked for finite μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    /// `λ = μ‖HᵀH‖(1 + 1e-6)`.
    #[default]
    Margin,
    /// Minimize the one-step robust cost over λ.
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlqrWeights {
    pub q_mat: DMatrix<f64>,
    pub r_mat: DMatrix<f64>,
    pub p_terminal: DMatrix<f64>,
    /// Dynamics penalty; `f64::INFINITY` selects the limit form with `Σ = 0`.
    pub mu: f64,
    pub lambda_rule: LambdaRule,
}

impl RlqrWeights {
    pub fn new(q_mat: DMatrix<f64>, r_mat: DMatrix<f64>, p_terminal: DMatrix<f64>, mu: f64) -> Result<Self> {
        let w = Self {
            q_mat,
            r_mat,
            p_terminal,
            mu,
            lambda_rule: LambdaRule::Margin,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_lambda_rule(mut self, rule: LambdaRule) -> Self {
        self.lambda_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q_mat.nrows();
        if !self.q_mat.is_square() || !self.r_mat.is_square() || self.p_terminal.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Q {:?}, R {:?}, P_N {:?}",
                self.q_mat.shape(),
                self.r_mat.shape(),
                self.p_terminal.shape()
            )));
        }
        if !(self.mu > 0.0) {
            return Err(Error::param("mu", format!("must be > 0, got {}", self.mu)));
        }
        for (name, m, strict) in [("Q", &self.q_mat, true), ("R", &self.r_mat, true), ("P_N", &self.p_terminal, false)] {
            if (m - m.transpose()).abs().max() > 1e-9 * (1.0 + m.abs().max()) {
                return Err(Error::param(name, "must be symmetric"));
            }
            let min = linalg::min_sym_eig(m);
            let bound = if strict { 0.0 } else { -1e-12 * (1.0 + m.abs().max()) };
            if !(min > bound) {
                return Err(Error::param(name, format!("smallest eigenvalue {min:e} violates definiteness")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlqrStep {
    pub l: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Multiplier used for the step; `None` in the limit form or without uncertainty.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlqrSolution {
    pub k_gain: DMatrix<f64>,
    pub l_closed: DMatrix<f64>,
    pub p_cost: DMatrix<f64>,
    pub lambda: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖P_i − P_{i+1}‖ / (1 + ‖P_{i+1}‖)` per backward step.
    pub step_changes: Vec<f64>,
}

/// Stacked matrices of one backward step.
struct Stack {
    cal_i: DMatrix<f64>,
    cal_g: DMatrix<f64>,
    cal_f: DMatrix<f64>,
    sigma: DMatrix<f64>,
}

fn check_dims(model: &DiscreteModel, unc: &UncertaintyModel, w: &RlqrWeights) -> Result<()> {
    let (n, m) = (model.n(), model.m());
    if unc.n() != n || unc.m() != m || w.q_mat.nrows() != n || w.r_mat.nrows() != m {
        return Err(Error::Dimension(format!(
            "model n={n} m={m}, uncertainty n={} m={}, Q {:?}, R {:?}",
            unc.n(),
            unc.m(),
            w.q_mat.shape(),
            w.r_mat.shape()
        )));
    }
    Ok(())
}

fn refined_lambda(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p_next: &DMatrix<f64>,
    floor: f64,
) -> Result<f64> {
    let p = step_as_robust_ls(model, unc, w, p_next);
    let (lambda, _, _) = robust_ls::minimize_over_lambda(floor, |l| {
        robust_ls::gamma_of_lambda(&p, l).map(|(_, g)| g)
    })?;
    Ok(lambda)
}

/// The one-step problem in robust least-squares form, unknown `[x_{i+1}; u_i]`
/// for the columns of `x_i = I`.
pub fn step_as_robust_ls(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p_next: &DMatrix<f64>,
) -> RobustRlsProblem {
    let (n, m, l) = (model.n(), model.m(), unc.l());
    let eye = DMatrix::identity(n, n);
    let q_mat = linalg::block_diag(&[p_next, &w.r_mat]);
    let w_mat = linalg::block_diag(&[&w.q_mat, &(DMatrix::identity(n, n) * w.mu)]);
    let top = linalg::hstack(&[&DMatrix::zeros(n, n), &DMatrix::zeros(n, m)]);
    let bottom = linalg::hstack(&[&eye, &(-&model.g_mat)]);
    let a_mat = linalg::vstack(&[&top, &bottom]);
    let b_mat = linalg::vstack(&[&(-&eye), &model.f_mat]);
    let h_mat = linalg::vstack(&[&DMatrix::zeros(n, l), &unc.h_vec]);
    let ea_mat = linalg::hstack(&[&DMatrix::zeros(l, n), &(-&unc.eg_vec)]);
    RobustRlsProblem {
        base: RlsProblem {
            q_mat,
            w_mat,
            a_mat,
            b_mat,
        },
        h_mat,
        ea_mat,
        eb_mat: unc.ef_vec.clone(),
    }
}

/// Multiplier for a step, `None` when the uncertainty block is absent or in the limit form.
fn choose_lambda(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p_next: &DMatrix<f64>,
) -> Result<Option<f64>> {
    if unc.is_inactive() || w.mu.is_infinite() {
        return Ok(None);
    }
    let h = &unc.h_vec;
    let floor = w.mu * linalg::spectral_norm(&(h.transpose() * h));
    let lambda = match w.lambda_rule {
        LambdaRule::Margin => floor * (1.0 + LAMBDA_MARGIN),
        LambdaRule::Refined => refined_lambda(model, unc, w, p_next, floor)?,
    };
    Ok(Some(lambda))
}

fn stack(model: &DiscreteModel, unc: &UncertaintyModel, mu: f64, lambda: Option<f64>) -> Stack {
    let n = model.n();
    let eye = DMatrix::identity(n, n);
    if unc.is_inactive() {
        let sigma = if mu.is_infinite() {
            DMatrix::zeros(n, n)
        } else {
            &eye / mu
        };
        return Stack {
            cal_i: eye,
            cal_g: model.g_mat.clone(),
            cal_f: model.f_mat.clone(),
            sigma,
        };
    }
    let l = unc.l();
    let cal_i = linalg::vstack(&[&eye, &DMatrix::zeros(l, n)]);
    let cal_g = linalg::vstack(&[&model.g_mat, &unc.eg_vec]);
    let cal_f = linalg::vstack(&[&model.f_mat, &unc.ef_vec]);
    let sigma = match lambda {
        Some(lambda) if mu.is_finite() => {
            let h = &unc.h_vec;
            let s11 = &eye / mu - h * h.transpose() / lambda;
            let s22 = DMatrix::identity(l, l) / lambda;
            linalg::block_diag(&[&s11, &s22])
        }
        _ => DMatrix::zeros(n + l, n + l),
    };
    Stack {
        cal_i,
        cal_g,
        cal_f,
        sigma,
    }
}

/// One backward step from `P_{i+1} = p_next`.
pub fn rlqr_step(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p_next: &DMatrix<f64>,
) -> Result<RlqrStep> {
    check_dims(model, unc, w)?;
    let (n, m) = (model.n(), model.m());
    if p_next.shape() != (n, n) {
        return Err(Error::Dimension(format!("P_next is {:?}", p_next.shape())));
    }
    let lambda = choose_lambda(model, unc, w, p_next)?;
    let s = stack(model, unc, w.mu, lambda);
    let nl = s.cal_i.nrows();
    let eye_n = DMatrix::identity(n, n);
    let eye_m = DMatrix::identity(m, m);

    let mut blk = BlockMatrix::new(&[n, m, n, nl, n, m]);
    blk.set(0, 0, &eye_n);
    blk.set(0, 4, p_next);
    blk.set(1, 1, &eye_m);
    blk.set(1, 5, &w.r_mat);
    blk.set(2, 2, &eye_n);
    blk.set(3, 3, &s.sigma);
    blk.set(3, 4, &s.cal_i);
    blk.set(3, 5, &(-&s.cal_g));
    blk.set(4, 0, &eye_n);
    blk.set(4, 3, &s.cal_i.transpose());
    blk.set(5, 1, &eye_m);
    blk.set(5, 3, &(-s.cal_g.transpose()));

    let mut rhs = DMatrix::zeros(blk.dim(), n);
    let (r2, _) = blk.range(2);
    rhs.view_mut((r2, 0), (n, n)).copy_from(&(-&w.q_mat));
    let (r3, _) = blk.range(3);
    rhs.view_mut((r3, 0), (nl, n)).copy_from(&s.cal_f);

    let sol = linalg::lu_solve(&blk.mat, &rhs).ok_or_else(|| Error::SingularBlockSystem {
        rank_condition: check_rank_condition(unc),
    })?;
    let l = blk.rows_of(&sol, 4);
    let k = blk.rows_of(&sol, 5);
    let p = -blk.rows_of(&sol, 2) + s.cal_f.transpose() * blk.rows_of(&sol, 3);
    Ok(RlqrStep {
        l,
        k,
        p: linalg::symmetrize(&p),
        lambda,
    })
}

fn relative_change(p_new: &DMatrix<f64>, p_old: &DMatrix<f64>) -> f64 {
    (p_new - p_old).norm() / (1.0 + p_old.norm())
}

/// Iterate backward steps from the terminal weight to a stationary gain.
pub fn rlqr_synthesize(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    max_iter: usize,
    tol: f64,
) -> Result<RlqrSolution> {
    w.validate()?;
    check_dims(model, unc, w)?;
    let mut p = w.p_terminal.clone();
    let mut changes = Vec::new();
    let mut last: Option<RlqrStep> = None;
    for iteration in 1..=max_iter {
        let step = rlqr_step(model, unc, w, &p)?;
        let norm = step.p.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence {
                what: "robust LQR cost matrix",
                iteration,
                norm,
            });
        }
        let change = relative_change(&step.p, &p);
        changes.push(change);
        p = step.p.clone();
        last = Some(step);
        if change < tol {
            return Ok(finish(last.unwrap(), iteration, true, changes));
        }
    }
    match last {
        Some(step) => Ok(finish(step, max_iter, false, changes)),
        None => Err(Error::param("max_iter", "must be >= 1")),
    }
}

fn finish(step: RlqrStep, iterations: usize, converged: bool, step_changes: Vec<f64>) -> RlqrSolution {
    RlqrSolution {
        k_gain: step.k,
        l_closed: step.l,
        p_cost: step.p,
        lambda: step.lambda,
        iterations,
        converged,
        step_changes,
    }
}

/// Relative mismatch between `P` and its reconstruction
/// `LᵀPL + KᵀRK + Q + rᵀΣ⁻¹r`, `r = 𝓘L − 𝓖K − 𝓕`.
///
/// The `Σ⁻¹` term is dropped in the limit form, where `r` vanishes.
pub fn riccati_consistency(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    sol: &RlqrSolution,
) -> f64 {
    let (l, k, p) = (&sol.l_closed, &sol.k_gain, &sol.p_cost);
    let mut rebuilt = l.transpose() * p * l + k.transpose() * &w.r_mat * k + &w.q_mat;
    if w.mu.is_finite() {
        let s = stack(model, unc, w.mu, sol.lambda);
        let r = &s.cal_i * l - &s.cal_g * k - &s.cal_f;
        match linalg::lu_solve(&s.sigma, &r) {
            Some(sr) => rebuilt += r.transpose() * sr,
            None => return f64::INFINITY,
        }
    }
    (rebuilt - p).norm() / (1.0 + p.norm())
}

/// Finite-horizon schedule and its nominal forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonPlan {
    /// Steps `0..N`, in forward order.
    pub steps: Vec<RlqrStep>,
    /// `x_0 … x_N` with `x_{i+1} = L_i x_i`.
    pub states: Vec<DMatrix<f64>>,
    /// `u_i = K_i x_i`.
    pub inputs: Vec<DMatrix<f64>>,
    /// `x_0ᵀ P_0 x_0`.
    pub cost: f64,
}

pub fn rlqr_finite_horizon(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    horizon: usize,
    x0: &DMatrix<f64>,
) -> Result<FiniteHorizonPlan> {
    w.validate()?;
    check_dims(model, unc, w)?;
    if x0.shape() != (model.n(), 1) {
        return Err(Error::Dimension(format!("x0 is {:?}", x0.shape())));
    }
    let mut p = w.p_terminal.clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let step = rlqr_step(model, unc, w, &p)?;
        p = step.p.clone();
        steps.push(step);
    }
    steps.reverse();
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::with_capacity(horizon);
    for step in &steps {
        let x = states.last().unwrap();
        inputs.push(&step.k * x);
        states.push(&step.l * x);
    }
    let cost = (x0.transpose() * &p * x0)[(0, 0)];
    Ok(FiniteHorizonPlan {
        steps,
        states,
        inputs,
        cost,
    })
}
