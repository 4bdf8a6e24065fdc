//! Full-information H∞ state feedback for the comparison controller.
//!
//! The disturbance enters through the uncertainty direction `H`; the control
//! enters through `G`. The stationary indefinite Riccati recursion at level γ
//! runs over the stacked input `[u; w]`.

use nalgebra::DMatrix;

use crate::discretize::DiscreteModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::uncertainty::UncertaintyModel;

pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DIVERGENCE_NORM: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct HinfConfig {
    pub gamma: f64,
    /// Control weight, m×m.
    pub qc_mat: DMatrix<f64>,
    /// State weight, n×n.
    pub rc_mat: DMatrix<f64>,
    pub pc_terminal: DMatrix<f64>,
    /// Initial-state uncertainty weight.
    pub pi0: DMatrix<f64>,
    /// Disturbance weight, l×l.
    pub qw_mat: DMatrix<f64>,
}

impl HinfConfig {
    /// Zero terminal weight, `Π₀ = I`, `Q^w = I`.
    pub fn new(gamma: f64, qc_mat: DMatrix<f64>, rc_mat: DMatrix<f64>, l: usize) -> Result<Self> {
        let n = rc_mat.nrows();
        let cfg = Self {
            gamma,
            qc_mat,
            rc_mat,
            pc_terminal: DMatrix::zeros(n, n),
            pi0: DMatrix::identity(n, n),
            qw_mat: DMatrix::identity(l, l),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::param("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        let checks = [
            ("Qc", &self.qc_mat, true),
            ("Rc", &self.rc_mat, true),
            ("Pc_terminal", &self.pc_terminal, false),
            ("Pi0", &self.pi0, true),
            ("Qw", &self.qw_mat, true),
        ];
        for (name, m, strict) in checks {
            if !m.is_square() {
                return Err(Error::Dimension(format!("{name} is {:?}", m.shape())));
            }
            let min = linalg::min_sym_eig(m);
            let ok = if strict { min > 0.0 } else { min >= -1e-12 * (1.0 + m.abs().max()) };
            if !ok {
                return Err(Error::param(name, format!("smallest eigenvalue {min:e} violates definiteness")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HinfRiccati {
    pub p_mat: DMatrix<f64>,
    pub iterations: usize,
}

/// Stationary H∞ Riccati solution with existence checks at every step.
///
/// At each step `Qc + G2ᵀPG2 ≻ 0` and the disturbance Schur complement
/// `G1ᵀPG1 − γ²Qw − G1ᵀPG2(Qc + G2ᵀPG2)⁻¹G2ᵀPG1 ≺ 0` must hold; at the fixed
/// point `P ≺ γ²Π₀⁻¹` is required as well.
pub fn hinf_riccati(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    cfg: &HinfConfig,
    max_iter: usize,
    tol: f64,
) -> Result<HinfRiccati> {
    cfg.validate()?;
    let (n, m) = (model.n(), model.m());
    let g1 = &unc.h_vec;
    let g2 = &model.g_mat;
    let l = g1.ncols();
    if g1.nrows() != n || cfg.rc_mat.nrows() != n || cfg.qc_mat.nrows() != m || cfg.qw_mat.nrows() != l {
        return Err(Error::Dimension(format!(
            "model n={n} m={m}, G1 {:?}, Rc {:?}, Qc {:?}, Qw {:?}",
            g1.shape(),
            cfg.rc_mat.shape(),
            cfg.qc_mat.shape(),
            cfg.qw_mat.shape()
        )));
    }
    let f = &model.f_mat;
    let gs = linalg::hstack(&[g2, g1]);
    let g2sq = cfg.gamma * cfg.gamma;
    let w_weight = &cfg.qw_mat * g2sq;
    let infeasible = |step: usize, eigenvalue: f64| Error::GammaInfeasible {
        gamma: cfg.gamma,
        step,
        eigenvalue,
    };

    let mut p = cfg.pc_terminal.clone();
    for step in 1..=max_iter {
        let pg2 = &p * g2;
        let pg1 = &p * g1;
        let ru = &cfg.qc_mat + g2.transpose() * &pg2;
        let ru_min = linalg::min_sym_eig(&ru);
        if !(ru_min > 0.0) {
            return Err(infeasible(step, ru_min));
        }
        let cross = g2.transpose() * &pg1;
        let ru_cross = linalg::lu_solve(&ru, &cross).ok_or_else(|| infeasible(step, ru_min))?;
        let sw = g1.transpose() * &pg1 - &w_weight - cross.transpose() * ru_cross;
        let sw_max = linalg::max_sym_eig(&sw);
        if !(sw_max < 0.0) {
            return Err(infeasible(step, sw_max));
        }

        let mut re = gs.transpose() * &p * &gs;
        {
            let mut uu = re.view_mut((0, 0), (m, m));
            uu += &cfg.qc_mat;
        }
        {
            let mut ww = re.view_mut((m, m), (l, l));
            ww -= &w_weight;
        }
        let gpf = gs.transpose() * &p * f;
        let sol = linalg::lu_solve(&re, &gpf).ok_or(Error::Singular("H∞ inner matrix"))?;
        let p_new = linalg::symmetrize(&(&cfg.rc_mat + f.transpose() * &p * f - gpf.transpose() * sol));

        let norm = p_new.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence {
                what: "H∞ Riccati recursion",
                iteration: step,
                norm,
            });
        }
        let change = (&p_new - &p).norm() / (1.0 + p.norm());
        p = p_new;
        if change < tol {
            let pi0_inv = cfg.pi0.clone().try_inverse().ok_or(Error::Singular("Π₀"))?;
            let margin = linalg::max_sym_eig(&(&p - pi0_inv * g2sq));
            if !(margin < 0.0) {
                return Err(infeasible(step, margin));
            }
            return Ok(HinfRiccati {
                p_mat: p,
                iterations: step,
            });
        }
    }
    Err(Error::NotConverged {
        what: "H∞ Riccati recursion",
        iterations: max_iter,
    })
}

/// Feedback `u = K x + K_z z` with `z` the previous control.
#[derive(Debug, Clone, PartialEq)]
pub struct HinfGain {
    /// `−(Qc + G2ᵀPG2)⁻¹G2ᵀPF`
    pub k: DMatrix<f64>,
    /// `(Qc + G2ᵀPG2)⁻¹G2ᵀPG2`
    pub kz: DMatrix<f64>,
}

pub fn hinf_gain(model: &DiscreteModel, cfg: &HinfConfig, p_mat: &DMatrix<f64>) -> Result<HinfGain> {
    let g2 = &model.g_mat;
    let g2t_p = g2.transpose() * p_mat;
    let rg = &cfg.qc_mat + &g2t_p * g2;
    let lu = rg.lu();
    let k = -lu
        .solve(&(&g2t_p * &model.f_mat))
        .ok_or(Error::Singular("Qc + G2ᵀPG2"))?;
    let kz = lu.solve(&(&g2t_p * g2)).ok_or(Error::Singular("Qc + G2ᵀPG2"))?;
    Ok(HinfGain { k, kz })
}

pub fn is_feasible(model: &DiscreteModel, unc: &UncertaintyModel, cfg: &HinfConfig) -> bool {
    hinf_riccati(model, unc, cfg, DEFAULT_MAX_ITER, DEFAULT_TOL).is_ok()
}

/// Smallest feasible γ in `[lo, hi]` by bisection to relative width `tol`.
///
/// Geometric midpoints are used while the bracket spans more than a factor of two.
pub fn gamma_feasibility_search(
    model: &DiscreteModel,
    unc: &UncertaintyModel,
    cfg_base: &HinfConfig,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(lo > 0.0 && hi >= lo && tol > 0.0) {
        return Err(Error::param("gamma bracket", format!("need 0 < lo <= hi and tol > 0, got [{lo}, {hi}], tol {tol}")));
    }
    hinf_riccati(model, unc, &cfg_base.with_gamma(hi), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let (mut lo, mut hi) = (lo, hi);
    if is_feasible(model, unc, &cfg_base.with_gamma(lo)) {
        return Ok(lo);
    }
    while hi - lo > tol * hi {
        let mid = if hi / lo > 2.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if is_feasible(model, unc, &cfg_base.with_gamma(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_setup(f: f64, g2: f64, g1: f64) -> (DiscreteModel, UncertaintyModel) {
        let model = DiscreteModel::new(s(f), s(g2), 1.0).unwrap();
        let unc = UncertaintyModel::new(s(g1), s(0.0), s(0.0)).unwrap();
        (model, unc)
    }

    #[test]
    fn zero_cost_to_go_gives_zero_gain() {
        let (model, _) = scalar_setup(0.9, 1.0, 0.5);
        let cfg = HinfConfig::new(2.0, s(1.0), s(1.0), 1).unwrap();
        let g = hinf_gain(&model, &cfg, &s(0.0)).unwrap();
        assert_eq!(g.k[(0, 0)], 0.0);
        assert_eq!(g.kz[(0, 0)], 0.0);
    }

    #[test]
    fn low_gamma_is_infeasible() {
        let (model, unc) = scalar_setup(0.9, 1.0, 0.5);
        let cfg = HinfConfig::new(0.1, s(1.0), s(1.0), 1).unwrap();
        let err = hinf_riccati(&model, &unc, &cfg, 1000, 1e-12).unwrap_err();
        assert!(matches!(err, Error::GammaInfeasible { .. }));
        assert!(err.to_string().contains("infeasible at step"));
    }

    #[test]
    fn degenerate_bracket_returns_hi() {
        let (model, unc) = scalar_setup(0.9, 1.0, 0.5);
        let cfg = HinfConfig::new(5.0, s(1.0), s(1.0), 1).unwrap();
        assert_eq!(gamma_feasibility_search(&model, &unc, &cfg, 5.0, 5.0, 1e-6).unwrap(), 5.0);
    }

    #[test]
    fn infeasible_upper_end_rejected() {
        let (model, unc) = scalar_setup(0.9, 1.0, 0.5);
        let cfg = HinfConfig::new(1.0, s(1.0), s(1.0), 1).unwrap();
        assert!(gamma_feasibility_search(&model, &unc, &cfg, 0.01, 0.05, 1e-6).is_err());
    }
}
