//! Fast oracle checks run by `--seed-check`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::discretize::{tustin, DiscreteModel};
use crate::hinf::{self, HinfConfig};
use crate::linalg;
use crate::rlqr::{rlqr_synthesize, RlqrWeights};
use crate::robust_ls::{solve_robust_rls, RlsProblem, RobustRlsProblem};
use crate::simulator::l2_norm;
use crate::uncertainty::{check_rank_condition, UncertaintyModel};
use crate::vehicle::{compute_axle_loads, VehicleParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: crate::Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Plain value iteration on the discrete Riccati equation, returning the regulator gain.
pub fn dare_gain(f: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut p = DMatrix::zeros(f.nrows(), f.nrows());
    for _ in 0..200_000 {
        let gtp = g.transpose() * &p;
        let s = r + &gtp * g;
        let kx = s.lu().solve(&(&gtp * f))?;
        let next = q + f.transpose() * &p * f - (f.transpose() * &p * g) * &kx;
        let next = linalg::symmetrize(&next);
        let change = (&next - &p).norm() / (1.0 + next.norm());
        p = next;
        if change < 1e-14 {
            let gtp = g.transpose() * &p;
            return Some(-(r + &gtp * g).lu().solve(&(gtp * f))?);
        }
    }
    None
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn stiffness() -> crate::Result<(bool, String)> {
    let loads = compute_axle_loads(&VehicleParams::default())?;
    let expected = [345_155.0, 927_126.0, 1_158_008.0];
    let got = [loads.c1, loads.c2, loads.c3];
    let worst = got
        .iter()
        .zip(expected)
        .map(|(g, e)| (g - e).abs() / e)
        .fold(0.0, f64::max);
    Ok((worst < 0.05, format!("c = {got:.0?} N/rad, worst relative deviation {worst:.2e}")))
}

fn golden_ratio() -> crate::Result<(bool, String)> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let model = DiscreteModel::new(one.clone(), one.clone(), 1.0)?;
    let w = RlqrWeights::new(one.clone(), one.clone(), DMatrix::zeros(1, 1), f64::INFINITY)?;
    let sol = rlqr_synthesize(&model, &UncertaintyModel::none(1, 1), &w, 10_000, 1e-14)?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let err = (sol.p_cost[(0, 0)] - phi).abs();
    Ok((err < 1e-9, format!("P = {:.12}, golden ratio {phi:.12}", sol.p_cost[(0, 0)])))
}

fn scalar_bilinear() -> crate::Result<(bool, String)> {
    let (a, ts) = (-3.0, 0.1);
    let d = tustin(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, 1.0), ts)?;
    let expected = (1.0 + a * ts / 2.0) / (1.0 - a * ts / 2.0);
    let err = (d.f_mat[(0, 0)] - expected).abs();
    Ok((err < 1e-14, format!("f = {:.15}, expected {expected:.15}", d.f_mat[(0, 0)])))
}

fn lqr_reduction(cfg: &RunConfig) -> crate::Result<(bool, String)> {
    let model = DiscreteModel::from_vehicle(&cfg.vehicle, cfg.scenario.ts)?;
    let (q, r) = (cfg.controller.q_mat(), cfg.controller.r_mat());
    let w = RlqrWeights::new(q.clone(), r.clone(), DMatrix::zeros(6, 6), f64::INFINITY)?;
    let sol = rlqr_synthesize(&model, &UncertaintyModel::none(6, 1), &w, 200_000, 1e-13)?;
    let oracle = dare_gain(&model.f_mat, &model.g_mat, &q, &r).ok_or(crate::Error::Singular("oracle"))?;
    let err = rel_err(&sol.k_gain, &oracle);
    Ok((err < 1e-6, format!("relative gain error {err:.2e}")))
}

fn robust_ls_grid() -> crate::Result<(bool, String)> {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    let base = RlsProblem::new(s(1.0), s(1.5), s(1.2), s(0.8))?;
    let p = RobustRlsProblem::new(base, s(0.6), s(0.4), s(-0.3))?;
    let sol = solve_robust_rls(&p)?;
    // The residual is affine in Δ, so the worst case sits at Δ = ±1.
    let worst = |x: f64| {
        [-1.0, 1.0]
            .iter()
            .map(|d| x * x + 1.5 * ((1.2 + 0.6 * d * 0.4) * x - (0.8 + 0.6 * d * -0.3)).powi(2))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (x_grid, j_grid) = (0..=40_000)
        .map(|i| -2.0 + 4.0 * i as f64 / 40_000.0)
        .map(|x| (x, worst(x)))
        .fold((0.0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    let dx = (sol.x_star[(0, 0)] - x_grid).abs();
    let dj = (sol.j_star - j_grid).abs();
    Ok((dx < 1e-3 && dj < 1e-3, format!("x* = {:.6} (grid {x_grid:.6}), J* = {:.6} (grid {j_grid:.6})", sol.x_star[(0, 0)], sol.j_star)))
}

fn hinf_lqr_limit(cfg: &RunConfig) -> crate::Result<(bool, String)> {
    let model = DiscreteModel::from_vehicle(&cfg.vehicle, cfg.scenario.ts)?;
    let (q, r) = (cfg.controller.q_mat(), cfg.controller.r_mat());
    let unc = cfg.uncertainty_model()?;
    let hc = HinfConfig::new(1e12, r.clone(), q.clone(), unc.l())?;
    let ric = hinf::hinf_riccati(&model, &unc, &hc, hinf::DEFAULT_MAX_ITER, 1e-13)?;
    let gain = hinf::hinf_gain(&model, &hc, &ric.p_mat)?;
    let oracle = dare_gain(&model.f_mat, &model.g_mat, &q, &r).ok_or(crate::Error::Singular("oracle"))?;
    let err = rel_err(&gain.k, &oracle);
    Ok((err < 1e-6, format!("γ = 1e12, relative gain error {err:.2e}")))
}

fn sine_metric() -> crate::Result<(bool, String)> {
    let ts = 0.01;
    let v = l2_norm((0..100).map(|i| (2.0 * PI * i as f64 * ts).sin()), ts);
    let rel = (v - 0.5f64.sqrt()).abs() / 0.5f64.sqrt();
    Ok((rel < 0.01, format!("L2 = {v:.6}, relative deviation {rel:.2e}")))
}

fn rank_condition(cfg: &RunConfig) -> crate::Result<(bool, String)> {
    let unc = cfg.uncertainty_model()?;
    let ok = check_rank_condition(&unc);
    Ok((ok, format!("[E_F E_G] has full row rank: {ok}")))
}

pub fn run_all(cfg: &RunConfig) -> Vec<Check> {
    vec![
        check("cornering stiffness", stiffness()),
        check("scalar Riccati fixed point", golden_ratio()),
        check("scalar bilinear map", scalar_bilinear()),
        check("LQR reduction", lqr_reduction(cfg)),
        check("robust LS grid", robust_ls_grid()),
        check("H∞ large-γ limit", hinf_lqr_limit(cfg)),
        check("sin² metric", sine_metric()),
        check("uncertainty rank condition", rank_condition(cfg)),
    ]
}
