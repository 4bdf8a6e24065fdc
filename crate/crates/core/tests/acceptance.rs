//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use steering_core::config::{RunConfig, CASE_PAYLOAD_FACTORS};
use steering_core::discretize::{tustin, DiscreteModel};
use steering_core::hinf::{self, HinfConfig};
use steering_core::linalg;
use steering_core::rlqr::{riccati_consistency, rlqr_synthesize, RlqrWeights};
use steering_core::robust_ls::{robust_rls_array_form, solve_robust_rls, RlsProblem, RobustRlsProblem};
use steering_core::runner::{run_batch, run_case, ControllerKind};
use steering_core::simulator::{compute_metrics, Metrics, Reference, SimResult};
use steering_core::uncertainty::{check_rank_condition, UncertaintyModel};
use steering_core::vehicle::{compute_axle_loads, idx, VehicleParams};

type Outcome = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed <= budget, || format!("took {elapsed:.2?}, budget {budget:.0?}"))
}

fn stiffness() -> Outcome {
    let start = Instant::now();
    let loads = compute_axle_loads(&VehicleParams::default()).map_err(|e| e.to_string())?;
    let got = [loads.c1, loads.c2, loads.c3];
    let expected = [345_155.0, 927_126.0, 1_158_008.0];
    within_budget(start.elapsed(), Duration::from_secs(1))?;
    let mut worst: f64 = 0.0;
    for (g, e) in got.iter().zip(expected) {
        let rel = (g - e).abs() / e;
        worst = worst.max(rel);
        ensure(rel < 0.05, || format!("stiffness {g:.0} vs {e:.0}"))?;
    }
    Ok(format!("c = {got:.0?} N/rad, worst deviation {:.3}%", 100.0 * worst))
}

fn lqr_reduction() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let model = DiscreteModel::from_vehicle(&cfg.vehicle, cfg.scenario.ts).map_err(|e| e.to_string())?;
    let (q, r) = (cfg.controller.q_mat(), cfg.controller.r_mat());
    let mut systems = vec![(model.f_mat.clone(), model.g_mat.clone(), q, r)];
    let mut rng = rng(2024);
    for _ in 0..50 {
        let (f, g) = random_controllable(&mut rng);
        let (n, m) = (f.nrows(), g.ncols());
        let q = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0)));
        let r = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.5..3.0)));
        systems.push((f, g, q, r));
    }
    let mut worst: f64 = 0.0;
    for (i, (f, g, q, r)) in systems.into_iter().enumerate() {
        let (_, k_oracle) = dare(&f, &g, &q, &r);
        let (n, m) = (f.nrows(), g.ncols());
        let model = DiscreteModel::new(f, g, 0.01).map_err(|e| e.to_string())?;
        let w = RlqrWeights::new(q, r, DMatrix::zeros(n, n), f64::INFINITY).map_err(|e| e.to_string())?;
        let sol = rlqr_synthesize(&model, &UncertaintyModel::none(n, m), &w, 1_000_000, 1e-14).map_err(|e| e.to_string())?;
        let err = rel_err(&sol.k_gain, &k_oracle);
        worst = worst.max(err);
        ensure(err < 1e-6, || format!("system {i}: relative gain error {err:e}"))?;
    }
    within_budget(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("vehicle + 50 random systems, worst relative gain error {worst:.1e}, {:.2?}", start.elapsed()))
}

fn grid_min_max_1d(c: &[f64; 7]) -> (f64, f64) {
    let [q, w, a, b, h, ea, eb] = *c;
    let deltas = grid(-1.0, 1.0, 2001);
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=60_000 {
        let x = -3.0 + i as f64 * 1e-4;
        let worst = deltas
            .iter()
            .map(|d| {
                let r = (a + h * d * ea) * x - (b + h * d * eb);
                q * x * x + w * r * r
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < best.1 {
            best = (x, worst);
        }
    }
    best
}

fn robust_ls() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(31);
    let mut worst_grid: f64 = 0.0;
    let mut done = 0;
    while done < 20 {
        let mut c = [0.0; 7];
        for (i, v) in c.iter_mut().enumerate() {
            *v = match i {
                0 | 1 => rng.random_range(0.5..2.0),
                2..=4 => rng.random_range(-1.5..1.5),
                _ => rng.random_range(-0.7..0.7),
            };
        }
        let (x_grid, j_grid) = grid_min_max_1d(&c);
        if x_grid.abs() > 2.99 {
            continue;
        }
        let s = scalar;
        let base = RlsProblem::new(s(c[0]), s(c[1]), s(c[2]), s(c[3])).map_err(|e| e.to_string())?;
        let p = RobustRlsProblem::new(base, s(c[4]), s(c[5]), s(c[6])).map_err(|e| e.to_string())?;
        let sol = solve_robust_rls(&p).map_err(|e| e.to_string())?;
        let gap = (sol.j_star - j_grid).abs();
        worst_grid = worst_grid.max(gap);
        ensure(gap < 1e-3, || format!("instance {c:?}: J* {} vs grid {j_grid}", sol.j_star))?;
        done += 1;
    }

    let mut worst_cross: f64 = 0.0;
    for i in 0..100 {
        let m = rng.random_range(1..=4);
        let rows = rng.random_range(1..=5);
        let l = rng.random_range(1..=3);
        let spd = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let a = uniform(rng, n, n, -1.0, 1.0);
            &a * a.transpose() + DMatrix::identity(n, n) * 0.5
        };
        let (q, w) = (spd(&mut rng, m), spd(&mut rng, rows));
        let base = RlsProblem::new(q, w, uniform(&mut rng, rows, m, -1.5, 1.5), uniform(&mut rng, rows, 1, -1.5, 1.5)).map_err(|e| e.to_string())?;
        let p = RobustRlsProblem::new(base, uniform(&mut rng, rows, l, -1.0, 1.0), uniform(&mut rng, l, m, -0.7, 0.7), uniform(&mut rng, l, 1, -0.7, 0.7)).map_err(|e| e.to_string())?;
        let sol = solve_robust_rls(&p).map_err(|e| e.to_string())?;
        let (x, j) = robust_rls_array_form(&p, sol.lambda_hat).map_err(|e| e.to_string())?;
        let ex = rel_err(&x, &sol.x_star);
        let ej = (j - sol.j_star).abs() / sol.j_star.abs().max(f64::MIN_POSITIVE);
        worst_cross = worst_cross.max(ex).max(ej);
        ensure(ex < 1e-8 && ej < 1e-8, || format!("instance {i}: x error {ex:e}, J error {ej:e}"))?;
    }
    within_budget(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "20 grid instances, worst |J* − J_grid| {worst_grid:.1e}; 100 cross-form instances, worst relative gap {worst_cross:.1e}; {:.2?}",
        start.elapsed()
    ))
}

fn min_max_gain() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(77);
    let deltas = grid(-1.0, 1.0, 21);
    let offsets = grid(-0.05, 0.05, 2001);
    let step = offsets[1] - offsets[0];
    let mut checked = 0;
    let mut worst_cells: f64 = 0.0;
    while checked < 8 {
        let f = uniform(&mut rng, 2, 2, -0.6, 0.6) + DMatrix::identity(2, 2) * 0.5;
        let g = uniform(&mut rng, 2, 1, -1.0, 1.0);
        let h = uniform(&mut rng, 2, 1, -0.5, 0.5);
        let ef = uniform(&mut rng, 1, 2, -0.3, 0.3);
        let eg = uniform(&mut rng, 1, 1, -0.3, 0.3);
        if !controllable(&f, &g) {
            continue;
        }
        let model = DiscreteModel::new(f.clone(), g.clone(), 0.1).map_err(|e| e.to_string())?;
        let unc = UncertaintyModel::new(h.clone(), ef.clone(), eg.clone()).map_err(|e| e.to_string())?;
        for mu in [1e4, 1e6, 1e8] {
            let w = RlqrWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), DMatrix::zeros(2, 2), mu).map_err(|e| e.to_string())?;
            let sol = rlqr_synthesize(&model, &unc, &w, 100_000, 1e-13).map_err(|e| e.to_string())?;
            let (gv, hv, efv) = (g.column(0).into_owned(), h.column(0).into_owned(), ef.row(0).transpose());
            for j in 0..2 {
                let x = DVector::from_fn(2, |i, _| if i == j { 1.0 } else { 0.0 });
                let u0 = (&sol.k_gain * &x)[0];
                let cost = |u: f64| worst_case_step_cost(&sol.p_cost, mu, &f, &gv, &hv, &efv, eg[(0, 0)], &x, u, &deltas) + u * u;
                let costs: Vec<f64> = offsets.iter().map(|d| cost(u0 + d)).collect();
                let i_best = (0..costs.len()).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap();
                let best = costs[i_best];
                // One grid cell of cost variation around the grid optimum.
                let cell = [i_best.saturating_sub(1), (i_best + 1).min(costs.len() - 1)]
                    .iter()
                    .map(|&i| costs[i] - best)
                    .fold(0.0, f64::max);
                let excess = cost(u0) - best;
                ensure(i_best > 0 && i_best < costs.len() - 1, || format!("μ = {mu:e}: grid optimum at the edge of the search window"))?;
                ensure((offsets[i_best]).abs() <= step * (1.0 + 1e-9) && excess <= cell, || {
                    format!("μ = {mu:e}, x = e{}: K·x = {u0:.6}, grid optimum {:.6}, cost excess {excess:e} > cell {cell:e}", j + 1, u0 + offsets[i_best])
                })?;
                worst_cells = worst_cells.max(if cell > 0.0 { excess.max(0.0) / cell } else { 0.0 });
            }
        }
        checked += 1;
    }
    within_budget(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "8 instances × μ ∈ {{1e4, 1e6, 1e8}}: K·x within one grid step (grid step 5e-5 over a ±0.05 window) of the worst-case optimum, worst excess {:.2} cells; {:.2?}",
        worst_cells,
        start.elapsed()
    ))
}

fn riccati_positivity() -> Outcome {
    let cfg = RunConfig::default();
    let unc = cfg.uncertainty_model().map_err(|e| e.to_string())?;
    let c = &cfg.controller;
    let mut worst: f64 = 0.0;
    for (case, factor) in CASE_PAYLOAD_FACTORS {
        let params = cfg.vehicle.with_payload(factor * cfg.vehicle.payload);
        let model = DiscreteModel::from_vehicle(&params, cfg.scenario.ts).map_err(|e| e.to_string())?;
        let w = RlqrWeights::new(c.q_mat(), c.r_mat(), DMatrix::zeros(6, 6), c.mu).map_err(|e| e.to_string())?;
        let sol = rlqr_synthesize(&model, &unc, &w, c.max_iter, c.tol).map_err(|e| e.to_string())?;
        ensure(sol.converged, || format!("case {case}: not converged"))?;
        let p = &sol.p_cost;
        let asym = (p - p.transpose()).abs().max();
        let min_eig = linalg::min_sym_eig(p);
        let resid = riccati_consistency(&model, &unc, &w, &sol);
        ensure(asym <= 1e-9 * p.norm(), || format!("case {case}: asymmetry {asym:e}"))?;
        ensure(min_eig >= -1e-9 * p.norm(), || format!("case {case}: smallest eigenvalue {min_eig:e}"))?;
        ensure(resid < 1e-6, || format!("case {case}: consistency residual {resid:e}"))?;
        worst = worst.max(resid);
    }
    Ok(format!("designs at all four payloads, worst consistency residual {worst:.1e}"))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn penalty_limit() -> Outcome {
    let cfg = RunConfig::default();
    let unc = cfg.uncertainty_model().map_err(|e| e.to_string())?;
    ensure(check_rank_condition(&unc), || "rank condition fails".into())?;
    let model = DiscreteModel::from_vehicle(&cfg.vehicle, cfg.scenario.ts).map_err(|e| e.to_string())?;
    let c = &cfg.controller;
    let mut norms = Vec::new();
    for mu in [1e6, 1e8, 1e10, 1e12] {
        let w = RlqrWeights::new(c.q_mat(), c.r_mat(), DMatrix::zeros(6, 6), mu).map_err(|e| e.to_string())?;
        let sol = rlqr_synthesize(&model, &unc, &w, c.max_iter, c.tol).map_err(|e| e.to_string())?;
        norms.push((&unc.ef_vec + &unc.eg_vec * &sol.k_gain).norm());
    }
    ensure(norms.windows(2).all(|w| w[1] <= w[0]), || format!("‖E_F + E_G K‖ = {}", sci(&norms)))?;
    Ok(format!("rank condition holds; ‖E_F + E_G K(μ)‖ = {}", sci(&norms)))
}

fn regulation() -> Outcome {
    let cfg = RunConfig::default();
    let x0 = [0.0, 0.0, 0.0, 0.0, 0.3, -0.1];
    ensure(cfg.scenario.x0 == x0, || format!("default x0 is {:?}", cfg.scenario.x0))?;
    let mut parts = Vec::new();
    for kind in [ControllerKind::Rlqr, ControllerKind::Hinf] {
        let start = Instant::now();
        let o = run_case(1, kind, &cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let rho_end = o.sim.states.last().unwrap()[idx::RHO];
        let t_end = *o.sim.t.last().unwrap();
        ensure((t_end - 30.0).abs() < 1e-9, || format!("{kind}: run ends at {t_end}"))?;
        ensure(rho_end.abs() < 0.05, || format!("{kind}: |ρ(30 s)| = {rho_end:e}"))?;
        within_budget(elapsed, Duration::from_secs(5))?;
        parts.push(format!("{kind} |ρ(30 s)| = {:.1e} m in {elapsed:.2?}", rho_end.abs()));
    }
    Ok(parts.join(", "))
}

fn spread(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    (hi - lo) / lo
}

fn steering_comparison() -> Outcome {
    let cfg = RunConfig::default();
    let outcomes = run_batch(&cfg, &[1, 2, 3, 4], &[ControllerKind::Rlqr, ControllerKind::Hinf]).map_err(|e| e.to_string())?;
    let rate = |kind: ControllerKind| -> Vec<f64> {
        outcomes
            .iter()
            .filter(|o| o.controller == kind)
            .map(|o| o.metrics().max_steer_rate)
            .collect()
    };
    let (r, h) = (rate(ControllerKind::Rlqr), rate(ControllerKind::Hinf));
    for (i, (a, b)) in r.iter().zip(&h).enumerate() {
        ensure(a < b, || format!("case {}: RLQR {a:.4} rad/s ≥ H∞ {b:.4} rad/s", i + 1))?;
    }
    let (sr, sh) = (spread(&r), spread(&h));
    ensure(sr < sh, || format!("spread RLQR {sr:.3} ≥ H∞ {sh:.3}"))?;
    Ok(format!("max steering rate RLQR {r:.4?} rad/s vs H∞ {h:.3?} rad/s; spread {sr:.3} vs {sh:.3}"))
}

fn hinf_limit_and_gamma() -> Outcome {
    let cfg = RunConfig::default();
    let model = DiscreteModel::from_vehicle(&cfg.vehicle, cfg.scenario.ts).map_err(|e| e.to_string())?;
    let unc = cfg.uncertainty_model().map_err(|e| e.to_string())?;
    let (q, r) = (cfg.controller.q_mat(), cfg.controller.r_mat());
    let (_, k_lqr) = dare(&model.f_mat, &model.g_mat, &q, &r);
    let hc = HinfConfig::new(1e12, r.clone(), q.clone(), unc.l()).map_err(|e| e.to_string())?;
    let p = hinf::hinf_riccati(&model, &unc, &hc, 1_000_000, 1e-14).map_err(|e| e.to_string())?.p_mat;
    let k = hinf::hinf_gain(&model, &hc, &p).map_err(|e| e.to_string())?.k;
    let err = rel_err(&k, &k_lqr);
    ensure(err < 1e-6, || format!("γ = 1e12 gain differs from LQR by {err:e}"))?;
    let gamma_min = hinf::gamma_feasibility_search(&model, &unc, &hc, 1.0, 1e8, 1e-6).map_err(|e| e.to_string())?;
    ensure(hinf::is_feasible(&model, &unc, &hc.with_gamma(gamma_min)), || "γ_min infeasible".into())?;
    ensure(!hinf::is_feasible(&model, &unc, &hc.with_gamma(gamma_min * (1.0 - 1e-4))), || "γ_min not minimal".into())?;
    ensure((1e4..1e5).contains(&gamma_min), || format!("γ_min = {gamma_min:.1} outside 10⁴ order"))?;
    Ok(format!(
        "γ = 1e12 gain error {err:.1e}; nominal γ_min = {gamma_min:.1} (reference level 14350, ratio {:.2})",
        gamma_min / 14350.0
    ))
}

fn discretization() -> Outcome {
    let mut rng = rng(404);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.random_range(1..=6);
        let eig: Vec<f64> = (0..n).map(|_| -rng.random_range(0.05..50.0)).collect();
        let v = loop {
            let v = uniform(&mut rng, n, n, -1.0, 1.0);
            if linalg::condition_number(&v) < 1e3 {
                break v;
            }
        };
        let ac = &v * DMatrix::from_diagonal(&DVector::from_vec(eig.clone())) * v.clone().try_inverse().unwrap();
        let ts = rng.random_range(0.001..0.05);
        let d = tustin(&ac, &uniform(&mut rng, n, 1, -1.0, 1.0), ts).map_err(|e| e.to_string())?;
        let mut mapped: Vec<f64> = eig.iter().map(|l| (1.0 + l * ts / 2.0) / (1.0 - l * ts / 2.0)).collect();
        mapped.sort_by(f64::total_cmp);
        let ev = d.f_mat.clone().complex_eigenvalues();
        let mut got: Vec<f64> = ev.iter().map(|z| z.re).collect();
        got.sort_by(f64::total_cmp);
        let dev = got
            .iter()
            .zip(&mapped)
            .map(|(a, b)| (a - b).abs())
            .chain(ev.iter().map(|z| z.im.abs()))
            .fold(0.0, f64::max);
        worst = worst.max(dev);
        ensure(dev < 1e-9, || format!("system {i}: eigenvalue deviation {dev:e}"))?;
    }

    let ts = 0.01;
    let t: Vec<f64> = (0..100).map(|i| i as f64 * ts).collect();
    let states: Vec<DVector<f64>> = t
        .iter()
        .map(|&ti| {
            let mut s = DVector::zeros(6);
            s[idx::RHO] = (2.0 * PI * ti).sin();
            s
        })
        .collect();
    let zeros = vec![DVector::zeros(6); t.len()];
    let sim = SimResult {
        ts,
        t: t.clone(),
        states,
        controls: vec![0.0; t.len()],
        reference: Reference {
            t: t.clone(),
            x: zeros,
            u: vec![0.0; t.len()],
        },
        x_global: vec![0.0; t.len()],
        y_global: vec![0.0; t.len()],
        metrics: Metrics {
            l2_rho: 0.0,
            l2_theta: 0.0,
            max_steer_rate: 0.0,
            max_abs_steer: 0.0,
        },
    };
    let l2 = compute_metrics(&sim).l2_rho;
    let rel = (l2 - 0.5f64.sqrt()).abs() / 0.5f64.sqrt();
    ensure(rel < 0.01, || format!("sin² metric {l2} off by {rel:e}"))?;
    Ok(format!("worst eigenvalue deviation {worst:.1e} over 100 systems; sin² L2 = {l2:.6} ({:.2e} relative)", rel))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "cornering stiffness", stiffness),
        (2, "LQR reduction", lqr_reduction),
        (3, "robust least squares oracles", robust_ls),
        (4, "min-max gain optimality", min_max_gain),
        (5, "Riccati positivity and consistency", riccati_positivity),
        (6, "penalty limit", penalty_limit),
        (7, "closed-loop regulation", regulation),
        (8, "steering-rate comparison across cases", steering_comparison),
        (9, "H∞ LQR limit and γ feasibility", hinf_limit_and_gamma),
        (10, "discretization and metrics", discretization),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS criterion {id}: {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id}: {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
