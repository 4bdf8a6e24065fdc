//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Stationary discrete Riccati solution by value iteration, with the
/// regulator gain `K = −(R + GᵀPG)⁻¹GᵀPF` (so `u = Kx`).
pub fn dare(f: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut p = q.clone();
    for _ in 0..2_000_000 {
        let gtpg = r + g.transpose() * &p * g;
        let gtpf = g.transpose() * &p * f;
        let inv = gtpg.clone().try_inverse().expect("R + GᵀPG invertible");
        let next = q + f.transpose() * &p * f - gtpf.transpose() * &inv * &gtpf;
        let next = (&next + next.transpose()) * 0.5;
        let done = (&next - &p).norm() <= 1e-15 * next.norm();
        p = next;
        if done {
            break;
        }
    }
    let inv = (r + g.transpose() * &p * g).try_inverse().unwrap();
    let k = -inv * g.transpose() * &p * f;
    (p, k)
}

pub fn controllable(f: &DMatrix<f64>, g: &DMatrix<f64>) -> bool {
    let n = f.nrows();
    let mut blocks = Vec::new();
    let mut cur = g.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = f * cur;
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut c = DMatrix::zeros(n, cols);
    let mut at = 0;
    for b in &blocks {
        c.view_mut((0, at), (n, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    let sv = c.singular_values();
    let max = sv.max();
    sv.iter().filter(|s| **s > 1e-9 * max).count() == n
}

/// Random controllable pair with state dimension in `1..=6`, possibly open-loop unstable.
pub fn random_controllable(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=n.min(3));
        let f = uniform(rng, n, n, -1.0, 1.0) * (1.2 / (n as f64).sqrt());
        let g = uniform(rng, n, m, -1.0, 1.0);
        if controllable(&f, &g) {
            return (f, g);
        }
    }
}

/// Worst case over `deltas` of the one-step penalized cost
/// `‖x'‖²_P + μ‖x' − (F + hδe_F)x − (G + hδe_G)u‖²` after minimizing over `x'`,
/// for scalar input and scalar uncertainty.
///
/// The maximum over `|δ| ≤ 1` of the penalty is
/// `μ(‖d‖² + s²‖h‖² + 2|s||hᵀd|)` with `d = x' − Fx − Gu` and `s = e_F x + e_G u`,
/// so the minimizer lies on one of the two smooth branches or on the kink `hᵀd = 0`.
/// Each candidate is then scored on the `δ` grid.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_step_cost(
    p: &DMatrix<f64>,
    mu: f64,
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    h: &DVector<f64>,
    ef: &DVector<f64>,
    eg: f64,
    x: &DVector<f64>,
    u: f64,
    deltas: &[f64],
) -> f64 {
    let n = x.len();
    let c = f * x + g * u;
    let s = ef.dot(x) + eg * u;
    let a = p + DMatrix::identity(n, n) * mu;
    let mut cands: Vec<DVector<f64>> = Vec::new();
    for sg in [1.0, -1.0] {
        let rhs = &c * mu - h * (mu * s.abs() * sg);
        let xn = a.clone().lu().solve(&rhs).unwrap();
        if sg * h.dot(&(&xn - &c)) >= -1e-14 {
            cands.push(xn);
        }
    }
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    kkt.view_mut((0, 0), (n, n)).copy_from(&a);
    for i in 0..n {
        kkt[(i, n)] = h[i];
        kkt[(n, i)] = h[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&(&c * mu));
    rhs[n] = h.dot(&c);
    let sol = kkt.lu().solve(&rhs).unwrap();
    cands.push(sol.rows(0, n).into_owned());

    cands
        .iter()
        .map(|xn| {
            deltas
                .iter()
                .map(|d| {
                    let pred = &c + h * (d * s);
                    (xn.transpose() * p * xn)[(0, 0)] + mu * (xn - pred).norm_squared()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Dense value iteration for the scalar game
/// `V(x) = min_u max_w x²r + u²q_c − γ²w² + V(f x + g2 u + g1 w)`
/// with quadratic `V = p x²`, both players restricted to grids.
#[allow(clippy::too_many_arguments)]
pub fn scalar_game_value(f: f64, g2: f64, g1: f64, r: f64, qc: f64, gamma: f64, u_grid: &[f64], w_grid: &[f64]) -> f64 {
    let mut p = 0.0;
    for _ in 0..500 {
        let stage = |u: f64, w: f64| r + qc * u * u - gamma * gamma * w * w + p * (f + g2 * u + g1 * w).powi(2);
        let next = u_grid
            .iter()
            .map(|&u| w_grid.iter().map(|&w| stage(u, w)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        let done = (next - p).abs() < 1e-12;
        p = next;
        if done {
            break;
        }
    }
    p
}

pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}
