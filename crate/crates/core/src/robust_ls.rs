//! Regularized least squares and its min-max robust counterpart.
//!
//! Right-hand sides may have several columns; costs are then summed over
//! columns (trace of the matrix-valued cost).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, PINV_RTOL};

/// `min_x ‖x‖²_Q + ‖Ax − b‖²_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsProblem {
    pub q_mat: DMatrix<f64>,
    pub w_mat: DMatrix<f64>,
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
}

fn check_pd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{name} is {:?}", m.shape())));
    }
    if (m - m.transpose()).abs().max() > 1e-10 * (1.0 + m.abs().max()) {
        return Err(Error::param(name, "must be symmetric"));
    }
    let min = linalg::min_sym_eig(m);
    if !(min > 0.0) {
        return Err(Error::param(name, format!("must be positive definite (smallest eigenvalue {min:e})")));
    }
    Ok(())
}

impl RlsProblem {
    pub fn new(q_mat: DMatrix<f64>, w_mat: DMatrix<f64>, a_mat: DMatrix<f64>, b_mat: DMatrix<f64>) -> Result<Self> {
        check_pd("Q", &q_mat)?;
        check_pd("W", &w_mat)?;
        if a_mat.shape() != (w_mat.nrows(), q_mat.nrows()) || b_mat.nrows() != w_mat.nrows() {
            return Err(Error::Dimension(format!(
                "Q {:?}, W {:?}, A {:?}, b {:?}",
                q_mat.shape(),
                w_mat.shape(),
                a_mat.shape(),
                b_mat.shape()
            )));
        }
        Ok(Self {
            q_mat,
            w_mat,
            a_mat,
            b_mat,
        })
    }

    /// `‖x‖²_Q + ‖Ax − b‖²_W`.
    pub fn cost(&self, x: &DMatrix<f64>) -> f64 {
        let r = &self.a_mat * x - &self.b_mat;
        (x.transpose() * &self.q_mat * x).trace() + (r.transpose() * &self.w_mat * &r).trace()
    }
}

/// `min_x max_{‖Δ‖≤1} ‖x‖²_Q + ‖(A + HΔE_A)x − (b + HΔE_b)‖²_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustRlsProblem {
    pub base: RlsProblem,
    pub h_mat: DMatrix<f64>,
    pub ea_mat: DMatrix<f64>,
    pub eb_mat: DMatrix<f64>,
}

impl RobustRlsProblem {
    pub fn new(base: RlsProblem, h_mat: DMatrix<f64>, ea_mat: DMatrix<f64>, eb_mat: DMatrix<f64>) -> Result<Self> {
        let (p, m, k) = (base.w_mat.nrows(), base.q_mat.nrows(), base.b_mat.ncols());
        let l = h_mat.ncols();
        if h_mat.nrows() != p || ea_mat.shape() != (l, m) || eb_mat.shape() != (l, k) {
            return Err(Error::Dimension(format!(
                "H {:?}, E_A {:?}, E_b {:?} against A {:?}, b {:?}",
                h_mat.shape(),
                ea_mat.shape(),
                eb_mat.shape(),
                base.a_mat.shape(),
                base.b_mat.shape()
            )));
        }
        Ok(Self {
            base,
            h_mat,
            ea_mat,
            eb_mat,
        })
    }

    /// `‖HᵀWH‖`, the lower end of the admissible multipliers.
    pub fn lambda_floor(&self) -> f64 {
        let hwh = self.h_mat.transpose() * &self.base.w_mat * &self.h_mat;
        linalg::spectral_norm(&hwh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    pub x_star: DMatrix<f64>,
    pub lambda_hat: f64,
    pub j_star: f64,
    /// The search stopped at its upper cap while Γ was still decreasing.
    pub at_cap: bool,
}

pub fn solve_rls(p: &RlsProblem) -> Result<DMatrix<f64>> {
    let awt = p.a_mat.transpose() * &p.w_mat;
    let normal = &p.q_mat + &awt * &p.a_mat;
    let rhs = awt * &p.b_mat;
    linalg::lu_solve(&normal, &rhs).ok_or(Error::Singular("normal matrix Q + AᵀWA"))
}

/// `W(λ) = W + WH(λI − HᵀWH)†HᵀW`.
pub fn robust_weight(w: &DMatrix<f64>, h: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let wh = w * h;
    let l = h.ncols();
    let inner = DMatrix::identity(l, l) * lambda - h.transpose() * &wh;
    w + &wh * linalg::pinv(&inner, PINV_RTOL) * wh.transpose()
}

/// Minimizer `x(λ)` and value `Γ(λ)` of the λ-parametrized problem.
pub fn gamma_of_lambda(p: &RobustRlsProblem, lambda: f64) -> Result<(DMatrix<f64>, f64)> {
    let base = &p.base;
    let wl = robust_weight(&base.w_mat, &p.h_mat, lambda);
    let at_w = base.a_mat.transpose() * &wl;
    let lhs = &base.q_mat + p.ea_mat.transpose() * &p.ea_mat * lambda + &at_w * &base.a_mat;
    let rhs = &at_w * &base.b_mat + p.ea_mat.transpose() * &p.eb_mat * lambda;
    let x = linalg::lu_solve(&lhs, &rhs).ok_or(Error::Singular("Q(λ) + AᵀW(λ)A"))?;
    let e = &p.ea_mat * &x - &p.eb_mat;
    let r = &base.a_mat * &x - &base.b_mat;
    let gamma = (x.transpose() * &base.q_mat * &x).trace()
        + lambda * e.norm_squared()
        + (r.transpose() * &wl * &r).trace();
    Ok((x, gamma))
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const LAMBDA_RTOL: f64 = 1e-10;
const FLOOR_OFFSET: f64 = 1e-6;

/// Multiplier search on `λ > floor`; returns `(λ̂, Γ(λ̂), at_cap)`.
///
/// Bracketing starts at `floor·(1 + 1e-6)` and doubles the distance to the
/// floor until Γ increases; golden-section refinement follows.
pub(crate) fn minimize_over_lambda(
    floor: f64,
    mut objective: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64, bool)> {
    let offset0 = floor * FLOOR_OFFSET + if floor == 0.0 { 1e-12 } else { 0.0 };
    // Past this point Q + λE_AᵀE_A is too ill-conditioned for the closed form to keep 1e-8 accuracy.
    // Relative to the floor so that scaling Q and W together scales the search with them.
    let cap = 1e6 * if floor > 0.0 { floor } else { 1.0 };
    let mut eval = |lambda: f64| -> Result<f64> {
        let v = objective(lambda)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::UnboundedGamma { lo: floor, hi: lambda })
        }
    };

    let mut prev = (floor + offset0, eval(floor + offset0)?);
    let mut lower = prev.0;
    let mut offset = offset0;
    let upper = loop {
        offset *= 2.0;
        let lambda = floor + offset;
        if offset > cap {
            return Ok((prev.0, prev.1, true));
        }
        let value = eval(lambda)?;
        if value > prev.1 {
            break lambda;
        }
        lower = prev.0;
        prev = (lambda, value);
    };

    let (mut a, mut b) = (lower, upper);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a) > LAMBDA_RTOL * b.abs() {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = eval(d)?;
        }
    }
    let (lambda, value) = if fc <= fd { (c, fc) } else { (d, fd) };
    if value <= prev.1 {
        Ok((lambda, value, false))
    } else {
        Ok((prev.0, prev.1, false))
    }
}

pub fn solve_robust_rls(p: &RobustRlsProblem) -> Result<RobustSolution> {
    let floor = p.lambda_floor();
    if floor == 0.0 {
        // H = 0: the perturbation is void and the multiplier plays no role.
        let x_star = solve_rls(&p.base)?;
        let j_star = p.base.cost(&x_star);
        return Ok(RobustSolution {
            x_star,
            lambda_hat: 0.0,
            j_star,
            at_cap: false,
        });
    }
    let (lambda_hat, _, at_cap) = minimize_over_lambda(floor, |l| gamma_of_lambda(p, l).map(|(_, g)| g))?;
    let (x_star, j_star) = gamma_of_lambda(p, lambda_hat)?;
    Ok(RobustSolution {
        x_star,
        lambda_hat,
        j_star,
        at_cap,
    })
}

/// Same solution through the augmented block system
///
/// ```text
/// [ Q⁻¹  0     0     I   ] [y1]   [ 0  ]
/// [ 0    Ŵ⁻¹   0     A   ] [y2] = [ b  ]
/// [ 0    0     λ⁻¹I  E_A ] [y3]   [ E_b]
/// [ I    Aᵀ    E_Aᵀ  0   ] [y4]   [ 0  ]
/// ```
///
/// with `x* = y4` and `J* = tr(bᵀy2 + E_bᵀy3)`. The third row is dropped for λ = 0.
pub fn robust_rls_array_form(p: &RobustRlsProblem, lambda_hat: f64) -> Result<(DMatrix<f64>, f64)> {
    let base = &p.base;
    let (m, rows, l, k) = (base.q_mat.nrows(), base.w_mat.nrows(), p.h_mat.ncols(), base.b_mat.ncols());
    if !(lambda_hat >= 0.0) {
        return Err(Error::param("lambda_hat", "must be >= 0"));
    }
    let with_e = lambda_hat > 0.0;
    let q_inv = base
        .q_mat
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("Q"))?;
    // W(λ)⁻¹ = W⁻¹ − HHᵀ/λ, formed directly since W(λ) itself blows up near the floor.
    let mut w_inv = base.w_mat.clone().try_inverse().ok_or(Error::Singular("W"))?;
    if with_e {
        w_inv -= &p.h_mat * p.h_mat.transpose() / lambda_hat;
    }

    let sizes = if with_e { vec![m, rows, l, m] } else { vec![m, rows, 0, m] };
    let mut blk = linalg::BlockMatrix::new(&sizes);
    let eye_m = DMatrix::identity(m, m);
    blk.set(0, 0, &q_inv);
    blk.set(0, 3, &eye_m);
    blk.set(1, 1, &w_inv);
    blk.set(1, 3, &base.a_mat);
    blk.set(3, 0, &eye_m);
    blk.set(3, 1, &base.a_mat.transpose());
    if with_e {
        blk.set(2, 2, &(DMatrix::identity(l, l) / lambda_hat));
        blk.set(2, 3, &p.ea_mat);
        blk.set(3, 2, &p.ea_mat.transpose());
    }
    let mut rhs = DMatrix::zeros(blk.dim(), k);
    let (r1, _) = blk.range(1);
    rhs.view_mut((r1, 0), (rows, k)).copy_from(&base.b_mat);
    if with_e {
        let (r2, _) = blk.range(2);
        rhs.view_mut((r2, 0), (l, k)).copy_from(&p.eb_mat);
    }
    let sol = linalg::lu_solve(&blk.mat, &rhs).ok_or(Error::Singular("array-form block matrix"))?;
    let x_star = blk.rows_of(&sol, 3);
    let mut j = base.b_mat.transpose() * blk.rows_of(&sol, 1);
    if with_e {
        j += p.eb_mat.transpose() * blk.rows_of(&sol, 2);
    }
    Ok((x_star, j.trace()))
}
