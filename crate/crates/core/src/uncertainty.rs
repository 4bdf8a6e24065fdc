//! Structured payload uncertainty `[δF δG] = H Δ [E_F E_G]` with `‖Δ‖ ≤ 1`.

use nalgebra::DMatrix;

use crate::discretize::DiscreteModel;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::vehicle::VehicleParams;

/// Tabulated state factor for the tractor-semitrailer model.
pub const TABULATED_EF: [f64; 6] = [
    6.8572e-5,
    -8.6201e-5,
    -2.1440e-5,
    -10.4924e-5,
    0.0,
    -666.66667e-5,
];
/// Tabulated input factor for the tractor-semitrailer model.
pub const TABULATED_EG: [f64; 1] = [-666.66667e-5];

pub const DEFAULT_EF_SCALE: [f64; 6] = [1.0, 1.0, 1.0, 1.0, 1.0, 0.1];
pub const DEFAULT_EG_SCALE: [f64; 1] = [0.1];
/// Lateral-offset row, the one most affected by the payload.
pub const DEFAULT_ROW: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    /// n×l
    pub h_vec: DMatrix<f64>,
    /// l×n
    pub ef_vec: DMatrix<f64>,
    /// l×m
    pub eg_vec: DMatrix<f64>,
    pub delta_bound: f64,
}

impl UncertaintyModel {
    pub fn new(h_vec: DMatrix<f64>, ef_vec: DMatrix<f64>, eg_vec: DMatrix<f64>) -> Result<Self> {
        let l = h_vec.ncols();
        if ef_vec.nrows() != l || eg_vec.nrows() != l || ef_vec.ncols() != h_vec.nrows() {
            return Err(Error::Dimension(format!(
                "H {:?}, E_F {:?}, E_G {:?}",
                h_vec.shape(),
                ef_vec.shape(),
                eg_vec.shape()
            )));
        }
        if h_vec.iter().chain(ef_vec.iter()).chain(eg_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("uncertainty", "entries must be finite"));
        }
        Ok(Self {
            h_vec,
            ef_vec,
            eg_vec,
            delta_bound: 1.0,
        })
    }

    /// No uncertainty: a zero column for `H` and zero factors.
    pub fn none(n: usize, m: usize) -> Self {
        Self {
            h_vec: DMatrix::zeros(n, 1),
            ef_vec: DMatrix::zeros(1, n),
            eg_vec: DMatrix::zeros(1, m),
            delta_bound: 1.0,
        }
    }

    /// `H = 1` with the tabulated factors.
    pub fn tabulated() -> Self {
        Self::from_slices(&[1.0; 6], &TABULATED_EF, &TABULATED_EG).expect("consistent shapes")
    }

    /// Single uncertainty direction from plain slices.
    pub fn from_slices(h: &[f64], ef: &[f64], eg: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(h.len(), 1, h),
            DMatrix::from_row_slice(1, ef.len(), ef),
            DMatrix::from_row_slice(1, eg.len(), eg),
        )
    }

    pub fn n(&self) -> usize {
        self.h_vec.nrows()
    }

    pub fn m(&self) -> usize {
        self.eg_vec.ncols()
    }

    pub fn l(&self) -> usize {
        self.h_vec.ncols()
    }

    /// True when the perturbation `H Δ [E_F E_G]` vanishes for every Δ.
    pub fn is_inactive(&self) -> bool {
        self.h_vec.iter().all(|&v| v == 0.0)
            || self.ef_vec.iter().chain(self.eg_vec.iter()).all(|&v| v == 0.0)
    }

    /// `(F + HΔE_F, G + HΔE_G)` for a given contraction.
    pub fn perturb(&self, model: &DiscreteModel, delta: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let hd = &self.h_vec * delta;
        (&model.f_mat + &hd * &self.ef_vec, &model.g_mat + &hd * &self.eg_vec)
    }
}

/// `ΓF = F(payload_min) − F(payload_max)`, each from the full model pipeline.
pub fn payload_variation_matrix(
    params: &VehicleParams,
    payload_min: f64,
    payload_max: f64,
    ts: f64,
) -> Result<DMatrix<f64>> {
    let lo = DiscreteModel::from_vehicle(&params.with_payload(payload_min), ts)?;
    let hi = DiscreteModel::from_vehicle(&params.with_payload(payload_max), ts)?;
    Ok(lo.f_mat - hi.f_mat)
}

/// Uncertainty factors from one row of the payload variation matrix.
///
/// `row_index` is 1-based. `E_F` is the scaled row; `E_G` scales the row entry of
/// largest magnitude, keeping its sign.
pub fn build_uncertainty(
    gamma_f: &DMatrix<f64>,
    row_index: usize,
    ef_scale: &[f64],
    eg_scale: &[f64],
) -> Result<UncertaintyModel> {
    let n = gamma_f.nrows();
    if !gamma_f.is_square() {
        return Err(Error::Dimension(format!("ΓF is {:?}", gamma_f.shape())));
    }
    if row_index == 0 || row_index > n {
        return Err(Error::param("row", format!("must be in 1..={n}, got {row_index}")));
    }
    if ef_scale.len() != n {
        return Err(Error::Dimension(format!("ef_scale has {} entries, expected {n}", ef_scale.len())));
    }
    if eg_scale.is_empty() {
        return Err(Error::Dimension("eg_scale is empty".into()));
    }
    for (name, scales) in [("ef_scale", ef_scale), ("eg_scale", eg_scale)] {
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::param(name, "entries must be > 0"));
        }
    }
    let row = gamma_f.row(row_index - 1);
    if row.iter().all(|v| v.abs() < 1e-15) {
        return Err(Error::ZeroUncertaintyRow { row: row_index });
    }
    let dominant = row
        .iter()
        .copied()
        .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    let ef: Vec<f64> = row.iter().zip(ef_scale).map(|(v, s)| v * s).collect();
    let eg: Vec<f64> = eg_scale.iter().map(|s| s * dominant).collect();
    UncertaintyModel::from_slices(&vec![1.0; n], &ef, &eg)
}

/// `rank([E_F E_G]) == rank(E_G)`, the existence condition for the robust regulator.
pub fn check_rank_condition(u: &UncertaintyModel) -> bool {
    let joint = linalg::hstack(&[&u.ef_vec, &u.eg_vec]);
    linalg::rank(&joint, RANK_RTOL) == linalg::rank(&u.eg_vec, RANK_RTOL)
}
