//! Bilinear (Tustin) discretization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::vehicle::{continuous_standard_form, VehicleParams};

/// `x_{i+1} = F x_i + G u_i` at sampling period `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub f_mat: DMatrix<f64>,
    pub g_mat: DMatrix<f64>,
    pub ts: f64,
}

impl DiscreteModel {
    pub fn new(f_mat: DMatrix<f64>, g_mat: DMatrix<f64>, ts: f64) -> Result<Self> {
        if !f_mat.is_square() || g_mat.nrows() != f_mat.nrows() {
            return Err(Error::Dimension(format!(
                "F is {:?}, G is {:?}",
                f_mat.shape(),
                g_mat.shape()
            )));
        }
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::param("ts", format!("must be > 0, got {ts}")));
        }
        Ok(Self { f_mat, g_mat, ts })
    }

    pub fn n(&self) -> usize {
        self.f_mat.nrows()
    }

    pub fn m(&self) -> usize {
        self.g_mat.ncols()
    }

    /// Vehicle model at `params.payload`, discretized at `ts`.
    pub fn from_vehicle(params: &VehicleParams, ts: f64) -> Result<Self> {
        let (ac, bc) = continuous_standard_form(params)?;
        tustin(&ac, &bc, ts)
    }
}

/// `F = (I − ts/2·Ac)⁻¹(I + ts/2·Ac)`, `G = (I − ts/2·Ac)⁻¹·Bc·ts`.
pub fn tustin(ac: &DMatrix<f64>, bc: &DMatrix<f64>, ts: f64) -> Result<DiscreteModel> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::param("ts", format!("must be > 0, got {ts}")));
    }
    let n = ac.nrows();
    if !ac.is_square() || bc.nrows() != n {
        return Err(Error::Dimension(format!(
            "Ac is {:?}, Bc is {:?}",
            ac.shape(),
            bc.shape()
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let half = ac * (ts / 2.0);
    let lu = (&eye - &half).lu();
    let singular = || Error::SingularTustin { ts };
    let f_mat = lu.solve(&(&eye + &half)).ok_or_else(singular)?;
    let g_mat = lu.solve(&(bc * ts)).ok_or_else(singular)?;
    if f_mat.iter().chain(g_mat.iter()).any(|v| !v.is_finite()) {
        return Err(singular());
    }
    DiscreteModel::new(f_mat, g_mat, ts)
}
