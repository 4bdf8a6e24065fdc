//! Robust recursive LQR and H∞ steering control for an articulated heavy
//! vehicle, with a double lane-change simulator.
// Checks like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod discretize;
pub mod error;
pub mod hinf;
pub mod linalg;
pub mod report;
pub mod rlqr;
pub mod robust_ls;
pub mod runner;
pub mod selfcheck;
pub mod simulator;
pub mod uncertainty;
pub mod vehicle;

pub use error::{Error, Result};
