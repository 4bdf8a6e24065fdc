//! TOML run configuration.
//!
//! Every field is optional; omitted fields take the default setup. Unknown
//! keys are rejected. See `config/default.toml` at the repository root for the
//! full schema with defaults.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rlqr::LambdaRule;
use crate::simulator::{Geometry, Scenario};
use crate::uncertainty::{self, UncertaintyModel};
use crate::vehicle::{VehicleParams, STATE_DIM};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub vehicle: VehicleParams,
    pub controller: ControllerConfig,
    pub uncertainty: UncertaintyConfig,
    pub scenario: ScenarioConfig,
    pub cases: Vec<u8>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            vehicle: VehicleParams::default(),
            controller: ControllerConfig::default(),
            uncertainty: UncertaintyConfig::default(),
            scenario: ScenarioConfig::default(),
            cases: vec![1, 2, 3, 4],
            output_dir: None,
        }
    }
}

/// `gamma = "auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Fixed(f64),
    Keyword(GammaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaKeyword {
    /// Lowest level feasible for the models of all four payload cases.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub q_diag: Vec<f64>,
    pub r: f64,
    /// `inf` selects the limit form.
    pub mu: f64,
    pub lambda_rule: LambdaRule,
    pub max_iter: usize,
    pub tol: f64,
    pub gamma: GammaSetting,
    pub gamma_search_tol: f64,
    pub hinf_max_iter: usize,
    pub hinf_tol: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            q_diag: vec![1.0, 1.0, 1.0, 1.0, 25000.0, 100.0],
            r: 67070.0,
            mu: 1e8,
            lambda_rule: LambdaRule::Margin,
            max_iter: 100_000,
            tol: 1e-9,
            gamma: GammaSetting::Keyword(GammaKeyword::Auto),
            gamma_search_tol: 1e-4,
            hinf_max_iter: crate::hinf::DEFAULT_MAX_ITER,
            hinf_tol: crate::hinf::DEFAULT_TOL,
        }
    }
}

impl ControllerConfig {
    pub fn q_mat(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.q_diag))
    }

    pub fn r_mat(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintySource {
    /// `h`, `ef` and `eg` as given.
    #[default]
    Tabulated,
    /// Built from the payload variation matrix.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintyConfig {
    pub source: UncertaintySource,
    pub h: Vec<f64>,
    pub ef: Vec<f64>,
    pub eg: Vec<f64>,
    /// Defaults to 0.
    pub payload_min: Option<f64>,
    /// Defaults to twice the vehicle payload.
    pub payload_max: Option<f64>,
    /// 1-based row of the variation matrix.
    pub row: usize,
    pub ef_scale: Vec<f64>,
    pub eg_scale: Vec<f64>,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            source: UncertaintySource::Tabulated,
            h: vec![1.0; STATE_DIM],
            ef: uncertainty::TABULATED_EF.to_vec(),
            eg: uncertainty::TABULATED_EG.to_vec(),
            payload_min: None,
            payload_max: None,
            row: uncertainty::DEFAULT_ROW,
            ef_scale: uncertainty::DEFAULT_EF_SCALE.to_vec(),
            eg_scale: uncertainty::DEFAULT_EG_SCALE.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub x0: Vec<f64>,
    pub duration: f64,
    pub ts: f64,
    pub steering_limit: f64,
    pub lane_offset: f64,
    pub straight: f64,
    pub transition: f64,
    pub hold: f64,
    pub return_transition: f64,
    pub feedforward: bool,
    /// Overrides the per-case plant payload for every selected case.
    pub payload_true: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::default();
        let g = s.geometry;
        Self {
            x0: s.x0.iter().copied().collect(),
            duration: s.duration,
            ts: s.ts,
            steering_limit: s.steering_limit,
            lane_offset: s.lane_offset,
            straight: g.straight,
            transition: g.transition,
            hold: g.hold,
            return_transition: g.return_transition,
            feedforward: s.feedforward,
            payload_true: None,
        }
    }
}

/// Payload factors of the four evaluation cases, relative to the design payload.
pub const CASE_PAYLOAD_FACTORS: [(u8, f64); 4] = [(1, 1.0), (2, 2.34), (3, 2.37), (4, 0.0)];

pub fn case_factor(case_id: u8) -> Result<f64> {
    CASE_PAYLOAD_FACTORS
        .iter()
        .find(|(c, _)| *c == case_id)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::field("cases", format!("unknown case {case_id}, expected 1..=4")))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::field(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.vehicle.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::field(&format!("vehicle.{name}"), reason),
            other => other,
        })?;

        let c = &self.controller;
        if c.q_diag.len() != STATE_DIM || c.q_diag.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::field("controller.q_diag", format!("needs {STATE_DIM} positive entries")));
        }
        positive("controller.r", c.r)?;
        if !(c.mu > 0.0) {
            return Err(Error::field("controller.mu", "must be > 0 (inf allowed)"));
        }
        positive("controller.tol", c.tol)?;
        positive("controller.hinf_tol", c.hinf_tol)?;
        positive("controller.gamma_search_tol", c.gamma_search_tol)?;
        if c.max_iter == 0 {
            return Err(Error::field("controller.max_iter", "must be >= 1"));
        }
        if c.hinf_max_iter == 0 {
            return Err(Error::field("controller.hinf_max_iter", "must be >= 1"));
        }
        if let GammaSetting::Fixed(g) = c.gamma {
            positive("controller.gamma", g)?;
        }

        let u = &self.uncertainty;
        match u.source {
            UncertaintySource::Tabulated => {
                for (field, values, len) in [
                    ("uncertainty.h", &u.h, STATE_DIM),
                    ("uncertainty.ef", &u.ef, STATE_DIM),
                    ("uncertainty.eg", &u.eg, 1),
                ] {
                    if values.len() != len || values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::field(field, format!("needs {len} finite entries")));
                    }
                }
            }
            UncertaintySource::Derived => {
                if u.ef_scale.len() != STATE_DIM || u.ef_scale.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::field("uncertainty.ef_scale", format!("needs {STATE_DIM} positive entries")));
                }
                if u.eg_scale.len() != 1 || !(u.eg_scale[0] > 0.0) {
                    return Err(Error::field("uncertainty.eg_scale", "needs 1 positive entry"));
                }
                if u.row == 0 || u.row > STATE_DIM {
                    return Err(Error::field("uncertainty.row", format!("must be in 1..={STATE_DIM}")));
                }
                for (field, v) in [("uncertainty.payload_min", u.payload_min), ("uncertainty.payload_max", u.payload_max)] {
                    if let Some(v) = v {
                        if !(v.is_finite() && v >= 0.0) {
                            return Err(Error::field(field, "must be >= 0"));
                        }
                    }
                }
            }
        }

        let s = &self.scenario;
        if s.x0.len() != STATE_DIM || s.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::field("scenario.x0", format!("needs {STATE_DIM} finite entries")));
        }
        positive("scenario.duration", s.duration)?;
        positive("scenario.ts", s.ts)?;
        positive("scenario.steering_limit", s.steering_limit)?;
        if !s.lane_offset.is_finite() {
            return Err(Error::field("scenario.lane_offset", "must be finite"));
        }
        for (field, v) in [("scenario.straight", s.straight), ("scenario.hold", s.hold)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::field(field, "must be >= 0"));
            }
        }
        positive("scenario.transition", s.transition)?;
        positive("scenario.return_transition", s.return_transition)?;
        if let Some(p) = s.payload_true {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::field("scenario.payload_true", "must be >= 0"));
            }
        }

        if self.cases.is_empty() {
            return Err(Error::field("cases", "must list at least one case"));
        }
        for &c in &self.cases {
            case_factor(c)?;
        }
        Ok(())
    }

    /// Scenario for one case; the design payload is the vehicle payload.
    pub fn scenario_for_case(&self, case_id: u8) -> Result<Scenario> {
        let factor = case_factor(case_id)?;
        let s = &self.scenario;
        let design = self.vehicle.payload;
        Ok(Scenario {
            x0: DVector::from_column_slice(&s.x0),
            duration: s.duration,
            ts: s.ts,
            payload_true: s.payload_true.unwrap_or(factor * design),
            payload_design: design,
            steering_limit: s.steering_limit,
            lane_offset: s.lane_offset,
            geometry: Geometry {
                straight: s.straight,
                transition: s.transition,
                hold: s.hold,
                return_transition: s.return_transition,
            },
            v: self.vehicle.v,
            feedforward: s.feedforward,
        })
    }

    /// Uncertainty model used by both syntheses.
    pub fn uncertainty_model(&self) -> Result<UncertaintyModel> {
        let u = &self.uncertainty;
        match u.source {
            UncertaintySource::Tabulated => UncertaintyModel::from_slices(&u.h, &u.ef, &u.eg),
            UncertaintySource::Derived => {
                let lo = u.payload_min.unwrap_or(0.0);
                let hi = u.payload_max.unwrap_or(2.0 * self.vehicle.payload);
                let gamma_f = uncertainty::payload_variation_matrix(&self.vehicle, lo, hi, self.scenario.ts)?;
                uncertainty::build_uncertainty(&gamma_f, u.row, &u.ef_scale, &u.eg_scale)
            }
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::field(field, format!("must be finite and > 0, got {v}")))
    }
}

/// Parse and validate a TOML document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
