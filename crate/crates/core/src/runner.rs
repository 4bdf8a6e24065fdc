//! Synthesis at the design payload, simulation against the true payload.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{GammaSetting, RunConfig, CASE_PAYLOAD_FACTORS};
use crate::discretize::DiscreteModel;
use crate::error::Result;
use crate::hinf::{self, HinfConfig};
use crate::rlqr::{self, RlqrWeights};
use crate::simulator::{self, Metrics, Reference, SimResult};
use crate::uncertainty::UncertaintyModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Rlqr,
    Hinf,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Rlqr => "rlqr",
            ControllerKind::Hinf => "hinf",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A synthesized steering law.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub kind: ControllerKind,
    pub k: DMatrix<f64>,
    /// Previous-input correction, H∞ only.
    pub kz: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub case_id: u8,
    pub controller: ControllerKind,
    pub payload_true: f64,
    pub payload_design: f64,
    pub converged: bool,
    pub gamma: Option<f64>,
    pub sim: SimResult,
}

impl CaseOutcome {
    pub fn metrics(&self) -> &Metrics {
        &self.sim.metrics
    }
}

/// Shared pieces of a run: design model, uncertainty, reference.
pub struct Pipeline {
    pub config: RunConfig,
    pub design: DiscreteModel,
    pub uncertainty: UncertaintyModel,
    pub reference: Reference,
}

fn hinf_base(config: &RunConfig, unc: &UncertaintyModel, gamma: f64) -> Result<HinfConfig> {
    HinfConfig::new(gamma, config.controller.r_mat(), config.controller.q_mat(), unc.l())
}

impl Pipeline {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let ts = config.scenario.ts;
        let design = DiscreteModel::from_vehicle(&config.vehicle, ts)?;
        let uncertainty = config.uncertainty_model()?;
        let scn = config.scenario_for_case(1)?;
        let reference = simulator::generate_reference(&scn, &design)?;
        Ok(Self {
            config: config.clone(),
            design,
            uncertainty,
            reference,
        })
    }

    pub fn synthesize_rlqr(&self) -> Result<Controller> {
        let c = &self.config.controller;
        let n = self.design.n();
        let w = RlqrWeights::new(c.q_mat(), c.r_mat(), DMatrix::zeros(n, n), c.mu)?.with_lambda_rule(c.lambda_rule);
        let sol = rlqr::rlqr_synthesize(&self.design, &self.uncertainty, &w, c.max_iter, c.tol)?;
        Ok(Controller {
            kind: ControllerKind::Rlqr,
            k: sol.k_gain,
            kz: None,
            converged: sol.converged,
            iterations: sol.iterations,
            gamma: None,
        })
    }

    /// γ from the config, or the lowest level feasible for every case payload.
    pub fn hinf_gamma(&self) -> Result<f64> {
        match self.config.controller.gamma {
            GammaSetting::Fixed(g) => Ok(g),
            GammaSetting::Keyword(_) => self.auto_gamma(),
        }
    }

    fn auto_gamma(&self) -> Result<f64> {
        let c = &self.config.controller;
        let base = hinf_base(&self.config, &self.uncertainty, 1.0)?;
        let mut gamma: f64 = 0.0;
        for (_, factor) in CASE_PAYLOAD_FACTORS {
            let params = self.config.vehicle.with_payload(factor * self.config.vehicle.payload);
            let model = DiscreteModel::from_vehicle(&params, self.config.scenario.ts)?;
            let g = hinf::gamma_feasibility_search(&model, &self.uncertainty, &base, 1.0, 1e8, c.gamma_search_tol)?;
            gamma = gamma.max(g);
        }
        Ok(gamma)
    }

    pub fn synthesize_hinf(&self) -> Result<Controller> {
        let c = &self.config.controller;
        let gamma = self.hinf_gamma()?;
        let cfg = hinf_base(&self.config, &self.uncertainty, gamma)?;
        let ric = hinf::hinf_riccati(&self.design, &self.uncertainty, &cfg, c.hinf_max_iter, c.hinf_tol)?;
        let gain = hinf::hinf_gain(&self.design, &cfg, &ric.p_mat)?;
        Ok(Controller {
            kind: ControllerKind::Hinf,
            k: gain.k,
            kz: Some(gain.kz),
            converged: true,
            iterations: ric.iterations,
            gamma: Some(gamma),
        })
    }

    pub fn synthesize(&self, kind: ControllerKind) -> Result<Controller> {
        match kind {
            ControllerKind::Rlqr => self.synthesize_rlqr(),
            ControllerKind::Hinf => self.synthesize_hinf(),
        }
    }

    pub fn simulate(&self, case_id: u8, controller: &Controller) -> Result<CaseOutcome> {
        let scn = self.config.scenario_for_case(case_id)?;
        let plant = DiscreteModel::from_vehicle(&self.config.vehicle.with_payload(scn.payload_true), scn.ts)?;
        let sim = simulator::simulate_closed_loop(&plant, &controller.k, controller.kz.as_ref(), &scn, &self.reference)?;
        Ok(CaseOutcome {
            case_id,
            controller: controller.kind,
            payload_true: scn.payload_true,
            payload_design: scn.payload_design,
            converged: controller.converged,
            gamma: controller.gamma,
            sim,
        })
    }
}

/// Full pipeline for one case and one controller.
pub fn run_case(case_id: u8, kind: ControllerKind, config: &RunConfig) -> Result<CaseOutcome> {
    let pipeline = Pipeline::new(config)?;
    let controller = pipeline.synthesize(kind)?;
    pipeline.simulate(case_id, &controller)
}

/// All requested cases for all requested controllers, case runs in parallel.
///
/// Results come back ordered by controller, then case.
pub fn run_batch(config: &RunConfig, cases: &[u8], kinds: &[ControllerKind]) -> Result<Vec<CaseOutcome>> {
    let pipeline = Pipeline::new(config)?;
    let controllers: Vec<Controller> = std::thread::scope(|s| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|&kind| {
                let p = &pipeline;
                s.spawn(move || p.synthesize(kind))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("synthesis thread panicked"))
            .collect::<Result<_>>()
    })?;
    std::thread::scope(|s| {
        let handles: Vec<_> = controllers
            .iter()
            .flat_map(|c| cases.iter().map(move |&case| (c, case)))
            .map(|(c, case)| {
                let p = &pipeline;
                s.spawn(move || p.simulate(case, c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}
