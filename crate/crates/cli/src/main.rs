use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use steering_core::config::{load_config, RunConfig};
use steering_core::report;
use steering_core::runner::{run_batch, ControllerKind};
use steering_core::selfcheck;

/// Lane-change simulations of a tractor-semitrailer under robust LQR and H∞ steering.
#[derive(Debug, Parser)]
#[command(name = "steersim", version)]
struct Args {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Load case: 1 nominal payload, 2 and 3 overloaded, 4 empty trailer.
    #[arg(long, value_parser = ["1", "2", "3", "4", "all"])]
    case: Option<String>,

    #[arg(long, value_enum, default_value_t = ControllerArg::Both)]
    controller: ControllerArg,

    /// Output directory. Falls back to the config's `output_dir`, then `out`.
    #[arg(long, env = "STEERSIM_OUT_DIR")]
    out: Option<PathBuf>,

    /// Run the built-in oracle checks instead of a simulation.
    #[arg(long)]
    seed_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    Rlqr,
    Hinf,
    Both,
}

impl ControllerArg {
    fn kinds(self) -> Vec<ControllerKind> {
        match self {
            ControllerArg::Rlqr => vec![ControllerKind::Rlqr],
            ControllerArg::Hinf => vec![ControllerKind::Hinf],
            ControllerArg::Both => vec![ControllerKind::Rlqr, ControllerKind::Hinf],
        }
    }
}

fn seed_check(cfg: &RunConfig) -> bool {
    let checks = selfcheck::run_all(cfg);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn run(args: Args) -> anyhow::Result<bool> {
    let cfg = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if args.seed_check {
        return Ok(seed_check(&cfg));
    }
    let cases: Vec<u8> = match args.case.as_deref() {
        None => cfg.cases.clone(),
        Some("all") => vec![1, 2, 3, 4],
        Some(c) => vec![c.parse()?],
    };
    if cases.is_empty() {
        bail!("no cases selected");
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let outcomes = run_batch(&cfg, &cases, &args.controller.kinds())?;
    let lane_width = cfg.scenario.lane_offset;
    let runs = outcomes
        .iter()
        .map(|o| report::render_run(o, cfg.vehicle.v, lane_width))
        .collect::<Result<Vec<_>, _>>()?;
    report::write_runs(&out, &runs).with_context(|| format!("writing results to {}", out.display()))?;

    print!("{}", report::comparison_table(&outcomes));
    println!("results in {}", out.display());
    Ok(true)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
