//! Result files: states CSV, metrics JSON, SVG plots and the comparison table.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{CaseOutcome, ControllerKind};
use crate::simulator::{self, SimResult};
use crate::vehicle::{idx, STATE_DIM};

pub const CSV_COLUMNS: [&str; 10] = [
    "t", "ydot1", "psidot1", "phidot", "phi", "rho", "theta", "alpha", "x_global", "y_global",
];

/// Final `|ρ − ρ_ref|` and `|θ − θ_ref|` must both fall below this for a run to count as tracking.
pub const TRACKING_TOL: f64 = 0.05;

pub type StatesRow = [f64; 10];

pub fn states_rows(r: &SimResult) -> Vec<StatesRow> {
    (0..r.states.len())
        .map(|i| {
            let s = &r.states[i];
            let mut row = [0.0; 10];
            row[0] = r.t[i];
            for j in 0..STATE_DIM {
                row[1 + j] = s[j];
            }
            row[7] = r.controls[i];
            row[8] = r.x_global[i];
            row[9] = r.y_global[i];
            row
        })
        .collect()
}

/// 17 significant digits, enough to recover every `f64` exactly.
pub fn write_states_csv<W: Write>(out: W, r: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv {
        line: 0,
        reason: e.to_string(),
    };
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for row in states_rows(r) {
        w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_states_csv(text: &str) -> Result<Vec<StatesRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line() as usize);
    let header = rd.headers().map_err(|e| Error::Csv {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Csv {
            line: 1,
            reason: format!("expected header {}", CSV_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Csv {
            line: line_of(&e),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut row = [0.0; 10];
        for (j, field) in rec.iter().enumerate() {
            row[j] = field.trim().parse().map_err(|_| Error::Csv {
                line,
                reason: format!("column `{}`: cannot parse {field:?}", CSV_COLUMNS[j]),
            })?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub case: u8,
    pub controller: ControllerKind,
    pub payload_true: f64,
    pub payload_design: f64,
    pub gamma: Option<f64>,
    pub l2_rho: f64,
    pub l2_theta: f64,
    pub max_steer_rate: f64,
    pub max_abs_steer: f64,
    /// Gain recursion reached its tolerance.
    pub synthesis_converged: bool,
    /// Final tracking errors in `ρ` and `θ` below [`TRACKING_TOL`].
    pub tracking_converged: bool,
}

impl MetricsRecord {
    pub fn from_outcome(o: &CaseOutcome) -> Self {
        let m = o.metrics();
        Self {
            case: o.case_id,
            controller: o.controller,
            payload_true: o.payload_true,
            payload_design: o.payload_design,
            gamma: o.gamma,
            l2_rho: m.l2_rho,
            l2_theta: m.l2_theta,
            max_steer_rate: m.max_steer_rate,
            max_abs_steer: m.max_abs_steer,
            synthesis_converged: o.converged,
            tracking_converged: tracking_converged(&o.sim),
        }
    }
}

pub fn tracking_converged(r: &SimResult) -> bool {
    match (r.states.last(), r.reference.x.last()) {
        (Some(x), Some(xr)) => {
            (x[idx::RHO] - xr[idx::RHO]).abs() < TRACKING_TOL && (x[idx::THETA] - xr[idx::THETA]).abs() < TRACKING_TOL
        }
        _ => false,
    }
}

pub fn metrics_json(o: &CaseOutcome) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&MetricsRecord::from_outcome(o))?;
    s.push('\n');
    Ok(s)
}

struct Series<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    color: &'a str,
    dashed: bool,
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs()) * 1e-3;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick_step(lo: f64, hi: f64) -> f64 {
    let raw = (hi - lo) / 5.0;
    let base = 10f64.powf(raw.log10().floor());
    let frac = raw / base;
    let mult = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    mult * base
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

fn panel(svg: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str, series: &[Series], fill: Option<(&[f64], &[f64], &[f64])>) {
    let (x_lo, x_hi) = finite_range(series.iter().flat_map(|s| s.xs.iter().copied()));
    let (mut y_lo, mut y_hi) = finite_range(series.iter().flat_map(|s| s.ys.iter().copied()));
    if let Some((_, lo, hi)) = fill {
        let (a, b) = finite_range(lo.iter().chain(hi).copied());
        y_lo = y_lo.min(a);
        y_hi = y_hi.max(b);
    }
    let px = |x: f64| f.left + (x - x_lo) / (x_hi - x_lo) * f.width;
    let py = |y: f64| f.top + f.height - (y - y_lo) / (y_hi - y_lo) * f.height;

    let _ = writeln!(
        svg,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        f.left, f.top, f.width, f.height
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{title}</text>"#,
        f.left + f.width / 2.0,
        f.top - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{xlabel}</text>"#,
        f.left + f.width / 2.0,
        f.top + f.height + 32.0
    );
    let (lx, ly) = (f.left - 48.0, f.top + f.height / 2.0);
    let _ = writeln!(
        svg,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 {lx:.2} {ly:.2})">{ylabel}</text>"#
    );

    for (lo, hi, vertical) in [(x_lo, x_hi, true), (y_lo, y_hi, false)] {
        let step = tick_step(lo, hi);
        let mut v = (lo / step).ceil() * step;
        while v <= hi + 1e-9 * step {
            let label = tick_label(v, step);
            if vertical {
                let x = px(v);
                let _ = writeln!(
                    svg,
                    r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{label}</text>"##,
                    f.top,
                    f.top + f.height,
                    f.top + f.height + 14.0
                );
            } else {
                let y = py(v);
                let _ = writeln!(
                    svg,
                    r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{label}</text>"##,
                    f.left,
                    f.left + f.width,
                    f.left - 4.0,
                    y + 3.0
                );
            }
            v += step;
        }
    }

    if let Some((xs, lo, hi)) = fill {
        let mut pts = String::new();
        for (x, y) in xs.iter().zip(hi).chain(xs.iter().zip(lo).rev()) {
            let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = writeln!(
            svg,
            r##"<polygon points="{}" fill="#cfe3f7" stroke="#7aa7d6" stroke-width="0.8"/>"##,
            pts.trim_end()
        );
    }
    for s in series {
        let mut pts = String::new();
        for (x, y) in s.xs.iter().zip(s.ys) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
            }
        }
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.4"{dash}/>"#,
            pts.trim_end(),
            s.color
        );
    }
}

fn svg_open(width: f64, height: f64, title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        width / 2.0
    );
    svg
}

fn run_title(o: &CaseOutcome) -> String {
    format!(
        "Case {} {}, payload {:.0} kg (design {:.0} kg)",
        o.case_id,
        o.controller.label().to_uppercase(),
        o.payload_true,
        o.payload_design
    )
}

const STATE_PANELS: [(&str, &str); 7] = [
    ("lateral velocity", "ẏ₁ [m/s]"),
    ("tractor yaw rate", "ψ̇₁ [rad/s]"),
    ("articulation rate", "φ̇ [rad/s]"),
    ("articulation angle", "φ [rad]"),
    ("lateral offset", "ρ [m]"),
    ("heading error", "θ [rad]"),
    ("steering angle", "α [rad]"),
];

/// Seven panels, simulated solid and reference dashed.
pub fn states_svg(o: &CaseOutcome) -> String {
    let r = &o.sim;
    let (cols, pw, ph) = (2usize, 460.0, 170.0);
    let rows = STATE_PANELS.len().div_ceil(cols);
    let width = 90.0 + cols as f64 * (pw + 90.0);
    let height = 60.0 + rows as f64 * (ph + 70.0);
    let mut svg = svg_open(width, height, &run_title(o));
    for (p, (title, ylabel)) in STATE_PANELS.iter().enumerate() {
        let (sim, refs): (Vec<f64>, Vec<f64>) = if p < STATE_DIM {
            (
                r.states.iter().map(|s| s[p]).collect(),
                r.reference.x.iter().map(|s| s[p]).collect(),
            )
        } else {
            (r.controls.clone(), r.reference.u.clone())
        };
        let frame = Frame {
            left: 90.0 + (p % cols) as f64 * (pw + 90.0),
            top: 60.0 + (p / cols) as f64 * (ph + 70.0),
            width: pw,
            height: ph,
        };
        let series = [
            Series {
                xs: &r.reference.t,
                ys: &refs,
                color: "#888",
                dashed: true,
            },
            Series {
                xs: &r.t,
                ys: &sim,
                color: "#c0392b",
                dashed: false,
            },
        ];
        panel(&mut svg, &frame, title, "t [s]", ylabel, &series, None);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Global path with the lane corridor of width `lane_width` around the reference path.
pub fn path_svg(o: &CaseOutcome, v: f64, lane_width: f64) -> String {
    let r = &o.sim;
    let (xr, yr) = simulator::integrate_position(&r.reference.x, v, r.ts);
    let half = 0.5 * lane_width;
    let upper: Vec<f64> = yr.iter().map(|y| y + half).collect();
    let lower: Vec<f64> = yr.iter().map(|y| y - half).collect();
    let (width, height) = (1000.0, 420.0);
    let mut svg = svg_open(width, height, &run_title(o));
    let frame = Frame {
        left: 90.0,
        top: 60.0,
        width: width - 130.0,
        height: height - 130.0,
    };
    let series = [
        Series {
            xs: &xr,
            ys: &yr,
            color: "#888",
            dashed: true,
        },
        Series {
            xs: &r.x_global,
            ys: &r.y_global,
            color: "#c0392b",
            dashed: false,
        },
    ];
    panel(
        &mut svg,
        &frame,
        "global path",
        "X [m]",
        "Y [m]",
        &series,
        Some((&xr, &lower, &upper)),
    );
    svg.push_str("</svg>\n");
    svg
}

/// One row per run, grouped by case.
pub fn comparison_table(outcomes: &[CaseOutcome]) -> String {
    let mut sorted: Vec<&CaseOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| (o.case_id, o.controller.label()));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4}  {:>9}  {:>10}  {:>16}  {:>12}  {:>10}  {:>10}  {:>9}",
        "case", "payload", "controller", "max|dα/dt| rad/s", "max|α| rad", "L2 ρ", "L2 θ", "converged"
    );
    for o in sorted {
        let m = o.metrics();
        let rec = MetricsRecord::from_outcome(o);
        let pct = if o.payload_design > 0.0 {
            format!("{:.0}%", 100.0 * o.payload_true / o.payload_design)
        } else {
            format!("{:.0} kg", o.payload_true)
        };
        let conv = match (rec.synthesis_converged, rec.tracking_converged) {
            (true, true) => "yes",
            (true, false) => "gain only",
            (false, _) => "no",
        };
        let _ = writeln!(
            s,
            "{:>4}  {:>9}  {:>10}  {:>16.4}  {:>12.4}  {:>10.4}  {:>10.4}  {:>9}",
            o.case_id,
            pct,
            o.controller.label(),
            m.max_steer_rate,
            m.max_abs_steer,
            m.l2_rho,
            m.l2_theta,
            conv
        );
    }
    s
}

pub fn run_dir_name(o: &CaseOutcome) -> String {
    format!("case{}_{}", o.case_id, o.controller.label())
}

/// Everything one run writes, rendered in memory.
pub struct RunFiles {
    pub dir_name: String,
    pub files: Vec<(&'static str, Vec<u8>)>,
}

pub fn render_run(o: &CaseOutcome, v: f64, lane_width: f64) -> Result<RunFiles> {
    let mut csv_bytes = Vec::new();
    write_states_csv(&mut csv_bytes, &o.sim)?;
    Ok(RunFiles {
        dir_name: run_dir_name(o),
        files: vec![
            ("states.csv", csv_bytes),
            ("metrics.json", metrics_json(o)?.into_bytes()),
            ("states.svg", states_svg(o).into_bytes()),
            ("path.svg", path_svg(o, v, lane_width).into_bytes()),
        ],
    })
}

/// Writes every run under `root`. On failure, whatever this call created is removed again.
pub fn write_runs(root: &Path, runs: &[RunFiles]) -> Result<Vec<PathBuf>> {
    let mut created_dirs: Vec<PathBuf> = Vec::new();
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        let mut missing = Vec::new();
        let mut p = root.to_path_buf();
        while !p.as_os_str().is_empty() && !p.exists() {
            missing.push(p.clone());
            if !p.pop() {
                break;
            }
        }
        fs::create_dir_all(root)?;
        created_dirs.extend(missing.into_iter().rev());
        for run in runs {
            let dir = root.join(&run.dir_name);
            if !dir.exists() {
                fs::create_dir(&dir)?;
                created_dirs.push(dir.clone());
            }
            for (name, bytes) in &run.files {
                let path = dir.join(name);
                fs::write(&path, bytes)?;
                written.push(path);
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for f in &written {
                let _ = fs::remove_file(f);
            }
            for d in created_dirs.iter().rev() {
                let _ = fs::remove_dir(d);
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(0.0, 1.0), 0.2);
        assert_eq!(tick_step(0.0, 30.0), 10.0);
        assert_eq!(tick_label(-0.0, 0.1), "0.0");
        assert_eq!(tick_label(2.5, 0.5), "2.5");
    }

    #[test]
    fn header_mismatch_rejected() {
        let err = parse_states_csv("t,rho\n0,1\n").unwrap_err();
        assert!(matches!(err, Error::Csv { line: 1, .. }));
    }

    #[test]
    fn bad_number_reports_line() {
        let text = format!("{}\n{}\n{}\n", CSV_COLUMNS.join(","), ["0"; 10].join(","), ["x"; 10].join(","));
        match parse_states_csv(&text).unwrap_err() {
            Error::Csv { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn short_record_rejected() {
        let text = format!("{}\n1,2,3\n", CSV_COLUMNS.join(","));
        assert!(parse_states_csv(&text).is_err());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let root = std::env::temp_dir().join(format!("steering-report-{}", std::process::id()));
        let _ = fs::remove_dir_all(&root);
        let runs = vec![
            RunFiles {
                dir_name: "a".into(),
                files: vec![("x.txt", b"1".to_vec())],
            },
            RunFiles {
                dir_name: "b/../../../nonexistent-parent/zzz".into(),
                files: vec![("y.txt", b"2".to_vec())],
            },
        ];
        assert!(write_runs(&root, &runs).is_err());
        assert!(!root.exists());
    }
}
