//! Execution of a [`RunConfig`] and the files it leaves behind:
//! `manifest.json`, `metrics.jsonl` and CSV tables under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{self, ProblemData, Source, Trajectory};
use crate::grid::Grid;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConverged { .. } => EXIT_NONCONVERGED,
        _ => EXIT_CONFIG,
    }
}

fn failure_kind(e: &Error) -> &'static str {
    match e {
        Error::NonConverged { .. } => "nonconverged",
        Error::BadConfig(_) => "config",
        Error::Incompatible { .. } => "incompatible",
        Error::Inapplicable(_) => "inapplicable",
        _ => "invalid-input",
    }
}

/// Machine-readable description of an error.
pub fn failure_json(e: &Error) -> Value {
    let mut v = json!({"status": "error", "kind": failure_kind(e), "message": e.to_string()});
    if let Error::NonConverged { step: Some(i), .. } = e {
        v["step"] = json!(i);
    }
    v
}

/// One named PASS/FAIL check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub out: PathBuf,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            EXIT_OK
        } else {
            EXIT_CHECK
        }
    }
}

/// Fixed float format for every artifact: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

struct Writer {
    dir: PathBuf,
    metrics: String,
    verbose: bool,
}

impl Writer {
    fn file(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(&path, body).map_err(|e| io_error(&path, e))
    }

    /// Append one JSON line; numbers are written with the fixed format.
    fn metric(&mut self, fields: &[(&str, MetricValue)]) {
        let mut line = String::from("{");
        for (k, (key, v)) in fields.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "\"{key}\":");
            match v {
                MetricValue::Num(x) if x.is_finite() => line.push_str(&fmt_f64(*x)),
                MetricValue::Num(_) => line.push_str("null"),
                MetricValue::Int(i) => {
                    let _ = write!(line, "{i}");
                }
                MetricValue::Text(s) => line.push_str(&Value::String(s.clone()).to_string()),
                MetricValue::Bool(b) => {
                    let _ = write!(line, "{b}");
                }
            }
        }
        line.push('}');
        if self.verbose {
            eprintln!("{line}");
        }
        self.metrics.push_str(&line);
        self.metrics.push('\n');
    }
}

enum MetricValue {
    Num(f64),
    Int(usize),
    Text(String),
    Bool(bool),
}
use MetricValue::{Bool, Int, Num, Text};

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidInput(format!("cannot write {}: {e}", path.display()))
}

fn field_csv(grid: &Grid, u: &[f64]) -> String {
    let mut s = if grid.dim() == 1 {
        String::from("x,u\n")
    } else {
        String::from("x,y,u\n")
    };
    for (k, v) in u.iter().enumerate() {
        for c in grid.point(k) {
            s.push_str(&fmt_f64(*c));
            s.push(',');
        }
        s.push_str(&fmt_f64(*v));
        s.push('\n');
    }
    s
}

/// Build the flow problem described by the configuration.
pub fn problem(cfg: &RunConfig) -> Result<ProblemData> {
    let grid = Grid::new(cfg.grid)?;
    let y0 = grid.sample(|x| cfg.y0.eval(0.0, x));
    let mut pb = ProblemData::new(grid, cfg.model()?, y0, cfg.horizon)?
        .with_sources(Source::from(cfg.f.clone()), Source::from(cfg.g.clone()));
    if cfg.mode == Mode::Obstacle {
        pb = pb.with_obstacle();
        pb.validate()?;
    }
    Ok(pb)
}

/// Execute the configured mode and write all artifacts into `out`.
pub fn run(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut w = Writer {
        dir: out.to_path_buf(),
        metrics: String::new(),
        verbose,
    };
    let result = execute(cfg, &mut w);
    let (checks, failure, summary) = match result {
        Ok((checks, summary)) => (checks, None, summary),
        Err(e) => (vec![], Some(e), Value::Null),
    };
    let all_pass = failure.is_none() && checks.iter().all(|c| c.pass);
    let manifest = json!({
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "status": if failure.is_some() { "error" } else if all_pass { "pass" } else { "fail" },
        "failure": failure.as_ref().map(failure_json),
        "checks": checks,
        "summary": summary,
    });
    w.file("metrics.jsonl", &w.metrics.clone())?;
    w.file(
        "manifest.json",
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(Outcome {
            checks,
            out: out.to_path_buf(),
        }),
    }
}

fn execute(cfg: &RunConfig, w: &mut Writer) -> Result<(Vec<Check>, Value)> {
    let pb = problem(cfg)?;
    let n = cfg.steps()?;
    match cfg.mode {
        Mode::Flow | Mode::Tv | Mode::Obstacle => {
            let traj = flow::run_flow(&pb, n, &cfg.step)?;
            flow_outputs(cfg, &traj, w)
        }
        Mode::Convergence => convergence(cfg, &pb, n, w),
        Mode::Contraction => contraction(cfg, &pb, n, w),
        Mode::Asymptotics => asymptotics(cfg, &pb, n, w),
    }
}

fn flow_outputs(cfg: &RunConfig, traj: &Trajectory, w: &mut Writer) -> Result<(Vec<Check>, Value)> {
    let pb = &traj.problem;
    let grid = &pb.grid;
    let rec = flow::stability_report(traj)?;
    let energy = match flow::energy_trace(traj, cfg.checks.energy_tolerance) {
        Ok(e) => Some(e),
        Err(Error::Inapplicable(_)) => None,
        Err(e) => return Err(e),
    };
    let n = traj.steps_count();
    for i in 0..=n {
        let mut fields = vec![
            ("step", Int(i)),
            ("t", Num(traj.times[i])),
            ("energy", Num(rec.energies[i])),
            ("norm_sq", Num(rec.norms[i])),
        ];
        if i > 0 {
            let s = &traj.steps[i - 1];
            fields.push(("iterations", Int(s.iterations)));
            fields.push(("residual", Num(s.residual)));
            fields.push(("certificate", Num(s.certificate)));
            fields.push(("weak_residual", Num(s.weak_residual)));
            if let Some(l) = s.lambda {
                fields.push(("lambda", Num(l)));
            }
        }
        w.metric(&fields);
        if i % cfg.save_every == 0 || i == n {
            w.file(&format!("fields/y_{i:06}.csv"), &field_csv(grid, &traj.states[i]))?;
        }
    }
    let mut series = String::from("step,t,energy,norm_sq\n");
    for i in 0..=n {
        let _ = writeln!(
            series,
            "{i},{},{},{}",
            fmt_f64(traj.times[i]),
            fmt_f64(rec.energies[i]),
            fmt_f64(rec.norms[i])
        );
    }
    w.file("energy.csv", &series)?;

    let mut checks = vec![Check::new(
        "gronwall",
        rec.pass,
        format!(
            "max norm {} <= bound {}",
            fmt_f64(rec.norms.iter().cloned().fold(0.0, f64::max)),
            fmt_f64(rec.gronwall_bound)
        ),
    )];
    if let Some(e) = &energy {
        checks.push(Check::new(
            "energy-decay",
            e.pass,
            format!(
                "max increase {}, dissipation defect {}",
                fmt_f64(e.max_increase),
                fmt_f64(e.max_dissipation_defect)
            ),
        ));
    }
    if pb.obstacle {
        let lowest = traj.states.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        let comp = traj.steps.iter().map(|s| s.weak_residual).fold(0.0, f64::max);
        checks.push(Check::new("nonnegative", lowest >= -1e-12, format!("min u {}", fmt_f64(lowest))));
        checks.push(Check::new(
            "complementarity",
            comp <= cfg.checks.complementarity_tolerance,
            format!("max residual {}", fmt_f64(comp)),
        ));
    }
    let summary = json!({
        "steps": n,
        "h": traj.h,
        "diagnostics": {
            "max_domain_sq": rec.max_domain_sq,
            "max_trace_sq": rec.max_trace_sq,
            "gradient_sum": rec.gradient_sum,
            "time_derivative_domain": rec.time_derivative_domain,
            "time_derivative_boundary": rec.time_derivative_boundary,
            "potential_sum": rec.potential_sum,
            "c0": rec.c0,
            "gronwall_bound": rec.gronwall_bound,
        },
        "final_energy": rec.energies[n],
        "max_certificate": traj.steps.iter().map(|s| s.certificate).fold(0.0, f64::max),
        "max_weak_residual": traj.steps.iter().map(|s| s.weak_residual).fold(0.0, f64::max),
    });
    Ok((checks, summary))
}

fn convergence(cfg: &RunConfig, pb: &ProblemData, n: usize, w: &mut Writer) -> Result<(Vec<Check>, Value)> {
    let h0 = pb.horizon / n as f64;
    let h_list: Vec<f64> = (0..=cfg.checks.refinements).map(|k| h0 / (1u64 << k) as f64).collect();
    let table = flow::convergence_study(pb, &h_list, &cfg.step)?;
    let mut csv = String::from("h,difference,order\n");
    for row in &table.rows {
        let _ = writeln!(csv, "{},{},{}", fmt_f64(row.h), fmt_f64(row.difference), fmt_opt(row.order));
        w.metric(&[
            ("h", Num(row.h)),
            ("difference", Num(row.difference)),
            ("order", row.order.map_or(Text(String::new()), Num)),
        ]);
    }
    w.file("convergence.csv", &csv)?;
    let diffs = table.differences();
    let check = match cfg.checks.min_order {
        Some(min) => {
            let orders = table.orders();
            Check::new(
                "order",
                orders.iter().all(|&o| o >= min),
                format!("orders {orders:?} >= {min}"),
            )
        }
        None => Check::new(
            "decreasing",
            diffs.windows(2).all(|d| d[1] < d[0]),
            format!("differences {diffs:?}"),
        ),
    };
    Ok((vec![check], serde_json::to_value(&table).expect("table serializes")))
}

fn contraction(cfg: &RunConfig, pb: &ProblemData, n: usize, w: &mut Writer) -> Result<(Vec<Check>, Value)> {
    let grid = &pb.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y1: Vec<f64> = pb
        .y0
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let noise = if cfg.checks.noise > 0.0 {
                cfg.checks.noise * rng.random_range(-1.0..1.0)
            } else {
                0.0
            };
            y + cfg.checks.perturbation.eval(0.0, grid.point(k)) + noise
        })
        .collect();
    let f = cfg.f.clone();
    let df = cfg.checks.perturb_f.clone();
    let perturbed_f = if df.as_constant() == Some(0.0) {
        pb.f.clone()
    } else {
        Source::function(move |t, x| f.eval(t, x) + df.eval(t, x))
    };
    let mut other = pb.clone();
    other.y0 = y1;
    other.f = perturbed_f;
    other.validate()?;
    let rep = flow::contraction_check(pb, &other, n, &cfg.step, cfg.checks.contraction_tolerance)?;
    let h = pb.horizon / n as f64;
    let mut csv = String::from("t,distance,data\n");
    for (i, (d, c)) in rep.distances.iter().zip(&rep.data).enumerate() {
        let t = i as f64 * h;
        let _ = writeln!(csv, "{},{},{}", fmt_f64(t), fmt_f64(*d), fmt_f64(*c));
        w.metric(&[("step", Int(i)), ("t", Num(t)), ("distance", Num(*d)), ("data", Num(*c))]);
    }
    w.file("contraction.csv", &csv)?;
    let check = Check::new(
        "contraction",
        rep.pass,
        format!("C = {} (sources equal: {})", fmt_f64(rep.constant), rep.sources_equal),
    );
    let summary = json!({"constant": rep.constant, "sources_equal": rep.sources_equal});
    Ok((vec![check], summary))
}

fn asymptotics(cfg: &RunConfig, pb: &ProblemData, n: usize, w: &mut Writer) -> Result<(Vec<Check>, Value)> {
    let rep = flow::asymptotics_check(pb, cfg.checks.t_long, n, &cfg.step, cfg.checks.asymptotics_tolerance)?;
    let mut csv = String::from("t,distance\n");
    for (i, (t, d)) in rep.times.iter().zip(&rep.distances).enumerate() {
        let _ = writeln!(csv, "{},{}", fmt_f64(*t), fmt_f64(*d));
        w.metric(&[("step", Int(i)), ("t", Num(*t)), ("distance", Num(*d))]);
    }
    w.file("asymptotics.csv", &csv)?;
    w.file("fields/limit.csv", &field_csv(&pb.grid, &rep.limit))?;
    w.metric(&[("eventually_decreasing", Bool(rep.eventually_decreasing))]);
    let check = Check::new(
        "asymptotics",
        rep.pass,
        format!(
            "final distance {} at T_long = {} (eventually decreasing: {})",
            fmt_f64(rep.final_distance),
            fmt_f64(rep.t_long),
            rep.eventually_decreasing
        ),
    );
    let summary = json!({"t_long": rep.t_long, "final_distance": rep.final_distance});
    Ok((vec![check], summary))
}

