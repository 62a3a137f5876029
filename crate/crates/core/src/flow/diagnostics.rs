//! Stability, convergence, contraction and energy diagnostics of trajectories.

use serde::Serialize;

use super::{run_flow, ProblemData, Trajectory};
use crate::error::{Error, Result};
use crate::flux::{Coercivity, FluxKind, SampleSpec};
use crate::step::StepConfig;

/// The six stability quantities, the energies and the Gronwall check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    /// `max_m ‖y_m‖²_Ω`
    pub max_domain_sq: f64,
    /// `max_m ‖γy_m‖²_Γ`
    pub max_trace_sq: f64,
    /// `h Σ_i ‖∇y_i‖_p^p`
    pub gradient_sum: f64,
    /// `h Σ_i ‖(y_i − y_{i−1})/h‖²_Ω`
    pub time_derivative_domain: f64,
    /// `h Σ_i ‖γ(y_i − y_{i−1})/h‖²_Γ`
    pub time_derivative_boundary: f64,
    /// `h Σ_i ∫_Ω j(t_i, x, ∇y_i)`
    pub potential_sum: f64,
    /// `Φ(y_i) = ∫_Ω j(t_i, x, ∇y_i)`, `i = 0..=n`.
    pub energies: Vec<f64>,
    /// `‖y_m‖²_Ω + ‖γy_m‖²_Γ`, `m = 0..=n`.
    pub norms: Vec<f64>,
    pub c0: f64,
    /// `2e^T (‖y0‖²_Ω + ‖γy0‖²_Γ + C0)`
    pub gronwall_bound: f64,
    pub pass: bool,
}

impl DiagnosticsRecord {
    /// The six quantities in a fixed order.
    pub fn quantities(&self) -> [f64; 6] {
        [
            self.max_domain_sq,
            self.max_trace_sq,
            self.gradient_sum,
            self.time_derivative_domain,
            self.time_derivative_boundary,
            self.potential_sum,
        ]
    }
}

/// The lower growth offset `C1⁰` of the model (0 when no power bound is known;
/// every catalog law is nonnegative).
fn lower_offset(traj: &Trajectory) -> f64 {
    let grid = &traj.problem.grid;
    let (lo, hi) = grid.bounds();
    let spec = SampleSpec {
        t_range: [0.0, traj.problem.horizon],
        lower: lo,
        upper: hi,
        ..SampleSpec::default()
    };
    match traj.problem.model.coercivity(&spec) {
        Coercivity::Strong(c) => c.c1_0,
        _ => 0.0,
    }
}

pub fn stability_report(traj: &Trajectory) -> Result<DiagnosticsRecord> {
    let pb = &traj.problem;
    let grid = &pb.grid;
    let h = traj.h;
    let p = pb.model.exponent();
    let norms: Vec<f64> = traj
        .states
        .iter()
        .map(|y| grid.norm_sq_domain(y) + grid.norm_sq_trace(y))
        .collect();
    let energies = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(y, &t)| pb.energy(t, y))
        .collect::<Result<Vec<f64>>>()?;

    let mut gradient_sum = 0.0;
    let mut dt_domain = 0.0;
    let mut dt_boundary = 0.0;
    let mut source_energy = 0.0;
    for i in 1..traj.states.len() {
        let y = &traj.states[i];
        let gp: f64 = grid
            .cells()
            .iter()
            .map(|c| {
                let g = grid.cell_gradient(c, y);
                c.volume * (g[0] * g[0] + g[1] * g[1]).sqrt().powf(p)
            })
            .sum();
        gradient_sum += h * gp;
        let d: Vec<f64> = y.iter().zip(&traj.states[i - 1]).map(|(a, b)| (a - b) / h).collect();
        dt_domain += h * grid.norm_sq_domain(&d);
        dt_boundary += h * grid.norm_sq_trace(&d);
        let (f, g) = &traj.sources[i - 1];
        source_energy += h * (grid.norm_sq_domain(f) + grid.norm_sq_boundary(g));
    }
    let potential_sum = h * energies[1..].iter().sum::<f64>();

    let init = norms[0];
    let c0 = source_energy + init + 2.0 * pb.horizon * lower_offset(traj).abs() * grid.measure();
    let bound = 2.0 * pb.horizon.exp() * (init + c0);
    let pass = norms.iter().all(|&v| v <= bound);
    Ok(DiagnosticsRecord {
        max_domain_sq: traj.states.iter().map(|y| grid.norm_sq_domain(y)).fold(0.0, f64::max),
        max_trace_sq: traj.states.iter().map(|y| grid.norm_sq_trace(y)).fold(0.0, f64::max),
        gradient_sum,
        time_derivative_domain: dt_domain,
        time_derivative_boundary: dt_boundary,
        potential_sum,
        energies,
        norms,
        c0,
        gronwall_bound: bound,
        pass,
    })
}

/// Exponent `r` of the space-time norm used to compare trajectories: 2 for
/// `p >= 2`, `p` for `1 < p < 2`, 1 for weakly coercive and linear-growth laws.
pub fn norm_exponent(model: &crate::flux::FluxModel) -> f64 {
    match model.kind() {
        FluxKind::LogGrowth { .. } | FluxKind::TotalVariation { .. } => 1.0,
        _ => {
            let p = model.exponent();
            if p >= 2.0 {
                2.0
            } else {
                p
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    /// `‖y^h − y^{h/2}‖_{L^r(Q)}`
    pub difference: f64,
    /// `log2` of the ratio to the next difference.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub r: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn differences(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.difference).collect()
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }
}

/// `‖y^{coarse} − y^{fine}‖_{L^r(Q)}` for a fine step that divides the coarse one.
fn space_time_distance(coarse: &Trajectory, fine: &Trajectory, r: f64) -> f64 {
    let grid = &coarse.problem.grid;
    let ratio = fine.steps_count() / coarse.steps_count();
    let mut total = 0.0;
    for k in 1..=fine.steps_count() {
        let a = &coarse.states[k.div_ceil(ratio)];
        let b = &fine.states[k];
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(grid.node_mass())
            .map(|((x, y), m)| m * (x - y).abs().powf(r))
            .sum();
        total += fine.h * s;
    }
    total.powf(1.0 / r)
}

/// Self-convergence over a halving sequence of step sizes. The flows run
/// concurrently.
pub fn convergence_study(problem: &ProblemData, h_list: &[f64], cfg: &StepConfig) -> Result<ConvergenceTable> {
    if h_list.len() < 2 {
        return Err(Error::invalid("convergence study needs at least two step sizes"));
    }
    let mut counts = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let n = (problem.horizon / h).round();
        if !(h > 0.0) || n < 1.0 || ((n * h - problem.horizon).abs() > 1e-9 * problem.horizon) {
            return Err(Error::invalid(format!("step {h} does not divide T = {}", problem.horizon)));
        }
        counts.push(n as usize);
    }
    for w in counts.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(Error::invalid("step sizes must halve successively"));
        }
    }
    let flows: Vec<Result<Trajectory>> = std::thread::scope(|s| {
        let handles: Vec<_> = counts
            .iter()
            .map(|&n| s.spawn(move || run_flow(problem, n, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("flow thread panicked"))
            .collect()
    });
    let flows = flows.into_iter().collect::<Result<Vec<_>>>()?;
    let r = norm_exponent(&problem.model);
    let diffs: Vec<f64> = flows
        .windows(2)
        .map(|w| space_time_distance(&w[0], &w[1], r))
        .collect();
    let rows = diffs
        .iter()
        .enumerate()
        .map(|(k, &d)| ConvergenceRow {
            h: h_list[k],
            difference: d,
            order: diffs.get(k + 1).and_then(|&next| {
                (d > 0.0 && next > 0.0).then(|| (d / next).log2())
            }),
        })
        .collect();
    Ok(ConvergenceTable { r, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// `‖y(t_m) − ȳ(t_m)‖²_Ω + ‖γ(y − ȳ)(t_m)‖²_Γ`
    pub distances: Vec<f64>,
    /// `‖Δy0‖²_Ω + ‖γΔy0‖²_Γ + ∫_0^{t_m} (‖Δf‖²_Ω + ‖Δg‖²_Γ)`, with the
    /// integral taken over the step averages.
    pub data: Vec<f64>,
    /// Smallest `C` with `distance ≤ C · data` at every `t_m`.
    pub constant: f64,
    /// Only the initial data differ.
    pub sources_equal: bool,
    pub tolerance: f64,
    /// With equal sources: `C ≤ 1 + tolerance`. Otherwise: `C` finite.
    pub pass: bool,
}

/// Compare the flows of two problems on the same grid with the same model.
pub fn contraction_check(
    problem: &ProblemData,
    perturbed: &ProblemData,
    n: usize,
    cfg: &StepConfig,
    tolerance: f64,
) -> Result<ContractionReport> {
    if problem.grid != perturbed.grid || problem.horizon != perturbed.horizon || problem.model != perturbed.model {
        return Err(Error::invalid("contraction check needs the same grid, horizon and model"));
    }
    let (a, b) = std::thread::scope(|s| {
        let a = s.spawn(|| run_flow(problem, n, cfg));
        let b = s.spawn(|| run_flow(perturbed, n, cfg));
        (
            a.join().expect("flow thread panicked"),
            b.join().expect("flow thread panicked"),
        )
    });
    let (a, b) = (a?, b?);
    let grid = &problem.grid;
    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let mut data = Vec::with_capacity(n + 1);
    let mut acc = {
        let d = diff(&a.states[0], &b.states[0]);
        grid.norm_sq_domain(&d) + grid.norm_sq_trace(&d)
    };
    data.push(acc);
    let mut sources_equal = true;
    for (sa, sb) in a.sources.iter().zip(&b.sources) {
        sources_equal &= sa == sb;
        acc += a.h * (grid.norm_sq_domain(&diff(&sa.0, &sb.0)) + grid.norm_sq_boundary(&diff(&sa.1, &sb.1)));
        data.push(acc);
    }
    let distances: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let d = diff(x, y);
            grid.norm_sq_domain(&d) + grid.norm_sq_trace(&d)
        })
        .collect();
    let mut constant: f64 = 0.0;
    for (&d, &c) in distances.iter().zip(&data) {
        let ratio = if c > 0.0 {
            d / c
        } else if d <= 1e-28 {
            0.0
        } else {
            f64::INFINITY
        };
        constant = constant.max(ratio);
    }
    let pass = if sources_equal {
        constant <= 1.0 + tolerance
    } else {
        constant.is_finite()
    };
    Ok(ContractionReport {
        distances,
        data,
        constant,
        sources_equal,
        tolerance,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTrace {
    /// `Φ(y_i)`, `i = 0..=n`.
    pub values: Vec<f64>,
    /// `max_i [Φ(y_{i+1}) − Φ(y_i)]`
    pub max_increase: f64,
    /// `max_i [Φ(y_{i+1}) + (‖Δy‖²_Ω + ‖γΔy‖²_Γ)/h − Φ(y_i)]`
    pub max_dissipation_defect: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Energy along an autonomous, source-free trajectory.
pub fn energy_trace(traj: &Trajectory, tolerance: f64) -> Result<EnergyTrace> {
    let pb = &traj.problem;
    if pb.model.depends_on_time() {
        return Err(Error::Inapplicable("energy trace needs a time-independent flux law".into()));
    }
    if pb.has_sources() {
        return Err(Error::Inapplicable("energy trace needs f = g = 0".into()));
    }
    let grid = &pb.grid;
    let values = traj
        .states
        .iter()
        .map(|y| pb.energy(0.0, y))
        .collect::<Result<Vec<f64>>>()?;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_defect = f64::NEG_INFINITY;
    for i in 1..values.len() {
        max_increase = max_increase.max(values[i] - values[i - 1]);
        let d: Vec<f64> = traj.states[i]
            .iter()
            .zip(&traj.states[i - 1])
            .map(|(a, b)| a - b)
            .collect();
        let dissipated = (grid.norm_sq_domain(&d) + grid.norm_sq_trace(&d)) / traj.h;
        max_defect = max_defect.max(values[i] + dissipated - values[i - 1]);
    }
    let pass = max_increase <= tolerance && max_defect <= tolerance;
    Ok(EnergyTrace {
        values,
        max_increase,
        max_dissipation_defect: max_defect,
        tolerance,
        pass,
    })
}
