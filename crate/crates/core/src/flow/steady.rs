//! Equilibria of the autonomous flow and convergence towards them.
//!
//! Equilibria solve `−∇·β(∇u) = f` in Ω, `β(∇u)·ν = g` on Γ, i.e. they
//! minimize `Φ(u) − ∫_Ω fu − ∫_Γ gu`. That functional is invariant under
//! constants once `∫_Ω f + ∫_Γ g = 0`, and the representative returned has
//! zero mean over Ω ∪ Γ.

use serde::Serialize;

use super::{run_flow, ProblemData};
use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::grid::{Field, Grid};
use crate::linalg::SymBand;
use crate::step::{self, StepConfig};

fn weighted_mean(grid: &Grid, u: &[f64]) -> f64 {
    let w = grid.total_weights();
    u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()
}

/// Minimizer of `Φ(u) − ∫_Ω fu − ∫_Γ gu` with zero mean over Ω ∪ Γ, by
/// proximal-point iteration on the step solver. Stops when the stationarity
/// residual (scaled by the nodal weights) is at most `tol`.
pub fn steady_state(
    grid: &Grid,
    model: &FluxModel,
    f: &[f64],
    g: &[f64],
    cfg: &StepConfig,
    tol: f64,
) -> Result<Field> {
    grid.check_field(f)?;
    grid.check_boundary(g)?;
    if model.depends_on_time() {
        return Err(Error::Inapplicable("steady states need a time-independent flux law".into()));
    }
    let integral = grid.integrate_nodes(f) + grid.integrate_boundary(g);
    let size: f64 = grid.integrate_nodes(&f.iter().map(|v| v.abs()).collect::<Vec<_>>())
        + grid.integrate_boundary(&g.iter().map(|v| v.abs()).collect::<Vec<_>>());
    if integral.abs() > tol * size.max(1.0) {
        return Err(Error::Incompatible { integral });
    }
    let mut u = vec![0.0; grid.node_count()];
    let mut h = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let w1: Field = u.iter().zip(f).map(|(a, b)| a + h * b).collect();
        let w2: Vec<f64> = grid.trace(&u).iter().zip(g).map(|(a, b)| a + h * b).collect();
        let sol = step::solve_step_from(grid, model, 0.0, h, &w1, &w2, cfg, &u)?;
        residual = sol
            .u
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs() / h)
            .fold(0.0, f64::max);
        u = sol.u;
        if residual <= tol {
            let m = weighted_mean(grid, &u);
            return Ok(u.into_iter().map(|v| v - m).collect());
        }
        h = (h * 10.0).min(1e4);
    }
    Err(Error::NonConverged {
        what: "steady state".into(),
        residual,
        iterations: 200,
        step: None,
    })
}

/// Smallest nonzero decay rate `μ1` of the linear flow, `K v = μ W v` with the
/// stiffness `K` of `∫|∇u|²` and the nodal weights `W`, by shifted inverse
/// iteration orthogonal to constants.
pub fn relaxation_rate(grid: &Grid) -> Result<f64> {
    let n = grid.node_count();
    let w = grid.total_weights();
    let mut k = SymBand::zeros(n, grid.bandwidth());
    for cell in grid.cells() {
        for d in cell.axes.iter().take(grid.dim()) {
            let a = cell.volume * d.inv_spacing * d.inv_spacing;
            k.add(d.plus, d.plus, a);
            k.add(d.minus, d.minus, a);
            k.add(d.plus, d.minus, -a);
        }
    }
    let scale = (0..n).map(|i| k.get(i, i) / w[i]).fold(0.0, f64::max);
    let shift = 1e-8 * scale;
    let mut m = k.clone();
    for i in 0..n {
        m.add_diag(i, shift * w[i]);
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::invalid("stiffness matrix is not positive definite"))?;
    let total: f64 = w.iter().sum();
    let deflate = |x: &mut Vec<f64>| {
        let mean = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = x.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    };
    let mut x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
    deflate(&mut x);
    let mut mu = f64::INFINITY;
    for _ in 0..500 {
        let rhs: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        x = chol.solve(&rhs);
        deflate(&mut x);
        let kx = k.mul_vec(&x);
        let next: f64 = kx.iter().zip(&x).map(|(a, b)| a * b).sum();
        if (next - mu).abs() <= 1e-12 * next {
            return Ok(next);
        }
        mu = next;
    }
    Ok(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub t_long: f64,
    pub times: Vec<f64>,
    /// `‖y(t_m) − y_∞‖_Ω`
    pub distances: Vec<f64>,
    pub limit: Field,
    pub final_distance: f64,
    /// The second half of the distance sequence is nonincreasing.
    pub eventually_decreasing: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// Run the flow to `t_long` (default `50/μ1`) and measure the distance to the
/// equilibrium with the same mean as `y0`.
pub fn asymptotics_check(
    problem: &ProblemData,
    t_long: Option<f64>,
    n: usize,
    cfg: &StepConfig,
    tolerance: f64,
) -> Result<AsymptoticsReport> {
    if problem.f.depends_on_time() || problem.g.depends_on_time() {
        return Err(Error::Inapplicable("asymptotics need time-independent sources".into()));
    }
    let grid = &problem.grid;
    let t_long = match t_long {
        Some(t) => t,
        None => 50.0 / relaxation_rate(grid)?,
    };
    let f = grid.sample(|x| problem.f.eval(0.0, x));
    let g = grid.sample_boundary(|x| problem.g.eval(0.0, x));
    let equilibrium = steady_state(grid, &problem.model, &f, &g, cfg, 1e-2 * tolerance)?;
    let mean = weighted_mean(grid, &problem.y0);
    let limit: Field = equilibrium.iter().map(|v| v + mean).collect();

    let mut long = problem.clone();
    long.horizon = t_long;
    let traj = run_flow(&long, n, cfg)?;
    let distances: Vec<f64> = traj
        .states
        .iter()
        .map(|y| {
            let d: Vec<f64> = y.iter().zip(&limit).map(|(a, b)| a - b).collect();
            grid.norm_sq_domain(&d).sqrt()
        })
        .collect();
    let slack = 1e-12 * distances[0].max(1e-300);
    let tail = &distances[distances.len() / 2..];
    let eventually_decreasing = tail.windows(2).all(|w| w[1] <= w[0] + slack);
    let final_distance = *distances.last().expect("nonempty");
    Ok(AsymptoticsReport {
        t_long,
        times: traj.times,
        distances,
        limit,
        final_distance,
        eventually_decreasing,
        tolerance,
        pass: eventually_decreasing && final_distance <= tolerance,
    })
}
