//! Time marching of the implicit-Euler scheme
//!
//! `y_{i+1} = argmin φ` with `w1 = y_i + h f̄_{i+1}` and `w2 = γy_i + h ḡ_{i+1}`,
//! where `f̄, ḡ` are time averages over `[t_i, t_{i+1}]`. The diagnostics
//! built on top of a [`Trajectory`] live in the submodules.

mod diagnostics;
mod steady;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flux::FluxModel;
use crate::grid::{BoundaryValues, Field, GradientField, Grid};
use crate::step::{self, StepConfig};

pub use diagnostics::{
    contraction_check, convergence_study, energy_trace, norm_exponent, stability_report,
    ContractionReport, ConvergenceRow, ConvergenceTable, DiagnosticsRecord, EnergyTrace,
};
pub use steady::{asymptotics_check, relaxation_rate, steady_state, AsymptoticsReport};

pub type SourceFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A source term `f(t, x)` (domain) or `g(t, σ)` (boundary).
#[derive(Clone, Default)]
pub enum Source {
    #[default]
    Zero,
    Expr(Expr),
    Function(SourceFn),
}

impl Source {
    pub fn function(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Source::Function(Arc::new(f))
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Expr(e) => e.eval(t, x),
            Source::Function(f) => f(t, x),
        }
    }

    /// True only when the source is known to vanish identically.
    pub fn is_zero(&self) -> bool {
        match self {
            Source::Zero => true,
            Source::Expr(e) => e.as_constant() == Some(0.0),
            Source::Function(_) => false,
        }
    }

    /// Conservative: closures are assumed time-dependent.
    pub fn depends_on_time(&self) -> bool {
        match self {
            Source::Zero => false,
            Source::Expr(e) => e.depends_on_time(),
            Source::Function(_) => true,
        }
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Expr(e) => write!(f, "Expr({:?})", e.source()),
            Source::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl From<Expr> for Source {
    fn from(e: Expr) -> Self {
        Source::Expr(e)
    }
}

/// Initial datum, sources, horizon and flux law of one flow problem.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub grid: Grid,
    pub model: FluxModel,
    pub y0: Field,
    pub f: Source,
    pub g: Source,
    pub horizon: f64,
    /// Constrain the flow to `y >= 0`.
    pub obstacle: bool,
}

impl ProblemData {
    pub fn new(grid: Grid, model: FluxModel, y0: Field, horizon: f64) -> Result<Self> {
        let p = ProblemData {
            grid,
            model,
            y0,
            f: Source::Zero,
            g: Source::Zero,
            horizon,
            obstacle: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_sources(mut self, f: Source, g: Source) -> Self {
        self.f = f;
        self.g = g;
        self
    }

    pub fn with_obstacle(mut self) -> Self {
        self.obstacle = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.check_field(&self.y0)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon T must be > 0, got {}", self.horizon)));
        }
        if self.model.dim() != self.grid.dim() {
            return Err(Error::Shape(format!(
                "model dimension {} does not match grid dimension {}",
                self.model.dim(),
                self.grid.dim()
            )));
        }
        if self.obstacle && self.y0.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("obstacle flow needs y0 >= 0"));
        }
        Ok(())
    }

    pub fn has_sources(&self) -> bool {
        !(self.f.is_zero() && self.g.is_zero())
    }

    /// `(f̄_i, ḡ_i)` over `[(i−1)h, ih]`.
    pub fn source_averages(&self, i: usize, h: f64) -> Result<(Field, BoundaryValues)> {
        let f = if self.f.is_zero() {
            vec![0.0; self.grid.node_count()]
        } else {
            self.grid.time_average(|t, x| self.f.eval(t, x), i, h)?
        };
        let g = if self.g.is_zero() {
            vec![0.0; self.grid.boundary_nodes().len()]
        } else {
            self.grid.time_average_boundary(|t, x| self.g.eval(t, x), i, h)?
        };
        for v in f.iter().chain(&g) {
            if !v.is_finite() {
                return Err(Error::invalid(format!("source is not finite at step {i}")));
            }
        }
        Ok((f, g))
    }

    /// `∫_Ω j(t, x, ∇u)`, evaluated at cell centroids.
    pub fn energy(&self, t: f64, u: &[f64]) -> Result<f64> {
        let dim = self.grid.dim();
        let mut total = 0.0;
        for cell in self.grid.cells() {
            let g = self.grid.cell_gradient(cell, u);
            total += cell.volume * self.model.potential(t, &cell.centroid[..dim], &g[..dim])?;
        }
        Ok(total)
    }
}

/// Per-step solver summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
    pub certificate: f64,
    /// Discrete weak-form residual of the step.
    pub weak_residual: f64,
    pub lambda: Option<f64>,
}

/// Iterates `y_0, …, y_n` of the scheme and what produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub problem: ProblemData,
    pub h: f64,
    /// `t_i = ih`, `i = 0..=n`.
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// Flux sections `η_i`, `i = 1..=n` (index `i − 1`).
    pub etas: Vec<GradientField>,
    /// Source averages `(f̄_i, ḡ_i)`, `i = 1..=n` (index `i − 1`).
    pub sources: Vec<(Field, BoundaryValues)>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn steps_count(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &Field {
        self.states.last().expect("trajectory holds y0")
    }

    /// `y^h(t)`: the piecewise-constant interpolant, `y_i` on `((i−1)h, ih]`.
    pub fn at(&self, t: f64) -> &Field {
        let i = (t / self.h).ceil().max(0.0) as usize;
        &self.states[i.min(self.states.len() - 1)]
    }
}

/// March `n` implicit-Euler steps over `[0, T]`.
pub fn run_flow(problem: &ProblemData, n: usize, cfg: &StepConfig) -> Result<Trajectory> {
    problem.validate()?;
    cfg.validate()?;
    if n == 0 {
        return Err(Error::invalid("step count n must be >= 1"));
    }
    let grid = &problem.grid;
    let h = problem.horizon / n as f64;
    let mut states = Vec::with_capacity(n + 1);
    states.push(problem.y0.clone());
    let mut etas = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for i in 1..=n {
        let t = i as f64 * h;
        let (fbar, gbar) = problem.source_averages(i, h)?;
        let prev = &states[i - 1];
        let w1: Field = prev.iter().zip(&fbar).map(|(y, f)| y + h * f).collect();
        let w2: BoundaryValues = grid
            .trace(prev)
            .iter()
            .zip(&gbar)
            .map(|(y, g)| y + h * g)
            .collect();
        let sol = if problem.obstacle {
            step::solve_step_obstacle(grid, &problem.model, t, h, &w1, &w2, cfg)
        } else {
            step::solve_step_from(grid, &problem.model, t, h, &w1, &w2, cfg, prev)
        }
        .map_err(|e| e.at_step(i))?;
        let weak_residual = if problem.obstacle {
            step::complementarity_residual(grid, h, &sol.u, &sol.eta, &w1, &w2)?
        } else {
            step::weak_form_residual(grid, h, &sol.u, &sol.eta, &w1, &w2)?
        };
        steps.push(StepRecord {
            t,
            iterations: sol.iterations(),
            residual: sol.residual,
            certificate: sol.certificate,
            weak_residual,
            lambda: sol.lambda,
        });
        states.push(sol.u);
        etas.push(sol.eta);
        sources.push((fbar, gbar));
    }
    Ok(Trajectory {
        problem: problem.clone(),
        h,
        times: (0..=n).map(|i| i as f64 * h).collect(),
        states,
        etas,
        sources,
        steps,
    })
}
