//! One implicit-Euler step: minimize
//!
//! `φ(u) = ½∫_Ω u² + h∫_Ω j(t, x, ∇u) + ½∫_Γ u² − ∫_Ω w1 u − ∫_Γ w2 u`.
//!
//! Smooth laws go straight to Newton. Laws with kinks are regularized,
//! `j → j_λ` plus `λ∫|∇u|²`, and solved along a decreasing λ schedule with
//! warm starts; the flux section is `η = β_λ(∇u)` at the last λ. Total
//! variation steps are solved by a primal-dual method instead.

mod first_order;
mod newton;
pub(crate) mod objective;
mod tv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{FluxKind, FluxModel};
use crate::grid::{Field, GradientField, Grid};
use objective::{Assembly, Smoothing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Newton for smooth laws, Newton with λ-continuation for kinked laws,
    /// primal-dual for total variation.
    #[default]
    Auto,
    Newton,
    QuasiNewton,
    ProximalGradient,
    PrimalDual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    /// Stationarity tolerance, `max |∂φ/∂u_n| / W_n`.
    pub tolerance: f64,
    /// Upper bound accepted for the Fenchel certificate.
    pub certificate_tolerance: f64,
    pub lambda0: f64,
    pub decay: f64,
    pub lambda_min: f64,
    /// Iteration cap per Newton or quasi-Newton solve.
    pub max_iterations: usize,
    /// Iteration cap for first-order methods.
    pub max_first_order_iterations: usize,
    pub optimizer: Optimizer,
    /// Include `λ∫|∇u|²` in the regularized functional.
    pub viscosity: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            tolerance: 1e-10,
            certificate_tolerance: 1e-5,
            lambda0: 1.0,
            decay: 0.25,
            lambda_min: 1e-6,
            max_iterations: 200,
            max_first_order_iterations: 400_000,
            optimizer: Optimizer::Auto,
            viscosity: true,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.tolerance > 0.0) {
            problems.push(format!("tolerance must be > 0, got {}", self.tolerance));
        }
        if !(self.certificate_tolerance > 0.0) {
            problems.push(format!(
                "certificate_tolerance must be > 0, got {}",
                self.certificate_tolerance
            ));
        }
        if !(self.lambda_min > 0.0 && self.lambda0 > self.lambda_min && self.lambda0.is_finite()) {
            problems.push(format!(
                "need lambda0 > lambda_min > 0, got lambda0={} lambda_min={}",
                self.lambda0, self.lambda_min
            ));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            problems.push(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if self.max_iterations == 0 || self.max_first_order_iterations == 0 {
            problems.push("iteration caps must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::BadConfig(problems.join("; ")))
        }
    }

    /// The continuation schedule `λ0, λ0·decay, …`, ending exactly at `λ_min`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = vec![];
        let mut l = self.lambda0;
        while l > self.lambda_min * (1.0 + 1e-12) {
            out.push(l);
            l *= self.decay;
        }
        out.push(self.lambda_min);
        out
    }
}

/// One solve along the continuation path (or the single solve).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageLog {
    pub lambda: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Unregularized `φ(u)` at the stage's solution.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSolution {
    pub u: Field,
    /// Flux section per cell.
    pub eta: GradientField,
    /// `φ(u)` with the exact potential.
    pub objective: f64,
    /// Final stationarity residual of the solved functional (primal-dual gap
    /// for total variation).
    pub residual: f64,
    pub stages: Vec<StageLog>,
    /// `Σ_c vol_c [j(∇u) + j*(η) − η·∇u]`
    pub certificate: f64,
    /// Smallest per-cell Fenchel gap.
    pub min_cell_gap: f64,
    /// Final regularization parameter, if any.
    pub lambda: Option<f64>,
}

impl StepSolution {
    pub fn iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

fn check_inputs(grid: &Grid, model: &FluxModel, h: f64, w1: &[f64], w2: &[f64]) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step size h must be > 0, got {h}")));
    }
    if model.dim() != grid.dim() {
        return Err(Error::Shape(format!(
            "model dimension {} does not match grid dimension {}",
            model.dim(),
            grid.dim()
        )));
    }
    grid.check_field(w1)?;
    grid.check_boundary(w2)
}

/// `φ(u)` with the exact potential.
pub fn step_objective(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    w1: &[f64],
    w2: &[f64],
    u: &[f64],
) -> Result<f64> {
    check_inputs(grid, model, h, w1, w2)?;
    grid.check_field(u)?;
    Assembly::new(grid, model, t, h, w1, w2)?.value(u, Smoothing::Exact)
}

/// `φ_λ(u)`: `j_λ` in place of `j`, plus `λ∫|∇u|²`.
#[allow(clippy::too_many_arguments)]
pub fn regularized_objective(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    lambda: f64,
    w1: &[f64],
    w2: &[f64],
    u: &[f64],
) -> Result<f64> {
    Ok(regularized_parts(grid, model, t, h, lambda, w1, w2, u)?.0)
}

/// Gradient of [`regularized_objective`] with respect to the nodal values.
#[allow(clippy::too_many_arguments)]
pub fn regularized_gradient(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    lambda: f64,
    w1: &[f64],
    w2: &[f64],
    u: &[f64],
) -> Result<Field> {
    Ok(regularized_parts(grid, model, t, h, lambda, w1, w2, u)?.1)
}

#[allow(clippy::too_many_arguments)]
fn regularized_parts(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    lambda: f64,
    w1: &[f64],
    w2: &[f64],
    u: &[f64],
) -> Result<(f64, Field)> {
    check_inputs(grid, model, h, w1, w2)?;
    grid.check_field(u)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let asm = Assembly::new(grid, model, t, h, w1, w2)?;
    let ev = asm.eval(
        u,
        Smoothing::Moreau {
            lambda,
            viscosity: true,
        },
        false,
    )?;
    Ok((ev.value, ev.grad))
}

/// Nodal residual of the discrete weak form
/// `∫_Ω (uψ + h η·∇ψ) + ∫_Γ uψ = ∫_Ω w1 ψ + ∫_Γ w2 ψ` for `ψ = e_k`, scaled
/// by the nodal weight; returns the maximum over `k`.
pub fn weak_form_residual(
    grid: &Grid,
    h: f64,
    u: &[f64],
    eta: &[[f64; 2]],
    w1: &[f64],
    w2: &[f64],
) -> Result<f64> {
    Ok(weak_form_vector(grid, h, u, eta, w1, w2)?
        .iter()
        .zip(grid.total_weights())
        .map(|(r, w)| (r / w).abs())
        .fold(0.0, f64::max))
}

/// The unscaled nodal residuals of [`weak_form_residual`].
pub fn weak_form_vector(
    grid: &Grid,
    h: f64,
    u: &[f64],
    eta: &[[f64; 2]],
    w1: &[f64],
    w2: &[f64],
) -> Result<Field> {
    grid.check_field(u)?;
    grid.check_field(w1)?;
    grid.check_boundary(w2)?;
    if eta.len() != grid.cell_count() {
        return Err(Error::Shape(format!(
            "flux section has {} cells, grid has {}",
            eta.len(),
            grid.cell_count()
        )));
    }
    let mut r: Vec<f64> = (0..u.len())
        .map(|k| grid.node_mass()[k] * (u[k] - w1[k]))
        .collect();
    for ((&k, &s), &z) in grid
        .boundary_nodes()
        .iter()
        .zip(grid.boundary_weights())
        .zip(w2)
    {
        r[k] += s * (u[k] - z);
    }
    grid.add_gradient_adjoint(eta, h, &mut r);
    Ok(r)
}

/// `Σ vol [j(∇u) + j*(η) − η·∇u]` and the smallest per-cell term.
fn certificate(asm: &Assembly, u: &[f64], eta: &[[f64; 2]]) -> (f64, f64) {
    let grid = asm.grid;
    let mut total = 0.0;
    let mut min_gap = f64::INFINITY;
    for ((cell, law), e) in grid.cells().iter().zip(&asm.laws).zip(eta) {
        let r = grid.cell_gradient(cell, u);
        let gap = law.value(r) + law.conjugate(*e) - (e[0] * r[0] + e[1] * r[1]);
        total += cell.volume * gap;
        min_gap = min_gap.min(gap);
    }
    (total, min_gap)
}

enum Route {
    Direct,
    Continuation,
    PrimalDual(f64),
}

fn route(model: &FluxModel, cfg: &StepConfig) -> Result<Route> {
    let tv = match model.kind() {
        FluxKind::TotalVariation { rho } => Some(*rho),
        _ => None,
    };
    let kinked = !model.is_smooth() || model.exponent() < 2.0;
    Ok(match (cfg.optimizer, tv) {
        (Optimizer::Auto | Optimizer::PrimalDual, Some(rho)) => Route::PrimalDual(rho),
        (Optimizer::PrimalDual, None) => {
            return Err(Error::BadConfig(
                "the primal-dual optimizer applies to the total variation law only".into(),
            ))
        }
        _ if kinked => Route::Continuation,
        _ => Route::Direct,
    })
}

fn inner(
    asm: &Assembly,
    sm: Smoothing,
    u0: Vec<f64>,
    tol: f64,
    cfg: &StepConfig,
    constrained: bool,
) -> Result<newton::Outcome> {
    match cfg.optimizer {
        Optimizer::QuasiNewton if !constrained => {
            first_order::lbfgs(asm, sm, u0, tol, cfg.max_first_order_iterations)
        }
        Optimizer::ProximalGradient | Optimizer::QuasiNewton => {
            first_order::fista(asm, sm, u0, tol, cfg.max_first_order_iterations, constrained)
        }
        _ => newton::minimize(asm, sm, u0, tol, cfg.max_iterations, constrained),
    }
}

#[allow(clippy::too_many_arguments)]
fn solve(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    w1: &[f64],
    w2: &[f64],
    cfg: &StepConfig,
    start: Option<&[f64]>,
    constrained: bool,
) -> Result<StepSolution> {
    cfg.validate()?;
    check_inputs(grid, model, h, w1, w2)?;
    let asm = Assembly::new(grid, model, t, h, w1, w2)?;
    let u0 = match start {
        Some(s) => {
            grid.check_field(s)?;
            s.to_vec()
        }
        None => asm.target(),
    };
    let mut stages = Vec::new();
    let (u, eta, residual, lambda) = match route(model, cfg)? {
        Route::PrimalDual(rho) => {
            let out = tv::solve(&asm, rho, constrained, &u0, cfg.tolerance, cfg.max_first_order_iterations)?;
            stages.push(StageLog {
                lambda: None,
                iterations: out.iterations,
                residual: out.gap,
                objective: asm.value(&out.u, Smoothing::Exact)?,
            });
            (out.u, out.q, out.gap, None)
        }
        Route::Direct => {
            let out = inner(&asm, Smoothing::Exact, u0, cfg.tolerance, cfg, constrained)?;
            stages.push(StageLog {
                lambda: None,
                iterations: out.iterations,
                residual: out.residual,
                objective: asm.value(&out.u, Smoothing::Exact)?,
            });
            let eta = grid
                .cells()
                .iter()
                .zip(&asm.laws)
                .map(|(c, law)| law.select(grid.cell_gradient(c, &out.u)))
                .collect();
            (out.u, eta, out.residual, None)
        }
        Route::Continuation => {
            let mut u = u0;
            let mut residual = f64::NAN;
            let schedule = cfg.schedule();
            let last = *schedule.last().expect("schedule is never empty");
            for &lambda in &schedule {
                let sm = Smoothing::Moreau {
                    lambda,
                    viscosity: cfg.viscosity,
                };
                // intermediate stages only need to warm-start the next one
                let tol = if lambda == last {
                    cfg.tolerance
                } else {
                    cfg.tolerance.max(1e-8)
                };
                let out = inner(&asm, sm, u, tol, cfg, constrained).map_err(|e| match e {
                    Error::NonConverged {
                        what,
                        residual,
                        iterations,
                        step,
                    } => Error::NonConverged {
                        what: format!("{what} at lambda={lambda:e}"),
                        residual,
                        iterations,
                        step,
                    },
                    other => other,
                })?;
                stages.push(StageLog {
                    lambda: Some(lambda),
                    iterations: out.iterations,
                    residual: out.residual,
                    objective: asm.value(&out.u, Smoothing::Exact)?,
                });
                u = out.u;
                residual = out.residual;
            }
            let eta = grid
                .cells()
                .iter()
                .zip(&asm.laws)
                .map(|(c, law)| {
                    law.yosida(last, grid.cell_gradient(c, &u))
                        .map(|(beta, _, _)| beta)
                })
                .collect::<Result<Vec<_>>>()?;
            (u, eta, residual, Some(last))
        }
    };
    let (cert, min_gap) = certificate(&asm, &u, &eta);
    if !(cert <= cfg.certificate_tolerance) {
        return Err(Error::NonConverged {
            what: "Fenchel certificate".into(),
            residual: cert,
            iterations: stages.iter().map(|s| s.iterations).sum(),
            step: None,
        });
    }
    Ok(StepSolution {
        objective: asm.value(&u, Smoothing::Exact)?,
        u,
        eta,
        residual,
        stages,
        certificate: cert,
        min_cell_gap: min_gap,
        lambda,
    })
}

/// Minimize `φ` (or its regularization, for kinked laws) at time `t`.
pub fn solve_step(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    w1: &[f64],
    w2: &[f64],
    cfg: &StepConfig,
) -> Result<StepSolution> {
    solve(grid, model, t, h, w1, w2, cfg, None, false)
}

/// [`solve_step`] started from a given field instead of `b / W`.
#[allow(clippy::too_many_arguments)]
pub fn solve_step_from(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    w1: &[f64],
    w2: &[f64],
    cfg: &StepConfig,
    start: &[f64],
) -> Result<StepSolution> {
    solve(grid, model, t, h, w1, w2, cfg, Some(start), false)
}

/// Minimize `φ` over `{u >= 0}` by projected Newton (primal-dual for total
/// variation).
pub fn solve_step_obstacle(
    grid: &Grid,
    model: &FluxModel,
    t: f64,
    h: f64,
    w1: &[f64],
    w2: &[f64],
    cfg: &StepConfig,
) -> Result<StepSolution> {
    solve(grid, model, t, h, w1, w2, cfg, None, true)
}

/// `argmin ρh Σ vol|∇u| + ½∫_Ω (u − prev)² + ½∫_Γ (u − prev)²`.
pub fn tv_step(grid: &Grid, rho: f64, h: f64, prev: &[f64], cfg: &StepConfig) -> Result<StepSolution> {
    grid.check_field(prev)?;
    let model = FluxModel::total_variation(grid.dim(), rho)?;
    let mut cfg = cfg.clone();
    cfg.optimizer = Optimizer::PrimalDual;
    let trace = grid.trace(prev);
    solve(grid, &model, 0.0, h, prev, &trace, &cfg, Some(prev), false)
}

/// Complementarity residual `max_n |min(u_n, (∂φ/∂u_n) / W_n)|` of the
/// obstacle problem, with the flux section standing in for `∂j`.
pub fn complementarity_residual(
    grid: &Grid,
    h: f64,
    u: &[f64],
    eta: &[[f64; 2]],
    w1: &[f64],
    w2: &[f64],
) -> Result<f64> {
    let r = weak_form_vector(grid, h, u, eta, w1, w2)?;
    Ok(u.iter()
        .zip(&r)
        .zip(grid.total_weights())
        .map(|((&x, &g), w)| x.min(g / w).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests;
