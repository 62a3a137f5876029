//! Gradient-only optimizers: L-BFGS and (projected) FISTA, both in the
//! metric of the nodal weights `W`.

use std::collections::VecDeque;

use super::newton::{stationarity, Outcome};
use super::objective::{Assembly, Smoothing};
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonconverged(what: &str, residual: f64, iterations: usize) -> Error {
    Error::NonConverged {
        what: what.into(),
        residual,
        iterations,
        step: None,
    }
}

/// Limited-memory BFGS with Armijo backtracking, initial Hessian `diag(W)`.
pub(crate) fn lbfgs(
    asm: &Assembly,
    sm: Smoothing,
    mut u: Vec<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<Outcome> {
    const MEMORY: usize = 12;
    let n = u.len();
    let mut ev = asm.eval(&u, sm, false)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for it in 0..max_iterations {
        let res = asm.residual(&ev.grad);
        if res <= tol {
            return Ok(Outcome {
                u,
                iterations: it,
                residual: res,
            });
        }
        // two-loop recursion
        let mut q = ev.grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for k in 0..n {
                q[k] -= a * y[k];
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| {
                let yy: f64 = (0..n).map(|k| y[k] * y[k] / asm.weight[k]).sum();
                dot(s, y) / yy
            })
            .unwrap_or(1.0);
        for k in 0..n {
            q[k] *= gamma / asm.weight[k];
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for k in 0..n {
                q[k] += s[k] * (a - b);
            }
        }
        let dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let slope = dot(&ev.grad, &dir);
        let dir = if slope < 0.0 {
            dir
        } else {
            history.clear();
            ev.grad.iter().zip(&asm.weight).map(|(g, w)| -g / w).collect()
        };
        let slope = dot(&ev.grad, &dir);

        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n).map(|k| u[k] + alpha * dir[k]).collect();
            let e1 = asm.eval(&trial, sm, false)?;
            let roundoff = (e1.value - ev.value).abs() <= 1e-13 * (1.0 + ev.value.abs())
                && asm.residual(&e1.grad) < res;
            if e1.value <= ev.value + 1e-4 * alpha * slope || roundoff {
                next = Some((trial, e1));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, e1)) = next else {
            return Err(nonconverged("L-BFGS line search", res, it));
        };
        let s: Vec<f64> = (0..n).map(|k| trial[k] - u[k]).collect();
        let y: Vec<f64> = (0..n).map(|k| e1.grad[k] - ev.grad[k]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        u = trial;
        ev = e1;
    }
    Err(nonconverged("L-BFGS", asm.residual(&ev.grad), max_iterations))
}

/// FISTA with backtracking on the Lipschitz constant, in the `W` metric.
/// With `constrained`, the proximal map is the projection onto `u >= 0`.
pub(crate) fn fista(
    asm: &Assembly,
    sm: Smoothing,
    u0: Vec<f64>,
    tol: f64,
    max_iterations: usize,
    constrained: bool,
) -> Result<Outcome> {
    let n = u0.len();
    let project = |v: f64| if constrained { v.max(0.0) } else { v };
    let mut u: Vec<f64> = u0.into_iter().map(project).collect();
    let mut y = u.clone();
    let mut t: f64 = 1.0;
    let mut lip = 1.0;
    let mut last_value = f64::INFINITY;
    for it in 0..max_iterations {
        let ey = asm.eval(&y, sm, false)?;
        let (next, e_next) = loop {
            let cand: Vec<f64> = (0..n)
                .map(|k| project(y[k] - ey.grad[k] / (lip * asm.weight[k])))
                .collect();
            let e = asm.eval(&cand, sm, false)?;
            let mut model = ey.value;
            for k in 0..n {
                let d = cand[k] - y[k];
                model += ey.grad[k] * d + 0.5 * lip * asm.weight[k] * d * d;
            }
            if e.value <= model + 1e-12 * (1.0 + model.abs()) {
                break (cand, e);
            }
            lip *= 2.0;
            if lip > 1e30 {
                return Err(nonconverged("FISTA backtracking", f64::NAN, it));
            }
        };
        let res = stationarity(asm, &next, &e_next.grad, constrained);
        if res <= tol {
            return Ok(Outcome {
                u: next,
                iterations: it + 1,
                residual: res,
            });
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // adaptive restart when the objective goes up
        let momentum = if e_next.value > last_value {
            0.0
        } else {
            (t - 1.0) / t_next
        };
        for k in 0..n {
            y[k] = project(next[k] + momentum * (next[k] - u[k]));
        }
        last_value = e_next.value;
        u = next;
        t = if momentum == 0.0 { 1.0 } else { t_next };
        lip = (lip * 0.9).max(1e-3);
    }
    let e = asm.eval(&u, sm, false)?;
    Err(nonconverged(
        "FISTA",
        stationarity(asm, &u, &e.grad, constrained),
        max_iterations,
    ))
}
