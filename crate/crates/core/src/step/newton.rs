//! Damped Newton on the (smoothed) step functional, with an optional
//! projected variant for the constraint `u >= 0`.

use super::objective::{Assembly, Smoothing};
use crate::error::{Error, Result};

pub(crate) struct Outcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Stationarity measure. Unconstrained: `max |g|/W`. Constrained: the
/// complementarity residual `max |min(u, g/W)|`.
pub(crate) fn stationarity(asm: &Assembly, u: &[f64], grad: &[f64], constrained: bool) -> f64 {
    if !constrained {
        return asm.residual(grad);
    }
    u.iter()
        .zip(grad)
        .zip(&asm.weight)
        .map(|((&x, &g), &w)| x.min(g / w).abs())
        .fold(0.0, f64::max)
}

const ARMIJO: f64 = 1e-4;

pub(crate) fn minimize(
    asm: &Assembly,
    sm: Smoothing,
    mut u: Vec<f64>,
    tol: f64,
    max_iterations: usize,
    constrained: bool,
) -> Result<Outcome> {
    if constrained {
        for x in u.iter_mut() {
            *x = x.max(0.0);
        }
    }
    let n = u.len();
    let mut ev = asm.eval(&u, sm, true)?;
    let mut res = stationarity(asm, &u, &ev.grad, constrained);
    for it in 0..max_iterations {
        if res <= tol {
            return Ok(Outcome {
                u,
                iterations: it,
                residual: res,
            });
        }
        let mut hess = ev.hess.take().expect("hessian requested");
        // Bertsekas ε-active set: near-zero nodes pushed outward by the gradient.
        let eps = res.min(1e-3);
        let active: Vec<bool> = (0..n)
            .map(|k| constrained && u[k] <= eps && ev.grad[k] > 0.0)
            .collect();
        for k in 0..n {
            if active[k] {
                hess.decouple(k, asm.weight[k]);
            }
        }
        let rhs: Vec<f64> = ev.grad.iter().map(|g| -g).collect();
        let mut shift = 0.0;
        let dir = loop {
            let mut m = hess.clone();
            if shift > 0.0 {
                for k in 0..n {
                    m.add_diag(k, shift * asm.weight[k]);
                }
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&rhs);
            }
            shift = if shift == 0.0 { 1e-10 } else { shift * 100.0 };
            if shift > 1e10 {
                return Err(Error::NonConverged {
                    what: "Newton factorization".into(),
                    residual: res,
                    iterations: it,
                    step: None,
                });
            }
        };

        // Stiff Yosida stages bottom out in roundoff before `tol`; a Newton
        // increment far below it means the iterate is as good as it gets.
        let size = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let step = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if step <= tol * size && res <= 1e4 * tol {
            return Ok(Outcome {
                u,
                iterations: it,
                residual: res,
            });
        }
        let accepted = if constrained {
            armijo_projected(asm, sm, &u, &dir, &ev.grad, ev.value, res)?
        } else {
            exact_search(asm, sm, &u, &dir, &ev.grad, ev.value)?
        };
        match accepted {
            Some(next) => u = next,
            None => {
                return Err(Error::NonConverged {
                    what: "Newton line search".into(),
                    residual: res,
                    iterations: it,
                    step: None,
                })
            }
        }
        ev = asm.eval(&u, sm, true)?;
        res = stationarity(asm, &u, &ev.grad, constrained);
    }
    if res <= tol {
        return Ok(Outcome {
            u,
            iterations: max_iterations,
            residual: res,
        });
    }
    Err(Error::NonConverged {
        what: "Newton".into(),
        residual: res,
        iterations: max_iterations,
        step: None,
    })
}

fn directional(asm: &Assembly, sm: Smoothing, u: &[f64], dir: &[f64], alpha: f64) -> Result<(f64, f64, Vec<f64>)> {
    let trial: Vec<f64> = u.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
    let e = asm.eval(&trial, sm, false)?;
    let slope = e.grad.iter().zip(dir).map(|(g, d)| g * d).sum();
    Ok((slope, e.value, trial))
}

/// Line minimization of the convex `α ↦ φ(u + α d)` by regula falsi on its
/// derivative. Kinks of the Yosida flux make the Newton model unreliable far
/// from the solution; an exact search keeps the steps long.
fn exact_search(
    asm: &Assembly,
    sm: Smoothing,
    u: &[f64],
    dir: &[f64],
    grad: &[f64],
    f0: f64,
) -> Result<Option<Vec<f64>>> {
    let d0: f64 = grad.iter().zip(dir).map(|(g, d)| g * d).sum();
    if !(d0 < 0.0) {
        return Ok(None);
    }
    let (d1, f1, full) = directional(asm, sm, u, dir, 1.0)?;
    // strong Wolfe at the full step
    let flat = (f1 - f0).abs() <= 1e-12 * (1.0 + f0.abs());
    if (f1 <= f0 + ARMIJO * d0 || flat) && d1.abs() <= 0.5 * d0.abs() {
        return Ok(Some(full));
    }
    let (mut lo, mut dlo) = (0.0, d0);
    let (mut hi, mut dhi) = (1.0, d1);
    let mut best = (f1, full);
    while dhi < 0.0 {
        lo = hi;
        dlo = dhi;
        hi *= 4.0;
        let (d, f, t) = directional(asm, sm, u, dir, hi)?;
        dhi = d;
        if f < best.0 {
            best = (f, t);
        }
        if hi > 1e6 {
            break;
        }
    }
    let mut side = 0;
    for _ in 0..100 {
        if dhi < 0.0 || hi - lo <= 1e-14 * hi {
            break;
        }
        let mut a = (lo * dhi - hi * dlo) / (dhi - dlo);
        if !(a > lo && a < hi) {
            a = 0.5 * (lo + hi);
        }
        let (d, f, t) = directional(asm, sm, u, dir, a)?;
        if f < best.0 {
            best = (f, t);
        }
        if d.abs() <= 1e-3 * d0.abs() {
            break;
        }
        if d < 0.0 {
            lo = a;
            dlo = d;
            if side == -1 {
                dhi *= 0.5;
            }
            side = -1;
        } else {
            hi = a;
            dhi = d;
            if side == 1 {
                dlo *= 0.5;
            }
            side = 1;
        }
    }
    if best.0 <= f0 {
        return Ok(Some(best.1));
    }
    // Within roundoff of the minimum: accept if stationarity improves.
    let e1 = asm.eval(&best.1, sm, false)?;
    if (best.0 - f0).abs() <= 1e-13 * (1.0 + f0.abs()) && asm.residual(&e1.grad) < asm.residual(grad) {
        return Ok(Some(best.1));
    }
    Ok(None)
}

fn armijo_projected(
    asm: &Assembly,
    sm: Smoothing,
    u: &[f64],
    dir: &[f64],
    grad: &[f64],
    f0: f64,
    res: f64,
) -> Result<Option<Vec<f64>>> {
    let mut alpha = 1.0;
    for _ in 0..60 {
        let trial: Vec<f64> = u.iter().zip(dir).map(|(x, d)| (x + alpha * d).max(0.0)).collect();
        let predicted: f64 = (0..u.len()).map(|k| grad[k] * (trial[k] - u[k])).sum();
        let f1 = asm.value(&trial, sm)?;
        if f1 <= f0 + ARMIJO * predicted.min(0.0) {
            return Ok(Some(trial));
        }
        if (f1 - f0).abs() <= 1e-13 * (1.0 + f0.abs()) {
            let e1 = asm.eval(&trial, sm, false)?;
            if stationarity(asm, &trial, &e1.grad, true) < res {
                return Ok(Some(trial));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}
