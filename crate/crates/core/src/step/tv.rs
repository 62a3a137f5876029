//! Total variation steps
//!
//! `min_u ½ Σ W (u − ŵ)² + h ρ Σ_c vol_c |∇_c u|`
//!
//! by the accelerated primal-dual method of Chambolle and Pock, run in the
//! scaled variable `v = √W u` where the data term is 1-strongly convex. The
//! dual variable `q_c` (one vector per cell, `|q_c| <= ρ`) is the flux section.
//!
//! In 1D the primal-dual iterate is periodically polished: the jump set is
//! read off the dual, plateau values are solved exactly, and the result is
//! accepted only if the dual recovered from it is feasible.

use super::objective::Assembly;
use crate::error::{Error, Result};

pub(crate) struct Outcome {
    pub u: Vec<f64>,
    pub q: Vec<[f64; 2]>,
    pub iterations: usize,
    /// Primal-dual gap at the returned pair.
    pub gap: f64,
}

struct Problem<'a> {
    asm: &'a Assembly<'a>,
    rho: f64,
    constrained: bool,
    target: Vec<f64>,
}

impl Problem<'_> {
    fn primal(&self, u: &[f64]) -> f64 {
        let grid = self.asm.grid;
        let mut p = 0.0;
        for (k, &x) in u.iter().enumerate() {
            let d = x - self.target[k];
            p += 0.5 * self.asm.weight[k] * d * d;
        }
        for cell in grid.cells() {
            let g = grid.cell_gradient(cell, u);
            p += self.asm.h * self.rho * cell.volume * (g[0] * g[0] + g[1] * g[1]).sqrt();
        }
        p
    }

    /// `h ∇ᵀ(vol q)` at the nodes.
    fn load(&self, q: &[[f64; 2]]) -> Vec<f64> {
        let mut v = vec![0.0; self.target.len()];
        self.asm.grid.add_gradient_adjoint(q, self.asm.h, &mut v);
        v
    }

    /// Dual value and the primal point it induces.
    fn dual(&self, q: &[[f64; 2]]) -> (f64, Vec<f64>) {
        let v = self.load(q);
        let mut d = 0.0;
        let mut u = vec![0.0; v.len()];
        for k in 0..v.len() {
            let w = self.asm.weight[k];
            let mut x = self.target[k] - v[k] / w;
            if self.constrained {
                x = x.max(0.0);
            }
            let e = x - self.target[k];
            d += 0.5 * w * e * e + v[k] * x;
            u[k] = x;
        }
        (d, u)
    }
}

pub(crate) fn solve(
    asm: &Assembly,
    rho: f64,
    constrained: bool,
    start: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<Outcome> {
    let grid = asm.grid;
    let dim = grid.dim();
    let n = start.len();
    let pb = Problem {
        asm,
        rho,
        constrained,
        target: asm.target(),
    };
    let sqrt_w: Vec<f64> = asm.weight.iter().map(|w| w.sqrt()).collect();

    // Schur bound ‖K‖² <= (max row sum)(max column sum) for K = h vol ∇ W^{-1/2}.
    let mut col = vec![0.0; n];
    let mut row_max: f64 = 0.0;
    for cell in grid.cells() {
        for d in cell.axes.iter().take(dim) {
            let a = asm.h * cell.volume * d.inv_spacing;
            let (p, m) = (a / sqrt_w[d.plus], a / sqrt_w[d.minus]);
            col[d.plus] += p;
            col[d.minus] += m;
            row_max = row_max.max(p + m);
        }
    }
    let norm = (row_max * col.iter().cloned().fold(0.0, f64::max)).sqrt().max(1e-300);

    let scale: f64 = asm.weight.iter().sum::<f64>()
        * (1.0 + pb.target.iter().fold(0.0f64, |m, x| m.max(x.abs())).powi(2));
    let gap_tol = tol * scale;

    let mut v: Vec<f64> = start.iter().zip(&sqrt_w).map(|(u, s)| u * s).collect();
    let c: Vec<f64> = pb.target.iter().zip(&sqrt_w).map(|(u, s)| u * s).collect();
    let mut v_bar = v.clone();
    let mut q = vec![[0.0; 2]; grid.cell_count()];
    let (mut tau, mut sigma) = (1.0 / norm, 1.0 / norm);
    let mut best: Option<Outcome> = None;
    let mut u_bar = vec![0.0; n];
    let check_every = 50;

    for it in 1..=max_iterations {
        // dual ascent and projection onto |q_c| <= ρ
        for k in 0..n {
            u_bar[k] = v_bar[k] / sqrt_w[k];
        }
        for (cell, qc) in grid.cells().iter().zip(q.iter_mut()) {
            let g = grid.cell_gradient(cell, &u_bar);
            let s = sigma * asm.h * cell.volume;
            let mut y = [qc[0] + s * g[0], qc[1] + s * g[1]];
            let m = (y[0] * y[0] + y[1] * y[1]).sqrt();
            if m > rho {
                y = [y[0] * rho / m, y[1] * rho / m];
                // rounding may leave |y| a few ulps above ρ, where j* = +∞
                while (y[0] * y[0] + y[1] * y[1]).sqrt() > rho {
                    y = [y[0] * (1.0 - f64::EPSILON), y[1] * (1.0 - f64::EPSILON)];
                }
            }
            *qc = y;
        }
        // primal descent with the prox of ½|v − c|²
        let load = pb.load(&q);
        let theta = 1.0 / (1.0 + 2.0 * tau).sqrt();
        for k in 0..n {
            let x = v[k] - tau * load[k] / sqrt_w[k];
            let mut next = (x + tau * c[k]) / (1.0 + tau);
            if constrained {
                next = next.max(0.0);
            }
            v_bar[k] = next + theta * (next - v[k]);
            v[k] = next;
        }
        tau *= theta;
        sigma /= theta;

        if it % check_every == 0 || it == max_iterations {
            let u: Vec<f64> = v.iter().zip(&sqrt_w).map(|(x, s)| x / s).collect();
            let (d, u_dual) = pb.dual(&q);
            let (p_u, p_dual) = (pb.primal(&u), pb.primal(&u_dual));
            let (p, u) = if p_dual < p_u { (p_dual, u_dual) } else { (p_u, u) };
            let gap = (p - d).max(0.0);
            if dim == 1 && !constrained && it % (4 * check_every) == 0 {
                if let Some(exact) = polish(&pb, &q, &u) {
                    return Ok(Outcome {
                        iterations: it,
                        ..exact
                    });
                }
            }
            if best.as_ref().is_none_or(|b| gap < b.gap) {
                best = Some(Outcome {
                    u,
                    q: q.clone(),
                    iterations: it,
                    gap,
                });
            }
            if gap <= gap_tol {
                let mut out = best.take().expect("just stored");
                out.iterations = it;
                return Ok(out);
            }
        }
    }
    let gap = best.as_ref().map_or(f64::INFINITY, |b| b.gap);
    Err(Error::NonConverged {
        what: "primal-dual TV".into(),
        residual: gap,
        iterations: max_iterations,
        step: None,
    })
}

/// Exact 1D solution on the jump set suggested by `q` (or by `u`).
fn polish(pb: &Problem, q: &[[f64; 2]], u: &[f64]) -> Option<Outcome> {
    let rho = pb.rho;
    let from_dual: Vec<f64> = q
        .iter()
        .map(|qc| {
            if qc[0].abs() >= rho * (1.0 - 1e-9) {
                qc[0].signum()
            } else {
                0.0
            }
        })
        .collect();
    let spread = u.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let from_primal: Vec<f64> = (0..q.len())
        .map(|c| {
            let d = u[c + 1] - u[c];
            if d.abs() > 1e-9 * spread {
                d.signum()
            } else {
                0.0
            }
        })
        .collect();
    plateau_solve(pb, &from_dual).or_else(|| plateau_solve(pb, &from_primal))
}

fn plateau_solve(pb: &Problem, signs: &[f64]) -> Option<Outcome> {
    let asm = pb.asm;
    let cells = asm.grid.cells();
    let n = asm.weight.len();
    let h = asm.h;
    let rho = pb.rho;
    // coupling of cell c into its two nodes
    let a: Vec<f64> = cells.iter().map(|c| h * c.volume * c.axes[0].inv_spacing).collect();

    let mut u = vec![0.0; n];
    let mut first = 0;
    while first < n {
        let mut last = first;
        while last < n - 1 && signs[last] == 0.0 {
            last += 1;
        }
        let mut num: f64 = asm.rhs[first..=last].iter().sum();
        let den: f64 = asm.weight[first..=last].iter().sum();
        if first > 0 {
            num -= a[first - 1] * rho * signs[first - 1];
        }
        if last < n - 1 {
            num += a[last] * rho * signs[last];
        }
        let value = num / den;
        u[first..=last].fill(value);
        first = last + 1;
    }

    // Recover q from the nodal equations, left to right.
    let mut q = vec![[0.0; 2]; cells.len()];
    let mut carry = 0.0;
    let scale = asm.rhs.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1e-300;
    for c in 0..cells.len() {
        carry += asm.weight[c] * u[c] - asm.rhs[c];
        let qc = carry / a[c];
        if qc.abs() > rho * (1.0 + 1e-10) {
            return None;
        }
        if signs[c] != 0.0 && signs[c] * (u[c + 1] - u[c]) < 0.0 {
            return None;
        }
        q[c] = [qc.clamp(-rho, rho), 0.0];
        carry = a[c] * qc;
    }
    let closing = carry + asm.weight[n - 1] * u[n - 1] - asm.rhs[n - 1];
    if closing.abs() > 1e-10 * scale {
        return None;
    }
    let (d, _) = pb.dual(&q);
    let gap = (pb.primal(&u) - d).max(0.0);
    Some(Outcome {
        u,
        q,
        iterations: 0,
        gap,
    })
}
