//! Assembly of the step functional, its gradient and its banded Hessian.

use crate::error::Result;
use crate::flux::{FluxModel, Matrix, Pointwise, Vector};
use crate::grid::Grid;
use crate::linalg::SymBand;

/// How the flux potential enters a cell term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Smoothing {
    Exact,
    /// `j_λ` in place of `j`, plus `λ|∇u|²` when `viscosity` is set.
    Moreau { lambda: f64, viscosity: bool },
}

/// One step problem with coefficients frozen at `t` and the cell centroids:
///
/// `φ(u) = ½ Σ W u² − Σ b u + h Σ_c vol_c j(∇_c u)`
///
/// with `W = m + s` (lumped mass plus surface weight) and `b = m w1 + s w2`.
pub(crate) struct Assembly<'a> {
    pub grid: &'a Grid,
    pub laws: Vec<Pointwise<'a>>,
    pub h: f64,
    pub weight: Vec<f64>,
    pub rhs: Vec<f64>,
}

pub(crate) struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Option<SymBand>,
}

impl<'a> Assembly<'a> {
    pub fn new(
        grid: &'a Grid,
        model: &'a FluxModel,
        t: f64,
        h: f64,
        w1: &[f64],
        w2: &[f64],
    ) -> Result<Self> {
        let laws = grid
            .cells()
            .iter()
            .map(|c| model.at(t, &c.centroid[..grid.dim()]))
            .collect::<Result<Vec<_>>>()?;
        let weight = grid.total_weights();
        let mut rhs: Vec<f64> = w1.iter().zip(grid.node_mass()).map(|(w, m)| w * m).collect();
        for ((&k, &s), &z) in grid
            .boundary_nodes()
            .iter()
            .zip(grid.boundary_weights())
            .zip(w2)
        {
            rhs[k] += s * z;
        }
        Ok(Assembly {
            grid,
            laws,
            h,
            weight,
            rhs,
        })
    }

    /// Data term minimizer `ŵ = b / W`, the natural starting point.
    pub fn target(&self) -> Vec<f64> {
        self.rhs.iter().zip(&self.weight).map(|(b, w)| b / w).collect()
    }

    /// Cell potential `h j(r)` (or its smoothing) with flux and Hessian.
    fn cell(&self, c: usize, r: Vector, sm: Smoothing, hess: bool) -> Result<(f64, Vector, Matrix)> {
        let law = &self.laws[c];
        let h = self.h;
        match sm {
            Smoothing::Exact => {
                let v = law.value(r);
                let f = law.select(r);
                let m = if hess { law.hessian(r) } else { [[0.0; 2]; 2] };
                Ok((
                    h * v,
                    [h * f[0], h * f[1]],
                    [[h * m[0][0], h * m[0][1]], [h * m[1][0], h * m[1][1]]],
                ))
            }
            Smoothing::Moreau { lambda, viscosity } => {
                let (beta, jac, env) = law.yosida(lambda, r)?;
                let nu = if viscosity { lambda } else { 0.0 };
                let mut m = [[h * jac[0][0], h * jac[0][1]], [h * jac[1][0], h * jac[1][1]]];
                for (a, row) in m.iter_mut().enumerate().take(self.grid.dim()) {
                    row[a] += 2.0 * nu;
                }
                Ok((
                    h * env + nu * (r[0] * r[0] + r[1] * r[1]),
                    [h * beta[0] + 2.0 * nu * r[0], h * beta[1] + 2.0 * nu * r[1]],
                    m,
                ))
            }
        }
    }

    pub fn value(&self, u: &[f64], sm: Smoothing) -> Result<f64> {
        let mut v = 0.0;
        for (n, &x) in u.iter().enumerate() {
            v += 0.5 * self.weight[n] * x * x - self.rhs[n] * x;
        }
        for (c, cell) in self.grid.cells().iter().enumerate() {
            let r = self.grid.cell_gradient(cell, u);
            v += cell.volume * self.cell(c, r, sm, false)?.0;
        }
        Ok(v)
    }

    pub fn eval(&self, u: &[f64], sm: Smoothing, with_hessian: bool) -> Result<Eval> {
        let grid = self.grid;
        let dim = grid.dim();
        let mut value = 0.0;
        let mut grad = vec![0.0; u.len()];
        for (n, &x) in u.iter().enumerate() {
            value += 0.5 * self.weight[n] * x * x - self.rhs[n] * x;
            grad[n] = self.weight[n] * x - self.rhs[n];
        }
        let mut hess = with_hessian.then(|| {
            let mut m = SymBand::zeros(u.len(), grid.bandwidth());
            for (n, &w) in self.weight.iter().enumerate() {
                m.add_diag(n, w);
            }
            m
        });
        for (c, cell) in grid.cells().iter().enumerate() {
            let r = grid.cell_gradient(cell, u);
            let (v, f, m) = self.cell(c, r, sm, with_hessian)?;
            let vol = cell.volume;
            value += vol * v;
            for a in 0..dim {
                let d = &cell.axes[a];
                let g = vol * f[a] * d.inv_spacing;
                grad[d.plus] += g;
                grad[d.minus] -= g;
            }
            if let Some(hm) = hess.as_mut() {
                for a in 0..dim {
                    let da = &cell.axes[a];
                    for b in 0..dim {
                        let db = &cell.axes[b];
                        let k = vol * m[a][b] * da.inv_spacing * db.inv_spacing;
                        if k == 0.0 {
                            continue;
                        }
                        // (e_plus_a − e_minus_a)(e_plus_b − e_minus_b)ᵀ; the
                        // band stores the lower triangle, each entry once
                        for (i, si) in [(da.plus, 1.0), (da.minus, -1.0)] {
                            for (j, sj) in [(db.plus, 1.0), (db.minus, -1.0)] {
                                if i >= j {
                                    hm.add(i, j, si * sj * k);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Eval { value, grad, hess })
    }

    /// `max_n |g_n| / W_n`
    pub fn residual(&self, grad: &[f64]) -> f64 {
        grad.iter()
            .zip(&self.weight)
            .map(|(g, w)| (g / w).abs())
            .fold(0.0, f64::max)
    }
}
