//! Brute-force references for testing. Nothing here calls the step solvers;
//! the grid is shared only for its quadrature weights and difference stencils.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub oracle: String,
    /// FNV-1a hash of the inputs' bit patterns, hex encoded.
    pub inputs_digest: String,
    pub reference: Vec<f64>,
    pub actual: Vec<f64>,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn compare(oracle: &str, inputs: &[&[f64]], reference: Vec<f64>, actual: Vec<f64>, tolerance: f64) -> Self {
        let max_error = if reference.len() == actual.len() {
            reference
                .iter()
                .zip(&actual)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        OracleReport {
            oracle: oracle.to_string(),
            inputs_digest: digest(inputs),
            reference,
            actual,
            max_error,
            tolerance,
            pass: max_error <= tolerance,
        }
    }
}

pub fn digest(inputs: &[&[f64]]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for slice in inputs {
        for v in slice.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

const DENSE_LIMIT: usize = 200;

/// Stiffness matrix `K` with `uᵀKu = Σ_c vol_c |∇_c u|²`.
fn dense_stiffness(grid: &Grid) -> DMatrix<f64> {
    let n = grid.node_count();
    let mut k = DMatrix::zeros(n, n);
    for cell in grid.cells() {
        for d in cell.axes.iter().take(grid.dim()) {
            let c = cell.volume * d.inv_spacing * d.inv_spacing;
            k[(d.plus, d.plus)] += c;
            k[(d.minus, d.minus)] += c;
            k[(d.plus, d.minus)] -= c;
            k[(d.minus, d.plus)] -= c;
        }
    }
    k
}

fn dense_data(grid: &Grid, w1: &[f64], w2: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = grid.node_count();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for k in 0..n {
        a[(k, k)] += grid.node_mass()[k];
        b[k] += grid.node_mass()[k] * w1[k];
    }
    for (slot, &k) in grid.boundary_nodes().iter().enumerate() {
        let s = grid.boundary_weights()[slot];
        a[(k, k)] += s;
        b[k] += s * w2[slot];
    }
    (a, b)
}

fn check_small(grid: &Grid) -> Result<()> {
    if grid.node_count() > DENSE_LIMIT {
        return Err(Error::invalid(format!(
            "dense oracles accept at most {DENSE_LIMIT} nodes, got {}",
            grid.node_count()
        )));
    }
    Ok(())
}

/// Quadratic-law step `(M + S + hK) u = M w1 + S w2`, by dense Cholesky.
pub fn dense_linear_step(grid: &Grid, h: f64, w1: &[f64], w2: &[f64]) -> Result<Field> {
    check_small(grid)?;
    grid.check_field(w1)?;
    grid.check_boundary(w2)?;
    let (mut a, b) = dense_data(grid, w1, w2);
    a += dense_stiffness(grid) * h;
    let chol = a.cholesky().expect("M + S + hK is positive definite for h > 0");
    Ok(chol.solve(&b).iter().copied().collect())
}

/// Quadratic-law equilibrium `K u = M f + S g` under `Σ W u = 0`, by a dense
/// saddle-point LU solve.
pub fn dense_linear_steady_state(grid: &Grid, f: &[f64], g: &[f64]) -> Result<Field> {
    check_small(grid)?;
    let n = grid.node_count();
    let (_, b) = dense_data(grid, f, g);
    let k = dense_stiffness(grid);
    let w = grid.total_weights();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&k);
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        a[(i, n)] = w[i];
        a[(n, i)] = w[i];
        rhs[i] = b[i];
    }
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("singular steady-state system"))?;
    Ok(x.iter().take(n).copied().collect())
}

/// Argmin of `|r − s|²/(2λ) + j(s)` by golden-section search.
pub fn prox_1d(j: impl Fn(f64) -> f64, lambda: f64, r: f64) -> f64 {
    let f = |s: f64| (r - s) * (r - s) / (2.0 * lambda) + j(s);
    let (mut a, mut b) = (r.min(0.0) - 1.0, r.max(0.0) + 1.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 * (1.0 + r.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let coarse = 0.5 * (a + b);
    // Values alone pin a smooth minimum only to about √eps. Refine by
    // bisecting on the sign of a symmetric difference; keep the coarse point
    // if the minimum sits on a kink, where the refinement drifts.
    let delta = 1e-5 * (1.0 + r.abs());
    let (mut lo, mut hi) = (coarse - 1e-6 * (1.0 + r.abs()), coarse + 1e-6 * (1.0 + r.abs()));
    for _ in 0..80 {
        let m = 0.5 * (lo + hi);
        if f(m + delta) < f(m - delta) {
            lo = m;
        } else {
            hi = m;
        }
    }
    let fine = 0.5 * (lo + hi);
    let (f_fine, f_coarse) = (f(fine), f(coarse));
    if f_fine <= f_coarse + 1e-14 * (1.0 + f_coarse.abs()) {
        fine
    } else {
        coarse
    }
}

/// `sup_s (ωs − j(s))` over a uniform grid on `[−radius, radius]`, refined
/// twice around the best point.
pub fn grid_conjugate(j: impl Fn(f64) -> f64, omega: f64, radius: f64, points: usize) -> f64 {
    let mut lo = -radius;
    let mut hi = radius;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..3 {
        let step = (hi - lo) / (points - 1) as f64;
        let mut arg = lo;
        for k in 0..points {
            let s = lo + k as f64 * step;
            let v = omega * s - j(s);
            if v > best {
                best = v;
                arg = s;
            }
        }
        lo = arg - step;
        hi = arg + step;
    }
    best
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + step;
            let up = f(&p);
            p[i] = x[i] - step;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Exact minimizer of `½ Σ W_k (u_k − y_k)² + weight Σ_k |u_{k+1} − u_k|` by
/// the taut-string construction: the cumulative sum of `W u` is the shortest
/// path through the tube `Σ W y ± weight` over cumulative `W`.
pub fn tv_prox_1d(signal: &[f64], mass: &[f64], weight: f64) -> Field {
    let n = signal.len();
    assert_eq!(n, mass.len());
    if n == 0 {
        return vec![];
    }
    // knots k = 0..n: X_0 = 0, X_k = Σ_{i<k} W_i
    let mut x = vec![0.0; n + 1];
    let mut s = vec![0.0; n + 1];
    for k in 0..n {
        x[k + 1] = x[k] + mass[k];
        s[k + 1] = s[k] + mass[k] * signal[k];
    }
    let bounds = |k: usize| -> (f64, f64) {
        if k == 0 || k == n {
            (s[k], s[k])
        } else {
            (s[k] - weight, s[k] + weight)
        }
    };
    let mut u = vec![0.0; n];
    let (mut anchor, mut y0) = (0usize, 0.0);
    while anchor < n {
        let (mut lo_slope, mut hi_slope) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut lo_at, mut hi_at) = (anchor, anchor);
        let mut next = None;
        for k in anchor + 1..=n {
            let (lo, hi) = bounds(k);
            let dx = x[k] - x[anchor];
            let (sl, sh) = ((lo - y0) / dx, (hi - y0) / dx);
            if sl > hi_slope {
                next = Some((hi_at, hi_slope));
                break;
            }
            if sh < lo_slope {
                next = Some((lo_at, lo_slope));
                break;
            }
            if sl >= lo_slope {
                lo_slope = sl;
                lo_at = k;
            }
            if sh <= hi_slope {
                hi_slope = sh;
                hi_at = k;
            }
        }
        let (end, slope) = next.unwrap_or((n, (s[n] - y0) / (x[n] - x[anchor])));
        for v in &mut u[anchor..end] {
            *v = slope;
        }
        y0 += slope * (x[end] - x[anchor]);
        anchor = end;
    }
    u
}

/// The total variation step on a 1D grid through [`tv_prox_1d`]: data
/// `(m w1 + s w2)/W`, weights `W = m + s`, jump weight `hρ`.
pub fn tv_step_1d(grid: &Grid, rho: f64, h: f64, w1: &[f64], w2: &[f64]) -> Result<Field> {
    if grid.dim() != 1 {
        return Err(Error::invalid("tv_step_1d needs a 1D grid"));
    }
    grid.check_field(w1)?;
    grid.check_boundary(w2)?;
    let (a, b) = dense_data(grid, w1, w2);
    let mass: Vec<f64> = (0..grid.node_count()).map(|k| a[(k, k)]).collect();
    let signal: Vec<f64> = (0..grid.node_count()).map(|k| b[k] / mass[k]).collect();
    // vol · inv_spacing = 1 on a uniform interval
    Ok(tv_prox_1d(&signal, &mass, h * rho))
}

/// Projected gradient for `min_{u >= 0} ½ Σ W u² − Σ b u + h Σ vol j(∇u)` in
/// the `W` metric, given the cell flux `β` and its Lipschitz constant.
pub fn projected_gradient(
    grid: &Grid,
    h: f64,
    w1: &[f64],
    w2: &[f64],
    flux: impl Fn(&[f64; 2]) -> [f64; 2],
    flux_lipschitz: f64,
    max_iterations: usize,
) -> Result<Field> {
    grid.check_field(w1)?;
    grid.check_boundary(w2)?;
    let n = grid.node_count();
    let (a, b) = dense_data(grid, w1, w2);
    let w: Vec<f64> = (0..n).map(|k| a[(k, k)]).collect();
    let mut row = vec![0.0; n];
    for cell in grid.cells() {
        for d in cell.axes.iter().take(grid.dim()) {
            let c = 2.0 * cell.volume * d.inv_spacing * d.inv_spacing;
            row[d.plus] += c;
            row[d.minus] += c;
        }
    }
    let lip = 1.0
        + h * flux_lipschitz
            * row
                .iter()
                .zip(&w)
                .map(|(r, w)| r / w)
                .fold(0.0, f64::max);
    let mut u: Vec<f64> = (0..n).map(|k| (b[k] / w[k]).max(0.0)).collect();
    for _ in 0..max_iterations {
        let mut g: Vec<f64> = (0..n).map(|k| w[k] * u[k] - b[k]).collect();
        for cell in grid.cells() {
            let mut r = [0.0; 2];
            for (ax, d) in cell.axes.iter().enumerate().take(grid.dim()) {
                r[ax] = (u[d.plus] - u[d.minus]) * d.inv_spacing;
            }
            let q = flux(&r);
            for (ax, d) in cell.axes.iter().enumerate().take(grid.dim()) {
                let v = h * cell.volume * q[ax] * d.inv_spacing;
                g[d.plus] += v;
                g[d.minus] -= v;
            }
        }
        let mut change: f64 = 0.0;
        for k in 0..n {
            let next = (u[k] - g[k] / (lip * w[k])).max(0.0);
            change = change.max((next - u[k]).abs());
            u[k] = next;
        }
        if change < 1e-16 {
            break;
        }
    }
    Ok(u)
}
