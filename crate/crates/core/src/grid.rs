//! Uniform spatial grids on an interval or a rectangle.
//!
//! Nodes carry a lumped (trapezoidal) mass weight for `∫_Ω`, boundary nodes
//! carry a trapezoidal surface weight for `∫_Γ`. Cells are the elements on
//! which the gradient is constant: segments in 1D, and in 2D each rectangle is
//! split into two right triangles along its `(i,j)–(i+1,j+1)` diagonal.
//!
//! Every gradient component of every cell is a single two-node difference,
//! `(u[plus] - u[minus]) / spacing`, which keeps the assembled Hessians banded
//! and the discrete integration-by-parts identity exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values at grid nodes.
pub type Field = Vec<f64>;

/// Values at boundary nodes, in `Grid::boundary_nodes` order.
pub type BoundaryValues = Vec<f64>;

/// Spatial dimension and resolution of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSpec {
    Interval {
        n: usize,
        #[serde(default = "unit_interval")]
        extent: [f64; 2],
    },
    Rectangle {
        nx: usize,
        ny: usize,
        #[serde(default = "unit_square")]
        extent: [[f64; 2]; 2],
    },
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn unit_square() -> [[f64; 2]; 2] {
    [[0.0, 1.0], [0.0, 1.0]]
}

/// One gradient component on one cell: `(u[plus] - u[minus]) * inv_spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Difference {
    pub minus: usize,
    pub plus: usize,
    pub inv_spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub volume: f64,
    pub centroid: [f64; 2],
    /// One difference per axis; only the first `dim` entries are used.
    pub axes: [Difference; 2],
}

/// Cell-wise gradients (or flux sections), one 2-vector per cell. In 1D the
/// second component is always zero.
pub type GradientField = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    dim: usize,
    coords: Vec<[f64; 2]>,
    node_mass: Vec<f64>,
    cells: Vec<Cell>,
    boundary_nodes: Vec<usize>,
    boundary_weights: Vec<f64>,
    /// `boundary_slot[node] = Some(k)` when `boundary_nodes[k] == node`.
    boundary_slot: Vec<Option<usize>>,
    bandwidth: usize,
    lower: [f64; 2],
    upper: [f64; 2],
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        match spec {
            GridSpec::Interval { n, extent } => Self::interval(n, extent[0], extent[1]),
            GridSpec::Rectangle { nx, ny, extent } => Self::rectangle(nx, ny, extent[0], extent[1]),
        }
    }

    /// Uniform interval `[a, b]` with `n` cells.
    pub fn interval(n: usize, a: f64, b: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("interval needs n >= 2 cells, got {n}")));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::invalid(format!("degenerate interval extent [{a}, {b}]")));
        }
        let dx = (b - a) / n as f64;
        let coords: Vec<[f64; 2]> = (0..=n).map(|k| [a + k as f64 * dx, 0.0]).collect();
        let node_mass = (0..=n)
            .map(|k| if k == 0 || k == n { 0.5 * dx } else { dx })
            .collect();
        let cells = (0..n)
            .map(|c| Cell {
                volume: dx,
                centroid: [a + (c as f64 + 0.5) * dx, 0.0],
                axes: [
                    Difference {
                        minus: c,
                        plus: c + 1,
                        inv_spacing: 1.0 / dx,
                    },
                    Difference {
                        minus: c,
                        plus: c,
                        inv_spacing: 0.0,
                    },
                ],
            })
            .collect();
        Ok(Self::assemble(
            GridSpec::Interval { n, extent: [a, b] },
            1,
            coords,
            node_mass,
            cells,
            vec![(0, 1.0), (n, 1.0)],
            1,
            [a, 0.0],
            [b, 0.0],
        ))
    }

    /// Uniform rectangle `[x0,x1] × [y0,y1]` with `nx × ny` rectangles, each
    /// split into two triangles.
    pub fn rectangle(nx: usize, ny: usize, xr: [f64; 2], yr: [f64; 2]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(format!("rectangle needs nx, ny >= 2, got {nx}x{ny}")));
        }
        for r in [xr, yr] {
            if !(r[0].is_finite() && r[1].is_finite() && r[1] > r[0]) {
                return Err(Error::invalid(format!("degenerate rectangle extent {r:?}")));
            }
        }
        let dx = (xr[1] - xr[0]) / nx as f64;
        let dy = (yr[1] - yr[0]) / ny as f64;
        let stride = nx + 1;
        let id = |i: usize, j: usize| j * stride + i;
        let trap = |k: usize, n: usize, d: f64| if k == 0 || k == n { 0.5 * d } else { d };

        let mut coords = Vec::with_capacity(stride * (ny + 1));
        let mut node_mass = Vec::with_capacity(stride * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([xr[0] + i as f64 * dx, yr[0] + j as f64 * dy]);
                node_mass.push(trap(i, nx, dx) * trap(j, ny, dy));
            }
        }

        let area = 0.5 * dx * dy;
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (x0, y0) = (xr[0] + i as f64 * dx, yr[0] + j as f64 * dy);
                // lower-right triangle (i,j), (i+1,j), (i+1,j+1)
                cells.push(Cell {
                    volume: area,
                    centroid: [x0 + 2.0 * dx / 3.0, y0 + dy / 3.0],
                    axes: [
                        Difference {
                            minus: id(i, j),
                            plus: id(i + 1, j),
                            inv_spacing: 1.0 / dx,
                        },
                        Difference {
                            minus: id(i + 1, j),
                            plus: id(i + 1, j + 1),
                            inv_spacing: 1.0 / dy,
                        },
                    ],
                });
                // upper-left triangle (i,j), (i+1,j+1), (i,j+1)
                cells.push(Cell {
                    volume: area,
                    centroid: [x0 + dx / 3.0, y0 + 2.0 * dy / 3.0],
                    axes: [
                        Difference {
                            minus: id(i, j + 1),
                            plus: id(i + 1, j + 1),
                            inv_spacing: 1.0 / dx,
                        },
                        Difference {
                            minus: id(i, j),
                            plus: id(i, j + 1),
                            inv_spacing: 1.0 / dy,
                        },
                    ],
                });
            }
        }

        // Walk the perimeter counter-clockwise; each edge gives half its
        // length to each endpoint.
        let mut ring = Vec::new();
        for i in 0..nx {
            ring.push((id(i, 0), dx, id(i + 1, 0)));
        }
        for j in 0..ny {
            ring.push((id(nx, j), dy, id(nx, j + 1)));
        }
        for i in (1..=nx).rev() {
            ring.push((id(i, ny), dx, id(i - 1, ny)));
        }
        for j in (1..=ny).rev() {
            ring.push((id(0, j), dy, id(0, j - 1)));
        }
        let mut weight = vec![0.0; coords.len()];
        let order: Vec<usize> = ring.iter().map(|e| e.0).collect();
        for &(a, len, b) in &ring {
            weight[a] += 0.5 * len;
            weight[b] += 0.5 * len;
        }
        let boundary: Vec<(usize, f64)> = order.into_iter().map(|k| (k, weight[k])).collect();

        Ok(Self::assemble(
            GridSpec::Rectangle {
                nx,
                ny,
                extent: [xr, yr],
            },
            2,
            coords,
            node_mass,
            cells,
            boundary,
            stride + 1,
            [xr[0], yr[0]],
            [xr[1], yr[1]],
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spec: GridSpec,
        dim: usize,
        coords: Vec<[f64; 2]>,
        node_mass: Vec<f64>,
        cells: Vec<Cell>,
        boundary: Vec<(usize, f64)>,
        bandwidth: usize,
        lower: [f64; 2],
        upper: [f64; 2],
    ) -> Self {
        let mut boundary_slot = vec![None; coords.len()];
        for (k, &(node, _)) in boundary.iter().enumerate() {
            boundary_slot[node] = Some(k);
        }
        Grid {
            spec,
            dim,
            coords,
            node_mass,
            cells,
            boundary_nodes: boundary.iter().map(|b| b.0).collect(),
            boundary_weights: boundary.iter().map(|b| b.1).collect(),
            boundary_slot,
            bandwidth,
            lower,
            upper,
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Coordinates of node `k` as a slice of length `dim`.
    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k][..self.dim]
    }

    pub fn node_mass(&self) -> &[f64] {
        &self.node_mass
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    pub fn boundary_slot(&self, node: usize) -> Option<usize> {
        self.boundary_slot[node]
    }

    /// Half-bandwidth of every nodal operator built from cell differences.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        (self.lower, self.upper)
    }

    /// |Ω|
    pub fn measure(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// |Γ|
    pub fn boundary_measure(&self) -> f64 {
        self.boundary_weights.iter().sum()
    }

    /// Combined nodal weight of `Ω ∪ Γ`: lumped mass plus surface weight.
    pub fn total_weights(&self) -> Vec<f64> {
        let mut w = self.node_mass.clone();
        for (&k, &s) in self.boundary_nodes.iter().zip(&self.boundary_weights) {
            w[k] += s;
        }
        w
    }

    /// Smallest cell spacing.
    pub fn spacing(&self) -> f64 {
        let c = &self.cells[0];
        (0..self.dim)
            .map(|a| 1.0 / c.axes[a].inv_spacing)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_field(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.node_count() {
            return Err(Error::Shape(format!(
                "field has {} values, grid has {} nodes",
                u.len(),
                self.node_count()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field contains non-finite values"));
        }
        Ok(())
    }

    pub fn check_boundary(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.boundary_nodes.len() {
            return Err(Error::Shape(format!(
                "boundary data has {} values, grid has {} boundary nodes",
                z.len(),
                self.boundary_nodes.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("boundary data contains non-finite values"));
        }
        Ok(())
    }

    /// Gradient on a single cell.
    #[inline]
    pub fn cell_gradient(&self, cell: &Cell, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (a, d) in cell.axes.iter().enumerate().take(self.dim) {
            g[a] = (u[d.plus] - u[d.minus]) * d.inv_spacing;
        }
        g
    }

    /// Cell-wise gradient of a nodal field.
    pub fn gradient(&self, u: &[f64]) -> GradientField {
        self.cells.iter().map(|c| self.cell_gradient(c, u)).collect()
    }

    /// Adjoint of the weighted gradient: returns the nodal vector
    /// `out[k] = Σ_c vol_c q_c · ∂(∇_c u)/∂u_k`, i.e. `⟨q, ∇ψ⟩_Ω` for every
    /// nodal basis function ψ = e_k.
    pub fn gradient_adjoint(&self, q: &[[f64; 2]]) -> Field {
        let mut out = vec![0.0; self.node_count()];
        self.add_gradient_adjoint(q, 1.0, &mut out);
        out
    }

    pub(crate) fn add_gradient_adjoint(&self, q: &[[f64; 2]], scale: f64, out: &mut [f64]) {
        for (cell, qc) in self.cells.iter().zip(q) {
            for (a, d) in cell.axes.iter().enumerate().take(self.dim) {
                let v = scale * cell.volume * qc[a] * d.inv_spacing;
                out[d.plus] += v;
                out[d.minus] -= v;
            }
        }
    }

    /// Restriction to the boundary nodes.
    pub fn trace(&self, u: &[f64]) -> BoundaryValues {
        self.boundary_nodes.iter().map(|&k| u[k]).collect()
    }

    /// `∫_Ω` of nodal values (lumped quadrature).
    pub fn integrate_nodes(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.node_mass).map(|(v, m)| v * m).sum()
    }

    /// `∫_Ω` of cell values (one value per cell).
    pub fn integrate_cells(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.cells).map(|(v, c)| v * c.volume).sum()
    }

    /// `∫_Γ` of boundary values.
    pub fn integrate_boundary(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.boundary_weights).map(|(v, s)| v * s).sum()
    }

    /// ‖u‖²_{L²(Ω)}
    pub fn norm_sq_domain(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.node_mass).map(|(v, m)| v * v * m).sum()
    }

    /// ‖γu‖²_{L²(Γ)} for a nodal field.
    pub fn norm_sq_trace(&self, u: &[f64]) -> f64 {
        self.boundary_nodes
            .iter()
            .zip(&self.boundary_weights)
            .map(|(&k, s)| u[k] * u[k] * s)
            .sum()
    }

    /// ‖z‖²_{L²(Γ)} for boundary values.
    pub fn norm_sq_boundary(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.boundary_weights).map(|(v, s)| v * v * s).sum()
    }

    /// Sample a function of position at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        (0..self.node_count()).map(|k| f(self.point(k))).collect()
    }

    /// Sample a function of position at every boundary node.
    pub fn sample_boundary(&self, f: impl Fn(&[f64]) -> f64) -> BoundaryValues {
        self.boundary_nodes.iter().map(|&k| f(self.point(k))).collect()
    }

    /// Time average `(1/h) ∫_{(i-1)h}^{ih} f(s, x) ds` at every node, by
    /// 5-point Gauss–Legendre quadrature in time.
    pub fn time_average(&self, f: impl Fn(f64, &[f64]) -> f64, i: usize, h: f64) -> Result<Field> {
        check_average_args(i, h)?;
        Ok((0..self.node_count())
            .map(|k| gauss_average(|s| f(s, self.point(k)), i, h))
            .collect())
    }

    /// Same as [`Grid::time_average`] on boundary nodes.
    pub fn time_average_boundary(
        &self,
        g: impl Fn(f64, &[f64]) -> f64,
        i: usize,
        h: f64,
    ) -> Result<BoundaryValues> {
        check_average_args(i, h)?;
        Ok(self
            .boundary_nodes
            .iter()
            .map(|&k| gauss_average(|s| g(s, self.point(k)), i, h))
            .collect())
    }
}

fn check_average_args(i: usize, h: f64) -> Result<()> {
    if i < 1 || !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("time average needs i >= 1 and h > 0 (i={i}, h={h})")));
    }
    Ok(())
}

/// Nodes and weights of 5-point Gauss–Legendre on [-1, 1].
pub(crate) const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// `(1/h) ∫_{(i-1)h}^{ih} f`.
pub(crate) fn gauss_average(f: impl Fn(f64) -> f64, i: usize, h: f64) -> f64 {
    let mid = (i as f64 - 0.5) * h;
    GAUSS5
        .iter()
        .map(|&(xi, w)| 0.5 * w * f(mid + 0.5 * h * xi))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn interval_two_cells() {
        let g = Grid::interval(2, 0.0, 1.0).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.cell_count(), 2);
        assert!(g.cells().iter().all(|c| c.volume == 0.5));
        assert_eq!(g.boundary_weights(), &[1.0, 1.0]);
        assert_eq!(g.boundary_nodes(), &[0, 2]);
    }

    #[test]
    fn rectangle_two_by_two() {
        let g = Grid::rectangle(2, 2, [0.0, 1.0], [0.0, 1.0]).unwrap();
        assert_eq!(g.node_count(), 9);
        assert!(close(g.measure(), 1.0, 1e-15));
        assert!(close(g.boundary_measure(), 4.0, 1e-15));
        assert!(close(g.node_mass().iter().sum::<f64>(), 1.0, 1e-15));
        assert_eq!(g.boundary_nodes().len(), 8);
        // the centre node is interior
        assert_eq!(g.boundary_slot(4), None);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(Grid::interval(1, 0.0, 1.0).is_err());
        assert!(Grid::interval(4, 1.0, 1.0).is_err());
        assert!(Grid::rectangle(2, 1, [0.0, 1.0], [0.0, 1.0]).is_err());
        assert!(Grid::rectangle(2, 2, [0.0, 1.0], [0.0, -1.0]).is_err());
    }

    #[test]
    fn gradients_exact_on_affine_fields() {
        let g = Grid::interval(4, 0.0, 1.0).unwrap();
        let u = g.sample(|x| x[0]);
        assert!(g.gradient(&u).iter().all(|q| close(q[0], 1.0, 1e-14)));
        let c = g.sample(|_| 3.0);
        assert!(g.gradient(&c).iter().all(|q| q[0] == 0.0));

        let g = Grid::rectangle(2, 2, [0.0, 1.0], [0.0, 1.0]).unwrap();
        let u = g.sample(|p| 2.0 * p[0] - p[1]);
        for q in g.gradient(&u) {
            assert!(close(q[0], 2.0, 1e-14) && close(q[1], -1.0, 1e-14));
        }
        let c = g.sample(|_| -1.5);
        assert!(g.gradient(&c).iter().all(|q| q[0] == 0.0 && q[1] == 0.0));
    }

    #[test]
    fn traces() {
        let g = Grid::interval(4, 0.0, 1.0).unwrap();
        assert_eq!(g.trace(&g.sample(|x| x[0])), vec![0.0, 1.0]);
        assert_eq!(g.trace(&g.sample(|_| 2.0)), vec![2.0, 2.0]);
        let g = Grid::rectangle(3, 2, [0.0, 3.0], [0.0, 1.0]).unwrap();
        let u = g.sample(|p| 1.0 + p[0] + 2.0 * p[1]);
        for (&k, v) in g.boundary_nodes().iter().zip(g.trace(&u)) {
            let p = g.point(k);
            assert_eq!(v, 1.0 + p[0] + 2.0 * p[1]);
        }
    }

    #[test]
    fn integrals() {
        let g = Grid::interval(8, 0.0, 1.0).unwrap();
        assert!(close(g.integrate_nodes(&vec![1.0; 9]), 1.0, 1e-15));
        assert!(close(g.integrate_boundary(&[1.0, 1.0]), 2.0, 1e-15));
        let h = 1.0 / 8.0;
        assert!(close(g.integrate_nodes(&g.sample(|x| x[0])), 0.5, h * h));
        let g = Grid::rectangle(3, 5, [0.0, 1.0], [0.0, 1.0]).unwrap();
        assert!(close(g.integrate_nodes(&vec![1.0; g.node_count()]), 1.0, 1e-14));
        assert!(close(g.integrate_cells(&vec![1.0; g.cell_count()]), 1.0, 1e-14));
    }

    #[test]
    fn time_averages() {
        let g = Grid::interval(2, 0.0, 1.0).unwrap();
        assert!(g.time_average(|_, _| 2.0, 3, 0.1).unwrap().iter().all(|v| close(*v, 2.0, 1e-14)));
        let a = g.time_average(|t, _| t, 1, 0.1).unwrap();
        assert!(a.iter().all(|v| close(*v, 0.05, 1e-15)));
        let period = 2.0 * std::f64::consts::PI;
        let a = g.time_average(|t, _| t.sin(), 1, period).unwrap();
        // 5-point Gauss over a full period: exact integral is 0
        assert!(a.iter().all(|v| v.abs() < 1e-3));
        assert!(g.time_average(|t, _| t, 0, 0.1).is_err());
        assert!(g.time_average(|t, _| t, 1, 0.0).is_err());
    }
}
