//! Flux laws `β = ∂j` and the convex-analysis operations built on them.
//!
//! Catalog potentials, per axis `i` or on `|r|`:
//!
//! | id           | `j(t, x, r)`                                              |
//! |--------------|-----------------------------------------------------------|
//! | `quadratic`  | `½|r|²`                                                   |
//! | `plaplacian` | `Σ α_i(t,x) |r_i|^p / p`                                  |
//! | `fractured`  | `Σ α_i|r_i|^p/p + [r_i > r0_i] (r_i^p − r0_i^p)/p`        |
//! | `loggrowth`  | `a(t,x) |r| log(1 + |r|)`                                 |
//! | `tv`         | `ρ|r|`                                                    |
//!
//! The fractured law's derivative jumps by `r0^{p-1}` at the threshold; the
//! jump is filled and the minimal-norm element is selected there.

mod hypotheses;
pub(crate) mod scalar;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

pub use hypotheses::{
    Coercivity, GrowthConstants, GrowthReport, HypothesisReport, SampleSpec,
};
pub use scalar::{Kink, ScalarFlux};

pub(crate) use scalar::Law;

pub type Vector = [f64; 2];
pub type Matrix = [[f64; 2]; 2];

/// Which law a [`FluxModel`] implements.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase", deny_unknown_fields)]
pub enum FluxKind {
    Quadratic,
    /// `alpha` holds one coefficient per axis, or a single one for all axes.
    #[serde(rename = "plaplacian")]
    PLaplacian { p: f64, alpha: Vec<Expr> },
    Fractured {
        p: f64,
        alpha: Vec<Expr>,
        thresholds: Vec<f64>,
    },
    #[serde(rename = "loggrowth")]
    LogGrowth { a: Expr },
    #[serde(rename = "tv")]
    TotalVariation { rho: f64 },
    #[serde(skip)]
    Custom {
        law: Arc<dyn ScalarFlux>,
        /// Declared growth behaviour, reported as-is by the hypothesis checks.
        coercivity: Option<Coercivity>,
    },
}

impl fmt::Debug for FluxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluxKind::Quadratic => write!(f, "Quadratic"),
            FluxKind::PLaplacian { p, alpha } => write!(f, "PLaplacian(p={p}, alpha={alpha:?})"),
            FluxKind::Fractured {
                p,
                alpha,
                thresholds,
            } => write!(
                f,
                "Fractured(p={p}, alpha={alpha:?}, thresholds={thresholds:?})"
            ),
            FluxKind::LogGrowth { a } => write!(f, "LogGrowth(a={a:?})"),
            FluxKind::TotalVariation { rho } => write!(f, "TotalVariation(rho={rho})"),
            FluxKind::Custom { law, .. } => write!(f, "Custom({law:?})"),
        }
    }
}

impl PartialEq for FluxKind {
    fn eq(&self, other: &Self) -> bool {
        use FluxKind::*;
        match (self, other) {
            (Quadratic, Quadratic) => true,
            (PLaplacian { p, alpha }, PLaplacian { p: q, alpha: b }) => p == q && alpha == b,
            (
                Fractured {
                    p,
                    alpha,
                    thresholds,
                },
                Fractured {
                    p: q,
                    alpha: b,
                    thresholds: r,
                },
            ) => p == q && alpha == b && thresholds == r,
            (LogGrowth { a }, LogGrowth { a: b }) => a == b,
            (TotalVariation { rho }, TotalVariation { rho: s }) => rho == s,
            (Custom { law, .. }, Custom { law: other, .. }) => Arc::ptr_eq(law, other),
            _ => false,
        }
    }
}

/// A validated flux law on an `N`-dimensional domain, `N ∈ {1, 2}`.
///
/// Immutable; cheap to clone and safe to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxModel {
    kind: FluxKind,
    dim: usize,
}

impl FluxModel {
    pub fn new(kind: FluxKind, dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        let exponent = |p: f64| {
            if p.is_finite() && p > 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("exponent p must be > 1, got {p}")))
            }
        };
        let per_axis = |len: usize, what: &str| {
            if len == 1 || len == dim {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{what} needs 1 or {dim} entries, got {len}"
                )))
            }
        };
        match &kind {
            FluxKind::Quadratic | FluxKind::LogGrowth { .. } | FluxKind::Custom { .. } => {}
            FluxKind::PLaplacian { p, alpha } => {
                exponent(*p)?;
                per_axis(alpha.len(), "alpha")?;
            }
            FluxKind::Fractured {
                p,
                alpha,
                thresholds,
            } => {
                exponent(*p)?;
                per_axis(alpha.len(), "alpha")?;
                per_axis(thresholds.len(), "thresholds")?;
                if let Some(r) = thresholds.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                    return Err(Error::invalid(format!("thresholds must be finite and >= 0, got {r}")));
                }
            }
            FluxKind::TotalVariation { rho } => {
                if !(rho.is_finite() && *rho > 0.0) {
                    return Err(Error::invalid(format!("rho must be > 0, got {rho}")));
                }
            }
        }
        Ok(FluxModel { kind, dim })
    }

    pub fn quadratic(dim: usize) -> Result<Self> {
        Self::new(FluxKind::Quadratic, dim)
    }

    pub fn p_laplacian(dim: usize, p: f64, alpha: f64) -> Result<Self> {
        Self::new(
            FluxKind::PLaplacian {
                p,
                alpha: vec![Expr::constant(alpha)],
            },
            dim,
        )
    }

    pub fn fractured(dim: usize, p: f64, alpha: f64, threshold: f64) -> Result<Self> {
        Self::new(
            FluxKind::Fractured {
                p,
                alpha: vec![Expr::constant(alpha)],
                thresholds: vec![threshold],
            },
            dim,
        )
    }

    pub fn log_growth(dim: usize, a: f64) -> Result<Self> {
        Self::new(
            FluxKind::LogGrowth {
                a: Expr::constant(a),
            },
            dim,
        )
    }

    pub fn total_variation(dim: usize, rho: f64) -> Result<Self> {
        Self::new(FluxKind::TotalVariation { rho }, dim)
    }

    pub fn custom(dim: usize, law: Arc<dyn ScalarFlux>, coercivity: Option<Coercivity>) -> Result<Self> {
        Self::new(FluxKind::Custom { law, coercivity }, dim)
    }

    pub fn kind(&self) -> &FluxKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Catalog identifier.
    pub fn id(&self) -> &'static str {
        match self.kind {
            FluxKind::Quadratic => "quadratic",
            FluxKind::PLaplacian { .. } => "plaplacian",
            FluxKind::Fractured { .. } => "fractured",
            FluxKind::LogGrowth { .. } => "loggrowth",
            FluxKind::TotalVariation { .. } => "tv",
            FluxKind::Custom { .. } => "custom",
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match &self.kind {
            FluxKind::Quadratic | FluxKind::TotalVariation { .. } => false,
            FluxKind::PLaplacian { alpha, .. } | FluxKind::Fractured { alpha, .. } => {
                alpha.iter().any(Expr::depends_on_time)
            }
            FluxKind::LogGrowth { a } => a.depends_on_time(),
            FluxKind::Custom { law, .. } => law.depends_on_time(),
        }
    }

    /// True when `j` is differentiable in `r` everywhere.
    pub fn is_smooth(&self) -> bool {
        match &self.kind {
            FluxKind::TotalVariation { .. } => false,
            FluxKind::Fractured { thresholds, .. } => thresholds.iter().all(|&r| r == 0.0),
            FluxKind::Custom { law, .. } => {
                law.kink(0.0, &[0.0; 2][..self.dim]).is_none()
            }
            _ => true,
        }
    }

    /// Exponent used for `‖∇y‖_p^p` in diagnostics: the model's `p`, 2 for
    /// the quadratic law, 1 for the linear-growth laws.
    pub fn exponent(&self) -> f64 {
        match &self.kind {
            FluxKind::Quadratic => 2.0,
            FluxKind::PLaplacian { p, .. } | FluxKind::Fractured { p, .. } => *p,
            FluxKind::Custom {
                coercivity: Some(Coercivity::Strong(c)),
                ..
            } => c.p,
            _ => 1.0,
        }
    }

    /// Evaluate every coefficient at `(t, x)`.
    pub(crate) fn at(&self, t: f64, x: &[f64]) -> Result<Pointwise<'_>> {
        let mut xs = [0.0; 2];
        for (dst, src) in xs.iter_mut().zip(x) {
            *dst = *src;
        }
        let axis_coef = |list: &[Expr], a: usize| -> Result<f64> {
            let e = if list.len() == 1 { &list[0] } else { &list[a] };
            let v = e.eval(t, &xs[..self.dim]);
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::invalid(format!(
                    "coefficient {e} must be > 0, got {v} at t={t}, x={:?}",
                    &xs[..self.dim]
                )))
            }
        };
        let dim = self.dim;
        Ok(match &self.kind {
            FluxKind::Quadratic => Pointwise::Separable {
                laws: [Law::Power { alpha: 1.0, p: 2.0 }; 2],
                dim,
            },
            FluxKind::PLaplacian { p, alpha } => {
                let mut laws = [Law::Power { alpha: 1.0, p: *p }; 2];
                for (a, law) in laws.iter_mut().enumerate().take(dim) {
                    *law = Law::Power {
                        alpha: axis_coef(alpha, a)?,
                        p: *p,
                    };
                }
                Pointwise::Separable { laws, dim }
            }
            FluxKind::Fractured {
                p,
                alpha,
                thresholds,
            } => {
                let mut laws = [Law::Power { alpha: 1.0, p: *p }; 2];
                for (a, law) in laws.iter_mut().enumerate().take(dim) {
                    let r0 = if thresholds.len() == 1 {
                        thresholds[0]
                    } else {
                        thresholds[a]
                    };
                    *law = Law::PowerJump {
                        alpha: axis_coef(alpha, a)?,
                        p: *p,
                        r0,
                    };
                }
                Pointwise::Separable { laws, dim }
            }
            FluxKind::LogGrowth { a } => {
                let v = a.eval(t, &xs[..dim]);
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!(
                        "log-growth coefficient a(t,x) must be > 0, got {v}"
                    )));
                }
                Pointwise::Radial {
                    law: Law::LogGrowth { a: v },
                    dim,
                }
            }
            FluxKind::TotalVariation { rho } => Pointwise::Radial {
                law: Law::Abs { rho: *rho },
                dim,
            },
            FluxKind::Custom { law, .. } => Pointwise::Separable {
                laws: [Law::Custom {
                    law: law.as_ref(),
                    t,
                    x: xs,
                    dim,
                }; 2],
                dim,
            },
        })
    }

    fn vector(&self, r: &[f64], what: &str) -> Result<Vector> {
        if r.len() != self.dim {
            return Err(Error::Shape(format!(
                "{what} has {} components, model dimension is {}",
                r.len(),
                self.dim
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{what} must be finite")));
        }
        let mut out = [0.0; 2];
        out[..self.dim].copy_from_slice(r);
        Ok(out)
    }

    fn lambda(lambda: f64) -> Result<()> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("lambda must be > 0, got {lambda}")))
        }
    }

    fn out(&self, v: Vector) -> Vec<f64> {
        v[..self.dim].to_vec()
    }

    /// `j(t, x, r)`.
    pub fn potential(&self, t: f64, x: &[f64], r: &[f64]) -> Result<f64> {
        let r = self.vector(r, "r")?;
        Ok(self.at(t, x)?.value(r))
    }

    /// Minimal-norm element of `β(t, x, r) = ∂j(t, x, r)`.
    pub fn flux_select(&self, t: f64, x: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        let r = self.vector(r, "r")?;
        Ok(self.out(self.at(t, x)?.select(r)))
    }

    /// `j*(t, x, ω)`; [`Error::Unbounded`] when the supremum is `+∞`.
    pub fn conjugate(&self, t: f64, x: &[f64], omega: &[f64]) -> Result<f64> {
        let w = self.vector(omega, "omega")?;
        let v = self.at(t, x)?.conjugate(w);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Unbounded)
        }
    }

    /// `(1 + λβ)^{-1}(r)`.
    pub fn resolvent(&self, t: f64, x: &[f64], lambda: f64, r: &[f64]) -> Result<Vec<f64>> {
        Self::lambda(lambda)?;
        let r = self.vector(r, "r")?;
        Ok(self.out(self.at(t, x)?.prox(lambda, r)?))
    }

    /// `β_λ(r) = (r − (1 + λβ)^{-1} r) / λ`.
    pub fn yosida_flux(&self, t: f64, x: &[f64], lambda: f64, r: &[f64]) -> Result<Vec<f64>> {
        Self::lambda(lambda)?;
        let r = self.vector(r, "r")?;
        let z = self.at(t, x)?.prox(lambda, r)?;
        Ok(self.out([(r[0] - z[0]) / lambda, (r[1] - z[1]) / lambda]))
    }

    /// `j_λ(r) = min_s |r − s|²/(2λ) + j(s)`.
    pub fn moreau(&self, t: f64, x: &[f64], lambda: f64, r: &[f64]) -> Result<f64> {
        Self::lambda(lambda)?;
        let r = self.vector(r, "r")?;
        let pw = self.at(t, x)?;
        let z = pw.prox(lambda, r)?;
        Ok(norm_sq(sub(r, z)) / (2.0 * lambda) + pw.value(z))
    }

    /// `j(r) + j*(ω) − ω·r`.
    pub fn fenchel_gap(&self, t: f64, x: &[f64], r: &[f64], omega: &[f64]) -> Result<f64> {
        let rv = self.vector(r, "r")?;
        let w = self.vector(omega, "omega")?;
        let pw = self.at(t, x)?;
        let c = pw.conjugate(w);
        if !c.is_finite() {
            return Err(Error::Unbounded);
        }
        Ok(pw.value(rv) + c - dot(w, rv))
    }
}

#[inline]
pub(crate) fn dot(a: Vector, b: Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn sub(a: Vector, b: Vector) -> Vector {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn norm_sq(a: Vector) -> f64 {
    dot(a, a)
}

/// A model with its coefficients frozen at one `(t, x)`.
#[derive(Clone, Copy)]
pub(crate) enum Pointwise<'a> {
    Separable { laws: [Law<'a>; 2], dim: usize },
    Radial { law: Law<'a>, dim: usize },
}

/// Split `r` into `(|r|, r/|r|)`; the direction is arbitrary at 0.
#[inline]
fn polar(r: Vector) -> (f64, Vector) {
    let s = norm_sq(r).sqrt();
    if s == 0.0 {
        (0.0, [1.0, 0.0])
    } else {
        (s, [r[0] / s, r[1] / s])
    }
}

/// `a · n nᵀ + b · (I − n nᵀ)`, restricted to the first `dim` axes.
#[inline]
fn radial_matrix(a: f64, b: f64, n: Vector, dim: usize) -> Matrix {
    if dim == 1 {
        return [[a, 0.0], [0.0, 0.0]];
    }
    [
        [b + (a - b) * n[0] * n[0], (a - b) * n[0] * n[1]],
        [(a - b) * n[1] * n[0], b + (a - b) * n[1] * n[1]],
    ]
}

impl<'a> Pointwise<'a> {
    pub fn value(&self, r: Vector) -> f64 {
        match self {
            Pointwise::Separable { laws, dim } => (0..*dim).map(|a| laws[a].value(r[a])).sum(),
            Pointwise::Radial { law, .. } => law.value(norm_sq(r).sqrt()),
        }
    }

    pub fn select(&self, r: Vector) -> Vector {
        match self {
            Pointwise::Separable { laws, dim } => {
                let mut out = [0.0; 2];
                for a in 0..*dim {
                    out[a] = laws[a].select(r[a]);
                }
                out
            }
            Pointwise::Radial { law, .. } => {
                let (s, n) = polar(r);
                if s == 0.0 {
                    return [0.0; 2];
                }
                let m = law.select(s);
                [m * n[0], m * n[1]]
            }
        }
    }

    /// Hessian of `j` (curvature capped), valid away from kinks.
    pub fn hessian(&self, r: Vector) -> Matrix {
        match self {
            Pointwise::Separable { laws, dim } => {
                let mut h = [[0.0; 2]; 2];
                for a in 0..*dim {
                    h[a][a] = laws[a].curvature(r[a]);
                }
                h
            }
            Pointwise::Radial { law, dim } => {
                let (s, n) = polar(r);
                radial_matrix(law.curvature(s), law.secant_curvature(s), n, *dim)
            }
        }
    }

    pub fn prox(&self, lambda: f64, r: Vector) -> Result<Vector> {
        match self {
            Pointwise::Separable { laws, dim } => {
                let mut z = [0.0; 2];
                for a in 0..*dim {
                    z[a] = laws[a].prox(lambda, r[a])?;
                }
                Ok(z)
            }
            Pointwise::Radial { law, .. } => {
                let (s, n) = polar(r);
                if s == 0.0 {
                    return Ok([0.0; 2]);
                }
                let m = law.prox(lambda, s)?;
                Ok([m * n[0], m * n[1]])
            }
        }
    }

    /// Yosida flux `β_λ(r)`, its Jacobian, and the envelope `j_λ(r)`.
    pub fn yosida(&self, lambda: f64, r: Vector) -> Result<(Vector, Matrix, f64)> {
        let z = self.prox(lambda, r)?;
        let d = sub(r, z);
        let beta = [d[0] / lambda, d[1] / lambda];
        let envelope = norm_sq(d) / (2.0 * lambda) + self.value(z);
        let dz = match self {
            Pointwise::Separable { laws, dim } => {
                let mut m = [[0.0; 2]; 2];
                for a in 0..*dim {
                    m[a][a] = laws[a].prox_slope(lambda, r[a], z[a]);
                }
                m
            }
            Pointwise::Radial { law, dim } => {
                let (s, n) = polar(r);
                let zs = norm_sq(z).sqrt();
                let along = law.prox_slope(lambda, s, zs);
                let across = if s == 0.0 { along } else { zs / s };
                radial_matrix(along, across, n, *dim)
            }
        };
        let dim = self.dim();
        let mut jac = [[0.0; 2]; 2];
        for i in 0..dim {
            for k in 0..dim {
                let id = if i == k { 1.0 } else { 0.0 };
                jac[i][k] = (id - dz[i][k]) / lambda;
            }
        }
        Ok((beta, jac, envelope))
    }

    pub fn conjugate(&self, w: Vector) -> f64 {
        match self {
            Pointwise::Separable { laws, dim } => (0..*dim).map(|a| laws[a].conjugate(w[a])).sum(),
            Pointwise::Radial { law, .. } => law.conjugate(norm_sq(w).sqrt()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Pointwise::Separable { dim, .. } | Pointwise::Radial { dim, .. } => *dim,
        }
    }
}
