//! One-dimensional convex laws `φ: ℝ → [0, ∞)` with `φ(0) = 0`.
//!
//! Separable catalog models apply one law per axis; radial models apply a law
//! to `|r|`. Everything multi-dimensional in [`super`] reduces to these.

use std::fmt;

use crate::error::{Error, Result};

/// A jump of the (multivalued) derivative: `∂φ(at) = [left, right]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

/// A user-supplied scalar law, applied separably on each axis.
///
/// Implementations must be convex with `value(t, x, 0) == 0`, `value >= 0`,
/// and `select` must return the minimal-norm element of the subdifferential.
pub trait ScalarFlux: Send + Sync + fmt::Debug {
    fn value(&self, t: f64, x: &[f64], s: f64) -> f64;

    fn select(&self, t: f64, x: &[f64], s: f64) -> f64;

    /// Second derivative away from kinks; defaults to a central difference
    /// of `select`.
    fn curvature(&self, t: f64, x: &[f64], s: f64) -> f64 {
        let d = 1e-6 * (1.0 + s.abs());
        (self.select(t, x, s + d) - self.select(t, x, s - d)) / (2.0 * d)
    }

    /// The single derivative jump of the law, if any.
    fn kink(&self, _t: f64, _x: &[f64]) -> Option<Kink> {
        None
    }

    fn depends_on_time(&self) -> bool {
        false
    }
}

/// Upper bound used in place of an infinite second derivative (p < 2 at 0).
pub(crate) const CURVATURE_CAP: f64 = 1e12;

/// A concrete law, with every coefficient already evaluated at `(t, x)`.
#[derive(Clone, Copy)]
pub(crate) enum Law<'a> {
    /// `α|s|^p / p`
    Power { alpha: f64, p: f64 },
    /// `α|s|^p / p + (s^p - r0^p)/p · [s > r0]`, `r0 >= 0`
    PowerJump { alpha: f64, p: f64, r0: f64 },
    /// `a |s| log(1 + |s|)`
    LogGrowth { a: f64 },
    /// `ρ|s|`
    Abs { rho: f64 },
    Custom {
        law: &'a dyn ScalarFlux,
        t: f64,
        x: [f64; 2],
        dim: usize,
    },
}

#[inline]
fn pow_abs(s: f64, e: f64) -> f64 {
    if e == 1.0 {
        s.abs()
    } else if e == 2.0 {
        s * s
    } else if e == 3.0 {
        s.abs() * s * s
    } else {
        s.abs().powf(e)
    }
}

/// `|s|^e sgn(s)`
#[inline]
fn signed_pow(s: f64, e: f64) -> f64 {
    if e == 1.0 {
        s
    } else if e == 2.0 {
        s.abs() * s
    } else if e == 3.0 {
        s * s * s
    } else {
        s.signum() * s.abs().powf(e)
    }
}

impl<'a> Law<'a> {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Law::Power { alpha, p } => alpha * pow_abs(s, p) / p,
            Law::PowerJump { alpha, p, r0 } => {
                let base = alpha * pow_abs(s, p) / p;
                if s > r0 {
                    base + (pow_abs(s, p) - pow_abs(r0, p)) / p
                } else {
                    base
                }
            }
            Law::LogGrowth { a } => a * s.abs() * s.abs().ln_1p(),
            Law::Abs { rho } => rho * s.abs(),
            Law::Custom { law, t, x, dim } => law.value(t, &x[..dim], s),
        }
    }

    pub fn kink(&self) -> Option<Kink> {
        match *self {
            Law::PowerJump { alpha, p, r0 } if r0 > 0.0 => {
                let base = alpha * signed_pow(r0, p - 1.0);
                Some(Kink {
                    at: r0,
                    left: base,
                    right: base + signed_pow(r0, p - 1.0),
                })
            }
            Law::Abs { rho } => Some(Kink {
                at: 0.0,
                left: -rho,
                right: rho,
            }),
            Law::Custom { law, t, x, dim } => law.kink(t, &x[..dim]),
            _ => None,
        }
    }

    /// Minimal-norm element of `∂φ(s)`.
    pub fn select(&self, s: f64) -> f64 {
        if let Some(k) = self.kink() {
            if s == k.at {
                return min_norm(k.left, k.right);
            }
        }
        match *self {
            Law::Power { alpha, p } => alpha * signed_pow(s, p - 1.0),
            Law::PowerJump { alpha, p, r0 } => {
                let c = if s > r0 { alpha + 1.0 } else { alpha };
                c * signed_pow(s, p - 1.0)
            }
            Law::LogGrowth { a } => {
                let m = s.abs();
                a * s.signum() * (m.ln_1p() + m / (1.0 + m))
            }
            Law::Abs { rho } => rho * s.signum(),
            Law::Custom { law, t, x, dim } => law.select(t, &x[..dim], s),
        }
    }

    /// `φ''(s)` away from kinks, capped at [`CURVATURE_CAP`].
    pub fn curvature(&self, s: f64) -> f64 {
        let c = match *self {
            Law::Power { alpha, p } => alpha * (p - 1.0) * pow_abs(s, p - 2.0),
            Law::PowerJump { alpha, p, r0 } => {
                let c = if s > r0 { alpha + 1.0 } else { alpha };
                c * (p - 1.0) * pow_abs(s, p - 2.0)
            }
            Law::LogGrowth { a } => {
                let q = 1.0 / (1.0 + s.abs());
                a * (q + q * q)
            }
            Law::Abs { .. } => 0.0,
            Law::Custom { law, t, x, dim } => law.curvature(t, &x[..dim], s),
        };
        if c.is_nan() || c > CURVATURE_CAP {
            CURVATURE_CAP
        } else {
            c.max(0.0)
        }
    }

    /// `φ'(s)/s` for `s > 0`, the tangential curvature of the radial
    /// extension; limit `φ''(0)` at the origin.
    pub fn secant_curvature(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.curvature(0.0);
        }
        (self.select(s) / s).min(CURVATURE_CAP)
    }

    /// Resolvent `z = (1 + λ∂φ)^{-1}(r)`.
    pub fn prox(&self, lambda: f64, r: f64) -> Result<f64> {
        match *self {
            Law::Power { alpha, p } if p == 2.0 => return Ok(r / (1.0 + lambda * alpha)),
            Law::Abs { rho } => {
                let t = lambda * rho;
                return Ok(if r > t {
                    r - t
                } else if r < -t {
                    r + t
                } else {
                    0.0
                });
            }
            _ => {}
        }
        let (at, left, right) = match self.kink() {
            Some(k) => (k.at, k.left, k.right),
            None => {
                let s0 = self.select(0.0);
                (0.0, s0, s0)
            }
        };
        let (lo, hi) = if r > at + lambda * right {
            (at, r - lambda * right)
        } else if r < at + lambda * left {
            (r - lambda * left, at)
        } else {
            return Ok(at);
        };
        solve_monotone(
            |z| z + lambda * self.select(z) - r,
            |z| 1.0 + lambda * self.curvature(z),
            lo,
            hi,
            r.abs().max(1.0),
        )
        .map_err(|(residual, iterations)| Error::NonConverged {
            what: "scalar resolvent".into(),
            residual,
            iterations,
            step: None,
        })
    }

    /// `dz/dr` of the resolvent at `r`, given `z = prox(λ, r)`.
    pub fn prox_slope(&self, lambda: f64, r: f64, z: f64) -> f64 {
        if let Some(k) = self.kink() {
            if z == k.at && r >= k.at + lambda * k.left && r <= k.at + lambda * k.right {
                return 0.0;
            }
        }
        1.0 / (1.0 + lambda * self.curvature(z))
    }

    /// `φ*(ω) = sup_s (ωs − φ(s))`; `+∞` outside the domain.
    pub fn conjugate(&self, w: f64) -> f64 {
        match *self {
            Law::Power { alpha, p } => {
                let q = p / (p - 1.0);
                alpha.powf(1.0 - q) * pow_abs(w, q) / q
            }
            Law::Abs { rho } => {
                if w.abs() <= rho {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Law::PowerJump { .. } | Law::LogGrowth { .. } => match self.inverse_select(w) {
                Some(s) => w * s - self.value(s),
                None => f64::INFINITY,
            },
            Law::Custom { .. } => grid_conjugate(|s| self.value(s), w),
        }
    }

    /// Some `s` with `w ∈ ∂φ(s)` for laws whose derivative range is all of ℝ.
    fn inverse_select(&self, w: f64) -> Option<f64> {
        let (at, left, right) = match self.kink() {
            Some(k) => (k.at, k.left, k.right),
            None => {
                let s0 = self.select(0.0);
                (0.0, s0, s0)
            }
        };
        if w >= left && w <= right {
            return Some(at);
        }
        let dir = if w > right { 1.0 } else { -1.0 };
        let mut step = 1.0;
        let mut far = at + dir * step;
        let mut guard = 0;
        while (self.select(far) - w) * dir < 0.0 {
            step *= 2.0;
            far = at + dir * step;
            guard += 1;
            if guard > 1100 || !far.is_finite() {
                return None;
            }
        }
        let (lo, hi) = if dir > 0.0 { (at, far) } else { (far, at) };
        solve_monotone(
            |s| self.select(s) - w,
            |s| self.curvature(s),
            lo,
            hi,
            w.abs().max(1.0),
        )
        .ok()
    }
}

fn min_norm(left: f64, right: f64) -> f64 {
    if left <= 0.0 && right >= 0.0 {
        0.0
    } else if left > 0.0 {
        left
    } else {
        right
    }
}

/// Root of a nondecreasing `g` on `[lo, hi]` with `g(lo) <= 0 <= g(hi)`, by
/// Newton steps safeguarded with bisection. Errors carry `(residual, iters)`.
pub(crate) fn solve_monotone(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    scale: f64,
) -> std::result::Result<f64, (f64, usize)> {
    const MAX_ITERS: usize = 300;
    let tol = 4.0 * f64::EPSILON * scale;
    let mut z = 0.5 * (lo + hi);
    for it in 0..MAX_ITERS {
        let gz = g(z);
        if gz == 0.0 {
            return Ok(z);
        }
        if gz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let d = dg(z);
        let newton = if d > 0.0 && d.is_finite() { z - gz / d } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - z).abs() <= tol * 0.25 {
            return Ok(next);
        }
        z = next;
        let _ = it;
    }
    Err((g(z).abs(), MAX_ITERS))
}

/// Adaptive grid supremum of `ωs − φ(s)` with radius doubling. Returns `+∞`
/// when the supremum still grows at the radius cap.
pub(crate) fn grid_conjugate(phi: impl Fn(f64) -> f64, w: f64) -> f64 {
    const POINTS: usize = 2001;
    const RADIUS_CAP: f64 = 1e6;
    const TOL: f64 = 1e-10;
    let objective = |s: f64| w * s - phi(s);
    let scan = |radius: f64| -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..POINTS {
            let s = -radius + 2.0 * radius * k as f64 / (POINTS - 1) as f64;
            let v = objective(s);
            if v > best.0 {
                best = (v, s);
            }
        }
        best
    };
    let mut radius = 1.0;
    let mut prev = scan(radius);
    loop {
        let next_radius = 2.0 * radius;
        let next = scan(next_radius);
        if next.0 - prev.0 < TOL && next.1.abs() < 0.99 * next_radius {
            let cell = 2.0 * next_radius / (POINTS - 1) as f64;
            return golden_max(objective, next.1 - cell, next.1 + cell).max(next.0);
        }
        if next_radius >= RADIUS_CAP {
            return f64::INFINITY;
        }
        radius = next_radius;
        prev = next;
    }
}

/// Golden-section maximization of a concave function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}
