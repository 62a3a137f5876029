//! Growth constants and sampled checks of the structural hypotheses on `j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, FluxKind, FluxModel, Vector};
use crate::error::Result;
use crate::expr::Expr;

/// Where to sample `(t, x, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub t_range: [f64; 2],
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Gradient samples are drawn from the box `[-radius, radius]^N`.
    pub radius: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            t_range: [0.0, 1.0],
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
            radius: 4.0,
            count: 200,
            seed: 1,
        }
    }
}

pub(crate) struct Sample {
    pub t: f64,
    pub s: f64,
    pub x: [f64; 2],
    pub r: Vector,
    pub q: Vector,
    pub theta: f64,
}

impl SampleSpec {
    pub(crate) fn draw(&self, dim: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let [t0, t1] = self.t_range;
        let time = |rng: &mut ChaCha8Rng| {
            if t1 > t0 {
                rng.random_range(t0..=t1)
            } else {
                t0
            }
        };
        let mut out = Vec::with_capacity(self.count);
        for k in 0..self.count {
            let t = time(&mut rng);
            let s = time(&mut rng);
            let mut x = [0.0; 2];
            let mut r = [0.0; 2];
            let mut q = [0.0; 2];
            for a in 0..dim {
                x[a] = if self.upper[a] > self.lower[a] {
                    rng.random_range(self.lower[a]..=self.upper[a])
                } else {
                    self.lower[a]
                };
                r[a] = rng.random_range(-self.radius..=self.radius);
                q[a] = rng.random_range(-self.radius..=self.radius);
            }
            // Exercise the kinks and the origin explicitly.
            if k % 10 == 0 {
                r = [0.0; 2];
            }
            out.push(Sample {
                t,
                s,
                x,
                r,
                q,
                theta: rng.random(),
            });
        }
        out
    }
}

/// Constants of the two-sided power growth bound
/// `C1|r|^p + C1⁰ ≤ j(t,x,r) ≤ C2|r|^p + C2⁰` and the selection bound
/// `|ξ| ≤ C3|r|^{p−1} + C3⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub p: f64,
    pub c1: f64,
    pub c1_0: f64,
    pub c2: f64,
    pub c2_0: f64,
    pub c3: f64,
    pub c3_0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Coercivity {
    Strong(GrowthConstants),
    /// Superlinear `j` and `j*` with `j(r) ≤ γ1 j(−r) + γ2`.
    Weak { gamma1: f64, gamma2: f64 },
    /// Linear growth: neither bound holds (total variation).
    Singular,
    /// Custom law without declared constants.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub constants: Option<GrowthConstants>,
    pub lower_violation: f64,
    pub upper_violation: f64,
    pub selection_violation: f64,
    pub weakly_coercive_only: bool,
    pub pass: bool,
}

/// Worst sampled violation of each hypothesis; 0 means satisfied exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub normalization: f64,
    pub convexity: f64,
    pub monotonicity: f64,
    pub subgradient: f64,
    pub growth: Option<f64>,
    pub symmetry: Option<f64>,
    pub time_regularity: Option<f64>,
}

impl HypothesisReport {
    pub fn worst(&self) -> f64 {
        [
            self.normalization,
            self.convexity,
            self.monotonicity,
            self.subgradient,
            self.growth.unwrap_or(0.0),
            self.symmetry.unwrap_or(0.0),
            self.time_regularity.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn coefficient_range(list: &[Expr], spec: &SampleSpec, dim: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut visit = |t: f64, x: &[f64]| {
        for e in list {
            let v = e.eval(t, x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    };
    for s in spec.draw(dim) {
        visit(s.t, &s.x[..dim]);
    }
    for &t in &spec.t_range {
        for corner in 0..(1 << dim) {
            let mut x = [0.0; 2];
            for a in 0..dim {
                x[a] = if corner & (1 << a) == 0 {
                    spec.lower[a]
                } else {
                    spec.upper[a]
                };
            }
            visit(t, &x[..dim]);
        }
    }
    (lo, hi)
}

impl FluxModel {
    /// Growth class of the model over the sampled `(t, x)` region.
    pub fn coercivity(&self, spec: &SampleSpec) -> Coercivity {
        let n = self.dim as f64;
        let power = |p: f64, lo: f64, hi: f64, shift: f64| {
            let c = n.powf(1.0 - p / 2.0);
            let sel = n.powf(2.0 - p).max(1.0).sqrt();
            Coercivity::Strong(GrowthConstants {
                p,
                c1: lo * c.min(1.0) / p,
                c1_0: 0.0,
                c2: (hi + shift) * c.max(1.0) / p,
                c2_0: 0.0,
                c3: (hi + shift) * sel,
                c3_0: 0.0,
            })
        };
        match &self.kind {
            FluxKind::Quadratic => power(2.0, 1.0, 1.0, 0.0),
            FluxKind::PLaplacian { p, alpha } => {
                let (lo, hi) = coefficient_range(alpha, spec, self.dim);
                power(*p, lo, hi, 0.0)
            }
            FluxKind::Fractured { p, alpha, .. } => {
                let (lo, hi) = coefficient_range(alpha, spec, self.dim);
                power(*p, lo, hi, 1.0)
            }
            FluxKind::LogGrowth { .. } => Coercivity::Weak {
                gamma1: 1.0,
                gamma2: 0.0,
            },
            FluxKind::TotalVariation { .. } => Coercivity::Singular,
            FluxKind::Custom { coercivity, .. } => coercivity.unwrap_or(Coercivity::Unknown),
        }
    }

    /// A constant `L` with `j(t,·) ≤ j(s,·) + L|t − s| j(t,·)` on the sampled
    /// region: `sup |∂_t c| / inf c` over the model's coefficients.
    pub fn time_lipschitz(&self, spec: &SampleSpec) -> f64 {
        let coefs: Vec<Expr> = match &self.kind {
            FluxKind::PLaplacian { alpha, .. } | FluxKind::Fractured { alpha, .. } => alpha.clone(),
            FluxKind::LogGrowth { a } => vec![a.clone()],
            _ => return 0.0,
        };
        if !coefs.iter().any(Expr::depends_on_time) {
            return 0.0;
        }
        let (lo, _) = coefficient_range(&coefs, spec, self.dim);
        let [t0, t1] = spec.t_range;
        let steps = 256;
        let dt = (t1 - t0) / steps as f64;
        let d = 1e-6 * (1.0 + t0.abs().max(t1.abs()));
        let mut slope: f64 = 0.0;
        for s in spec.draw(self.dim) {
            for k in 0..=steps {
                let t = t0 + k as f64 * dt;
                for e in &coefs {
                    let ds = (e.eval(t + d, &s.x[..self.dim]) - e.eval(t - d, &s.x[..self.dim])) / (2.0 * d);
                    slope = slope.max(ds.abs());
                }
            }
        }
        // Small cushion for the sampled supremum.
        1.05 * slope / lo
    }

    /// Check the two-sided growth bound and the selection bound on samples.
    pub fn growth_check(&self, spec: &SampleSpec, tol: f64) -> Result<GrowthReport> {
        let constants = match self.coercivity(spec) {
            Coercivity::Strong(c) => c,
            other => {
                return Ok(GrowthReport {
                    constants: None,
                    lower_violation: f64::INFINITY,
                    upper_violation: f64::INFINITY,
                    selection_violation: f64::INFINITY,
                    weakly_coercive_only: matches!(other, Coercivity::Weak { .. }),
                    pass: false,
                })
            }
        };
        let c = constants;
        let (mut lower, mut upper, mut selection) = (0.0f64, 0.0f64, 0.0f64);
        for s in spec.draw(self.dim) {
            let pw = self.at(s.t, &s.x[..self.dim])?;
            for r in [s.r, s.q] {
                let m = dot(r, r).sqrt();
                let j = pw.value(r);
                let xi = pw.select(r);
                lower = lower.max(c.c1 * m.powf(c.p) + c.c1_0 - j);
                upper = upper.max(j - c.c2 * m.powf(c.p) - c.c2_0);
                selection = selection.max(dot(xi, xi).sqrt() - c.c3 * m.powf(c.p - 1.0) - c.c3_0);
            }
        }
        Ok(GrowthReport {
            constants: Some(c),
            lower_violation: lower,
            upper_violation: upper,
            selection_violation: selection,
            weakly_coercive_only: false,
            pass: lower <= tol && upper <= tol && selection <= tol,
        })
    }

    /// Sampled violations of normalization, convexity, monotonicity of the
    /// selection, the subgradient inequality, and whichever of the growth,
    /// symmetry and time-regularity hypotheses apply to the model.
    pub fn check_hypotheses(&self, spec: &SampleSpec) -> Result<HypothesisReport> {
        let dim = self.dim;
        let coercivity = self.coercivity(spec);
        let lip = self.time_lipschitz(spec);
        let timed = self.depends_on_time();
        let (mut norm, mut conv, mut mono, mut subg) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let (mut growth, mut sym, mut time) = (0.0f64, 0.0f64, 0.0f64);
        for s in spec.draw(dim) {
            let pw = self.at(s.t, &s.x[..dim])?;
            let (r, q, th) = (s.r, s.q, s.theta);
            let (jr, jq) = (pw.value(r), pw.value(q));
            norm = norm.max(pw.value([0.0; 2]).abs()).max(-jr).max(-jq);
            let mid = [th * r[0] + (1.0 - th) * q[0], th * r[1] + (1.0 - th) * q[1]];
            conv = conv.max(pw.value(mid) - th * jr - (1.0 - th) * jq);
            let (br, bq) = (pw.select(r), pw.select(q));
            let d = [r[0] - q[0], r[1] - q[1]];
            mono = mono.max(-dot([br[0] - bq[0], br[1] - bq[1]], d));
            subg = subg.max(jr + dot(br, [q[0] - r[0], q[1] - r[1]]) - jq);
            match coercivity {
                Coercivity::Strong(c) => {
                    let m = dot(r, r).sqrt();
                    growth = growth
                        .max(c.c1 * m.powf(c.p) + c.c1_0 - jr)
                        .max(jr - c.c2 * m.powf(c.p) - c.c2_0);
                }
                Coercivity::Weak { gamma1, gamma2 } => {
                    sym = sym.max(jr - gamma1 * pw.value([-r[0], -r[1]]) - gamma2);
                }
                _ => {}
            }
            if timed {
                let other = self.at(s.s, &s.x[..dim])?;
                time = time.max(jr - other.value(r) - lip * (s.t - s.s).abs() * jr);
            }
        }
        let rel = |v: f64| v.max(0.0);
        Ok(HypothesisReport {
            normalization: rel(norm),
            convexity: rel(conv),
            monotonicity: rel(mono),
            subgradient: rel(subg),
            growth: matches!(coercivity, Coercivity::Strong(_)).then_some(rel(growth)),
            symmetry: matches!(coercivity, Coercivity::Weak { .. }).then_some(rel(sym)),
            time_regularity: timed.then_some(rel(time)),
        })
    }
}
