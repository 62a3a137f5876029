//! Run configuration: JSON documents, presets and `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flux::{FluxKind, FluxModel};
use crate::grid::GridSpec;
use crate::step::StepConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Flow,
    Convergence,
    Contraction,
    Asymptotics,
    Obstacle,
    Tv,
}

/// Mode-specific settings. Unused ones are ignored by other modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    /// Convergence: number of halvings of the base step.
    pub refinements: usize,
    /// Convergence: required observed order; `None` asks for strictly
    /// decreasing differences instead.
    pub min_order: Option<f64>,
    /// Contraction: added to `y0` for the perturbed run.
    pub perturbation: Expr,
    /// Contraction: amplitude of seeded uniform noise added on top.
    pub noise: f64,
    /// Contraction: added to `f` for the perturbed run.
    pub perturb_f: Expr,
    pub contraction_tolerance: f64,
    /// Asymptotics: horizon of the long run; default `50/μ1`.
    pub t_long: Option<f64>,
    pub asymptotics_tolerance: f64,
    pub energy_tolerance: f64,
    /// Obstacle: bound on the complementarity residual.
    pub complementarity_tolerance: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            refinements: 3,
            min_order: None,
            perturbation: "0.1*cos(3*x)".parse().expect("valid literal"),
            noise: 0.0,
            perturb_f: Expr::constant(0.0),
            contraction_tolerance: 1e-8,
            t_long: None,
            asymptotics_tolerance: 1e-6,
            energy_tolerance: 1e-10,
            complementarity_tolerance: 1e-6,
        }
    }
}

fn zero() -> Expr {
    Expr::constant(0.0)
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub grid: GridSpec,
    pub model: FluxKind,
    #[serde(default = "zero")]
    pub y0: Expr,
    #[serde(default = "zero")]
    pub f: Expr,
    #[serde(default = "zero")]
    pub g: Expr,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub mode: Mode,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Write a field CSV every k steps (the last step is always written).
    #[serde(default = "one")]
    pub save_every: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Preset ids with their base documents.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "constant-1d",
        r#"{"grid": {"kind": "interval", "n": 16}, "model": {"id": "quadratic"},
            "y0": 1, "T": 1, "n": 10, "mode": "flow"}"#,
    ),
    (
        "quadratic-1d",
        r#"{"grid": {"kind": "interval", "n": 32}, "model": {"id": "quadratic"},
            "y0": "cos(pi*x)", "f": "(pi^2 - 1)*exp(-t)*cos(pi*x)", "g": "-exp(-t)*cos(pi*x)",
            "T": 1, "n": 20, "mode": "flow", "checks": {"min_order": 0.8}}"#,
    ),
    (
        "quadratic-2d",
        r#"{"grid": {"kind": "rectangle", "nx": 8, "ny": 8}, "model": {"id": "quadratic"},
            "y0": "cos(pi*x)*cos(pi*y)", "T": 0.5, "n": 10, "mode": "flow"}"#,
    ),
    (
        "plaplacian-1d",
        r#"{"grid": {"kind": "interval", "n": 32}, "model": {"id": "plaplacian", "p": 4, "alpha": [1]},
            "y0": "sin(pi*x)", "T": 0.5, "n": 20, "mode": "flow"}"#,
    ),
    (
        "fractured-1d",
        r#"{"grid": {"kind": "interval", "n": 32},
            "model": {"id": "fractured", "p": 2, "alpha": [1], "thresholds": [0.5]},
            "y0": "sin(2*pi*x)", "T": 0.5, "n": 20, "mode": "flow"}"#,
    ),
    (
        "loggrowth-1d",
        r#"{"grid": {"kind": "interval", "n": 32}, "model": {"id": "loggrowth", "a": 1},
            "y0": "sin(2*pi*x)", "T": 0.5, "n": 20, "mode": "flow"}"#,
    ),
    (
        "tv-1d",
        r#"{"grid": {"kind": "interval", "n": 32}, "model": {"id": "tv", "rho": 1},
            "y0": "heaviside(x - 0.5)", "T": 0.5, "n": 20, "mode": "tv"}"#,
    ),
    (
        "obstacle-1d",
        r#"{"grid": {"kind": "interval", "n": 32}, "model": {"id": "quadratic"},
            "y0": "max(0, sin(2*pi*x))", "f": -2, "T": 0.5, "n": 20, "mode": "obstacle"}"#,
    ),
];

pub fn preset(id: &str) -> Option<Value> {
    PRESETS
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, doc)| serde_json::from_str(doc).expect("preset documents are valid JSON"))
}

/// Merge `top` into `base`: objects recursively, everything else replaced.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`; the value is read as JSON when it parses, else as a
/// string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::BadConfig(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::BadConfig(format!("override key `{key}` has an empty segment")));
        }
        let map = slot
            .as_object_mut()
            .ok_or_else(|| Error::BadConfig(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        slot = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one segment")
}

/// Parse a JSON document (with optional preset and overrides) into a
/// validated configuration.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let user: Value = Value::deserialize(de).map_err(|e| Error::BadConfig(format!("parse error: {e}")))?;
    if !user.is_object() {
        return Err(Error::BadConfig("config must be a JSON object".into()));
    }
    let mut doc = match user.get("preset") {
        Some(Value::String(id)) => {
            preset(id).ok_or_else(|| Error::BadConfig(format!("unknown preset `{id}`")))?
        }
        Some(_) => return Err(Error::BadConfig("`preset` must be a string".into())),
        None => Value::Object(Map::new()),
    };
    merge(&mut doc, user);
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        Error::BadConfig(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        match self.grid {
            GridSpec::Interval { .. } => 1,
            GridSpec::Rectangle { .. } => 2,
        }
    }

    pub fn model(&self) -> Result<FluxModel> {
        FluxModel::new(self.model.clone(), self.dim())
    }

    /// Step count from `n` or `h`.
    pub fn steps(&self) -> Result<usize> {
        match (self.n, self.h) {
            (Some(n), None) => Ok(n),
            (None, Some(h)) => {
                let n = (self.horizon / h).round();
                if n >= 1.0 && (n * h - self.horizon).abs() <= 1e-9 * self.horizon {
                    Ok(n as usize)
                } else {
                    Err(Error::BadConfig(format!("h = {h} does not divide T = {}", self.horizon)))
                }
            }
            _ => Err(Error::BadConfig("give exactly one of `n` and `h`".into())),
        }
    }

    /// Collect every violation, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = vec![];
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            problems.push(format!("T must be > 0, got {}", self.horizon));
        }
        if let Err(e) = self.steps() {
            problems.push(message(e));
        }
        if self.n == Some(0) {
            problems.push("n must be >= 1".into());
        }
        if let Err(e) = self.model() {
            problems.push(message(e));
        }
        if let Err(e) = self.step.validate() {
            problems.push(message(e));
        }
        if self.save_every == 0 {
            problems.push("save_every must be >= 1".into());
        }
        if self.mode == Mode::Tv && !matches!(self.model, FluxKind::TotalVariation { .. }) {
            problems.push("mode `tv` needs model id `tv`".into());
        }
        if self.mode == Mode::Convergence && self.checks.refinements < 2 {
            problems.push("convergence needs refinements >= 2".into());
        }
        if matches!(self.mode, Mode::Asymptotics) && (self.f.depends_on_time() || self.g.depends_on_time()) {
            problems.push("asymptotics need time-independent f and g".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::BadConfig(problems.join("; ")))
        }
    }
}

fn message(e: Error) -> String {
    match e {
        Error::BadConfig(m) | Error::InvalidInput(m) => m,
        other => other.to_string(),
    }
}
