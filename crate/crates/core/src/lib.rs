//! Implicit-Euler variational time stepping for nonlinear parabolic flows
//! `y_t − ∇·β(t, x, ∇y) ∋ f` in `Ω` with the dynamic flux boundary law
//! `β(t, x, ∇y)·ν + y_t = g` on `Γ`, where `β = ∂j` is the subdifferential of
//! a convex potential.
//!
//! Each time step is the unique minimizer of a strictly convex functional.
//! Multivalued laws are handled through Moreau–Yosida regularization with
//! λ-continuation; total variation steps use a primal-dual method.

pub mod cli;
pub mod error;
pub mod expr;
pub mod flow;
pub mod flux;
pub mod grid;
pub mod linalg;
pub mod oracles;
pub mod step;

pub use error::{Error, Result};
pub use expr::Expr;
pub use flow::{run_flow, ProblemData, Source, Trajectory};
pub use flux::{FluxKind, FluxModel};
pub use grid::{BoundaryValues, Field, GradientField, Grid, GridSpec};
pub use step::{StepConfig, StepSolution};
