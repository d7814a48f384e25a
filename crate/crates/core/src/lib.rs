//! Finite-volume simulation of the porous-medium nutrient-taxis system
//!
//! ```text
//! u_t = Δ(εu + u^m) − χ∇·(u∇v) + ξuv − ρu − εu²
//! v_t = Δv − uv + μv(1 − v)
//! ```
//!
//! on a box with zero-flux boundaries, together with diagnostics for its
//! large-time behavior and the critical exponent analysis of the bootstrap
//! recurrence.

pub mod diagnostics;
pub mod exponent;
pub mod grid;
pub mod io;
pub mod model;
pub mod solver;

pub use diagnostics::{DiagnosticsRecord, RunStats, Verdict, VerdictStatus};
pub use exponent::{Classification, ExponentReport, IterationSettings};
pub use grid::{FaceFlux, Field, Grid, GridError};
pub use io::config::{parse_config, RunConfig};
pub use io::report::RunReport;
pub use model::{EquilibriumPrediction, LargeTimeCase, Limit, ModelParams, Regime};
pub use solver::{run, step, RunFailure, SimState, SolverError, StepControl};
