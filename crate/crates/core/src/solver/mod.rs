//! Time integration of the porous-medium nutrient-taxis system.
//!
//! One step is an IMEX split:
//!
//! 1. `u` explicitly in conservative flux form,
//!    `u' = u + dt * [div(∇(εu + u^m) - χ u_up ∇v) + ξuv - ρu - εu²]`,
//!    with the taxis flux upwinded on the donor cell;
//! 2. `v` with backward-Euler diffusion and explicit reaction,
//!    `(I - dt Δ_N) v' = v + dt * (-uv + μv(1 - v))`, solved by matrix-free CG.
//!
//! Both reactions use the start-of-step `u`, so the `uv` exchange term cancels
//! exactly in `∫(u + ξv)`.

pub mod cg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{DiagnosticsRecord, Recorder, RunStats};
use crate::grid::{div_faces, FaceFlux, Field, Grid};
use crate::model::{reaction_u, reaction_v, ModelParams};
use cg::{conjugate_gradient, ShiftedLaplacian};

/// Relative residual target for the implicit nutrient solve.
pub const CG_TOLERANCE: f64 = 1e-10;
pub const CG_MAX_ITERATIONS: usize = 10_000;
/// Pre-clamp excursions below `-NEGATIVITY_TOLERANCE * ||u||_∞` abort the step.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid step control: {0}")]
    InvalidControl(String),
    #[error("step of size {dt:e} produced {field} = {min_value:e}, below -{tolerance:e}")]
    CflViolation {
        field: &'static str,
        min_value: f64,
        tolerance: f64,
        dt: f64,
    },
    #[error("implicit nutrient solve failed: {0}")]
    LinearSolve(#[from] cg::CgFailure),
    #[error("step failed even after halving dt to {dt:e} (dt_min = {dt_min:e}): {cause}")]
    StepTooSmall {
        dt: f64,
        dt_min: f64,
        cause: Box<SolverError>,
    },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// `(u, v, t)` on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
}

impl SimState {
    pub fn new(u: Field, v: Field, t: f64) -> Result<Self, SolverError> {
        let s = SimState { u, v, t };
        s.validate()?;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.u.grid() != self.v.grid() {
            return Err(SolverError::InvalidState(
                "u and v live on different grids".into(),
            ));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(SolverError::InvalidState(format!(
                "time must be finite and >= 0, got {}",
                self.t
            )));
        }
        for (name, f) in [("u", &self.u), ("v", &self.v)] {
            if !f.is_finite() {
                return Err(SolverError::InvalidState(format!("{name} is not finite")));
            }
            if f.min() < 0.0 {
                return Err(SolverError::InvalidState(format!(
                    "{name} must be nonnegative, min is {}",
                    f.min()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub cfl_safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub output_cadence: f64,
}

impl StepControl {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidControl(msg));
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.dt_min > 0.0 && self.dt_max > 0.0 && self.dt_min <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt_max, got {} and {}",
                self.dt_min, self.dt_max
            ));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.output_cadence > 0.0 && self.output_cadence.is_finite()) {
            return bad(format!(
                "output_cadence must be positive, got {}",
                self.output_cadence
            ));
        }
        Ok(())
    }
}

/// Optional forcing added to both equations. Used by manufactured-solution tests.
pub trait SourceTerm: Sync {
    /// `(S_u, S_v)` at position `x` and time `t`.
    fn eval(&self, x: &[f64], t: f64) -> (f64, f64);
}

/// `χ · u_donor · ∂v` on every interior face; the donor is the cell the flux leaves.
pub fn taxis_flux(u: &Field, v: &Field, chi: f64) -> FaceFlux {
    let grid = *u.grid();
    let (uu, vv) = (u.values(), v.values());
    FaceFlux::from_interior(grid, |axis, left, right| {
        let dv = (vv[right] - vv[left]) / grid.spacing()[axis];
        // transport runs up the nutrient gradient
        let donor = if dv >= 0.0 { uu[left] } else { uu[right] };
        chi * donor * dv
    })
}

fn pressure(u: f64, p: &ModelParams) -> f64 {
    let um = if p.m == 2.0 { u * u } else { u.powf(p.m) };
    p.eps_reg * u + um
}

/// Face gradient of `εu + u^m`, with `u^m` formed cellwise before differencing.
pub fn diffusive_flux_u(u: &Field, p: &ModelParams) -> FaceFlux {
    let grid = *u.grid();
    let w: Vec<f64> = u.values().iter().map(|&x| pressure(x, p)).collect();
    FaceFlux::from_interior(grid, |axis, left, right| {
        (w[right] - w[left]) / grid.spacing()[axis]
    })
}

/// Largest step that keeps the explicit update monotone, scaled by the safety
/// factor and clamped to `[dt_min, dt_max]`.
///
/// Transport contributes `2·dim·D_max/h² + 2·dim·V_max/h` with
/// `D_max = ε + m·(max u)^{m-1}` and `V_max = χ·max|∇v|`. The explicit
/// reactions add `ρ + ε·max u` to the `u` rate and `max u + μ·max(1, max v)`
/// to the `v` rate.
pub fn stable_dt(s: &SimState, p: &ModelParams, ctl: &StepControl) -> f64 {
    let grid = s.grid();
    let dim = grid.dim() as f64;
    let u_max = s.u.max().max(0.0);
    let v_max = s.v.max().max(0.0);
    let d_max = p.eps_reg + p.m * u_max.powf(p.m - 1.0);
    let v_speed = p.chi * crate::grid::grad_faces(&s.v).max_abs();
    let u_reaction = if u_max > 0.0 {
        p.rho + p.eps_reg * u_max
    } else {
        0.0
    };

    let mut rate: f64 = 0.0;
    for &h in grid.spacing() {
        let transport = if u_max > 0.0 {
            2.0 * dim * d_max / (h * h) + 2.0 * dim * v_speed / h
        } else {
            0.0
        };
        rate = rate.max(transport + u_reaction);
    }
    if v_max > 0.0 {
        rate = rate.max(u_max + p.mu * v_max.max(1.0));
    }
    let dt = if rate > 0.0 {
        ctl.cfl_safety / rate
    } else {
        f64::INFINITY
    };
    dt.clamp(ctl.dt_min, ctl.dt_max)
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    /// Most negative pre-clamp `u` relative to `||u||_∞` (zero when none).
    pub u_excursion_ratio: f64,
    /// Mass added back by clamping small negative values to zero.
    pub clamped_u_mass: f64,
    pub clamped_v_mass: f64,
    pub cg_iterations: usize,
}

/// Advances one step; see [`step_with_stats`].
pub fn step(s: &SimState, dt: f64, p: &ModelParams) -> Result<SimState, SolverError> {
    step_with_stats(s, dt, p, None).map(|(state, _)| state)
}

/// One IMEX step of size `dt`, optionally forced.
pub fn step_with_stats(
    s: &SimState,
    dt: f64,
    p: &ModelParams,
    source: Option<&dyn SourceTerm>,
) -> Result<(SimState, StepStats), SolverError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidStep(dt));
    }
    let grid = *s.grid();
    let n = grid.len();
    let mut stats = StepStats::default();

    let forcing: Option<Vec<(f64, f64)>> = source.map(|src| {
        (0..n)
            .map(|i| {
                let x = grid.cell_center(i);
                src.eval(&x[..grid.dim()], s.t)
            })
            .collect()
    });

    // (a) u: explicit conservative update
    let flux = diffusive_flux_u(&s.u, p).sub(&taxis_flux(&s.u, &s.v, p.chi));
    let div = div_faces(&flux);
    let (u, v) = (s.u.values(), s.v.values());
    let mut u_new: Vec<f64> = (0..n)
        .map(|i| {
            let mut rhs = div.values()[i] + reaction_u(u[i], v[i], p);
            if let Some(f) = &forcing {
                rhs += f[i].0;
            }
            u[i] + dt * rhs
        })
        .collect();

    let u_scale = s.u.max_abs();
    let u_tol = NEGATIVITY_TOLERANCE * u_scale;
    let u_min = u_new.iter().copied().fold(f64::INFINITY, f64::min);
    if !u_min.is_finite() || u_min < -u_tol {
        return Err(SolverError::CflViolation {
            field: "u",
            min_value: u_min,
            tolerance: u_tol,
            dt,
        });
    }
    if u_min < 0.0 {
        stats.u_excursion_ratio = u_min / u_scale;
        for x in u_new.iter_mut().filter(|x| **x < 0.0) {
            stats.clamped_u_mass -= *x * grid.cell_volume();
            *x = 0.0;
        }
    }

    // (b) v: implicit diffusion, explicit reaction
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = reaction_v(u[i], v[i], p);
            if let Some(f) = &forcing {
                r += f[i].1;
            }
            v[i] + dt * r
        })
        .collect();
    let v_tol = NEGATIVITY_TOLERANCE * s.v.max_abs();
    let rhs_min = rhs.iter().copied().fold(f64::INFINITY, f64::min);
    if !rhs_min.is_finite() || rhs_min < -v_tol {
        return Err(SolverError::CflViolation {
            field: "v",
            min_value: rhs_min,
            tolerance: v_tol,
            dt,
        });
    }
    let op = ShiftedLaplacian { grid: &grid, dt };
    // Starting from the right-hand side keeps every Krylov correction zero-sum,
    // so the solve preserves ∫v to round-off regardless of the CG tolerance.
    let mut v_new = rhs.clone();
    let cg_stats = conjugate_gradient(&op, &rhs, &mut v_new, CG_TOLERANCE, CG_MAX_ITERATIONS)?;
    stats.cg_iterations = cg_stats.iterations;
    for x in v_new.iter_mut().filter(|x| **x < 0.0) {
        stats.clamped_v_mass -= *x * grid.cell_volume();
        *x = 0.0;
    }

    Ok((
        SimState {
            u: Field::from_vec_unchecked(grid, u_new),
            v: Field::from_vec_unchecked(grid, v_new),
            t: s.t + dt,
        },
        stats,
    ))
}

/// Receives a snapshot at every output time.
pub trait Observer {
    fn observe(&mut self, state: &SimState, record: &DiagnosticsRecord);
}

impl<F: FnMut(&SimState, &DiagnosticsRecord)> Observer for F {
    fn observe(&mut self, state: &SimState, record: &DiagnosticsRecord) {
        self(state, record)
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: SolverError,
    pub partial: Box<DiagnosticsRecord>,
    /// Last accepted state; absent when the inputs were rejected up front.
    pub last_state: Option<Box<SimState>>,
}

impl From<SolverError> for RunFailure {
    fn from(error: SolverError) -> Self {
        RunFailure {
            error,
            partial: Box::default(),
            last_state: None,
        }
    }
}

/// Integrates from `s0.t` to `ctl.t_end`, sampling diagnostics every
/// `output_cadence` and at the final time.
pub fn run(
    s0: &SimState,
    p: &ModelParams,
    ctl: &StepControl,
    observers: &mut [&mut dyn Observer],
) -> Result<DiagnosticsRecord, RunFailure> {
    run_with_source(s0, p, ctl, observers, None).map(|(rec, _)| rec)
}

/// [`run`] with an optional source term; also returns the final state.
pub fn run_with_source(
    s0: &SimState,
    p: &ModelParams,
    ctl: &StepControl,
    observers: &mut [&mut dyn Observer],
    source: Option<&dyn SourceTerm>,
) -> Result<(DiagnosticsRecord, SimState), RunFailure> {
    s0.validate()?;
    ctl.validate()?;

    let mut recorder = Recorder::new(s0, p);
    let mut stats = RunStats::default();
    let mut state = s0.clone();

    recorder.sample(&state);
    for obs in observers.iter_mut() {
        obs.observe(&state, recorder.record());
    }

    let t0 = s0.t;
    let mut outputs_done: u64 = 0;
    let next_output = |k: u64| (t0 + (k + 1) as f64 * ctl.output_cadence).min(ctl.t_end);

    while state.t < ctl.t_end {
        let target = next_output(outputs_done);
        let mut dt = stable_dt(&state, p, ctl);
        let remaining = target - state.t;
        let snap = remaining <= dt * (1.0 + 1e-9);
        if snap {
            dt = remaining;
        }

        let attempt = step_with_stats(&state, dt, p, source).or_else(|first| {
            let half = 0.5 * dt;
            stats.retries += 1;
            if half < ctl.dt_min {
                return Err(SolverError::StepTooSmall {
                    dt: half,
                    dt_min: ctl.dt_min,
                    cause: Box::new(first),
                });
            }
            step_with_stats(&state, half, p, source).map_err(|second| SolverError::StepTooSmall {
                dt: half,
                dt_min: ctl.dt_min,
                cause: Box::new(second),
            })
        });
        let (mut next, step_stats) = match attempt {
            Ok(ok) => ok,
            Err(error) => {
                recorder.set_stats(stats);
                return Err(RunFailure {
                    error,
                    partial: Box::new(recorder.finish()),
                    last_state: Some(Box::new(state)),
                });
            }
        };
        let taken = next.t - state.t;
        stats.absorb(&step_stats, taken);

        // land exactly on output times when the full step was taken
        let reached = snap && (taken - dt).abs() <= 1e-15 * dt.max(1.0);
        if reached {
            next.t = target;
        }
        state = next;
        if reached || state.t >= target {
            outputs_done += 1;
            recorder.sample(&state);
            for obs in observers.iter_mut() {
                obs.observe(&state, recorder.record());
            }
        }
    }

    recorder.set_stats(stats);
    Ok((recorder.finish(), state))
}
