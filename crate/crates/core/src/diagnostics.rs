//! Functionals of the state and verdicts on whole runs.
//!
//! Every `1/v` and `ln v` uses `max(v, V_FLOOR)`; the number of cells at the
//! floor is recorded with each sample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{compensated_sum, grad_faces, laplacian_neumann, lp_norm, Field};
use crate::model::{predict_equilibrium, EquilibriumPrediction, LargeTimeCase, Limit, ModelParams};
use crate::solver::{SimState, StepStats};

pub const V_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("decay fit window [{t0}, {t1}] holds {samples} samples, need at least 3")]
    WindowTooShort { t0: f64, t1: f64, samples: usize },
    #[error("mean density vanishes at t = {0}; cannot take its logarithm")]
    MassVanished(f64),
}

/// Aggregated solver statistics for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: u64,
    pub retries: u64,
    /// Most negative pre-clamp `u / ||u||_∞` seen over all steps (zero if none).
    pub min_u_excursion_ratio: f64,
    pub clamped_u_mass: f64,
    pub clamped_v_mass: f64,
    pub max_cg_iterations: usize,
    pub dt_smallest: f64,
    pub dt_largest: f64,
}

impl RunStats {
    pub(crate) fn absorb(&mut self, s: &StepStats, dt: f64) {
        if self.steps == 0 {
            self.dt_smallest = dt;
            self.dt_largest = dt;
        } else {
            self.dt_smallest = self.dt_smallest.min(dt);
            self.dt_largest = self.dt_largest.max(dt);
        }
        self.steps += 1;
        self.min_u_excursion_ratio = self.min_u_excursion_ratio.min(s.u_excursion_ratio);
        self.clamped_u_mass += s.clamped_u_mass;
        self.clamped_v_mass += s.clamped_v_mass;
        self.max_cg_iterations = self.max_cg_iterations.max(s.cg_iterations);
    }
}

/// Time series sampled at the output cadence.
///
/// `u_mass` and `v_mass` are the spatial means `a(t)` and `b(t)`;
/// `combined_mass` is `a + ξb`. `res_u` and `res_v` measure the distance to
/// the predicted limits (`NaN` when no prediction applies): `||u - u_∞||_{L²}`
/// and `||v - v_∞||_∞`, or `||v - mean v||_∞` when only an interval is known.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub times: Vec<f64>,
    pub u_mass: Vec<f64>,
    pub v_mass: Vec<f64>,
    pub combined_mass: Vec<f64>,
    pub u_linf: Vec<f64>,
    pub v_linf: Vec<f64>,
    pub grad_v_linf: Vec<f64>,
    pub energy_e: Vec<f64>,
    pub lyapunov_f: Vec<f64>,
    pub grad_v_l2: Vec<f64>,
    pub res_u: Vec<f64>,
    pub res_v: Vec<f64>,
    pub u_min: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_floored_cells: Vec<usize>,
    pub xi: f64,
    pub prediction: Option<EquilibriumPrediction>,
    pub fitted_decay_rate: Option<f64>,
    /// `m` exceeds the critical exponent.
    pub proven_regime: bool,
    pub stats: RunStats,
}

impl DiagnosticsRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices of samples at or after `t_start`.
    pub fn indices_from(&self, t_start: f64) -> impl Iterator<Item = usize> + '_ {
        self.times
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t >= t_start)
            .map(|(i, _)| i)
    }

    /// Start time of the trailing `fraction` of the recorded interval.
    pub fn tail_start(&self, fraction: f64) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(&t0), Some(&t1)) => t1 - fraction.clamp(0.0, 1.0) * (t1 - t0),
            _ => 0.0,
        }
    }
}

/// Collects samples during a run.
pub struct Recorder {
    params: ModelParams,
    record: DiagnosticsRecord,
}

impl Recorder {
    pub fn new(s0: &SimState, p: &ModelParams) -> Self {
        let prediction = predict_equilibrium(p, &s0.u, &s0.v).ok();
        Recorder {
            params: *p,
            record: DiagnosticsRecord {
                xi: p.xi,
                prediction,
                proven_regime: crate::model::m_admissible(p.m),
                ..Default::default()
            },
        }
    }

    pub fn sample(&mut self, s: &SimState) {
        let p = &self.params;
        let r = &mut self.record;
        let vol = s.grid().volume();
        let a = crate::grid::integrate(&s.u) / vol;
        let b = crate::grid::integrate(&s.v) / vol;
        let grad_sq = center_gradient_sq(&s.v);
        let cell_vol = s.grid().cell_volume();

        r.times.push(s.t);
        r.u_mass.push(a);
        r.v_mass.push(b);
        r.combined_mass.push(a + p.xi * b);
        r.u_linf.push(s.u.max_abs());
        r.v_linf.push(s.v.max_abs());
        r.grad_v_linf
            .push(grad_sq.iter().fold(0.0_f64, |m, g| m.max(*g)).sqrt());
        r.grad_v_l2
            .push((compensated_sum(grad_sq.iter().copied()) * cell_vol).sqrt());
        r.energy_e.push(energy_e(s, p));
        r.lyapunov_f.push(lyapunov_f(s, p));
        r.u_min.push(s.u.min());
        r.v_min.push(s.v.min());
        r.v_floored_cells.push(floored_cells(&s.v));

        let (res_u, res_v) = match &r.prediction {
            Some(pred) => residuals(s, pred, b),
            None => (f64::NAN, f64::NAN),
        };
        r.res_u.push(res_u);
        r.res_v.push(res_v);
    }

    pub fn record(&self) -> &DiagnosticsRecord {
        &self.record
    }

    pub fn set_stats(&mut self, stats: RunStats) {
        self.record.stats = stats;
    }

    pub fn finish(mut self) -> DiagnosticsRecord {
        if let Some(pred) = &self.record.prediction {
            if pred.case == LargeTimeCase::Recovery {
                self.record.fitted_decay_rate = recovery_window(&self.record, 1e-2)
                    .and_then(|w| fit_decay_rate(&self.record, w).ok());
            }
        }
        self.record
    }
}

/// Window over which `v` stays within `tol` of 1 in the sup norm and `a > 0`.
pub fn recovery_window(rec: &DiagnosticsRecord, tol: f64) -> Option<(f64, f64)> {
    let start = rec.res_v.iter().position(|&r| r < tol)?;
    let end = (start..rec.len()).rev().find(|&i| rec.u_mass[i] > 0.0)?;
    Some((rec.times[start], rec.times[end]))
}

fn residuals(s: &SimState, pred: &EquilibriumPrediction, mean_v: f64) -> (f64, f64) {
    let res_u = match pred.u_limit {
        Limit::Exact { value } => lp_norm(&s.u.map(|x| x - value), 2.0).unwrap_or(f64::NAN),
        Limit::Interval { .. } => f64::NAN,
    };
    let res_v = match pred.v_limit {
        Limit::Exact { value } => s.v.values().iter().fold(0.0_f64, |m, x| m.max((x - value).abs())),
        Limit::Interval { .. } => s.v.values().iter().fold(0.0_f64, |m, x| m.max((x - mean_v).abs())),
    };
    (res_u, res_v)
}

/// `|∇f|²` at cell centers from face gradients averaged onto the cells.
pub fn center_gradient_sq(f: &Field) -> Vec<f64> {
    let centered = grad_faces(f).to_centers();
    let mut out = vec![0.0; f.grid().len()];
    for g in &centered {
        for (o, x) in out.iter_mut().zip(g.values()) {
            *o += x * x;
        }
    }
    out
}

pub fn floored_cells(v: &Field) -> usize {
    v.values().iter().filter(|&&x| x < V_FLOOR).count()
}

fn x_ln_x(u: f64) -> f64 {
    if u > 0.0 {
        u * u.ln()
    } else {
        0.0
    }
}

/// `∫ ½|∇v|²/v + (1/χ) u ln u`, the entropy-type functional dissipated by the
/// regularized system.
pub fn energy_e(s: &SimState, p: &ModelParams) -> f64 {
    let grad_sq = center_gradient_sq(&s.v);
    let v = s.v.values();
    let u = s.u.values();
    let density = (0..u.len())
        .map(|i| 0.5 * grad_sq[i] / v[i].max(V_FLOOR) + x_ln_x(u[i]) / p.chi);
    compensated_sum(density) * s.grid().cell_volume()
}

/// `F = ∫ u + ξ(v - 1 - ln v)`. Nonincreasing while ξ ≤ ρ.
pub fn lyapunov_f(s: &SimState, p: &ModelParams) -> f64 {
    let u = s.u.values();
    let v = s.v.values();
    let density = (0..u.len()).map(|i| {
        let vf = v[i].max(V_FLOOR);
        // (v - 1) - ln(1 + (v - 1)) keeps precision near v = 1
        let convex = (vf - 1.0) - (vf - 1.0).ln_1p();
        debug_assert!(convex >= -1e-15, "v - 1 - ln v = {convex} at v = {vf}");
        u[i] + p.xi * convex.max(0.0)
    });
    compensated_sum(density) * s.grid().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    /// `max |a + ξb - A| / A`, reported when `μ = ρ = ε = 0`.
    pub combined_drift: Option<f64>,
    /// Largest drop of `a(t)` between samples, reported when `ρ = ε = 0`.
    pub u_mass_max_decrease: Option<f64>,
    /// Largest rise of `b(t)` between samples, reported when `μ = 0`.
    pub v_mass_max_increase: Option<f64>,
}

impl MassReport {
    /// Every applicable identity holds to relative tolerance `tol`.
    pub fn holds(&self, rec: &DiagnosticsRecord, tol: f64) -> bool {
        let scale = |s: &[f64]| s.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        self.combined_drift.map_or(true, |d| d <= tol)
            && self
                .u_mass_max_decrease
                .map_or(true, |d| d <= tol * scale(&rec.u_mass))
            && self
                .v_mass_max_increase
                .map_or(true, |d| d <= tol * scale(&rec.v_mass))
    }
}

fn max_step(series: &[f64], sign: f64) -> f64 {
    series
        .windows(2)
        .map(|w| sign * (w[1] - w[0]))
        .fold(0.0, f64::max)
}

/// Checks the mass balances that hold exactly for the given coefficients.
pub fn mass_identities(rec: &DiagnosticsRecord, p: &ModelParams) -> MassReport {
    let combined_drift = (p.mu == 0.0 && p.rho == 0.0 && p.eps_reg == 0.0 && !rec.is_empty())
        .then(|| {
            let a0 = rec.combined_mass[0];
            rec.combined_mass
                .iter()
                .map(|c| (c - a0).abs() / a0.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max)
        });
    let u_mass_max_decrease =
        (p.rho == 0.0 && p.eps_reg == 0.0).then(|| max_step(&rec.u_mass, -1.0));
    let v_mass_max_increase = (p.mu == 0.0).then(|| max_step(&rec.v_mass, 1.0));
    MassReport {
        combined_drift,
        u_mass_max_decrease,
        v_mass_max_increase,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub case: LargeTimeCase,
    pub tail_start: f64,
    pub tail_samples: usize,
    pub tolerance: f64,
    pub tail_res_u_max: f64,
    pub tail_res_v_max: f64,
    /// Spread of the mean nutrient over the tail (interval-limit case only).
    pub tail_mean_v_variation: Option<f64>,
    pub final_mean_v: f64,
    pub decreasing: bool,
    pub reason: String,
}

/// Minimum number of samples inside the tail for a conclusive verdict.
pub const MIN_TAIL_SAMPLES: usize = 10;

fn settles(series: &[f64]) -> bool {
    match (series.first(), series.last()) {
        (Some(&first), Some(&last)) => last <= first * (1.0 + 1e-9) + 1e-14,
        _ => false,
    }
}

/// Judges whether the trailing `tail_fraction` of the run sits within `tol` of
/// the predicted limits and is still approaching them.
pub fn convergence_check(
    rec: &DiagnosticsRecord,
    pred: &EquilibriumPrediction,
    tail_fraction: f64,
    tol: f64,
) -> Verdict {
    let tail_start = rec.tail_start(tail_fraction);
    let idx: Vec<usize> = rec.indices_from(tail_start).collect();
    let pick = |s: &[f64]| idx.iter().map(|&i| s[i]).collect::<Vec<f64>>();
    let res_u = pick(&rec.res_u);
    let res_v = pick(&rec.res_v);
    let mean_v = pick(&rec.v_mass);
    let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut verdict = Verdict {
        status: VerdictStatus::Inconclusive,
        case: pred.case,
        tail_start,
        tail_samples: idx.len(),
        tolerance: tol,
        tail_res_u_max: max(&res_u),
        tail_res_v_max: max(&res_v),
        tail_mean_v_variation: None,
        final_mean_v: rec.v_mass.last().copied().unwrap_or(f64::NAN),
        decreasing: false,
        reason: String::new(),
    };
    if idx.len() < MIN_TAIL_SAMPLES {
        verdict.reason = format!(
            "only {} samples in the tail, need {MIN_TAIL_SAMPLES}",
            idx.len()
        );
        return verdict;
    }

    let mut failures = Vec::new();
    match pred.v_limit {
        Limit::Exact { .. } => {
            verdict.decreasing = settles(&res_u) && settles(&res_v);
        }
        Limit::Interval { lo, hi } => {
            let variation = max(&mean_v) - mean_v.iter().copied().fold(f64::INFINITY, f64::min);
            verdict.tail_mean_v_variation = Some(variation);
            verdict.decreasing = settles(&res_u) && settles(&res_v);
            if variation > tol {
                failures.push(format!("mean v still varies by {variation:e}"));
            }
            if !pred.v_limit.contains(verdict.final_mean_v) {
                failures.push(format!(
                    "mean v = {} outside ({lo}, {hi})",
                    verdict.final_mean_v
                ));
            }
        }
    }
    if !(verdict.tail_res_u_max <= tol) {
        failures.push(format!("u residual {:e} above {tol:e}", verdict.tail_res_u_max));
    }
    if !(verdict.tail_res_v_max <= tol) {
        failures.push(format!("v residual {:e} above {tol:e}", verdict.tail_res_v_max));
    }
    if !verdict.decreasing {
        failures.push("residuals are not decreasing over the tail".into());
    }
    if failures.is_empty() {
        verdict.status = VerdictStatus::Pass;
        verdict.reason = "tail residuals within tolerance".into();
    } else {
        verdict.status = VerdictStatus::Fail;
        verdict.reason = failures.join("; ");
    }
    verdict
}

/// Negated least-squares slope of `ln values` against `times` over `window`.
pub fn fit_exponential_rate(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<f64, DiagnosticsError> {
    let (t0, t1) = window;
    let mut pts = Vec::new();
    for (&t, &y) in times.iter().zip(values) {
        if t >= t0 && t <= t1 {
            if !(y > 0.0) {
                return Err(DiagnosticsError::MassVanished(t));
            }
            pts.push((t, y.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(DiagnosticsError::WindowTooShort {
            t0,
            t1,
            samples: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Exponential decay rate of the mean density `a(t)` over `window`.
pub fn fit_decay_rate(rec: &DiagnosticsRecord, window: (f64, f64)) -> Result<f64, DiagnosticsError> {
    fit_exponential_rate(&rec.times, &rec.u_mass, window)
}

/// Both sides of `∫|∇v|⁴/v³ ≤ (2+√N)² ∫ v |D² ln v|²`.
///
/// Gradients are face differences averaged to centers. Diagonal second
/// derivatives use the compact Neumann stencil, mixed ones nest two centered
/// differences. The returned right-hand side includes the `(2+√N)²` factor.
pub fn functional_inequality(v: &Field) -> (f64, f64) {
    let grid = *v.grid();
    let dim = grid.dim();
    let vf = v.map(|x| x.max(V_FLOOR));
    let vals = vf.values();

    let grad_sq = center_gradient_sq(&vf);
    let lhs_density = (0..grid.len()).map(|i| grad_sq[i] * grad_sq[i] / vals[i].powi(3));
    let lhs = compensated_sum(lhs_density) * grid.cell_volume();

    let w = vf.map(f64::ln);
    let first = grad_faces(&w).to_centers();
    let mut hess_sq = vec![0.0; grid.len()];
    for a in 0..dim {
        // ∂_aa from the one-axis Neumann stencil
        let diag = axis_second_derivative(&w, a);
        for (h, d) in hess_sq.iter_mut().zip(diag.values()) {
            *h += d * d;
        }
        for b in 0..dim {
            if a == b {
                continue;
            }
            let mixed = &grad_faces(&first[a]).to_centers()[b];
            for (h, d) in hess_sq.iter_mut().zip(mixed.values()) {
                *h += d * d;
            }
        }
    }
    let rhs_density = (0..grid.len()).map(|i| vals[i] * hess_sq[i]);
    let constant = (2.0 + (dim as f64).sqrt()).powi(2);
    let rhs = constant * compensated_sum(rhs_density) * grid.cell_volume();
    (lhs, rhs)
}

fn axis_second_derivative(f: &Field, axis: usize) -> Field {
    if f.grid().dim() == 1 {
        return laplacian_neumann(f);
    }
    let grid = *f.grid();
    let stride = grid.stride(axis);
    let n = grid.cells()[axis];
    let h = grid.spacing()[axis];
    let x = f.values();
    let values = (0..grid.len())
        .map(|c| {
            let i = grid.unravel(c)[axis];
            let lo = if i > 0 { (x[c] - x[c - stride]) / h } else { 0.0 };
            let hi = if i + 1 < n { (x[c + stride] - x[c]) / h } else { 0.0 };
            (hi - lo) / h
        })
        .collect();
    Field::from_vec_unchecked(grid, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub running_max_u: Vec<f64>,
    pub running_max_v: Vec<f64>,
    pub running_max_grad_v: Vec<f64>,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_grad_v: f64,
    /// `max(||v||_∞, ||∇v||_∞)` over the run.
    pub sup_v_w1inf: f64,
    pub growth_flag: bool,
}

fn running_max(s: &[f64]) -> Vec<f64> {
    s.iter()
        .scan(f64::NEG_INFINITY, |m, &x| {
            *m = m.max(x);
            Some(*m)
        })
        .collect()
}

/// Heuristic: the maximum over the last tenth of the samples exceeds ten
/// times the maximum over the first tenth.
pub fn growth_detected(series: &[f64]) -> bool {
    if series.len() < 2 {
        return false;
    }
    let k = (series.len() / 10).max(1);
    let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = max(&series[..k]);
    let last = max(&series[series.len() - k..]);
    last > 10.0 * first.max(0.0) && last > 0.0
}

pub fn boundedness_monitor(rec: &DiagnosticsRecord) -> BoundednessReport {
    let running_max_u = running_max(&rec.u_linf);
    let running_max_v = running_max(&rec.v_linf);
    let running_max_grad_v = running_max(&rec.grad_v_linf);
    let last = |s: &[f64]| s.last().copied().unwrap_or(f64::NAN);
    let sup_v = last(&running_max_v);
    let sup_grad_v = last(&running_max_grad_v);
    BoundednessReport {
        sup_u: last(&running_max_u),
        sup_v,
        sup_grad_v,
        sup_v_w1inf: sup_v.max(sup_grad_v),
        growth_flag: growth_detected(&rec.u_linf)
            || growth_detected(&rec.v_linf)
            || growth_detected(&rec.grad_v_linf),
        running_max_u,
        running_max_v,
        running_max_grad_v,
    }
}
