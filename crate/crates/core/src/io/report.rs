//! JSON run report: prediction, verdict, mass balances and boundedness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    boundedness_monitor, convergence_check, fit_decay_rate, mass_identities, recovery_window,
    DiagnosticsRecord, MassReport, RunStats, Verdict,
};
use crate::model::{m_admissible, predict_from_means, EquilibriumPrediction, LargeTimeCase, ModelParams, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessSummary {
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_grad_v: f64,
    pub sup_v_w1inf: f64,
    pub growth_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub error: Option<String>,
    pub samples: usize,
    pub t_final: f64,
    pub params: ModelParams,
    pub regime: Regime,
    /// `m` lies above the critical exponent.
    pub proven_regime: bool,
    pub prediction: Option<EquilibriumPrediction>,
    pub verdict: Option<Verdict>,
    pub mass: MassReport,
    pub mass_identities_hold: bool,
    pub boundedness: BoundednessSummary,
    pub fitted_decay_rate: Option<f64>,
    pub stats: RunStats,
}

/// Tolerance passed to [`MassReport::holds`].
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Window threshold on `||v - 1||_∞` used for the decay-rate fit.
pub const RECOVERY_THRESHOLD: f64 = 1e-2;

impl RunReport {
    /// Evaluates a record. The prediction is recomputed from the first
    /// sample's means, so a record read back from `series.csv` yields the same
    /// report as the in-memory one. `verdict` is skipped when `check` is false.
    pub fn analyze(
        rec: &DiagnosticsRecord,
        p: &ModelParams,
        tail_fraction: f64,
        tol: f64,
        check: bool,
    ) -> RunReport {
        let prediction = match (rec.u_mass.first(), rec.v_mass.first()) {
            (Some(&a), Some(&b)) => predict_from_means(p, a, b).ok(),
            _ => None,
        };
        let verdict = prediction
            .as_ref()
            .filter(|_| check)
            .map(|pred| convergence_check(rec, pred, tail_fraction, tol));
        let fitted_decay_rate = prediction
            .filter(|pred| pred.case == LargeTimeCase::Recovery)
            .and_then(|_| recovery_window(rec, RECOVERY_THRESHOLD))
            .and_then(|w| fit_decay_rate(rec, w).ok());
        let mass = mass_identities(rec, p);
        let b = boundedness_monitor(rec);
        RunReport {
            status: RunStatus::Completed,
            error: None,
            samples: rec.len(),
            t_final: rec.times.last().copied().unwrap_or(f64::NAN),
            params: *p,
            regime: p.regime(),
            proven_regime: m_admissible(p.m),
            prediction,
            verdict,
            mass_identities_hold: mass.holds(rec, MASS_TOLERANCE),
            mass,
            boundedness: BoundednessSummary {
                sup_u: b.sup_u,
                sup_v: b.sup_v,
                sup_grad_v: b.sup_grad_v,
                sup_v_w1inf: b.sup_v_w1inf,
                growth_flag: b.growth_flag,
            },
            fitted_decay_rate,
            stats: rec.stats,
        }
    }

    pub fn aborted(mut self, error: impl ToString) -> RunReport {
        self.status = RunStatus::Aborted;
        self.error = Some(error.to_string());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn write_report(report: &RunReport, path: &Path) -> std::io::Result<()> {
    let mut text = report.to_json();
    text.push('\n');
    super::write_atomic(path, text.as_bytes())
}
