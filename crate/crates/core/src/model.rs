//! Coefficients, reaction terms, regime classification and predicted equilibria.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{integrate, Field};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("no large-time prediction is available for this parameter set ({0})")]
    NotPredicted(&'static str),
    #[error("initial data must not vanish identically ({0} is zero)")]
    DegenerateData(&'static str),
}

/// `(m, χ, ξ, ρ, μ)` plus the regularization `ε` (zero for the unregularized system).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: f64,
    pub chi: f64,
    pub xi: f64,
    pub rho: f64,
    pub mu: f64,
    pub eps_reg: f64,
}

impl ModelParams {
    pub fn new(m: f64, chi: f64, xi: f64, rho: f64, mu: f64) -> Result<Self, ModelError> {
        Self {
            m,
            chi,
            xi,
            rho,
            mu,
            eps_reg: 0.0,
        }
        .validated()
    }

    pub fn with_regularization(mut self, eps_reg: f64) -> Result<Self, ModelError> {
        self.eps_reg = eps_reg;
        self.validated()
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        let check = |ok: bool, name: &'static str, requirement: &'static str, value: f64| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    requirement,
                    value,
                })
            }
        };
        check(self.m > 1.0, "m", "> 1", self.m)?;
        check(self.chi > 0.0, "chi", "> 0", self.chi)?;
        check(self.xi >= 0.0, "xi", ">= 0", self.xi)?;
        check(self.rho >= 0.0, "rho", ">= 0", self.rho)?;
        check(self.mu >= 0.0, "mu", ">= 0", self.mu)?;
        check(self.eps_reg >= 0.0, "eps_reg", ">= 0", self.eps_reg)?;
        Ok(self)
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }
}

/// ξuv − ρu − εu²
pub fn reaction_u(u: f64, v: f64, p: &ModelParams) -> f64 {
    p.xi * u * v - p.rho * u - p.eps_reg * u * u
}

/// −uv + μv(1 − v)
pub fn reaction_v(u: f64, v: f64, p: &ModelParams) -> f64 {
    -u * v + p.mu * v * (1.0 - v)
}

/// Coefficient regimes. Case I and II admit uniformly bounded solutions,
/// case III only locally bounded ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// ξμ = 0, ρ ≥ 0
    CaseI,
    /// ξμρ > 0
    CaseII,
    /// ξμ > 0, ρ = 0
    CaseIII,
}

pub fn classify_regime(p: &ModelParams) -> Regime {
    if p.xi * p.mu == 0.0 {
        Regime::CaseI
    } else if p.rho > 0.0 {
        Regime::CaseII
    } else {
        Regime::CaseIII
    }
}

/// Exact value or an open interval known to contain the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Limit {
    Exact { value: f64 },
    Interval { lo: f64, hi: f64 },
}

impl Limit {
    pub fn exact(&self) -> Option<f64> {
        match *self {
            Limit::Exact { value } => Some(value),
            Limit::Interval { .. } => None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Limit::Exact { value } => x == value,
            Limit::Interval { lo, hi } => lo < x && x < hi,
        }
    }
}

/// Which large-time statement applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LargeTimeCase {
    /// μ = ρ = 0: u → A, v → 0.
    Conservative,
    /// μ = 0, ρ > 0: u → 0, v → B ∈ (0, mean v₀).
    Starvation,
    /// μ > 0, ρ > 0, ξ < ρ: u → 0, v → 1.
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPrediction {
    pub case: LargeTimeCase,
    pub u_limit: Limit,
    pub v_limit: Limit,
    /// Supremum of the exponential decay rates guaranteed for ∫u.
    pub decay_rate_lower_bound: Option<f64>,
}

/// Large-time limits from the initial masses.
pub fn predict_from_means(
    p: &ModelParams,
    mean_u0: f64,
    mean_v0: f64,
) -> Result<EquilibriumPrediction, ModelError> {
    if p.eps_reg > 0.0 {
        return Err(ModelError::NotPredicted("regularized system"));
    }
    if mean_u0 <= 0.0 {
        return Err(ModelError::DegenerateData("u0"));
    }
    if mean_v0 <= 0.0 {
        return Err(ModelError::DegenerateData("v0"));
    }
    if p.mu == 0.0 && p.rho == 0.0 {
        Ok(EquilibriumPrediction {
            case: LargeTimeCase::Conservative,
            u_limit: Limit::Exact {
                value: mean_u0 + p.xi * mean_v0,
            },
            v_limit: Limit::Exact { value: 0.0 },
            decay_rate_lower_bound: None,
        })
    } else if p.mu == 0.0 {
        Ok(EquilibriumPrediction {
            case: LargeTimeCase::Starvation,
            u_limit: Limit::Exact { value: 0.0 },
            v_limit: Limit::Interval {
                lo: 0.0,
                hi: mean_v0,
            },
            decay_rate_lower_bound: None,
        })
    } else if p.rho > 0.0 && p.xi < p.rho {
        Ok(EquilibriumPrediction {
            case: LargeTimeCase::Recovery,
            u_limit: Limit::Exact { value: 0.0 },
            v_limit: Limit::Exact { value: 1.0 },
            decay_rate_lower_bound: Some(p.rho - p.xi),
        })
    } else if p.rho > 0.0 {
        Err(ModelError::NotPredicted("mu > 0, rho > 0 with xi >= rho"))
    } else {
        Err(ModelError::NotPredicted("mu > 0 with rho = 0"))
    }
}

/// Large-time limits for the initial data `(u0, v0)`.
pub fn predict_equilibrium(
    p: &ModelParams,
    u0: &Field,
    v0: &Field,
) -> Result<EquilibriumPrediction, ModelError> {
    let vol = u0.grid().volume();
    if u0.values().iter().all(|&x| x == 0.0) {
        return Err(ModelError::DegenerateData("u0"));
    }
    if v0.values().iter().all(|&x| x == 0.0) {
        return Err(ModelError::DegenerateData("v0"));
    }
    predict_from_means(p, integrate(u0) / vol, integrate(v0) / vol)
}

/// Whether `m` lies in the range where global boundedness is proven.
/// Runs below the threshold are allowed but tagged.
pub fn m_admissible(m: f64) -> bool {
    m > crate::exponent::critical_m()
}
