//! Critical exponent analysis of the integrability bootstrap sequence
//!
//! `A_{k+1} = (2/3)(m-1) A_k^2 + (8m/3 - 2) A_k + 2m - 1/3`, `A_1 = 1`.
//!
//! The sequence is increasing. It converges to the smaller fixed point `A*`
//! when the fixed-point equation has real roots, i.e. when
//! `16m^2 - 88m + 73 >= 0`, which on `1 < m < 2` means `m <= 11/4 - sqrt(3)`.
//! Otherwise it diverges.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("m must lie in (1, 2), got {0}")]
    OutOfRange(f64),
    #[error("k_max must be at least 2, got {0}")]
    TooFewIterations(usize),
    #[error("sample m = {0} is outside (1, 11/4 - sqrt(3)]")]
    SampleOutOfRange(f64),
    #[error("iteration at m = {m} was inconclusive after {k} terms")]
    Inconclusive { m: f64, k: usize },
    #[error("bisection bracket [{lo}, {hi}] does not straddle the classification boundary")]
    BadBracket { lo: f64, hi: f64 },
}

/// 11/4 − √3 ≈ 1.017949
pub fn critical_m() -> f64 {
    2.75 - 3.0_f64.sqrt()
}

/// Discriminant of the fixed-point equation, `(16m² − 88m + 73) / 9`.
pub fn discriminant(m: f64) -> f64 {
    (16.0 * m * m - 88.0 * m + 73.0) / 9.0
}

/// Below this magnitude the discriminant's sign is taken as exact and the
/// iteration is not consulted.
pub const DISCRIMINANT_BAND: f64 = 1e-14;

fn coefficients(m: f64) -> (f64, f64, f64) {
    (2.0 / 3.0 * (m - 1.0), 8.0 * m / 3.0 - 2.0, 2.0 * m - 1.0 / 3.0)
}

fn next_term(m: f64, a: f64) -> f64 {
    let (q, l, c) = coefficients(m);
    (q * a + l) * a + c
}

/// The smaller fixed point `A*`, when it exists.
pub fn a_star(m: f64) -> Option<f64> {
    if !(m > 1.0 && m < 2.0) {
        return None;
    }
    let mut disc = discriminant(m);
    if disc < 0.0 {
        if disc.abs() < DISCRIMINANT_BAND {
            disc = 0.0;
        } else {
            return None;
        }
    }
    // Roots of (2/3)(m-1)A^2 + (8m/3 - 3)A + 2m - 1/3. The smaller one in the
    // cancellation-free form 2c / (-b + sqrt(disc)); b < 0 whenever disc >= 0 here.
    let b = 8.0 * m / 3.0 - 3.0;
    let c = 2.0 * m - 1.0 / 3.0;
    Some(2.0 * c / (-b + disc.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "limit")]
pub enum Classification {
    Diverges,
    ConvergesTo(f64),
    Inconclusive,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Diverges => "Diverges",
            Classification::ConvergesTo(_) => "ConvergesTo",
            Classification::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings {
    pub k_max: usize,
    pub divergence_cap: f64,
    pub fixed_point_tol: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            k_max: 100_000_000,
            divergence_cap: 1e12,
            fixed_point_tol: 1e-12,
        }
    }
}

/// Number of leading terms kept in [`ExponentReport::sequence`].
pub const SEQUENCE_HEAD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentReport {
    pub m: f64,
    /// The first terms `A_1, A_2, ...`, at most [`SEQUENCE_HEAD`] of them.
    pub sequence: Vec<f64>,
    /// The term that decided the classification (or the last one computed).
    pub last_term: f64,
    pub classification: Classification,
    pub a_star_closed_form: Option<f64>,
    pub discriminant: f64,
    /// Number of terms computed.
    pub k_truncated: usize,
    /// The tangency band was hit and the sign of the discriminant decided.
    pub decided_by_discriminant: bool,
    /// Every computed term was at least its predecessor.
    pub increasing: bool,
}

impl ExponentReport {
    pub fn is_increasing(&self) -> bool {
        self.increasing
    }
}

/// Iterates from `A_1 = 1` until the terms exceed the divergence cap, the
/// increments start growing, or both the step and the geometric estimate of
/// the remaining distance fall below the fixed-point tolerance.
///
/// `A_{k+1} - A_k = g(A_k)` with `g` a convex quadratic. Increments shrink
/// while the iterate sits left of the vertex of `g` and grow past it. A
/// sequence started left of a real fixed point never crosses it, so growing
/// increments mean there is no real fixed point and the sequence diverges.
pub fn iterate_ak(m: f64, settings: IterationSettings) -> Result<ExponentReport, ExponentError> {
    if !(m > 1.0 && m < 2.0) {
        return Err(ExponentError::OutOfRange(m));
    }
    if settings.k_max < 2 {
        return Err(ExponentError::TooFewIterations(settings.k_max));
    }
    let disc = discriminant(m);
    let a_star_closed = a_star(m);

    // Near tangency the smallest step of the map is disc / (4q); once that
    // drops under the step tolerance the iteration cannot tell stalling from
    // convergence.
    let (q, _, _) = coefficients(m);
    let tangent = disc.abs() < DISCRIMINANT_BAND
        || disc.abs() / (4.0 * q) < 10.0 * settings.fixed_point_tol;

    let mut sequence = Vec::with_capacity(64);
    let mut a = 1.0_f64;
    sequence.push(a);
    let mut k = 1;
    let mut increasing = true;
    let mut prev_step = f64::INFINITY;
    let mut classification = Classification::Inconclusive;
    while k < settings.k_max {
        let next = next_term(m, a);
        k += 1;
        if sequence.len() < SEQUENCE_HEAD {
            sequence.push(next);
        }
        increasing &= next >= a;
        let step = next - a;
        a = next;
        if next > settings.divergence_cap || !next.is_finite() {
            classification = Classification::Diverges;
            break;
        }
        if step.abs() < settings.fixed_point_tol {
            // geometric tail estimate; near tangency the ratio approaches 1
            let r = step / prev_step;
            let tail = if r < 1.0 { step * r / (1.0 - r) } else { f64::INFINITY };
            if tail.abs() < settings.fixed_point_tol {
                classification = Classification::ConvergesTo(next);
                break;
            }
        }
        // margin above the rounding noise of the difference
        if step > prev_step + 8.0 * f64::EPSILON * next.abs() {
            classification = Classification::Diverges;
            break;
        }
        prev_step = step;
    }

    let mut decided_by_discriminant = false;
    if tangent {
        decided_by_discriminant = true;
        classification = match a_star_closed {
            Some(limit) => Classification::ConvergesTo(limit),
            None => Classification::Diverges,
        };
    }

    Ok(ExponentReport {
        m,
        sequence,
        last_term: a,
        classification,
        a_star_closed_form: a_star_closed,
        discriminant: disc,
        k_truncated: k,
        decided_by_discriminant,
        increasing,
    })
}

/// True iff `A* > 5` for every sample.
pub fn a_star_exceeds_five(samples: &[f64]) -> Result<bool, ExponentError> {
    let mc = critical_m();
    let mut all = true;
    for &m in samples {
        if !(m > 1.0 && m <= mc) {
            return Err(ExponentError::SampleOutOfRange(m));
        }
        all &= a_star(m).map_or(false, |a| a > 5.0);
    }
    Ok(all)
}

/// Locates the divergence threshold by bisecting on the iteration's verdict.
///
/// `lo` must classify as convergent (or equal 1, where the map is affine and
/// converges) and `hi` as divergent. Stops once the bracket is narrower than `tol`.
pub fn bisect_threshold(
    lo: f64,
    hi: f64,
    tol: f64,
    settings: IterationSettings,
) -> Result<f64, ExponentError> {
    let diverges = |m: f64| -> Result<bool, ExponentError> {
        let report = iterate_ak(m, settings)?;
        match report.classification {
            Classification::Diverges => Ok(true),
            Classification::ConvergesTo(_) => Ok(false),
            Classification::Inconclusive => Err(ExponentError::Inconclusive {
                m,
                k: report.k_truncated,
            }),
        }
    };
    let (mut lo, mut hi) = (lo, hi);
    let lo_ok = lo <= 1.0 || !diverges(lo)?;
    if !(lo < hi) || !lo_ok || !diverges(hi)? {
        return Err(ExponentError::BadBracket { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if diverges(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
