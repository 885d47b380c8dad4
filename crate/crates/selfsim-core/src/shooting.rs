//! Outcome bisection for the critical shooting parameter.
//!
//! For `kappa >= -N/2` the split is Global below / BlowUp above.  For
//! `kappa < -N/2` small parameters touch zero and the connecting (weighted
//! space) value sits at the TouchZero boundary; above it there is first a
//! window of global algebraic-tail solutions and only then blow-up, so the
//! fold treats everything that is not TouchZero as the upper side.

use crate::model::ModelParams;
use crate::ode::{integrate_profile, IntegrationControls, OdeError, Outcome, ProfileSolution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShootingError {
    #[error("both bracket endpoints classify as {0}; no sign change to bisect")]
    InvalidBracket(&'static str),
    #[error("q = 1: every lambda yields a global solution, no critical value exists")]
    NoCriticalValue,
    #[error("bisection did not reach tolerance within {0} iterations")]
    MaxIterExceeded(usize),
    #[error("bracket expansion exhausted (2^40 range) without finding {0}")]
    ExpansionFailed(&'static str),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingControls {
    pub tol_rel: f64,
    pub max_iter: usize,
    pub ivp: IntegrationControls,
}

impl Default for ShootingControls {
    fn default() -> Self {
        ShootingControls {
            tol_rel: 1e-10,
            max_iter: 200,
            ivp: IntegrationControls {
                // bisection endpoints need no dense refinement
                store_dense: false,
                ..IntegrationControls::default()
            },
        }
    }
}

/// Bracketing record for the critical parameter.
#[derive(Debug, Clone)]
pub struct CriticalResult {
    pub lambda_star: f64,
    pub bracket: (f64, f64),
    pub outcome_lo: Outcome,
    pub outcome_hi: Outcome,
    pub iterations: usize,
    pub profile_lo: ProfileSolution,
    pub profile_hi: ProfileSolution,
}

/// Classify one parameter value; the outcome tag only.
pub fn classify_lambda(
    params: &ModelParams,
    lambda: f64,
    controls: &IntegrationControls,
) -> Result<Outcome, OdeError> {
    let c = if params.is_deep_regime() {
        controls.deep_regime()
    } else {
        *controls
    };
    match integrate_profile(params, lambda, &c) {
        Ok(sol) => Ok(sol.outcome),
        // a collapsed step still carries a trustworthy trajectory estimate
        Err(OdeError::StepUnderflow {
            estimated: Some(est),
            ..
        }) => Ok(est),
        Err(e) => Err(e),
    }
}

fn is_upper(outcome: &Outcome, deep: bool) -> bool {
    match outcome {
        Outcome::BlowUp { .. } => true,
        Outcome::Global { .. } => deep,
        Outcome::TouchZero { .. } => false,
    }
}

fn is_lower(outcome: &Outcome, deep: bool) -> bool {
    match outcome {
        Outcome::Global { .. } => !deep,
        Outcome::TouchZero { .. } => deep,
        Outcome::BlowUp { .. } => false,
    }
}

/// Bisect for the critical parameter from an initial bracket, expanding the
/// bracket first if the endpoints do not split.
pub fn find_critical_lambda(
    params: &ModelParams,
    bracket0: (f64, f64),
    controls: &ShootingControls,
) -> Result<CriticalResult, ShootingError> {
    if params.q == 1.0 {
        return Err(ShootingError::NoCriticalValue);
    }
    let deep = params.is_deep_regime();
    let classify = |lam: f64| classify_lambda(params, lam, &controls.ivp);

    let (mut lo, mut hi) = bracket0;
    let mut out_lo = classify(lo)?;
    let mut out_hi = classify(hi)?;

    // expansion: double upward until the upper outcome appears, halve
    // downward until the lower one appears (2^40 range each way)
    const EXPANSION_STEPS: u32 = 40;
    if !is_upper(&out_hi, deep) {
        let mut found = false;
        for _ in 0..EXPANSION_STEPS {
            hi *= 2.0;
            out_hi = classify(hi)?;
            if is_upper(&out_hi, deep) {
                found = true;
                break;
            }
        }
        if !found {
            return Err(ShootingError::ExpansionFailed("the large-lambda outcome"));
        }
    }
    if !is_lower(&out_lo, deep) {
        let mut found = false;
        for _ in 0..EXPANSION_STEPS {
            lo /= 2.0;
            out_lo = classify(lo)?;
            if is_lower(&out_lo, deep) {
                found = true;
                break;
            }
        }
        if !found {
            return Err(ShootingError::ExpansionFailed("the small-lambda outcome"));
        }
    }
    if is_upper(&out_lo, deep) == is_upper(&out_hi, deep) {
        return Err(ShootingError::InvalidBracket(out_lo.tag()));
    }

    let mut iterations = 0usize;
    while hi - lo > controls.tol_rel * 0.5 * (hi + lo) {
        if iterations >= controls.max_iter {
            return Err(ShootingError::MaxIterExceeded(controls.max_iter));
        }
        let mid = 0.5 * (lo + hi);
        let out_mid = classify(mid)?;
        if is_upper(&out_mid, deep) {
            hi = mid;
            out_hi = out_mid;
        } else if is_lower(&out_mid, deep) {
            lo = mid;
            out_lo = out_mid;
        } else {
            // shallow regime only: a touch-zero midpoint means the floor is
            // being tripped by the Gaussian dive, not a true branch change
            return Err(ShootingError::InvalidBracket(out_mid.tag()));
        }
        iterations += 1;
    }

    // endpoint profiles with dense grids for downstream reporting
    let dense = IntegrationControls {
        store_dense: true,
        ..controls.ivp
    };
    let dense = if deep { dense.deep_regime() } else { dense };
    let profile_lo = integrate_or_estimate(params, lo, &dense)?;
    let profile_hi = integrate_or_estimate(params, hi, &dense)?;

    Ok(CriticalResult {
        lambda_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        outcome_lo,
        outcome_hi,
        iterations,
        profile_lo,
        profile_hi,
    })
}

fn integrate_or_estimate(
    params: &ModelParams,
    lambda: f64,
    controls: &IntegrationControls,
) -> Result<ProfileSolution, ShootingError> {
    match integrate_profile(params, lambda, controls) {
        Ok(sol) => Ok(sol),
        Err(e) => Err(ShootingError::Integration(e)),
    }
}
