//! Principal eigenvalue of the weighted problem on `(0, R)`.
//!
//! `(varsigma phi')' + lambda varsigma phi = 0` with
//! `varsigma = r^(N-1) exp(delta r^2)`, `phi'(0) = 0`, `phi(R) = 0`.
//! Shooting with the first-zero location as the monotone indicator: larger
//! `lambda` moves the first zero inward.  The infinite-domain limit is the
//! closed form `lambda(inf) = 2 N delta` with eigenfunction `exp(-delta r^2)`,
//! which also supplies the guaranteed lower bisection endpoint.
//!
//! The trajectory is renormalized whenever its magnitude leaves
//! `[1e-250, 1e250]`; the equation is linear so zero locations survive
//! rescaling, and the weight itself never materializes.

use crate::integrator::{next_step_size, try_step, State};
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("eigenvalue bisection did not reach tolerance in {0} iterations")]
    ToleranceNotReached(usize),
    #[error("invalid eigenproblem: {0}")]
    BadProblem(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenProblem {
    pub n: u32,
    pub delta: f64,
    pub r_end: f64,
}

impl EigenProblem {
    pub fn new(n: u32, delta: f64, r_end: f64) -> Result<Self, SpectralError> {
        if n == 0 {
            return Err(SpectralError::BadProblem("N must be >= 1"));
        }
        if !(delta > 0.0) {
            return Err(SpectralError::BadProblem("delta must be positive"));
        }
        if !(r_end > 0.0 && r_end.is_finite()) {
            return Err(SpectralError::BadProblem("R must be positive and finite"));
        }
        Ok(EigenProblem { n, delta, r_end })
    }

    /// Closed-form infinite-domain limit `2 N delta`.
    pub fn limit_eigenvalue(&self) -> f64 {
        2.0 * f64::from(self.n) * self.delta
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eigenpair {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub eigenfunction: Vec<f64>,
}

fn eigen_rhs(n: f64, delta: f64, lambda: f64) -> impl Fn(f64, &State) -> State {
    move |r: f64, y: &State| [y[1], -((n - 1.0) / r + 2.0 * delta * r) * y[1] - lambda * y[0]]
}

/// First zero of the shooting solution, or `None` if it stays positive up to
/// `r_stop`.  Optionally records the normalized trajectory.
fn first_zero(
    n: f64,
    delta: f64,
    lambda: f64,
    r_stop: f64,
    rtol: f64,
    mut record: Option<&mut Vec<(f64, f64)>>,
) -> Option<f64> {
    let f = eigen_rhs(n, delta, lambda);
    let r0 = (1e-8f64).min(r_stop * 1e-4);
    let mut r = r0;
    let mut y: State = [1.0 - lambda * r0 * r0 / (2.0 * n), -lambda * r0 / n];
    let mut k1 = f(r, &y);
    let mut h = (1e-4f64).min(r_stop * 1e-3);
    let atol = 1e-30;

    if let Some(rec) = record.as_deref_mut() {
        rec.push((r, y[0]));
    }

    for _ in 0..4_000_000 {
        if r >= r_stop {
            return None;
        }
        h = h.min(0.01 * (1.0 + r)).min(r_stop - r + 1e-12);
        let att = try_step(&f, r, &y, &k1, h, rtol, atol);
        if !att.err.is_finite() {
            h *= 0.25;
            continue;
        }
        if att.err > 1.0 {
            h = next_step_size(h, att.err);
            continue;
        }
        let r_new = r + h;
        let y_new = att.y_new;
        if y_new[0] <= 0.0 {
            // bisect the dense segment for the crossing
            let mut lo = r;
            let mut hi = r_new;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if att.dense.eval_at(mid)[0] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push((r_new, y_new[0]));
        }
        r = r_new;
        y = y_new;
        k1 = att.k_last;
        // linear problem: rescale when the magnitude drifts far
        let mag = y[0].abs().max(y[1].abs());
        if mag > 1e250 || (mag < 1e-250 && mag > 0.0) {
            y[0] /= mag;
            y[1] /= mag;
            k1[0] /= mag;
            k1[1] /= mag;
            if let Some(rec) = record.as_deref_mut() {
                for v in rec.iter_mut() {
                    v.1 /= mag;
                }
            }
        }
        h = next_step_size(h, att.err);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenControls {
    pub tol_rel: f64,
    pub max_iter: usize,
    pub ode_rtol: f64,
}

impl Default for EigenControls {
    fn default() -> Self {
        EigenControls {
            tol_rel: 1e-12,
            max_iter: 200,
            ode_rtol: 1e-12,
        }
    }
}

/// Smallest `lambda` whose shooting solution first vanishes exactly at `R`.
pub fn principal_eigenvalue(
    prob: &EigenProblem,
    controls: &EigenControls,
) -> Result<Eigenpair, SpectralError> {
    let n = f64::from(prob.n);
    let r_end = prob.r_end;
    // integrate slightly past R so a zero at R itself is seen
    let r_probe = r_end * 1.000001;
    let zero_of = |lam: f64| first_zero(n, prob.delta, lam, r_probe, controls.ode_rtol, None);

    // lambda(R) > lambda(inf) = 2 N delta for finite R: guaranteed lower end
    let mut lo = prob.limit_eigenvalue();
    let mut hi = (2.0 * lo).max(lo + 4.0 / (r_end * r_end)).max(lo + 1.0);
    let mut expand = 0;
    while zero_of(hi).map_or(true, |z| z > r_end) {
        hi *= 2.0;
        expand += 1;
        if expand > 60 {
            return Err(SpectralError::ToleranceNotReached(expand));
        }
    }

    let mut iterations = 0;
    while hi - lo > controls.tol_rel * 0.5 * (hi + lo) {
        if iterations >= controls.max_iter {
            return Err(SpectralError::ToleranceNotReached(iterations));
        }
        let mid = 0.5 * (lo + hi);
        match zero_of(mid) {
            Some(z) if z <= r_end => hi = mid,
            _ => lo = mid,
        }
        iterations += 1;
    }
    let lambda = 0.5 * (lo + hi);

    let mut rec = Vec::new();
    let _ = first_zero(
        n,
        prob.delta,
        lambda,
        r_probe,
        controls.ode_rtol,
        Some(&mut rec),
    );
    // normalize to phi(0) = 1 (the recorded head may have been rescaled)
    let scale = rec.first().map_or(1.0, |v| v.1);
    let (grid, eigenfunction): (Vec<f64>, Vec<f64>) =
        rec.into_iter().map(|(r, v)| (r, v / scale)).unzip();
    Ok(Eigenpair {
        lambda,
        grid,
        eigenfunction,
    })
}

/// Ladder of eigenvalues over increasing domains, plus the closed-form limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub delta: f64,
    pub ladder: Vec<(f64, f64)>,
    pub limit: f64,
    /// `lambda(inf) D_v = N/2`, matching `-kappa` at the regime boundary.
    pub boundary_kappa: f64,
}

/// Confirm numerically that with `delta = 1/(4 D_v)` the limit eigenvalue
/// times `D_v` reproduces the regime boundary `N/2 = -kappa`.
pub fn regime_boundary_check(
    params: &ModelParams,
    r_ladder: &[f64],
    controls: &EigenControls,
) -> Result<BoundaryReport, SpectralError> {
    let delta = 1.0 / (4.0 * params.d_v);
    let mut ladder = Vec::with_capacity(r_ladder.len());
    for &r in r_ladder {
        let prob = EigenProblem::new(params.n, delta, r)?;
        let pair = principal_eigenvalue(&prob, controls)?;
        ladder.push((r, pair.lambda));
    }
    let limit = 2.0 * params.dim() * delta;
    Ok(BoundaryReport {
        delta,
        ladder,
        limit,
        boundary_kappa: -params.dim() / 2.0,
    })
}

/// CSV rows `R,lambda` for a computed ladder.
pub fn ladder_csv(ladder: &[(f64, f64)]) -> String {
    let mut out = String::from("R,lambda\n");
    for &(r, l) in ladder {
        out.push_str(&format!("{:.16e},{:.16e}\n", r, l));
    }
    out
}
