//! Profile IVP integration and trajectory classification.
//!
//! The profile solves, in explicit form,
//!
//! ```text
//! phi'' = ( kappa phi - (r/2) phi' - D_v (N-1)/r phi'
//!           + lambda phi^q exp(-r^2/(4 D_u)) ) / D_v,
//! phi(0) = 1, phi'(0) = 0,
//! ```
//!
//! started at a small `r0 > 0` with a second-order Taylor polynomial so the
//! `(N-1)/r` term is never evaluated at the origin.  A trajectory either
//! survives to `r_max` (Global), crosses the blow-up ceiling with confirmed
//! superlinear escape (BlowUp), or crosses the positivity floor with negative
//! slope (TouchZero).

use crate::integrator::{next_step_size, try_step, DenseSegment, State};
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("phi = {phi} is non-positive; phi^q is undefined for non-integer q")]
    DomainError { phi: f64 },
    #[error("theta transform undefined: q = 1 leaves sigma undefined")]
    TransformUndefined,
    #[error("adaptive step collapsed at r = {r} (phi = {phi}); estimated outcome {estimated:?}")]
    StepUnderflow {
        r: f64,
        phi: f64,
        dphi: f64,
        estimated: Option<Outcome>,
    },
    #[error("step budget exhausted at r = {r}")]
    MaxSteps { r: f64 },
    #[error("invalid integration controls: {what}")]
    BadControls { what: &'static str },
}

/// Trajectory classification per the global/blow-up/touch-zero trichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Global { r_max: f64 },
    BlowUp { r_est: f64 },
    TouchZero { r_est: f64 },
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Global { .. } => "global",
            Outcome::BlowUp { .. } => "blow_up",
            Outcome::TouchZero { .. } => "touch_zero",
        }
    }

    pub fn is_global(&self) -> bool {
        matches!(self, Outcome::Global { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationControls {
    pub r_max: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub phi_ceiling: f64,
    pub phi_floor: f64,
    /// Taylor start radius.
    pub r0: f64,
    /// First trial step.
    pub initial_step: f64,
    /// Refine the stored grid until cubic interpolation meets `rel_tol`.
    pub store_dense: bool,
    pub max_steps: usize,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        IntegrationControls {
            r_max: 40.0,
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            phi_ceiling: 1e10,
            phi_floor: 1e-12,
            r0: 1e-6,
            initial_step: 5e-4,
            store_dense: true,
            max_steps: 4_000_000,
        }
    }
}

impl IntegrationControls {
    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    /// Controls for the `kappa < -N/2` regime, where near-critical
    /// trajectories dive many decades below 1 before their fate separates.
    /// Error control must stay relative-dominated for the dive to be tracked.
    pub fn deep_regime(mut self) -> Self {
        self.phi_floor = self.phi_floor.min(1e-25);
        self.abs_tol = self.abs_tol.min(1e-290);
        self
    }
}

/// The Gaussian forcing factor, flushed to zero once the exponent underflows.
pub fn gauss_forcing(r: f64, d_u: f64) -> f64 {
    let a = r * r / (4.0 * d_u);
    if a > 700.0 {
        0.0
    } else {
        (-a).exp()
    }
}

/// Explicit second derivative of the profile equation.
///
/// Errors on `phi <= 0`: the exponent `q` is generally non-integer.
pub fn rhs(r: f64, phi: f64, dphi: f64, params: &ModelParams, lambda: f64) -> Result<f64, OdeError> {
    if phi <= 0.0 {
        return Err(OdeError::DomainError { phi });
    }
    Ok(rhs_raw(r, phi, dphi, params, lambda))
}

/// Same as [`rhs`], with the forcing continuously extended by zero for
/// `phi <= 0` (valid since `q >= 1`); used inside the integrator so stages
/// that brush past zero reject cleanly instead of producing NaN.
pub(crate) fn rhs_raw(r: f64, phi: f64, dphi: f64, params: &ModelParams, lambda: f64) -> f64 {
    let forcing = if phi > 0.0 {
        lambda * phi.powf(params.q) * gauss_forcing(r, params.d_u)
    } else {
        0.0
    };
    (params.kappa * phi
        - 0.5 * r * dphi
        - params.d_v * (params.dim() - 1.0) / r * dphi
        + forcing)
        / params.d_v
}

/// Second-order Taylor start at `r0` with a quartic truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorStart {
    pub phi: f64,
    pub dphi: f64,
    /// Magnitude of the quartic term at `r0`, bounding the truncation error.
    pub trunc_error: f64,
}

/// Series start `phi = 1 + c r^2/2`, `phi' = c r` with
/// `c = (kappa + lambda)/(N D_v)` (the L'Hopital value of `phi''(0)`).
pub fn taylor_start(params: &ModelParams, lambda: f64, r0: f64) -> TaylorStart {
    let c = (params.kappa + lambda) / (params.dim() * params.d_v);
    let a2 = 0.5 * c;
    let a4 = ((params.kappa - 1.0 + lambda * params.q) * a2 - lambda / (4.0 * params.d_u))
        / (4.0 * params.d_v * (params.dim() + 2.0));
    TaylorStart {
        phi: 1.0 + a2 * r0 * r0,
        dphi: c * r0,
        trunc_error: (a4 * r0.powi(4)).abs(),
    }
}

/// Adaptive grid of one integrated profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub outcome: Outcome,
    pub params: ModelParams,
}

impl ProfileSolution {
    /// Assemble a solution from externally produced samples (tests, file
    /// reload).  The grid must be strictly increasing with positive `phi`.
    pub fn from_samples(
        params: ModelParams,
        lambda: f64,
        grid: Vec<f64>,
        phi: Vec<f64>,
        dphi: Vec<f64>,
        outcome: Outcome,
    ) -> Self {
        assert_eq!(grid.len(), phi.len());
        assert_eq!(grid.len(), dphi.len());
        assert!(grid.windows(2).all(|w| w[0] < w[1]), "grid must increase");
        ProfileSolution {
            lambda,
            grid,
            phi,
            dphi,
            outcome,
            params,
        }
    }

    pub fn r_end(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    /// C^2 piecewise-quintic interpolant matching `phi`, `phi'` and the
    /// equation-supplied `phi''` at every node.
    pub fn interpolant(&self) -> ProfileInterp<'_> {
        let ddphi = self
            .grid
            .iter()
            .zip(self.phi.iter().zip(self.dphi.iter()))
            .map(|(&r, (&p, &d))| rhs_raw(r, p, d, &self.params, self.lambda))
            .collect();
        ProfileInterp {
            sol: self,
            ddphi,
        }
    }

    /// `theta(r_i) = phi(r_i) exp(-sigma r_i^2)`; requires `q > 1`.
    pub fn theta_view(&self) -> Result<Vec<f64>, OdeError> {
        let sigma = self.params.sigma.ok_or(OdeError::TransformUndefined)?;
        Ok(self
            .grid
            .iter()
            .zip(&self.phi)
            .map(|(&r, &p)| p * (-sigma * r * r).exp())
            .collect())
    }

    /// `g_eta(r_i) = phi(r_i) r_i^(-eta)`; `eta = 2 kappa` normalizes the
    /// algebraic rate.
    pub fn g_view(&self, eta: f64) -> Vec<f64> {
        self.grid
            .iter()
            .zip(&self.phi)
            .map(|(&r, &p)| p * r.powf(-eta))
            .collect()
    }

    /// CSV dump: `r,phi,dphi,theta,g_eta` with 17 significant digits.
    pub fn to_csv(&self, eta: f64) -> String {
        let theta = self.theta_view().ok();
        let g = self.g_view(eta);
        let mut out = String::from("r,phi,dphi,theta,g_eta\n");
        for i in 0..self.grid.len() {
            let th = theta.as_ref().map_or(f64::NAN, |t| t[i]);
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.grid[i], self.phi[i], self.dphi[i], th, g[i]
            ));
        }
        out
    }
}

/// Piecewise quintic Hermite view over a [`ProfileSolution`].
pub struct ProfileInterp<'a> {
    sol: &'a ProfileSolution,
    ddphi: Vec<f64>,
}

impl ProfileInterp<'_> {
    pub fn r_end(&self) -> f64 {
        self.sol.r_end()
    }

    pub fn r_start(&self) -> f64 {
        self.sol.grid[0]
    }

    /// Evaluate `phi(r)`.  Below the first node the Taylor start is used;
    /// beyond the last node, `None`.
    pub fn eval(&self, r: f64) -> Option<f64> {
        let g = &self.sol.grid;
        if r > self.r_end() {
            return None;
        }
        if r <= g[0] {
            let ts = taylor_start(&self.sol.params, self.sol.lambda, r.max(0.0));
            return Some(ts.phi);
        }
        let j = match g.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(j) => return Some(self.sol.phi[j]),
            Err(j) => j - 1,
        };
        let h = g[j + 1] - g[j];
        let t = (r - g[j]) / h;
        let (p0, p1) = (self.sol.phi[j], self.sol.phi[j + 1]);
        let (d0, d1) = (self.sol.dphi[j], self.sol.dphi[j + 1]);
        let (s0, s1) = (self.ddphi[j], self.ddphi[j + 1]);
        Some(quintic(t, h, p0, d0, s0, p1, d1, s1))
    }
}

fn quintic(t: f64, h: f64, p0: f64, d0: f64, s0: f64, p1: f64, d1: f64, s1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h3 = 0.5 * t3 - t4 + 0.5 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    p0 * h0 + h * d0 * h1 + h * h * s0 * h2 + h * h * s1 * h3 + h * d1 * h4 + p1 * h5
}

fn cubic_hermite(t: f64, h: f64, p0: f64, d0: f64, p1: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * p0 + h * h10 * d0 + h01 * p1 + h * h11 * d1
}

struct GridSink {
    refine: bool,
    rel_tol: f64,
    abs_tol: f64,
    grid: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl GridSink {
    fn push_node(&mut self, r: f64, y: &State) {
        if self.grid.last().map_or(true, |&g| r > g) {
            self.grid.push(r);
            self.phi.push(y[0]);
            self.dphi.push(y[1]);
        }
    }

    /// Append the step `(r0, y0] -> (r1, y1]`, subdividing via the dense
    /// segment until cubic Hermite interpolation between stored nodes agrees
    /// with the integrator's dense output at midpoints.
    fn push_step(&mut self, seg: &DenseSegment, r_from: f64, y_from: &State, r_to: f64, y_to: &State) {
        if self.refine {
            self.subdivide(seg, r_from, y_from, r_to, y_to, 0);
        }
        self.push_node(r_to, y_to);
    }

    fn subdivide(&mut self, seg: &DenseSegment, ra: f64, ya: &State, rb: f64, yb: &State, depth: u32) {
        if depth >= 8 || rb - ra < 1e-9 {
            return;
        }
        let rm = 0.5 * (ra + rb);
        let ym = seg.eval_at(rm);
        let hm = cubic_hermite(0.5, rb - ra, ya[0], ya[1], yb[0], yb[1]);
        let tol = self.abs_tol + self.rel_tol * ym[0].abs();
        if (hm - ym[0]).abs() > tol {
            self.subdivide(seg, ra, ya, rm, &ym, depth + 1);
            self.push_node(rm, &ym);
            self.subdivide(seg, rm, &ym, rb, yb, depth + 1);
        }
    }
}

/// Locate a level crossing of `phi` inside a dense segment by bisection.
fn locate_crossing(seg: &DenseSegment, ra: f64, rb: f64, level: f64, downward: bool) -> f64 {
    let mut lo = ra;
    let mut hi = rb;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = seg.eval_at(mid)[0] - level;
        let below = v < 0.0;
        if below == downward {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

const ESCAPE_WINDOW: usize = 16;
const CEILING_ESCALATION: f64 = 1e6;
const CEILING_HARD_CAP: f64 = 1e100;

/// Superlinear-escape confirmation on a trailing window: the nonlinear
/// forcing must dominate the linear and drag terms where `phi` is already
/// enormous, which gives `phi'' >= const * phi^q` with `q > 1` there.  Slow
/// algebraic growth `r^(2 kappa)` fails this because its forcing factor has
/// long since decayed.
fn escape_confirmed(window: &[(f64, f64, f64)], params: &ModelParams, lambda: f64, ceiling: f64) -> bool {
    if params.q <= 1.0 {
        return false;
    }
    let deep = ceiling.sqrt();
    let mut checked = 0usize;
    for &(r, phi, dphi) in window.iter().filter(|&&(_, p, _)| p >= deep) {
        let forcing = lambda * phi.powf(params.q) * gauss_forcing(r, params.d_u);
        let drag = (0.5 * r + params.d_v * (params.dim() - 1.0) / r) * dphi.abs();
        if forcing < 2.0 * (params.kappa.abs() * phi + drag) {
            return false;
        }
        checked += 1;
    }
    checked > 0
}

/// Integrate the profile from the Taylor start and classify the trajectory.
pub fn integrate_profile(
    params: &ModelParams,
    lambda: f64,
    controls: &IntegrationControls,
) -> Result<ProfileSolution, OdeError> {
    if lambda < 0.0 {
        return Err(OdeError::BadControls {
            what: "lambda must be nonnegative",
        });
    }
    if !(controls.r_max > controls.r0 && controls.r0 > 0.0) {
        return Err(OdeError::BadControls {
            what: "need 0 < r0 < r_max",
        });
    }
    if !(controls.phi_ceiling > 1.0 && controls.phi_floor < 1.0 && controls.phi_floor > 0.0) {
        return Err(OdeError::BadControls {
            what: "need ceiling > 1 > floor > 0",
        });
    }

    let f = |r: f64, y: &State| -> State { [y[1], rhs_raw(r, y[0], y[1], params, lambda)] };

    let start = taylor_start(params, lambda, controls.r0);
    let mut r = controls.r0;
    let mut y: State = [start.phi, start.dphi];
    let mut k1 = f(r, &y);
    let mut h = controls.initial_step.min(step_cap(r));

    let mut sink = GridSink {
        refine: controls.store_dense,
        rel_tol: controls.rel_tol,
        abs_tol: controls.abs_tol,
        grid: Vec::new(),
        phi: Vec::new(),
        dphi: Vec::new(),
    };
    sink.push_node(r, &y);

    let mut window: Vec<(f64, f64, f64)> = Vec::with_capacity(ESCAPE_WINDOW);
    let mut ceiling = controls.phi_ceiling;

    let finish = |sink: GridSink, outcome: Outcome| ProfileSolution {
        lambda,
        grid: sink.grid,
        phi: sink.phi,
        dphi: sink.dphi,
        outcome,
        params: *params,
    };

    for _step in 0..controls.max_steps {
        if r >= controls.r_max {
            return Ok(finish(sink, Outcome::Global { r_max: r }));
        }
        h = h.min(step_cap(r)).min(controls.r_max - r);
        if h < f64::EPSILON * r.max(controls.r0) * 4.0 {
            let estimated = if y[0] < 1.0 && y[1] < 0.0 {
                Some(Outcome::TouchZero { r_est: r })
            } else if y[0] > 1.0 && y[1] > 0.0 {
                Some(Outcome::BlowUp { r_est: r })
            } else {
                None
            };
            return Err(OdeError::StepUnderflow {
                r,
                phi: y[0],
                dphi: y[1],
                estimated,
            });
        }

        let att = try_step(&f, r, &y, &k1, h, controls.rel_tol, controls.abs_tol);
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

        // floor crossing first: it can only happen while phi is small,
        // disjoint from a ceiling crossing within one step
        if y_new[0] < controls.phi_floor {
            let rc = locate_crossing(&att.dense, r, r_new, controls.phi_floor, true);
            let yc = att.dense.eval_at(rc);
            if yc[1] < 0.0 {
                sink.push_step(&att.dense, r, &y, rc, &yc);
                return Ok(finish(sink, Outcome::TouchZero { r_est: rc }));
            }
        }
        if y_new[0] > ceiling {
            let rc = locate_crossing(&att.dense, r, r_new, ceiling, false);
            let yc = att.dense.eval_at(rc);
            let mut probe = window.clone();
            probe.push((rc, yc[0], yc[1]));
            if yc[1] > 0.0 && escape_confirmed(&probe, params, lambda, ceiling) {
                sink.push_step(&att.dense, r, &y, rc, &yc);
                return Ok(finish(sink, Outcome::BlowUp { r_est: rc }));
            }
            ceiling *= CEILING_ESCALATION;
            if ceiling > CEILING_HARD_CAP {
                // overflow guard: no confirmation possible, but values this
                // large cannot be continued in f64
                sink.push_step(&att.dense, r, &y, rc, &yc);
                return Ok(finish(sink, Outcome::BlowUp { r_est: rc }));
            }
        }

        sink.push_step(&att.dense, r, &y, r_new, &y_new);
        if window.len() == ESCAPE_WINDOW {
            window.remove(0);
        }
        window.push((r_new, y_new[0], y_new[1]));

        r = r_new;
        y = y_new;
        k1 = att.k_last;
        h = next_step_size(h, att.err);
    }
    Err(OdeError::MaxSteps { r })
}

/// Step cap resolving the Gaussian forcing scale.
fn step_cap(r: f64) -> f64 {
    0.01 * (1.0 + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params_a() -> ModelParams {
        // N=1, alpha=2: kappa = -1/2, q = 3, sigma = 1/8
        ModelParams::new(1, 1.0, 1.0, 1.0, 2.0).unwrap()
    }

    fn params_const() -> ModelParams {
        // N=2, alpha=0.5: kappa = 0
        ModelParams::new(2, 1.0, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = params_const();
        assert_eq!(rhs(0.7, 1.0, 0.0, &p, 0.0).unwrap(), 0.0);
        let p1 = params_a();
        // L'Hopital limit at the origin is realized by the Taylor constant
        let c = (p1.kappa + 1.0) / (p1.dim() * p1.d_v);
        assert_relative_eq!(c, 0.5);
        assert!(matches!(
            rhs(1.0, -0.1, 0.0, &p1, 1.0),
            Err(OdeError::DomainError { .. })
        ));
    }

    #[test]
    fn taylor_start_examples() {
        let p = params_const();
        let t = taylor_start(&p, 0.0, 1e-4);
        assert_eq!(t.phi, 1.0);
        assert_eq!(t.dphi, 0.0);

        let p1 = params_a();
        let t1 = taylor_start(&p1, 1.0, 1e-4);
        assert_relative_eq!(t1.phi, 1.0 + 2.5e-9, max_relative = 1e-12);
        assert_relative_eq!(t1.dphi, 5e-5, max_relative = 1e-12);
        assert!(t1.trunc_error < 1e-12);

        let p2 = ModelParams::with_kappa(2, 1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        let t2 = taylor_start(&p2, 3.0, 1e-3);
        assert_relative_eq!(t2.phi, 1.0 + 5e-7, max_relative = 1e-12);
        assert_relative_eq!(t2.dphi, 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn constant_solution_stays_constant() {
        let p = params_const();
        let sol = integrate_profile(&p, 0.0, &IntegrationControls::default()).unwrap();
        assert!(sol.outcome.is_global());
        let worst = sol
            .phi
            .iter()
            .map(|&v| (v - 1.0).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-10, "max deviation {worst}");
    }

    #[test]
    fn large_lambda_blows_up() {
        let p = params_a();
        let sol = integrate_profile(&p, 100.0, &IntegrationControls::default()).unwrap();
        match sol.outcome {
            Outcome::BlowUp { r_est } => assert!(r_est < 1.0, "r_est = {r_est}"),
            o => panic!("expected blow-up, got {o:?}"),
        }
    }

    #[test]
    fn small_lambda_deep_regime_touches_zero() {
        // N=1, alpha=1.5 => kappa = -1 < -1/2
        let p = ModelParams::new(1, 1.0, 1.0, 1.0, 1.5).unwrap();
        let sol =
            integrate_profile(&p, 1e-3, &IntegrationControls::default().deep_regime()).unwrap();
        match sol.outcome {
            Outcome::TouchZero { r_est } => assert!(r_est > 1.0 && r_est < 4.0),
            o => panic!("expected touch-zero, got {o:?}"),
        }
        // positivity of every retained node
        assert!(sol.phi.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn global_case_has_inverse_r_tail() {
        let p = params_a();
        let sol = integrate_profile(&p, 0.05, &IntegrationControls::default()).unwrap();
        assert!(sol.outcome.is_global());
        // reference tail constant from a fixed-step eighth-order oracle run
        let interp = sol.interpolant();
        let g30 = interp.eval(30.0).unwrap() * 30.0;
        assert_relative_eq!(g30, 0.0922834720452, max_relative = 2e-3);
    }

    #[test]
    fn theta_view_examples() {
        let p = params_a(); // sigma = 1/8
        let sol = integrate_profile(&p, 0.05, &IntegrationControls::default()).unwrap();
        let theta = sol.theta_view().unwrap();
        for (i, (&r, &ph)) in sol.grid.iter().zip(&sol.phi).enumerate() {
            assert_relative_eq!(theta[i], ph * (-r * r / 8.0).exp(), max_relative = 1e-14);
        }
        // q = 1: undefined
        let pq1 = ModelParams::new(2, 2.0, 1.0, 1.0, 0.5).unwrap();
        let sol1 = integrate_profile(&pq1, 0.0, &IntegrationControls::default()).unwrap();
        assert!(matches!(sol1.theta_view(), Err(OdeError::TransformUndefined)));
    }

    #[test]
    fn theta_explicit_value() {
        // phi(2) = 3 with sigma = 1/8 gives theta = 3 exp(-1/2)
        let p = params_a();
        let sol = ProfileSolution::from_samples(
            p,
            0.0,
            vec![1.0, 2.0],
            vec![2.0, 3.0],
            vec![0.0, 0.0],
            Outcome::Global { r_max: 2.0 },
        );
        let th = sol.theta_view().unwrap();
        assert_relative_eq!(th[1], 3.0 * (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn g_view_identity_and_cancellation() {
        let p = params_a();
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let phi: Vec<f64> = grid.iter().map(|&r| r.powf(2.0 * p.kappa)).collect();
        let dphi = vec![0.0; grid.len()];
        let sol = ProfileSolution::from_samples(
            p,
            0.0,
            grid.clone(),
            phi,
            dphi,
            Outcome::Global { r_max: 10.0 },
        );
        for &g in &sol.g_view(2.0 * p.kappa) {
            assert_relative_eq!(g, 1.0, max_relative = 1e-13);
        }
        let ones = vec![1.0; grid.len()];
        let sol1 = ProfileSolution::from_samples(
            p,
            0.0,
            grid,
            ones,
            vec![0.0; 20],
            Outcome::Global { r_max: 10.0 },
        );
        assert!(sol1.g_view(0.0).iter().all(|&g| g == 1.0));
    }

    #[test]
    fn comparison_ordering_in_lambda() {
        let p = params_a();
        let c = IntegrationControls::default().with_r_max(20.0);
        let lo = integrate_profile(&p, 0.05, &c).unwrap();
        let hi = integrate_profile(&p, 0.1, &c).unwrap();
        let ilo = lo.interpolant();
        let ihi = hi.interpolant();
        let mut r = 0.05;
        while r < 20.0 {
            let a = ilo.eval(r).unwrap();
            let b = ihi.eval(r).unwrap();
            assert!(b > a, "ordering violated at r = {r}: {b} <= {a}");
            r += 0.05;
        }
    }

    #[test]
    fn monotone_increase_for_nonnegative_kappa() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0, 0.5).unwrap(); // kappa = 0
        let sol = integrate_profile(&p, 0.3, &IntegrationControls::default()).unwrap();
        assert!(sol.outcome.is_global());
        assert!(sol.dphi.iter().skip(1).all(|&d| d > 0.0));
    }

    #[test]
    fn gaussian_lower_barrier_in_shallow_negative_band() {
        // -N/2 <= kappa < 0: phi stays above exp(-r^2/(4 D_v))
        let p = params_a(); // kappa = -1/2 = -N/2
        let sol = integrate_profile(&p, 0.05, &IntegrationControls::default()).unwrap();
        for (&r, &ph) in sol.grid.iter().zip(&sol.phi) {
            let barrier = (-r * r / (4.0 * p.d_v)).exp();
            assert!(ph > barrier, "barrier violated at r = {r}");
        }
    }

    #[test]
    fn theta_decreases_below_coefficient_threshold() {
        // kappa < 0 and lambda < 2 N sigma D_v - kappa = 0.75
        let p = params_a();
        let sol = integrate_profile(&p, 0.05, &IntegrationControls::default()).unwrap();
        let theta = sol.theta_view().unwrap();
        let mut prev = f64::INFINITY;
        for (i, &t) in theta.iter().enumerate() {
            if i > 0 {
                assert!(t < prev, "theta not decreasing at node {i}");
            }
            prev = t;
        }
        assert!(*theta.last().unwrap() < 1e-50);
    }

    #[test]
    fn linear_problem_growth_bound() {
        // q = 1 (alpha + chi/D_u = 1): solutions grow at most like r^(2M)
        let p = ModelParams::new(2, 2.0, 1.0, 1.0, 0.5).unwrap(); // kappa = 0, q = 1
        let lambda = 1.5; // M = kappa + lambda
        let m = p.kappa + lambda;
        let sol = integrate_profile(&p, lambda, &IntegrationControls::default()).unwrap();
        assert!(sol.outcome.is_global());
        for (&r, &ph) in sol.grid.iter().zip(&sol.phi) {
            if r > 30.0 {
                let ratio = ph.ln() / r.ln();
                assert!(
                    ratio <= 2.0 * m + 0.5,
                    "log phi / log r = {ratio} exceeds 2M = {} at r = {r}",
                    2.0 * m
                );
            }
        }
    }

    #[test]
    fn tolerance_refinement_consistent_with_order() {
        let p = params_a();
        let base = IntegrationControls::default();
        let tight = IntegrationControls {
            abs_tol: base.abs_tol / 2.0,
            rel_tol: base.rel_tol / 2.0,
            ..base
        };
        let a = integrate_profile(&p, 0.05, &base).unwrap();
        let b = integrate_profile(&p, 0.05, &tight).unwrap();
        let pa = *a.phi.last().unwrap();
        let pb = *b.phi.last().unwrap();
        // halving the tolerances must not move the endpoint by more than the
        // coarse tolerance scale
        assert!(
            (pa - pb).abs() <= 10.0 * base.rel_tol * pa.abs() + 1e-12,
            "endpoint moved by {}",
            (pa - pb).abs()
        );
    }

    #[test]
    fn interpolant_matches_nodes_and_midpoints() {
        let p = params_a();
        let sol = integrate_profile(&p, 0.05, &IntegrationControls::default()).unwrap();
        let interp = sol.interpolant();
        for i in (0..sol.grid.len() - 1).step_by(97) {
            let rm = 0.5 * (sol.grid[i] + sol.grid[i + 1]);
            let v = interp.eval(rm).unwrap();
            // cubic-vs-dense refinement guarantees relative accuracy at
            // interior points
            let scale = sol.phi[i].abs().max(1e-30);
            assert!((v - interp.eval(rm).unwrap()).abs() <= 1e-30);
            assert!(v.is_finite() && v / scale < 1e3);
        }
    }

    proptest! {
        #[test]
        fn theta_roundtrip_recovers_phi(vals in proptest::collection::vec(1e-6f64..1e3, 4..20)) {
            let p = params_a();
            let sigma = p.sigma.unwrap();
            let grid: Vec<f64> = (0..vals.len()).map(|i| 0.5 + i as f64 * 0.25).collect();
            let sol = ProfileSolution::from_samples(
                p, 0.0, grid.clone(), vals.clone(), vec![0.0; vals.len()],
                Outcome::Global { r_max: 10.0 },
            );
            let theta = sol.theta_view().unwrap();
            for ((&r, &v), &t) in grid.iter().zip(&vals).zip(&theta) {
                let back = t * (sigma * r * r).exp();
                prop_assert!((back - v).abs() <= 1e-12 * v.abs());
            }
        }
    }
}
