//! Constrained minimization of J on {H = 1} for the deep regime.
//!
//! All internal quantities use the substitution `w = phi exp(r^2/(8 D_v))`,
//! under which every stored integrand is Gaussian-damped:
//!
//! ```text
//! J(w) = (D_v/2) int nu (w' - r w/(4 D_v))^2 + (kappa/2) int nu w^2,
//! H(w) = 1/(q+1) int nu exp(-beta r^2) |w|^(q+1),
//! nu = r^(N-1),  beta = (q-1)/(8 D_v) + 1/(4 D_u).
//! ```
//!
//! The Dirichlet part is discretized on cells (piecewise-linear elements),
//! which pairs exactly with its own gradient and has no odd-even decoupling;
//! the constraint term uses nodal trapezoid weights.  Minimization runs a
//! preconditioned projected gradient descent with renormalization onto
//! {H = 1} and magnitude folding, then polishes the discrete stationarity
//! system with a bordered damped Newton iteration.  The descent alone stalls
//! on an O(h) spurious negative curvature direction of the truncated
//! discrete problem, which the Newton phase removes.

use crate::model::ModelParams;
use crate::ode::gauss_forcing;
use crate::shooting::CriticalResult;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error("q = {q} outside (1, {bound}) for N = {n}")]
    ExponentOutOfRange { q: f64, bound: f64, n: u32 },
    #[error("kappa = {kappa} is not below the regime boundary {boundary}")]
    WrongRegime { kappa: f64, boundary: f64 },
    #[error("minimizer did not converge: gradient norm {grad_norm} after {iterations} iterations")]
    NotConverged { grad_norm: f64, iterations: usize },
    #[error("q-weighted integral degenerate (denominator {0})")]
    DegenerateDenominator(f64),
    #[error("invalid controls: {0}")]
    BadControls(&'static str),
}

/// Critical Sobolev-type bound `(N+2)/(N-2)_+`, infinite for `N <= 2`.
pub fn exponent_bound(n: u32) -> f64 {
    if n <= 2 {
        f64::INFINITY
    } else {
        f64::from(n + 2) / f64::from(n - 2)
    }
}

fn check_exponent(params: &ModelParams) -> Result<(), VariationalError> {
    let bound = exponent_bound(params.n);
    if params.q <= 1.0 || params.q >= bound {
        return Err(VariationalError::ExponentOutOfRange {
            q: params.q,
            bound,
            n: params.n,
        });
    }
    Ok(())
}

fn check_regime(params: &ModelParams) -> Result<(), VariationalError> {
    if !params.is_deep_regime() {
        return Err(VariationalError::WrongRegime {
            kappa: params.kappa,
            boundary: -params.dim() / 2.0,
        });
    }
    Ok(())
}

/// `exp(a) * x^2` with the weight kept in log space.
fn weighted_sq(log_w: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let t = log_w + 2.0 * x.abs().ln();
    if t < -745.0 {
        0.0
    } else {
        t.exp()
    }
}

/// `exp(a) * |x|^p`.
fn weighted_pow(log_w: f64, x: f64, p: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let t = log_w + p * x.abs().ln();
    if t < -745.0 {
        0.0
    } else {
        t.exp()
    }
}

fn log_rho(r: f64, n: f64, d_v: f64) -> f64 {
    if r == 0.0 {
        // r^(N-1): one for N = 1, zero weight otherwise
        return if n == 1.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    (n - 1.0) * r.ln() + r * r / (4.0 * d_v)
}

/// Discrete energies `(J, H)` of a radial grid function, with trapezoid
/// quadrature and summation-by-parts centered differences.  The rho-weight
/// enters only through log-space factors.
pub fn energy(r: &[f64], phi: &[f64], params: &ModelParams) -> Result<(f64, f64), VariationalError> {
    check_exponent(params)?;
    assert_eq!(r.len(), phi.len());
    let m = r.len();
    assert!(m >= 3, "need at least three nodes");
    let h = r[1] - r[0];
    let n = params.dim();
    let (d_u, d_v, q) = (params.d_u, params.d_v, params.q);

    let dphi = sbp_derivative(phi, h);
    let mut j = 0.0;
    let mut hh = 0.0;
    for i in 0..m {
        let wq = if i == 0 || i == m - 1 { 0.5 * h } else { h };
        let lr = log_rho(r[i], n, d_v);
        if lr == f64::NEG_INFINITY {
            continue;
        }
        let lw = lr + wq.ln();
        j += 0.5 * params.d_v * weighted_sq(lw, dphi[i]) + 0.5 * params.kappa * weighted_sq(lw, phi[i]);
        hh += weighted_pow(lw - r[i] * r[i] / (4.0 * d_u), phi[i], q + 1.0) / (q + 1.0);
    }
    Ok((j, hh))
}

/// Analytic first variations `(dJ[v], dH[v])` of the discrete energies.
pub fn energy_first_variation(
    r: &[f64],
    phi: &[f64],
    dir: &[f64],
    params: &ModelParams,
) -> Result<(f64, f64), VariationalError> {
    check_exponent(params)?;
    let m = r.len();
    let h = r[1] - r[0];
    let n = params.dim();
    let (d_u, d_v, q) = (params.d_u, params.d_v, params.q);
    let dphi = sbp_derivative(phi, h);
    let ddir = sbp_derivative(dir, h);
    let mut dj = 0.0;
    let mut dh = 0.0;
    for i in 0..m {
        let wq = if i == 0 || i == m - 1 { 0.5 * h } else { h };
        let lr = log_rho(r[i], n, d_v);
        if lr == f64::NEG_INFINITY {
            continue;
        }
        let w = (lr + wq.ln()).exp();
        dj += w * (d_v * dphi[i] * ddir[i] + params.kappa * phi[i] * dir[i]);
        let e = (lr + wq.ln() - r[i] * r[i] / (4.0 * d_u)).exp();
        dh += e * weighted_pow(0.0, phi[i], q - 1.0) * phi[i] * dir[i];
    }
    Ok((dj, dh))
}

fn sbp_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    let mut d = vec![0.0; m];
    d[0] = (f[1] - f[0]) / h;
    for i in 1..m - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d[m - 1] = (f[m - 1] - f[m - 2]) / h;
    d
}

// ---------------------------------------------------------------------------
// banded symmetric operators (bandwidth 1)

#[derive(Debug, Clone)]
struct Tridiag {
    diag: Vec<f64>,
    off: Vec<f64>, // off[i] couples i and i+1
}

impl Tridiag {
    fn zeros(m: usize) -> Self {
        Tridiag {
            diag: vec![0.0; m],
            off: vec![0.0; m.saturating_sub(1)],
        }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let m = x.len();
        for i in 0..m {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                s += self.off[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    fn cholesky(&self) -> Option<TriChol> {
        let m = self.diag.len();
        let mut d = vec![0.0; m];
        let mut e = vec![0.0; m.saturating_sub(1)];
        for i in 0..m {
            let mut v = self.diag[i];
            if i > 0 {
                v -= e[i - 1] * e[i - 1];
            }
            if v <= 0.0 {
                return None;
            }
            d[i] = v.sqrt();
            if i + 1 < m {
                e[i] = self.off[i] / d[i];
            }
        }
        Some(TriChol { d, e })
    }
}

struct TriChol {
    d: Vec<f64>,
    e: Vec<f64>,
}

impl TriChol {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = b.len();
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut v = b[i];
            if i > 0 {
                v -= self.e[i - 1] * y[i - 1];
            }
            y[i] = v / self.d[i];
        }
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let mut v = y[i];
            if i + 1 < m {
                v -= self.e[i] * x[i + 1];
            }
            x[i] = v / self.d[i];
        }
        x
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalControls {
    pub r_cut: f64,
    pub nodes: usize,
    /// Convergence threshold on the preconditioned gradient norm.
    pub grad_tol: f64,
    pub max_pgd: usize,
    pub max_newton: usize,
    /// Hand over from descent to Newton below this gradient norm.
    pub switch_tol: f64,
}

impl Default for VariationalControls {
    fn default() -> Self {
        VariationalControls {
            r_cut: 25.0,
            nodes: 4000,
            grad_tol: 1e-10,
            max_pgd: 400,
            max_newton: 80,
            switch_tol: 1e-4,
        }
    }
}

/// Discretized minimizer with its energies and multiplier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalState {
    pub grid: Vec<f64>,
    pub phi_star: Vec<f64>,
    pub j_val: f64,
    pub h_val: f64,
    pub m_star: f64,
    pub el_residual: f64,
    /// J values along accepted descent steps.
    pub j_trace: Vec<f64>,
    pub pgd_iterations: usize,
    pub newton_iterations: usize,
    pub grad_norm: f64,
}

struct Workspace {
    r: Vec<f64>,
    h: f64,
    /// nodal trapezoid x nu weights
    hnu: Vec<f64>,
    /// H-term weights: hnu * exp(-beta r^2)
    eh: Vec<f64>,
    /// stiffness + kappa mass (tridiagonal, last row pinned)
    a: Tridiag,
    /// descent preconditioner factor
    p_chol: TriChol,
    q: f64,
}

impl Workspace {
    fn new(params: &ModelParams, controls: &VariationalControls) -> Result<Self, VariationalError> {
        if !(controls.r_cut > 1.0) || controls.nodes < 16 {
            return Err(VariationalError::BadControls("need r_cut > 1 and nodes >= 16"));
        }
        let m = controls.nodes + 1;
        let h = controls.r_cut / controls.nodes as f64;
        let r: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        let n = params.dim();
        let (d_u, d_v, q, kappa) = (params.d_u, params.d_v, params.q, params.kappa);

        let nu = |x: f64| if n == 1.0 { 1.0 } else { x.powf(n - 1.0) };
        let beta = (q - 1.0) / (8.0 * d_v) + 1.0 / (4.0 * d_u);

        let mut hnu = vec![0.0; m];
        let mut eh = vec![0.0; m];
        for i in 0..m {
            let wq = if i == 0 || i == m - 1 { 0.5 * h } else { h };
            hnu[i] = wq * nu(r[i]);
            eh[i] = hnu[i] * (-beta * r[i] * r[i]).exp();
        }

        // cell form of the Dirichlet term: per cell c = [r_i, r_{i+1}],
        // s_c = (w_{i+1} - w_i)/h - a_c (w_i + w_{i+1})/2 with midpoint
        // coefficients; A = D_v sum_c nu_c h s_c^2 / 2 twice differentiated
        let mut a = Tridiag::zeros(m);
        for i in 0..m - 1 {
            let rc = 0.5 * (r[i] + r[i + 1]);
            let ac = rc / (4.0 * d_v);
            let wc = h * nu(rc) * params.d_v;
            let p = -1.0 / h - 0.5 * ac;
            let s = 1.0 / h - 0.5 * ac;
            a.diag[i] += wc * p * p;
            a.diag[i + 1] += wc * s * s;
            a.off[i] += wc * p * s;
        }
        for i in 0..m {
            a.diag[i] += kappa * hnu[i];
        }
        // homogeneous boundary value at r_cut
        let scale = a.diag.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        a.diag[m - 1] = scale.max(1.0);
        a.off[m - 2] = 0.0;

        let mut p_mat = a.clone();
        for i in 0..m {
            p_mat.diag[i] += (2.0 * kappa.abs() + 1.0) * hnu[i];
        }
        let p_chol = match p_mat.cholesky() {
            Some(c) => c,
            None => {
                // bump the shift until positive definite
                let mut shift = 1.0;
                loop {
                    let mut pm = a.clone();
                    for i in 0..m {
                        pm.diag[i] += ((2.0 * kappa.abs() + 1.0) + shift) * hnu[i] + shift * 1e-12;
                    }
                    if let Some(c) = pm.cholesky() {
                        break c;
                    }
                    shift *= 10.0;
                    if shift > 1e12 {
                        return Err(VariationalError::BadControls("preconditioner assembly failed"));
                    }
                }
            }
        };

        Ok(Workspace {
            r,
            h,
            hnu,
            eh,
            a,
            p_chol,
            q,
        })
    }

    fn h_val(&self, w: &[f64]) -> f64 {
        let q1 = self.q + 1.0;
        let mut s = 0.0;
        for (ei, wi) in self.eh.iter().zip(w) {
            s += ei * weighted_pow(0.0, *wi, q1);
        }
        s / q1
    }

    fn grad_h(&self, w: &[f64]) -> Vec<f64> {
        self.eh
            .iter()
            .zip(w)
            .map(|(ei, &wi)| ei * weighted_pow(0.0, wi, self.q - 1.0) * wi)
            .collect()
    }

    fn j_val(&self, w: &[f64]) -> f64 {
        let mut aw = vec![0.0; w.len()];
        self.a.mul(w, &mut aw);
        0.5 * dot(w, &aw)
    }

    fn renormalize(&self, w: &mut [f64]) {
        let h = self.h_val(w);
        let s = h.powf(-1.0 / (self.q + 1.0));
        for v in w.iter_mut() {
            *v *= s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize J on {H = 1}: preconditioned projected descent with
/// renormalization and magnitude folding, then a bordered Newton polish of
/// the stationarity system.
pub fn minimize_constrained(
    params: &ModelParams,
    controls: &VariationalControls,
) -> Result<VariationalState, VariationalError> {
    check_regime(params)?;
    check_exponent(params)?;
    let ws = Workspace::new(params, controls)?;
    let m = ws.r.len();
    let last = m - 1;

    // Gaussian seed: phi0 = exp(-r^2/(4 D_v)) => w = exp(-r^2/(8 D_v))
    let mut w: Vec<f64> = ws
        .r
        .iter()
        .map(|&r| (-r * r / (8.0 * params.d_v)).exp())
        .collect();
    w[last] = 0.0;
    ws.renormalize(&mut w);

    let mut j_trace = vec![ws.j_val(&w)];
    let mut mult = 0.0;
    let mut grad_norm = f64::INFINITY;
    let mut pgd_iterations = 0;

    let mut aw = vec![0.0; m];
    for _ in 0..controls.max_pgd {
        ws.a.mul(&w, &mut aw);
        let gh = ws.grad_h(&w);
        let ghn = dot(&gh, &gh);
        mult = -dot(&aw, &gh) / ghn;
        let mut g: Vec<f64> = aw.iter().zip(&gh).map(|(a, h)| a + mult * h).collect();
        g[last] = 0.0;
        let mut d = ws.p_chol.solve(&g);
        for v in d.iter_mut() {
            *v = -*v;
        }
        d[last] = 0.0;
        grad_norm = (-dot(&g, &d)).max(0.0).sqrt();
        if grad_norm < controls.switch_tol {
            break;
        }

        let j_cur = *j_trace.last().unwrap();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut wt: Vec<f64> = w
                .iter()
                .zip(&d)
                .map(|(&wi, &di)| (wi + step * di).abs())
                .collect();
            wt[last] = 0.0;
            ws.renormalize(&mut wt);
            let jt = ws.j_val(&wt);
            if jt < j_cur {
                w = wt;
                j_trace.push(jt);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        pgd_iterations += 1;
        if !accepted {
            break;
        }
    }

    // bordered Newton on F(w, m) = A w + m grad_h(w), H(w) = 1
    let mut newton_iterations = 0;
    let kkt = |ws: &Workspace, w: &[f64], mult: f64| -> (Vec<f64>, f64) {
        let mut aw = vec![0.0; w.len()];
        ws.a.mul(w, &mut aw);
        let gh = ws.grad_h(w);
        let mut f: Vec<f64> = aw.iter().zip(&gh).map(|(a, h)| a + mult * h).collect();
        f[w.len() - 1] = 0.0;
        let hv = ws.h_val(w);
        let norm = (dot(&f, &f) + (hv - 1.0) * (hv - 1.0)).sqrt();
        (f, norm)
    };

    let (_, mut res_norm) = kkt(&ws, &w, mult);
    for _ in 0..controls.max_newton {
        let (f, _) = kkt(&ws, &w, mult);
        let gh = ws.grad_h(&w);
        let hv = ws.h_val(&w);

        // Jacobian A + m q diag(eh |w|^(q-1)), Tikhonov-guarded
        let mut jac = ws.a.clone();
        for i in 0..m {
            jac.diag[i] += mult * ws.q * ws.eh[i] * weighted_pow(0.0, w[i], ws.q - 1.0);
        }
        jac.diag[last] = ws.a.diag[last];
        let base_tau = 1e-12 * jac.diag.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut tau = base_tau;
        let chol = loop {
            let mut jm = jac.clone();
            for v in jm.diag.iter_mut() {
                *v += tau;
            }
            if let Some(c) = jm.cholesky() {
                break c;
            }
            tau = (tau * 100.0).max(1e-10);
            if tau > 1e8 * base_tau.max(1e-30) {
                return Err(VariationalError::NotConverged {
                    grad_norm: res_norm,
                    iterations: pgd_iterations + newton_iterations,
                });
            }
        };

        let mut gp = gh.clone();
        gp[last] = 0.0;
        let u = chol.solve(&gp);
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let v = chol.solve(&neg_f);
        let gu = dot(&gp, &u);
        if gu.abs() < 1e-300 {
            return Err(VariationalError::DegenerateDenominator(gu));
        }
        let dm = (dot(&gp, &v) - (1.0 - hv)) / gu;
        let dw: Vec<f64> = v.iter().zip(&u).map(|(vi, ui)| vi - dm * ui).collect();

        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let mut wt: Vec<f64> = w
                .iter()
                .zip(&dw)
                .map(|(&wi, &di)| (wi + alpha * di).abs())
                .collect();
            wt[last] = 0.0;
            let mt = mult + alpha * dm;
            let (_, rn) = kkt(&ws, &wt, mt);
            if rn < res_norm * (1.0 - 0.25 * alpha) {
                w = wt;
                mult = mt;
                res_norm = rn;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        newton_iterations += 1;
        if !improved {
            break;
        }
        if res_norm < 1e-13 * (1.0 + mult.abs()) {
            break;
        }
    }

    ws.renormalize(&mut w);
    // final measures with the converged multiplier
    ws.a.mul(&w, &mut aw);
    let gh = ws.grad_h(&w);
    mult = -dot(&aw, &gh) / dot(&gh, &gh);
    let mut g: Vec<f64> = aw.iter().zip(&gh).map(|(a, h)| a + mult * h).collect();
    g[last] = 0.0;
    let d = ws.p_chol.solve(&g);
    grad_norm = dot(&g, &d).max(0.0).sqrt();

    if !(grad_norm < controls.grad_tol) {
        return Err(VariationalError::NotConverged {
            grad_norm,
            iterations: pgd_iterations + newton_iterations,
        });
    }

    let phi_star: Vec<f64> = ws
        .r
        .iter()
        .zip(&w)
        .map(|(&r, &wi)| wi * (-r * r / (8.0 * params.d_v)).exp())
        .collect();
    let (j_val, h_val) = energy(&ws.r, &phi_star, params)?;
    let el = el_residual_centered(&ws.r, &phi_star, mult, params);

    if !(mult > 0.0) {
        return Err(VariationalError::NotConverged {
            grad_norm: mult,
            iterations: pgd_iterations + newton_iterations,
        });
    }

    Ok(VariationalState {
        grid: ws.r,
        phi_star,
        j_val,
        h_val,
        m_star: mult,
        el_residual: el,
        j_trace,
        pgd_iterations,
        newton_iterations,
        grad_norm,
    })
}

/// Max-norm defect of the stationarity equation in non-divergence form,
/// `-D_v (phi'' + ((N-1)/r + r/(2 D_v)) phi') + kappa phi + M* E phi^q`,
/// evaluated with centered differences (independent of the minimizer's
/// internal cell discretization).
pub fn el_residual_centered(r: &[f64], phi: &[f64], m_star: f64, params: &ModelParams) -> f64 {
    let m = r.len();
    let h = r[1] - r[0];
    let n = params.dim();
    let mut worst = 0.0f64;
    for i in 1..m - 1 {
        let d1 = (phi[i + 1] - phi[i - 1]) / (2.0 * h);
        let d2 = (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) / (h * h);
        let ri = r[i];
        let resid = -params.d_v * (d2 + ((n - 1.0) / ri + ri / (2.0 * params.d_v)) * d1)
            + params.kappa * phi[i]
            + m_star * gauss_forcing(ri, params.d_u) * weighted_pow(0.0, phi[i], params.q - 1.0) * phi[i];
        worst = worst.max(resid.abs());
    }
    worst
}

/// Multiplier from pairing the stationarity identity with the principal
/// eigenfunction `exp(-r^2/(4 D_v))`: the rho-weights cancel, leaving plain
/// `r^(N-1)` moments.
pub fn multiplier_from_eigenfunction(
    state: &VariationalState,
    params: &ModelParams,
) -> Result<f64, VariationalError> {
    check_regime(params)?;
    let n = params.dim();
    let h = state.grid[1] - state.grid[0];
    let m = state.grid.len();
    let nu = |x: f64| if n == 1.0 { 1.0 } else { x.powf(n - 1.0) };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        let wq = if i == 0 || i == m - 1 { 0.5 * h } else { h };
        let r = state.grid[i];
        let p = state.phi_star[i];
        num += wq * nu(r) * p;
        den += wq * nu(r) * gauss_forcing(r, params.d_u) * weighted_pow(0.0, p, params.q);
    }
    if !(den.is_finite() && den > 1e-280) {
        return Err(VariationalError::DegenerateDenominator(den));
    }
    Ok(-(n / 2.0 + params.kappa) * num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub lambda_equiv: f64,
    pub mismatch: f64,
}

/// The rescaled minimizer solves the profile equation with
/// `lambda = M* phi*(0)^(q-1)`; compare against the shooting value.
pub fn cross_check_with_shooting(
    state: &VariationalState,
    params: &ModelParams,
    critical: &CriticalResult,
) -> Result<CrossCheck, VariationalError> {
    check_regime(params)?;
    let phi0 = state.phi_star[0];
    let lambda_equiv = state.m_star * phi0.powf(params.q - 1.0);
    let mismatch = (lambda_equiv - critical.lambda_star).abs() / critical.lambda_star;
    Ok(CrossCheck {
        lambda_equiv,
        mismatch,
    })
}
