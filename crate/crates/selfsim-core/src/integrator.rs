//! Embedded Dormand-Prince 5(4) pair with fourth-order dense output.
//!
//! Shared by the profile integration and the eigenvalue shooting.  The state
//! is the fixed pair `[y, y']`.

pub type State = [f64; 2];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

// dense-output weights (Hairer-Norsett-Wanner DOPRI5 continuous extension)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One attempted step of size `h` from `(r, y)` with `k1 = f(r, y)` supplied.
pub struct StepAttempt {
    pub y_new: State,
    pub k_last: State,
    /// weighted RMS error estimate (accept when <= 1)
    pub err: f64,
    pub dense: DenseSegment,
}

/// Quartic interpolant over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub r0: f64,
    pub h: f64,
    cont: [State; 5],
}

impl DenseSegment {
    /// Evaluate at `r0 + theta * h`, `theta` in `[0, 1]`.
    pub fn eval(&self, theta: f64) -> State {
        let t = theta;
        let mt = 1.0 - t;
        let mut out = [0.0; 2];
        for i in 0..2 {
            let c = &self.cont;
            out[i] = c[0][i] + t * (c[1][i] + mt * (c[2][i] + t * (c[3][i] + mt * c[4][i])));
        }
        out
    }

    pub fn eval_at(&self, r: f64) -> State {
        self.eval((r - self.r0) / self.h)
    }
}

pub fn try_step<F>(f: &F, r: f64, y: &State, k1: &State, h: f64, rtol: f64, atol: f64) -> StepAttempt
where
    F: Fn(f64, &State) -> State,
{
    let yi = |k: &State, a: f64, i: usize| y[i] + h * a * k[i];
    let lin2 = |i: usize, a1: f64, k1v: &State, a2: f64, k2v: &State| {
        y[i] + h * (a1 * k1v[i] + a2 * k2v[i])
    };

    let y2 = [yi(k1, A21, 0), yi(k1, A21, 1)];
    let k2 = f(r + C2 * h, &y2);
    let y3 = [lin2(0, A31, k1, A32, &k2), lin2(1, A31, k1, A32, &k2)];
    let k3 = f(r + C3 * h, &y3);
    let mut y4 = [0.0; 2];
    for i in 0..2 {
        y4[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = f(r + C4 * h, &y4);
    let mut y5 = [0.0; 2];
    for i in 0..2 {
        y5[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = f(r + C5 * h, &y5);
    let mut y6 = [0.0; 2];
    for i in 0..2 {
        y6[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = f(r + h, &y6);
    let mut y_new = [0.0; 2];
    for i in 0..2 {
        y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    let k7 = f(r + h, &y_new);

    let mut err = 0.0f64;
    for i in 0..2 {
        let e = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
        let w = e / sc;
        err += w * w;
    }
    err = (err / 2.0).sqrt();

    let mut cont = [[0.0; 2]; 5];
    for i in 0..2 {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        cont[0][i] = y[i];
        cont[1][i] = ydiff;
        cont[2][i] = bspl;
        cont[3][i] = ydiff - h * k7[i] - bspl;
        cont[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }

    StepAttempt {
        y_new,
        k_last: k7,
        err,
        dense: DenseSegment { r0: r, h, cont },
    }
}

/// Standard step-size update for the accepted/rejected error `err`.
pub fn next_step_size(h: f64, err: f64) -> f64 {
    let fac = if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    };
    h * fac
}
