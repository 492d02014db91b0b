//! Adaptive Dormand–Prince 5(4) integration for small first-order systems.

use crate::error::{Result, StopError};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 200_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
// error coefficients: difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = rhs(x, y)` from `x0` to `x1` (either direction) and returns `y(x1)`.
///
/// `h_hint` is the initial step magnitude; it is updated with the last accepted step so
/// that consecutive calls over adjacent intervals do not restart from scratch.
pub fn integrate<const N: usize, F>(
    rhs: &F,
    x0: f64,
    y0: [f64; N],
    x1: f64,
    tol: &Tolerance,
    h_hint: &mut f64,
) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N] + ?Sized,
{
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = h_hint.abs().min(span.abs());
    if !(h > 0.0) {
        h = span.abs() * 0.1;
    }
    let mut k1 = rhs(x, &y);
    let mut steps = 0usize;
    loop {
        let remaining = (x1 - x) * dir;
        if remaining <= span.abs() * 1e-15 {
            break;
        }
        if steps >= tol.max_steps {
            return Err(StopError::NonConvergent(format!(
                "ODE step budget exhausted between {x0} and {x1} (stalled at {x})"
            )));
        }
        steps += 1;
        let last = h >= remaining;
        let hs = if last { remaining * dir } else { h * dir };
        let k2 = rhs(x + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
        let k3 = rhs(x + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
        let k4 = rhs(
            x + C4 * hs,
            &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs),
        );
        let k5 = rhs(
            x + C5 * hs,
            &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
        );
        let k6 = rhs(
            x + hs,
            &axpy(
                &y,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                hs,
            ),
        );
        let y_new = axpy(
            &y,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            hs,
        );
        let x_new = if last { x1 } else { x + hs };
        let k7 = rhs(x_new, &y_new);
        let mut err = 0.0f64;
        for i in 0..N {
            let e =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h < span.abs() * 1e-14 {
                return Err(StopError::NonConvergent(format!(
                    "non-finite ODE state near x = {x}"
                )));
            }
            continue;
        }
        if err <= 1.0 {
            x = x_new;
            y = y_new;
            k1 = k7;
            if !last {
                *h_hint = h;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < span.abs() * 1e-14 {
                return Err(StopError::NonConvergent(format!(
                    "ODE step size underflow near x = {x}"
                )));
            }
        }
    }
    Ok(y)
}
