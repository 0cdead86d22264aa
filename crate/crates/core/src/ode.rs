//! Dormand–Prince 5(4) integrator with embedded error control.
//!
//! The controller accepts a step when the scaled local error estimate
//! `max_i |err_i| / (0.1 · tol · max(1, |y_i|, |y_i'|))` is at most one. Safety
//! factor and growth limits are fixed constants, so a given problem always
//! takes the same sequence of steps.

use crate::error::{Error, Result};

pub const MIN_TOL: f64 = 1e-13;
pub const MAX_TOL: f64 = 1e-3;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const INITIAL_STEP: f64 = 0.02;
const MAX_STEPS: usize = 500_000;
// Fraction of `tol` each step aims for, so that accumulated error over
// O(10) time units still stays near `tol`.
const LOCAL_TARGET: f64 = 0.1;

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
// 5th-order weights minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

pub fn check_tolerance(tol: f64) -> Result<()> {
    if (MIN_TOL..=MAX_TOL).contains(&tol) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "tolerance {tol:e} outside [{MIN_TOL:e}, {MAX_TOL:e}]"
        )))
    }
}

/// Integrates `y' = f(u, y)` from `t0` to `t1` (either direction).
pub fn integrate<F>(mut rhs: F, t0: f64, t1: f64, y0: &[f64], tol: f64) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    check_tolerance(tol)?;
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite integration bounds".into(),
        ));
    }
    let mut y = y0.to_vec();
    if t0 == t1 {
        return Ok(Solution {
            y,
            accepted: 0,
            rejected: 0,
        });
    }
    let dim = y.len();
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut h = dir * (t1 - t0).abs().min(INITIAL_STEP);

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    rhs(t, &y, &mut k1)?;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_rejected = false;

    loop {
        if accepted + rejected >= MAX_STEPS {
            return Err(Error::StepBudget {
                steps: MAX_STEPS,
                at: t,
            });
        }
        if h.abs() < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { at: t });
        }
        let last = (t + h - t1) * dir >= 0.0;
        if last {
            h = t1 - t;
        }

        for i in 0..dim {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &tmp, &mut k2)?;
        for i in 0..dim {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &tmp, &mut k3)?;
        for i in 0..dim {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &tmp, &mut k4)?;
        for i in 0..dim {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &tmp, &mut k5)?;
        for i in 0..dim {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &tmp, &mut k6)?;
        for i in 0..dim {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        let t_new = if last { t1 } else { t + h };
        rhs(t_new, &y_new, &mut k7)?;

        let mut err = 0.0f64;
        for i in 0..dim {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = LOCAL_TARGET * tol * 1f64.max(y[i].abs()).max(y_new[i].abs());
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::NonFinite);
        }

        if err <= 1.0 {
            accepted += 1;
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            if last {
                return Ok(Solution {
                    y,
                    accepted,
                    rejected,
                });
            }
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h *= fac;
        } else {
            rejected += 1;
            last_rejected = true;
            h *= (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
        }
    }
}

/// `∫_{t0}^{t1} f(u) du` through `q' = f(u)` with the same step controller.
pub fn quadrature<F>(mut f: F, t0: f64, t1: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let sol = integrate(
        |u, _y, dy| {
            dy[0] = f(u)?;
            Ok(())
        },
        t0,
        t1,
        &[0.0],
        tol,
    )?;
    Ok(sol.y[0])
}
