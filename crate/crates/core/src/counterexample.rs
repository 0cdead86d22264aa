//! The explicit equation `ÿ = (2t²−1)/(1+t²)² · y`.
//!
//! Everything here is evaluated from closed forms: the Cauchy matrix
//! `Φ(t,s)`, the auxiliary polynomials `f₁, f₂, g₁, g₂, g₃`, the perturbed
//! unit steps `W_m = Φ(m, m−1) + diag(0, r/(3√((1+m²)³(1+(m−1)²))))`, their
//! deviations from `Φ(m, m−1)`, and the coefficient perturbation
//! `B(m) = Ẇ_m W_m⁻¹ − A(m)` that a system realising `W_m` would need.
//!
//! Two printed formulas disagree with the direct computation they summarise:
//!
//! - the printed `g₃` expansion has `s²` where the factored form
//!   `9(1+t²)²(1+s²)²` has `2s²` (they agree when `s = 0`);
//! - the printed forward deviation `(r/g₁)·[[0,0],[−f₂, f₁]]` lacks a factor
//!   `(1+t²)` in its last entry, and the printed backward deviation and
//!   recovered perturbation carry the wrong sign in their last entry.
//!
//! Both printed and factored values are exposed; direct products are
//! authoritative.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::flow::{Method, TransitionMatrix};
use crate::mask::{mask_residual, PerturbationMask};
use crate::norm::{matrix_norm, NormKind};
use crate::system::{second_order_system, SystemKind, SystemSpec};

pub const COEFFICIENT_TEXT: &str = "(2*t^2-1)/(1+t^2)^2";

/// Default central-difference step for [`recovered_b`].
pub const DEFAULT_DIFF_STEP: f64 = 1e-6;

/// Relative gap above which printed and recovered entries are reported as discrepant.
pub const DISCREPANCY_REL: f64 = 1e-4;

pub fn coefficient(t: f64) -> f64 {
    let q = 1.0 + t * t;
    (2.0 * t * t - 1.0) / (q * q)
}

pub fn system_matrix(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, coefficient(t), 0.0])
}

/// The system `[[0, 1], [(2t²−1)/(1+t²)², 0]]`, built from its expression text.
pub fn counterexample_system() -> SystemSpec {
    let a = crate::expr::parse_coefficient(COEFFICIENT_TEXT).expect("built-in coefficient parses");
    second_order_system(a.into())
        .with_kind(SystemKind::Counterexample2d)
        .with_label("counterexample")
}

pub fn f1(t: f64, s: f64) -> f64 {
    let s2 = s * s;
    3.0 + 3.0 * s2 + 2.0 * s2 * s2 + 3.0 * t * s + t * t * t * s
}

pub fn f2(t: f64, s: f64) -> f64 {
    let (t2, s2) = (t * t, s * s);
    -3.0 * t - 3.0 * t * s2 - 2.0 * t * s2 * s2 + 3.0 * s + 3.0 * s * t2 + 2.0 * s * t2 * t2
}

/// Values of the auxiliary polynomials at `(t, s)` for perturbation size `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexamplePolynomials {
    pub f1: f64,
    pub f2: f64,
    pub g1: f64,
    /// `g₃` expanded term by term as printed.
    pub g3: f64,
    /// `(1+t²)(g₃ + f₁·r)` with the printed `g₃`.
    pub g2: f64,
    /// `9(1+t²)²(1+s²)²`, the value that makes the deviation identities hold.
    pub g3_factored: f64,
    pub g2_factored: f64,
}

pub fn eval_polys(t: f64, s: f64, r: f64) -> CounterexamplePolynomials {
    let (t2, s2) = (t * t, s * s);
    let (qt, qs) = (1.0 + t2, 1.0 + s2);
    let f1 = f1(t, s);
    let f2 = f2(t, s);
    let g1 = 9.0 * qt * qt * qt * qs * qs;
    let g3 = 9.0
        * (1.0
            + 2.0 * t2
            + t2 * t2
            + 4.0 * s2 * t2
            + 2.0 * s2 * t2 * t2
            + 2.0 * s2 * s2 * t2
            + s2 * s2 * t2 * t2
            + s2
            + s2 * s2);
    let g3_factored = 9.0 * qt * qt * qs * qs;
    CounterexamplePolynomials {
        f1,
        f2,
        g1,
        g3,
        g2: qt * (g3 + f1 * r),
        g3_factored,
        g2_factored: qt * (g3_factored + f1 * r),
    }
}

/// Closed-form Cauchy matrix `Φ(t, s)`.
pub fn closed_form_matrix(t: f64, s: f64) -> DMatrix<f64> {
    let (qt, qs) = (1.0 + t * t, 1.0 + s * s);
    let pre = 1.0 / (3.0 * (qt * qs).sqrt());
    let top_right = -3.0 * s - s * s * s + 3.0 * t + t * t * t;
    let bottom_right = (3.0 + 3.0 * t * s + t * s * s * s + 3.0 * t * t + 2.0 * t * t * t * t) / qt;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            pre * f1(t, s) / qs,
            pre * top_right,
            pre * f2(t, s) / (qt * qs),
            pre * bottom_right,
        ],
    )
}

pub fn closed_form_phi(t: f64, s: f64) -> TransitionMatrix {
    TransitionMatrix {
        value: closed_form_matrix(t, s),
        from: s,
        to: t,
        system: "counterexample".into(),
        method: Method::ClosedForm,
    }
}

/// Bottom-right increment `r / (3√((1+t²)³(1+s²)))`, with `t` continuous.
pub fn perturbation_increment(t: f64, s: f64, r: f64) -> f64 {
    let qt = 1.0 + t * t;
    r / (3.0 * (qt * qt * qt * (1.0 + s * s)).sqrt())
}

/// `W(t) = Φ(t, s) + diag(0, increment(t, s, r))`.
pub fn perturbed_flow(t: f64, s: f64, r: f64) -> DMatrix<f64> {
    let mut w = closed_form_matrix(t, s);
    w[(1, 1)] += perturbation_increment(t, s, r);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedStep {
    pub m: u32,
    pub r: f64,
    pub w: DMatrix<f64>,
    pub base: TransitionMatrix,
}

impl PerturbedStep {
    pub fn increment(&self) -> f64 {
        let m = f64::from(self.m);
        perturbation_increment(m, m - 1.0, self.r)
    }
}

fn check_step_args(m: u32, r: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "step index m must be at least 1".into(),
        ));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "perturbation size r must be finite and nonnegative, got {r}"
        )));
    }
    Ok(())
}

pub fn build_w(m: u32, r: f64) -> Result<PerturbedStep> {
    check_step_args(m, r)?;
    let mf = f64::from(m);
    let base = closed_form_phi(mf, mf - 1.0);
    let mut w = base.value.clone();
    w[(1, 1)] += perturbation_increment(mf, mf - 1.0, r);
    Ok(PerturbedStep { m, r, w, base })
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// `W·Φ⁻¹ − I` and `Φ·W⁻¹ − I`, with the printed reference forms.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviations {
    pub forward: DMatrix<f64>,
    pub backward: DMatrix<f64>,
    pub forward_norm: f64,
    pub backward_norm: f64,
    /// `(r/g₁)·[[0,0],[−f₂, f₁]]`.
    pub forward_printed: DMatrix<f64>,
    /// `(r/g₂)·[[0,0],[f₂, f₁]]`, printed `g₂`.
    pub backward_printed: DMatrix<f64>,
}

pub fn deviation_products(m: u32, r: f64, kind: NormKind) -> Result<Deviations> {
    let step = build_w(m, r)?;
    let x = &step.base.value;
    let id = DMatrix::<f64>::identity(2, 2);
    let forward = &step.w * invert(x, "unperturbed step")? - &id;
    let backward = x * invert(&step.w, "perturbed step W")? - &id;
    let mf = f64::from(m);
    let p = eval_polys(mf, mf - 1.0, r);
    let forward_printed = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -p.f2, p.f1]) * (r / p.g1);
    let backward_printed = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, p.f2, p.f1]) * (r / p.g2);
    Ok(Deviations {
        forward_norm: matrix_norm(&forward, kind)?,
        backward_norm: matrix_norm(&backward, kind)?,
        forward,
        backward,
        forward_printed,
        backward_printed,
    })
}

/// `‖W_m Φ⁻¹ − I‖ + ‖Φ W_m⁻¹ − I‖` for `Φ = Φ(m, m−1)`.
pub fn saturation_deficit_step(m: u32, r: f64, kind: NormKind) -> Result<f64> {
    let d = deviation_products(m, r, kind)?;
    Ok(d.forward_norm + d.backward_norm)
}

const BRACKET_LIMIT: usize = 200;
const BISECTION_ITERS: usize = 200;

/// Largest `r` (to bisection resolution) with deficit `≤ δ/2`. The bracket
/// starts at `(0, 1]` and doubles until the deficit at its top exceeds `δ/2`.
pub fn select_r(m: u32, delta: f64, kind: NormKind) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let target = 0.5 * delta;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut grown = 0;
    while saturation_deficit_step(m, hi, kind)? <= target {
        lo = hi;
        hi *= 2.0;
        grown += 1;
        if grown > BRACKET_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "deficit never reaches {target} at m = {m}"
            )));
        }
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if saturation_deficit_step(m, mid, kind)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// One entry where the printed recovered perturbation and the oracle differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryDiscrepancy {
    pub row: usize,
    pub col: usize,
    pub printed: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPerturbation {
    pub m: u32,
    pub r: f64,
    /// The printed closed form (printed `g₂`).
    pub printed: DMatrix<f64>,
    /// Finite-difference value of `B(m)`; mask residuals are computed from it.
    pub oracle: DMatrix<f64>,
    /// Literal `[(W(m+h) − W(m−h))/2h]·W⁻¹ − A(m)`, Richardson-extrapolated.
    pub direct: DMatrix<f64>,
    pub residual_single: f64,
    pub residual_lastrow: f64,
    pub discrepancies: Vec<EntryDiscrepancy>,
}

/// The recovered perturbation formula with the printed `g₂`.
pub fn printed_b(m: u32, r: f64) -> DMatrix<f64> {
    let mf = f64::from(m);
    let p = eval_polys(mf, mf - 1.0, r);
    let q = 1.0 + mf * mf;
    DMatrix::from_row_slice(
        2,
        2,
        &[p.f2, -p.f1 * q, 3.0 * p.f2 * mf / q, 3.0 * p.f1 * mf],
    ) * (r / p.g2)
}

fn richardson<F>(f: F, x: f64, h: f64) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let central = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let coarse = central(h);
    let fine = central(0.5 * h);
    (fine * 4.0 - coarse) / 3.0
}

/// `B(m) = Ẇ(m)·W_m⁻¹ − A(m)` by Richardson-extrapolated central differences.
///
/// Since `Φ(t, m)` has derivative `A(m)` at `t = m`, `B(m)` is also the
/// derivative at `t = m` of `W(t)·W_m⁻¹ − Φ(t, m)`, which by the cocycle law
/// equals `Φ(t, m)·(Φ(m, m−1)·W_m⁻¹ − I) + D(t)·W_m⁻¹`. That expression is
/// `O(r)` in size, so differencing it keeps the rounding error proportional to
/// the result; the literal form differences `O(1)` entries and is kept in
/// [`RecoveredPerturbation::direct`] for comparison.
pub fn recovered_b(m: u32, r: f64, h: f64, kind: NormKind) -> Result<RecoveredPerturbation> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "difference step must lie in [1e-8, 1e-4], got {h:e}"
        )));
    }
    let step = build_w(m, r)?;
    let mf = f64::from(m);
    let s = mf - 1.0;
    let w_inv = invert(&step.w, "perturbed step W")?;
    let backward = &step.base.value * &w_inv - DMatrix::<f64>::identity(2, 2);

    let relative = |t: f64| {
        let mut d = DMatrix::<f64>::zeros(2, 2);
        d[(1, 1)] = perturbation_increment(t, s, r);
        closed_form_matrix(t, mf) * &backward + d * &w_inv
    };
    let oracle = richardson(relative, mf, h);

    let w_dot = richardson(|t| perturbed_flow(t, s, r), mf, h);
    let direct = w_dot * &w_inv - system_matrix(mf);

    let printed = printed_b(m, r);
    let mut discrepancies = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let (p, o) = (printed[(i, j)], oracle[(i, j)]);
            let scale = p.abs().max(o.abs());
            if scale > 0.0 && (p - o).abs() > DISCREPANCY_REL * scale {
                discrepancies.push(EntryDiscrepancy {
                    row: i,
                    col: j,
                    printed: p,
                    oracle: o,
                });
            }
        }
    }
    Ok(RecoveredPerturbation {
        m,
        r,
        residual_single: mask_residual(&oracle, PerturbationMask::SingleEntry { n: 2 }, kind)?,
        residual_lastrow: mask_residual(&oracle, PerturbationMask::LastRow { n: 2 }, kind)?,
        printed,
        oracle,
        direct,
        discrepancies,
    })
}
