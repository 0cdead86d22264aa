//! Exact rational check of the closed-form identities at integer points.
//!
//! With `κ(t,s) = 1/(3√((1+t²)(1+s²)))` the closed-form Cauchy matrix is
//! `Φ(t,s) = κ·M(t,s)` with `M` rational, and the perturbation increment of
//! `W_m` is `κ·r/(1+t²)`. Hence `W_m = κ·M_W` with `M_W` rational and every
//! quantity below (`Φ(t,s)Φ(s,t)`, `W Φ⁻¹`, `Φ W⁻¹`) is a rational matrix:
//! the radicals cancel and the comparison is exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::report::CheckReport;

type Q = BigRational;

#[derive(Debug, Clone, PartialEq)]
struct Mat2([[Q; 2]; 2]);

impl Mat2 {
    fn new(a: Q, b: Q, c: Q, d: Q) -> Self {
        Mat2([[a, b], [c, d]])
    }

    fn identity() -> Self {
        Mat2::new(Q::one(), Q::zero(), Q::zero(), Q::one())
    }

    fn get(&self, i: usize, j: usize) -> &Q {
        &self.0[i][j]
    }

    fn mul(&self, o: &Mat2) -> Mat2 {
        let e = |i: usize, j: usize| &self.0[i][0] * &o.0[0][j] + &self.0[i][1] * &o.0[1][j];
        Mat2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    fn sub(&self, o: &Mat2) -> Mat2 {
        let e = |i: usize, j: usize| &self.0[i][j] - &o.0[i][j];
        Mat2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    fn scale(&self, k: &Q) -> Mat2 {
        let e = |i: usize, j: usize| &self.0[i][j] * k;
        Mat2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    fn det(&self) -> Q {
        &self.0[0][0] * &self.0[1][1] - &self.0[0][1] * &self.0[1][0]
    }

    fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det.is_zero() {
            return None;
        }
        let [[a, b], [c, d]] = &self.0;
        Some(Mat2::new(d.clone(), -b.clone(), -c.clone(), a.clone()).scale(&(Q::one() / det)))
    }

    /// Largest entry magnitude, rounded to `f64` for reporting.
    fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|q| q.abs().to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(Zero::is_zero)
    }
}

fn int(k: i64) -> Q {
    Q::from_integer(BigInt::from(k))
}

fn f1(t: &Q, s: &Q) -> Q {
    let s2 = s * s;
    int(3) + int(3) * &s2 + int(2) * &s2 * &s2 + int(3) * t * s + t * t * t * s
}

fn f2(t: &Q, s: &Q) -> Q {
    let (t2, s2) = (t * t, s * s);
    -int(3) * t - int(3) * t * &s2 - int(2) * t * &s2 * &s2
        + int(3) * s
        + int(3) * s * &t2
        + int(2) * s * &t2 * &t2
}

fn g1(t: &Q, s: &Q) -> Q {
    let (qt, qs) = (Q::one() + t * t, Q::one() + s * s);
    int(9) * &qt * &qt * &qt * &qs * &qs
}

fn g3_printed(t: &Q, s: &Q) -> Q {
    let (t2, s2) = (t * t, s * s);
    int(9)
        * (Q::one()
            + int(2) * &t2
            + &t2 * &t2
            + int(4) * &s2 * &t2
            + int(2) * &s2 * &t2 * &t2
            + int(2) * &s2 * &s2 * &t2
            + &s2 * &s2 * &t2 * &t2
            + &s2
            + &s2 * &s2)
}

fn g3_factored(t: &Q, s: &Q) -> Q {
    let (qt, qs) = (Q::one() + t * t, Q::one() + s * s);
    int(9) * &qt * &qt * &qs * &qs
}

/// `M(t,s) = Φ(t,s)/κ(t,s)`.
fn scaled_phi(t: &Q, s: &Q) -> Mat2 {
    let (qt, qs) = (Q::one() + t * t, Q::one() + s * s);
    let top_right = -int(3) * s - s * s * s + int(3) * t + t * t * t;
    let bottom_right =
        (int(3) + int(3) * t * s + t * s * s * s + int(3) * t * t + int(2) * t * t * t * t) / &qt;
    Mat2::new(
        f1(t, s) / &qs,
        top_right,
        f2(t, s) / (&qt * &qs),
        bottom_right,
    )
}

/// `κ(t,s)²`.
fn kappa_sq(t: &Q, s: &Q) -> Q {
    Q::one() / (int(9) * (Q::one() + t * t) * (Q::one() + s * s))
}

fn lower_row(a: Q, b: Q) -> Mat2 {
    Mat2::new(Q::zero(), Q::zero(), a, b)
}

/// Per-`(m, r)` outcome of the exact comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCase {
    pub m: u32,
    pub r: String,
    pub inverse_residual: f64,
    pub radical_residual: f64,
    pub forward_printed_residual: f64,
    pub forward_printed_lower_left_residual: f64,
    /// `forward(2,2) / printed(2,2)`, exactly `1 + m²` when the printed factor is missing.
    pub forward_last_entry_ratio: String,
    pub forward_factored_residual: f64,
    /// Smallest residual against the printed backward form over both signs of its `f₂` entry.
    pub backward_printed_residual: f64,
    pub backward_factored_residual: f64,
    /// Sign `σ` with `backward(2,1) = σ·r·f₂/g₂` exactly; `None` if neither sign holds.
    pub sign_printed_g2: Option<i8>,
    pub sign_factored_g2: Option<i8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactReport {
    pub checks: Vec<CheckReport>,
    pub cases: Vec<ExactCase>,
}

impl ExactReport {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Perturbation sizes used by [`verify_identities_exact`].
pub const EXACT_R_VALUES: [(i64, i64); 3] = [(1, 10), (1, 1), (7, 3)];

fn sign_match(actual: &Q, reference: &Q) -> Option<i8> {
    if actual == reference {
        Some(1)
    } else if *actual == -reference.clone() {
        Some(-1)
    } else {
        None
    }
}

fn exact_case(m: u32, r: &Q) -> Result<ExactCase> {
    let t = int(i64::from(m));
    let s = int(i64::from(m) - 1);
    let qt = Q::one() + &t * &t;
    let qs = Q::one() + &s * &s;

    let m_ts = scaled_phi(&t, &s);
    let m_st = scaled_phi(&s, &t);
    let inverse = m_ts
        .mul(&m_st)
        .scale(&kappa_sq(&t, &s))
        .sub(&Mat2::identity());

    // increment² = r²/(9(1+t²)³(1+s²)) must equal (κ·r/(1+t²))².
    let inc_sq = r * r / (int(9) * &qt * &qt * &qt * &qs);
    let via_kappa = kappa_sq(&t, &s) * r * r / (&qt * &qt);
    let radical = inc_sq - via_kappa;

    let mut m_w = m_ts.clone();
    m_w.0[1][1] = &m_w.0[1][1] + r / &qt;
    let m_inv = m_ts
        .inverse()
        .ok_or_else(|| Error::Singular("closed-form step".into()))?;
    let w_inv = m_w
        .inverse()
        .ok_or_else(|| Error::Singular("perturbed step".into()))?;
    let forward = m_w.mul(&m_inv).sub(&Mat2::identity());
    let backward = m_ts.mul(&w_inv).sub(&Mat2::identity());

    let (vf1, vf2, vg1) = (f1(&t, &s), f2(&t, &s), g1(&t, &s));
    let g2_printed = &qt * (g3_printed(&t, &s) + &vf1 * r);
    let g2_factored = &qt * (g3_factored(&t, &s) + &vf1 * r);

    let forward_printed = lower_row(-vf2.clone(), vf1.clone()).scale(&(r / &vg1));
    let forward_factored = lower_row(-vf2.clone(), &vf1 * &qt).scale(&(r / &vg1));
    let ratio = if forward_printed.get(1, 1).is_zero() {
        "undefined".to_string()
    } else {
        (forward.get(1, 1) / forward_printed.get(1, 1)).to_string()
    };

    let backward_plus = lower_row(vf2.clone(), vf1.clone()).scale(&(r / &g2_printed));
    let backward_minus = lower_row(-vf2.clone(), vf1.clone()).scale(&(r / &g2_printed));
    let backward_factored = lower_row(vf2.clone(), -(&vf1 * &qt)).scale(&(r / &g2_factored));

    Ok(ExactCase {
        m,
        r: r.to_string(),
        inverse_residual: if inverse.is_zero() {
            0.0
        } else {
            inverse.max_abs().max(f64::MIN_POSITIVE)
        },
        radical_residual: radical.abs().to_f64().unwrap_or(f64::INFINITY),
        forward_printed_residual: forward.sub(&forward_printed).max_abs(),
        forward_printed_lower_left_residual: (forward.get(1, 0) - forward_printed.get(1, 0))
            .abs()
            .to_f64()
            .unwrap_or(f64::INFINITY),
        forward_last_entry_ratio: ratio,
        forward_factored_residual: forward.sub(&forward_factored).max_abs(),
        backward_printed_residual: backward
            .sub(&backward_plus)
            .max_abs()
            .min(backward.sub(&backward_minus).max_abs()),
        backward_factored_residual: backward.sub(&backward_factored).max_abs(),
        sign_printed_g2: sign_match(backward.get(1, 0), &(&vf2 * r / &g2_printed)),
        sign_factored_g2: sign_match(backward.get(1, 0), &(&vf2 * r / &g2_factored)),
    })
}

fn sign_label(signs: &[Option<i8>]) -> String {
    let first = signs.first().copied().flatten();
    if signs.iter().all(|s| *s == first) {
        match first {
            Some(1) => "+1 at every m".into(),
            Some(-1) => "-1 at every m".into(),
            _ => "neither sign at any m".into(),
        }
    } else {
        let holds: Vec<String> = signs
            .iter()
            .map(|s| match s {
                Some(v) => format!("{v:+}"),
                None => "none".into(),
            })
            .collect();
        format!("varies by case: [{}]", holds.join(", "))
    }
}

/// Exact comparison at `(t, s) = (m, m−1)` for `m = 1..=m_max` and each `r`
/// in [`EXACT_R_VALUES`].
///
/// Checks reported (tolerance 0 throughout; residuals are exact rationals
/// rounded to `f64` magnitude only for display):
///
/// - `inverse_identity`: `Φ(t,s)Φ(s,t) = I`;
/// - `radical_cancellation`: the increment of `W_m` equals `κ·r/(1+t²)`;
/// - `forward_deviation_printed`: `WΦ⁻¹ − I = (r/g₁)[[0,0],[−f₂, f₁]]`;
/// - `forward_deviation_printed_lower_left`: the `(2,1)` entry alone;
/// - `forward_deviation_factored`: `WΦ⁻¹ − I = (r/g₁)[[0,0],[−f₂, (1+t²)f₁]]`;
/// - `backward_deviation_printed_up_to_sign`: `ΦW⁻¹ − I = (r/g₂)[[0,0],[±f₂, f₁]]`, printed `g₂`;
/// - `backward_deviation_factored`: `ΦW⁻¹ − I = (r/g₂)[[0,0],[f₂, −(1+t²)f₁]]`, factored `g₂`.
///
/// The realised sign of the backward `f₂` entry is recorded in the notes.
pub fn verify_identities_exact(m_max: u32) -> Result<ExactReport> {
    if m_max == 0 || m_max > 50 {
        return Err(Error::InvalidArgument(format!(
            "m_max must lie in 1..=50, got {m_max}"
        )));
    }
    let mut cases = Vec::new();
    for m in 1..=m_max {
        for (num, den) in EXACT_R_VALUES {
            let r = Q::new(BigInt::from(num), BigInt::from(den));
            cases.push(exact_case(m, &r)?);
        }
    }
    let worst = |f: fn(&ExactCase) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    let failing_ms = |f: fn(&ExactCase) -> f64| {
        let mut ms: Vec<u32> = cases.iter().filter(|c| f(c) != 0.0).map(|c| c.m).collect();
        ms.dedup();
        ms
    };
    let ratios_are_one_plus_m_sq = cases
        .iter()
        .all(|c| c.forward_last_entry_ratio == (1 + u64::from(c.m) * u64::from(c.m)).to_string());

    let printed_signs: Vec<Option<i8>> = cases.iter().map(|c| c.sign_printed_g2).collect();
    let factored_signs: Vec<Option<i8>> = cases.iter().map(|c| c.sign_factored_g2).collect();
    let backward_fail = failing_ms(|c| c.backward_printed_residual);

    let checks = vec![
        CheckReport::at_most("inverse_identity", worst(|c| c.inverse_residual), 0.0),
        CheckReport::at_most("radical_cancellation", worst(|c| c.radical_residual), 0.0),
        CheckReport::at_most(
            "forward_deviation_printed",
            worst(|c| c.forward_printed_residual),
            0.0,
        )
        .with_note(format!(
            "last entry ratio direct/printed {} 1+m^2",
            if ratios_are_one_plus_m_sq {
                "equals"
            } else {
                "does not always equal"
            }
        )),
        CheckReport::at_most(
            "forward_deviation_printed_lower_left",
            worst(|c| c.forward_printed_lower_left_residual),
            0.0,
        ),
        CheckReport::at_most(
            "forward_deviation_factored",
            worst(|c| c.forward_factored_residual),
            0.0,
        ),
        CheckReport::at_most(
            "backward_deviation_printed_up_to_sign",
            worst(|c| c.backward_printed_residual),
            0.0,
        )
        .with_note(format!(
            "f2-entry sign vs printed g2: {}; mismatching m: {:?}",
            sign_label(&printed_signs),
            backward_fail
        )),
        CheckReport::at_most(
            "backward_deviation_factored",
            worst(|c| c.backward_factored_residual),
            0.0,
        )
        .with_note(format!(
            "f2-entry sign vs factored g2: {}",
            sign_label(&factored_signs)
        )),
    ];
    Ok(ExactReport { checks, cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Q {
        Q::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn inverse_identity_at_first_step() {
        let case = exact_case(1, &q(1, 10)).unwrap();
        assert_eq!(case.inverse_residual, 0.0);
        assert_eq!(case.radical_residual, 0.0);
    }

    #[test]
    fn forward_deviation_at_first_step() {
        let (t, s) = (int(1), int(0));
        let m_ts = scaled_phi(&t, &s);
        let mut m_w = m_ts.clone();
        m_w.0[1][1] = &m_w.0[1][1] + q(1, 10) / int(2);
        let forward = m_w.mul(&m_ts.inverse().unwrap()).sub(&Mat2::identity());
        assert_eq!(forward, lower_row(int(3), int(6)).scale(&q(1, 720)));
        let case = exact_case(1, &q(1, 10)).unwrap();
        assert_eq!(case.forward_last_entry_ratio, "2");
        assert_eq!(case.forward_printed_lower_left_residual, 0.0);
        assert_eq!(case.forward_factored_residual, 0.0);
        assert!(case.forward_printed_residual > 0.0);
    }

    #[test]
    fn backward_sign_at_first_step() {
        let case = exact_case(1, &q(1, 10)).unwrap();
        // At s = 0 printed and factored g3 coincide.
        assert_eq!(case.sign_printed_g2, Some(1));
        assert_eq!(case.sign_factored_g2, Some(1));
        assert_eq!(case.backward_factored_residual, 0.0);
    }

    #[test]
    fn printed_g3_diverges_after_first_step() {
        let case = exact_case(2, &q(1, 10)).unwrap();
        assert_eq!(case.sign_printed_g2, None);
        assert_eq!(case.sign_factored_g2, Some(1));
    }

    #[test]
    fn report_over_twenty_steps() {
        let report = verify_identities_exact(20).unwrap();
        assert_eq!(report.cases.len(), 20 * EXACT_R_VALUES.len());
        for name in [
            "inverse_identity",
            "radical_cancellation",
            "forward_deviation_printed_lower_left",
            "forward_deviation_factored",
            "backward_deviation_factored",
        ] {
            assert!(report.check(name).unwrap().pass, "{name}");
        }
        assert!(!report.check("forward_deviation_printed").unwrap().pass);
        assert!(
            !report
                .check("backward_deviation_printed_up_to_sign")
                .unwrap()
                .pass
        );
        let note = report
            .check("forward_deviation_printed")
            .unwrap()
            .note
            .clone()
            .unwrap();
        assert!(note.contains("equals 1+m^2"), "{note}");
        let note = report
            .check("backward_deviation_factored")
            .unwrap()
            .note
            .clone()
            .unwrap();
        assert!(note.contains("+1 at every m"), "{note}");
    }

    #[test]
    fn bounds_enforced() {
        assert!(verify_identities_exact(0).is_err());
        assert!(verify_identities_exact(51).is_err());
    }
}
