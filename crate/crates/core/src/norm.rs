use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matrix norm used for every `‖·‖` in the crate. Defaults to the spectral
/// norm, which is the operator norm induced by the Euclidean fibre metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Spectral,
    Frobenius,
    #[serde(rename = "inf")]
    Infinity,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Spectral => "spectral",
            NormKind::Frobenius => "frobenius",
            NormKind::Infinity => "inf",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" | "2" => Ok(NormKind::Spectral),
            "frobenius" | "fro" => Ok(NormKind::Frobenius),
            "inf" | "infinity" => Ok(NormKind::Infinity),
            other => Err(Error::InvalidArgument(format!("unknown norm '{other}'"))),
        }
    }
}

pub fn matrix_norm(m: &DMatrix<f64>, kind: NormKind) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(match kind {
        NormKind::Frobenius => m.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::Infinity => m
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Spectral => spectral(m),
    })
}

fn spectral(m: &DMatrix<f64>) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, _) | (_, 1) => m.iter().map(|v| v * v).sum::<f64>().sqrt(),
        (2, 2) => spectral_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]),
        _ => m
            .clone()
            .try_svd(false, false, f64::EPSILON, 0)
            .map(|svd| svd.singular_values.max())
            .unwrap_or(f64::NAN),
    }
}

/// Largest singular value of `[[a, b], [c, d]]`:
/// `σ_max = (√((a+d)² + (b−c)²) + √((a−d)² + (b+c)²)) / 2`.
pub fn spectral_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    0.5 * ((a + d).hypot(b - c) + (a - d).hypot(b + c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    #[test]
    fn identity_norms() {
        for n in 1..7 {
            let id = DMatrix::<f64>::identity(n, n);
            assert!((matrix_norm(&id, NormKind::Spectral).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(matrix_norm(&id, NormKind::Infinity).unwrap(), 1.0);
            let fro = matrix_norm(&id, NormKind::Frobenius).unwrap();
            assert!((fro - (n as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_and_rotation() {
        assert_eq!(
            matrix_norm(&mat(2, &[2.0, 0.0, 0.0, 3.0]), NormKind::Spectral).unwrap(),
            3.0
        );
        assert_eq!(
            matrix_norm(&mat(2, &[0.0, 1.0, -1.0, 0.0]), NormKind::Spectral).unwrap(),
            1.0
        );
        let d3 = mat(3, &[2.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 3.0]);
        assert!((matrix_norm(&d3, NormKind::Spectral).unwrap() - 5.0).abs() < 5e-12);
    }

    #[test]
    fn antidiagonal_singular_values_are_entry_magnitudes() {
        assert_eq!(
            matrix_norm(&mat(2, &[0.0, 1.0, 4.0, 0.0]), NormKind::Spectral).unwrap(),
            4.0
        );
    }

    #[test]
    fn infinity_is_max_row_sum() {
        let m = mat(2, &[1.0, -2.0, 0.5, 0.25]);
        assert_eq!(matrix_norm(&m, NormKind::Infinity).unwrap(), 3.0);
    }

    #[test]
    fn non_finite_rejected() {
        let m = mat(2, &[1.0, f64::NAN, 0.0, 0.0]);
        assert_eq!(matrix_norm(&m, NormKind::Spectral), Err(Error::NonFinite));
        let m = mat(2, &[1.0, f64::INFINITY, 0.0, 0.0]);
        assert_eq!(matrix_norm(&m, NormKind::Frobenius), Err(Error::NonFinite));
    }

    #[test]
    fn closed_form_agrees_with_svd() {
        let m = mat(2, &[0.3, -1.7, 2.2, 0.9]);
        let svd = m.clone().svd(false, false).singular_values.max();
        let cf = matrix_norm(&m, NormKind::Spectral).unwrap();
        assert!((cf - svd).abs() <= 1e-12 * svd);
    }

    #[test]
    fn parse_names() {
        assert_eq!("spectral".parse::<NormKind>().unwrap(), NormKind::Spectral);
        assert_eq!(
            "frobenius".parse::<NormKind>().unwrap(),
            NormKind::Frobenius
        );
        assert_eq!("inf".parse::<NormKind>().unwrap(), NormKind::Infinity);
        assert!("l1".parse::<NormKind>().is_err());
    }

    fn square(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    }

    proptest! {
        #[test]
        fn spectral_submultiplicative_2x2(a in square(2), b in square(2)) {
            let ab = matrix_norm(&(&a * &b), NormKind::Spectral).unwrap();
            let na = matrix_norm(&a, NormKind::Spectral).unwrap();
            let nb = matrix_norm(&b, NormKind::Spectral).unwrap();
            prop_assert!(ab <= na * nb + 1e-10);
            let at = matrix_norm(&a.transpose(), NormKind::Spectral).unwrap();
            prop_assert!((at - na).abs() <= 1e-10);
        }

        #[test]
        fn spectral_submultiplicative_5x5(a in square(5), b in square(5)) {
            let ab = matrix_norm(&(&a * &b), NormKind::Spectral).unwrap();
            let na = matrix_norm(&a, NormKind::Spectral).unwrap();
            let nb = matrix_norm(&b, NormKind::Spectral).unwrap();
            prop_assert!(ab <= na * nb + 1e-10);
            let at = matrix_norm(&a.transpose(), NormKind::Spectral).unwrap();
            prop_assert!((at - na).abs() <= 1e-10 * na.max(1.0));
        }

        #[test]
        fn other_norms_submultiplicative(a in square(4), b in square(4)) {
            for kind in [NormKind::Frobenius, NormKind::Infinity] {
                let ab = matrix_norm(&(&a * &b), kind).unwrap();
                let na = matrix_norm(&a, kind).unwrap();
                let nb = matrix_norm(&b, kind).unwrap();
                prop_assert!(ab <= na * nb * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
