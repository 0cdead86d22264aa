//! Entry patterns a coefficient perturbation may occupy while the perturbed
//! system stays equivalent to a scalar equation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::norm::{matrix_norm, NormKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationMask {
    /// Only entry `(n, n−1)` (1-based) may be nonzero: `ÿ = [a + b]y`-type perturbations.
    SingleEntry { n: usize },
    /// Any entry of the last row: perturbations of the coefficients `a_1 … a_n`.
    LastRow { n: usize },
}

impl PerturbationMask {
    pub fn dim(self) -> usize {
        match self {
            PerturbationMask::SingleEntry { n } | PerturbationMask::LastRow { n } => n,
        }
    }

    /// Whether 0-based entry `(i, j)` is allowed to be nonzero.
    pub fn allows(self, i: usize, j: usize) -> bool {
        match self {
            PerturbationMask::SingleEntry { n } => n >= 2 && i == n - 1 && j == n - 2,
            PerturbationMask::LastRow { n } => i + 1 == n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PerturbationMask::SingleEntry { .. } => "single_entry",
            PerturbationMask::LastRow { .. } => "last_row",
        }
    }
}

/// Copy of `b` with every mask-allowed entry set to zero.
pub fn off_mask_part(b: &DMatrix<f64>, mask: PerturbationMask) -> Result<DMatrix<f64>> {
    let n = mask.dim();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if b.nrows() != n { b.nrows() } else { b.ncols() },
        });
    }
    let mut out = b.clone();
    for i in 0..n {
        for j in 0..n {
            if mask.allows(i, j) {
                out[(i, j)] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Norm of the part of `b` the mask forbids; zero iff `b` conforms.
pub fn mask_residual(b: &DMatrix<f64>, mask: PerturbationMask, kind: NormKind) -> Result<f64> {
    matrix_norm(&off_mask_part(b, mask)?, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(v: [f64; 4]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &v)
    }

    #[test]
    fn zero_matrix_conforms() {
        let z = DMatrix::zeros(3, 3);
        for mask in [
            PerturbationMask::SingleEntry { n: 3 },
            PerturbationMask::LastRow { n: 3 },
        ] {
            assert_eq!(mask_residual(&z, mask, NormKind::Spectral).unwrap(), 0.0);
        }
    }

    #[test]
    fn allowed_entry_only() {
        let b = m2([0.0, 0.0, 5.0, 0.0]);
        let r = mask_residual(
            &b,
            PerturbationMask::SingleEntry { n: 2 },
            NormKind::Spectral,
        );
        assert_eq!(r.unwrap(), 0.0);
    }

    #[test]
    fn recovered_pattern_residuals() {
        // Pattern of the recovered perturbation at m = 1 with the scale r/g2 removed.
        let b = m2([-3.0, -6.0, -4.5, 9.0]);
        let last = mask_residual(&b, PerturbationMask::LastRow { n: 2 }, NormKind::Frobenius);
        assert!((last.unwrap() - 45f64.sqrt()).abs() < 1e-14);
        let single = mask_residual(
            &b,
            PerturbationMask::SingleEntry { n: 2 },
            NormKind::Frobenius,
        );
        assert!((single.unwrap() - 126f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let b = DMatrix::zeros(3, 3);
        assert!(matches!(
            mask_residual(&b, PerturbationMask::LastRow { n: 2 }, NormKind::Spectral),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn last_row_residual_never_exceeds_single_entry(
            n in 2usize..6,
            seed in proptest::collection::vec(-5.0f64..5.0, 36),
        ) {
            let b = DMatrix::from_fn(n, n, |i, j| seed[i * 6 + j]);
            for kind in [NormKind::Spectral, NormKind::Frobenius, NormKind::Infinity] {
                let last = mask_residual(&b, PerturbationMask::LastRow { n }, kind).unwrap();
                let single = mask_residual(&b, PerturbationMask::SingleEntry { n }, kind).unwrap();
                prop_assert!(last <= single + 1e-12);
            }
        }
    }
}
