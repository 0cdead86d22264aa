//! The order-`n` equation `y⁽ⁿ⁾ = a(t) y⁽ⁿ⁻²⁾` and its reduction to the
//! planar system for `z = y⁽ⁿ⁻²⁾`.
//!
//! The companion matrix is block upper-triangular: the first `n−2`
//! coordinates form a nilpotent chain driven by `z`, and `(z, ż)` solve
//! `z̈ = a(t) z` on their own. So the Cauchy matrix has the shape
//! `[[N(t−s), C], [0, Φ₂(t,s)]]`, and a perturbed planar step lifts by
//! replacing `Φ₂` with `W₂` while keeping `N` and `C`.

use nalgebra::DMatrix;

use crate::counterexample::{
    build_w, closed_form_matrix, counterexample_system, recovered_b, RecoveredPerturbation,
    COEFFICIENT_TEXT,
};
use crate::error::{Error, Result};
use crate::expr::parse_coefficient;
use crate::flow::integrate_cauchy;
use crate::mask::{mask_residual, PerturbationMask};
use crate::norm::{matrix_norm, NormKind};
use crate::system::{companion_from_equation, Coefficient, SystemKind, SystemSpec};

/// Integration tolerance used for the coupling block of a lifted step.
pub const LIFT_TOL: f64 = 1e-12;

/// Companion system of `y⁽ⁿ⁾ = a(t) y⁽ⁿ⁻²⁾`: superdiagonal ones and
/// `a(t)` at `(n, n−1)`.
pub fn build_nth_system(n: usize, a: Coefficient) -> Result<SystemSpec> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "order must be at least 3, got {n}"
        )));
    }
    let mut coeffs = vec![Coefficient::zero(); n];
    coeffs[1] = a.negated();
    Ok(companion_from_equation(n, coeffs)?.with_label(format!("order{n}")))
}

/// [`build_nth_system`] with the counterexample coefficient.
pub fn counterexample_nth_system(n: usize) -> Result<SystemSpec> {
    let a = parse_coefficient(COEFFICIENT_TEXT).expect("built-in coefficient parses");
    Ok(build_nth_system(n, a.into())?.with_label(format!("counterexample{n}")))
}

/// The coefficient `a` of a system built by [`build_nth_system`].
fn nth_coefficient(a_n: &SystemSpec) -> Result<Coefficient> {
    let shape_err = || {
        Error::Shape(format!(
            "system '{}' is not the companion form of y^(n) = a(t) y^(n-2)",
            crate::system::LinearSystem::label(a_n)
        ))
    };
    match a_n.kind() {
        SystemKind::Companion {
            order,
            coefficients,
        } if *order >= 3 => {
            let others_zero = coefficients
                .iter()
                .enumerate()
                .all(|(k, c)| k == 1 || c.is_zero_const());
            if !others_zero {
                return Err(shape_err());
            }
            Ok(coefficients[1].clone().negated())
        }
        _ => Err(shape_err()),
    }
}

/// The planar system `[[0, 1], [a(t), 0]]` for `(y⁽ⁿ⁻²⁾, y⁽ⁿ⁻¹⁾)`.
pub fn reduce_to_2d(a_n: &SystemSpec) -> Result<SystemSpec> {
    let a = nth_coefficient(a_n)?;
    if let Coefficient::Expr(e) = &a {
        if e.source_text() == COEFFICIENT_TEXT {
            return Ok(counterexample_system());
        }
    }
    Ok(crate::system::second_order_system(a))
}

/// Planar flow: closed form for the counterexample, integrated otherwise.
fn planar_flow(sys: &SystemSpec, s: f64, t: f64, tol: f64) -> Result<DMatrix<f64>> {
    match sys.kind() {
        SystemKind::Counterexample2d => Ok(closed_form_matrix(t, s)),
        _ => Ok(integrate_cauchy(sys, s, t, tol)?.value),
    }
}

/// `k×k` flow of the nilpotent chain over time `dt`: entries `dt^(j−i)/(j−i)!`.
pub fn chain_block(k: usize, dt: f64) -> DMatrix<f64> {
    let mut n = DMatrix::zeros(k, k);
    for i in 0..k {
        let mut term = 1.0;
        for j in i..k {
            if j > i {
                term *= dt / (j - i) as f64;
            }
            n[(i, j)] = term;
        }
    }
    n
}

/// Component norms of the block residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockResidual {
    /// Lower-left `2×(n−2)` block of `𝔛(t,s,A_n)`.
    pub lower_left: f64,
    /// Lower-right block minus the planar flow.
    pub lower_right: f64,
    /// Upper-left block minus `N(t−s)`.
    pub upper_left: f64,
}

impl BlockResidual {
    pub fn total(&self) -> f64 {
        self.lower_left + self.lower_right + self.upper_left
    }
}

pub fn block_structure_parts(
    a_n: &SystemSpec,
    s: f64,
    t: f64,
    tol: f64,
    kind: NormKind,
) -> Result<BlockResidual> {
    let reduced = reduce_to_2d(a_n)?;
    let n = a_n.dimension();
    let k = n - 2;
    let x = integrate_cauchy(a_n, s, t, tol)?.value;
    let lower_left = x.view((k, 0), (2, k)).clone_owned();
    let lower_right = x.view((k, k), (2, 2)) - planar_flow(&reduced, s, t, tol)?;
    let upper_left = x.view((0, 0), (k, k)) - chain_block(k, t - s);
    Ok(BlockResidual {
        lower_left: matrix_norm(&lower_left, kind)?,
        lower_right: matrix_norm(&lower_right, kind)?,
        upper_left: matrix_norm(&upper_left, kind)?,
    })
}

/// Sum of the three block residuals of `𝔛(t,s,A_n)`.
pub fn block_structure_residual(
    a_n: &SystemSpec,
    s: f64,
    t: f64,
    tol: f64,
    kind: NormKind,
) -> Result<f64> {
    Ok(block_structure_parts(a_n, s, t, tol, kind)?.total())
}

/// `W_n = [[N, C], [0, W₂]]` lifted from the planar step `W₂ = build_w(m, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedStep {
    pub n: usize,
    pub m: u32,
    pub r: f64,
    pub w: DMatrix<f64>,
    pub chain: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub corner: DMatrix<f64>,
    /// The unperturbed `𝔛(m, m−1, A_n)` the blocks were taken from.
    pub base: DMatrix<f64>,
    /// The planar `Φ(m, m−1)`.
    pub base_corner: DMatrix<f64>,
}

fn check_order(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "lifted order must be at least 3, got {n}"
        )));
    }
    Ok(())
}

/// Lift for the counterexample coefficient; `C` is integrated at `tol`.
pub fn lift_step(n: usize, m: u32, r: f64, tol: f64) -> Result<LiftedStep> {
    check_order(n)?;
    let planar = build_w(m, r)?;
    let a_n = counterexample_nth_system(n)?;
    let mf = f64::from(m);
    let base = integrate_cauchy(&a_n, mf - 1.0, mf, tol)?.value;
    let k = n - 2;
    let chain = chain_block(k, 1.0);
    let coupling = base.view((0, k), (k, 2)).clone_owned();
    let mut w = DMatrix::zeros(n, n);
    w.view_mut((0, 0), (k, k)).copy_from(&chain);
    w.view_mut((0, k), (k, 2)).copy_from(&coupling);
    w.view_mut((k, k), (2, 2)).copy_from(&planar.w);
    Ok(LiftedStep {
        n,
        m,
        r,
        w,
        chain,
        coupling,
        corner: planar.w,
        base,
        base_corner: planar.base.value,
    })
}

fn deficit(y: &DMatrix<f64>, x: &DMatrix<f64>, kind: NormKind) -> Result<f64> {
    let n = y.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let x_inv = x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("unperturbed step".into()))?;
    let y_inv = y
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("perturbed step".into()))?;
    Ok(matrix_norm(&(y * x_inv - &id), kind)? + matrix_norm(&(x * y_inv - &id), kind)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeficitTransfer {
    pub lifted: f64,
    pub planar: f64,
}

impl DeficitTransfer {
    pub fn difference(&self) -> f64 {
        (self.lifted - self.planar).abs()
    }
}

/// Saturation deficit of the lifted step against `𝔛(m, m−1, A_n)` and of
/// the planar step against `Φ(m, m−1)`.
pub fn deficit_transfer(step: &LiftedStep, kind: NormKind) -> Result<DeficitTransfer> {
    Ok(DeficitTransfer {
        lifted: deficit(&step.w, &step.base, kind)?,
        planar: deficit(&step.corner, &step.base_corner, kind)?,
    })
}

/// The planar recovered perturbation embedded at rows/columns `(n−1, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPerturbation {
    pub n: usize,
    pub b: DMatrix<f64>,
    pub residual_single: f64,
    pub residual_lastrow: f64,
    pub planar: RecoveredPerturbation,
}

pub fn lifted_mask_violation(
    n: usize,
    m: u32,
    r: f64,
    h: f64,
    kind: NormKind,
) -> Result<LiftedPerturbation> {
    check_order(n)?;
    let planar = recovered_b(m, r, h, kind)?;
    let mut b = DMatrix::zeros(n, n);
    b.view_mut((n - 2, n - 2), (2, 2)).copy_from(&planar.oracle);
    Ok(LiftedPerturbation {
        n,
        residual_single: mask_residual(&b, PerturbationMask::SingleEntry { n }, kind)?,
        residual_lastrow: mask_residual(&b, PerturbationMask::LastRow { n }, kind)?,
        b,
        planar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::{perturbation_increment, select_r, DEFAULT_DIFF_STEP};
    use crate::system::LinearSystem;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn build_examples() {
        let z = build_nth_system(3, Coefficient::zero()).unwrap();
        let shift = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., 0., 0.]);
        assert_eq!(z.matrix_at(0.7).unwrap(), shift);

        let c = counterexample_nth_system(3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., -1., 0.]);
        assert_eq!(c.matrix_at(0.0).unwrap(), expected);

        let c5 = counterexample_nth_system(5).unwrap();
        let t = 1.3;
        let a = c5.matrix_at(t).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if j == i + 1 {
                    1.0
                } else if (i, j) == (4, 3) {
                    crate::counterexample::coefficient(t)
                } else {
                    0.0
                };
                assert_eq!(a[(i, j)], want, "({i},{j})");
            }
        }
        assert!(build_nth_system(2, Coefficient::zero()).is_err());
    }

    #[test]
    fn reduce_examples() {
        let r3 = reduce_to_2d(&counterexample_nth_system(3).unwrap()).unwrap();
        assert_eq!(r3.kind(), &SystemKind::Counterexample2d);
        let r4 = reduce_to_2d(&build_nth_system(4, Coefficient::zero()).unwrap()).unwrap();
        assert_eq!(
            r4.matrix_at(2.0).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.])
        );
        let e = parse_coefficient("sin(t)*t").unwrap();
        let reduced = reduce_to_2d(&build_nth_system(6, e.clone().into()).unwrap()).unwrap();
        let direct =
            companion_from_equation(2, vec![Coefficient::zero(), Coefficient::from(e).negated()])
                .unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let t = rng.gen_range(-10.0..10.0);
            assert_eq!(reduced.matrix_at(t).unwrap(), direct.matrix_at(t).unwrap());
        }
    }

    #[test]
    fn reduce_rejects_other_shapes() {
        let c = companion_from_equation(
            3,
            vec![
                Coefficient::from(1.0),
                Coefficient::zero(),
                Coefficient::zero(),
            ],
        )
        .unwrap();
        assert!(matches!(reduce_to_2d(&c), Err(Error::Shape(_))));
        assert!(matches!(
            reduce_to_2d(&SystemSpec::zero(3).unwrap()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            reduce_to_2d(&counterexample_system()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn chain_block_entries() {
        let n = chain_block(4, 2.0);
        assert_eq!(n[(0, 3)], 8.0 / 6.0);
        assert_eq!(n[(1, 3)], 2.0);
        assert_eq!(n[(2, 2)], 1.0);
        assert_eq!(n[(3, 0)], 0.0);
    }

    #[test]
    fn block_structure_examples() {
        for n in 3..=6 {
            let z = build_nth_system(n, Coefficient::zero()).unwrap();
            let res = block_structure_residual(&z, 0.0, 1.0, 1e-10, NormKind::Spectral).unwrap();
            assert!(res <= 1e-9, "n = {n}: {res:e}");
        }
        let c3 = counterexample_nth_system(3).unwrap();
        let res = block_structure_residual(&c3, 0.0, 1.0, 1e-10, NormKind::Spectral).unwrap();
        assert!(res <= 1e-7, "{res:e}");
        let c5 = counterexample_nth_system(5).unwrap();
        let res = block_structure_residual(&c5, 0.0, 2.0, 1e-10, NormKind::Spectral).unwrap();
        assert!(res <= 1e-6, "{res:e}");
    }

    #[test]
    fn lifted_block_form() {
        let step = lift_step(4, 3, 0.2, LIFT_TOL).unwrap();
        for i in 2..4 {
            for j in 0..2 {
                assert_eq!(step.w[(i, j)], 0.0);
            }
        }
        assert_eq!(step.w.view((0, 0), (2, 2)), chain_block(2, 1.0));
    }

    #[test]
    fn unperturbed_lift_is_the_flow() {
        for n in 3..=5 {
            let step = lift_step(n, 2, 0.0, LIFT_TOL).unwrap();
            assert!(max_abs(&(&step.w - &step.base)) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn lifted_increment_at_first_step() {
        let step = lift_step(3, 1, 0.1, LIFT_TOL).unwrap();
        let d = step.w[(2, 2)] - step.base[(2, 2)];
        assert!((d - 0.0117851).abs() < 1e-7, "{d}");
        assert!((d - perturbation_increment(1.0, 0.0, 0.1)).abs() < 1e-10);
    }

    #[test]
    fn deficit_transfers() {
        for n in 3..=5 {
            for m in 1..=10 {
                let r = select_r(m, 0.1, NormKind::Spectral).unwrap();
                let step = lift_step(n, m, r, LIFT_TOL).unwrap();
                let tr = deficit_transfer(&step, NormKind::Spectral).unwrap();
                assert!(
                    tr.difference() <= 1e-10,
                    "n={n} m={m}: {:e}",
                    tr.difference()
                );
            }
        }
    }

    #[test]
    fn lifted_mask_examples() {
        let zero = lifted_mask_violation(4, 3, 0.0, DEFAULT_DIFF_STEP, NormKind::Spectral).unwrap();
        assert_eq!(zero.residual_lastrow, 0.0);
        assert_eq!(zero.residual_single, 0.0);
        let v = lifted_mask_violation(3, 1, 0.1, DEFAULT_DIFF_STEP, NormKind::Spectral).unwrap();
        assert!((v.b[(1, 1)] + 0.004132).abs() < 5e-7, "{}", v.b[(1, 1)]);
        assert!(v.residual_lastrow > 0.0);
        for n in 3..=5 {
            for m in [1, 4, 9] {
                for r in [0.01, 0.3] {
                    let v = lifted_mask_violation(n, m, r, DEFAULT_DIFF_STEP, NormKind::Spectral)
                        .unwrap();
                    assert!(v.residual_lastrow <= v.residual_single);
                    assert!(v.residual_lastrow > 0.0);
                }
            }
        }
        assert!(lifted_mask_violation(2, 1, 0.1, DEFAULT_DIFF_STEP, NormKind::Spectral).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn flow_is_block_triangular(n in 3usize..=5, s in -3.0..3.0f64, dt in -2.0..2.0f64) {
            let tol = 1e-9;
            let a_n = counterexample_nth_system(n).unwrap();
            let parts = block_structure_parts(&a_n, s, s + dt, tol, NormKind::Spectral).unwrap();
            prop_assert!(parts.lower_left <= 10.0 * tol);
            prop_assert!(parts.upper_left <= 1e-8);
            prop_assert!(parts.lower_right <= 1e-7);
        }
    }
}
