//! Time-varying coefficient matrices `A(t)` and companion-form builders.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::CoefficientExpr;

/// Piecewise-linear interpolant through `(knot, value)` pairs, constant
/// outside the knot range. Knots must be strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidArgument(
                "interpolant needs matching, non-empty knot and value lists".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "interpolant knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let k = self.knots.partition_point(|&x| x <= t) - 1;
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let w = (t - x0) / (x1 - x0);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }
}

/// One entry of a system matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Const(f64),
    Expr(CoefficientExpr),
    Interpolated(PiecewiseLinear),
    Neg(Box<Coefficient>),
    Sum(Box<Coefficient>, Box<Coefficient>),
}

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient::Const(0.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(match self {
            Coefficient::Const(c) => *c,
            Coefficient::Expr(e) => e.eval(t)?,
            Coefficient::Interpolated(p) => p.eval(t),
            Coefficient::Neg(c) => -c.eval(t)?,
            Coefficient::Sum(a, b) => a.eval(t)? + b.eval(t)?,
        })
    }

    /// True when the coefficient is the literal constant zero.
    pub fn is_zero_const(&self) -> bool {
        matches!(self, Coefficient::Const(c) if *c == 0.0)
    }

    pub fn negated(self) -> Self {
        match self {
            Coefficient::Const(c) => Coefficient::Const(-c),
            Coefficient::Neg(inner) => *inner,
            other => Coefficient::Neg(Box::new(other)),
        }
    }
}

impl From<CoefficientExpr> for Coefficient {
    fn from(e: CoefficientExpr) -> Self {
        Coefficient::Expr(e)
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Const(c)
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "{c}"),
            Coefficient::Expr(e) => write!(f, "{e}"),
            Coefficient::Interpolated(p) => write!(f, "interp[{} knots]", p.knots.len()),
            Coefficient::Neg(c) => write!(f, "-({c})"),
            Coefficient::Sum(a, b) => write!(f, "({a}) + ({b})"),
        }
    }
}

/// How a [`SystemSpec`] was built.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Raw,
    /// `y^(n) + a_1 y^(n-1) + … + a_n y = 0`, coefficients stored as `(a_1, …, a_n)`.
    Companion {
        order: usize,
        coefficients: Vec<Coefficient>,
    },
    Counterexample2d,
}

/// Anything that yields an `n×n` matrix for each real `t`.
pub trait LinearSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn matrix_at(&self, t: f64) -> Result<DMatrix<f64>>;
    fn label(&self) -> String;

    fn trace_at(&self, t: f64) -> Result<f64> {
        Ok(self.matrix_at(t)?.trace())
    }
}

/// The system `ẋ = A(t)x` stored entry by entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    n: usize,
    entries: Vec<Coefficient>,
    kind: SystemKind,
    label: String,
}

impl SystemSpec {
    /// Row-major entries.
    pub fn raw(n: usize, entries: Vec<Coefficient>, label: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        Ok(Self {
            n,
            entries,
            kind: SystemKind::Raw,
            label: label.into(),
        })
    }

    pub fn constant(m: &DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        let entries = (0..n * n)
            .map(|k| Coefficient::Const(m[(k / n, k % n)]))
            .collect();
        Self::raw(n, entries, label)
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::raw(n, vec![Coefficient::zero(); n * n], format!("zero{n}"))
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn entry(&self, row: usize, col: usize) -> &Coefficient {
        &self.entries[row * self.n + col]
    }

    pub(crate) fn with_kind(mut self, kind: SystemKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl LinearSystem for SystemSpec {
    fn dim(&self) -> usize {
        self.n
    }

    fn matrix_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, c) in self.entries.iter().enumerate() {
            m[(k / self.n, k % self.n)] = c.eval(t)?;
        }
        Ok(m)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Companion system of `y^(n) + a_1(t) y^(n-1) + … + a_n(t) y = 0`:
/// ones on the superdiagonal, last row `(-a_n, …, -a_1)`, zeros elsewhere.
pub fn companion_from_equation(n: usize, coeffs: Vec<Coefficient>) -> Result<SystemSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "companion order must be at least 2, got {n}"
        )));
    }
    if coeffs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: coeffs.len(),
        });
    }
    let mut entries = vec![Coefficient::zero(); n * n];
    for i in 0..n - 1 {
        entries[i * n + i + 1] = Coefficient::Const(1.0);
    }
    for (k, a) in coeffs.iter().enumerate() {
        // a_{k+1} multiplies y^(n-k-1), i.e. state coordinate n-k-1.
        entries[(n - 1) * n + (n - 1 - k)] = a.clone().negated();
    }
    let label = format!("companion{n}");
    Ok(
        SystemSpec::raw(n, entries, label)?.with_kind(SystemKind::Companion {
            order: n,
            coefficients: coeffs,
        }),
    )
}

/// `ÿ = a(t) y` as the system `[[0, 1], [a(t), 0]]`.
pub fn second_order_system(a: Coefficient) -> SystemSpec {
    companion_from_equation(2, vec![Coefficient::zero(), a.negated()])
        .expect("order 2 with two coefficients is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_coefficient;
    use proptest::prelude::*;

    fn counterexample_coeff() -> Coefficient {
        parse_coefficient("(2*t^2-1)/(1+t^2)^2").unwrap().into()
    }

    #[test]
    fn free_particle_companion() {
        let sys = second_order_system(Coefficient::zero());
        for t in [-2.0, 0.0, 7.5] {
            let m = sys.matrix_at(t).unwrap();
            assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        }
    }

    #[test]
    fn counterexample_companion_at_zero() {
        let sys = second_order_system(counterexample_coeff());
        let m = sys.matrix_at(0.0).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    }

    #[test]
    fn fourth_order_with_second_derivative_coupling() {
        // y'''' = a(t) y''  ⇔  a_2 = -a(t), all other a_i = 0.
        let a = counterexample_coeff();
        let coeffs = vec![
            Coefficient::zero(),
            a.clone().negated(),
            Coefficient::zero(),
            Coefficient::zero(),
        ];
        let sys = companion_from_equation(4, coeffs).unwrap();
        let t = 1.0;
        let m = sys.matrix_at(t).unwrap();
        let row3: Vec<f64> = m.row(2).iter().copied().collect();
        let row4: Vec<f64> = m.row(3).iter().copied().collect();
        assert_eq!(row3, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(row4, vec![0.0, 0.0, a.eval(t).unwrap(), 0.0]);
    }

    #[test]
    fn order_below_two_is_rejected() {
        assert!(companion_from_equation(1, vec![Coefficient::zero()]).is_err());
        assert!(companion_from_equation(3, vec![Coefficient::zero()]).is_err());
    }

    #[test]
    fn interpolant_is_flat_outside_and_linear_inside() {
        let p = PiecewiseLinear::new(vec![1.0, 2.0, 4.0], vec![1.0, 3.0, -1.0]).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.eval(1.5), 2.0);
        assert_eq!(p.eval(3.0), 1.0);
        assert_eq!(p.eval(9.0), -1.0);
        assert!(PiecewiseLinear::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn companion_pattern_holds_off_pattern(n in 2usize..7, t in -50.0f64..50.0) {
            let coeffs = (0..n)
                .map(|k| match k % 3 {
                    0 => counterexample_coeff(),
                    1 => Coefficient::Const(k as f64 + 0.5),
                    _ => parse_coefficient("sin(t) + exp(-t^2)").unwrap().into(),
                })
                .collect::<Vec<_>>();
            let sys = companion_from_equation(n, coeffs.clone()).unwrap();
            let m = sys.matrix_at(t).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let v = m[(i, j)];
                    if i + 1 == j {
                        prop_assert_eq!(v, 1.0);
                    } else if i == n - 1 {
                        prop_assert_eq!(v, -coeffs[n - 1 - j].eval(t).unwrap());
                    } else {
                        prop_assert_eq!(v, 0.0);
                    }
                }
            }
        }
    }
}
