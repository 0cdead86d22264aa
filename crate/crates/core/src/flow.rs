//! Cauchy matrices `𝔛(t, s, A)` by numerical integration, the shift flow
//! `χ^τ A = A(τ + ·)`, and checks of the cocycle and growth axioms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::metric::{grid_resolution, sup_norm_a, SupGrid, Window};
use crate::norm::{matrix_norm, NormKind};
use crate::ode;
use crate::report::CheckReport;
use crate::system::{LinearSystem, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Integrated { tol: f64 },
    ClosedForm,
}

/// `value` maps the state at `from` to the state at `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub value: DMatrix<f64>,
    pub from: f64,
    pub to: f64,
    pub system: String,
    pub method: Method,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.value.nrows()
    }
}

/// Solves `Φ' = A(u)Φ`, `Φ(s) = I` from `u = s` to `u = t`. A backward
/// transition (`t < s`) is integrated in reverse time, not inverted.
pub fn integrate_cauchy(
    a: &dyn LinearSystem,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<TransitionMatrix> {
    let n = a.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let sol = ode::integrate(
        |u, y, dy| {
            let phi = DMatrix::from_column_slice(n, n, y);
            let d = a.matrix_at(u)? * phi;
            dy.copy_from_slice(d.as_slice());
            Ok(())
        },
        s,
        t,
        id.as_slice(),
        tol,
    )?;
    Ok(TransitionMatrix {
        value: DMatrix::from_column_slice(n, n, &sol.y),
        from: s,
        to: t,
        system: a.label(),
        method: Method::Integrated { tol },
    })
}

/// `u ↦ base(u + offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSystem {
    pub base: SystemSpec,
    pub offset: f64,
}

impl ShiftedSystem {
    /// Composes offsets, so shifting twice matches a single shift by the sum.
    pub fn shifted(&self, tau: f64) -> ShiftedSystem {
        ShiftedSystem {
            base: self.base.clone(),
            offset: self.offset + tau,
        }
    }
}

impl LinearSystem for ShiftedSystem {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn matrix_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.base.matrix_at(t + self.offset)
    }

    fn label(&self) -> String {
        format!("shift({}, {})", self.base.label(), self.offset)
    }
}

pub fn shift(a: &SystemSpec, tau: f64) -> ShiftedSystem {
    ShiftedSystem {
        base: a.clone(),
        offset: tau,
    }
}

/// `‖𝔛(t,u)·𝔛(u,s) − 𝔛(t,s)‖`.
pub fn cocycle_residual(
    a: &dyn LinearSystem,
    t: f64,
    u: f64,
    s: f64,
    tol: f64,
    kind: NormKind,
) -> Result<f64> {
    let tu = integrate_cauchy(a, u, t, tol)?.value;
    let us = integrate_cauchy(a, s, u, tol)?.value;
    let ts = integrate_cauchy(a, s, t, tol)?.value;
    matrix_norm(&(tu * us - ts), kind)
}

/// `|det 𝔛(t,s) − exp ∫_s^t tr A(u) du|`.
pub fn liouville_residual(a: &dyn LinearSystem, s: f64, t: f64, tol: f64) -> Result<f64> {
    let det = integrate_cauchy(a, s, t, tol)?.value.determinant();
    let integral = ode::quadrature(|u| a.trace_at(u), s, t, tol)?;
    Ok((det - integral.exp()).abs())
}

/// Slack factor on the exponential growth bound.
pub const GROWTH_SLACK: f64 = 1e-6;

/// Checks `max(‖𝔛(t,0)‖, ‖𝔛(−t,0)‖) ≤ e^{t·a(A)}` at `samples` equally
/// spaced `t ∈ (0, horizon]`, with `a(A)` the grid sup over `grid`.
///
/// The reported value is the worst ratio of the left side to `e^{t·a(A)}`.
pub fn growth_bound_check(
    a: &dyn LinearSystem,
    horizon: f64,
    samples: usize,
    grid: &SupGrid,
    tol: f64,
    kind: NormKind,
) -> Result<CheckReport> {
    if horizon.is_nan() || horizon <= 0.0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "growth check needs a positive horizon and at least one sample".into(),
        ));
    }
    let sup = sup_norm_a(a, grid, kind)?;
    let mut worst: f64 = 0.0;
    let mut worst_t = horizon;
    // Chain through the cocycle from one sample to the next.
    let (mut fwd, mut bwd) = {
        let n = a.dim();
        (
            DMatrix::<f64>::identity(n, n),
            DMatrix::<f64>::identity(n, n),
        )
    };
    let mut prev = 0.0;
    for k in 1..=samples {
        let t = horizon * k as f64 / samples as f64;
        fwd = integrate_cauchy(a, prev, t, tol)?.value * fwd;
        bwd = integrate_cauchy(a, -prev, -t, tol)?.value * bwd;
        prev = t;
        let lhs = matrix_norm(&fwd, kind)?.max(matrix_norm(&bwd, kind)?);
        let ratio = lhs / (t * sup).exp();
        if ratio > worst {
            worst = ratio;
            worst_t = t;
        }
    }
    Ok(
        CheckReport::at_most("growth_bound", worst, 1.0 + GROWTH_SLACK).with_note(format!(
            "a(A) = {sup} on window {} ({} points); worst ratio at t = {worst_t}",
            grid.window, grid.points
        )),
    )
}

/// Integration tolerance used by [`family_axioms_check`] for a comparison
/// tolerance `tol`.
pub fn axiom_integration_tol(tol: f64) -> f64 {
    (tol * 1e-3).clamp(ode::MIN_TOL, ode::MAX_TOL)
}

/// Conditions a)–c) for the integer-time family `X(m) = 𝔛(m, 0, A)`:
///
/// 1. `𝔛(m,0)` equals the ordered product `𝔛(m,m−1)⋯𝔛(1,0)`, relative to `max(1, ‖𝔛(m,0)‖)`;
/// 2. `max(‖X(m)‖, ‖X(m)⁻¹‖) ≤ e^{m·a(A)}`;
/// 3. `|a(χ^m A) − a(A)|` within the grid resolution of the sup estimate.
pub fn family_axioms_check(
    a: &SystemSpec,
    m_max: usize,
    grid: &SupGrid,
    tol: f64,
    kind: NormKind,
) -> Result<Vec<CheckReport>> {
    if m_max == 0 || m_max > 64 {
        return Err(Error::InvalidArgument(format!(
            "m_max must lie in 1..=64, got {m_max}"
        )));
    }
    let itol = axiom_integration_tol(tol);
    let n = a.dim();
    let sup = sup_norm_a(a, grid, kind)?;
    let resolution = grid_resolution(a, grid, kind)?;

    let mut product = DMatrix::<f64>::identity(n, n);
    let mut worst_product: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut worst_shift_tol = resolution;
    for m in 1..=m_max {
        let mf = m as f64;
        product = integrate_cauchy(a, mf - 1.0, mf, itol)?.value * product;
        let full = integrate_cauchy(a, 0.0, mf, itol)?.value;
        let rel = matrix_norm(&(&product - &full), kind)? / matrix_norm(&full, kind)?.max(1.0);
        worst_product = worst_product.max(rel);

        let inverse = integrate_cauchy(a, mf, 0.0, itol)?.value;
        let lhs = matrix_norm(&full, kind)?.max(matrix_norm(&inverse, kind)?);
        worst_bound = worst_bound.max(lhs / (mf * sup).exp());

        let shifted = shift(a, mf);
        let shifted_sup = sup_norm_a(&shifted, grid, kind)?;
        let shifted_res = grid_resolution(&shifted, grid, kind)?;
        let gap = (shifted_sup - sup).abs();
        let allowed = resolution.max(shifted_res);
        if gap - allowed > worst_shift - worst_shift_tol {
            worst_shift = gap;
            worst_shift_tol = allowed;
        }
    }
    Ok(vec![
        CheckReport::at_most("one_step_product", worst_product, tol).with_note(format!(
            "integrated at {itol:e}; relative to max(1, |X(m,0)|), m <= {m_max}"
        )),
        CheckReport::at_most("two_sided_growth", worst_bound, 1.0 + GROWTH_SLACK)
            .with_note(format!("a(A) = {sup}")),
        CheckReport::at_most("shift_invariance_of_a", worst_shift, worst_shift_tol).with_note(
            format!("window {} with {} points", grid.window, grid.points),
        ),
    ])
}

/// Default grid for sup estimates over `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, points: usize) -> Result<SupGrid> {
    SupGrid::new(Window::new(-half_width, half_width)?, points)
}
