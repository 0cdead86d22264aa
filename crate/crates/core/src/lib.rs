//! Cauchy matrices of companion-form linear systems, δ-small perturbations of
//! their unit-step operators, and the recovered coefficient perturbation that
//! shows such perturbations cannot be realised inside the companion class.
//!
//! Module map:
//!
//! - [`expr`], [`system`], [`norm`], [`mask`], [`metric`]: coefficient
//!   expressions, system matrices, norms, perturbation masks and the
//!   sup-norm metric on systems.
//! - [`ode`], [`flow`]: adaptive integration of `Φ' = A(u)Φ`, the shift flow,
//!   and cocycle / growth checks.
//! - [`counterexample`], [`exact`]: the explicit equation
//!   `ÿ = (2t²−1)/(1+t²)² · y`, its closed-form Cauchy matrix, the
//!   perturbed steps `W_m`, and an exact rational identity check.
//! - [`ndim`]: the lift to `y⁽ⁿ⁾ = a(t) y⁽ⁿ⁻²⁾`.
//! - [`satcheck`]: step-sequence deficits, witness checking and the
//!   end-to-end scenario.
//! - [`cli`]: the `compsat` command-line front end.

pub mod cli;
pub mod counterexample;
pub mod error;
pub mod exact;
pub mod expr;
pub mod flow;
pub mod mask;
pub mod metric;
pub mod ndim;
pub mod norm;
pub mod ode;
pub mod report;
pub mod satcheck;
pub mod system;

pub use error::{Error, ParseError, Result};
pub use expr::{parse_coefficient, CoefficientExpr};
pub use mask::{mask_residual, PerturbationMask};
pub use metric::{metric_d, sup_norm_a, SupGrid, Window};
pub use norm::{matrix_norm, NormKind};
pub use report::{CheckReport, RunReport};
pub use system::{companion_from_equation, Coefficient, LinearSystem, SystemKind, SystemSpec};
