//! Saturation deficits of arbitrary step sequences, the witness check
//! (a nearby system whose unit steps reproduce the sequence), and the
//! end-to-end counterexample scenario.
//!
//! On the trivial bundle the fiber isomorphisms are identities, so a witness
//! for steps `Y_m` is a system `A_ε` with `d(A_ε, A) < ε` and
//! `𝔛(m, m−1, A_ε) = Y_m`. Equality is tested to within `match_tol`.

use nalgebra::DMatrix;

use crate::counterexample::{
    build_w, counterexample_system, recovered_b, select_r, COEFFICIENT_TEXT, DEFAULT_DIFF_STEP,
};
use crate::error::{Error, Result};
use crate::expr::parse_coefficient;
use crate::flow::integrate_cauchy;
use crate::metric::{metric_d, SupGrid, Window};
use crate::norm::{matrix_norm, NormKind};
use crate::report::CheckReport;
use crate::system::{second_order_system, Coefficient, LinearSystem, PiecewiseLinear, SystemSpec};

/// Steps `Y_1 … Y_t̄`; `Y_m` maps the fiber over `m−1` to the fiber over `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSequence {
    steps: Vec<DMatrix<f64>>,
}

impl StepSequence {
    pub fn new(steps: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = steps.first() else {
            return Err(Error::InvalidArgument("step sequence is empty".into()));
        };
        let n = first.nrows();
        for (k, y) in steps.iter().enumerate() {
            if y.nrows() != n || y.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: if y.nrows() != n { y.nrows() } else { y.ncols() },
                });
            }
            if y.clone().try_inverse().is_none() {
                return Err(Error::Singular(format!("step Y_{}", k + 1)));
            }
        }
        Ok(Self { steps })
    }

    pub fn horizon(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn dim(&self) -> usize {
        self.steps[0].nrows()
    }

    /// `Y_m`, 1-based.
    pub fn step(&self, m: u32) -> &DMatrix<f64> {
        &self.steps[m as usize - 1]
    }

    pub fn steps(&self) -> &[DMatrix<f64>] {
        &self.steps
    }
}

fn check_dims(a: &dyn LinearSystem, seq: &StepSequence) -> Result<()> {
    if a.dim() != seq.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: seq.dim(),
        });
    }
    Ok(())
}

/// `‖Y_m X⁻¹ − I‖ + ‖X Y_m⁻¹ − I‖` with `X = 𝔛(m, m−1, A)` integrated at `tol`.
pub fn sequence_deficit(
    a: &dyn LinearSystem,
    seq: &StepSequence,
    tol: f64,
    kind: NormKind,
) -> Result<Vec<f64>> {
    check_dims(a, seq)?;
    let n = seq.dim();
    let id = DMatrix::<f64>::identity(n, n);
    (1..=seq.horizon())
        .map(|m| {
            let mf = f64::from(m);
            let x = integrate_cauchy(a, mf - 1.0, mf, tol)?.value;
            let y = seq.step(m);
            let x_inv = x
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("transition over [{}, {m}]", m - 1)))?;
            let y_inv = y
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("step Y_{m}")))?;
            Ok(matrix_norm(&(y * x_inv - &id), kind)? + matrix_norm(&(&x * y_inv - &id), kind)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessVerdict {
    pub distance: f64,
    pub distance_ok: bool,
    /// `‖𝔛(m, m−1, A_ε) − Y_m‖` for `m = 1..=t̄`.
    pub mismatches: Vec<f64>,
    pub worst_mismatch: f64,
    pub worst_m: u32,
    pub transitions_ok: bool,
    pub eps: f64,
    pub tol: f64,
    pub match_tol: f64,
}

impl WitnessVerdict {
    pub fn pass(&self) -> bool {
        self.distance_ok && self.transitions_ok
    }
}

/// Default closeness for transition equality: `max(10·tol, 1e−8)`.
pub fn default_match_tol(tol: f64) -> f64 {
    (10.0 * tol).max(1e-8)
}

/// Whether `candidate` witnesses `seq` near `a`. The distance is the grid
/// sup over `window ∩ [0, t̄]`.
#[allow(clippy::too_many_arguments)]
pub fn check_witness(
    a: &dyn LinearSystem,
    candidate: &dyn LinearSystem,
    eps: f64,
    seq: &StepSequence,
    window: Window,
    grid_points: usize,
    tol: f64,
    match_tol: f64,
) -> Result<WitnessVerdict> {
    check_dims(a, seq)?;
    check_dims(candidate, seq)?;
    if match_tol.is_nan() || match_tol < 10.0 * tol {
        return Err(Error::InvalidArgument(format!(
            "match_tol {match_tol:e} must be at least 10·tol = {:e}",
            10.0 * tol
        )));
    }
    let horizon = seq.horizon();
    let lo = window.lo.max(0.0);
    let hi = window.hi.min(f64::from(horizon));
    let restricted = Window::new(lo, hi).map_err(|_| {
        Error::InvalidArgument(format!("window {window} does not meet [0, {horizon}]"))
    })?;
    let grid = SupGrid::new(restricted, grid_points)?;
    let distance = metric_d(candidate, a, &grid, NormKind::Spectral)?;

    let mut mismatches = Vec::with_capacity(horizon as usize);
    for m in 1..=horizon {
        let mf = f64::from(m);
        let x = integrate_cauchy(candidate, mf - 1.0, mf, tol)?.value;
        mismatches.push(matrix_norm(&(x - seq.step(m)), NormKind::Spectral)?);
    }
    let (worst_idx, worst_mismatch) = mismatches
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    Ok(WitnessVerdict {
        distance,
        distance_ok: distance < eps,
        transitions_ok: worst_mismatch <= match_tol,
        worst_mismatch,
        worst_m: worst_idx as u32 + 1,
        mismatches,
        eps,
        tol,
        match_tol,
    })
}

/// `A + bump` with a constant matrix bump.
pub fn add_constant(a: &SystemSpec, bump: &DMatrix<f64>) -> Result<SystemSpec> {
    let n = a.dimension();
    if bump.nrows() != n || bump.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bump.nrows(),
        });
    }
    let entries = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let base = a.entry(i, j).clone();
            if bump[(i, j)] == 0.0 {
                base
            } else {
                Coefficient::Sum(Box::new(base), Box::new(Coefficient::Const(bump[(i, j)])))
            }
        })
        .collect();
    SystemSpec::raw(n, entries, format!("{}+bump", a.label()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub delta: f64,
    pub eps: f64,
    pub horizon: u32,
    pub kind: NormKind,
    pub tol: f64,
    pub diff_step: f64,
    /// Defaults to `[0, t̄]`.
    pub window: Option<Window>,
    pub grid_points: usize,
    /// Force `r_m = 0` for every `m` (control run).
    pub control: bool,
}

impl ScenarioParams {
    pub fn new(delta: f64, eps: f64, horizon: u32) -> Self {
        Self {
            delta,
            eps,
            horizon,
            kind: NormKind::Spectral,
            tol: 1e-10,
            diff_step: DEFAULT_DIFF_STEP,
            window: None,
            grid_points: 0,
            control: false,
        }
    }

    pub fn grid_points_or_default(&self) -> usize {
        if self.grid_points >= 2 {
            self.grid_points
        } else {
            20 * self.horizon as usize + 1
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("eps", self.eps)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        if self.horizon == 0 || self.horizon > 200 {
            return Err(Error::InvalidArgument(format!(
                "horizon must lie in 1..=200, got {}",
                self.horizon
            )));
        }
        crate::ode::check_tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub m: u32,
    pub r: f64,
    pub deficit: f64,
    /// Recovered perturbation, row-major.
    pub b: [f64; 4],
    pub residual_lastrow: f64,
    pub residual_single: f64,
    pub candidate_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub params: ScenarioParams,
    pub rows: Vec<ScenarioRow>,
    pub verdict: WitnessVerdict,
    pub checks: Vec<CheckReport>,
}

impl ScenarioReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// The counterexample with `a(t)` replaced by `a(t) + b(t)`, `b` the
/// piecewise-linear interpolant through `(m, b_m)`.
pub fn companion_candidate(knots: &[f64], values: &[f64]) -> Result<SystemSpec> {
    let a = parse_coefficient(COEFFICIENT_TEXT).expect("built-in coefficient parses");
    let b = PiecewiseLinear::new(knots.to_vec(), values.to_vec())?;
    let coeff = Coefficient::Sum(
        Box::new(Coefficient::Expr(a)),
        Box::new(Coefficient::Interpolated(b)),
    );
    Ok(second_order_system(coeff).with_label("companion_candidate"))
}

/// Builds `W_m` with `r_m = select_r(m, δ)`, recovers `B(m)`, and tests the
/// natural companion candidate as a witness.
///
/// Rejection of this one candidate demonstrates the obstruction; it does
/// not by itself exclude every candidate.
pub fn run_counterexample_scenario(params: &ScenarioParams) -> Result<ScenarioReport> {
    params.validate()?;
    let a = counterexample_system();
    let kind = params.kind;

    let mut rs = Vec::new();
    let mut steps = Vec::new();
    let mut recovered = Vec::new();
    for m in 1..=params.horizon {
        let r = if params.control {
            0.0
        } else {
            select_r(m, params.delta, kind)?
        };
        steps.push(build_w(m, r)?.w);
        recovered.push(recovered_b(m, r, params.diff_step, kind)?);
        rs.push(r);
    }
    let seq = StepSequence::new(steps)?;
    let deficits = sequence_deficit(&a, &seq, params.tol, kind)?;

    let knots: Vec<f64> = (1..=params.horizon).map(f64::from).collect();
    let values: Vec<f64> = recovered.iter().map(|b| b.oracle[(1, 0)]).collect();
    let candidate = companion_candidate(&knots, &values)?;
    let window = params
        .window
        .unwrap_or(Window::new(0.0, f64::from(params.horizon))?);
    let match_tol = default_match_tol(params.tol);
    let verdict = check_witness(
        &a,
        &candidate,
        params.eps,
        &seq,
        window,
        params.grid_points_or_default(),
        params.tol,
        match_tol,
    )?;

    let rows: Vec<ScenarioRow> = recovered
        .iter()
        .enumerate()
        .map(|(k, b)| ScenarioRow {
            m: b.m,
            r: rs[k],
            deficit: deficits[k],
            b: [
                b.oracle[(0, 0)],
                b.oracle[(0, 1)],
                b.oracle[(1, 0)],
                b.oracle[(1, 1)],
            ],
            residual_lastrow: b.residual_lastrow,
            residual_single: b.residual_single,
            candidate_mismatch: verdict.mismatches[k],
        })
        .collect();

    let max_deficit = deficits.iter().copied().fold(0.0, f64::max);
    let mut checks = vec![CheckReport::below(
        "deficits_below_delta",
        max_deficit,
        params.delta,
    )];
    let distance_note = format!(
        "candidate distance {:.6e} on {} ({} eps = {})",
        verdict.distance,
        window,
        if verdict.distance_ok { "<" } else { ">=" },
        params.eps
    );
    if params.control {
        let mut accepted =
            CheckReport::at_most("candidate_accepted", verdict.worst_mismatch, match_tol)
                .with_note(distance_note);
        accepted.pass = verdict.pass();
        checks.push(accepted);
    } else {
        let min_residual = rows
            .iter()
            .filter(|r| r.r > 0.0)
            .map(|r| r.residual_lastrow)
            .fold(f64::INFINITY, f64::min);
        checks.push(
            CheckReport::above("residuals_positive", min_residual, 0.0)
                .with_note("off-mask part of B(m) under the last-row mask, minimum over m"),
        );
        checks.push(
            CheckReport::at_least(
                "candidate_rejected",
                verdict.worst_mismatch,
                10.0 * match_tol,
            )
            .with_note(format!(
                "natural companion candidate fails transition equality at m = {}; {}",
                verdict.worst_m, distance_note
            )),
        );
    }
    Ok(ScenarioReport {
        params: params.clone(),
        rows,
        verdict,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::{closed_form_matrix, perturbation_increment};

    fn true_steps(horizon: u32) -> StepSequence {
        StepSequence::new(
            (1..=horizon)
                .map(|m| closed_form_matrix(f64::from(m), f64::from(m) - 1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sequence_rejects_singular_and_empty() {
        assert!(StepSequence::new(vec![]).is_err());
        assert!(matches!(
            StepSequence::new(vec![DMatrix::zeros(2, 2)]),
            Err(Error::Singular(_))
        ));
        let mixed = vec![DMatrix::identity(2, 2), DMatrix::identity(3, 3)];
        assert!(StepSequence::new(mixed).is_err());
    }

    #[test]
    fn deficits_of_true_and_scaled_steps() {
        let a = counterexample_system();
        let tol = 1e-10;
        let d = sequence_deficit(&a, &true_steps(5), tol, NormKind::Spectral).unwrap();
        assert!(d.iter().all(|&v| v <= 10.0 * tol), "{d:?}");

        let doubled =
            StepSequence::new(true_steps(5).steps().iter().map(|y| y * 2.0).collect()).unwrap();
        let d = sequence_deficit(&a, &doubled, tol, NormKind::Spectral).unwrap();
        assert!(d.iter().all(|&v| (v - 1.5).abs() <= 1e-8), "{d:?}");
        assert!(sequence_deficit(
            &SystemSpec::zero(3).unwrap(),
            &doubled,
            tol,
            NormKind::Spectral
        )
        .is_err());
    }

    #[test]
    fn selected_steps_stay_below_delta() {
        let a = counterexample_system();
        let delta = 0.1;
        let steps = (1..=8)
            .map(|m| {
                build_w(m, select_r(m, delta, NormKind::Spectral).unwrap())
                    .unwrap()
                    .w
            })
            .collect();
        let seq = StepSequence::new(steps).unwrap();
        let d = sequence_deficit(&a, &seq, 1e-10, NormKind::Spectral).unwrap();
        assert!(d.iter().all(|&v| v < delta));
    }

    #[test]
    fn witness_examples() {
        let a = counterexample_system();
        let tol = 1e-10;
        let mt = default_match_tol(tol);
        let window = Window::new(0.0, 6.0).unwrap();
        let v = check_witness(&a, &a, 0.1, &true_steps(6), window, 61, tol, mt).unwrap();
        assert!(v.pass(), "{v:?}");

        let r = 0.3;
        let perturbed =
            StepSequence::new((1..=6).map(|m| build_w(m, r).unwrap().w).collect()).unwrap();
        let v = check_witness(&a, &a, 0.1, &perturbed, window, 61, tol, mt).unwrap();
        assert!(!v.transitions_ok);
        let bound = (1..=6)
            .map(|m| perturbation_increment(f64::from(m), f64::from(m) - 1.0, r))
            .fold(0.0, f64::max);
        assert!(v.worst_mismatch >= bound - mt);

        let mut bump = DMatrix::zeros(2, 2);
        bump[(0, 0)] = 0.2;
        let bumped = add_constant(&a, &bump).unwrap();
        let v = check_witness(&a, &bumped, 0.1, &true_steps(6), window, 61, tol, mt).unwrap();
        assert!(!v.distance_ok);
        assert!((v.distance - 0.2).abs() < 1e-12);

        assert!(check_witness(&a, &a, 0.1, &true_steps(2), window, 61, tol, tol).is_err());
    }

    #[test]
    fn tighter_match_tol_never_accepts() {
        let a = counterexample_system();
        let tol = 1e-10;
        let window = Window::new(0.0, 4.0).unwrap();
        for r in [0.0, 1e-7, 1e-3, 0.2] {
            let seq =
                StepSequence::new((1..=4).map(|m| build_w(m, r).unwrap().w).collect()).unwrap();
            let loose = check_witness(&a, &a, 0.1, &seq, window, 41, tol, 1e-6).unwrap();
            let tight = check_witness(&a, &a, 0.1, &seq, window, 41, tol, 1e-7).unwrap();
            assert!(loose.transitions_ok || !tight.transitions_ok, "r = {r}");
        }
    }

    #[test]
    fn scenario_default_run() {
        let rep = run_counterexample_scenario(&ScenarioParams::new(0.1, 0.1, 10)).unwrap();
        assert_eq!(rep.rows.len(), 10);
        assert!(rep.all_pass(), "{:#?}", rep.checks);
        assert!(!rep.verdict.transitions_ok);
        assert!(rep
            .rows
            .iter()
            .all(|r| r.residual_lastrow > 0.0 && r.deficit < 0.1));
    }

    #[test]
    fn scenario_control_run() {
        let mut p = ScenarioParams::new(0.1, 0.1, 6);
        p.control = true;
        let rep = run_counterexample_scenario(&p).unwrap();
        assert!(rep.all_pass(), "{:#?}", rep.checks);
        assert!(rep.verdict.pass());
        assert!(rep.rows.iter().all(|r| r.r == 0.0));
    }

    #[test]
    fn scenario_small_delta_long_horizon() {
        let rep = run_counterexample_scenario(&ScenarioParams::new(0.001, 0.1, 50)).unwrap();
        assert!(rep.all_pass(), "{:#?}", rep.checks);
        assert!(rep
            .rows
            .iter()
            .all(|r| r.deficit < 0.001 && r.residual_lastrow > 0.0));
    }

    #[test]
    fn scenario_monotone_in_delta() {
        let coarse = run_counterexample_scenario(&ScenarioParams::new(0.1, 0.1, 10)).unwrap();
        let fine = run_counterexample_scenario(&ScenarioParams::new(0.01, 0.1, 10)).unwrap();
        for (c, f) in coarse.rows.iter().zip(&fine.rows) {
            assert!(f.r < c.r, "m = {}", c.m);
            assert!(f.residual_lastrow < c.residual_lastrow, "m = {}", c.m);
            assert!(f.residual_lastrow > 0.0);
        }
    }

    #[test]
    fn scenario_validates_params() {
        assert!(run_counterexample_scenario(&ScenarioParams::new(0.1, 0.1, 0)).is_err());
        assert!(run_counterexample_scenario(&ScenarioParams::new(0.1, 0.1, 201)).is_err());
        assert!(run_counterexample_scenario(&ScenarioParams::new(0.0, 0.1, 5)).is_err());
        assert!(run_counterexample_scenario(&ScenarioParams::new(0.1, 1.5, 5)).is_err());
    }
}
