//! Grid approximations of the sup-norm distance `d(A1, A2) = sup_t ‖A1(t) − A2(t)‖`
//! and of `a(A) = sup_t ‖A(t)‖`. The sup over the real line is replaced by a
//! maximum over a uniform grid on a finite window; both are reported.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::norm::{matrix_norm, NormKind};
use crate::system::LinearSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "invalid window [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl FromStr for Window {
    type Err = Error;

    /// Parses `lo:hi`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("window '{s}' is not lo:hi")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("window bound '{x}' is not a number")))
        };
        Window::new(parse(lo)?, parse(hi)?)
    }
}

/// A window together with the number of uniformly spaced sample points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupGrid {
    pub window: Window,
    pub points: usize,
}

impl SupGrid {
    pub fn new(window: Window, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {points}"
            )));
        }
        Ok(Self { window, points })
    }

    pub fn sample(&self, k: usize) -> f64 {
        let Window { lo, hi } = self.window;
        if k + 1 == self.points {
            return hi;
        }
        lo + (hi - lo) * (k as f64) / ((self.points - 1) as f64)
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |k| self.sample(k))
    }

    pub fn spacing(&self) -> f64 {
        (self.window.hi - self.window.lo) / ((self.points - 1) as f64)
    }
}

fn norm_profile(
    a1: &dyn LinearSystem,
    a2: Option<&dyn LinearSystem>,
    grid: &SupGrid,
    kind: NormKind,
) -> Result<Vec<f64>> {
    if let Some(a2) = a2 {
        if a1.dim() != a2.dim() {
            return Err(Error::DimensionMismatch {
                expected: a1.dim(),
                found: a2.dim(),
            });
        }
    }
    grid.samples()
        .map(|t| {
            let m = match a2 {
                Some(a2) => a1.matrix_at(t)? - a2.matrix_at(t)?,
                None => a1.matrix_at(t)?,
            };
            matrix_norm(&m, kind)
        })
        .collect()
}

pub fn metric_d(
    a1: &dyn LinearSystem,
    a2: &dyn LinearSystem,
    grid: &SupGrid,
    kind: NormKind,
) -> Result<f64> {
    Ok(norm_profile(a1, Some(a2), grid, kind)?
        .into_iter()
        .fold(0.0, f64::max))
}

pub fn sup_norm_a(a: &dyn LinearSystem, grid: &SupGrid, kind: NormKind) -> Result<f64> {
    Ok(norm_profile(a, None, grid, kind)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Largest change of `‖A(t)‖` between neighbouring grid samples: the
/// resolution at which the grid max resolves the true sup.
pub fn grid_resolution(a: &dyn LinearSystem, grid: &SupGrid, kind: NormKind) -> Result<f64> {
    let profile = norm_profile(a, None, grid, kind)?;
    Ok(profile
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max))
}
