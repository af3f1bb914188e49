//! The quasilinear barrier model `h'' + κ(h')² + b = 0` on an interval with
//! `h = 0` at both ends, and the log-cosine exact solution.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::krylov::solve_tridiagonal;
use crate::error::{Error, Result};
use crate::hermfield::{GeometryKind, ModelGeometry, ScalarField};

/// Bound `tr X ≤ κ|∇h|² + b` on the trace of the lower-order term, taken
/// with equality in the model problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceBound {
    /// Coefficient `κ > 0` of the quadratic gradient term.
    pub gradient_coefficient: f64,
    /// Constant term `b`.
    pub constant: f64,
}

impl TraceBound {
    /// The model case `κ = 1`.
    pub fn model(b: f64) -> Self {
        Self {
            gradient_coefficient: 1.0,
            constant: b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierOutcome {
    Solution(ScalarField),
    /// The linearised problem has `w = e^{κh} ≤ 0` at `location`.
    Nonexistence { min_w: f64, location: usize },
}

impl BarrierOutcome {
    pub fn solution(&self) -> Option<&ScalarField> {
        match self {
            BarrierOutcome::Solution(h) => Some(h),
            BarrierOutcome::Nonexistence { .. } => None,
        }
    }
}

fn interval_of(geometry: &ModelGeometry) -> Result<(f64, f64, usize)> {
    match geometry.kind() {
        GeometryKind::Interval { a, b, points } => Ok((a, b, points)),
        GeometryKind::FlatTorus { .. } => Err(Error::config("barrier problem needs an interval geometry")),
    }
}

fn check_bound(bound: &TraceBound) -> Result<()> {
    if !(bound.gradient_coefficient > 0.0 && bound.gradient_coefficient.is_finite()) {
        return Err(Error::config("gradient coefficient of the trace bound must be positive"));
    }
    if !bound.constant.is_finite() {
        return Err(Error::config("constant of the trace bound must be finite"));
    }
    Ok(())
}

/// Solves the barrier model by the substitution `w = e^{κh}`, which turns it
/// into the linear problem `w'' + κ b w = 0`, `w = 1` on the boundary.
pub fn barrier_solve(geometry: &ModelGeometry, bound: TraceBound) -> Result<BarrierOutcome> {
    let (_, _, cells) = interval_of(geometry)?;
    check_bound(&bound)?;
    let kappa = bound.gradient_coefficient;
    let h = geometry.spacing();
    let m = cells + 1;
    let inv_h2 = 1.0 / (h * h);
    let mut lower = vec![inv_h2; m];
    let mut diag = vec![-2.0 * inv_h2 + kappa * bound.constant; m];
    let mut upper = vec![inv_h2; m];
    let mut rhs = vec![0.0; m];
    for i in [0, m - 1] {
        lower[i] = 0.0;
        upper[i] = 0.0;
        diag[i] = 1.0;
        rhs[i] = 1.0;
    }
    let w = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let (location, &min_w) = w
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    if min_w <= 0.0 {
        return Ok(BarrierOutcome::Nonexistence { min_w, location });
    }
    Ok(BarrierOutcome::Solution(ScalarField::new(
        w.iter().map(|v| v.ln() / kappa).collect(),
    )))
}

/// Pointwise residual `h'' + κ(h')² + b` with central differences at
/// interior nodes; zero at the two boundary nodes.
pub fn barrier_residual(geometry: &ModelGeometry, field: &ScalarField, bound: TraceBound) -> Result<Vec<f64>> {
    interval_of(geometry)?;
    let h = geometry.spacing();
    let v = &field.values;
    let m = v.len();
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        let d2 = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h);
        let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
        out[i] = d2 + bound.gradient_coefficient * d1 * d1 + bound.constant;
    }
    Ok(out)
}

/// Relative Newton update below which [`barrier_newton`] stops.
pub const STEP_TOLERANCE: f64 = 1e-11;

/// Newton's method applied directly to the central-difference quasilinear
/// form, started from `h = 0`. Independent of the exponential substitution.
/// Stops when the max-norm residual drops below `tolerance` or the update
/// drops below [`STEP_TOLERANCE`] relative to the iterate.
pub fn barrier_newton(
    geometry: &ModelGeometry,
    bound: TraceBound,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ScalarField> {
    let (_, _, cells) = interval_of(geometry)?;
    check_bound(&bound)?;
    let kappa = bound.gradient_coefficient;
    let h = geometry.spacing();
    let m = cells + 1;
    let mut field = ScalarField::constant(m, 0.0);
    let mut res = barrier_residual(geometry, &field, bound)?;
    let mut rnorm = res.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    for _ in 0..max_iterations {
        if rnorm <= tolerance {
            return Ok(field);
        }
        let v = &field.values;
        let mut lower = vec![0.0; m];
        let mut diag = vec![1.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 1..m - 1 {
            let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
            let g = kappa * d1 / h;
            lower[i] = 1.0 / (h * h) - g;
            upper[i] = 1.0 / (h * h) + g;
            diag[i] = -2.0 / (h * h);
            rhs[i] = -res[i];
        }
        let delta = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        let scale = 1.0 + v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if delta.iter().all(|d| d.abs() <= STEP_TOLERANCE * scale) {
            // the residual sits at its rounding floor
            let trial = ScalarField::new(v.iter().zip(&delta).map(|(a, d)| a + d).collect());
            let trial_res = barrier_residual(geometry, &trial, bound)?;
            if trial_res.iter().fold(0.0_f64, |a, r| a.max(r.abs())) < rnorm {
                field = trial;
            }
            return Ok(field);
        }
        let mut step = 1.0;
        loop {
            let trial = ScalarField::new(v.iter().zip(&delta).map(|(a, d)| a + step * d).collect());
            let trial_res = barrier_residual(geometry, &trial, bound)?;
            let trial_norm = trial_res.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
            if trial_norm < rnorm {
                field = trial;
                res = trial_res;
                rnorm = trial_norm;
                break;
            }
            step *= 0.5;
            if step < 2f64.powi(-30) {
                let worst = res
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .map_or(0, |(i, _)| i);
                return Err(Error::NewtonStall {
                    worst_point: worst,
                    residual: rnorm,
                });
            }
        }
    }
    if rnorm <= tolerance {
        Ok(field)
    } else {
        Err(Error::NewtonStall {
            worst_point: res
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map_or(0, |(i, _)| i),
            residual: rnorm,
        })
    }
}

/// Closed-form solution `h(x) = log cos x` of `h'' + (h')² + 1 = 0`.
///
/// The grid must stay at least `0.05` away from `±π/2`.
pub fn riccati_oracle(points: &[f64]) -> Result<ScalarField> {
    if let Some(x) = points.iter().find(|x| !(x.abs() <= FRAC_PI_2 - 0.05)) {
        return Err(Error::domain(format!(
            "point {x} is within 0.05 of the singularity at ±π/2"
        )));
    }
    Ok(ScalarField::new(points.iter().map(|x| x.cos().ln()).collect()))
}

/// Closed form `log(cos(√b x)/cos(√b L))` of the model problem on `(-L, L)`
/// for `0 ≤ b < (π/2L)²`.
pub fn barrier_closed_form(points: &[f64], half_width: f64, b: f64) -> Vec<f64> {
    let s = b.sqrt();
    let denom = (s * half_width).cos();
    points.iter().map(|x| ((s * x).cos() / denom).ln()).collect()
}
