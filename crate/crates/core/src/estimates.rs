//! Measured versions of the interior estimates.
//!
//! The constants in the estimates depend on data that is never quantified,
//! so the harness reports scale-free ratios and checks that they stay finite
//! and stable under grid refinement.
//!
//! * `c2_ratio = sup_{B_{r/2}} |∂∂̄u| · r² / (1 + osc u)`, with `|·|` the
//!   operator norm with respect to `ω`;
//! * `grad_ratio = |∂u|²(x*) · r² / (1 + sup_{B_r} u - u(x*))`, `x*` the grid
//!   maximiser of `|∂u|²` in `B_{r/2}`;
//! * `harnack_ratio = sup_{B_{r/2}} u / inf_{B_{r/2}} u` for positive `u`;
//! * `osc_ratio = (sup u - inf u) / d²`, `d` the diameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermfield::{self, ModelGeometry, ScalarField};
use crate::symcalc::OperatorSpec;

/// Stability threshold for ratio series across refinement.
pub const STABILITY_FACTOR: f64 = 2.0;

const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Grid indices within distance `radius` of the ball's centre.
pub fn ball_points(geometry: &ModelGeometry, ball: &Ball, radius: f64) -> Result<Vec<usize>> {
    let dims = geometry.coords(0).len();
    if ball.center.len() != dims {
        return Err(Error::domain(format!(
            "ball centre has {} coordinates, grid has {dims}",
            ball.center.len()
        )));
    }
    if !(ball.radius > 0.0 && ball.radius.is_finite()) {
        return Err(Error::domain("ball radius must be positive"));
    }
    match geometry.kind() {
        hermfield::GeometryKind::FlatTorus { .. } => {
            if ball.radius > 0.25 {
                return Err(Error::domain(format!(
                    "ball radius {} exceeds a quarter of the period",
                    ball.radius
                )));
            }
        }
        hermfield::GeometryKind::Interval { a, b, .. } => {
            let c = ball.center[0];
            if c - ball.radius < a - MEMBERSHIP_SLACK || c + ball.radius > b + MEMBERSHIP_SLACK {
                return Err(Error::domain(format!(
                    "ball ({}, {}) leaves the interval ({a}, {b})",
                    c - ball.radius,
                    c + ball.radius
                )));
            }
        }
    }
    let points: Vec<usize> = (0..geometry.npts())
        .filter(|&i| geometry.distance(&geometry.coords(i), &ball.center) <= radius + MEMBERSHIP_SLACK)
        .collect();
    if points.is_empty() {
        return Err(Error::domain("ball contains no grid points"));
    }
    Ok(points)
}

fn sup_over(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max)
}

fn inf_over(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min)
}

/// Pointwise operator norm of `∂∂̄u` with respect to `ω`.
pub fn hessian_norm(geometry: &ModelGeometry, u: &ScalarField) -> Result<Vec<f64>> {
    let h = hermfield::complex_hessian(geometry, u)?;
    let s = hermfield::spectral_decompose(geometry, &h)?;
    Ok(s.values
        .chunks(s.n)
        .map(|l| l.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .collect())
}

pub fn measure_c2(geometry: &ModelGeometry, u: &ScalarField, ball: &Ball) -> Result<f64> {
    let inner = ball_points(geometry, ball, 0.5 * ball.radius)?;
    let norms = hessian_norm(geometry, u)?;
    let osc = u.max() - u.min();
    Ok(sup_over(&norms, &inner) * ball.radius.powi(2) / (1.0 + osc))
}

/// Gradient ratio together with the maximiser it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientMeasurement {
    pub ratio: f64,
    pub argmax: usize,
    pub gradient_sq: f64,
}

pub fn measure_gradient_detail(
    geometry: &ModelGeometry,
    u: &ScalarField,
    ball: &Ball,
) -> Result<GradientMeasurement> {
    let inner = ball_points(geometry, ball, 0.5 * ball.radius)?;
    let outer = ball_points(geometry, ball, ball.radius)?;
    let grad = hermfield::gradient_norm_sq(geometry, u)?;
    let mut argmax = inner[0];
    for &i in &inner {
        if grad[i] > grad[argmax] {
            argmax = i;
        }
    }
    let sup_outer = sup_over(&u.values, &outer);
    let ratio = grad[argmax] * ball.radius.powi(2) / (1.0 + sup_outer - u.values[argmax]);
    Ok(GradientMeasurement {
        ratio,
        argmax,
        gradient_sq: grad[argmax],
    })
}

pub fn measure_gradient(geometry: &ModelGeometry, u: &ScalarField, ball: &Ball) -> Result<f64> {
    Ok(measure_gradient_detail(geometry, u, ball)?.ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum HarnackOutcome {
    Ratio(f64),
    /// `u` is not positive on `B_r`.
    Skipped,
}

impl HarnackOutcome {
    pub fn ratio(&self) -> Option<f64> {
        match self {
            HarnackOutcome::Ratio(r) => Some(*r),
            HarnackOutcome::Skipped => None,
        }
    }
}

pub fn measure_harnack(geometry: &ModelGeometry, u: &ScalarField, ball: &Ball) -> Result<HarnackOutcome> {
    let outer = ball_points(geometry, ball, ball.radius)?;
    if !(inf_over(&u.values, &outer) > 0.0) {
        return Ok(HarnackOutcome::Skipped);
    }
    let inner = ball_points(geometry, ball, 0.5 * ball.radius)?;
    Ok(HarnackOutcome::Ratio(
        sup_over(&u.values, &inner) / inf_over(&u.values, &inner),
    ))
}

pub fn measure_oscillation(geometry: &ModelGeometry, u: &ScalarField) -> f64 {
    (u.max() - u.min()) / geometry.diameter().powi(2)
}

/// All ratios on one grid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRatios {
    /// Points per axis (torus) or cells (interval).
    pub level: usize,
    pub c2_ratio: f64,
    pub grad_ratio: f64,
    /// Measured on `u - inf u + 1`, which solves the same equation when `X`
    /// and `ψ` do not depend on `u`.
    pub harnack_ratio: Option<f64>,
    pub osc_ratio: f64,
}

impl LevelRatios {
    fn named(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("c2_ratio", Some(self.c2_ratio)),
            ("grad_ratio", Some(self.grad_ratio)),
            ("harnack_ratio", self.harnack_ratio),
            ("osc_ratio", Some(self.osc_ratio)),
        ]
    }
}

pub fn measure_level(geometry: &ModelGeometry, u: &ScalarField, ball: &Ball) -> Result<LevelRatios> {
    let level = match geometry.kind() {
        hermfield::GeometryKind::FlatTorus { points_per_axis, .. } => points_per_axis,
        hermfield::GeometryKind::Interval { points, .. } => points,
    };
    let inf = u.min();
    let lifted = ScalarField::new(u.values.iter().map(|v| v - inf + 1.0).collect());
    Ok(LevelRatios {
        level,
        c2_ratio: measure_c2(geometry, u, ball)?,
        grad_ratio: measure_gradient(geometry, u, ball)?,
        harnack_ratio: measure_harnack(geometry, &lifted, ball)?.ratio(),
        osc_ratio: measure_oscillation(geometry, u),
    })
}

/// `max/min` of one ratio across the finest levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityFlag {
    pub ratio: String,
    pub spread: f64,
    pub finite: bool,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub instance: String,
    pub ball: Ball,
    pub norm: String,
    pub levels: Vec<LevelRatios>,
    pub stability: Vec<StabilityFlag>,
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 && min == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl EstimateReport {
    /// Builds the report; stability is judged on the three finest levels.
    pub fn new(instance: impl Into<String>, ball: Ball, mut levels: Vec<LevelRatios>) -> Self {
        levels.sort_by_key(|l| l.level);
        let finest = &levels[levels.len().saturating_sub(3)..];
        let names = ["c2_ratio", "grad_ratio", "harnack_ratio", "osc_ratio"];
        let stability = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let values: Vec<Option<f64>> = finest.iter().map(|l| l.named()[k].1).collect();
                let finite = values.iter().all(|v| v.is_some_and(|x| x.is_finite() && x >= 0.0));
                let s = if finite {
                    spread(&values.iter().map(|v| v.unwrap()).collect::<Vec<_>>())
                } else {
                    f64::INFINITY
                };
                StabilityFlag {
                    ratio: name.to_string(),
                    spread: s,
                    finite,
                    stable: finite && s <= STABILITY_FACTOR,
                }
            })
            .collect();
        Self {
            instance: instance.into(),
            ball,
            norm: "pointwise operator norm with respect to omega".into(),
            levels,
            stability,
        }
    }

    pub fn flag(&self, ratio: &str) -> Option<&StabilityFlag> {
        self.stability.iter().find(|f| f.ratio == ratio)
    }

    /// `level,ratio,value` rows; skipped Harnack values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,ratio,value\n");
        for l in &self.levels {
            for (name, v) in l.named() {
                match v {
                    Some(v) => out.push_str(&format!("{},{name},{v:e}\n", l.level)),
                    None => out.push_str(&format!("{},{name},\n", l.level)),
                }
            }
        }
        out
    }
}

/// Result of checking `min_a G_{aā} ≥ c₁ Σ_l f_{Λ_l}` in the eigenframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityCheck {
    pub c1: f64,
    /// `min over points of (min_a g_a - c₁ Σ f)`.
    pub min_slack: f64,
    pub worst_point: usize,
    pub passes: bool,
}

/// Checks the discrete ellipticity inequality on a solved field. Boundary
/// nodes of interval grids are skipped.
pub fn ellipticity_check(
    geometry: &ModelGeometry,
    op: &OperatorSpec,
    x: &hermfield::HermitianField,
    u: &ScalarField,
    c1: f64,
) -> Result<EllipticityCheck> {
    let g = hermfield::assemble_g(&hermfield::complex_hessian(geometry, u)?, x)?;
    let s = hermfield::spectral_decompose(geometry, &g)?;
    let mut min_slack = f64::INFINITY;
    let mut worst_point = 0;
    for idx in 0..geometry.npts() {
        if !geometry.is_torus() && geometry.is_boundary(idx) {
            continue;
        }
        let p = op.partials_at(s.eigenvalues(idx)).map_err(|e| e.at(idx))?;
        let total: f64 = p.f_lambda.iter().sum();
        let min_g = p.g.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = min_g - c1 * total;
        if slack < min_slack {
            min_slack = slack;
            worst_point = idx;
        }
    }
    Ok(EllipticityCheck {
        c1,
        min_slack,
        worst_point,
        passes: min_slack >= -1e-10,
    })
}
