//! Discrete flat Hermitian geometry.
//!
//! Two model geometries are supported: the flat torus `ℂⁿ/(ℤ+iℤ)ⁿ` with a
//! uniform periodic grid and Fourier differentiation, and the interval
//! reduction `(a, b)` with `n = 1`, where `∂∂̄ ↦ ¼ d²/dx²` is discretised by
//! second-order finite differences.
//!
//! Fields are stored flat: a [`HermitianField`] holds `n×n` row-major complex
//! matrices back to back, one per grid point.

pub mod eigen;
pub mod io;
pub mod spectral;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symcalc::OperatorSpec;

pub use spectral::TorusSpectral;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Shape of the discretised domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryKind {
    /// `points_per_axis` samples on each of the `2n` real axes.
    FlatTorus { n: usize, points_per_axis: usize },
    /// `points` uniform cells on `[a, b]`; nodes include both endpoints.
    Interval { a: f64, b: f64, points: usize },
}

/// A flat model geometry together with its constant metric `ω`.
#[derive(Clone)]
pub struct ModelGeometry {
    kind: GeometryKind,
    omega: Vec<Complex64>,
    /// `L⁻¹` for `ω = LL*`; `None` when `ω` is the identity.
    chol_inv: Option<Vec<Complex64>>,
    spectral: Option<Arc<TorusSpectral>>,
}

impl std::fmt::Debug for ModelGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelGeometry")
            .field("kind", &self.kind)
            .field("omega", &self.omega)
            .finish()
    }
}

impl ModelGeometry {
    pub fn new(kind: GeometryKind) -> Result<Self> {
        let (n, spectral) = match kind {
            GeometryKind::FlatTorus { n, points_per_axis } => {
                if n == 0 || n > 4 {
                    return Err(Error::config(format!(
                        "torus dimension n = {n} must lie in 1..=4"
                    )));
                }
                if !points_per_axis.is_power_of_two() || points_per_axis < 2 {
                    return Err(Error::config(format!(
                        "points_per_axis = {points_per_axis} must be a power of two >= 2"
                    )));
                }
                if (points_per_axis as f64).powi(2 * n as i32) > 1.5e8 {
                    return Err(Error::config("torus grid exceeds 1.5e8 points"));
                }
                (n, Some(Arc::new(TorusSpectral::new(n, points_per_axis))))
            }
            GeometryKind::Interval { a, b, points } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::config(format!("interval ({a}, {b}) is empty or not finite")));
                }
                if !points.is_power_of_two() || points < 4 {
                    return Err(Error::config(format!(
                        "interval cell count {points} must be a power of two >= 4"
                    )));
                }
                (1, None)
            }
        };
        let mut omega = vec![ZERO; n * n];
        for i in 0..n {
            omega[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Ok(Self {
            kind,
            omega,
            chol_inv: None,
            spectral,
        })
    }

    pub fn torus(n: usize, points_per_axis: usize) -> Result<Self> {
        Self::new(GeometryKind::FlatTorus { n, points_per_axis })
    }

    pub fn interval(a: f64, b: f64, points: usize) -> Result<Self> {
        Self::new(GeometryKind::Interval { a, b, points })
    }

    /// Replaces the identity metric by a constant Hermitian positive-definite `ω`.
    pub fn with_metric(mut self, omega: Vec<Complex64>) -> Result<Self> {
        let n = self.n();
        if omega.len() != n * n {
            return Err(Error::config(format!("metric needs {} entries, got {}", n * n, omega.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let d = omega[i * n + j] - omega[j * n + i].conj();
                if d.norm() > 1e-12 * (1.0 + omega[i * n + j].norm()) {
                    return Err(Error::config("metric is not Hermitian"));
                }
            }
        }
        let l = eigen::cholesky(n, &omega)
            .ok_or_else(|| Error::config("metric is not positive definite"))?;
        let identity = (0..n).all(|i| {
            (0..n).all(|j| omega[i * n + j] == if i == j { Complex64::new(1.0, 0.0) } else { ZERO })
        });
        self.chol_inv = (!identity).then(|| eigen::lower_inverse(n, &l));
        self.omega = omega;
        Ok(self)
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        match self.kind {
            GeometryKind::FlatTorus { n, .. } => n,
            GeometryKind::Interval { .. } => 1,
        }
    }

    pub fn omega(&self) -> &[Complex64] {
        &self.omega
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, GeometryKind::FlatTorus { .. })
    }

    /// Grid extents, slowest axis first.
    pub fn shape(&self) -> Vec<usize> {
        match self.kind {
            GeometryKind::FlatTorus { n, points_per_axis } => vec![points_per_axis; 2 * n],
            GeometryKind::Interval { points, .. } => vec![points + 1],
        }
    }

    pub fn npts(&self) -> usize {
        self.shape().iter().product()
    }

    /// Grid spacing.
    pub fn spacing(&self) -> f64 {
        match self.kind {
            GeometryKind::FlatTorus { points_per_axis, .. } => 1.0 / points_per_axis as f64,
            GeometryKind::Interval { a, b, points } => (b - a) / points as f64,
        }
    }

    /// Real coordinates of grid point `idx`: `(x_1, y_1, ..., x_n, y_n)` on
    /// the torus, `x` on the interval.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        match self.kind {
            GeometryKind::FlatTorus { n, points_per_axis: p } => {
                let dims = 2 * n;
                let mut rest = idx;
                let mut out = vec![0.0; dims];
                for axis in (0..dims).rev() {
                    out[axis] = (rest % p) as f64 / p as f64;
                    rest /= p;
                }
                out
            }
            GeometryKind::Interval { a, .. } => vec![a + idx as f64 * self.spacing()],
        }
    }

    /// Whether `idx` lies on the boundary (always false on the torus).
    pub fn is_boundary(&self, idx: usize) -> bool {
        match self.kind {
            GeometryKind::FlatTorus { .. } => false,
            GeometryKind::Interval { points, .. } => idx == 0 || idx == points,
        }
    }

    /// Diameter of the domain: `√(2n)/2` for the unit torus, `b - a` on the interval.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            GeometryKind::FlatTorus { n, .. } => (2.0 * n as f64).sqrt() / 2.0,
            GeometryKind::Interval { a, b, .. } => b - a,
        }
    }

    /// Distance between two coordinate vectors (minimum image on the torus).
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let periodic = self.is_torus();
        x.iter()
            .zip(y)
            .map(|(a, b)| {
                let mut d = a - b;
                if periodic {
                    d -= d.round();
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn spectral(&self) -> Option<&TorusSpectral> {
        self.spectral.as_deref()
    }

    /// Samples a function of the real coordinates on the grid.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> ScalarField {
        let values = (0..self.npts()).into_par_iter().map(|i| f(&self.coords(i))).collect();
        ScalarField { values }
    }

    /// `c·ω` at every grid point.
    pub fn constant_field(&self, c: f64) -> HermitianField {
        let n = self.n();
        let mut data = Vec::with_capacity(self.npts() * n * n);
        for _ in 0..self.npts() {
            data.extend(self.omega.iter().map(|z| z * c));
        }
        HermitianField { n, data }
    }

    fn check_scalar(&self, u: &ScalarField) -> Result<()> {
        if u.len() != self.npts() {
            return Err(Error::domain(format!(
                "field has {} values, grid has {}",
                u.len(),
                self.npts()
            )));
        }
        Ok(())
    }
}

/// Real values over the grid (`u`, `ψ`, `h`, boundary data, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(npts: usize, c: f64) -> Self {
        Self { values: vec![c; npts] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Index of the largest absolute value (first on ties).
    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if v.abs() > self.values[best].abs() {
                best = i;
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A grid of `n×n` Hermitian matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl HermitianField {
    pub fn zeros(n: usize, npts: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; npts * n * n],
        }
    }

    pub fn npts(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn at(&self, idx: usize) -> &[Complex64] {
        let m = self.n * self.n;
        &self.data[idx * m..(idx + 1) * m]
    }

    /// Largest `|A - A*|` entry over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        self.data
            .chunks(n * n)
            .map(|a| {
                let mut d: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        d = d.max((a[i * n + j] - a[j * n + i].conj()).norm());
                    }
                }
                d
            })
            .fold(0.0, f64::max)
    }

    /// Replaces every matrix by `(A + A*)/2`.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        self.data.par_chunks_mut(n * n).for_each(|a| symmetrize_matrix(n, a));
    }
}

fn symmetrize_matrix(n: usize, a: &mut [Complex64]) {
    for i in 0..n {
        a[i * n + i].im = 0.0;
        for j in i + 1..n {
            let avg = 0.5 * (a[i * n + j] + a[j * n + i].conj());
            a[i * n + j] = avg;
            a[j * n + i] = avg.conj();
        }
    }
}

/// Pointwise eigenvalues (ascending) and `ω`-unitary eigenframes.
///
/// Frame columns satisfy `v_a* ω v_b = δ_ab` and `𝔤 v_a = λ_a ω v_a`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub n: usize,
    pub values: Vec<f64>,
    pub frames: Vec<Complex64>,
}

impl SpectralField {
    pub fn eigenvalues(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.n..(idx + 1) * self.n]
    }

    pub fn frame(&self, idx: usize) -> &[Complex64] {
        let m = self.n * self.n;
        &self.frames[idx * m..(idx + 1) * m]
    }
}

/// `∂_i∂̄_j u` at every grid point.
pub fn complex_hessian(geometry: &ModelGeometry, u: &ScalarField) -> Result<HermitianField> {
    geometry.check_scalar(u)?;
    let n = geometry.n();
    Ok(match geometry.spectral() {
        Some(s) => HermitianField {
            n,
            data: s.hessian(&u.values),
        },
        None => HermitianField {
            n,
            data: second_difference(&u.values, geometry.spacing())
                .into_iter()
                .map(|d| Complex64::new(0.25 * d, 0.0))
                .collect(),
        },
    })
}

/// `∂_{z_i} u` at every grid point, `n` values per point.
pub fn complex_gradient(geometry: &ModelGeometry, u: &ScalarField) -> Result<Vec<Complex64>> {
    geometry.check_scalar(u)?;
    Ok(match geometry.spectral() {
        Some(s) => s.gradient(&u.values),
        None => first_difference(&u.values, geometry.spacing())
            .into_iter()
            .map(|d| Complex64::new(0.5 * d, 0.0))
            .collect(),
    })
}

/// `|∂u|²_ω = ω^{ij̄} ∂_i u ∂̄_j u` at every grid point.
pub fn gradient_norm_sq(geometry: &ModelGeometry, u: &ScalarField) -> Result<Vec<f64>> {
    let n = geometry.n();
    let grad = complex_gradient(geometry, u)?;
    let inv = metric_inverse(geometry);
    Ok(grad
        .chunks(n)
        .map(|d| {
            let mut s = ZERO;
            for i in 0..n {
                for j in 0..n {
                    s += inv[i * n + j] * d[i] * d[j].conj();
                }
            }
            s.re
        })
        .collect())
}

fn metric_inverse(geometry: &ModelGeometry) -> Vec<Complex64> {
    let n = geometry.n();
    match &geometry.chol_inv {
        None => geometry.omega.clone(),
        Some(linv) => {
            // ω⁻¹ = L⁻* L⁻¹
            let mut out = vec![ZERO; n * n];
            eigen::matmul(n, &eigen::adjoint(n, linv), linv, &mut out);
            out
        }
    }
}

/// Second derivative with central differences and second-order one-sided
/// closure at the two ends.
pub fn second_difference(u: &[f64], h: f64) -> Vec<f64> {
    let m = u.len();
    let h2 = h * h;
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / h2;
    }
    out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2;
    out[m - 1] = (2.0 * u[m - 1] - 5.0 * u[m - 2] + 4.0 * u[m - 3] - u[m - 4]) / h2;
    out
}

/// First derivative with central differences and second-order one-sided ends.
pub fn first_difference(u: &[f64], h: f64) -> Vec<f64> {
    let m = u.len();
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        out[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    out[m - 1] = (3.0 * u[m - 1] - 4.0 * u[m - 2] + u[m - 3]) / (2.0 * h);
    out
}

/// Converts a real `2n×2n` Hessian in `(x_1, y_1, ..., x_n, y_n)` to the
/// complex Hessian `∂_i∂̄_j`.
pub fn complex_from_real_hessian(n: usize, d2: &[f64]) -> Vec<Complex64> {
    let r = 2 * n;
    let d = |a: usize, b: usize| d2[a * r + b];
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            out[i * n + j] = Complex64::new(
                0.25 * (d(xi, xj) + d(yi, yj)),
                0.25 * (d(xi, yj) - d(yi, xj)),
            );
        }
    }
    out
}

/// `𝔤[u] = ∂∂̄u + X`, symmetrised pointwise.
pub fn assemble_g(hessian: &HermitianField, x: &HermitianField) -> Result<HermitianField> {
    if hessian.n != x.n || hessian.data.len() != x.data.len() {
        return Err(Error::domain("Hessian and X fields have different shapes"));
    }
    let mut g = HermitianField {
        n: hessian.n,
        data: hessian.data.iter().zip(&x.data).map(|(a, b)| a + b).collect(),
    };
    g.symmetrize();
    Ok(g)
}

/// Eigen-decomposition of one matrix with respect to the geometry's metric.
fn decompose_point(
    n: usize,
    chol_inv: Option<&[Complex64]>,
    g: &[Complex64],
    values: &mut [f64],
    frame: &mut [Complex64],
) {
    match chol_inv {
        None => eigen::hermitian_eigen(n, g, values, frame),
        Some(linv) => {
            let mut tmp = vec![ZERO; n * n];
            let mut a = vec![ZERO; n * n];
            let linv_adj = eigen::adjoint(n, linv);
            eigen::matmul(n, linv, g, &mut tmp);
            eigen::matmul(n, &tmp, &linv_adj, &mut a);
            symmetrize_matrix(n, &mut a);
            let mut w = vec![ZERO; n * n];
            eigen::hermitian_eigen(n, &a, values, &mut w);
            eigen::matmul(n, &linv_adj, &w, frame);
        }
    }
}

/// Solves `𝔤 v = λ ω v` at every grid point.
pub fn spectral_decompose(geometry: &ModelGeometry, g: &HermitianField) -> Result<SpectralField> {
    let n = g.n;
    if n != geometry.n() {
        return Err(Error::domain("field dimension does not match geometry"));
    }
    let npts = g.npts();
    let mut values = vec![0.0; npts * n];
    let mut frames = vec![ZERO; npts * n * n];
    let linv = geometry.chol_inv.as_deref();
    values
        .par_chunks_mut(n)
        .zip(frames.par_chunks_mut(n * n))
        .zip(g.data.par_chunks(n * n))
        .for_each(|((v, f), a)| decompose_point(n, linv, a, v, f));
    Ok(SpectralField { n, values, frames })
}

fn accumulate_coefficients(n: usize, gvals: &[f64], frame: &[Complex64], out: &mut [Complex64]) {
    out.iter_mut().for_each(|z| *z = ZERO);
    for (a, &ga) in gvals.iter().enumerate() {
        for i in 0..n {
            let vi = frame[i * n + a];
            for j in 0..n {
                out[i * n + j] += ga * vi * frame[j * n + a].conj();
            }
        }
    }
}

/// `G^{ij̄} = Σ_a g_a v_a v_a*` with `g_a = ∂F/∂λ_a`.
pub fn linearization_coefficients(op: &OperatorSpec, s: &SpectralField) -> Result<HermitianField> {
    let n = s.n;
    if op.n() != n {
        return Err(Error::domain("operator dimension does not match field"));
    }
    let npts = s.values.len() / n;
    let mut data = vec![ZERO; npts * n * n];
    let failure = data
        .par_chunks_mut(n * n)
        .enumerate()
        .filter_map(|(idx, out)| match op.partials_at(s.eigenvalues(idx)) {
            Ok(p) => {
                accumulate_coefficients(n, &p.g, s.frame(idx), out);
                None
            }
            Err(e) => Some((idx, e)),
        })
        .min_by_key(|(idx, _)| *idx);
    if let Some((idx, e)) = failure {
        return Err(e.at(idx));
    }
    Ok(HermitianField { n, data })
}

/// Pointwise operator data at `𝔤 + shift·ω`.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// `F(λ)` including the level shift.
    pub value: Vec<f64>,
    /// Admissibility margin of `Λ(λ)`.
    pub margin: Vec<f64>,
    /// `G^{ij̄}`.
    pub coeffs: HermitianField,
    /// Eigenvalues of the shifted form, `n` per point.
    pub eigenvalues: Vec<f64>,
}

impl Linearization {
    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates the operator and its linearisation in one pass. Fails with the
/// lowest-index inadmissible grid point. With `interior_only`, boundary nodes
/// are skipped and get value `0`, margin `+∞` and zero coefficients.
pub fn linearize(
    geometry: &ModelGeometry,
    op: &OperatorSpec,
    g: &HermitianField,
    shift: f64,
    interior_only: bool,
) -> Result<Linearization> {
    let n = g.n;
    if op.n() != n || geometry.n() != n {
        return Err(Error::domain("operator, geometry and field dimensions differ"));
    }
    let npts = g.npts();
    let linv = geometry.chol_inv.as_deref();
    let mut value = vec![0.0; npts];
    let mut margin = vec![0.0; npts];
    let mut coeffs = vec![ZERO; npts * n * n];
    let mut eigenvalues = vec![0.0; npts * n];
    let omega = &geometry.omega;
    let failure = value
        .par_iter_mut()
        .zip(margin.par_iter_mut())
        .zip(coeffs.par_chunks_mut(n * n))
        .zip(eigenvalues.par_chunks_mut(n))
        .enumerate()
        .filter_map(|(idx, (((val, mar), out), lam))| {
            if interior_only && geometry.is_boundary(idx) {
                *mar = f64::INFINITY;
                return None;
            }
            let mut a: Vec<Complex64> = g.at(idx).to_vec();
            if shift != 0.0 {
                a.iter_mut().zip(omega).for_each(|(x, w)| *x += shift * w);
            }
            let mut frame = vec![ZERO; n * n];
            decompose_point(n, linv, &a, lam, &mut frame);
            match op.partials_at(lam) {
                Ok(p) => {
                    *val = p.value;
                    *mar = p.margin;
                    accumulate_coefficients(n, &p.g, &frame, out);
                    None
                }
                Err(e) => {
                    *mar = op.margin_at(lam).unwrap_or(f64::NEG_INFINITY);
                    Some((idx, e))
                }
            }
        })
        .min_by_key(|(idx, _)| *idx);
    if let Some((idx, e)) = failure {
        return Err(e.at(idx));
    }
    Ok(Linearization {
        value,
        margin,
        coeffs: HermitianField { n, data: coeffs },
        eigenvalues,
    })
}

/// Pointwise admissibility margins of `𝔤 + shift·ω`, `-∞` where undefined.
pub fn margins(geometry: &ModelGeometry, op: &OperatorSpec, g: &HermitianField, shift: f64) -> Vec<f64> {
    let n = g.n;
    let linv = geometry.chol_inv.as_deref();
    let omega = &geometry.omega;
    (0..g.npts())
        .into_par_iter()
        .map(|idx| {
            let mut a: Vec<Complex64> = g.at(idx).to_vec();
            if shift != 0.0 {
                a.iter_mut().zip(omega).for_each(|(x, w)| *x += shift * w);
            }
            let mut lam = vec![0.0; n];
            let mut frame = vec![ZERO; n * n];
            decompose_point(n, linv, &a, &mut lam, &mut frame);
            op.margin_at(&lam).unwrap_or(f64::NEG_INFINITY)
        })
        .collect()
}

/// `tr(G ∂∂̄v)` at every grid point.
pub fn apply_linearization(
    geometry: &ModelGeometry,
    coeffs: &HermitianField,
    v: &[f64],
    out: &mut [f64],
) {
    match geometry.spectral() {
        Some(s) => s.contract_hessian(v, &coeffs.data, out),
        None => {
            let d2 = second_difference(v, geometry.spacing());
            for (i, o) in out.iter_mut().enumerate() {
                *o = 0.25 * coeffs.data[i].re * d2[i];
            }
        }
    }
}

fn torus_points(geometry: &ModelGeometry) -> Result<(usize, usize)> {
    match geometry.kind() {
        GeometryKind::FlatTorus { n, points_per_axis } => Ok((n, points_per_axis)),
        GeometryKind::Interval { .. } => Err(Error::config("grid transfer needs torus geometries")),
    }
}

/// Fine-grid index of every coarse-grid point (nested torus grids).
pub fn nested_indices(coarse: &ModelGeometry, fine: &ModelGeometry) -> Result<Vec<usize>> {
    let (nc, pc) = torus_points(coarse)?;
    let (nf, pf) = torus_points(fine)?;
    if nc != nf || pc > pf {
        return Err(Error::config("coarse grid is not nested in the fine grid"));
    }
    let ratio = pf / pc;
    let dims = 2 * nc;
    Ok((0..coarse.npts())
        .map(|idx| {
            let mut rest = idx;
            let mut out = 0;
            let mut place = 1;
            for _ in 0..dims {
                out += (rest % pc) * ratio * place;
                rest /= pc;
                place *= pf;
            }
            out
        })
        .collect())
}

/// Samples a fine-grid field on a nested coarse grid.
pub fn restrict(coarse: &ModelGeometry, fine: &ModelGeometry, u: &ScalarField) -> Result<ScalarField> {
    fine.check_scalar(u)?;
    let map = nested_indices(coarse, fine)?;
    Ok(ScalarField::new(map.iter().map(|&i| u.values[i]).collect()))
}

/// Samples a fine-grid Hermitian field on a nested coarse grid.
pub fn restrict_hermitian(
    coarse: &ModelGeometry,
    fine: &ModelGeometry,
    x: &HermitianField,
) -> Result<HermitianField> {
    let map = nested_indices(coarse, fine)?;
    let mut data = Vec::with_capacity(map.len() * x.n * x.n);
    for &i in &map {
        data.extend_from_slice(x.at(i));
    }
    Ok(HermitianField { n: x.n, data })
}

/// Trigonometric interpolation of a coarse torus field onto a finer grid.
/// The coarse Nyquist modes are dropped.
pub fn prolong(coarse: &ModelGeometry, fine: &ModelGeometry, u: &ScalarField) -> Result<ScalarField> {
    coarse.check_scalar(u)?;
    let (n, pc) = torus_points(coarse)?;
    let (_, pf) = torus_points(fine)?;
    nested_indices(coarse, fine)?;
    let cs = coarse.spectral().expect("torus has a spectral context");
    let fs = fine.spectral().expect("torus has a spectral context");
    let spec = cs.spectrum(&u.values);
    let mut out = vec![ZERO; fine.npts()];
    let scale = fine.npts() as f64 / coarse.npts() as f64;
    let dims = 2 * n;
    'modes: for (idx, z) in spec.iter().enumerate() {
        let mut rest = idx;
        let mut target = 0;
        let mut place = 1;
        for _ in 0..dims {
            let q = rest % pc;
            rest /= pc;
            if 2 * q == pc {
                continue 'modes;
            }
            let fq = if q < pc / 2 { q } else { pf - (pc - q) };
            target += fq * place;
            place *= pf;
        }
        out[target] = z * scale;
    }
    fs.inverse(&mut out);
    Ok(ScalarField::new(out.iter().map(|z| z.re).collect()))
}
