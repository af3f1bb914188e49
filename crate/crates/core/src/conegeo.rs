//! Cone geometry: membership in `Γ_k` and `P_k`, level-set sampling on
//! `∂Γ^σ = {f = σ}`, and numerical certification of the rank of the tangent
//! cone at infinity together with the constant `c₁` bounding the smallest
//! partial derivatives from below.
//!
//! The tangent cone itself is never built. Diverging sequences on the level
//! set are produced along coordinate-subset rays, and the limits of their unit
//! normals are read off as supporting-hyperplane normals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symcalc::{elementary_symmetric, IndexSetFamily, OperatorSpec};

/// Relative size below which a normal component counts as zero.
pub const RANK_ZERO_TOL: f64 = 1e-6;
/// Maximum change of the normal between the two largest magnitudes.
pub const NORMAL_CONVERGENCE_TOL: f64 = 1e-4;
/// `c₁` below this value is reported as zero.
pub const C1_FLAG_THRESHOLD: f64 = 1e-8;
/// Magnitudes used when none are supplied.
pub const DEFAULT_MAGNITUDES: [f64; 6] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

#[derive(Debug, Clone)]
pub enum ConeSpec {
    /// `Γ_k = {σ_j > 0, j ≤ k}` in `ℝ^dim`.
    Garding { k: usize, dim: usize },
    /// `P_k`: every `k`-term partial sum positive, in `ℝ^n`.
    Partial { k: usize, n: usize },
    /// Eigenvalue vectors `λ` with `Λ(λ) - βΛ'(λ)` in the operator's cone.
    OperatorDomain(OperatorSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Membership {
    Interior,
    Boundary { tol: f64 },
    Outside,
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::Garding { dim, .. } => *dim,
            ConeSpec::Partial { n, .. } => *n,
            ConeSpec::OperatorDomain(op) => op.n(),
        }
    }

    /// Values of the defining inequalities at `x`.
    pub fn constraints(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::domain(format!(
                "point has length {}, cone lives in R^{}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self {
            ConeSpec::Garding { k, .. } => {
                if *k == 0 || *k > x.len() {
                    return Err(Error::domain(format!("Garding cone index {k} out of range")));
                }
                elementary_symmetric(x, *k)[1..].to_vec()
            }
            ConeSpec::Partial { k, n } => IndexSetFamily::new(*n, *k)?.lambda_map(x)?.0,
            ConeSpec::OperatorDomain(op) => op
                .cone_constraints(&op.cone_point(x)?)
                .into_iter()
                .map(|(_, v)| v)
                .collect(),
        })
    }
}

/// Classifies `x` with the default tolerance `1e-10 (1 + |x|)`.
pub fn cone_membership(spec: &ConeSpec, x: &[f64]) -> Result<Membership> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    cone_membership_with_tol(spec, x, 1e-10 * (1.0 + norm))
}

pub fn cone_membership_with_tol(spec: &ConeSpec, x: &[f64], tol: f64) -> Result<Membership> {
    let c = spec.constraints(x)?;
    if c.iter().all(|&v| v > tol) {
        Ok(Membership::Interior)
    } else if c.iter().all(|&v| v >= -tol) {
        Ok(Membership::Boundary { tol })
    } else {
        Ok(Membership::Outside)
    }
}

/// A concave, nondecreasing function whose level sets are probed.
pub trait LevelFunction: Sync {
    fn dim(&self) -> usize;
    /// `None` outside the domain cone.
    fn value(&self, x: &[f64]) -> Option<f64>;
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>>;
    fn sup_boundary(&self) -> f64;
}

/// Which function of an operator is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSpace {
    /// `f` itself on `ℝ^N` (the space where the rank condition is stated).
    #[default]
    Cone,
    /// `λ ↦ f(Λ(λ) - βΛ'(λ))` on `ℝ^n`.
    Eigen,
}

struct ConeFunction<'a>(&'a OperatorSpec);
struct EigenFunction<'a>(&'a OperatorSpec);

impl LevelFunction for ConeFunction<'_> {
    fn dim(&self) -> usize {
        self.0.ambient_dim()
    }
    fn value(&self, x: &[f64]) -> Option<f64> {
        self.0.base_value(x).ok()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.0.base_gradient(x).ok()
    }
    fn sup_boundary(&self) -> f64 {
        self.0.sup_boundary()
    }
}

impl LevelFunction for EigenFunction<'_> {
    fn dim(&self) -> usize {
        self.0.n()
    }
    fn value(&self, x: &[f64]) -> Option<f64> {
        self.0.value_at(x).ok()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.0.partials_at(x).ok().map(|p| p.g)
    }
    fn sup_boundary(&self) -> f64 {
        self.0.sup_boundary()
    }
}

pub fn level_function(op: &OperatorSpec, space: ProbeSpace) -> Box<dyn LevelFunction + '_> {
    match space {
        ProbeSpace::Cone => Box::new(ConeFunction(op)),
        ProbeSpace::Eigen => Box::new(EigenFunction(op)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSetSample {
    pub magnitude: f64,
    pub point: Vec<f64>,
    /// Unit normal `Df/|Df|`.
    pub normal: Vec<f64>,
    /// `ν·λ`.
    pub support_value: f64,
    /// `|f(point) - σ|` actually attained.
    pub level_error: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SampleOutcome {
    Sample(LevelSetSample),
    /// The line never drops below the level.
    AboveLevel { magnitude: f64 },
}

impl SampleOutcome {
    pub fn sample(&self) -> Option<&LevelSetSample> {
        match self {
            SampleOutcome::Sample(s) => Some(s),
            SampleOutcome::AboveLevel { .. } => None,
        }
    }
}

/// Root `t₀` of `f(t·1) = σ`, checking `sup_∂Γ f < σ < sup_Γ f`.
pub fn diagonal_root(f: &dyn LevelFunction, sigma: f64) -> Result<f64> {
    if !(sigma > f.sup_boundary()) || !sigma.is_finite() {
        return Err(Error::domain(format!(
            "level {sigma} not above sup over the cone boundary ({})",
            f.sup_boundary()
        )));
    }
    let m = f.dim();
    let at = |t: f64| f.value(&vec![t; m]);
    let mut hi = 1.0;
    let mut grow = 0;
    while at(hi).is_none_or(|v| v < sigma) {
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::domain(format!(
                "level {sigma} not reached along the diagonal (f(t·1) stays below)"
            )));
        }
    }
    let mut lo = hi / 2.0;
    while at(lo).is_some_and(|v| v >= sigma) {
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(lo);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).is_some_and(|v| v >= sigma) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Projects `s·d` onto `∂Γ^σ` along the diagonal: solves `f(s·d + τ·1) = σ`.
fn project_along_diagonal(
    f: &dyn LevelFunction,
    sigma: f64,
    t0: f64,
    direction: &[f64],
    s: f64,
) -> SampleOutcome {
    let m = f.dim();
    let point = |tau: f64| -> Vec<f64> { direction.iter().map(|d| s * d + tau).collect() };
    let above = |tau: f64| f.value(&point(tau)).is_some_and(|v| v >= sigma);

    // s·d + t0·1 ≥ t0·1 componentwise, so t0 is always at or above the level.
    let mut hi = t0;
    let mut step = t0.abs().max(1.0);
    let mut lo = hi - step;
    let reach = 1e3 * (s.abs() + t0.abs() + 1.0);
    while above(lo) {
        hi = lo;
        step *= 2.0;
        lo = hi - step;
        if step > reach {
            return SampleOutcome::AboveLevel { magnitude: s };
        }
    }
    for _ in 0..600 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    // safeguarded Newton polish inside [lo, hi]
    let mut tau = hi;
    let mut err = (f.value(&point(tau)).unwrap_or(f64::INFINITY) - sigma).abs();
    for _ in 0..8 {
        let x = point(tau);
        let (Some(v), Some(g)) = (f.value(&x), f.gradient(&x)) else {
            break;
        };
        let slope: f64 = g.iter().sum();
        if slope <= 0.0 {
            break;
        }
        let cand = tau - (v - sigma) / slope;
        if !(cand >= lo && cand <= hi) {
            break;
        }
        match f.value(&point(cand)) {
            Some(vc) if (vc - sigma).abs() < err => {
                tau = cand;
                err = (vc - sigma).abs();
            }
            _ => break,
        }
    }
    let x = point(tau);
    let gradient = f.gradient(&x).unwrap_or_else(|| vec![0.0; m]);
    let normal = unit(&gradient);
    let support_value = normal.iter().zip(&x).map(|(a, b)| a * b).sum();
    SampleOutcome::Sample(LevelSetSample {
        magnitude: s,
        point: x,
        normal,
        support_value,
        level_error: err,
        gradient,
    })
}

/// Samples `∂Γ^σ` on the lines `s·d + τ·1`, one per magnitude `s`.
///
/// `direction` is normalised; a zero direction yields `t₀·1`.
pub fn level_set_sample(
    f: &dyn LevelFunction,
    sigma: f64,
    direction: &[f64],
    magnitudes: &[f64],
) -> Result<Vec<SampleOutcome>> {
    if direction.len() != f.dim() {
        return Err(Error::domain("direction length does not match the ambient dimension"));
    }
    if direction.iter().any(|&d| d < 0.0) {
        return Err(Error::domain("direction must lie in the closed positive orthant"));
    }
    let t0 = diagonal_root(f, sigma)?;
    let d = unit(direction);
    Ok(magnitudes
        .iter()
        .map(|&s| project_along_diagonal(f, sigma, t0, &d, s))
        .collect())
}

/// Probe data for one coordinate-subset ray.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayProbe {
    /// 0-based coordinates that diverge.
    pub subset: Vec<usize>,
    pub samples: Vec<SampleOutcome>,
    /// Limiting normal (sample at the largest magnitude).
    pub limiting_normal: Option<Vec<f64>>,
    pub nonzero_count: Option<usize>,
    /// `|ν(s_last) - ν(s_prev)|`.
    pub normal_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankCertificate {
    pub space: ProbeSpace,
    pub sigma: f64,
    pub ambient_dim: usize,
    pub probe_magnitudes: Vec<f64>,
    pub estimated_rank: usize,
    pub rays: Vec<RayProbe>,
    /// `c₁` for `r = estimated_rank`, minimised over every sample.
    pub c1_lower_bound: f64,
    pub c1_flagged: bool,
    pub threshold_checked: f64,
    pub passes_condition: bool,
    pub assumptions: Vec<String>,
}

/// Controls for [`rank_probe`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub space: ProbeSpace,
    pub magnitudes: Vec<f64>,
    /// Upper bound on the number of rays shot.
    pub ray_budget: usize,
    /// Extra random directions in the closed positive orthant used for `c₁`.
    pub random_directions: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            space: ProbeSpace::Cone,
            magnitudes: DEFAULT_MAGNITUDES.to_vec(),
            ray_budget: 4096,
            random_directions: 16,
            seed: 0,
        }
    }
}

/// Rank threshold `N(n-K)/n + 1` (cone space) or `2` (eigen space).
pub fn rank_threshold(op: &OperatorSpec, space: ProbeSpace) -> f64 {
    match space {
        ProbeSpace::Cone => (op.ambient_dim() * (op.n() - op.k())) as f64 / op.n() as f64 + 1.0,
        ProbeSpace::Eigen => 2.0,
    }
}

fn ray_subsets(m: usize, budget: usize) -> Result<(Vec<Vec<usize>>, &'static str)> {
    if m <= 1 {
        return Ok((Vec::new(), "ambient dimension 1: the only unit normal is (1)"));
    }
    let all = if m < 63 { (1u64 << m) - 2 } else { u64::MAX };
    if (budget as u64) >= all {
        let subsets = (1u64..(1u64 << m) - 1)
            .map(|mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
        Ok((subsets, "all proper coordinate subsets probed"))
    } else if budget >= m - 1 {
        Ok((
            (1..m).map(|j| (0..j).collect()).collect(),
            "one coordinate subset per cardinality (f symmetric)",
        ))
    } else {
        Err(Error::ProbeInconclusive(format!(
            "ray budget {budget} below the {} rays needed to cover every subset cardinality",
            m - 1
        )))
    }
}

fn count_nonzero(normal: &[f64]) -> usize {
    let max = normal.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    normal.iter().filter(|v| v.abs() > RANK_ZERO_TOL * max).count()
}

/// `(Σ_{i ≤ m-r+1} f_(i)) / Σ f_i` with the gradient sorted ascending.
pub fn sorted_gradient_ratio(gradient: &[f64], rank: usize) -> f64 {
    let m = gradient.len();
    let mut g = gradient.to_vec();
    g.sort_by(|a, b| a.total_cmp(b));
    let take = (m + 1).saturating_sub(rank).clamp(1, m);
    let total: f64 = g.iter().sum();
    g[..take].iter().sum::<f64>() / total
}

fn validate_magnitudes(magnitudes: &[f64]) -> Result<()> {
    if magnitudes.len() < 2 {
        return Err(Error::domain("need at least two probe magnitudes"));
    }
    if magnitudes.windows(2).any(|w| !(w[1] > w[0])) || !(magnitudes[0] > 0.0) {
        return Err(Error::domain("probe magnitudes must be positive and increasing"));
    }
    Ok(())
}

/// Estimates the rank of the tangent cone at infinity of `{f > σ}`.
pub fn rank_probe(op: &OperatorSpec, sigma: f64, opts: &ProbeOptions) -> Result<RankCertificate> {
    validate_magnitudes(&opts.magnitudes)?;
    if *opts.magnitudes.last().unwrap() < 1e6 {
        return Err(Error::domain("largest probe magnitude must be at least 1e6"));
    }
    let f = level_function(op, opts.space);
    let m = f.dim();
    let t0 = diagonal_root(f.as_ref(), sigma)?;
    let (subsets, plan_note) = ray_subsets(m, opts.ray_budget)?;

    let rays: Vec<RayProbe> = subsets
        .into_par_iter()
        .map(|subset| {
            let mut d = vec![0.0; m];
            subset.iter().for_each(|&j| d[j] = 1.0);
            let d = unit(&d);
            let samples: Vec<SampleOutcome> = opts
                .magnitudes
                .iter()
                .map(|&s| project_along_diagonal(f.as_ref(), sigma, t0, &d, s))
                .collect();
            let last_two: Vec<&LevelSetSample> =
                samples.iter().rev().take(2).filter_map(|s| s.sample()).collect();
            let (limiting_normal, nonzero_count, normal_change) = if last_two.len() == 2 {
                let change = last_two[0]
                    .normal
                    .iter()
                    .zip(&last_two[1].normal)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (
                    Some(last_two[0].normal.clone()),
                    Some(count_nonzero(&last_two[0].normal)),
                    Some(change),
                )
            } else {
                (None, None, None)
            };
            RayProbe {
                subset,
                samples,
                limiting_normal,
                nonzero_count,
                normal_change,
            }
        })
        .collect();

    let mut assumptions = vec![
        "limiting normals probed along coordinate-subset rays only".to_string(),
        plan_note.to_string(),
    ];
    if let Some(bad) = rays
        .iter()
        .find(|r| r.normal_change.is_some_and(|c| c > NORMAL_CONVERGENCE_TOL))
    {
        return Err(Error::ProbeInconclusive(format!(
            "normal along subset {:?} still moving by {:e} between the two largest magnitudes",
            bad.subset,
            bad.normal_change.unwrap()
        )));
    }
    let skipped = rays.iter().filter(|r| r.nonzero_count.is_none()).count();
    if skipped > 0 {
        assumptions.push(format!("{skipped} rays produced no level-set point and were skipped"));
    }
    let estimated_rank = if m == 1 {
        1
    } else {
        rays.iter()
            .filter_map(|r| r.nonzero_count)
            .min()
            .ok_or_else(|| Error::ProbeInconclusive("no ray produced a converged normal".into()))?
    };

    let mut gradients: Vec<&[f64]> = rays
        .iter()
        .flat_map(|r| r.samples.iter().filter_map(|s| s.sample()))
        .map(|s| s.gradient.as_slice())
        .collect();
    let extra = extra_samples(f.as_ref(), sigma, t0, opts);
    gradients.extend(extra.iter().map(|s| s.gradient.as_slice()));
    let raw = gradients
        .iter()
        .map(|g| sorted_gradient_ratio(g, estimated_rank))
        .fold(f64::INFINITY, f64::min);
    let c1_flagged = !(raw >= C1_FLAG_THRESHOLD);

    let threshold = rank_threshold(op, opts.space);
    Ok(RankCertificate {
        space: opts.space,
        sigma,
        ambient_dim: m,
        probe_magnitudes: opts.magnitudes.clone(),
        estimated_rank,
        rays,
        c1_lower_bound: if c1_flagged { 0.0 } else { raw },
        c1_flagged,
        threshold_checked: threshold,
        passes_condition: estimated_rank as f64 >= threshold,
        assumptions,
    })
}

/// Diagonal sample plus seeded random directions in the closed positive orthant.
fn extra_samples(
    f: &dyn LevelFunction,
    sigma: f64,
    t0: f64,
    opts: &ProbeOptions,
) -> Vec<LevelSetSample> {
    let m = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut dirs = vec![vec![0.0; m]];
    for _ in 0..opts.random_directions {
        let d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        dirs.push(unit(&d));
    }
    dirs.iter()
        .flat_map(|d| {
            opts.magnitudes
                .iter()
                .map(move |&s| project_along_diagonal(f, sigma, t0, d, s))
        })
        .filter_map(|o| match o {
            SampleOutcome::Sample(s) => Some(s),
            SampleOutcome::AboveLevel { .. } => None,
        })
        .collect()
}

/// Result of [`c1_estimate`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct C1Estimate {
    /// Reported constant; `0` when flagged.
    pub value: f64,
    /// Minimum ratio before flagging.
    pub raw_min: f64,
    pub flagged: bool,
    pub rank: usize,
}

/// Lower bound `c₁` with `Σ_{i ≤ m-r+1} f_(i) ≥ c₁ Σ f_i` on the sampled level set.
pub fn c1_estimate(
    op: &OperatorSpec,
    sigma: f64,
    rank: usize,
    opts: &ProbeOptions,
) -> Result<C1Estimate> {
    validate_magnitudes(&opts.magnitudes)?;
    let f = level_function(op, opts.space);
    let m = f.dim();
    if rank == 0 || rank > m {
        return Err(Error::domain(format!("rank {rank} outside 1..={m}")));
    }
    let t0 = diagonal_root(f.as_ref(), sigma)?;
    let subsets = ray_subsets(m, opts.ray_budget).map(|(s, _)| s).unwrap_or_default();
    let mut raw_min: f64 = subsets
        .par_iter()
        .map(|subset| {
            let mut d = vec![0.0; m];
            subset.iter().for_each(|&j| d[j] = 1.0);
            let d = unit(&d);
            opts.magnitudes
                .iter()
                .filter_map(|&s| match project_along_diagonal(f.as_ref(), sigma, t0, &d, s) {
                    SampleOutcome::Sample(smp) => Some(sorted_gradient_ratio(&smp.gradient, rank)),
                    SampleOutcome::AboveLevel { .. } => None,
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    for s in extra_samples(f.as_ref(), sigma, t0, opts) {
        raw_min = raw_min.min(sorted_gradient_ratio(&s.gradient, rank));
    }
    let flagged = !(raw_min >= C1_FLAG_THRESHOLD);
    Ok(C1Estimate {
        value: if flagged { 0.0 } else { raw_min },
        raw_min,
        flagged,
        rank,
    })
}

/// Outcome of checking the rank condition across the operating range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankConditionResult {
    pub passes: bool,
    pub threshold: f64,
    /// Minimum certified rank over the sampled levels.
    pub rank: usize,
    pub levels: Vec<f64>,
    pub certificates: Vec<RankCertificate>,
}

/// Five levels `σ = f(t·1)` with `t` geometric in `[0.1, 10]`.
pub fn operating_levels(op: &OperatorSpec, space: ProbeSpace) -> Result<Vec<f64>> {
    let f = level_function(op, space);
    let m = f.dim();
    [0.1, 10f64.powf(-0.5), 1.0, 10f64.powf(0.5), 10.0]
        .iter()
        .map(|&t| {
            f.value(&vec![t; m]).ok_or_else(|| {
                Error::domain(format!("diagonal point {t}·1 outside the operator cone"))
            })
        })
        .collect()
}

pub fn rank_condition_check(op: &OperatorSpec, opts: &ProbeOptions) -> Result<RankConditionResult> {
    let levels = operating_levels(op, opts.space)?;
    let certificates = levels
        .iter()
        .map(|&sigma| rank_probe(op, sigma, opts))
        .collect::<Result<Vec<_>>>()?;
    let rank = certificates.iter().map(|c| c.estimated_rank).min().unwrap_or(0);
    let threshold = rank_threshold(op, opts.space);
    Ok(RankConditionResult {
        passes: rank as f64 >= threshold,
        threshold,
        rank,
        levels,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcalc::Family;

    fn sigma_root(k: usize, m: usize) -> OperatorSpec {
        OperatorSpec::new(Family::SigmaRoot { degree: k }, m, 1).unwrap()
    }

    #[test]
    fn membership_examples() {
        let g3 = ConeSpec::Garding { k: 3, dim: 3 };
        assert_eq!(cone_membership(&g3, &[1.0, 1.0, 1.0]).unwrap(), Membership::Interior);
        let g2 = ConeSpec::Garding { k: 2, dim: 3 };
        assert!(matches!(
            cone_membership(&g2, &[-1.0, 2.0, 2.0]).unwrap(),
            Membership::Boundary { .. }
        ));
        let p2 = ConeSpec::Partial { k: 2, n: 3 };
        assert_eq!(cone_membership(&p2, &[-1.0, 2.0, 2.0]).unwrap(), Membership::Interior);
        assert_eq!(cone_membership(&g3, &[-1.0, 2.0, 2.0]).unwrap(), Membership::Outside);
        assert!(cone_membership(&g3, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn operator_domain_membership_uses_partial_sums() {
        let op = OperatorSpec::new(Family::LogSigmaN, 3, 2).unwrap();
        let spec = ConeSpec::OperatorDomain(op);
        assert_eq!(cone_membership(&spec, &[-1.0, 2.0, 2.0]).unwrap(), Membership::Interior);
        assert_eq!(cone_membership(&spec, &[-3.0, 2.0, 2.0]).unwrap(), Membership::Outside);
    }

    #[test]
    fn level_set_examples() {
        let lin = OperatorSpec::new(Family::Linear, 3, 1).unwrap();
        let f = level_function(&lin, ProbeSpace::Cone);
        let out = level_set_sample(f.as_ref(), 3.0, &[0.0; 3], &[0.0]).unwrap();
        let s = out[0].sample().unwrap();
        for (&p, &nu) in s.point.iter().zip(&s.normal) {
            assert!((p - 1.0).abs() < 1e-12);
            assert!((nu - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }

        let sq = sigma_root(2, 3);
        let f = level_function(&sq, ProbeSpace::Cone);
        let out = level_set_sample(f.as_ref(), 3f64.sqrt(), &[0.0; 3], &[0.0]).unwrap();
        let s = out[0].sample().unwrap();
        assert!(s.point.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn level_set_points_reevaluate_to_level() {
        for family in [Family::SigmaRoot { degree: 2 }, Family::LogSigmaN, Family::Linear] {
            let op = OperatorSpec::new(family, 4, 1).unwrap();
            let f = level_function(&op, ProbeSpace::Cone);
            let sigma = op.diagonal_value(1.3).unwrap();
            let out =
                level_set_sample(f.as_ref(), sigma, &[1.0, 0.5, 0.0, 0.2], &[0.0, 0.3, 2.0, 10.0])
                    .unwrap();
            for o in &out {
                let s = o.sample().unwrap();
                let v = op.base_value(&s.point).unwrap();
                assert!((v - sigma).abs() <= 1e-10, "{family:?}: {v} vs {sigma}");
                let norm: f64 = s.normal.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
                assert!(s.normal.iter().all(|&c| c >= 0.0));
            }
        }
    }

    #[test]
    fn level_below_boundary_is_domain_error() {
        let sq = sigma_root(2, 3);
        let f = level_function(&sq, ProbeSpace::Cone);
        assert!(matches!(
            level_set_sample(f.as_ref(), -1.0, &[0.0; 3], &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rank_of_linear_is_full() {
        for m in 2..=4 {
            let op = OperatorSpec::new(Family::Linear, m, 1).unwrap();
            let c = rank_probe(&op, 1.0, &ProbeOptions::default()).unwrap();
            assert_eq!(c.estimated_rank, m);
        }
    }

    #[test]
    fn ray_budget_too_small_is_inconclusive() {
        let op = sigma_root(2, 3);
        let opts = ProbeOptions {
            ray_budget: 1,
            ..Default::default()
        };
        assert!(matches!(rank_probe(&op, 1.0, &opts), Err(Error::ProbeInconclusive(_))));
    }

    #[test]
    fn subset_plans_agree() {
        // one-per-cardinality and all-subsets give the same rank for symmetric f
        let op = sigma_root(2, 4);
        let full = rank_probe(&op, 1.0, &ProbeOptions::default()).unwrap();
        let reduced = rank_probe(
            &op,
            1.0,
            &ProbeOptions {
                ray_budget: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(full.rays.len(), 14);
        assert_eq!(reduced.rays.len(), 3);
        assert_eq!(full.estimated_rank, reduced.estimated_rank);
    }

    #[test]
    fn c1_for_linear_is_one_over_m() {
        for m in 2..=5 {
            let op = OperatorSpec::new(Family::Linear, m, 1).unwrap();
            let c = c1_estimate(&op, 2.0, m, &ProbeOptions::default()).unwrap();
            assert!((c.value - 1.0 / m as f64).abs() < 1e-14);
            assert!(!c.flagged);
        }
    }

    #[test]
    fn c1_flags_overstated_rank() {
        let op = sigma_root(3, 3);
        let ok = c1_estimate(&op, 1.0, 1, &ProbeOptions::default()).unwrap();
        assert!((ok.value - 1.0).abs() < 1e-12);
        let bad = c1_estimate(&op, 1.0, 2, &ProbeOptions::default()).unwrap();
        assert!(bad.flagged);
        assert_eq!(bad.value, 0.0);
    }

    #[test]
    fn sorted_ratio_arithmetic() {
        assert_eq!(sorted_gradient_ratio(&[3.0, 1.0, 2.0], 3), 1.0 / 6.0);
        assert_eq!(sorted_gradient_ratio(&[3.0, 1.0, 2.0], 2), 0.5);
        assert_eq!(sorted_gradient_ratio(&[3.0, 1.0, 2.0], 1), 1.0);
    }

    #[test]
    fn magnitudes_are_validated() {
        let op = sigma_root(2, 3);
        let opts = ProbeOptions {
            magnitudes: vec![1e3, 1e2, 1e6],
            ..Default::default()
        };
        assert!(matches!(rank_probe(&op, 1.0, &opts), Err(Error::Domain(_))));
        let opts = ProbeOptions {
            magnitudes: vec![1e2, 1e3],
            ..Default::default()
        };
        assert!(matches!(rank_probe(&op, 1.0, &opts), Err(Error::Domain(_))));
    }
}
