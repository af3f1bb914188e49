//! Symmetric-function layer: the index family of K-subsets, the partial-sum
//! map `Λ`, elementary symmetric functions and the catalogued operator
//! families `f` together with their first and second derivatives.
//!
//! Index sets are stored 0-based; the lexicographic order matches the usual
//! 1-based listing `(1,2), (1,3), (2,3), ...`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest complex dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 16;

/// All K-element subsets of `{0..n}` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSetFamily {
    n: usize,
    k: usize,
    sets: Vec<Vec<usize>>,
    /// `containing[i]` lists the positions `j` with `i ∈ I_j`.
    containing: Vec<Vec<usize>>,
}

impl IndexSetFamily {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::domain(format!("dimension n = {n} outside 1..={MAX_DIM}")));
        }
        if k == 0 || k > n {
            return Err(Error::domain(format!("subset size K = {k} outside 1..={n}")));
        }
        let mut sets = Vec::new();
        let mut current: Vec<usize> = (0..k).collect();
        loop {
            sets.push(current.clone());
            // advance to the next combination in lexicographic order
            let mut pos = k;
            while pos > 0 && current[pos - 1] == n - k + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            current[pos - 1] += 1;
            for q in pos..k {
                current[q] = current[q - 1] + 1;
            }
        }
        let mut containing = vec![Vec::new(); n];
        for (j, set) in sets.iter().enumerate() {
            for &i in set {
                containing[i].push(j);
            }
        }
        Ok(Self {
            n,
            k,
            sets,
            containing,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Cardinality `N = n! / (K! (n-K)!)`.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Positions of the sets that contain index `i`.
    pub fn containing(&self, i: usize) -> &[usize] {
        &self.containing[i]
    }

    /// Number of sets each index belongs to, `N K / n`.
    pub fn multiplicity(&self) -> usize {
        self.len() * self.k / self.n
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::domain(format!(
                "eigenvalue vector has length {len}, index family expects {}",
                self.n
            )));
        }
        Ok(())
    }

    /// `Λ_j(λ) = Σ_{i ∈ I_j} λ_i`.
    pub fn lambda_map(&self, lambda: &[f64]) -> Result<LambdaVector> {
        self.check_dim(lambda.len())?;
        Ok(LambdaVector(
            self.sets
                .iter()
                .map(|set| set.iter().map(|&i| lambda[i]).sum())
                .collect(),
        ))
    }

    /// Sums over the complements, `Λ'_j(λ) = Σ_{i ∉ I_j} λ_i`.
    pub fn lambda_prime(&self, lambda: &[f64]) -> Result<LambdaVector> {
        self.check_dim(lambda.len())?;
        let mut member = vec![false; self.n];
        Ok(LambdaVector(
            self.sets
                .iter()
                .map(|set| {
                    member.iter_mut().for_each(|m| *m = false);
                    set.iter().for_each(|&i| member[i] = true);
                    (0..self.n).filter(|&i| !member[i]).map(|i| lambda[i]).sum()
                })
                .collect(),
        ))
    }

    /// Recovers `σ_1(λ)` from `Λ(λ)` through the column-sum identity.
    pub fn trace_from_lambda(&self, big_lambda: &[f64]) -> f64 {
        big_lambda.iter().sum::<f64>() * self.n as f64 / (self.len() * self.k) as f64
    }
}

pub fn enumerate_index_sets(n: usize, k: usize) -> Result<IndexSetFamily> {
    IndexSetFamily::new(n, k)
}

/// Eigenvalues `λ ∈ ℝⁿ` of a Hermitian form with respect to `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint(pub Vec<f64>);

/// Image of a [`SpectralPoint`] under `Λ`, ordered like the index family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaVector(pub Vec<f64>);

impl Deref for SpectralPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for LambdaVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn lambda_map(lambda: &SpectralPoint, family: &IndexSetFamily) -> Result<LambdaVector> {
    family.lambda_map(lambda)
}

pub fn lambda_prime(lambda: &SpectralPoint, family: &IndexSetFamily) -> Result<LambdaVector> {
    family.lambda_prime(lambda)
}

/// `e_0, ..., e_kmax` of `v` by the characteristic-polynomial recurrence
/// `∏(1 + v_i x)`.
pub fn elementary_symmetric(v: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (i, &x) in v.iter().enumerate() {
        for j in (1..=kmax.min(i + 1)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

pub fn sigma_k(k: usize, v: &[f64]) -> Result<f64> {
    if k == 0 || k > v.len() {
        return Err(Error::domain(format!("sigma_{k} undefined on R^{}", v.len())));
    }
    Ok(elementary_symmetric(v, k)[k])
}

/// `∂σ_k/∂v_i = σ_{k-1}(v | i)`, assembled from prefix and suffix
/// polynomials so no cancellation occurs.
pub fn sigma_k_gradient(k: usize, v: &[f64]) -> Vec<f64> {
    let m = v.len();
    debug_assert!(k >= 1 && k <= m);
    let deg = k - 1;
    let mut prefix = vec![0.0; (m + 1) * k];
    prefix[0] = 1.0;
    for i in 0..m {
        let (done, rest) = prefix.split_at_mut((i + 1) * k);
        let prev = &done[i * k..];
        let next = &mut rest[..k];
        next.copy_from_slice(prev);
        for j in (1..=deg).rev() {
            next[j] += v[i] * prev[j - 1];
        }
    }
    let mut suffix = vec![0.0; (m + 1) * k];
    suffix[m * k] = 1.0;
    for i in (0..m).rev() {
        let (head, tail) = suffix.split_at_mut((i + 1) * k);
        let prev = &tail[..k];
        let next = &mut head[i * k..];
        next.copy_from_slice(prev);
        for j in (1..=deg).rev() {
            next[j] += v[i] * prev[j - 1];
        }
    }
    (0..m)
        .map(|i| {
            let p = &prefix[i * k..(i + 1) * k];
            let s = &suffix[(i + 1) * k..(i + 2) * k];
            (0..=deg).map(|j| p[j] * s[deg - j]).sum()
        })
        .collect()
}

/// Coefficients `(c0, c1, c2)` of `σ_k(v + s d) = c0 + c1 s + c2 s² + O(s³)`.
pub fn sigma_k_directional(k: usize, v: &[f64], d: &[f64]) -> (f64, f64, f64) {
    let mut e = vec![[0.0f64; 3]; k + 1];
    e[0][0] = 1.0;
    for (i, (&x, &dx)) in v.iter().zip(d).enumerate() {
        for j in (1..=k.min(i + 1)).rev() {
            let p = e[j - 1];
            e[j][0] += x * p[0];
            e[j][1] += x * p[1] + dx * p[0];
            e[j][2] += x * p[2] + dx * p[1];
        }
    }
    (e[k][0], e[k][1], e[k][2])
}

/// Value of `ρ_k` together with the `P_k` membership flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoValue {
    pub value: f64,
    pub in_cone: bool,
}

/// `ρ_k(λ) = ∏_{|I| = k} Σ_{i ∈ I} λ_i`.
pub fn rho_k(k: usize, lambda: &SpectralPoint) -> Result<RhoValue> {
    let family = IndexSetFamily::new(lambda.len(), k)?;
    let sums = family.lambda_map(lambda)?;
    Ok(RhoValue {
        value: sums.iter().product(),
        in_cone: sums.iter().all(|&s| s > 0.0),
    })
}

/// Catalogued concave, nondecreasing symmetric functions on `ℝ^N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Family {
    /// `σ_k^{1/k}` on the Garding cone `Γ_k ⊂ ℝ^N`. With `K = 1` this is
    /// `σ_k^{1/k}(λ)` directly.
    SigmaRoot { degree: usize },
    /// `log σ_N = Σ log Λ_j` on the positive orthant; `log ρ_K` in terms of `λ`.
    LogSigmaN,
    /// `σ_1` on the half space `{σ_1 > 0}`.
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub family: Family,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub level_shift: f64,
}

/// Operator `λ ↦ f(Λ(λ) - βΛ'(λ)) + level_shift`.
///
/// The `f_*` methods take the undeformed vector `Λ(λ)` and apply the
/// deformation through `Λ - βΛ' = (1+β)Λ - βσ_1(λ)·1`; gradients and
/// Hessian actions are those of `f` itself, evaluated at the deformed
/// argument. The `base_*` methods evaluate `f` on an arbitrary point of
/// `ℝ^N` with no deformation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "OperatorDescriptor", into = "OperatorDescriptor")]
pub struct OperatorSpec {
    family: Family,
    beta: f64,
    level_shift: f64,
    index: IndexSetFamily,
}

impl TryFrom<OperatorDescriptor> for OperatorSpec {
    type Error = Error;
    fn try_from(d: OperatorDescriptor) -> Result<Self> {
        Ok(OperatorSpec::new(d.family, d.n, d.k)?
            .with_beta(d.beta)?
            .with_level_shift(d.level_shift))
    }
}

impl From<OperatorSpec> for OperatorDescriptor {
    fn from(op: OperatorSpec) -> Self {
        op.descriptor()
    }
}

impl OperatorSpec {
    pub fn new(family: Family, n: usize, k: usize) -> Result<Self> {
        let index = IndexSetFamily::new(n, k)?;
        if let Family::SigmaRoot { degree } = family {
            if degree == 0 || degree > index.len() {
                return Err(Error::domain(format!(
                    "sigma_{degree} needs 1 <= degree <= N = {}",
                    index.len()
                )));
            }
        }
        Ok(Self {
            family,
            beta: 0.0,
            level_shift: 0.0,
            index,
        })
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::domain(format!("beta = {beta} must be finite and >= 0")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_level_shift(mut self, shift: f64) -> Self {
        self.level_shift = shift;
        self
    }

    pub fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            family: self.family,
            n: self.index.n(),
            k: self.index.k(),
            beta: self.beta,
            level_shift: self.level_shift,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.index.n()
    }

    pub fn k(&self) -> usize {
        self.index.k()
    }

    /// Ambient dimension `N` of the cone `Γ`.
    pub fn ambient_dim(&self) -> usize {
        self.index.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn level_shift(&self) -> f64 {
        self.level_shift
    }

    pub fn index(&self) -> &IndexSetFamily {
        &self.index
    }

    /// `sup_{∂Γ} f`, including the level shift.
    pub fn sup_boundary(&self) -> f64 {
        match self.family {
            Family::SigmaRoot { .. } | Family::Linear => self.level_shift,
            Family::LogSigmaN => f64::NEG_INFINITY,
        }
    }

    /// `sup_Γ f = lim f(t·1)`; unbounded for every catalogued family.
    pub fn sup_cone(&self) -> f64 {
        f64::INFINITY
    }

    /// Values of the inequalities defining `Γ` at `x ∈ ℝ^N`, each paired with
    /// a printable name. `x ∈ Γ` iff all are positive.
    pub fn cone_constraints(&self, x: &[f64]) -> Vec<(String, f64)> {
        match self.family {
            Family::SigmaRoot { degree } => {
                let e = elementary_symmetric(x, degree);
                (1..=degree).map(|j| (format!("sigma_{j}"), e[j])).collect()
            }
            Family::Linear => vec![("sigma_1".to_string(), x.iter().sum())],
            Family::LogSigmaN => x
                .iter()
                .enumerate()
                .map(|(j, &v)| (format!("Lambda_{}", j + 1), v))
                .collect(),
        }
    }

    /// Signed distance proxy to `∂Γ`, normalised so that `margin(t·1) = t`.
    /// Positive exactly on `Γ`.
    pub fn base_margin(&self, x: &[f64]) -> f64 {
        let m = x.len();
        match self.family {
            Family::SigmaRoot { degree } => {
                let e = elementary_symmetric(x, degree);
                (1..=degree)
                    .map(|j| {
                        let scaled = e[j] / binomial(m, j);
                        scaled.signum() * scaled.abs().powf(1.0 / j as f64)
                    })
                    .fold(f64::INFINITY, f64::min)
            }
            Family::Linear => x.iter().sum::<f64>() / m as f64,
            Family::LogSigmaN => x.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn check_base(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::domain(format!(
                "vector has length {}, operator expects N = {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        if let Some((name, value)) = self
            .cone_constraints(x)
            .into_iter()
            .find(|(_, v)| !(*v > 0.0))
        {
            return Err(Error::Admissibility {
                constraint: format!("{name}(Lambda) > 0 violated"),
                value,
                location: None,
            });
        }
        Ok(())
    }

    /// `f(x) + level_shift` for `x ∈ Γ ⊂ ℝ^N`.
    pub fn base_value(&self, x: &[f64]) -> Result<f64> {
        self.check_base(x)?;
        Ok(self.raw_value(x) + self.level_shift)
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        match self.family {
            Family::SigmaRoot { degree } => {
                elementary_symmetric(x, degree)[degree].powf(1.0 / degree as f64)
            }
            Family::Linear => x.iter().sum(),
            Family::LogSigmaN => x.iter().map(|v| v.ln()).sum(),
        }
    }

    /// `Df(x)`.
    pub fn base_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_base(x)?;
        Ok(self.raw_gradient(x))
    }

    fn raw_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.family {
            Family::SigmaRoot { degree } => {
                let s = elementary_symmetric(x, degree)[degree];
                let scale = s.powf(1.0 / degree as f64 - 1.0) / degree as f64;
                sigma_k_gradient(degree, x)
                    .into_iter()
                    .map(|g| g * scale)
                    .collect()
            }
            Family::Linear => vec![1.0; x.len()],
            Family::LogSigmaN => x.iter().map(|v| 1.0 / v).collect(),
        }
    }

    /// `dᵀ D²f(x) d`.
    pub fn base_hessian_action(&self, x: &[f64], d: &[f64]) -> Result<f64> {
        self.check_base(x)?;
        if d.len() != x.len() {
            return Err(Error::domain("direction length does not match N"));
        }
        Ok(match self.family {
            Family::SigmaRoot { degree } => {
                let (s, s1, c2) = sigma_k_directional(degree, x, d);
                let p = 1.0 / degree as f64;
                let s2 = 2.0 * c2;
                p * s.powf(p - 1.0) * s2 + p * (p - 1.0) * s.powf(p - 2.0) * s1 * s1
            }
            Family::Linear => 0.0,
            Family::LogSigmaN => -x.iter().zip(d).map(|(v, dv)| dv * dv / (v * v)).sum::<f64>(),
        })
    }

    /// Applies the β-deformation to `Λ(λ)` in place.
    pub fn deform_in_place(&self, big_lambda: &mut [f64]) {
        if self.beta != 0.0 {
            let trace = self.index.trace_from_lambda(big_lambda);
            for v in big_lambda.iter_mut() {
                *v = (1.0 + self.beta) * *v - self.beta * trace;
            }
        }
    }

    fn deformed(&self, big_lambda: &LambdaVector) -> Result<Vec<f64>> {
        if big_lambda.len() != self.ambient_dim() {
            return Err(Error::domain(format!(
                "Lambda has length {}, operator expects N = {}",
                big_lambda.len(),
                self.ambient_dim()
            )));
        }
        let mut x = big_lambda.0.clone();
        self.deform_in_place(&mut x);
        Ok(x)
    }

    pub fn f_eval(&self, big_lambda: &LambdaVector) -> Result<f64> {
        self.base_value(&self.deformed(big_lambda)?)
    }

    pub fn f_grad(&self, big_lambda: &LambdaVector) -> Result<Vec<f64>> {
        self.base_gradient(&self.deformed(big_lambda)?)
    }

    pub fn f_hessian_action(&self, big_lambda: &LambdaVector, direction: &[f64]) -> Result<f64> {
        self.base_hessian_action(&self.deformed(big_lambda)?, direction)
    }

    /// Deformed partial-sum vector of an eigenvalue vector.
    pub fn cone_point(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.index.lambda_map(lambda)?.0;
        self.deform_in_place(&mut x);
        Ok(x)
    }

    /// `F(λ) = f(Λ(λ) - βΛ'(λ)) + level_shift`.
    pub fn value_at(&self, lambda: &[f64]) -> Result<f64> {
        self.base_value(&self.cone_point(lambda)?)
    }

    /// Margin of `λ` with respect to the operator's admissible set.
    pub fn margin_at(&self, lambda: &[f64]) -> Result<f64> {
        Ok(self.base_margin(&self.cone_point(lambda)?))
    }

    /// Value and all first-order data of `F` at `λ`.
    pub fn partials_at(&self, lambda: &[f64]) -> Result<EigenPartials> {
        let x = self.cone_point(lambda)?;
        self.check_base(&x)?;
        let value = self.raw_value(&x) + self.level_shift;
        let f_lambda = self.raw_gradient(&x);
        let total: f64 = f_lambda.iter().sum();
        let n = self.n();
        let mut inner = vec![0.0; n];
        for (a, slot) in inner.iter_mut().enumerate() {
            *slot = self.index.containing(a).iter().map(|&j| f_lambda[j]).sum();
        }
        let g = inner
            .iter()
            .map(|s| (1.0 + self.beta) * s - self.beta * total)
            .collect();
        Ok(EigenPartials {
            value,
            margin: self.base_margin(&x),
            f_lambda,
            inner,
            g,
        })
    }

    /// `f(Λ(t·1))`, the value on the diagonal ray.
    pub fn diagonal_value(&self, t: f64) -> Result<f64> {
        self.value_at(&vec![t; self.n()])
    }
}

/// First-order data of `F = f∘(Λ - βΛ')` at one eigenvalue vector.
#[derive(Debug, Clone)]
pub struct EigenPartials {
    pub value: f64,
    /// `base_margin` of the deformed partial-sum vector.
    pub margin: f64,
    /// `f_{Λ_l}`, `l = 1..N`.
    pub f_lambda: Vec<f64>,
    /// `Σ_{I ∋ a} f_{Λ_I}` for each eigenvalue index `a`.
    pub inner: Vec<f64>,
    /// `∂F/∂λ_a`.
    pub g: Vec<f64>,
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
