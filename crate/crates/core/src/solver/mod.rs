//! Nonlinear solvers for `F(𝔤[u]) = ψ` on the model geometries.
//!
//! * Periodic problems on the torus are solved by continuation in `t` along
//!   `F(𝔤[u] + tAω) = e^{tu}(tH + (1-t)ψ)`, starting from the exact solution
//!   `u = 0` at `t = 1`, followed by a direct solve of `F(𝔤[u]) = e^b ψ` for
//!   the pair `(u, b)` with a mean-zero gauge.
//! * Dirichlet problems on the interval are solved by Newton's method from a
//!   subsolution with a direct tridiagonal linear solve.
//!
//! Every Newton step is safeguarded: a step is accepted only if the trial
//! iterate is admissible at every grid point and lowers the max-norm residual.

pub mod barrier;
pub mod krylov;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermfield::{
    self, assemble_g, complex_hessian, linearize, HermitianField, Linearization, ModelGeometry,
    ScalarField,
};
use crate::symcalc::OperatorSpec;

pub use barrier::{
    barrier_closed_form, barrier_newton, barrier_residual, barrier_solve, riccati_oracle,
    BarrierOutcome, TraceBound,
};

/// Slack allowed when checking the tracked sup/inf bounds.
pub const BOUND_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Closed torus; the equation carries an unknown constant `e^b`.
    PeriodicWithConstant,
    /// Interval with boundary values taken from `boundary` at the end nodes.
    Dirichlet { boundary: ScalarField },
}

/// A fully validated problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub geometry: ModelGeometry,
    pub operator: OperatorSpec,
    pub x: HermitianField,
    pub psi: ScalarField,
    pub mode: Mode,
    pub subsolution: Option<ScalarField>,
}

impl ProblemSpec {
    pub fn new(
        geometry: ModelGeometry,
        operator: OperatorSpec,
        x: HermitianField,
        psi: ScalarField,
        mode: Mode,
        subsolution: Option<ScalarField>,
    ) -> Result<Self> {
        let spec = Self {
            geometry,
            operator,
            x,
            psi,
            mode,
            subsolution,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let geo = &self.geometry;
        let n = geo.n();
        let npts = geo.npts();
        if self.operator.n() != n {
            return Err(Error::config(format!(
                "operator has n = {}, geometry has n = {n}",
                self.operator.n()
            )));
        }
        if self.x.n != n || self.x.data.len() != npts * n * n {
            return Err(Error::config("X field does not match the grid"));
        }
        if self.x.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::config("X field has non-finite entries"));
        }
        if self.x.hermitian_defect() > 1e-12 {
            return Err(Error::config("X field is not Hermitian"));
        }
        if self.psi.len() != npts {
            return Err(Error::config("psi field does not match the grid"));
        }
        if let Some(v) = self.psi.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("psi must be finite, found {v}")));
        }
        let inf_psi = self.psi.min();
        let sup_boundary = self.operator.sup_boundary();
        if !(sup_boundary < inf_psi) {
            return Err(Error::config(format!(
                "condition sup_∂Γ f < inf ψ violated: sup_∂Γ f = {sup_boundary}, inf ψ = {inf_psi}"
            )));
        }
        if !(inf_psi > 0.0) {
            return Err(Error::config(format!("psi must be positive, found {inf_psi}")));
        }
        match &self.mode {
            Mode::PeriodicWithConstant => {
                if !geo.is_torus() {
                    return Err(Error::config("periodic mode needs a torus geometry"));
                }
            }
            Mode::Dirichlet { boundary } => {
                if geo.is_torus() {
                    return Err(Error::config("Dirichlet mode needs an interval geometry"));
                }
                if boundary.len() != npts || boundary.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("boundary field does not match the grid"));
                }
            }
        }
        if let Some(sub) = &self.subsolution {
            self.check_subsolution(sub)?;
        }
        Ok(())
    }

    fn check_subsolution(&self, sub: &ScalarField) -> Result<()> {
        let geo = &self.geometry;
        if sub.len() != geo.npts() {
            return Err(Error::config("subsolution does not match the grid"));
        }
        let interior = !geo.is_torus();
        let g = assemble_g(&complex_hessian(geo, sub)?, &self.x)?;
        let lin = linearize(geo, &self.operator, &g, 0.0, interior).map_err(|e| {
            Error::config(format!("subsolution is not admissible: {e}"))
        })?;
        for idx in 0..geo.npts() {
            if interior && geo.is_boundary(idx) {
                if let Mode::Dirichlet { boundary } = &self.mode {
                    if (sub.values[idx] - boundary.values[idx]).abs() > 1e-12 {
                        return Err(Error::config(format!(
                            "subsolution differs from boundary data at grid index {idx}"
                        )));
                    }
                }
                continue;
            }
            let psi = self.psi.values[idx];
            if lin.value[idx] < psi - 1e-12 * (1.0 + psi.abs()) {
                return Err(Error::config(format!(
                    "subsolution violates f(Λ(𝔤[ū])) ≥ ψ at grid index {idx}: {} < {psi}",
                    lin.value[idx]
                )));
            }
        }
        Ok(())
    }

    /// `inf ψ - sup_∂Γ f`, the width of the admissible range window.
    pub fn range_margin(&self) -> f64 {
        self.psi.min() - self.operator.sup_boundary()
    }

    /// The same problem sampled on a nested coarser torus grid.
    pub fn restrict_to(&self, points_per_axis: usize) -> Result<Self> {
        let coarse = ModelGeometry::torus(self.geometry.n(), points_per_axis)?
            .with_metric(self.geometry.omega().to_vec())?;
        Ok(Self {
            x: hermfield::restrict_hermitian(&coarse, &self.geometry, &self.x)?,
            psi: hermfield::restrict(&coarse, &self.geometry, &self.psi)?,
            geometry: coarse,
            operator: self.operator.clone(),
            mode: self.mode.clone(),
            subsolution: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Max-norm residual at which Newton stops.
    pub tolerance: f64,
    pub max_newton_iterations: usize,
    /// Initial step length of the line search.
    pub damping: f64,
    /// Smallest continuation step and the `t` at which the solver switches
    /// to the `(u, b)` formulation.
    pub homotopy_floor: f64,
    pub initial_dt: f64,
    pub gmres_restart: usize,
    pub gmres_max_iterations: usize,
    /// Runs the continuation on this many points per axis and only the final
    /// `(u, b)` solve on the full grid.
    pub coarse_points: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_newton_iterations: 40,
            damping: 1.0,
            homotopy_floor: 1e-4,
            initial_dt: 0.25,
            gmres_restart: 30,
            gmres_max_iterations: 300,
            coarse_points: None,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("solver.damping must lie in (0, 1]"));
        }
        if !(self.homotopy_floor > 0.0 && self.homotopy_floor < 1.0) {
            return Err(Error::config("solver.homotopy_floor must lie in (0, 1)"));
        }
        if !(self.initial_dt > 0.0 && self.initial_dt <= 1.0) {
            return Err(Error::config("solver.initial_dt must lie in (0, 1]"));
        }
        if self.max_newton_iterations == 0 || self.gmres_restart == 0 || self.gmres_max_iterations == 0 {
            return Err(Error::config("solver iteration limits must be positive"));
        }
        Ok(())
    }
}

/// One accepted Newton iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub t: f64,
    /// Counter of Newton solves within one run.
    pub solve: usize,
    pub iteration: usize,
    pub residual: f64,
    /// Minimum admissibility margin over the grid.
    pub margin: f64,
}

/// Values tracked along the continuation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub t: f64,
    /// `t·sup u`.
    pub t_sup_u: f64,
    /// `-t·inf u`.
    pub neg_t_inf_u: f64,
    /// `sup log(F(X + Aω)/ψ^t)`.
    pub upper_constant: f64,
    /// `-inf log(F(X)/ψ^t)`, `+∞` when `X` itself is not admissible.
    pub lower_constant: f64,
    pub within_bounds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopyConstants {
    /// Shift `A` with `X + Aω` admissible and `H = F(X + Aω) > 0`.
    pub a: f64,
    pub h_min: f64,
    pub h_max: f64,
}

/// Current iterate and solve history.
#[derive(Debug, Clone, Serialize)]
pub struct SolveState {
    pub u: ScalarField,
    pub b: f64,
    pub t: f64,
    pub residual_history: Vec<ResidualRecord>,
    pub admissibility_margin: f64,
    pub bound_series: Vec<BoundRecord>,
    pub homotopy: Option<HomotopyConstants>,
    /// `min(u - ū)` after a Dirichlet solve.
    pub comparison_min: Option<f64>,
    pub final_residual: f64,
    pub newton_iterations: usize,
    pub events: Vec<String>,
    #[serde(skip)]
    next_solve: usize,
}

impl SolveState {
    pub fn new(u: ScalarField, b: f64, t: f64) -> Self {
        Self {
            u,
            b,
            t,
            residual_history: Vec::new(),
            admissibility_margin: f64::NAN,
            bound_series: Vec::new(),
            homotopy: None,
            comparison_min: None,
            final_residual: f64::NAN,
            newton_iterations: 0,
            events: Vec::new(),
            next_solve: 0,
        }
    }

    /// Whether the recorded residuals decrease strictly within every Newton solve.
    pub fn residuals_monotone(&self) -> bool {
        self.residual_history.windows(2).all(|w| {
            w[0].solve != w[1].solve || w[1].residual < w[0].residual
        })
    }

    /// Smallest admissibility margin over all recorded iterates.
    pub fn min_recorded_margin(&self) -> f64 {
        self.residual_history
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounds_respected(&self) -> bool {
        self.bound_series.iter().all(|b| b.within_bounds)
    }

    /// `t` values visited by the continuation.
    pub fn t_path(&self) -> Vec<f64> {
        self.bound_series.iter().map(|b| b.t).collect()
    }

    fn note(&mut self, msg: String) {
        log::warn!("{msg}");
        self.events.push(msg);
    }
}

#[derive(Debug, Clone)]
enum Kind {
    /// The unknowns are `v` with `u = v + offset`.
    Homotopy { t: f64, a: f64, h: Vec<f64>, offset: f64 },
    Constant,
    Dirichlet { boundary: Vec<f64> },
}

/// The discrete nonlinear system behind one Newton solve.
struct System<'a> {
    spec: &'a ProblemSpec,
    kind: Kind,
}

struct Evaluation {
    residual: Vec<f64>,
    lin: Linearization,
    /// `∂R_i/∂u_i` from zero-order terms.
    zero_order: Vec<f64>,
    /// `∂R_i/∂b` in the constant formulation.
    db: Vec<f64>,
}

impl Evaluation {
    fn norm(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    fn worst_point(&self) -> usize {
        ScalarField::new(self.residual.clone()).argmax_abs()
    }
}

impl<'a> System<'a> {
    fn npts(&self) -> usize {
        self.spec.geometry.npts()
    }

    fn dim(&self) -> usize {
        match self.kind {
            Kind::Constant => self.npts() + 1,
            _ => self.npts(),
        }
    }

    fn t(&self) -> f64 {
        match self.kind {
            Kind::Homotopy { t, .. } => t,
            _ => 0.0,
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let spec = self.spec;
        let geo = &spec.geometry;
        let npts = self.npts();
        let u = ScalarField::new(x[..npts].to_vec());
        let g = assemble_g(&complex_hessian(geo, &u)?, &spec.x)?;
        let psi = &spec.psi.values;
        match &self.kind {
            Kind::Homotopy { t, a, h, offset } => {
                let lin = linearize(geo, &spec.operator, &g, t * a, false)?;
                let mut residual = vec![0.0; npts];
                let mut zero_order = vec![0.0; npts];
                for i in 0..npts {
                    let target = (t * (u.values[i] + offset)).exp() * (t * h[i] + (1.0 - t) * psi[i]);
                    residual[i] = lin.value[i] - target;
                    zero_order[i] = -t * target;
                }
                Ok(Evaluation {
                    residual,
                    lin,
                    zero_order,
                    db: Vec::new(),
                })
            }
            Kind::Constant => {
                let b = x[npts];
                let lin = linearize(geo, &spec.operator, &g, 0.0, false)?;
                let eb = b.exp();
                let mut residual: Vec<f64> =
                    (0..npts).map(|i| lin.value[i] - eb * psi[i]).collect();
                residual.push(u.mean());
                Ok(Evaluation {
                    residual,
                    lin,
                    zero_order: vec![0.0; npts],
                    db: psi.iter().map(|p| -eb * p).collect(),
                })
            }
            Kind::Dirichlet { boundary } => {
                let lin = linearize(geo, &spec.operator, &g, 0.0, true)?;
                let residual = (0..npts)
                    .map(|i| {
                        if geo.is_boundary(i) {
                            u.values[i] - boundary[i]
                        } else {
                            lin.value[i] - psi[i]
                        }
                    })
                    .collect();
                Ok(Evaluation {
                    residual,
                    lin,
                    zero_order: vec![0.0; npts],
                    db: Vec::new(),
                })
            }
        }
    }

    /// Tikhonov shift used when the coefficients degenerate somewhere.
    fn regularization(&self, eval: &Evaluation) -> f64 {
        let n = eval.lin.coeffs.n;
        let mut degenerate = false;
        let mut trace_sum = 0.0;
        let mut count = 0usize;
        for (idx, m) in eval.lin.coeffs.data.chunks(n * n).enumerate() {
            if self.spec.geometry.is_boundary(idx) && !self.spec.geometry.is_torus() {
                continue;
            }
            let trace: f64 = (0..n).map(|i| m[i * n + i].re).sum();
            let min_diag = (0..n).map(|i| m[i * n + i].re).fold(f64::INFINITY, f64::min);
            if min_diag < 1e-12 * trace {
                degenerate = true;
            }
            trace_sum += trace;
            count += 1;
        }
        if degenerate {
            1e-10 * trace_sum / count.max(1) as f64
        } else {
            0.0
        }
    }

    /// Approximately solves `J δ = rhs`.
    fn solve_linear(
        &self,
        eval: &Evaluation,
        rhs: &[f64],
        rtol: f64,
        tau: f64,
        opts: &SolverOptions,
    ) -> Result<Vec<f64>> {
        match self.kind {
            Kind::Dirichlet { .. } => self.solve_tridiagonal(eval, rhs, tau),
            _ => self.solve_krylov(eval, rhs, rtol, tau, opts),
        }
    }

    fn solve_tridiagonal(&self, eval: &Evaluation, rhs: &[f64], tau: f64) -> Result<Vec<f64>> {
        let geo = &self.spec.geometry;
        let m = self.npts();
        let h = geo.spacing();
        let mut lower = vec![0.0; m];
        let mut diag = vec![1.0; m];
        let mut upper = vec![0.0; m];
        for i in 0..m {
            if geo.is_boundary(i) {
                continue;
            }
            let c = 0.25 * eval.lin.coeffs.data[i].re / (h * h);
            lower[i] = c;
            upper[i] = c;
            diag[i] = -2.0 * c + eval.zero_order[i] - tau;
        }
        krylov::solve_tridiagonal(&lower, &diag, &upper, rhs)
    }

    fn solve_krylov(
        &self,
        eval: &Evaluation,
        rhs: &[f64],
        rtol: f64,
        tau: f64,
        opts: &SolverOptions,
    ) -> Result<Vec<f64>> {
        let geo = &self.spec.geometry;
        let spectral = geo.spectral().expect("torus geometry");
        let npts = self.npts();
        let n = geo.n();
        let constant = matches!(self.kind, Kind::Constant);

        // constant-coefficient preconditioner symbol
        let mut mean_g = vec![Complex64::new(0.0, 0.0); n * n];
        for m in eval.lin.coeffs.data.chunks(n * n) {
            mean_g.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        }
        mean_g.iter_mut().for_each(|a| *a /= npts as f64);
        let mean_c = eval.zero_order.iter().sum::<f64>() / npts as f64 - tau;
        let symbol: Vec<f64> = (0..npts)
            .map(|k| spectral.contracted_symbol(k, &mean_g) + mean_c)
            .collect();
        let mean_db = if constant {
            eval.db.iter().sum::<f64>() / npts as f64
        } else {
            0.0
        };

        let mut work = vec![0.0; npts];
        let apply = |v: &[f64], out: &mut [f64]| {
            hermfield::apply_linearization(geo, &eval.lin.coeffs, &v[..npts], &mut work);
            for i in 0..npts {
                out[i] = work[i] + (eval.zero_order[i] - tau) * v[i];
            }
            if constant {
                let vb = v[npts];
                for i in 0..npts {
                    out[i] += eval.db[i] * vb;
                }
                out[npts] = v[..npts].iter().sum::<f64>() / npts as f64;
            }
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); npts];
        let precondition = |r: &[f64], out: &mut [f64]| {
            buf.iter_mut()
                .zip(&r[..npts])
                .for_each(|(z, v)| *z = Complex64::new(*v, 0.0));
            spectral.forward(&mut buf);
            let mean_r = buf[0].re / npts as f64;
            for (k, z) in buf.iter_mut().enumerate() {
                if k == 0 && constant {
                    *z = Complex64::new(r[npts] * npts as f64, 0.0);
                } else {
                    *z /= symbol[k];
                }
            }
            spectral.inverse(&mut buf);
            out[..npts].iter_mut().zip(&buf).for_each(|(o, z)| *o = z.re);
            if constant {
                out[npts] = mean_r / mean_db;
            }
        };
        let mut x = vec![0.0; self.dim()];
        let outcome = krylov::gmres(
            apply,
            precondition,
            rhs,
            &mut x,
            rtol,
            opts.gmres_restart,
            opts.gmres_max_iterations,
        );
        log::debug!(
            "gmres: {} iterations, relative residual {:e}",
            outcome.iterations,
            outcome.relative_residual
        );
        if !(outcome.relative_residual < 0.5) {
            return Err(Error::LinearSolveFailure(format!(
                "GMRES reached relative residual {:e} after {} iterations",
                outcome.relative_residual, outcome.iterations
            )));
        }
        Ok(x)
    }
}

/// Runs damped Newton on `system` from `x`, recording accepted iterates.
fn newton_solve(
    system: &System,
    x: Vec<f64>,
    opts: &SolverOptions,
    state: &mut SolveState,
) -> Result<(Vec<f64>, Evaluation)> {
    let solve = state.next_solve;
    state.next_solve += 1;
    let mut x = x;
    let mut eval = system.evaluate(&x)?;
    let mut rnorm = eval.norm();
    state.residual_history.push(ResidualRecord {
        t: system.t(),
        solve,
        iteration: 0,
        residual: rnorm,
        margin: eval.lin.min_margin(),
    });
    let mut warned = false;
    for iteration in 1..=opts.max_newton_iterations {
        if rnorm <= opts.tolerance {
            return Ok((x, eval));
        }
        let (next, next_eval, tau) = damped_step(system, &x, &eval, opts.damping, opts)?;
        if tau > 0.0 && !warned {
            warned = true;
            state.note(format!(
                "degenerate coefficients at t = {}: Tikhonov shift {tau:e} applied",
                system.t()
            ));
        }
        x = next;
        eval = next_eval;
        rnorm = eval.norm();
        state.newton_iterations += 1;
        state.residual_history.push(ResidualRecord {
            t: system.t(),
            solve,
            iteration,
            residual: rnorm,
            margin: eval.lin.min_margin(),
        });
    }
    if rnorm <= opts.tolerance {
        Ok((x, eval))
    } else {
        Err(Error::NewtonStall {
            worst_point: eval.worst_point(),
            residual: rnorm,
        })
    }
}

/// One safeguarded Newton step; returns the new iterate, its evaluation and
/// the Tikhonov shift used.
fn damped_step(
    system: &System,
    x: &[f64],
    eval: &Evaluation,
    damping: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Evaluation, f64)> {
    let rnorm = eval.norm();
    let tau = system.regularization(eval);
    let rhs: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
    let forcing = rnorm.clamp(1e-12, 1e-2);
    let delta = system.solve_linear(eval, &rhs, forcing, tau, opts)?;
    let mut step = damping;
    while step >= 2f64.powi(-30) {
        let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
        match system.evaluate(&trial) {
            Ok(e) if e.norm() < rnorm => return Ok((trial, e, tau)),
            Ok(_) | Err(Error::Admissibility { .. }) => step *= 0.5,
            Err(other) => return Err(other),
        }
    }
    Err(Error::NewtonStall {
        worst_point: eval.worst_point(),
        residual: rnorm,
    })
}

/// Pointwise `F(X + Aω)` and `A`, doubling `A` until the shifted field is
/// admissible with positive values.
pub fn homotopy_constants(spec: &ProblemSpec) -> Result<(HomotopyConstants, Vec<f64>)> {
    let geo = &spec.geometry;
    let s = hermfield::spectral_decompose(geo, &spec.x)?;
    let radius = s.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut a = 1.0 + radius;
    for _ in 0..64 {
        if let Ok(lin) = linearize(geo, &spec.operator, &spec.x, a, false) {
            if lin.value.iter().all(|v| *v > 0.0) {
                let h_min = lin.value.iter().copied().fold(f64::INFINITY, f64::min);
                let h_max = lin.value.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                return Ok((HomotopyConstants { a, h_min, h_max }, lin.value));
            }
        }
        a *= 2.0;
    }
    Err(Error::config("no shift A makes F(X + Aω) positive"))
}

/// Pointwise residual of the equation in the state's current formulation.
pub fn residual(spec: &ProblemSpec, state: &SolveState) -> Result<ScalarField> {
    let system = system_for(spec, state)?;
    let eval = system.evaluate(&unknowns(&system, state))?;
    let mut r = eval.residual;
    r.truncate(spec.geometry.npts());
    Ok(ScalarField::new(r))
}

fn system_for<'a>(spec: &'a ProblemSpec, state: &SolveState) -> Result<System<'a>> {
    let kind = match &spec.mode {
        Mode::Dirichlet { boundary } => Kind::Dirichlet {
            boundary: boundary.values.clone(),
        },
        Mode::PeriodicWithConstant if state.t > 0.0 => {
            let (constants, h) = homotopy_constants(spec)?;
            let a = state.homotopy.map_or(constants.a, |c| c.a);
            let h = if (a - constants.a).abs() > 0.0 {
                linearize(&spec.geometry, &spec.operator, &spec.x, a, false)?.value
            } else {
                h
            };
            Kind::Homotopy {
                t: state.t,
                a,
                h,
                offset: 0.0,
            }
        }
        Mode::PeriodicWithConstant => Kind::Constant,
    };
    Ok(System { spec, kind })
}

fn unknowns(system: &System, state: &SolveState) -> Vec<f64> {
    let mut x = state.u.values.clone();
    if matches!(system.kind, Kind::Constant) {
        x.push(state.b);
    }
    x
}

/// One safeguarded Newton step on the state's current formulation.
pub fn newton_step(spec: &ProblemSpec, state: &SolveState, damping: f64) -> Result<SolveState> {
    let system = system_for(spec, state)?;
    let x = unknowns(&system, state);
    let eval = system.evaluate(&x)?;
    let mut next = state.clone();
    if eval.norm() == 0.0 {
        return Ok(next);
    }
    let opts = SolverOptions::default();
    let (x, e, _) = damped_step(&system, &x, &eval, damping, &opts)?;
    let npts = spec.geometry.npts();
    next.u = ScalarField::new(x[..npts].to_vec());
    if matches!(system.kind, Kind::Constant) {
        next.b = x[npts];
    }
    let solve = next.next_solve;
    next.residual_history.push(ResidualRecord {
        t: state.t,
        solve,
        iteration: next.residual_history.len(),
        residual: e.norm(),
        margin: e.lin.min_margin(),
    });
    next.final_residual = e.norm();
    next.admissibility_margin = e.lin.min_margin();
    next.newton_iterations += 1;
    Ok(next)
}

fn bound_record(
    t: f64,
    u: &ScalarField,
    h: &[f64],
    fx: Option<&[f64]>,
    psi: &[f64],
) -> BoundRecord {
    let psi_t = |i: usize| t * h[i] + (1.0 - t) * psi[i];
    let upper_constant = (0..psi.len())
        .map(|i| (h[i] / psi_t(i)).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let lower_constant = match fx {
        Some(fx) => -(0..psi.len())
            .map(|i| (fx[i] / psi_t(i)).ln())
            .fold(f64::INFINITY, f64::min),
        None => f64::INFINITY,
    };
    let t_sup_u = t * u.max();
    let neg_t_inf_u = -t * u.min();
    BoundRecord {
        t,
        t_sup_u,
        neg_t_inf_u,
        upper_constant,
        lower_constant,
        within_bounds: t_sup_u <= upper_constant + BOUND_TOLERANCE
            && neg_t_inf_u <= lower_constant + BOUND_TOLERANCE,
    }
}

/// Continuation solve of a periodic problem, ending with `sup u = 0`.
pub fn homotopy_solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<SolveState> {
    opts.validate()?;
    if spec.mode != Mode::PeriodicWithConstant {
        return Err(Error::config("homotopy_solve needs a periodic problem"));
    }
    if let Some(pc) = opts.coarse_points {
        let hermfield::GeometryKind::FlatTorus { points_per_axis, .. } = spec.geometry.kind() else {
            unreachable!("periodic problems live on the torus")
        };
        if pc < points_per_axis {
            return coarse_to_fine(spec, pc, opts);
        }
    }
    let geo = &spec.geometry;
    let npts = geo.npts();
    let (constants, h) = homotopy_constants(spec)?;
    let fx = linearize(geo, &spec.operator, &spec.x, 0.0, false)
        .ok()
        .map(|l| l.value)
        .filter(|v| v.iter().all(|f| *f > 0.0));
    let psi = &spec.psi.values;

    let mut state = SolveState::new(ScalarField::constant(npts, 0.0), 0.0, 1.0);
    state.homotopy = Some(constants);
    let mut t = 1.0;
    let system = System {
        spec,
        kind: Kind::Homotopy {
            t,
            a: constants.a,
            h: h.clone(),
            offset: 0.0,
        },
    };
    let (mut v, _) = newton_solve(&system, vec![0.0; npts], opts, &mut state)?;
    let mut offset = 0.0;
    let with_offset = |v: &[f64], offset: f64| ScalarField::new(v.iter().map(|x| x + offset).collect());
    state.bound_series.push(bound_record(t, &with_offset(&v, offset), &h, fx.as_deref(), psi));

    let mut dt = opts.initial_dt;
    let t_switch = opts.homotopy_floor;
    while t > t_switch {
        let t_new = (t - dt).max(t_switch);
        let v_mean = v.iter().sum::<f64>() / npts as f64;
        let new_offset = (offset + v_mean) * t / t_new;
        let guess: Vec<f64> = v.iter().map(|x| x - v_mean).collect();
        let system = System {
            spec,
            kind: Kind::Homotopy {
                t: t_new,
                a: constants.a,
                h: h.clone(),
                offset: new_offset,
            },
        };
        let before = state.newton_iterations;
        let checkpoint = state.residual_history.len();
        match newton_solve(&system, guess, opts, &mut state) {
            Ok((x, _)) => {
                let iterations = state.newton_iterations - before;
                t = t_new;
                v = x;
                offset = new_offset;
                let record = bound_record(t, &with_offset(&v, offset), &h, fx.as_deref(), psi);
                if !record.within_bounds {
                    state.note(format!(
                        "bound violated at t = {t}: t·sup u = {}, -t·inf u = {}, constants {} / {}",
                        record.t_sup_u, record.neg_t_inf_u, record.upper_constant, record.lower_constant
                    ));
                }
                state.bound_series.push(record);
                if iterations <= 3 {
                    dt *= 1.5;
                }
            }
            Err(
                e @ (Error::NewtonStall { .. }
                | Error::LinearSolveFailure(_)
                | Error::Admissibility { .. }),
            ) => {
                // discard the records of the rejected attempt
                state.residual_history.truncate(checkpoint);
                dt *= 0.5;
                log::info!("continuation step to t = {t_new} rejected ({e}); dt = {dt}");
                if dt < opts.homotopy_floor {
                    state.u = with_offset(&v, offset);
                    state.t = t;
                    return Err(Error::HomotopyStall {
                        t,
                        last_good: Box::new(state),
                    });
                }
            }
            Err(other) => return Err(other),
        }
    }

    let v_mean = v.iter().sum::<f64>() / npts as f64;
    let b0 = t * (offset + v_mean);
    let u0: Vec<f64> = v.iter().map(|x| x - v_mean).collect();
    finish_constant(spec, u0, b0, opts, state)
}

/// Solves the `(u, b)` system from the given start and applies `sup u = 0`.
fn finish_constant(
    spec: &ProblemSpec,
    u0: Vec<f64>,
    b0: f64,
    opts: &SolverOptions,
    mut state: SolveState,
) -> Result<SolveState> {
    let npts = spec.geometry.npts();
    let system = System {
        spec,
        kind: Kind::Constant,
    };
    let mut x0 = u0;
    x0.push(b0);
    let (x, eval) = match newton_solve(&system, x0, opts, &mut state) {
        Ok(v) => v,
        Err(e @ (Error::NewtonStall { .. } | Error::LinearSolveFailure(_))) => {
            state.note(format!("final (u, b) solve failed: {e}"));
            return Err(Error::HomotopyStall {
                t: state.t,
                last_good: Box::new(state),
            });
        }
        Err(e) => return Err(e),
    };
    let mut u = ScalarField::new(x[..npts].to_vec());
    let sup = u.max();
    u.values.iter_mut().for_each(|v| *v -= sup);
    state.u = u;
    state.b = x[npts];
    state.t = 0.0;
    state.final_residual = eval.residual[..npts].iter().fold(0.0, |m, r| m.max(r.abs()));
    state.admissibility_margin = eval.lin.min_margin();
    Ok(state)
}

fn coarse_to_fine(spec: &ProblemSpec, coarse_points: usize, opts: &SolverOptions) -> Result<SolveState> {
    let coarse = spec.restrict_to(coarse_points)?;
    let coarse_opts = SolverOptions {
        coarse_points: None,
        ..*opts
    };
    let coarse_state = homotopy_solve(&coarse, &coarse_opts)?;
    let u = hermfield::prolong(&coarse.geometry, &spec.geometry, &coarse_state.u)?;
    let mean = u.mean();
    let u0: Vec<f64> = u.values.iter().map(|v| v - mean).collect();
    let b0 = coarse_state.b;
    let mut state = coarse_state;
    state.events.push(format!(
        "continuation ran on {coarse_points} points per axis; final solve on the full grid"
    ));
    finish_constant(spec, u0, b0, opts, state)
}

/// Newton solve of a Dirichlet problem started from its subsolution.
pub fn dirichlet_solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<SolveState> {
    opts.validate()?;
    let Mode::Dirichlet { boundary } = &spec.mode else {
        return Err(Error::config("dirichlet_solve needs a Dirichlet problem"));
    };
    let sub = spec
        .subsolution
        .as_ref()
        .ok_or_else(|| Error::config("dirichlet_solve needs a subsolution"))?;
    let system = System {
        spec,
        kind: Kind::Dirichlet {
            boundary: boundary.values.clone(),
        },
    };
    let mut state = SolveState::new(sub.clone(), 0.0, 0.0);
    let (x, eval) = newton_solve(&system, sub.values.clone(), opts, &mut state)?;
    let comparison = x
        .iter()
        .zip(&sub.values)
        .map(|(u, s)| u - s)
        .fold(f64::INFINITY, f64::min);
    if comparison < -1e-10 {
        state.note(format!("comparison u ≥ ū violated: min(u - ū) = {comparison:e}"));
    }
    state.comparison_min = Some(comparison);
    state.final_residual = eval.norm();
    state.admissibility_margin = eval.lin.min_margin();
    state.u = ScalarField::new(x);
    Ok(state)
}

/// Builds the problem whose exact discrete solution is `u_star`.
///
/// `ψ = F(𝔤[u*])` is evaluated from `exact_hessian` when given (so that the
/// discretisation error of the solver becomes visible) and from the grid
/// Hessian otherwise. Torus geometries give a periodic problem; interval
/// geometries give a Dirichlet problem with boundary data `u*` and the
/// subsolution `u* + (x - a)(x - b)`.
pub fn mms_generate(
    geometry: &ModelGeometry,
    operator: &OperatorSpec,
    u_star: &ScalarField,
    x: &HermitianField,
    exact_hessian: Option<&HermitianField>,
) -> Result<ProblemSpec> {
    let hess = match exact_hessian {
        Some(h) => h.clone(),
        None => complex_hessian(geometry, u_star)?,
    };
    let g = assemble_g(&hess, x)?;
    let margins = hermfield::margins(geometry, operator, &g, 0.0);
    let (worst, &worst_margin) = margins
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::config("empty grid"))?;
    if !(worst_margin > 0.0) {
        let inadmissible = margins.iter().filter(|m| !(**m > 0.0)).count();
        return Err(Error::config(format!(
            "manufactured solution is not admissible: {inadmissible} grid points with margin <= 0, \
             worst margin {worst_margin:e} at grid index {worst}"
        )));
    }
    let psi = ScalarField::new(linearize(geometry, operator, &g, 0.0, false)?.value);
    if geometry.is_torus() {
        ProblemSpec::new(
            geometry.clone(),
            operator.clone(),
            x.clone(),
            psi,
            Mode::PeriodicWithConstant,
            None,
        )
    } else {
        let hermfield::GeometryKind::Interval { a, b, .. } = geometry.kind() else {
            unreachable!()
        };
        let sub = ScalarField::new(
            (0..geometry.npts())
                .map(|i| {
                    let xi = geometry.coords(i)[0];
                    let bump = if geometry.is_boundary(i) { 0.0 } else { (xi - a) * (xi - b) };
                    u_star.values[i] + bump
                })
                .collect(),
        );
        ProblemSpec::new(
            geometry.clone(),
            operator.clone(),
            x.clone(),
            psi,
            Mode::Dirichlet {
                boundary: u_star.clone(),
            },
            Some(sub),
        )
    }
}

/// Machine-readable summary of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport<'a> {
    pub mode: &'static str,
    pub b: f64,
    pub t_path: Vec<f64>,
    pub final_residual: f64,
    pub admissibility_margin: f64,
    pub newton_iterations: usize,
    pub residuals_monotone: bool,
    pub bounds_respected: bool,
    pub homotopy: Option<HomotopyConstants>,
    pub comparison_min: Option<f64>,
    pub residual_history: &'a [ResidualRecord],
    pub bound_series: &'a [BoundRecord],
    pub events: &'a [String],
}

impl SolveState {
    pub fn report(&self, spec: &ProblemSpec) -> SolveReport<'_> {
        SolveReport {
            mode: match spec.mode {
                Mode::PeriodicWithConstant => "periodic_with_constant",
                Mode::Dirichlet { .. } => "dirichlet",
            },
            b: self.b,
            t_path: self.t_path(),
            final_residual: self.final_residual,
            admissibility_margin: self.admissibility_margin,
            newton_iterations: self.newton_iterations,
            residuals_monotone: self.residuals_monotone(),
            bounds_respected: self.bounds_respected(),
            homotopy: self.homotopy,
            comparison_min: self.comparison_min,
            residual_history: &self.residual_history,
            bound_series: &self.bound_series,
            events: &self.events,
        }
    }
}
