//! The four subcommands. Each returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};

use plpde_core::conegeo::{c1_estimate, rank_condition_check, C1Estimate, RankConditionResult};
use plpde_core::estimates::{ellipticity_check, measure_level, Ball, EllipticityCheck, EstimateReport};
use plpde_core::hermfield::{io, GeometryKind, ModelGeometry, ScalarField};
use plpde_core::solver::{
    barrier_newton, barrier_solve, dirichlet_solve, homotopy_solve, BarrierOutcome, Mode, ProblemSpec,
    SolveReport, SolveState, SolverOptions, TraceBound,
};
use plpde_core::Error;
use serde::Serialize;

use crate::config::{self, LoadedConfig, Problem, PsiSpec, RunConfig};
use crate::output::OutputDir;
use crate::{CliError, EXIT_FAILED_CONDITION, EXIT_OK, EXIT_STALLED};

const BARRIER_NEWTON_TOLERANCE: f64 = 1e-10;
const BARRIER_NEWTON_ITERATIONS: usize = 100;

#[derive(Serialize)]
struct SolveOutput<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    /// `log(f(Λ(c·1))/ψ)` when `X = cω` and `ψ` is constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subsolution_curvature: Option<f64>,
    /// Max-norm error against the manufactured solution, after the gauge
    /// shift `sup u = 0` on the torus.
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ellipticity: Option<EllipticitySummary>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    solve: Option<SolveReport<'a>>,
}

#[derive(Serialize)]
struct EllipticitySummary {
    c1: C1Estimate,
    check: EllipticityCheck,
}

#[derive(Serialize)]
struct BarrierReport {
    problem: &'static str,
    bound: TraceBound,
    nonexistence: bool,
    /// Minimum of `w = e^{κh}` on the grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    min_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inf_h: Option<f64>,
    /// Max difference to the direct Newton solve of the quasilinear form.
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_difference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_error: Option<String>,
}

#[derive(Serialize)]
struct ProbeReport<'a> {
    operator: plpde_core::symcalc::OperatorDescriptor,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1: Option<C1Estimate>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    result: Option<&'a RankConditionResult>,
}

#[derive(Serialize)]
struct MmsLevel {
    points: usize,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    exact_error: Option<f64>,
    b: Option<f64>,
    final_residual: Option<f64>,
    newton_iterations: Option<usize>,
}

#[derive(Serialize)]
struct MmsReport {
    levels: Vec<MmsLevel>,
    /// `log₂(e_coarse/e_fine)` for consecutive levels.
    observed_orders: Vec<f64>,
}

fn load_and_prepare(path: &Path, command: &str) -> Result<(LoadedConfig, OutputDir), CliError> {
    let loaded = config::load(path)?;
    let out = OutputDir::create(&loaded.config.output.directory)?;
    out.write_manifest(command, &loaded.bytes, loaded.config.seed)?;
    Ok((loaded, out))
}

fn run_solver(spec: &ProblemSpec, opts: &SolverOptions) -> plpde_core::Result<SolveState> {
    match spec.mode {
        Mode::PeriodicWithConstant => homotopy_solve(spec, opts),
        Mode::Dirichlet { .. } => dirichlet_solve(spec, opts),
    }
}

fn is_stall(e: &Error) -> bool {
    matches!(
        e,
        Error::NewtonStall { .. } | Error::HomotopyStall { .. } | Error::LinearSolveFailure(_)
    )
}

fn exact_error(spec: &ProblemSpec, u: &ScalarField, exact: &ScalarField) -> f64 {
    let shift = match spec.mode {
        Mode::PeriodicWithConstant => exact.max(),
        Mode::Dirichlet { .. } => 0.0,
    };
    u.values
        .iter()
        .zip(&exact.values)
        .map(|(a, b)| (a - (b - shift)).abs())
        .fold(0.0, f64::max)
}

fn closed_form_b(cfg: &RunConfig, spec: &ProblemSpec) -> Option<f64> {
    let (config::XSpec::Scalar { value }, PsiSpec::Constant { value: psi }) =
        (cfg.problem.x.as_ref()?, cfg.problem.psi.as_ref()?)
    else {
        return None;
    };
    if !matches!(spec.mode, Mode::PeriodicWithConstant) {
        return None;
    }
    let f = spec.operator.diagonal_value(*value).ok()?;
    Some((f / psi).ln())
}

fn ellipticity(cfg: &RunConfig, spec: &ProblemSpec, u: &ScalarField) -> Result<EllipticitySummary, CliError> {
    let opts = cfg.probe_options();
    let rank = rank_condition_check(&spec.operator, &opts)?;
    let r = (rank.rank as f64).max(rank.threshold).ceil() as usize;
    let dim = match opts.space {
        plpde_core::conegeo::ProbeSpace::Cone => spec.operator.ambient_dim(),
        plpde_core::conegeo::ProbeSpace::Eigen => spec.operator.n(),
    };
    let sigma = spec.psi.min();
    let c1 = c1_estimate(&spec.operator, sigma, r.min(dim), &opts)?;
    let check = ellipticity_check(&spec.geometry, &spec.operator, &spec.x, u, c1.value)?;
    Ok(EllipticitySummary { c1, check })
}

fn write_estimates(out: &OutputDir, cfg: &RunConfig, report: &EstimateReport) -> Result<(), CliError> {
    out.write_json("estimate_report.json", report)?;
    if cfg.output.wants("csv") {
        out.write_text("estimates.csv", &report.to_csv())?;
    }
    Ok(())
}

pub fn solve(path: &Path) -> Result<u8, CliError> {
    let (loaded, out) = load_and_prepare(path, "solve")?;
    let cfg = &loaded.config;
    let kind = cfg.geometry_kind()?;
    let (spec, exact, curvature) = match cfg.build(kind, &loaded.base_dir)? {
        Problem::Barrier { geometry, bound } => return barrier(cfg, &out, &geometry, bound),
        Problem::Elliptic {
            spec,
            exact,
            subsolution_curvature,
        } => (spec, exact, subsolution_curvature),
    };
    let ball = cfg.ball(&spec.geometry)?;
    let closed = closed_form_b(cfg, &spec);
    match run_solver(&spec, &cfg.solver) {
        Ok(state) => {
            let report = SolveOutput {
                status: "converged",
                error: None,
                closed_form_b: closed,
                subsolution_curvature: curvature,
                exact_error: exact.as_ref().map(|e| exact_error(&spec, &state.u, e)),
                ellipticity: Some(ellipticity(cfg, &spec, &state.u)?),
                solve: Some(state.report(&spec)),
            };
            out.write_json("solve_report.json", &report)?;
            if cfg.output.wants("field") {
                out.write_field("u", &spec.geometry, &state.u)?;
            }
            let level = measure_level(&spec.geometry, &state.u, &ball)?;
            write_estimates(&out, cfg, &EstimateReport::new(instance_name(cfg), ball, vec![level]))?;
            log::info!("solve converged with b = {}", state.b);
            Ok(EXIT_OK)
        }
        Err(e) if is_stall(&e) => {
            log::error!("{e}");
            let partial = match &e {
                Error::HomotopyStall { last_good, .. } => Some(last_good.as_ref()),
                _ => None,
            };
            let report = SolveOutput {
                status: "stalled",
                error: Some(e.to_string()),
                closed_form_b: closed,
                subsolution_curvature: curvature,
                exact_error: None,
                ellipticity: None,
                solve: partial.map(|s| s.report(&spec)),
            };
            out.write_json("solve_report.json", &report)?;
            if let Some(state) = partial {
                if cfg.output.wants("field") {
                    out.write_field("u", &spec.geometry, &state.u)?;
                }
            }
            Ok(EXIT_STALLED)
        }
        Err(e) => Err(e.into()),
    }
}

fn instance_name(cfg: &RunConfig) -> String {
    let op = cfg.problem.operator.as_ref().map(|o| o.descriptor());
    match op {
        Some(d) => format!("{:?} n={} K={} beta={}", d.family, d.n, d.k, d.beta),
        None => "unnamed".into(),
    }
}

fn barrier(cfg: &RunConfig, out: &OutputDir, geometry: &ModelGeometry, bound: TraceBound) -> Result<u8, CliError> {
    let outcome = barrier_solve(geometry, bound)?;
    let mut report = BarrierReport {
        problem: "barrier",
        bound,
        nonexistence: false,
        min_w: None,
        location: None,
        inf_h: None,
        newton_difference: None,
        newton_error: None,
    };
    match &outcome {
        BarrierOutcome::Nonexistence { min_w, location } => {
            report.nonexistence = true;
            report.min_w = Some(*min_w);
            report.location = Some(geometry.coords(*location)[0]);
        }
        BarrierOutcome::Solution(h) => {
            report.min_w = Some((bound.gradient_coefficient * h.min()).exp());
            report.inf_h = Some(h.min());
            match barrier_newton(geometry, bound, BARRIER_NEWTON_TOLERANCE, BARRIER_NEWTON_ITERATIONS) {
                Ok(newton) => {
                    let diff = newton
                        .values
                        .iter()
                        .zip(&h.values)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    report.newton_difference = Some(diff);
                }
                Err(e) => report.newton_error = Some(e.to_string()),
            }
            if cfg.output.wants("field") {
                out.write_field("h", geometry, h)?;
            }
        }
    }
    out.write_json("barrier_report.json", &report)?;
    Ok(EXIT_OK)
}

pub fn probe_cone(path: &Path) -> Result<u8, CliError> {
    let (loaded, out) = load_and_prepare(path, "probe-cone")?;
    let cfg = &loaded.config;
    let op = cfg.operator()?;
    let opts = cfg.probe_options();
    let descriptor = op.descriptor();
    match rank_condition_check(op, &opts) {
        Ok(result) => {
            let rank = (result.rank as f64).max(result.threshold).ceil() as usize;
            let dim = result.certificates.first().map_or(rank, |c| c.ambient_dim);
            let sigma = result.levels[result.levels.len() / 2];
            let c1 = c1_estimate(op, sigma, rank.min(dim), &opts)?;
            let report = ProbeReport {
                operator: descriptor,
                status: if result.passes { "passes" } else { "fails" },
                error: None,
                c1: Some(c1),
                result: Some(&result),
            };
            out.write_json("rank_certificate.json", &report)?;
            log::info!("certified rank {} against threshold {}", result.rank, result.threshold);
            Ok(if result.passes { EXIT_OK } else { EXIT_FAILED_CONDITION })
        }
        Err(e @ Error::ProbeInconclusive(_)) => {
            log::error!("{e}");
            let report = ProbeReport {
                operator: descriptor,
                status: "inconclusive",
                error: Some(e.to_string()),
                c1: None,
                result: None,
            };
            out.write_json("rank_certificate.json", &report)?;
            Ok(EXIT_STALLED)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn mms(path: &Path) -> Result<u8, CliError> {
    let (loaded, out) = load_and_prepare(path, "mms")?;
    let cfg = &loaded.config;
    if !matches!(cfg.problem.psi, Some(PsiSpec::Mms { .. })) {
        return Err(CliError::Config("problem.psi: the mms command needs psi of type \"mms\"".into()));
    }
    let kind = cfg.geometry_kind()?;
    let finest = level_of(kind);
    let levels = cfg
        .mms
        .levels
        .clone()
        .unwrap_or_else(|| vec![finest / 4, finest / 2, finest]);
    if levels.is_empty() {
        return Err(CliError::Config("mms.levels: at least one level is required".into()));
    }
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    let mut ball: Option<Ball> = None;
    let mut exit = EXIT_OK;
    for &points in &levels {
        let level_kind = with_level(kind, points);
        let Problem::Elliptic { spec, exact, .. } = cfg.build(level_kind, &loaded.base_dir)? else {
            unreachable!("psi of type mms always gives an elliptic problem")
        };
        let exact = exact.expect("manufactured problems carry u*");
        let ball = ball.get_or_insert(cfg.ball(&spec.geometry)?).clone();
        let mut opts = cfg.solver;
        opts.coarse_points = opts.coarse_points.filter(|&c| c < points);
        let dir = out.subdir(&format!("level_{points}"))?;
        match run_solver(&spec, &opts) {
            Ok(state) => {
                let err = exact_error(&spec, &state.u, &exact);
                dir.write_json("solve_report.json", &state.report(&spec))?;
                if cfg.output.wants("field") {
                    dir.write_field("u", &spec.geometry, &state.u)?;
                }
                ratios.push(measure_level(&spec.geometry, &state.u, &ball)?);
                rows.push(MmsLevel {
                    points,
                    status: "converged",
                    error: None,
                    exact_error: Some(err),
                    b: Some(state.b),
                    final_residual: Some(state.final_residual),
                    newton_iterations: Some(state.newton_iterations),
                });
            }
            Err(e) if is_stall(&e) => {
                log::error!("level {points}: {e}");
                exit = EXIT_STALLED;
                rows.push(MmsLevel {
                    points,
                    status: "stalled",
                    error: Some(e.to_string()),
                    exact_error: None,
                    b: None,
                    final_residual: None,
                    newton_iterations: None,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let observed_orders = rows
        .windows(2)
        .filter_map(|w| {
            let (e0, e1) = (w[0].exact_error?, w[1].exact_error?);
            let refinement = w[1].points as f64 / w[0].points as f64;
            Some((e0 / e1).ln() / refinement.ln())
        })
        .collect();
    out.write_json(
        "mms_report.json",
        &MmsReport {
            levels: rows,
            observed_orders,
        },
    )?;
    if let (Some(ball), false) = (ball, ratios.is_empty()) {
        write_estimates(&out, cfg, &EstimateReport::new(instance_name(cfg), ball, ratios))?;
    }
    Ok(exit)
}

fn level_of(kind: GeometryKind) -> usize {
    match kind {
        GeometryKind::FlatTorus { points_per_axis, .. } => points_per_axis,
        GeometryKind::Interval { points, .. } => points,
    }
}

fn with_level(kind: GeometryKind, level: usize) -> GeometryKind {
    match kind {
        GeometryKind::FlatTorus { n, .. } => GeometryKind::FlatTorus {
            n,
            points_per_axis: level,
        },
        GeometryKind::Interval { a, b, .. } => GeometryKind::Interval { a, b, points: level },
    }
}

/// Field stems named `u` in `dir` and in its `level_*` subdirectories.
fn solution_stems(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut stems = Vec::new();
    if dir.join("u.json").is_file() {
        stems.push(dir.join("u"));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("level_"))
                && p.join("u.json").is_file()
        })
        .collect();
    subdirs.sort();
    stems.extend(subdirs.into_iter().map(|p| p.join("u")));
    Ok(stems)
}

pub fn verify_estimates(dir: &Path, center: Option<Vec<f64>>, radius: Option<f64>) -> Result<u8, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("solution directory {} does not exist", dir.display())));
    }
    let stems = solution_stems(dir)?;
    if stems.is_empty() {
        return Err(CliError::Config(format!(
            "no solution fields (u.f64/u.json) found in {}",
            dir.display()
        )));
    }
    let mut levels = Vec::new();
    let mut ball = None;
    let mut geometries = Vec::new();
    for stem in &stems {
        let (header, data) = io::read_field(stem)?;
        let geometry = ModelGeometry::new(header.geometry)?;
        if data.len() != geometry.npts() {
            return Err(CliError::Config(format!(
                "{}: expected a scalar field of {} values",
                stem.display(),
                geometry.npts()
            )));
        }
        geometries.push(header.geometry);
        let estimates = config::EstimateBlock {
            center: center.clone(),
            radius,
        };
        let b: &Ball = match &ball {
            Some(b) => b,
            None => ball.insert(config::ball_for(&geometry, &estimates)?),
        };
        levels.push(measure_level(&geometry, &ScalarField::new(data), b)?);
    }
    let family = std::mem::discriminant(&geometries[0]);
    if geometries.iter().any(|g| std::mem::discriminant(g) != family) {
        return Err(CliError::Config("solution fields mix torus and interval geometries".into()));
    }
    let report = EstimateReport::new("verification", ball.expect("at least one level"), levels);
    let out = OutputDir::create(dir)?;
    out.write_json("verification.json", &report)?;
    out.write_text("verification.csv", &report.to_csv())?;
    let ok = report.stability.iter().all(|f| f.finite && f.stable);
    for f in &report.stability {
        log::info!("{}: spread {} finite {} stable {}", f.ratio, f.spread, f.finite, f.stable);
    }
    Ok(if ok { EXIT_OK } else { EXIT_STALLED })
}
