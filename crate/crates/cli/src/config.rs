//! The JSON run configuration and its conversion into validated core types.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use plpde_core::conegeo::ProbeOptions;
use plpde_core::estimates::Ball;
use plpde_core::hermfield::{io, GeometryKind, HermitianField, ModelGeometry, ScalarField};
use plpde_core::solver::{mms_generate, Mode, ProblemSpec, SolverOptions, TraceBound};
use plpde_core::symcalc::OperatorSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: OutputBlock,
    /// Seed for all randomised sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub probe: ProbeBlock,
    #[serde(default)]
    pub mms: MmsBlock,
    #[serde(default)]
    pub estimates: EstimateBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Periodic,
    Dirichlet,
    Barrier,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    #[serde(default)]
    pub kind: ProblemKind,
    pub geometry: Option<GeometryKind>,
    pub operator: Option<OperatorSpec>,
    pub x: Option<XSpec>,
    pub psi: Option<PsiSpec>,
    /// Dirichlet boundary data; zero when absent.
    pub boundary: Option<Profile>,
    /// Curvature `M` of the subsolution `φ + M(x - a)(x - b)`, where `φ`
    /// interpolates the boundary values linearly; searched over powers of
    /// two when absent.
    pub subsolution_curvature: Option<f64>,
    /// Trace bound of the barrier model.
    pub barrier: Option<TraceBound>,
}

/// The lower-order term `X`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum XSpec {
    /// `X = value·ω`.
    Scalar { value: f64 },
    /// Diagonal `X` with one profile per diagonal entry.
    Diagonal { entries: Vec<Profile> },
}

/// The right-hand side `ψ`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    Constant { value: f64 },
    /// A field dump stem, relative to the configuration file.
    GridFile { path: PathBuf },
    /// `ψ` manufactured from the exact solution `u_star`.
    Mms { u_star: Profile },
}

/// `constant + linear·x + quadratic·x² + Σ amplitude·cos(2π k·x + phase)`.
///
/// The polynomial terms refer to the single interval coordinate and are
/// rejected on the torus.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub linear: f64,
    #[serde(default)]
    pub quadratic: f64,
    #[serde(default)]
    pub modes: Vec<FourierMode>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Any of `json`, `csv`, `field`.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("plpde-out")
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into(), "field".into()]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    pub space: Option<plpde_core::conegeo::ProbeSpace>,
    pub magnitudes: Option<Vec<f64>>,
    pub ray_budget: Option<usize>,
    pub random_directions: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsBlock {
    /// Grid sizes of the refinement study; defaults to the geometry's size
    /// and its two coarser halvings.
    pub levels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateBlock {
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
}

fn config_error(path: &str, msg: impl std::fmt::Display) -> CliError {
    let msg = msg.to_string();
    let msg = msg.strip_prefix("configuration error: ").unwrap_or(&msg);
    CliError::Config(format!("{path}: {msg}"))
}

/// A parsed configuration together with the raw bytes it came from.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub bytes: Vec<u8>,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config = parse(&bytes)?;
    Ok(LoadedConfig {
        config,
        bytes,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Parses a configuration, reporting failures with the JSON path of the
/// offending field.
pub fn parse(bytes: &[u8]) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "config".to_string() } else { path };
        config_error(&path, e.into_inner())
    })
}

impl Profile {
    fn check(&self, geometry: &ModelGeometry, path: &str) -> Result<(), CliError> {
        let dims = geometry.coords(0).len();
        if geometry.is_torus() && (self.linear != 0.0 || self.quadratic != 0.0) {
            return Err(config_error(path, "polynomial terms are not periodic; use modes on the torus"));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if m.wavevector.len() != dims {
                return Err(config_error(
                    &format!("{path}.modes[{i}].wavevector"),
                    format!("expected {dims} components, found {}", m.wavevector.len()),
                ));
            }
            if geometry.is_torus() && m.wavevector.iter().any(|k| k.fract() != 0.0) {
                return Err(config_error(
                    &format!("{path}.modes[{i}].wavevector"),
                    "torus wavevectors must be integers",
                ));
            }
        }
        let all = [self.constant, self.linear, self.quadratic]
            .into_iter()
            .chain(self.modes.iter().flat_map(|m| [m.amplitude, m.phase]))
            .chain(self.modes.iter().flat_map(|m| m.wavevector.iter().copied()));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(config_error(path, "all coefficients must be finite"));
        }
        Ok(())
    }

    fn phase(m: &FourierMode, x: &[f64]) -> f64 {
        2.0 * PI * m.wavevector.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + m.phase
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let x0 = x[0];
        self.constant
            + self.linear * x0
            + self.quadratic * x0 * x0
            + self.modes.iter().map(|m| m.amplitude * Self::phase(m, x).cos()).sum::<f64>()
    }

    /// Second derivative in the interval coordinate.
    fn second_derivative(&self, x: f64) -> f64 {
        2.0 * self.quadratic
            - self
                .modes
                .iter()
                .map(|m| {
                    let k = 2.0 * PI * m.wavevector[0];
                    m.amplitude * k * k * Self::phase(m, &[x]).cos()
                })
                .sum::<f64>()
    }

    pub fn sample(&self, geometry: &ModelGeometry) -> ScalarField {
        geometry.sample(|x| self.value(x))
    }
}

/// Everything `solve` and `mms` need, built from a configuration.
pub enum Problem {
    Elliptic {
        spec: Box<ProblemSpec>,
        /// `u*` when the right-hand side was manufactured.
        exact: Option<ScalarField>,
        subsolution_curvature: Option<f64>,
    },
    Barrier {
        geometry: ModelGeometry,
        bound: TraceBound,
    },
}

impl RunConfig {
    pub fn geometry_kind(&self) -> Result<GeometryKind, CliError> {
        self.problem
            .geometry
            .ok_or_else(|| config_error("problem.geometry", "missing"))
    }

    pub fn operator(&self) -> Result<&OperatorSpec, CliError> {
        self.problem
            .operator
            .as_ref()
            .ok_or_else(|| config_error("problem.operator", "missing"))
    }

    pub fn probe_options(&self) -> ProbeOptions {
        let defaults = ProbeOptions::default();
        let p = &self.probe;
        ProbeOptions {
            space: p.space.unwrap_or(defaults.space),
            magnitudes: p.magnitudes.clone().unwrap_or(defaults.magnitudes),
            ray_budget: p.ray_budget.unwrap_or(defaults.ray_budget),
            random_directions: p.random_directions.unwrap_or(defaults.random_directions),
            seed: self.seed,
        }
    }

    pub fn ball(&self, geometry: &ModelGeometry) -> Result<Ball, CliError> {
        ball_for(geometry, &self.estimates)
    }

    /// Builds the validated problem on `kind`.
    pub fn build(&self, kind: GeometryKind, base_dir: &Path) -> Result<Problem, CliError> {
        let geometry = ModelGeometry::new(kind).map_err(|e| config_error("problem.geometry", e))?;
        if self.problem.kind == ProblemKind::Barrier {
            let bound = self
                .problem
                .barrier
                .ok_or_else(|| config_error("problem.barrier", "missing"))?;
            if geometry.is_torus() {
                return Err(config_error("problem.geometry", "the barrier model needs an interval"));
            }
            return Ok(Problem::Barrier { geometry, bound });
        }
        let op = self.operator()?;
        if op.n() != geometry.n() {
            return Err(config_error(
                "problem.operator.n",
                format!("operator has n = {}, geometry has n = {}", op.n(), geometry.n()),
            ));
        }
        match (self.problem.kind, geometry.is_torus()) {
            (ProblemKind::Periodic, false) => {
                return Err(config_error("problem.kind", "periodic problems need a flat_torus geometry"))
            }
            (ProblemKind::Dirichlet, true) => {
                return Err(config_error("problem.kind", "dirichlet problems need an interval geometry"))
            }
            _ => {}
        }
        let x = self.x_field(&geometry)?;
        let psi_spec = self
            .problem
            .psi
            .as_ref()
            .ok_or_else(|| config_error("problem.psi", "missing"))?;
        if let PsiSpec::Mms { u_star } = psi_spec {
            u_star.check(&geometry, "problem.psi.u_star")?;
            let exact = u_star.sample(&geometry);
            let hessian = (!geometry.is_torus()).then(|| HermitianField {
                n: 1,
                data: (0..geometry.npts())
                    .map(|i| Complex64::new(0.25 * u_star.second_derivative(geometry.coords(i)[0]), 0.0))
                    .collect(),
            });
            let spec = mms_generate(&geometry, op, &exact, &x, hessian.as_ref())
                .map_err(|e| config_error("problem.psi.u_star", e))?;
            return Ok(Problem::Elliptic {
                spec: Box::new(spec),
                exact: Some(exact),
                subsolution_curvature: None,
            });
        }
        let psi = match psi_spec {
            PsiSpec::Constant { value } => ScalarField::constant(geometry.npts(), *value),
            PsiSpec::GridFile { path } => read_grid(&base_dir.join(path), &geometry)?,
            PsiSpec::Mms { .. } => unreachable!(),
        };
        if geometry.is_torus() {
            let spec = ProblemSpec::new(geometry, op.clone(), x, psi, Mode::PeriodicWithConstant, None)
                .map_err(|e| config_error("problem", e))?;
            return Ok(Problem::Elliptic {
                spec: Box::new(spec),
                exact: None,
                subsolution_curvature: None,
            });
        }
        self.dirichlet(geometry, op, x, psi)
    }

    fn dirichlet(
        &self,
        geometry: ModelGeometry,
        op: &OperatorSpec,
        x: HermitianField,
        psi: ScalarField,
    ) -> Result<Problem, CliError> {
        let boundary_profile = self.problem.boundary.clone().unwrap_or_default();
        boundary_profile.check(&geometry, "problem.boundary")?;
        let GeometryKind::Interval { a, b, .. } = geometry.kind() else {
            unreachable!()
        };
        let (fa, fb) = (boundary_profile.value(&[a]), boundary_profile.value(&[b]));
        let boundary = geometry.sample(|p| fa + (fb - fa) * (p[0] - a) / (b - a));
        let build = |m: f64| {
            let sub = ScalarField::new(
                (0..geometry.npts())
                    .map(|i| {
                        let xi = geometry.coords(i)[0];
                        let bump = if geometry.is_boundary(i) { 0.0 } else { m * (xi - a) * (xi - b) };
                        boundary.values[i] + bump
                    })
                    .collect(),
            );
            ProblemSpec::new(
                geometry.clone(),
                op.clone(),
                x.clone(),
                psi.clone(),
                Mode::Dirichlet {
                    boundary: boundary.clone(),
                },
                Some(sub),
            )
        };
        let spec_and_m = match self.problem.subsolution_curvature {
            Some(m) => build(m)
                .map(|s| (s, m))
                .map_err(|e| config_error("problem.subsolution_curvature", e))?,
            None => {
                let mut last = None;
                let mut found = None;
                for m in (0..=30).map(|p| f64::from(1u32 << p) / 4.0) {
                    match build(m) {
                        Ok(s) => {
                            found = Some((s, m));
                            break;
                        }
                        Err(e @ plpde_core::Error::Configuration(_)) if e.to_string().contains("subsolution") => {
                            last = Some(e)
                        }
                        Err(e) => return Err(config_error("problem", e)),
                    }
                }
                found.ok_or_else(|| {
                    config_error(
                        "problem.subsolution_curvature",
                        format!(
                            "no admissible subsolution found: {}",
                            last.map(|e| e.to_string()).unwrap_or_default()
                        ),
                    )
                })?
            }
        };
        Ok(Problem::Elliptic {
            spec: Box::new(spec_and_m.0),
            exact: None,
            subsolution_curvature: Some(spec_and_m.1),
        })
    }

    fn x_field(&self, geometry: &ModelGeometry) -> Result<HermitianField, CliError> {
        let spec = self
            .problem
            .x
            .as_ref()
            .ok_or_else(|| config_error("problem.x", "missing"))?;
        match spec {
            XSpec::Scalar { value } => {
                if !value.is_finite() {
                    return Err(config_error("problem.x.value", "must be finite"));
                }
                Ok(geometry.constant_field(*value))
            }
            XSpec::Diagonal { entries } => {
                let n = geometry.n();
                if entries.len() != n {
                    return Err(config_error(
                        "problem.x.entries",
                        format!("expected {n} diagonal profiles, found {}", entries.len()),
                    ));
                }
                for (i, p) in entries.iter().enumerate() {
                    p.check(geometry, &format!("problem.x.entries[{i}]"))?;
                }
                let mut data = vec![Complex64::new(0.0, 0.0); geometry.npts() * n * n];
                for idx in 0..geometry.npts() {
                    let x = geometry.coords(idx);
                    for (i, p) in entries.iter().enumerate() {
                        data[idx * n * n + i * n + i] = Complex64::new(p.value(&x), 0.0);
                    }
                }
                Ok(HermitianField { n, data })
            }
        }
    }
}

/// The estimate ball; defaults to the centre of the domain with radius a
/// quarter of the period or of the interval length.
pub fn ball_for(geometry: &ModelGeometry, estimates: &EstimateBlock) -> Result<Ball, CliError> {
    let (center, radius) = match geometry.kind() {
        GeometryKind::FlatTorus { n, .. } => (vec![0.5; 2 * n], 0.25),
        GeometryKind::Interval { a, b, .. } => (vec![0.5 * (a + b)], 0.25 * (b - a)),
    };
    let center = estimates.center.clone().unwrap_or(center);
    let radius = estimates.radius.unwrap_or(radius);
    let dims = geometry.coords(0).len();
    if center.len() != dims {
        return Err(config_error(
            "estimates.center",
            format!("expected {dims} coordinates, found {}", center.len()),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(config_error("estimates.radius", "must be positive"));
    }
    Ok(Ball::new(center, radius))
}

fn read_grid(stem: &Path, geometry: &ModelGeometry) -> Result<ScalarField, CliError> {
    let (header, data) = io::read_field(stem).map_err(|e| config_error("problem.psi.path", e))?;
    if header.geometry != geometry.kind() {
        return Err(config_error(
            "problem.psi.path",
            "field dump geometry differs from problem.geometry",
        ));
    }
    if data.len() != geometry.npts() {
        return Err(config_error(
            "problem.psi.path",
            format!("expected {} values, found {}", geometry.npts(), data.len()),
        ));
    }
    Ok(ScalarField::new(data))
}
