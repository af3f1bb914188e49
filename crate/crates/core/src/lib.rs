//! Numerical tools for fully nonlinear elliptic equations of
//! partial-Laplacian type,
//!
//! ```text
//! f(Λ(√-1 ∂∂̄u + X)) = ψ,
//! ```
//!
//! on flat Hermitian model geometries.
//!
//! * [`symcalc`]: index sets, the partial-sum map `Λ`, symmetric functions
//!   and the catalogued operator families with derivatives.
//! * [`conegeo`]: cone membership, level-set sampling and numerical rank
//!   certification of the tangent cone at infinity.
//! * [`hermfield`]: grids, complex Hessians, pointwise eigen-decomposition
//!   and linearised coefficients.
//! * [`solver`]: Newton, continuation, Dirichlet and barrier solvers.
//! * [`estimates`]: measured a priori estimate ratios.

pub mod conegeo;
pub mod error;
pub mod estimates;
pub mod hermfield;
pub mod solver;
pub mod symcalc;

pub use error::{Error, Result};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
