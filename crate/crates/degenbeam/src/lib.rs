//! Simulation and exponential-decay certification for a non-uniform
//! Euler-Bernoulli beam with degenerate flexural rigidity, axial tension,
//! and delayed boundary velocity feedback.
//!
//! The beam occupies `(0, 1)`, is clamped at `x = 0` (where the rigidity
//! may vanish) and controlled at `x = 1` through boundary springs
//! (`kb`, `kr`), collocated velocity feedback (`kv`, `ka`) and a delayed
//! velocity term (`kd`, delay `tau`). The delayed channel is carried as a
//! transport line on the unit interval coupled to the boundary velocity.
//!
//! The crate provides:
//! - [`model`]: problem data, degeneracy classification, admissibility
//!   checks and every constant of the decay certificate;
//! - [`spatial`]: graded meshes, cubic Hermite forms on the weighted
//!   space, discrete norms and the boundary-trace inequality checks;
//! - [`delay`]: the standalone transport line (implicit upwind plus an
//!   exact ring-buffer oracle);
//! - [`evolution`]: the monolithic closed-loop system and the implicit
//!   midpoint / backward Euler integrators;
//! - [`analysis`]: energy and Lyapunov diagnostics, dissipation margins,
//!   the auxiliary elliptic solver, generator spectra and the decay
//!   certificate;
//! - [`scenario`] and [`harness`]: the scenario file format and the CLI
//!   entry points (`validate`, `run`, `certify`, `spectrum`, `sweep`,
//!   `mms`).

pub mod analysis;
pub mod delay;
pub mod evolution;
pub mod gauss;
pub mod harness;
pub mod model;
pub mod scenario;
pub mod spatial;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("numerical failure at t = {t}: {msg}")]
    Numerical { t: f64, msg: String },
    #[error("eigensolver failed to converge")]
    Eigensolver,
    #[error("certificate failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
