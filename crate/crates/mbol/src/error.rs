//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scenario field violates one of the configuration invariants.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A matrix that must have unit-modulus entries does not.
    #[error("unit-modulus violation at entry {index}: |w| = {modulus}")]
    ModulusViolation { index: usize, modulus: f64 },

    /// The RF subproblem objective became non-finite during descent.
    #[error("non-finite objective at RCG iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    /// The baseband stationarity system could not be solved.
    #[error("singular BB stationarity system (min eigenvalue {min_eig:.3e})")]
    SingularBbSystem { min_eig: f64 },

    /// The cone projection root-finder did not converge.
    #[error("SOC projection failed for row {row}: residual {residual:.3e} after {iterations} iterations")]
    SocProjection {
        row: usize,
        residual: f64,
        iterations: usize,
    },

    /// IMSR is undefined because the pattern carries no sidelobe energy.
    #[error("degenerate beampattern: sidelobe integral is zero")]
    DegenerateSidelobe,

    /// Beam weights are undefined when a beam sees zero gain.
    #[error("beam weights undefined: zero beampattern gain at beam {beam}")]
    ZeroBeamGain { beam: usize },

    /// A subproblem failure, tagged with where in the outer/inner loop it occurred.
    #[error("optimizer failed at outer {outer}, inner {inner}: {source}")]
    Optimizer {
        outer: usize,
        inner: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment spec: {0}")]
    InvalidExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
