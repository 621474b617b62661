//! Multi-beam object localization (MBOL) beamforming for mmWave ISAC.
//!
//! An ISAC base station with a hybrid (RF phase-shifter + digital baseband)
//! transmit array covers a nearby, angularly extended object with `L` narrow
//! sensing beams while serving `M` single-antenna downlink users under
//! per-user SINR constraints. This crate designs the hybrid precoder by a
//! penalty-based triple alternating optimization: a Riemannian conjugate
//! gradient update of the RF phases on the unit-modulus manifold, a
//! closed-form stationarity solve for the baseband precoder, and a
//! second-order-cone projection of the auxiliary SINR variables.
//!
//! Modules follow the pipeline:
//!
//! - [`scenario`]: experiment configuration, validation, seed plumbing
//! - [`channel`]: steering vectors, pathloss, random mmWave MISO channels
//! - [`metrics`]: beampattern, sensing beampattern (SBP) gain, SINR,
//!   sum rate, IMSR, MSE-optimal beam weights
//! - [`manifold`]: the RF-precoder subproblem on the product-of-circles
//!   manifold
//! - [`bb_solver`]: the baseband stationarity update
//! - [`socp`]: per-user second-order-cone projection of the auxiliaries
//! - [`optimizer`]: the outer penalty loop tying the three updates together,
//!   plus radar-only and communication-only baselines
//! - [`harness`]: Monte Carlo sweeps (power, SINR threshold, beampattern,
//!   IMSR) with CSV/JSON export
//!
//! See the crate examples for runnable entry points into each capability;
//! the `mbol` binary exposes the sweep runners as subcommands.

pub mod bb_solver;
pub mod channel;
pub mod error;
pub mod harness;
pub mod manifold;
pub mod metrics;
pub mod optimizer;
pub mod scenario;
pub mod socp;

pub use channel::{sample_channels, steering_vector, ChannelSet, SteeringVector};
pub use error::{Error, Result};
pub use metrics::{BeamWeights, HybridPrecoder};
pub use optimizer::{comm_only, optimize, radar_only, RunDiagnostics};
pub use scenario::{default_paper_scenario, desk_scenario, ScenarioConfig};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;

/// dBm to linear milliwatts.
#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// dB to linear power ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to dB.
#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}
