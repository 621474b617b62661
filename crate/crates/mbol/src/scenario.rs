//! Experiment configuration, validation, and deterministic seed plumbing.
//!
//! A [`ScenarioConfig`] owns every physical and algorithmic parameter of one
//! experiment. Angles are stored in degrees at this boundary (the usual way
//! such systems are quoted) and converted to radians exactly once by the
//! accessors below; all downstream numerics work in radians and linear power
//! units.

use std::f64::consts::PI;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::dbm_to_mw;

/// Pathloss model parameters: `PL(d) [dB] = epsilon + 10 * exponent * log10(d) + shadow`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossParams {
    pub epsilon_db: f64,
    pub exponent: f64,
    /// Standard deviation of the lognormal shadowing term, in dB.
    pub shadow_sigma_db: f64,
}

/// Angular extent of the sensed object, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorDeg {
    pub lower: f64,
    pub upper: f64,
}

/// All parameters of one experiment.
///
/// Field names mirror the usual symbols: `n_tx` transmit antennas, `n_rf` RF
/// chains, `n_cu` communication users, `n_beams` object beams. The stream
/// count equals `n_rf` because one RF chain is required per beam and per
/// user, which the validator enforces as `n_rf == n_cu + n_beams`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rf: usize,
    pub n_cu: usize,
    pub n_beams: usize,
    pub cu_angles_deg: Vec<f64>,
    pub cu_distances_m: Vec<f64>,
    pub object_sector_deg: SectorDeg,
    pub p_tx_dbm: f64,
    pub noise_power_dbm: f64,
    pub sinr_thresholds_db: Vec<f64>,
    pub n_paths: usize,
    pub angular_spread_rad: f64,
    pub pathloss: PathlossParams,
    pub penalty_init: f64,
    /// Divisor applied to grow the penalty factor each outer iteration; must
    /// lie strictly in (0, 1).
    pub penalty_shrink: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub tol_linesearch: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_rcg_iters: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Checks every configuration invariant, returning the config unchanged
    /// on success and a description of the first violation otherwise.
    pub fn validate(self) -> Result<Self> {
        let inv = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n_rf != self.n_cu + self.n_beams {
            return inv(format!(
                "n_rf must equal n_cu + n_beams (one RF chain per stream): {} != {} + {}",
                self.n_rf, self.n_cu, self.n_beams
            ));
        }
        if self.n_rf > self.n_tx {
            return inv(format!(
                "n_rf must not exceed n_tx: {} > {}",
                self.n_rf, self.n_tx
            ));
        }
        if self.cu_angles_deg.len() != self.n_cu {
            return inv(format!(
                "cu_angles_deg has {} entries, expected n_cu = {}",
                self.cu_angles_deg.len(),
                self.n_cu
            ));
        }
        if self.cu_distances_m.len() != self.n_cu {
            return inv(format!(
                "cu_distances_m has {} entries, expected n_cu = {}",
                self.cu_distances_m.len(),
                self.n_cu
            ));
        }
        if self.sinr_thresholds_db.len() != self.n_cu {
            return inv(format!(
                "sinr_thresholds_db has {} entries, expected n_cu = {}",
                self.sinr_thresholds_db.len(),
                self.n_cu
            ));
        }
        if !(self.object_sector_deg.lower < self.object_sector_deg.upper) {
            return inv(format!(
                "object sector must have lower < upper: [{}, {}]",
                self.object_sector_deg.lower, self.object_sector_deg.upper
            ));
        }
        if !(self.penalty_shrink > 0.0 && self.penalty_shrink < 1.0) {
            return inv(format!(
                "penalty_shrink must lie in (0, 1): {}",
                self.penalty_shrink
            ));
        }
        if self.n_tx == 0 || self.n_rf == 0 || self.n_cu == 0 || self.n_beams == 0 {
            return inv("n_tx, n_rf, n_cu, n_beams must all be positive".into());
        }
        if self.cu_distances_m.iter().any(|&d| !(d > 0.0)) {
            return inv("cu_distances_m must be positive".into());
        }
        if self.n_paths == 0 {
            return inv("n_paths must be positive".into());
        }
        if !(self.angular_spread_rad > 0.0) {
            return inv("angular_spread_rad must be positive".into());
        }
        if !(self.penalty_init > 0.0) {
            return inv("penalty_init must be positive".into());
        }
        for (name, tol) in [
            ("tol_inner", self.tol_inner),
            ("tol_outer", self.tol_outer),
            ("tol_linesearch", self.tol_linesearch),
        ] {
            if !(tol > 0.0) {
                return inv(format!("{name} must be positive: {tol}"));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.max_rcg_iters == 0 {
            return inv("max_outer, max_inner, max_rcg_iters must be positive".into());
        }
        Ok(self)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CU angles in radians.
    pub fn cu_angles_rad(&self) -> Vec<f64> {
        self.cu_angles_deg.iter().map(|a| a.to_radians()).collect()
    }

    /// Object sector bounds in radians.
    pub fn object_sector_rad(&self) -> (f64, f64) {
        (
            self.object_sector_deg.lower.to_radians(),
            self.object_sector_deg.upper.to_radians(),
        )
    }

    /// Beam angles in radians: centers of `n_beams` equal sub-sectors of the
    /// object sector, so the beams tile the object's angular extent.
    pub fn beam_angles_rad(&self) -> Vec<f64> {
        let (lo, hi) = self.object_sector_rad();
        let span = hi - lo;
        let l = self.n_beams as f64;
        (0..self.n_beams)
            .map(|i| lo + (i as f64 + 0.5) * span / l)
            .collect()
    }

    /// Total transmit power in linear milliwatts.
    pub fn p_tx_mw(&self) -> f64 {
        dbm_to_mw(self.p_tx_dbm)
    }

    /// Noise power in linear milliwatts.
    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }

    /// Per-CU SINR thresholds on a linear scale.
    pub fn sinr_thresholds_linear(&self) -> Vec<f64> {
        self.sinr_thresholds_db
            .iter()
            .map(|g| crate::db_to_linear(*g))
            .collect()
    }
}

/// The evaluation setup from the source system: 64 transmit antennas, 6 RF
/// chains, three users at {-60, -40, -20} degrees, a 20 m object spanning
/// [30, 50] degrees, 10 multipath components with angular spread pi/128,
/// pathloss 61.4 + 20 log10(d) with 5.8 dB shadowing, -91 dBm noise.
///
/// CU distances are not part of the quoted setup; 20 m (the object range) is
/// used for all users and can be overridden.
pub fn default_paper_scenario() -> ScenarioConfig {
    let n_tx = 64;
    ScenarioConfig {
        n_tx,
        n_rf: 6,
        n_cu: 3,
        n_beams: 3,
        cu_angles_deg: vec![-60.0, -40.0, -20.0],
        cu_distances_m: vec![20.0; 3],
        object_sector_deg: SectorDeg {
            lower: 30.0,
            upper: 50.0,
        },
        p_tx_dbm: 10.0,
        noise_power_dbm: -91.0,
        sinr_thresholds_db: vec![0.0; 3],
        n_paths: 10,
        angular_spread_rad: PI / (2.0 * n_tx as f64),
        pathloss: PathlossParams {
            epsilon_db: 61.4,
            exponent: 2.0,
            shadow_sigma_db: 5.8,
        },
        penalty_init: 1e-3,
        penalty_shrink: 0.5,
        tol_inner: 1e-3,
        tol_outer: 1e-4,
        tol_linesearch: 1e-6,
        max_outer: 30,
        max_inner: 20,
        max_rcg_iters: 100,
        seed: 1,
    }
}

/// A reduced scenario sized for CI and desk experiments: 16 antennas, 5 RF
/// chains, two users, three beams. Everything else follows
/// [`default_paper_scenario`], including the angular spread: the channel
/// keeps its full-scale scatter so user directions stay identifiable at the
/// reduced array size.
pub fn desk_scenario() -> ScenarioConfig {
    ScenarioConfig {
        n_tx: 16,
        n_rf: 5,
        n_cu: 2,
        n_beams: 3,
        cu_angles_deg: vec![-60.0, -20.0],
        cu_distances_m: vec![20.0; 2],
        sinr_thresholds_db: vec![0.0; 2],
        ..default_paper_scenario()
    }
}

/// Stream tags separating the independent RNG streams derived from one seed.
pub mod streams {
    pub const CHANNEL: u64 = 0;
    pub const INIT: u64 = 1;
}

/// Deterministic RNG for a (seed, stream) pair. Different streams from the
/// same seed are independent; the same pair always yields identical draws.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for Monte Carlo trial `trial` of a run rooted at `root`.
///
/// Keyed by the trial index only, so sweeps over a parameter grid reuse the
/// same channel realizations at every grid point (common random numbers).
pub fn trial_seed(root: u64, trial: u64) -> u64 {
    splitmix64(root ^ splitmix64(trial.wrapping_add(0x51D0_E2C3_B1A5_F00D)))
}

/// Short stable digest of a config, recorded in results tables so a row can
/// be traced back to the exact parameters that produced it.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}
