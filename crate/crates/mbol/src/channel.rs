//! Array steering vectors and random mmWave MISO channels.
//!
//! The transmit array is a half-wavelength uniform linear array, so the
//! response toward angle `theta` has entry `k` equal to
//! `exp(j*pi*k*cos(theta)) / sqrt(N)`. Channels are sums of a few planar
//! paths: per user, path departure angles follow a truncated Laplacian
//! around the user's direction and path gains are circularly-symmetric
//! Gaussian with variance set by the distance-dependent pathloss.

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::{PathlossParams, ScenarioConfig};
use crate::{C64, CVec};

/// Unit-norm array response toward a fixed angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: CVec,
    pub angle_rad: f64,
}

/// Array response vector of an `n`-element half-wavelength ULA.
///
/// Entry `k` is `exp(j*pi*k*cos(angle_rad)) / sqrt(n)`; entry 0 is exactly
/// `1/sqrt(n)` and every entry has magnitude `1/sqrt(n)`, so the vector has
/// unit norm. The response depends on the angle only through its cosine.
pub fn steering_vector(n: usize, angle_rad: f64) -> SteeringVector {
    assert!(n >= 1, "steering vector needs at least one element");
    let scale = 1.0 / (n as f64).sqrt();
    let cos = angle_rad.cos();
    let entries = CVec::from_iterator(
        n,
        (0..n).map(|k| {
            let phase = std::f64::consts::PI * k as f64 * cos;
            Complex::from_polar(scale, phase)
        }),
    );
    SteeringVector { entries, angle_rad }
}

/// Distance pathloss in dB: `epsilon + 10*exponent*log10(d) + shadow_db`.
///
/// The shadowing realization is drawn by the caller and passed in, keeping
/// this function deterministic.
pub fn pathloss_db(d_m: f64, params: &PathlossParams, shadow_db: f64) -> f64 {
    debug_assert!(d_m > 0.0, "pathloss needs a positive distance");
    params.epsilon_db + 10.0 * params.exponent * d_m.log10() + shadow_db
}

/// One multipath component: departure angle and complex gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub angle_rad: f64,
    pub gain: C64,
}

/// Channel of one communication user, along with the draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CuChannel {
    /// Channel vector `h` of length `n_tx`; the received symbol is `h^H x`.
    pub h: CVec,
    pub paths: Vec<PathComponent>,
    pub pathloss_db: f64,
    /// Noise power at this user, linear milliwatts.
    pub noise_power_mw: f64,
}

/// Channel realizations for every CU of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub n_tx: usize,
    /// Seed recorded for replay metadata; the set itself is already drawn.
    pub seed: u64,
    pub cus: Vec<CuChannel>,
}

/// Assembles a channel vector from its paths: `h^H = sum_i gain_i * a^H(angle_i)`,
/// i.e. `h = sum_i conj(gain_i) * a(angle_i)`.
pub fn channel_from_paths(n_tx: usize, paths: &[PathComponent]) -> CVec {
    let mut h = CVec::zeros(n_tx);
    for p in paths {
        let a = steering_vector(n_tx, p.angle_rad);
        h += a.entries * p.gain.conj();
    }
    h
}

/// Inverse-CDF draw from a Laplacian with the given scale, truncated to
/// `mean +/- 2*scale`.
fn truncated_laplacian(rng: &mut impl Rng, mean: f64, scale: f64) -> f64 {
    // CDF of Laplace(0, b) at the truncation edge +/-2b.
    let edge = 0.5 * (-2.0f64).exp();
    let u: f64 = rng.random_range(edge..(1.0 - edge));
    let x = if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    };
    mean + x
}

/// Draws a full channel set for the scenario.
///
/// Per CU: one shadowing realization (shared by all of that user's paths),
/// `n_paths` departure angles from a truncated Laplacian centered on the
/// user's configured angle, and complex Gaussian path gains with variance
/// `(n_tx / n_paths) * 10^(-PL/10)`.
pub fn sample_channels(config: &ScenarioConfig, rng: &mut impl Rng) -> ChannelSet {
    let shadow = Normal::new(0.0, config.pathloss.shadow_sigma_db)
        .expect("shadow sigma must be a valid std dev");
    let gamma = (config.n_tx as f64 / config.n_paths as f64).sqrt();
    let noise_mw = config.noise_power_mw();
    let angles = config.cu_angles_rad();

    let cus = (0..config.n_cu)
        .map(|m| {
            let shadow_db = if config.pathloss.shadow_sigma_db > 0.0 {
                shadow.sample(rng)
            } else {
                0.0
            };
            let pl_db = pathloss_db(config.cu_distances_m[m], &config.pathloss, shadow_db);
            // Std dev per complex gain; each quadrature carries half the variance.
            let amp = gamma * 10f64.powf(-0.05 * pl_db);
            let quad = amp / 2f64.sqrt();
            let paths = (0..config.n_paths)
                .map(|_| {
                    let angle_rad =
                        truncated_laplacian(rng, angles[m], config.angular_spread_rad);
                    let re: f64 = rng.sample(rand_distr::StandardNormal);
                    let im: f64 = rng.sample(rand_distr::StandardNormal);
                    PathComponent {
                        angle_rad,
                        gain: Complex::new(quad * re, quad * im),
                    }
                })
                .collect::<Vec<_>>();
            CuChannel {
                h: channel_from_paths(config.n_tx, &paths),
                paths,
                pathloss_db: pl_db,
                noise_power_mw: noise_mw,
            }
        })
        .collect();

    ChannelSet {
        n_tx: config.n_tx,
        seed: config.seed,
        cus,
    }
}

// ── JSON replay schema ──────────────────────────────────────────────────────
//
// {
//   "n_tx": 64, "seed": 1,
//   "cus": [ { "pathloss_db": 87.4, "noise_power_mw": 7.9e-13,
//              "paths": [ {"angle_rad": -1.04, "gain_re": ..., "gain_im": ...} ] } ]
// }
//
// Channel vectors are not stored; they are reassembled from the paths, which
// reproduces them exactly (same summation order, round-trip-exact floats).

#[derive(Serialize, Deserialize)]
struct PathJson {
    angle_rad: f64,
    gain_re: f64,
    gain_im: f64,
}

#[derive(Serialize, Deserialize)]
struct CuJson {
    pathloss_db: f64,
    noise_power_mw: f64,
    paths: Vec<PathJson>,
}

#[derive(Serialize, Deserialize)]
struct ChannelSetJson {
    n_tx: usize,
    seed: u64,
    cus: Vec<CuJson>,
}

impl ChannelSet {
    pub fn to_json(&self) -> Result<String> {
        let doc = ChannelSetJson {
            n_tx: self.n_tx,
            seed: self.seed,
            cus: self
                .cus
                .iter()
                .map(|cu| CuJson {
                    pathloss_db: cu.pathloss_db,
                    noise_power_mw: cu.noise_power_mw,
                    paths: cu
                        .paths
                        .iter()
                        .map(|p| PathJson {
                            angle_rad: p.angle_rad,
                            gain_re: p.gain.re,
                            gain_im: p.gain.im,
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChannelSetJson = serde_json::from_str(text)?;
        let cus = doc
            .cus
            .into_iter()
            .map(|cu| {
                let paths: Vec<PathComponent> = cu
                    .paths
                    .into_iter()
                    .map(|p| PathComponent {
                        angle_rad: p.angle_rad,
                        gain: Complex::new(p.gain_re, p.gain_im),
                    })
                    .collect();
                CuChannel {
                    h: channel_from_paths(doc.n_tx, &paths),
                    paths,
                    pathloss_db: cu.pathloss_db,
                    noise_power_mw: cu.noise_power_mw,
                }
            })
            .collect();
        Ok(ChannelSet {
            n_tx: doc.n_tx,
            seed: doc.seed,
            cus,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_paper_scenario, rng_stream, streams, SectorDeg};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn paper_pathloss() -> PathlossParams {
        PathlossParams {
            epsilon_db: 61.4,
            exponent: 2.0,
            shadow_sigma_db: 5.8,
        }
    }

    #[test]
    fn broadside_steering_is_flat() {
        let sv = steering_vector(4, PI / 2.0);
        for e in sv.entries.iter() {
            assert_relative_eq!(e.re, 0.5, epsilon = 1e-15);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_element_is_unity() {
        let sv = steering_vector(1, 0.7);
        assert_eq!(sv.entries.len(), 1);
        assert_relative_eq!(sv.entries[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(sv.entries[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_element_response_at_sixty_degrees() {
        // cos(60 deg) = 1/2, so the second entry carries phase pi/2.
        let sv = steering_vector(2, PI / 3.0);
        let s = 1.0 / 2f64.sqrt();
        assert_relative_eq!(sv.entries[0].re, s, epsilon = 1e-15);
        assert_relative_eq!(sv.entries[0].im, 0.0, epsilon = 1e-15);
        assert_relative_eq!(sv.entries[1].re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(sv.entries[1].im, s, epsilon = 1e-15);
    }

    #[test]
    fn steering_vectors_have_unit_norm() {
        for n in [1usize, 2, 7, 16, 64] {
            for angle in [-1.2f64, -0.3, 0.0, 0.9, 1.5] {
                let sv = steering_vector(n, angle);
                assert_relative_eq!(sv.entries.norm(), 1.0, epsilon = 1e-12);
                // Entry 0 is exactly real 1/sqrt(n).
                assert_eq!(sv.entries[0], Complex::new(1.0 / (n as f64).sqrt(), 0.0));
            }
        }
    }

    #[test]
    fn steering_depends_on_angle_only_through_cosine() {
        // theta and -theta share a cosine, hence an identical response.
        let a = steering_vector(8, 0.83);
        let b = steering_vector(8, -0.83);
        assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn pathloss_at_one_meter_is_epsilon() {
        assert_relative_eq!(pathloss_db(1.0, &paper_pathloss(), 0.0), 61.4);
    }

    #[test]
    fn pathloss_at_hundred_meters() {
        assert_relative_eq!(pathloss_db(100.0, &paper_pathloss(), 0.0), 101.4);
    }

    #[test]
    fn shadowing_is_additive() {
        for d in [0.5, 3.0, 20.0, 417.0] {
            let base = pathloss_db(d, &paper_pathloss(), 0.0);
            let shadowed = pathloss_db(d, &paper_pathloss(), 5.8);
            assert_relative_eq!(shadowed - base, 5.8, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_path_channel_matches_scaled_steering() {
        // One path with gain sqrt(n_tx) (the normalization for n_paths = 1)
        // gives h^H = sqrt(n_tx) a^H(theta), i.e. h = sqrt(n_tx) a(theta).
        let n_tx = 8;
        let theta = 0.4;
        let paths = [PathComponent {
            angle_rad: theta,
            gain: Complex::new((n_tx as f64).sqrt(), 0.0),
        }];
        let h = channel_from_paths(n_tx, &paths);
        let a = steering_vector(n_tx, theta).entries * Complex::from((n_tx as f64).sqrt());
        assert_relative_eq!((h - a).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reconstruction_from_stored_paths_is_exact() {
        let cfg = default_paper_scenario();
        let mut rng = rng_stream(cfg.seed, streams::CHANNEL);
        let set = sample_channels(&cfg, &mut rng);
        for cu in &set.cus {
            let rebuilt = channel_from_paths(set.n_tx, &cu.paths);
            assert_eq!(rebuilt, cu.h);
            assert_eq!(cu.paths.len(), cfg.n_paths);
        }
    }

    #[test]
    fn same_seed_gives_identical_channels() {
        let cfg = default_paper_scenario();
        let a = sample_channels(&cfg, &mut rng_stream(9, streams::CHANNEL));
        let b = sample_channels(&cfg, &mut rng_stream(9, streams::CHANNEL));
        assert_eq!(a, b);
    }

    #[test]
    fn mean_channel_power_matches_pathloss_budget() {
        // With shadowing off, E||h||^2 = n_tx * 10^(-PL(d)/10).
        let mut cfg = ScenarioConfig {
            n_tx: 16,
            n_rf: 2,
            n_cu: 1,
            n_beams: 1,
            cu_angles_deg: vec![-40.0],
            cu_distances_m: vec![20.0],
            sinr_thresholds_db: vec![0.0],
            object_sector_deg: SectorDeg {
                lower: 30.0,
                upper: 50.0,
            },
            ..default_paper_scenario()
        };
        cfg.pathloss.shadow_sigma_db = 0.0;
        let cfg = cfg.validate().unwrap();

        let pl = pathloss_db(20.0, &cfg.pathloss, 0.0);
        let expected = cfg.n_tx as f64 * 10f64.powf(-0.1 * pl);

        let mut rng = rng_stream(3, streams::CHANNEL);
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| sample_channels(&cfg, &mut rng).cus[0].h.norm_squared())
            .sum::<f64>()
            / draws as f64;
        assert!(
            (mean - expected).abs() / expected < 0.03,
            "mean {mean:.3e} vs expected {expected:.3e}"
        );
    }

    #[test]
    fn laplacian_draws_stay_in_truncation_window() {
        let mut rng = rng_stream(5, 7);
        let (mean, scale) = (0.3, 0.05);
        for _ in 0..20_000 {
            let x = truncated_laplacian(&mut rng, mean, scale);
            assert!(x >= mean - 2.0 * scale && x <= mean + 2.0 * scale);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let cfg = default_paper_scenario();
        let set = sample_channels(&cfg, &mut rng_stream(11, streams::CHANNEL));
        let json = set.to_json().unwrap();
        let back = ChannelSet::from_json(&json).unwrap();
        assert_eq!(set, back);
    }
}
