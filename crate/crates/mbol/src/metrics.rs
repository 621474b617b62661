//! Figures of merit: beampattern, SBP gain, SINR, sum rate, IMSR, and the
//! MSE-optimal beam weights.
//!
//! Everything here is evaluated on linear scales; dB conversion belongs to
//! the export layer.

use crate::channel::{steering_vector, ChannelSet};
use crate::error::{Error, Result};
use crate::{CMat, CVec};

/// Hybrid transmit precoder: an RF phase-shifter matrix with unit-modulus
/// entries and a digital baseband matrix, one column per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    /// RF precoder, `n_tx x n_rf`, every entry on the unit circle.
    pub rf: CMat,
    /// Baseband precoder, `n_rf x n_streams`.
    pub bb: CMat,
}

/// Modulus slack tolerated on RF entries.
pub const RF_MODULUS_TOL: f64 = 1e-9;

impl HybridPrecoder {
    /// Builds a precoder, rejecting RF entries off the unit circle by more
    /// than [`RF_MODULUS_TOL`].
    pub fn new(rf: CMat, bb: CMat) -> Result<Self> {
        assert_eq!(
            rf.ncols(),
            bb.nrows(),
            "rf columns must match bb rows (one per RF chain)"
        );
        for (index, entry) in rf.iter().enumerate() {
            let modulus = entry.norm();
            if (modulus - 1.0).abs() > RF_MODULUS_TOL {
                return Err(Error::ModulusViolation { index, modulus });
            }
        }
        Ok(Self { rf, bb })
    }

    pub fn n_tx(&self) -> usize {
        self.rf.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.rf.ncols()
    }

    pub fn n_streams(&self) -> usize {
        self.bb.ncols()
    }

    /// The effective precoder `rf * bb`, `n_tx x n_streams`.
    pub fn effective(&self) -> CMat {
        &self.rf * &self.bb
    }

    /// Total radiated power `||rf * bb||_F^2`.
    pub fn total_power(&self) -> f64 {
        self.effective().norm_squared()
    }
}

/// Convex weights over the object beams.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    pub w: Vec<f64>,
}

/// Beampattern gain toward one angle: `chi(theta) = sum_k |a^H(theta) rf bb_k|^2`,
/// the power density the array radiates in that direction.
pub fn beampattern_gain(p: &HybridPrecoder, angle_rad: f64) -> f64 {
    gain_of_effective(&p.effective(), angle_rad)
}

fn gain_of_effective(effective: &CMat, angle_rad: f64) -> f64 {
    let a = steering_vector(effective.nrows(), angle_rad);
    (a.entries.adjoint() * effective).norm_squared()
}

/// Weighted sensing beampattern gain `Psi = sum_l w_l * chi(theta_l)^2`.
pub fn sbp_gain(weights: &BeamWeights, p: &HybridPrecoder, beam_angles_rad: &[f64]) -> f64 {
    assert_eq!(weights.w.len(), beam_angles_rad.len());
    let effective = p.effective();
    weights
        .w
        .iter()
        .zip(beam_angles_rad)
        .map(|(w, theta)| {
            let chi = gain_of_effective(&effective, *theta);
            w * chi * chi
        })
        .sum()
}

/// Linear combination of per-beam gains, `sum_l w_l * chi(theta_l)` — the
/// quantity the optimizer's objective carries.
pub fn sbp_gain_linear(weights: &BeamWeights, p: &HybridPrecoder, beam_angles_rad: &[f64]) -> f64 {
    assert_eq!(weights.w.len(), beam_angles_rad.len());
    let effective = p.effective();
    weights
        .w
        .iter()
        .zip(beam_angles_rad)
        .map(|(w, theta)| w * gain_of_effective(&effective, *theta))
        .sum()
}

/// SINR of CU `m` (0-based): desired power of stream `m` over interference
/// from every other stream plus that user's noise power.
pub fn sinr(ch: &ChannelSet, p: &HybridPrecoder, m: usize) -> f64 {
    let cu = &ch.cus[m];
    let responses: CVec = (cu.h.adjoint() * p.effective()).transpose();
    let desired = responses[m].norm_sqr();
    let interference: f64 = responses
        .iter()
        .enumerate()
        .filter(|(n, _)| *n != m)
        .map(|(_, r)| r.norm_sqr())
        .sum();
    desired / (interference + cu.noise_power_mw)
}

/// Downlink sum rate `sum_m log2(1 + SINR_m)` in bits/s/Hz.
pub fn sum_rate(ch: &ChannelSet, p: &HybridPrecoder) -> f64 {
    (0..ch.cus.len())
        .map(|m| (1.0 + sinr(ch, p, m)).log2())
        .sum()
}

/// Integrated mainlobe-to-sidelobe ratio of an arbitrary pattern.
///
/// Integrates `pattern` over `grid_size` midpoint cells spanning
/// [-pi/2, pi/2] and returns (mainlobe integral) / (sidelobe integral),
/// where the mainlobe is `[theta0 - delta/2, theta0 + delta/2]`.
pub fn imsr_of_pattern(
    pattern: impl Fn(f64) -> f64,
    theta0_rad: f64,
    delta_rad: f64,
    grid_size: usize,
) -> Result<f64> {
    assert!(grid_size >= 2, "imsr needs at least two grid cells");
    let half = std::f64::consts::FRAC_PI_2;
    let (lo, hi) = (theta0_rad - delta_rad / 2.0, theta0_rad + delta_rad / 2.0);
    assert!(
        lo > -half && hi < half,
        "mainlobe must lie inside (-pi/2, pi/2)"
    );
    let cell = std::f64::consts::PI / grid_size as f64;
    let mut main = 0.0;
    let mut side = 0.0;
    for i in 0..grid_size {
        let left = -half + i as f64 * cell;
        let value = pattern(left + 0.5 * cell);
        // Split boundary cells by their exact overlap with the mainlobe so
        // the region assignment does not jump between grid resolutions.
        let mut overlap = ((left + cell).min(hi) - left.max(lo)).clamp(0.0, cell);
        // Snap rounding dust so interior cells register as fully inside.
        if overlap > cell * (1.0 - 1e-12) {
            overlap = cell;
        } else if overlap < cell * 1e-12 {
            overlap = 0.0;
        }
        main += value * overlap;
        side += value * (cell - overlap);
    }
    if side == 0.0 {
        return Err(Error::DegenerateSidelobe);
    }
    Ok(main / side)
}

/// IMSR of a precoder's transmit beampattern.
pub fn imsr(p: &HybridPrecoder, theta0_rad: f64, delta_rad: f64, grid_size: usize) -> Result<f64> {
    let effective = p.effective();
    imsr_of_pattern(
        |theta| gain_of_effective(&effective, theta),
        theta0_rad,
        delta_rad,
        grid_size,
    )
}

/// Minimum-MSE beam weights: beams with smaller gain receive larger weight,
/// equalizing the per-beam estimation error. With `chi_l = chi(theta_l)`,
/// `w_l = (chi_L^2/chi_l^2) / (1 + sum_{i<L} chi_L^2/chi_i^2)` for `l < L`
/// and `w_L` closes the simplex.
pub fn beam_weights(p: &HybridPrecoder, beam_angles_rad: &[f64]) -> Result<BeamWeights> {
    let effective = p.effective();
    let chi: Vec<f64> = beam_angles_rad
        .iter()
        .map(|theta| gain_of_effective(&effective, *theta))
        .collect();
    beam_weights_from_gains(&chi)
}

/// Weight formula applied to precomputed per-beam gains.
pub fn beam_weights_from_gains(chi: &[f64]) -> Result<BeamWeights> {
    let l = chi.len();
    assert!(l >= 1, "at least one beam");
    for (beam, &c) in chi.iter().enumerate() {
        if c <= 0.0 {
            return Err(Error::ZeroBeamGain { beam });
        }
    }
    if l == 1 {
        return Ok(BeamWeights { w: vec![1.0] });
    }
    let last_sq = chi[l - 1] * chi[l - 1];
    let ratios: Vec<f64> = chi[..l - 1].iter().map(|c| last_sq / (c * c)).collect();
    let denom = 1.0 + ratios.iter().sum::<f64>();
    let mut w: Vec<f64> = ratios.iter().map(|r| r / denom).collect();
    let closure = 1.0 - w.iter().sum::<f64>();
    w.push(closure);
    Ok(BeamWeights { w })
}

/// Uniform pattern sweep over [-90, 90] degrees with `n_points` samples.
/// Returns `(angle_deg, linear_gain)` pairs, dB-free for downstream use.
pub fn beampattern_sweep(p: &HybridPrecoder, n_points: usize) -> Vec<(f64, f64)> {
    assert!(n_points >= 2);
    let effective = p.effective();
    (0..n_points)
        .map(|i| {
            let deg = -90.0 + 180.0 * i as f64 / (n_points - 1) as f64;
            (deg, gain_of_effective(&effective, deg.to_radians()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CuChannel;
    use approx::assert_relative_eq;
    use nalgebra::Complex;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_phase_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex::from_polar(1.0, rng.random_range(-PI..PI))
        })
    }

    fn random_complex_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_precoder(n_tx: usize, n_rf: usize, k: usize, rng: &mut impl Rng) -> HybridPrecoder {
        HybridPrecoder::new(
            random_phase_matrix(n_tx, n_rf, rng),
            random_complex_matrix(n_rf, k, rng),
        )
        .unwrap()
    }

    fn channel_of(h: CVec, noise: f64) -> ChannelSet {
        let n_tx = h.len();
        ChannelSet {
            n_tx,
            seed: 0,
            cus: vec![CuChannel {
                h,
                paths: vec![],
                pathloss_db: 0.0,
                noise_power_mw: noise,
            }],
        }
    }

    #[test]
    fn zero_bb_gives_zero_gain_everywhere() {
        let mut rng = crate::scenario::rng_stream(1, 0);
        let p =
            HybridPrecoder::new(random_phase_matrix(8, 3, &mut rng), CMat::zeros(3, 3)).unwrap();
        for angle in [-1.3, -0.4, 0.0, 0.7, 1.5] {
            assert_eq!(beampattern_gain(&p, angle), 0.0);
        }
    }

    #[test]
    fn gain_scales_quadratically_and_sbp_quartically_in_bb() {
        let mut rng = crate::scenario::rng_stream(2, 0);
        let p = random_precoder(8, 3, 3, &mut rng);
        let scaled = HybridPrecoder::new(p.rf.clone(), &p.bb * Complex::from(3.0)).unwrap();
        let beams = [0.4, 0.9];
        let w = BeamWeights { w: vec![0.5, 0.5] };
        for angle in [-0.8, 0.2, 1.1] {
            assert_relative_eq!(
                beampattern_gain(&scaled, angle),
                9.0 * beampattern_gain(&p, angle),
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(
            sbp_gain(&w, &scaled, &beams),
            81.0 * sbp_gain(&w, &p, &beams),
            max_relative = 1e-12
        );
    }

    #[test]
    fn two_element_gain_hand_value() {
        // rf = [1; 1], bb = [1], broadside: |(1+1)/sqrt(2)|^2 = 2.
        let rf = CMat::from_element(2, 1, Complex::new(1.0, 0.0));
        let bb = CMat::from_element(1, 1, Complex::new(1.0, 0.0));
        let p = HybridPrecoder::new(rf, bb).unwrap();
        assert_relative_eq!(beampattern_gain(&p, PI / 2.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn modulus_violation_is_rejected() {
        let mut rf = CMat::from_element(2, 1, Complex::new(1.0, 0.0));
        rf[(1, 0)] = Complex::new(0.5, 0.0);
        let bb = CMat::from_element(1, 1, Complex::new(1.0, 0.0));
        assert!(matches!(
            HybridPrecoder::new(rf, bb),
            Err(Error::ModulusViolation { index: 1, .. })
        ));
    }

    #[test]
    fn single_beam_sbp_is_squared_gain() {
        let mut rng = crate::scenario::rng_stream(3, 0);
        let p = random_precoder(8, 2, 2, &mut rng);
        let chi = beampattern_gain(&p, 0.6);
        let psi = sbp_gain(&BeamWeights { w: vec![1.0] }, &p, &[0.6]);
        assert_relative_eq!(psi, chi * chi, max_relative = 1e-12);
    }

    #[test]
    fn equal_gains_make_weights_irrelevant() {
        // Same angle listed twice: chi equal, so Psi = chi^2 for any simplex weights.
        let mut rng = crate::scenario::rng_stream(4, 0);
        let p = random_precoder(8, 2, 2, &mut rng);
        let chi = beampattern_gain(&p, -0.3);
        for w in [[0.5, 0.5], [0.9, 0.1], [0.2, 0.8]] {
            let psi = sbp_gain(&BeamWeights { w: w.to_vec() }, &p, &[-0.3, -0.3]);
            assert_relative_eq!(psi, chi * chi, max_relative = 1e-12);
        }
    }

    #[test]
    fn sbp_invariant_under_unitary_bb_rotation() {
        // Psi depends on bb only through bb * bb^H.
        let mut rng = crate::scenario::rng_stream(5, 0);
        let p = random_precoder(8, 3, 3, &mut rng);
        let q = random_complex_matrix(3, 3, &mut rng).qr().q();
        let rotated = HybridPrecoder::new(p.rf.clone(), &p.bb * q).unwrap();
        let w = BeamWeights {
            w: vec![0.3, 0.3, 0.4],
        };
        let beams = [0.5, 0.7, 0.9];
        assert_relative_eq!(
            sbp_gain(&w, &p, &beams),
            sbp_gain(&w, &rotated, &beams),
            max_relative = 1e-10
        );
        for theta in beams {
            assert_relative_eq!(
                beampattern_gain(&p, theta),
                beampattern_gain(&rotated, theta),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn single_stream_sinr_has_no_interference() {
        let mut rng = crate::scenario::rng_stream(6, 0);
        let p = random_precoder(4, 1, 1, &mut rng);
        let h = CVec::from_fn(4, |i, _| Complex::new(0.2 * i as f64 + 0.1, -0.3));
        let noise = 0.7;
        let ch = channel_of(h.clone(), noise);
        let desired = (h.adjoint() * p.effective())[(0, 0)].norm_sqr();
        assert_relative_eq!(sinr(&ch, &p, 0), desired / noise, max_relative = 1e-12);
    }

    #[test]
    fn zero_desired_column_gives_zero_sinr() {
        let mut rng = crate::scenario::rng_stream(7, 0);
        let mut p = random_precoder(4, 2, 2, &mut rng);
        p.bb.column_mut(0).fill(Complex::new(0.0, 0.0));
        let ch = channel_of(CVec::from_element(4, Complex::new(1.0, 0.0)), 0.1);
        assert_eq!(sinr(&ch, &p, 0), 0.0);
    }

    #[test]
    fn orthogonal_beams_are_interference_free() {
        // DFT columns are orthogonal and unit-modulus; pointing h at column 0
        // leaves streams 1..n invisible to this user.
        let n = 4;
        let dft = CMat::from_fn(n, n, |j, k| {
            Complex::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
        });
        let p = HybridPrecoder::new(dft.clone(), CMat::identity(n, n)).unwrap();
        let h: CVec = dft.column(0).into();
        let noise = 0.25;
        let ch = channel_of(h.clone(), noise);
        let desired = (h.adjoint() * p.effective())[(0, 0)].norm_sqr();
        assert_relative_eq!(sinr(&ch, &p, 0), desired / noise, max_relative = 1e-10);
    }

    #[test]
    fn sinr_invariant_under_column_phase_rotation() {
        let mut rng = crate::scenario::rng_stream(8, 0);
        let p = random_precoder(6, 3, 3, &mut rng);
        let mut rotated = p.clone();
        let phase = Complex::from_polar(1.0, 1.234);
        for e in rotated.bb.column_mut(1).iter_mut() {
            *e *= phase;
        }
        let h = CVec::from_fn(6, |i, _| Complex::new(0.1 * i as f64, 0.05));
        let ch = channel_of(h, 0.3);
        assert_relative_eq!(
            sinr(&ch, &p, 0),
            sinr(&ch, &rotated, 0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sum_rate_hand_values() {
        // Orthogonal beams give controlled SINRs; desired power is 16 per user.
        let n = 4;
        let dft = CMat::from_fn(n, n, |j, k| {
            Complex::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
        });
        let p = HybridPrecoder::new(dft.clone(), CMat::identity(n, n)).unwrap();
        let mk = |col: usize, noise: f64| CuChannel {
            h: dft.column(col).into(),
            paths: vec![],
            pathloss_db: 0.0,
            noise_power_mw: noise,
        };
        // SINRs {10 dB, 0 dB, 0 dB}.
        let ch = ChannelSet {
            n_tx: n,
            seed: 0,
            cus: vec![mk(0, 1.6), mk(1, 16.0), mk(2, 16.0)],
        };
        assert_relative_eq!(
            sum_rate(&ch, &p),
            (11.0f64).log2() + 2.0,
            max_relative = 1e-10
        );

        // All SINRs exactly 1.
        let ch_unit = ChannelSet {
            n_tx: n,
            seed: 0,
            cus: vec![mk(0, 16.0), mk(1, 16.0), mk(2, 16.0)],
        };
        assert_relative_eq!(sum_rate(&ch_unit, &p), 3.0, max_relative = 1e-10);

        let zero = HybridPrecoder::new(dft.clone(), CMat::zeros(n, n)).unwrap();
        assert_eq!(sum_rate(&ch, &zero), 0.0);
    }

    #[test]
    fn flat_pattern_imsr_is_ratio_of_widths() {
        // Mainlobe [30, 50] deg out of [-90, 90]: 20/160 with an aligned grid.
        let value =
            imsr_of_pattern(|_| 2.5, 40.0f64.to_radians(), 20.0f64.to_radians(), 1800).unwrap();
        assert_relative_eq!(value, 0.125, epsilon = 1e-12);
    }

    #[test]
    fn all_mainlobe_pattern_is_degenerate() {
        let result = imsr_of_pattern(
            |theta| if (theta - 0.7).abs() < 0.1 { 1.0 } else { 0.0 },
            0.7,
            0.35,
            512,
        );
        assert!(matches!(result, Err(Error::DegenerateSidelobe)));
    }

    #[test]
    fn imsr_is_scale_invariant_and_grid_stable() {
        let mut rng = crate::scenario::rng_stream(9, 0);
        let p = random_precoder(16, 4, 4, &mut rng);
        let theta0 = 40.0f64.to_radians();
        let delta = 20.0f64.to_radians();
        let base = imsr(&p, theta0, delta, 2048).unwrap();
        let fine = imsr(&p, theta0, delta, 4096).unwrap();
        assert!(
            ((fine - base) / base).abs() < 1e-3,
            "refinement moved IMSR from {base} to {fine}"
        );
        let scaled = HybridPrecoder::new(p.rf.clone(), &p.bb * Complex::from(4.2)).unwrap();
        assert_relative_eq!(
            imsr(&scaled, theta0, delta, 2048).unwrap(),
            base,
            max_relative = 1e-12
        );
    }

    #[test]
    fn beam_weight_hand_values() {
        assert_eq!(beam_weights_from_gains(&[3.7]).unwrap().w, vec![1.0]);

        let equal = beam_weights_from_gains(&[2.0, 2.0]).unwrap();
        assert_relative_eq!(equal.w[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(equal.w[1], 0.5, epsilon = 1e-15);

        let w = beam_weights_from_gains(&[1.0, 2.0, 2.0]).unwrap().w;
        assert_relative_eq!(w[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(w[2], 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn beam_weights_reject_zero_gain() {
        assert!(matches!(
            beam_weights_from_gains(&[1.0, 0.0, 2.0]),
            Err(Error::ZeroBeamGain { beam: 1 })
        ));
    }

    #[test]
    fn beam_weights_stay_on_simplex() {
        let mut rng = crate::scenario::rng_stream(10, 0);
        for _ in 0..1000 {
            let l = rng.random_range(1..=6);
            let chi: Vec<f64> = (0..l).map(|_| rng.random_range(1e-3..1e3)).collect();
            let w = beam_weights_from_gains(&chi).unwrap().w;
            assert!(w.iter().all(|&x| x >= -1e-12));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_covers_the_front_halfplane() {
        let mut rng = crate::scenario::rng_stream(11, 0);
        let p = random_precoder(8, 2, 2, &mut rng);
        let sweep = beampattern_sweep(&p, 181);
        assert_eq!(sweep.len(), 181);
        assert_eq!(sweep[0].0, -90.0);
        assert_eq!(sweep[180].0, 90.0);
        assert_relative_eq!(sweep[90].1, beampattern_gain(&p, 0.0), max_relative = 1e-12);
    }
}
