//! The penalty-based triple alternating optimization and its baselines.
//!
//! One run alternates three block updates inside a growing-penalty outer
//! loop: the RF phases descend on the unit-modulus manifold, the baseband
//! precoder solves its stationarity system, and the auxiliary SINR variables
//! project onto their per-user cones. The outer loop multiplies the penalty
//! factor by `1/penalty_shrink` until the worst auxiliary mismatch falls
//! under `tol_outer`, then the baseband precoder is rescaled to the exact
//! power budget and the beam weights are evaluated on the result.
//!
//! Channels are rescaled internally by each user's link budget: the stored
//! pathloss is stripped from the channel and folded into that user's noise
//! power, which leaves every SINR unchanged while keeping the channel scale
//! at `E||h'||^2 = n_tx` regardless of geometry. The penalty schedule then
//! traverses from beampattern-dominated to constraint-dominated as intended
//! for any link budget, and the mismatch threshold `tol_outer` is measured
//! against this unit-gain scale. Diagnostics report residuals in the same
//! normalized units.

use nalgebra::Complex;
use serde::Serialize;

use crate::bb_solver::{update_bb_power_bounded, update_bb_with_mode, BbMode, BbSystem};
use crate::channel::{steering_vector, ChannelSet};
use crate::error::{Error, Result};
use crate::manifold::{rcg_minimize_traced, PhaseVector, RcgOptions, RfSubproblemData};
use crate::metrics::{beam_weights, BeamWeights, HybridPrecoder};
use crate::scenario::{rng_stream, streams, ScenarioConfig};
use crate::socp::project_rows;
use crate::{CMat, CVec};
use rand::Rng;

/// Optional switches; the defaults reproduce the baseline algorithm.
#[derive(Debug, Clone, Copy, Default)]
pub struct OptimizerOptions {
    /// Stationarity matrix used by the baseband update.
    pub bb_mode: BbMode,
    /// Re-evaluate the beam weights after every outer iteration instead of
    /// keeping them uniform until the end.
    pub reweight_beams: bool,
}

/// One inner alternation pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerRecord {
    pub outer: usize,
    pub inner: usize,
    /// Penalized objective in noise-normalized units.
    pub objective: f64,
    /// Weighted linear beampattern gain at the current iterate.
    pub sbp_linear: f64,
    /// `max_{m,n} |h_m^H rf bb_n - zeta_{m,n}|^2`, noise-normalized.
    pub max_penalty_residual: f64,
    /// Ridge added by the baseband update in this pass (zero if none).
    pub ridge: f64,
    /// Whether the baseband update overshot the power budget and was pulled
    /// back onto the power sphere.
    pub power_capped: bool,
}

/// One outer (penalty) iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub alpha: f64,
    pub inner_iters: usize,
    pub ridge_events: usize,
    pub cap_events: usize,
    pub max_penalty_residual: f64,
}

/// Traces and final figures of one optimization run.
#[derive(Debug, Clone, Serialize)]
pub struct RunDiagnostics {
    pub inner: Vec<InnerRecord>,
    pub outer: Vec<OuterRecord>,
    /// Achieved SINRs after the final power rescaling, linear.
    pub final_sinrs: Vec<f64>,
    /// `||rf bb||_F^2` after rescaling, milliwatts.
    pub final_power_mw: f64,
    /// Whether the penalty residual met `tol_outer` before `max_outer`.
    pub converged: bool,
    /// Set when the residual failed to decrease across three consecutive
    /// outer iterations.
    pub residual_warning: bool,
    pub wall_clock_s: f64,
}

/// Streaming access to solver progress.
pub trait DiagnosticsSink {
    fn rcg_iteration(
        &mut self,
        _outer: usize,
        _inner: usize,
        _iteration: usize,
        _objective: f64,
        _grad_norm: f64,
    ) {
    }
    fn inner_pass(&mut self, _record: &InnerRecord) {}
}

/// Sink that drops everything.
pub struct NullSink;

impl DiagnosticsSink for NullSink {}

/// Steering vectors as the columns of one matrix.
fn steering_columns(n_tx: usize, angles_rad: &[f64]) -> CMat {
    let mut m = CMat::zeros(n_tx, angles_rad.len());
    for (l, angle) in angles_rad.iter().enumerate() {
        m.column_mut(l)
            .copy_from(&steering_vector(n_tx, *angle).entries);
    }
    m
}

fn random_phase_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
    })
}

/// `h_m^H effective` for every user, one row per user.
fn response_matrix(channels: &CMat, effective: &CMat) -> CMat {
    channels.adjoint() * effective
}

fn max_residual_sq(responses: &CMat, aux: &CMat) -> f64 {
    (responses - aux)
        .iter()
        .map(|e| e.norm_sqr())
        .fold(0.0, f64::max)
}

/// Runs the full penalty algorithm on one channel realization.
pub fn optimize(
    config: &ScenarioConfig,
    ch: &ChannelSet,
) -> Result<(HybridPrecoder, BeamWeights, RunDiagnostics)> {
    optimize_with(config, ch, &OptimizerOptions::default(), &mut NullSink)
}

/// As [`optimize`], with options and a diagnostics sink.
pub fn optimize_with(
    config: &ScenarioConfig,
    ch: &ChannelSet,
    opts: &OptimizerOptions,
    sink: &mut dyn DiagnosticsSink,
) -> Result<(HybridPrecoder, BeamWeights, RunDiagnostics)> {
    assert_eq!(ch.n_tx, config.n_tx, "channel set does not match config");
    assert_eq!(ch.cus.len(), config.n_cu, "channel set does not match config");
    let started = std::time::Instant::now();

    let n_tx = config.n_tx;
    let n_rf = config.n_rf;
    let n_streams = config.n_rf;
    let p_tx = config.p_tx_mw();
    let thresholds = config.sinr_thresholds_linear();

    // Link-budget normalization: strip each user's pathloss from the
    // channel and fold it into that user's noise, leaving SINRs unchanged.
    let budget: Vec<f64> = ch
        .cus
        .iter()
        .map(|cu| 10f64.powf(-0.05 * cu.pathloss_db))
        .collect();
    let channels = CMat::from_fn(n_tx, config.n_cu, |i, m| {
        ch.cus[m].h[i].unscale(budget[m])
    });
    let scaled_noise: Vec<f64> = ch
        .cus
        .iter()
        .zip(&budget)
        .map(|(cu, s)| {
            let sigma = cu.noise_power_mw.sqrt();
            assert!(sigma > 0.0, "noise power must be positive");
            sigma / s
        })
        .collect();

    let beam_angles = config.beam_angles_rad();
    let beams = steering_columns(n_tx, &beam_angles);
    let mut weights = vec![1.0 / config.n_beams as f64; config.n_beams];

    // Initialization: random RF phases; auxiliaries from the cone projection
    // of the responses of a power-budgeted scaled identity; baseband seeded
    // by the printed closed-form solve against those auxiliaries, which
    // starts the alternation off already serving the users.
    let init_err = |source: Error| Error::Optimizer {
        outer: 0,
        inner: 0,
        source: Box::new(source),
    };
    let mut rng = rng_stream(config.seed, streams::INIT);
    let mut rf = random_phase_matrix(n_tx, n_rf, &mut rng);
    let scale = (p_tx / (n_tx * n_rf) as f64).sqrt();
    let seed_bb = CMat::identity(n_rf, n_streams) * Complex::from(scale);
    let mut alpha = config.penalty_init;
    let mut aux = project_rows(
        &response_matrix(&channels, &(&rf * &seed_bb)),
        &thresholds,
        &scaled_noise,
    )
    .map_err(init_err)?;
    let mut bb = {
        let sys = BbSystem {
            eff_channels: rf.adjoint() * &channels,
            eff_beams: rf.adjoint() * &beams,
            beam_weights: weights.clone(),
            alpha,
            aux: aux.clone(),
        };
        let init = update_bb_with_mode(&sys, BbMode::Identity).map_err(init_err)?;
        // Rescale onto the power budget; the closed form is O(alpha) small.
        let norm = (&rf * &init.bb).norm();
        if norm > 0.0 {
            init.bb * Complex::from((p_tx.sqrt() / norm))
        } else {
            seed_bb
        }
    };
    let rcg_opts = RcgOptions {
        max_iters: config.max_rcg_iters,
        grad_tol: config.tol_linesearch,
    };

    let mut diag = RunDiagnostics {
        inner: Vec::new(),
        outer: Vec::new(),
        final_sinrs: Vec::new(),
        final_power_mw: 0.0,
        converged: false,
        residual_warning: false,
        wall_clock_s: 0.0,
    };

    for outer in 0..config.max_outer {
        let mut prev_objective = f64::INFINITY;
        let mut ridge_events = 0usize;
        let mut cap_events = 0usize;
        let mut residual = f64::INFINITY;

        for inner in 0..config.max_inner {
            let tag_err = |source: Error| Error::Optimizer {
                outer,
                inner,
                source: Box::new(source),
            };

            // RF phases.
            let data = RfSubproblemData {
                channels: channels.clone(),
                bb: bb.clone(),
                aux: aux.clone(),
                beams: beams.clone(),
                beam_weights: weights.clone(),
                alpha,
            };
            let w0 = PhaseVector::lift(&rf).map_err(tag_err)?;
            let w = rcg_minimize_traced(&w0, &data, &rcg_opts, |it, f, g| {
                sink.rcg_iteration(outer, inner, it, f, g)
            })
            .map_err(tag_err)?;
            rf = w.unlift().map_err(tag_err)?;

            // Baseband stationarity solve.
            let sys = BbSystem {
                eff_channels: rf.adjoint() * &channels,
                eff_beams: rf.adjoint() * &beams,
                beam_weights: weights.clone(),
                alpha,
                aux: aux.clone(),
            };
            // The printed update ignores the power bound, but the
            // beampattern term is concave and the unconstrained stationary
            // point runs away along beam directions at small alpha. Solving
            // the power-bounded subproblem exactly keeps every pass both
            // feasible and optimal; the bound goes slack by itself once the
            // penalty term dominates.
            let (bb_next, power_capped, ridge) = match opts.bb_mode {
                BbMode::Derived => {
                    let gram = rf.adjoint() * &rf;
                    let update =
                        update_bb_power_bounded(&sys, &gram, p_tx).map_err(tag_err)?;
                    (update.bb, update.boundary, 0.0)
                }
                BbMode::Identity => {
                    let update = update_bb_with_mode(&sys, opts.bb_mode).map_err(tag_err)?;
                    (update.bb, false, update.ridge)
                }
            };
            bb = bb_next;
            if power_capped {
                cap_events += 1;
            }
            if ridge > 0.0 {
                ridge_events += 1;
            }

            // Auxiliary projection.
            let effective = &rf * &bb;
            let responses = response_matrix(&channels, &effective);
            aux = project_rows(&responses, &thresholds, &scaled_noise).map_err(tag_err)?;

            // End-of-pass bookkeeping on the penalized objective.
            residual = max_residual_sq(&responses, &aux);
            let beam_resp = beams.adjoint() * &effective;
            let sbp_linear: f64 = weights
                .iter()
                .enumerate()
                .map(|(l, wl)| wl * beam_resp.row(l).norm_squared())
                .sum();
            let pass_objective =
                -sbp_linear + 0.5 * alpha * (&responses - &aux).norm_squared();
            let record = InnerRecord {
                outer,
                inner,
                objective: pass_objective,
                sbp_linear,
                max_penalty_residual: residual,
                ridge,
                power_capped,
            };
            sink.inner_pass(&record);
            diag.inner.push(record);

            let saturated = prev_objective.is_finite()
                && (prev_objective - pass_objective).abs()
                    <= config.tol_inner * prev_objective.abs().max(1.0);
            prev_objective = pass_objective;
            if saturated {
                break;
            }
        }

        let inner_iters = diag.inner.iter().filter(|r| r.outer == outer).count();
        diag.outer.push(OuterRecord {
            alpha,
            inner_iters,
            ridge_events,
            cap_events,
            max_penalty_residual: residual,
        });

        if residual < config.tol_outer {
            diag.converged = true;
            break;
        }
        alpha /= config.penalty_shrink;

        if opts.reweight_beams {
            let interim = HybridPrecoder::new(rf.clone(), bb.clone())?;
            if let Ok(updated) = beam_weights(&interim, &beam_angles) {
                weights = updated.w;
            }
        }
    }

    diag.residual_warning = diag.outer.windows(3).any(|w| {
        w[1].max_penalty_residual >= w[0].max_penalty_residual
            && w[2].max_penalty_residual >= w[1].max_penalty_residual
    });

    // Exact power: scale the baseband against the true effective norm.
    let norm = (&rf * &bb).norm();
    debug_assert!(norm > 0.0, "effective precoder collapsed to zero");
    bb *= Complex::from(p_tx.sqrt() / norm);

    let precoder = HybridPrecoder::new(rf, bb)?;
    let final_weights = beam_weights(&precoder, &beam_angles)?;
    diag.final_power_mw = precoder.total_power();
    diag.final_sinrs = (0..config.n_cu)
        .map(|m| crate::metrics::sinr(ch, &precoder, m))
        .collect();
    diag.wall_clock_s = started.elapsed().as_secs_f64();

    Ok((precoder, final_weights, diag))
}

/// Sensing-only baseline: the same machinery with no users, no SINR
/// constraints and no penalty term, maximizing the weighted beampattern
/// gain under the power and modulus constraints. Only the array geometry,
/// RF-chain count, power budget and solver knobs of `config` are used.
///
/// The weighted gain surface is nearly flat between solutions that split
/// power across the beams and ones that concentrate it, so alternation from
/// a random start can settle on either. For an upper-bound baseline the
/// concentrated corner matters: per-beam matched designs (every RF column
/// co-phased to one steering vector, all power on its stream) are evaluated
/// alongside the alternation output and the largest squared-gain candidate
/// wins.
pub fn radar_only(
    config: &ScenarioConfig,
    beam_angles_rad: &[f64],
) -> Result<(HybridPrecoder, BeamWeights)> {
    assert!(!beam_angles_rad.is_empty(), "radar-only needs beams");
    assert!(config.n_rf >= 1 && config.n_rf <= config.n_tx);
    let n_tx = config.n_tx;
    let n_rf = config.n_rf;
    let n_streams = beam_angles_rad.len();
    let p_tx = config.p_tx_mw();

    let beams = steering_columns(n_tx, beam_angles_rad);
    let weights = vec![1.0 / n_streams as f64; n_streams];

    let mut rng = rng_stream(config.seed, streams::INIT);
    let mut rf = random_phase_matrix(n_tx, n_rf, &mut rng);
    let mut bb = CMat::identity(n_rf, n_streams)
        * Complex::from((p_tx / (n_tx * n_rf) as f64).sqrt());

    let rcg_opts = RcgOptions {
        max_iters: config.max_rcg_iters,
        grad_tol: config.tol_linesearch,
    };
    let mut prev = f64::INFINITY;
    for _ in 0..config.max_inner {
        let data = RfSubproblemData {
            channels: CMat::zeros(n_tx, 0),
            bb: bb.clone(),
            aux: CMat::zeros(0, n_streams),
            beams: beams.clone(),
            beam_weights: weights.clone(),
            alpha: 1.0,
        };
        let w = rcg_minimize_traced(&PhaseVector::lift(&rf)?, &data, &rcg_opts, |_, _, _| ())?;
        rf = w.unlift()?;

        let sys = BbSystem {
            eff_channels: CMat::zeros(n_rf, 0),
            eff_beams: rf.adjoint() * &beams,
            beam_weights: weights.clone(),
            alpha: 1.0,
            aux: CMat::zeros(0, n_streams),
        };
        let gram = rf.adjoint() * &rf;
        bb = update_bb_power_bounded(&sys, &gram, p_tx)?.bb;

        let gain: f64 = {
            let beam_resp = beams.adjoint() * (&rf * &bb);
            weights
                .iter()
                .enumerate()
                .map(|(l, wl)| wl * beam_resp.row(l).norm_squared())
                .sum()
        };
        if (prev - (-gain)).abs() <= config.tol_inner * prev.abs().max(1.0) {
            break;
        }
        prev = -gain;
    }

    let norm = (&rf * &bb).norm();
    debug_assert!(norm > 0.0);
    bb *= Complex::from(p_tx.sqrt() / norm);

    let uniform = BeamWeights {
        w: weights.clone(),
    };
    let mut best = HybridPrecoder::new(rf, bb)?;
    let mut best_gain = crate::metrics::sbp_gain(&uniform, &best, beam_angles_rad);
    for l in 0..beams.ncols() {
        let target: CVec = beams.column(l).into();
        let candidate = matched_precoder(&target, n_rf, n_streams, p_tx);
        let gain = crate::metrics::sbp_gain(&uniform, &candidate, beam_angles_rad);
        if gain > best_gain {
            best_gain = gain;
            best = candidate;
        }
    }

    let w = beam_weights(&best, beam_angles_rad)?;
    Ok((best, w))
}

/// Full-power matched design toward one steering vector: every RF column
/// co-phased to it, the whole budget on the first stream.
fn matched_precoder(target: &CVec, n_rf: usize, n_streams: usize, p_tx: f64) -> HybridPrecoder {
    let n_tx = target.len();
    let rf = CMat::from_fn(n_tx, n_rf, |i, _| target[i].unscale(target[i].norm()));
    let mut bb = CMat::zeros(n_rf, n_streams);
    bb[(0, 0)] = Complex::from((p_tx / n_tx as f64).sqrt());
    HybridPrecoder::new(rf, bb).expect("matched RF entries are unit modulus")
}

/// Communication-only baseline: per-user phase-matched RF columns and a
/// regularized channel inversion in baseband, sensing streams left
/// unpowered. Serves as the maximum sum-rate endpoint of the tradeoff.
pub fn comm_only(config: &ScenarioConfig, ch: &ChannelSet) -> Result<HybridPrecoder> {
    assert!(config.n_cu >= 1, "communication-only needs users");
    assert_eq!(ch.cus.len(), config.n_cu);
    let n_tx = config.n_tx;
    let n_rf = config.n_rf;
    let n_streams = config.n_rf;
    let n_cu = config.n_cu;
    let p_tx = config.p_tx_mw();

    let channels = CMat::from_fn(n_tx, n_cu, |i, m| {
        ch.cus[m].h[i].unscale(ch.cus[m].noise_power_mw.sqrt())
    });

    // RF: the first n_cu columns co-phase each user's channel; the rest are
    // arbitrary unit-modulus fillers that the zero baseband rows silence.
    let mut rng = rng_stream(config.seed, streams::INIT);
    let mut rf = random_phase_matrix(n_tx, n_rf, &mut rng);
    for j in 0..n_cu.min(n_rf) {
        for i in 0..n_tx {
            let e = channels[(i, j)];
            rf[(i, j)] = if e.norm() > 0.0 {
                e.unscale(e.norm())
            } else {
                Complex::new(1.0, 0.0)
            };
        }
    }

    // Regularized inversion of the effective channels.
    let eff = rf.adjoint() * &channels;
    let gram = eff.adjoint() * &eff
        + CMat::identity(n_cu, n_cu) * Complex::from(n_cu as f64 / p_tx);
    let inverse = gram
        .try_inverse()
        .ok_or(Error::SingularBbSystem { min_eig: 0.0 })?;
    let comm = eff * inverse;

    let mut bb = CMat::zeros(n_rf, n_streams);
    bb.view_mut((0, 0), (n_rf, n_cu)).copy_from(&comm);

    let norm = (&rf * &bb).norm();
    if norm == 0.0 {
        return Err(Error::SingularBbSystem { min_eig: 0.0 });
    }
    bb *= Complex::from(p_tx.sqrt() / norm);
    HybridPrecoder::new(rf, bb)
}
