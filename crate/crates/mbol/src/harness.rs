//! Monte Carlo experiment runners: power sweep, rate/SBP tradeoff,
//! beampattern export, and IMSR versus SINR threshold.
//!
//! Each runner fans trials out across a worker pool and reduces them in a
//! fixed order, so a results table is a pure function of the experiment
//! spec: re-running with the same seed reproduces the CSV byte for byte.
//! Trials are keyed by trial index alone, which means every sweep point of
//! one trial sees the same channel realization (common random numbers) and
//! per-trial orderings survive into the averages.
//!
//! All statistics are computed on linear scales; dB appears only in the
//! exported tables.

use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use crate::channel::sample_channels;
use crate::error::{Error, Result};
use crate::metrics::{
    beam_weights, beampattern_sweep, imsr, sbp_gain, sbp_gain_linear, sum_rate, BeamWeights,
    HybridPrecoder,
};
use crate::optimizer::{comm_only, optimize, radar_only};
use crate::scenario::{config_hash, rng_stream, streams, trial_seed, ScenarioConfig};
use crate::{linear_to_db, ChannelSet};

/// Mainlobe center used by the IMSR tables, degrees.
pub const IMSR_THETA0_DEG: f64 = 40.0;
/// Mainlobe width used by the IMSR tables, degrees.
pub const IMSR_DELTA_DEG: f64 = 20.0;
/// Integration grid for IMSR.
pub const IMSR_GRID: usize = 2048;
/// Beampattern export resolution: one-degree spacing over [-90, 90].
pub const PATTERN_POINTS: usize = 181;

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepVariable {
    PTxDbm,
    SinrThresholdDb,
    NBeams,
}

/// One experiment: a base scenario, a swept variable, and a trial budget.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub base: ScenarioConfig,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    /// Beam counts to emit as separate curves; defaults to the base count.
    pub beam_counts: Vec<usize>,
}

impl ExperimentSpec {
    pub fn new(base: ScenarioConfig, sweep: SweepVariable, values: Vec<f64>) -> Self {
        let beams = base.n_beams;
        Self {
            base,
            sweep,
            values,
            trials: 50,
            beam_counts: vec![beams],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidExperiment("trials must be >= 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidExperiment("sweep values are empty".into()));
        }
        if self.beam_counts.is_empty() {
            return Err(Error::InvalidExperiment("beam_counts is empty".into()));
        }
        Ok(())
    }

    /// The scenario at one sweep point for one beam count.
    fn config_at(&self, value: f64, n_beams: usize, seed: u64) -> Result<ScenarioConfig> {
        let mut cfg = self.base.clone();
        cfg.n_beams = n_beams;
        cfg.n_rf = cfg.n_cu + n_beams;
        cfg.seed = seed;
        match self.sweep {
            SweepVariable::PTxDbm => cfg.p_tx_dbm = value,
            SweepVariable::SinrThresholdDb => {
                cfg.sinr_thresholds_db = vec![value; cfg.n_cu];
            }
            SweepVariable::NBeams => {
                let l = value.round() as usize;
                cfg.n_beams = l;
                cfg.n_rf = cfg.n_cu + l;
            }
        }
        cfg.validate()
    }
}

/// Aggregated metrics of one (sweep value, scheme) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: &'static str,
    pub value: f64,
    pub scheme: String,
    pub trials: usize,
    pub failures: usize,
    /// Squared-gain SBP with uniform beam weights, mean and standard error.
    pub sbp_mean: f64,
    pub sbp_stderr: f64,
    /// Squared-gain SBP with the MSE-optimal weights of each run.
    pub sbp_mse_mean: f64,
    pub sbp_mse_stderr: f64,
    /// Linear weighted gain (uniform weights).
    pub chi_mean: f64,
    pub chi_stderr: f64,
    pub sum_rate_mean: f64,
    pub sum_rate_stderr: f64,
    /// Mean over trials of the worst SINR margin `min_m SINR_m / Gamma_m`.
    pub min_sinr_margin_mean: f64,
    pub imsr_mean: f64,
    pub imsr_stderr: f64,
    pub config_hash: String,
    pub seed: u64,
}

/// A finished sweep: rows plus any soft warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepTable {
    /// Renders the table as CSV with warnings as trailing comment lines.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            writer.serialize(row)?;
        }
        let mut text = String::from_utf8(writer.into_inner().expect("vec writer"))
            .expect("csv output is utf-8");
        for warning in &self.warnings {
            text.push_str(&format!("# warning: {warning}\n"));
        }
        Ok(text)
    }

    /// Writes the CSV next to a JSON sidecar describing the experiment.
    pub fn write(&self, path: &Path, spec: &ExperimentSpec) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        let sidecar = serde_json::json!({
            "spec": spec,
            "config_hash": config_hash(&spec.base),
            "rows": self.rows.len(),
            "warnings": self.warnings,
        });
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}

/// Per-run metrics, before aggregation.
#[derive(Debug, Clone, Copy)]
struct RunMetrics {
    sbp_uniform: f64,
    sbp_mse: f64,
    chi_uniform: f64,
    sum_rate: f64,
    min_sinr_margin: f64,
    imsr: f64,
}

fn uniform_weights(l: usize) -> BeamWeights {
    BeamWeights {
        w: vec![1.0 / l as f64; l],
    }
}

fn measure(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    p: &HybridPrecoder,
) -> Result<RunMetrics> {
    let beams = cfg.beam_angles_rad();
    let uniform = uniform_weights(beams.len());
    let mse = beam_weights(p, &beams).unwrap_or_else(|_| uniform.clone());
    let thresholds = cfg.sinr_thresholds_linear();
    let min_margin = (0..cfg.n_cu)
        .map(|m| crate::metrics::sinr(ch, p, m) / thresholds[m])
        .fold(f64::INFINITY, f64::min);
    Ok(RunMetrics {
        sbp_uniform: sbp_gain(&uniform, p, &beams),
        sbp_mse: sbp_gain(&mse, p, &beams),
        chi_uniform: sbp_gain_linear(&uniform, p, &beams),
        sum_rate: sum_rate(ch, p),
        min_sinr_margin: if cfg.n_cu == 0 {
            f64::INFINITY
        } else {
            min_margin
        },
        imsr: imsr(
            p,
            IMSR_THETA0_DEG.to_radians(),
            IMSR_DELTA_DEG.to_radians(),
            IMSR_GRID,
        )?,
    })
}

/// Mean and standard error of the mean, in input order.
fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn aggregate(
    sweep: &'static str,
    value: f64,
    scheme: String,
    trials: usize,
    cfg: &ScenarioConfig,
    runs: &[Option<RunMetrics>],
) -> SweepRow {
    let ok: Vec<&RunMetrics> = runs.iter().flatten().collect();
    let pick = |f: fn(&RunMetrics) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let (sbp_mean, sbp_stderr) = mean_stderr(&pick(|r| r.sbp_uniform));
    let (sbp_mse_mean, sbp_mse_stderr) = mean_stderr(&pick(|r| r.sbp_mse));
    let (chi_mean, chi_stderr) = mean_stderr(&pick(|r| r.chi_uniform));
    let (sum_rate_mean, sum_rate_stderr) = mean_stderr(&pick(|r| r.sum_rate));
    let (min_sinr_margin_mean, _) = mean_stderr(&pick(|r| r.min_sinr_margin));
    let (imsr_mean, imsr_stderr) = mean_stderr(&pick(|r| r.imsr));
    SweepRow {
        sweep,
        value,
        scheme,
        trials,
        failures: trials - ok.len(),
        sbp_mean,
        sbp_stderr,
        sbp_mse_mean,
        sbp_mse_stderr,
        chi_mean,
        chi_stderr,
        sum_rate_mean,
        sum_rate_stderr,
        min_sinr_margin_mean,
        imsr_mean,
        imsr_stderr,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
    }
}

/// Which design a cell evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    Proposed,
    RadarOnly,
    CommOnly,
}

impl Scheme {
    fn label(self, n_beams: usize) -> String {
        match self {
            Scheme::Proposed => format!("proposed-L{n_beams}"),
            Scheme::RadarOnly => format!("radar-only-L{n_beams}"),
            Scheme::CommOnly => "comm-only".to_string(),
        }
    }
}

/// Runs one trial of one cell; `Err` marks the trial failed for that cell.
fn run_cell(cfg: &ScenarioConfig, scheme: Scheme) -> Result<RunMetrics> {
    let ch = sample_channels(cfg, &mut rng_stream(cfg.seed, streams::CHANNEL));
    let precoder = match scheme {
        Scheme::Proposed => optimize(cfg, &ch)?.0,
        Scheme::RadarOnly => radar_only(cfg, &cfg.beam_angles_rad())?.0,
        Scheme::CommOnly => comm_only(cfg, &ch)?,
    };
    measure(cfg, &ch, &precoder)
}

fn sweep_over(
    spec: &ExperimentSpec,
    sweep_name: &'static str,
    schemes: &[Scheme],
) -> Result<SweepTable> {
    spec.validate()?;

    // Every (value, beam count, scheme) cell for each trial, trials in
    // parallel, reduced in index order afterwards.
    let mut cells: Vec<(f64, usize, Scheme)> = Vec::new();
    for &value in &spec.values {
        for &l in &spec.beam_counts {
            for &scheme in schemes {
                if scheme == Scheme::CommOnly && l != spec.beam_counts[0] {
                    continue; // comm-only does not depend on the beam count
                }
                cells.push((value, l, scheme));
            }
        }
    }

    let per_trial: Vec<Vec<Option<RunMetrics>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(spec.base.seed, trial as u64);
            cells
                .iter()
                .map(|&(value, l, scheme)| {
                    let cfg = spec.config_at(value, l, seed).ok()?;
                    run_cell(&cfg, scheme).ok()
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    for (cell_index, &(value, l, scheme)) in cells.iter().enumerate() {
        let runs: Vec<Option<RunMetrics>> = per_trial
            .iter()
            .map(|trial_cells| trial_cells[cell_index])
            .collect();
        let cfg = spec.config_at(value, l, spec.base.seed)?;
        rows.push(aggregate(
            sweep_name,
            value,
            scheme.label(l),
            spec.trials,
            &cfg,
            &runs,
        ));
    }

    let failures: usize = rows.iter().map(|r| r.failures).sum();
    let mut warnings = Vec::new();
    if failures > 0 {
        warnings.push(format!("{failures} trial cells failed and were excluded"));
    }
    Ok(SweepTable { rows, warnings })
}

/// SBP gain versus transmit power, proposed and radar-only curves.
pub fn run_power_sweep(spec: &ExperimentSpec) -> Result<SweepTable> {
    if spec.sweep != SweepVariable::PTxDbm {
        return Err(Error::InvalidExperiment(
            "power sweep requires the p_tx_dbm variable".into(),
        ));
    }
    sweep_over(spec, "p_tx_dbm", &[Scheme::Proposed, Scheme::RadarOnly])
}

/// Sum rate versus SBP gain as the SINR threshold sweeps, with the
/// communication-only endpoint.
pub fn run_tradeoff(spec: &ExperimentSpec) -> Result<SweepTable> {
    if spec.sweep != SweepVariable::SinrThresholdDb {
        return Err(Error::InvalidExperiment(
            "tradeoff requires the sinr_threshold_db variable".into(),
        ));
    }
    let mut table = sweep_over(spec, "sinr_threshold_db", &[Scheme::Proposed])?;

    // One communication-only endpoint; it ignores the threshold sweep.
    let endpoint_spec = ExperimentSpec {
        values: vec![spec.values[0]],
        ..spec.clone()
    };
    let endpoint = sweep_over(&endpoint_spec, "sinr_threshold_db", &[Scheme::CommOnly])?;
    for mut row in endpoint.rows {
        row.value = f64::NAN;
        table.rows.push(row);
    }
    table.warnings.extend(endpoint.warnings);
    Ok(table)
}

/// IMSR versus the SINR threshold, proposed and radar-only.
pub fn run_imsr(spec: &ExperimentSpec) -> Result<SweepTable> {
    if spec.sweep != SweepVariable::SinrThresholdDb {
        return Err(Error::InvalidExperiment(
            "imsr sweep requires the sinr_threshold_db variable".into(),
        ));
    }
    sweep_over(
        spec,
        "sinr_threshold_db",
        &[Scheme::Proposed, Scheme::RadarOnly],
    )
}

/// One beampattern per scheme on a single converged instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternTable {
    pub angles_deg: Vec<f64>,
    /// `(scheme label, gain in dB per angle)`.
    pub patterns: Vec<(String, Vec<f64>)>,
    pub warnings: Vec<String>,
}

impl BeampatternTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["angle_deg".to_string()];
        header.extend(self.patterns.iter().map(|(label, _)| format!("{label}_db")));
        writer.write_record(&header)?;
        for (i, angle) in self.angles_deg.iter().enumerate() {
            let mut record = vec![format!("{angle}")];
            for (_, gains) in &self.patterns {
                record.push(format!("{}", gains[i]));
            }
            writer.write_record(&record)?;
        }
        let mut text = String::from_utf8(writer.into_inner().expect("vec writer"))
            .expect("csv output is utf-8");
        for warning in &self.warnings {
            text.push_str(&format!("# warning: {warning}\n"));
        }
        Ok(text)
    }

    pub fn write(&self, path: &Path, spec: &ExperimentSpec) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        let sidecar = serde_json::json!({
            "spec": spec,
            "config_hash": config_hash(&spec.base),
            "schemes": self.patterns.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>(),
            "warnings": self.warnings,
        });
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}

/// Checks a linear-scale pattern for the structure the proposed design
/// should show: a local maximum near every CU angle, and more mean gain on
/// the object sector than off it. Returns warnings instead of failing.
pub fn pattern_structure_warnings(
    cfg: &ScenarioConfig,
    angles_deg: &[f64],
    gains: &[f64],
    label: &str,
) -> Vec<String> {
    let mut warnings = Vec::new();
    for &cu in &cfg.cu_angles_deg {
        let mut found = false;
        for i in 1..angles_deg.len() - 1 {
            if (angles_deg[i] - cu).abs() <= 3.0
                && gains[i] > gains[i - 1]
                && gains[i] >= gains[i + 1]
            {
                found = true;
                break;
            }
        }
        if !found {
            warnings.push(format!("{label}: no local maximum within 3 deg of CU at {cu} deg"));
        }
    }
    let (lo, hi) = (cfg.object_sector_deg.lower, cfg.object_sector_deg.upper);
    let (mut sector, mut sector_n, mut side, mut side_n) = (0.0, 0usize, 0.0, 0usize);
    for (a, g) in angles_deg.iter().zip(gains) {
        if *a >= lo && *a <= hi {
            sector += g;
            sector_n += 1;
        } else {
            side += g;
            side_n += 1;
        }
    }
    let sector_mean = sector / sector_n.max(1) as f64;
    let side_mean = side / side_n.max(1) as f64;
    if sector_mean <= side_mean {
        warnings.push(format!(
            "{label}: object-sector mean gain {sector_mean:.3e} does not exceed sidelobe mean {side_mean:.3e}"
        ));
    }
    warnings
}

/// Converged beampatterns for the proposed, radar-only, and
/// communication-only designs on the first trial's channels.
pub fn run_beampattern(spec: &ExperimentSpec) -> Result<BeampatternTable> {
    spec.validate()?;
    let seed = trial_seed(spec.base.seed, 0);
    let cfg = spec
        .config_at(spec.values[0], spec.beam_counts[0], seed)
        .map_err(|e| Error::InvalidExperiment(format!("beampattern config: {e}")))?;
    let ch = sample_channels(&cfg, &mut rng_stream(cfg.seed, streams::CHANNEL));

    let proposed = optimize(&cfg, &ch)?.0;
    let radar = radar_only(&cfg, &cfg.beam_angles_rad())?.0;
    let comm = comm_only(&cfg, &ch)?;

    let mut warnings = Vec::new();
    let mut angles_deg = Vec::new();
    let mut patterns = Vec::new();
    let mut sector_means = Vec::new();
    for (label, p) in [
        ("proposed", &proposed),
        ("radar_only", &radar),
        ("comm_only", &comm),
    ] {
        let sweep = beampattern_sweep(p, PATTERN_POINTS);
        if angles_deg.is_empty() {
            angles_deg = sweep.iter().map(|(a, _)| *a).collect();
        }
        let linear: Vec<f64> = sweep.iter().map(|(_, g)| *g).collect();
        if label == "proposed" {
            warnings.extend(pattern_structure_warnings(&cfg, &angles_deg, &linear, label));
        }
        let (lo, hi) = (cfg.object_sector_deg.lower, cfg.object_sector_deg.upper);
        let in_sector: Vec<f64> = angles_deg
            .iter()
            .zip(&linear)
            .filter(|(a, _)| **a >= lo && **a <= hi)
            .map(|(_, g)| *g)
            .collect();
        sector_means.push((label, in_sector.iter().sum::<f64>() / in_sector.len() as f64));
        let db: Vec<f64> = linear.iter().map(|g| linear_to_db(g.max(1e-30))).collect();
        patterns.push((label.to_string(), db));
    }
    let proposed_sector = sector_means[0].1;
    let radar_sector = sector_means[1].1;
    if radar_sector < proposed_sector {
        warnings.push(format!(
            "radar-only object-sector mean {radar_sector:.3e} below proposed {proposed_sector:.3e}"
        ));
    }

    Ok(BeampatternTable {
        angles_deg,
        patterns,
        warnings,
    })
}
