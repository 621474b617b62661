//! Experiment runner for the library's Monte Carlo sweeps.
//!
//! ```text
//! mbol power-sweep  --out power.csv [--values 0,5,10,15] [--trials 50]
//! mbol tradeoff     --out tradeoff.csv [--values 0,4,8,12]
//! mbol beampattern  --out pattern.csv
//! mbol imsr         --out imsr.csv [--values 0,4,8,12]
//! ```
//!
//! Every subcommand accepts `--config <json>` for a full scenario, or relies
//! on the desk-scale defaults (`--paper-scale` switches to the full-size
//! evaluation setup and 500 trials). A JSON sidecar with the experiment
//! metadata is written next to each CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mbol::harness::{
    run_beampattern, run_imsr, run_power_sweep, run_tradeoff, ExperimentSpec, SweepVariable,
};
use mbol::scenario::{default_paper_scenario, desk_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "mbol", version, about = "Multi-beam ISAC hybrid beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SBP gain versus transmit power, proposed and radar-only curves
    PowerSweep(SweepArgs),
    /// Sum rate versus SBP gain across SINR thresholds, with the
    /// communication-only endpoint
    Tradeoff(SweepArgs),
    /// Converged transmit beampatterns of all schemes as (angle, dB) columns
    Beampattern(SweepArgs),
    /// Integrated mainlobe-to-sidelobe ratio versus SINR threshold
    Imsr(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario config JSON; desk-scale defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; a .json metadata sidecar is written alongside
    #[arg(long)]
    out: PathBuf,
    /// Monte Carlo trials per sweep point
    #[arg(long)]
    trials: Option<usize>,
    /// Root seed for channel draws and initialization
    #[arg(long)]
    seed: Option<u64>,
    /// Full-size evaluation scenario (64 antennas; 500 trials unless --trials)
    #[arg(long)]
    paper_scale: bool,
    /// Sweep values, comma separated (dBm for power, dB for thresholds)
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Beam counts emitted as separate curves, comma separated
    #[arg(long, value_delimiter = ',')]
    beam_counts: Option<Vec<usize>>,
    /// Override the total transmit power [dBm]
    #[arg(long)]
    p_tx_dbm: Option<f64>,
    /// Override per-CU SINR thresholds [dB]; one value broadcasts to all CUs
    #[arg(long, value_delimiter = ',')]
    sinr_db: Option<Vec<f64>>,
    /// Override the number of object beams (RF chains follow as CUs + beams)
    #[arg(long)]
    n_beams: Option<usize>,
}

impl SweepArgs {
    fn base_config(&self) -> mbol::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_json_file(path)?,
            None if self.paper_scale => default_paper_scenario(),
            None => desk_scenario(),
        };
        if let Some(p) = self.p_tx_dbm {
            cfg.p_tx_dbm = p;
        }
        if let Some(sinr) = &self.sinr_db {
            cfg.sinr_thresholds_db = if sinr.len() == 1 {
                vec![sinr[0]; cfg.n_cu]
            } else {
                sinr.clone()
            };
        }
        if let Some(l) = self.n_beams {
            cfg.n_beams = l;
            cfg.n_rf = cfg.n_cu + l;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()
    }

    fn spec(&self, sweep: SweepVariable, default_values: Vec<f64>) -> mbol::Result<ExperimentSpec> {
        let base = self.base_config()?;
        let mut spec = ExperimentSpec::new(base, sweep, self.values.clone().unwrap_or(default_values));
        spec.trials = self.trials.unwrap_or(if self.paper_scale { 500 } else { 50 });
        if let Some(counts) = &self.beam_counts {
            spec.beam_counts = counts.clone();
        }
        Ok(spec)
    }
}

fn run(cli: Cli) -> mbol::Result<()> {
    match cli.command {
        Command::PowerSweep(args) => {
            let spec = args.spec(SweepVariable::PTxDbm, vec![0.0, 5.0, 10.0, 15.0])?;
            let table = run_power_sweep(&spec)?;
            table.write(&args.out, &spec)?;
            report(&args.out, table.rows.len(), &table.warnings);
        }
        Command::Tradeoff(args) => {
            let spec = args.spec(SweepVariable::SinrThresholdDb, vec![0.0, 4.0, 8.0, 12.0])?;
            let table = run_tradeoff(&spec)?;
            table.write(&args.out, &spec)?;
            report(&args.out, table.rows.len(), &table.warnings);
        }
        Command::Beampattern(args) => {
            let base_power = args.p_tx_dbm;
            let spec = args.spec(
                SweepVariable::PTxDbm,
                vec![base_power.unwrap_or(10.0)],
            )?;
            let table = run_beampattern(&spec)?;
            table.write(&args.out, &spec)?;
            report(&args.out, table.angles_deg.len(), &table.warnings);
        }
        Command::Imsr(args) => {
            let spec = args.spec(SweepVariable::SinrThresholdDb, vec![0.0, 4.0, 8.0, 12.0])?;
            let table = run_imsr(&spec)?;
            table.write(&args.out, &spec)?;
            report(&args.out, table.rows.len(), &table.warnings);
        }
    }
    Ok(())
}

fn report(out: &PathBuf, rows: usize, warnings: &[String]) {
    println!("wrote {} ({rows} rows)", out.display());
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
