use mbol::bb_solver::BbMode;
use mbol::harness::pattern_structure_warnings;
use mbol::optimizer::{optimize_with, NullSink, OptimizerOptions};
use mbol::*;
use rayon::prelude::*;

fn main() {
    let base = desk_scenario().validate().unwrap();
    let opts = OptimizerOptions {
        bb_mode: BbMode::Identity,
        ..Default::default()
    };
    let results: Vec<(bool, f64, bool)> = (0..20u64)
        .into_par_iter()
        .map(|trial| {
            let mut cfg = base.clone();
            cfg.seed = scenario::trial_seed(base.seed, trial);
            let ch = sample_channels(&cfg, &mut scenario::rng_stream(cfg.seed, scenario::streams::CHANNEL));
            match optimize_with(&cfg, &ch, &opts, &mut NullSink) {
                Ok((p, _, d)) => {
                    let sweep = metrics::beampattern_sweep(&p, 181);
                    let angles: Vec<f64> = sweep.iter().map(|(a, _)| *a).collect();
                    let gains: Vec<f64> = sweep.iter().map(|(_, g)| *g).collect();
                    let warnings = pattern_structure_warnings(&cfg, &angles, &gains, "t");
                    if !warnings.is_empty() && trial < 8 {
                        println!("trial {trial}: {warnings:?}");
                    }
                    let margin = d.final_sinrs.iter().zip(cfg.sinr_thresholds_linear()).map(|(s, g)| s / g).fold(f64::INFINITY, f64::min);
                    (warnings.is_empty(), margin, d.converged)
                }
                Err(e) => {
                    println!("trial {trial}: ERROR {e}");
                    (false, 0.0, false)
                }
            }
        })
        .collect();
    let ok = results.iter().filter(|r| r.0).count();
    let conv = results.iter().filter(|r| r.2).count();
    let worst = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    println!("identity mode: structure ok {ok}/20, converged {conv}/20, worst sinr margin {worst:.3}");
}
