use mbol::*;

fn main() {
    let base = desk_scenario().validate().unwrap();
    for trial in [2u64, 3, 4] {
        let mut cfg = base.clone();
        cfg.seed = scenario::trial_seed(base.seed, trial);
        let ch = sample_channels(&cfg, &mut scenario::rng_stream(cfg.seed, scenario::streams::CHANNEL));
        let (p, _, d) = optimize(&cfg, &ch).unwrap();
        println!("trial {trial}: sinrs {:?}", d.final_sinrs.iter().map(|s| format!("{:.2}", s)).collect::<Vec<_>>());
        let sweep = metrics::beampattern_sweep(&p, 181);
        print!("  gains around -40: ");
        for (a, g) in sweep.iter().filter(|(a, _)| (-50.0..=-30.0).contains(a)) {
            print!("{a:.0}:{g:.2} ");
        }
        println!();
        print!("  gains around +40: ");
        for (a, g) in sweep.iter().filter(|(a, _)| (30.0..=50.0).contains(a)) {
            print!("{a:.0}:{g:.2} ");
        }
        println!();
        print!("  gains around -60: ");
        for (a, g) in sweep.iter().filter(|(a, _)| (-66.0..=-54.0).contains(a)) {
            print!("{a:.0}:{g:.2} ");
        }
        println!();
        // where is the energy? desired vs interference per user
        let e = p.effective();
        for m in 0..2 {
            let resp = ch.cus[m].h.adjoint() * &e;
            let mags: Vec<String> = resp.iter().map(|c| format!("{:.2e}", c.norm_sqr())).collect();
            println!("  user {m} |h^H E_k|^2 = {mags:?} noise {:.2e}", ch.cus[m].noise_power_mw);
        }
    }
}
