use netrecon::experiments::*;

fn main() {
    for seed in [20241u64, 101, 202, 303, 404, 505, 606, 707] {
        let mut cfg = ExperimentConfig::exp1(Profile::Smoke);
        cfg.solver_max_iterations = 3000;
        cfg.p_grid = Some(PGrid { start: 4, stop: 60, step: 4 });
        cfg.master_seed = seed;
        let t0 = std::time::Instant::now();
        let out = run_experiment_1(&cfg).unwrap();
        let ok_order = match (out.scenarios[0].p_c, out.scenarios[1].p_c) {
            (Some(a), Some(b)) => a <= b,
            _ => false,
        };
        let clean = out.scenarios.iter().all(|sc| {
            sc.p_c.is_some_and(|pc| sc.curve.iter().all(|&(p, m)| p < pc || m == 1.0))
        });
        println!(
            "seed {seed}: p_c {:?}/{:?}, order {ok_order}, plateau {clean} ({:.0}s)",
            out.scenarios[0].p_c,
            out.scenarios[1].p_c,
            t0.elapsed().as_secs_f64()
        );
    }
}
