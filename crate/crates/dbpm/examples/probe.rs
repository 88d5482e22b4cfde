use dbpm::diagnostics::{self, fit_rate};
use dbpm::experiment::{run_single, ExperimentConfig};
use dbpm::BlockPartition;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let separation: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3.0);
    let init_radius: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let fstar_iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(200_000);
    let cfg = ExperimentConfig {
        blocks: vec![1, 5, 25],
        seeds: vec![0, 1, 2],
        horizon: 20_000,
        separation,
        init_radius,
        fstar_iterations: fstar_iters,
        ..ExperimentConfig::default()
    };
    println!("sep={separation} init={init_radius} fstar_iters={fstar_iters}");
    let mut error_runs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 3];
    for &seed in &cfg.seeds {
        let instance = cfg.build_instance(seed).unwrap();
        let reference = cfg
            .solve_reference_for(&instance, &BlockPartition::trivial(cfg.total_dim()))
            .unwrap();
        println!("seed {seed}: f_star={:.6} certified={} gap={:.2e}", reference.f_star, reference.certified, reference.certification_gap);
        for (bi, &b) in cfg.blocks.iter().enumerate() {
            let trace = run_single(&cfg, &instance, b, &reference).unwrap();
            error_runs[bi].push(trace.error_series(reference.f_star));
        }
    }
    for (bi, &b) in cfg.blocks.iter().enumerate() {
        let mean = diagnostics::mean_series(&error_runs[bi]);
        print!("B={b:2}: ");
        for t in [0usize, 100, 500, 1000, 2000, 4000, 8000, 12000, 16000, 19999] {
            print!("{:.2e} ", mean[t]);
        }
        match fit_rate(&mean, 0.2) {
            Ok(f) => println!("| slope={:.3e} floor={:.3e} r2={:.4}", f.slope, f.floor, f.pre_floor_r2),
            Err(e) => println!("| fit error: {e}"),
        }
    }
}
