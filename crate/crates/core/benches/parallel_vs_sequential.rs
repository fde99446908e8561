//! Throughput of the data-parallel loops against their sequential
//! fallbacks: the seed-sweep experiment runner and the martingale
//! Monte-Carlo suite. Run with `cargo bench -p distucrl`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use distucrl::coordinator::SyncOptions;
use distucrl::envs::make_riverswim;
use distucrl::exec::{indexed_map, ExecMode};
use distucrl::harness::check_martingale_bound;
use distucrl::mdp::optimal_gain;
use distucrl::sim::run_dist_ucrl;
use distucrl::trace::{Algorithm, RunMeta};

fn bench_seed_sweep(c: &mut Criterion) {
    let mdp = make_riverswim(6).unwrap();
    let rho_star = optimal_gain(&mdp, 1e-8).unwrap().gain;
    let opts = SyncOptions::default();
    let run_seed = |seed: usize| {
        let meta = RunMeta {
            env: "riverswim6".into(),
            algo: Algorithm::DistUcrl,
            n_agents: 4,
            horizon: 4000,
            seed: seed as u64 + 1,
            n_states: 6,
            n_actions: 2,
            rho_star,
            config_hash: "bench".into(),
        };
        run_dist_ucrl(&mdp, meta, &opts, false).unwrap().final_regret()
    };
    let mut group = c.benchmark_group("seed_sweep_rs6_m4_t4000_8seeds");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| indexed_map(mode, 8, run_seed));
        });
    }
    group.finish();
}

fn bench_martingale_suite(c: &mut Criterion) {
    let scale = ((8 * 1000) as f64).sqrt();
    let grid: Vec<f64> = [0.5, 1.0, 2.0, 4.0].iter().map(|k| k * scale).collect();
    let mut group = c.benchmark_group("martingale_m8_t1000_10k_trials");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| check_martingale_bound(8, 1000, 2.0, &grid, 10_000, 1, mode).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_seed_sweep, bench_martingale_suite);
criterion_main!(benches);
