//! Replicate-loop throughput: rayon pool vs sequential baseline.
//!
//! The bootstrap and Monte Carlo drivers map per-replicate closures over
//! derived RNG streams, so a 1-thread pool, an N-thread pool, and the plain
//! sequential helper all produce identical output; only wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use donut_rd::elasticity::{bootstrap_ped, ElasticitySettings};
use donut_rd::parallel::{map_indexed, map_indexed_seq};
use donut_rd::rng::stream_rng;
use donut_rd::spec::{OutcomeKey, RdSpec};
use donut_rd::synth::{monte_carlo, simulate_cohort, CohortParams, MonteCarloSettings};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool builds")
}

fn bench_bootstrap_ped(c: &mut Criterion) {
    let cohort = simulate_cohort(&CohortParams::paper_calibration(7)).unwrap();
    let mut settings = ElasticitySettings::new(11);
    settings.replicates = 200;

    let mut group = c.benchmark_group("bootstrap_ped/200-replicates");
    group.sample_size(10);
    for threads in [1, num_threads()] {
        group.bench_with_input(BenchmarkId::new("threads", threads), &threads, |b, &t| {
            let pool = pool(t);
            b.iter(|| pool.install(|| bootstrap_ped(&cohort, &settings).unwrap()));
        });
    }
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let params = CohortParams::paper_calibration(3);
    let settings = MonteCarloSettings::new(100, 17);

    let mut group = c.benchmark_group("monte_carlo/100-replications");
    group.sample_size(10);
    for threads in [1, num_threads()] {
        group.bench_with_input(BenchmarkId::new("threads", threads), &threads, |b, &t| {
            let pool = pool(t);
            b.iter(|| pool.install(|| monte_carlo(&params, &settings).unwrap()));
        });
    }
    group.finish();
}

fn bench_replicate_map(c: &mut Criterion) {
    // the raw building block: one sharp fit per replicate on a fresh draw
    let params = CohortParams::paper_calibration(5);
    let spec = RdSpec::main_analysis(OutcomeKey::Oop);
    let work = |i: usize| {
        let mut rng = stream_rng(21, i as u64);
        use rand::RngCore;
        let mut p = params.clone();
        p.seed = rng.next_u64();
        let cohort = simulate_cohort(&p).unwrap();
        let donut = cohort.apply_donut(&spec).unwrap();
        donut_rd::estimators::sharp_rd(&donut, &spec).unwrap().jump
    };

    let mut group = c.benchmark_group("replicate_map/64-fits");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| map_indexed_seq(64, work)));
    group.bench_function("rayon", |b| b.iter(|| map_indexed(64, work)));
    group.finish();
}

fn num_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4)
}

criterion_group!(benches, bench_bootstrap_ped, bench_monte_carlo, bench_replicate_map);
criterion_main!(benches);
