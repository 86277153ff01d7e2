use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pass_bench::fixture;
use pass_core::baselines::{fd_wmmse, grid_oracle, uniform_pass, wmmse_beam};
use pass_core::effective_channel;
use pass_core::kkt::{decode_raw, dual_search, raw_len, SearchConfig};
use pass_core::mmpdd::{self, init_solver, initial_placement, inner_loop, SolverConfig};
use std::hint::black_box;

fn channel(c: &mut Criterion) {
    let mut group = c.benchmark_group("effective_channel");
    for (k, l) in [(2, 4), (4, 8)] {
        let s = fixture(k, l, 1);
        let x = initial_placement(&s);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("K{k}_L{l}")),
            &s,
            |b, s| b.iter(|| effective_channel(black_box(s), black_box(&x)).unwrap()),
        );
    }
    group.finish();
}

fn beamforming(c: &mut Criterion) {
    let s = fixture(4, 8, 2);
    let rows = effective_channel(&s, &initial_placement(&s)).unwrap().rows;
    c.bench_function("wmmse_beam/K4_L8", |b| {
        b.iter(|| wmmse_beam(black_box(&rows), s.max_power, s.noise_power).unwrap())
    });
    c.bench_function("fd_wmmse/K4_L8", |b| {
        b.iter(|| fd_wmmse(black_box(&s)).unwrap())
    });
    c.bench_function("uniform_pass/K4_L8", |b| {
        b.iter(|| uniform_pass(black_box(&s)).unwrap())
    });
}

fn mmpdd_solver(c: &mut Criterion) {
    let config = SolverConfig::default();
    let mut group = c.benchmark_group("mmpdd");
    group.sample_size(20);
    for (k, l) in [(2, 4), (4, 8)] {
        let s = fixture(k, l, 3);
        group.bench_function(format!("inner_sweep/K{k}_L{l}"), |b| {
            let sweep = SolverConfig {
                max_inner: 1,
                ..config.clone()
            };
            b.iter_batched(
                || init_solver(&s, &sweep).unwrap(),
                |(problem, mut state)| inner_loop(&problem, &mut state, &sweep).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
        group.bench_function(format!("solve/K{k}_L{l}"), |b| {
            b.iter(|| mmpdd::solve(black_box(&s), &config).unwrap())
        });
    }
    group.finish();
}

fn kkt(c: &mut Criterion) {
    let s = fixture(4, 8, 4);
    let raw = vec![0.3; raw_len(&s)];
    c.bench_function("kkt_decode_and_solution/K4_L8", |b| {
        b.iter(|| {
            decode_raw(black_box(&raw), &s)
                .unwrap()
                .solution(&s)
                .unwrap()
        })
    });
    let mut group = c.benchmark_group("dual_search");
    group.sample_size(10);
    let config = SearchConfig {
        budget: 256,
        ..Default::default()
    };
    group.bench_function("K2_L4_budget256", |b| {
        let s = fixture(2, 4, 5);
        b.iter(|| dual_search(black_box(&s), &config, 5).unwrap())
    });
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_oracle");
    group.sample_size(10);
    let s = fixture(1, 2, 6);
    group.bench_function("K1_L2_1cm", |b| {
        b.iter(|| grid_oracle(black_box(&s), 1e-2).unwrap())
    });
    group.finish();
}

criterion_group!(benches, channel, beamforming, mmpdd_solver, kkt, oracle);
criterion_main!(benches);
