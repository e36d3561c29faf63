//! Benchmarks of the three solver pipelines and the data path at desk
//! scale: the raw memory dynamic program, the exact conditional-range
//! program, and the quantized approximate program, plus exhaustive data
//! collection and range estimation on the grid-world benchmarks.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion as Bench};

use nonstoch_core::corpus::{random_system, RandomSystemParams};
use nonstoch_core::datadriven::{build_empirical_ranges, generate_exhaustive_dataset};
use nonstoch_core::dp::{solve_abstraction_dp, solve_memory_dp, solve_terminal_dp, Compressor};
use nonstoch_core::envs::{
    pursuit_evasion_reduced, wall_composite_compressor, wall_defense_strip, GridEnvConfig,
    WallGrid,
};
use nonstoch_core::model::{Criterion, EnumerationOptions, SystemModel};
use nonstoch_core::quantize::grids_for_system;

fn grid_config(horizon: usize) -> GridEnvConfig {
    GridEnvConfig {
        horizon,
        obstacles: Vec::new(),
        initial_agent: (0, 2),
        initial_observation: None,
        initial_true: None,
        quantized_cells: Vec::new(),
        replicates: 8,
        seed: 7,
    }
}

fn solve_quantized(sys: &SystemModel, gamma: f64, opts: &EnumerationOptions) {
    let grids = grids_for_system(sys, &vec![gamma; sys.horizon() + 1]).unwrap();
    let a = Compressor::QuantizedRange { grids }.build(sys, opts).unwrap();
    solve_abstraction_dp(sys, a).unwrap();
}

fn bench_random_system(c: &mut Bench) {
    let opts = EnumerationOptions::default();
    let params = RandomSystemParams {
        states: 5,
        actions: 3,
        disturbances: 2,
        noises: 2,
        horizon: 3,
        criterion: Criterion::Instantaneous,
        integer_costs: true,
    };
    let sys = random_system(&params, 11).unwrap();
    let mut group = c.benchmark_group("random-system-x5u3w2n2t3");
    group.bench_function("memory-dp", |b| {
        b.iter(|| solve_memory_dp(&sys, &opts).unwrap())
    });
    group.bench_function("range-dp", |b| {
        b.iter(|| {
            let a = Compressor::ConditionalRange.build(&sys, &opts).unwrap();
            solve_abstraction_dp(&sys, a).unwrap()
        })
    });
    group.bench_function("quantized-dp-gamma1", |b| {
        b.iter(|| solve_quantized(&sys, 1.0, &opts))
    });
    group.finish();
}

fn bench_wall_strip(c: &mut Bench) {
    let opts = EnumerationOptions::default();
    let mut group = c.benchmark_group("wall-strip");
    for horizon in [2usize, 3] {
        let cfg = grid_config(horizon);
        let sys = wall_defense_strip(&cfg).unwrap();
        group.bench_with_input(BenchmarkId::new("range-dp", horizon), &sys, |b, sys| {
            b.iter(|| {
                let a = Compressor::ConditionalRange.build(sys, &opts).unwrap();
                solve_abstraction_dp(sys, a).unwrap()
            })
        });
        let composite = wall_composite_compressor(&cfg, &WallGrid::strip()).unwrap();
        group.bench_with_input(
            BenchmarkId::new("composite-ais-dp", horizon),
            &sys,
            |b, sys| {
                b.iter(|| {
                    let a = composite.build(sys, &opts).unwrap();
                    solve_abstraction_dp(sys, a).unwrap()
                })
            },
        );
    }
    group.finish();
}

fn bench_pursuit(c: &mut Bench) {
    let opts = EnumerationOptions::default();
    let sys = pursuit_evasion_reduced(&grid_config(2)).unwrap();
    let mut group = c.benchmark_group("pursuit-reduced-t2");
    group.sample_size(10);
    group.bench_function("terminal-dp", |b| {
        b.iter(|| solve_terminal_dp(&sys, &opts).unwrap())
    });
    group.bench_function("exhaustive-dataset", |b| {
        b.iter(|| generate_exhaustive_dataset(&sys, &opts).unwrap())
    });
    let dataset = generate_exhaustive_dataset(&sys, &opts).unwrap();
    group.bench_function("empirical-ranges-window1", |b| {
        b.iter(|| build_empirical_ranges(&dataset, 1).unwrap())
    });
    group.finish();
}

fn configured() -> Bench {
    Bench::default()
        .measurement_time(Duration::from_secs(3))
        .warm_up_time(Duration::from_millis(500))
}

criterion_group! {
    name = benches;
    config = configured();
    targets = bench_random_system, bench_wall_strip, bench_pursuit
}
criterion_main!(benches);
