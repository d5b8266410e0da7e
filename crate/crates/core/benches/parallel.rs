use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use marsdrop_core::control::{plan_alpha_schedule_with, PlannerSettings};
use marsdrop_core::rotor_aero::{vrs_map, VrsGrid};
use marsdrop_core::vehicle::{preset, PresetName};
use marsdrop_core::Execution;

const STRATEGIES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn bench_vrs_map(c: &mut Criterion) {
    let params = preset(PresetName::Mad).rotor;
    let grid = VrsGrid {
        vx_steps: 201,
        vz_steps: 401,
        ..VrsGrid::default()
    };
    let mut group = c.benchmark_group("vrs_map");
    for exec in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| vrs_map(black_box(&grid), &params, exec))
        });
    }
    group.finish();
}

fn bench_planner(c: &mut Criterion) {
    let params = preset(PresetName::Mad).rotor;
    let settings = PlannerSettings::default();
    let mut group = c.benchmark_group("alpha_planner");
    group.sample_size(10);
    for exec in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| plan_alpha_schedule_with(black_box(30.0), 25.84, 0.0, &params, &settings, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_vrs_map, bench_planner);
criterion_main!(benches);
