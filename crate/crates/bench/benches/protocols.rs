use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use entsim_core::analysis::enumerate_self_avoiding_paths;
use entsim_core::engine::run_iteration;
use entsim_core::{build_grid, CoherenceTime, NodeId, Protocol, Regime, ScenarioConfig, SimParams};

fn scenario(protocol: Protocol, side: usize, d: usize) -> ScenarioConfig {
    let params = SimParams {
        p: 0.8,
        q: 0.8,
        t_co: CoherenceTime::Finite(2),
        side,
        seed: 7,
        ..SimParams::default()
    };
    ScenarioConfig {
        regime: Regime::Reset,
        ..ScenarioConfig::new(protocol, params, d)
    }
}

/// One full request (fresh network, warm-up, routing) per protocol.
fn single_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("iteration");
    group.sample_size(20);
    for protocol in [Protocol::Sync, Protocol::Dodag, Protocol::Ghs] {
        for side in [8, 12] {
            let cfg = scenario(protocol, side, 4);
            let mut i = 0u64;
            group.bench_with_input(BenchmarkId::new(protocol.name(), side), &cfg, |b, cfg| {
                b.iter(|| {
                    i += 1;
                    black_box(run_iteration(cfg, i).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn path_enumeration(c: &mut Criterion) {
    let topo = build_grid(12).unwrap();
    let (s, t) = (NodeId(5 * 12 + 4), NodeId(5 * 12 + 8));
    c.bench_function("enumerate_12x12_d4_m5", |b| {
        b.iter(|| black_box(enumerate_self_avoiding_paths(&topo, s, t, 5).unwrap()))
    });
}

criterion_group!(benches, single_iteration, path_enumeration);
criterion_main!(benches);
