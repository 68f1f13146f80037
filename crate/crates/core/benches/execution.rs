use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sepdd_core::baseline2d::{aggregate_surface, grid};
use sepdd_core::batching::make_batches;
use sepdd_core::harness::{run_sweep, EstimatorSettings, SceneTemplate, SweepAxis, SweepSpec};
use sepdd_core::projection::prepare_batches;
use sepdd_core::scene::{generate_waveform, synthesize_node};
use sepdd_core::separable::delay_profile;
use sepdd_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn criteria(c: &mut Criterion) {
    let t = SceneTemplate { n_samples: 1 << 14, order: 16, tnr_db: 20.0, target_delay: 6.0 * 4e-8, ..Default::default() };
    let cfg = t.scene();
    let w = generate_waveform(cfg.n_samples + 16, 1).unwrap();
    let node = synthesize_node(&cfg, &w).unwrap();
    let batches = prepare_batches(make_batches(&node, 8, 16).unwrap(), Execution::Parallel).unwrap();
    let tau = grid(4e-8, 16.0 * 4e-8, 2e-8);
    let omega = grid(-2e5, 2e5, 2.5e4);

    let mut g = c.benchmark_group("surface");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, e| {
            b.iter(|| aggregate_surface(&batches, &tau, &omega, *e).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("delay_profile");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, e| {
            b.iter(|| delay_profile(&batches, &tau, *e).unwrap())
        });
    }
    g.finish();

    let spec = SweepSpec {
        axis: SweepAxis::Doppler { n_samples: 1 << 12, dopplers: vec![250.0], batch_counts: vec![4] },
        trials: 8,
        master_seed: 1,
        scene: SceneTemplate { order: 8, tnr_db: 30.0, target_delay: 4.0 * 4e-8, ..Default::default() },
        estimator: EstimatorSettings { order: 8, ..Default::default() },
    };
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, e| b.iter(|| run_sweep(&spec, *e).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, criteria);
criterion_main!(benches);
