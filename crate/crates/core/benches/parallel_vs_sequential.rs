use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use uvsync::bounds::BoundConfig;
use uvsync::channel::ChannelParams;
use uvsync::exec::Exec;
use uvsync::montecarlo::{offset_grid, run_ensemble};
use uvsync::sequence::{build_sandwich, SequenceSpec};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn ensemble(c: &mut Criterion) {
    let seq = build_sandwich(&SequenceSpec::new(128, 0.707, 1)).unwrap();
    let params = ChannelParams::new(10.0, 1.0, 100);
    let offsets = offset_grid(100, 10, 10);
    let mut g = c.benchmark_group("run_ensemble_200_trials");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_ensemble(&seq, &params, &offsets, 200, 7, black_box(exec)).unwrap())
        });
    }
    g.finish();
}

fn bound_sweep(c: &mut Criterion) {
    let cfg = BoundConfig::new(256, 0.5, 5.0, 1.0, 100);
    let alphas: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
    let mut g = c.benchmark_group("mse_bound_sweep_32_alphas");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| cfg.sweep(&alphas, black_box(exec)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ensemble, bound_sweep);
criterion_main!(benches);
