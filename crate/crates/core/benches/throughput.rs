use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use nvscc_core::charge::RateSet;
use nvscc_core::parallel::{run_shots, run_shots_serial, tally_shots, tally_shots_serial};
use nvscc_core::scc::{simulate_scc_shot, SccScenario, SpinPrep};
use nvscc_core::seed::{shot_rng, shot_seed};

/// Full protocol shots: records collected in index order.
fn shot_ensembles(c: &mut Criterion) {
    let scenario = SccScenario::calibrated_with_first_readout();
    let shot = move |index: u64| {
        simulate_scc_shot(
            SpinPrep::Superposition(0.5),
            &scenario.params,
            &scenario.timings,
            &scenario.rates,
            shot_seed(7, index),
        )
        .n_final
    };
    let mut group = c.benchmark_group("scc_shots");
    for &shots in &[10_000u64, 40_000] {
        group.throughput(Throughput::Elements(shots));
        group.bench_with_input(BenchmarkId::new("parallel", shots), &shots, |b, &n| {
            b.iter(|| run_shots(n, shot));
        });
        group.bench_with_input(BenchmarkId::new("serial", shots), &shots, |b, &n| {
            b.iter(|| run_shots_serial(n, shot));
        });
    }
    group.finish();
}

/// Readout windows folded straight into a histogram.
fn window_tallies(c: &mut Criterion) {
    let rates = RateSet::calibrated_readout();
    let window = move |index: u64| {
        let mut rng = shot_rng(11, index);
        nvscc_core::charge::sample_window(
            &rates,
            10e-3,
            nvscc_core::charge::ChargeLabel::NvMinus,
            &mut rng,
        )
        .0
    };
    let mut group = c.benchmark_group("window_tallies");
    for &shots in &[20_000u64, 80_000] {
        group.throughput(Throughput::Elements(shots));
        group.bench_with_input(BenchmarkId::new("parallel", shots), &shots, |b, &n| {
            b.iter(|| tally_shots(n, window));
        });
        group.bench_with_input(BenchmarkId::new("serial", shots), &shots, |b, &n| {
            b.iter(|| tally_shots_serial(n, window));
        });
    }
    group.finish();
}

criterion_group!(benches, shot_ensembles, window_tallies);
criterion_main!(benches);
