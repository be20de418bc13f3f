use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use sideband_bench::{doublet_spectrum, mechanical_spectrum, preset, thermometry_plan};
use sideband_core::filter::sweep_response;
use sideband_core::harness::{execute_campaign, RecordFormat};
use sideband_core::inference::{
    bootstrap_occupancy, estimate_occupancy, fit_lorentzian_doublet, fit_mechanical_spectrum, CountSample,
};
use sideband_core::{chain_transmission, simulate_counts, FilterChain};

fn filters(c: &mut Criterion) {
    let chain = FilterChain::reference();
    let mech = thermometry_plan().device.mechanical;
    c.bench_function("chain_transmission", |b| {
        b.iter(|| chain_transmission(&chain, black_box(1.1e9), 0.0))
    });
    c.bench_function("sweep_response", |b| {
        b.iter(|| sweep_response(&chain, &mech, black_box(1.09e9)).unwrap())
    });
}

fn counting(c: &mut Criterion) {
    let plan = thermometry_plan();
    c.bench_function("simulate_counts_fig4a", |b| {
        b.iter(|| simulate_counts(black_box(&plan)).unwrap())
    });
}

fn estimation(c: &mut Criterion) {
    let blue = CountSample::new(355, 11.0);
    let red = CountSample::new(219, 11.0);
    c.bench_function("estimate_occupancy", |b| {
        b.iter(|| estimate_occupancy(black_box(blue), black_box(red), 11.0, 0.95).unwrap())
    });
    c.bench_function("bootstrap_occupancy_500", |b| {
        b.iter(|| bootstrap_occupancy(blue, red, 11.0, 0.95, 500, black_box(1)).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let doublet = doublet_spectrum();
    let line = mechanical_spectrum();
    c.bench_function("fit_doublet_801", |b| {
        b.iter(|| fit_lorentzian_doublet(black_box(&doublet)).unwrap())
    });
    c.bench_function("fit_mechanical_601", |b| {
        b.iter(|| fit_mechanical_spectrum(black_box(&line)).unwrap())
    });
}

fn campaigns(c: &mut Criterion) {
    let config = preset("fig3a");
    let mut group = c.benchmark_group("campaign");
    group.sample_size(10);
    group.bench_function("fig3a", |b| {
        b.iter(|| execute_campaign(black_box(&config), RecordFormat::Csv).unwrap())
    });
    group.finish();
}

criterion_group!(benches, filters, counting, estimation, fitting, campaigns);
criterion_main!(benches);
