use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use spdc_core::lab::ScanMode;
use spdc_core::numerics::fft_physical;
use spdc_core::pump::PumpModel;
use spdc_core::spdc::{joint_momentum_distribution, joint_position_distribution, sections_rotated};
use spdc_core::{
    fit_gaussian, Domain, Experiment, Field1D, Grid1D, PumpSpec, RunConfig, ScanPoint,
};

fn pump(phi_0: f64, n_realizations: usize) -> PumpSpec {
    let cfg = RunConfig::default();
    PumpSpec {
        w: cfg.pump.w,
        radius: f64::INFINITY,
        k_p: cfg.k_p(),
        model: PumpModel::PhaseScreenEnsemble {
            delta_phi: cfg.pump.delta_phi,
            phi_0,
            n_realizations,
            seed: 3,
        },
    }
}

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_physical");
    for n in [256usize, 1024, 4096] {
        let grid = Grid1D::new(n, 2e-6).unwrap();
        let field = Field1D::from_fn(grid, Domain::Position, |x| {
            Complex64::new((-x * x / 1e-8).exp(), 0.0)
        })
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &field, |b, f| {
            b.iter(|| fft_physical(black_box(f)).unwrap())
        });
    }
    group.finish();
}

fn distributions(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let pm = cfg.phase_matching().unwrap();
    let mut group = c.benchmark_group("joint");
    group.sample_size(10);
    for n in [256usize, 512] {
        let grid = Grid1D::new(n, 2e-6).unwrap();
        let coherent = pump(0.0, 1);
        group.bench_with_input(BenchmarkId::new("momentum_coherent", n), &grid, |b, g| {
            b.iter(|| joint_momentum_distribution(&coherent, &pm, g).unwrap())
        });
        let screens = pump(2.0, 8);
        group.bench_with_input(BenchmarkId::new("position_8_screens", n), &grid, |b, g| {
            b.iter(|| joint_position_distribution(&screens, &pm, g).unwrap())
        });
    }
    let grid = Grid1D::new(512, 2e-6).unwrap();
    let dist = joint_momentum_distribution(&pump(0.0, 1), &pm, &grid).unwrap();
    group.bench_function("sections_512", |b| {
        b.iter(|| sections_rotated(black_box(&dist)).unwrap())
    });
    group.finish();
}

fn estimation(c: &mut Criterion) {
    let points: Vec<ScanPoint> = (0..41)
        .map(|k| {
            let u = (k as f64 - 20.0) * 0.2;
            ScanPoint {
                coord: u,
                counts: (300.0 * (-u * u / 2.0).exp()).round() + 2.0,
                dwell: 60.0,
            }
        })
        .collect();
    c.bench_function("fit_gaussian_41", |b| {
        b.iter(|| fit_gaussian(black_box(&points)).unwrap())
    });

    let mut cfg = RunConfig::default();
    cfg.grid.n = 512;
    let exp = Experiment::new(cfg).unwrap();
    let dist = exp.momentum_distribution().unwrap();
    c.bench_function("slit_scan_diagonal_512", |b| {
        b.iter(|| exp.scan(black_box(&dist), ScanMode::Diagonal, 0).unwrap())
    });
}

criterion_group!(benches, transforms, distributions, estimation);
criterion_main!(benches);
