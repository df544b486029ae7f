use criterion::{black_box, criterion_group, criterion_main, Criterion};

use blochbeam::beam_dynamics::rk4_propagate;
use blochbeam::cell_spectral::{BandStructure, PeriodicPotential};
use blochbeam::reference_solver::{SplitStepConfig, SplitStepper};
use blochbeam::wavefield::{exact_initial, Grid};
use blochbeam_bench::{harmonic, launched, mathieu_cell, mathieu_data};

fn eigensolve(c: &mut Criterion) {
    for cutoff in [10, 18] {
        let cell = mathieu_cell(cutoff);
        c.bench_function(&format!("ray_data cutoff {cutoff}"), |b| {
            b.iter(|| cell.ray_data(black_box(0.37), 1).unwrap())
        });
        c.bench_function(&format!("local_data with curvature cutoff {cutoff}"), |b| {
            b.iter(|| cell.local_data(black_box(0.37), 1, true).unwrap())
        });
    }
}

fn beam(c: &mut Criterion) {
    let cell = mathieu_cell(18);
    let state = launched(&cell, 0.4);
    c.bench_function("rk4 beam T=0.5 dt=5e-3", |b| {
        b.iter(|| rk4_propagate(black_box(&state), &harmonic(), &cell, 0.5, 5e-3).unwrap())
    });
}

fn strang(c: &mut Criterion) {
    let cell = mathieu_cell(18);
    for eps in [1.0 / 32.0, 1.0 / 128.0] {
        let grid = Grid::commensurate(0.0, 10.0, eps, 32).unwrap();
        let cfg = SplitStepConfig::from_potentials(grid, eps, &PeriodicPotential::cosine(1.0), &harmonic(), 0.5)
            .unwrap();
        let field = exact_initial(&mathieu_data(), &grid, eps, &cell).unwrap();
        let mut stepper = SplitStepper::new(&cfg, cfg.dt);
        let mut values = field.values.clone();
        c.bench_function(&format!("strang step n={}", grid.n), |b| {
            b.iter(|| stepper.step(black_box(&mut values)))
        });
    }
}

criterion_group!(benches, eigensolve, beam, strang);
criterion_main!(benches);
