use approx::assert_abs_diff_eq;
use num_complex::Complex64;

use super::*;
use crate::wavefield::l2_error;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn free_config(grid: Grid, eps: f64) -> SplitStepConfig {
    SplitStepConfig::new(grid, eps, vec![0.0; grid.n], DEFAULT_DT_FACTOR).unwrap()
}

/// Free evolution of `exp(−x²/(2s) + i p x/ε)`: the width `s` becomes
/// `s + iεt` and the centre moves with speed `p`.
fn free_gaussian(grid: &Grid, eps: f64, s: f64, p: f64, t: f64) -> WaveField {
    let st = Complex64::new(s, eps * t);
    let pre = (Complex64::new(s, 0.0) / st).sqrt();
    let mut f = WaveField::zeros(eps, t, *grid);
    for (j, v) in f.values.iter_mut().enumerate() {
        let x = grid.x(j);
        let u = x - p * t;
        *v = pre * (-(u * u) / (2.0 * st) + I * p * (x - 0.5 * p * t) / eps).exp();
    }
    f
}

fn mathieu_config(eps: f64, dt_factor: f64) -> (SplitStepConfig, WaveField) {
    let grid = Grid::commensurate(0.0, 4.0, eps, 16).unwrap();
    let cfg = SplitStepConfig::from_potentials(
        grid,
        eps,
        &PeriodicPotential::cosine(1.0),
        &ExternalPotential::Harmonic { omega: 1.0 },
        dt_factor,
    )
    .unwrap();
    let init = free_gaussian(&grid, eps, 0.05, 0.3, 0.0);
    (cfg, init)
}

#[test]
fn single_mode_gets_the_kinetic_phase() {
    let eps = 1.0 / 16.0;
    let grid = Grid::commensurate(0.0, 2.0, eps, 16).unwrap();
    let cfg = free_config(grid, eps);
    let xi = frequencies(&grid)[5];
    let mut f = WaveField::zeros(eps, 0.0, grid);
    for (j, v) in f.values.iter_mut().enumerate() {
        *v = (I * xi * grid.x(j)).exp();
    }
    let out = strang_step(&f, &cfg).unwrap();
    let factor = (-I * eps * xi * xi * cfg.dt / 2.0).exp();
    for (a, b) in out.values.iter().zip(&f.values) {
        assert!((a - b * factor).norm() < 1e-12);
    }
}

#[test]
fn constant_potential_is_a_global_phase() {
    let eps = 1.0 / 16.0;
    let grid = Grid::commensurate(0.0, 2.0, eps, 16).unwrap();
    let w = 0.7;
    let cfg = SplitStepConfig::new(grid, eps, vec![w; grid.n], DEFAULT_DT_FACTOR).unwrap();
    let f = free_gaussian(&grid, eps, 0.1, 0.0, 0.0);
    let mut flat = f.clone();
    flat.values.iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.0));
    let out = strang_step(&flat, &cfg).unwrap();
    let factor = (-I * w * cfg.dt / eps).exp();
    for v in &out.values {
        assert!((v - factor).norm() < 1e-12);
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-14);
    }
    let moved = strang_step(&f, &cfg).unwrap();
    assert_abs_diff_eq!(l2_norm(&moved), l2_norm(&f), epsilon = 1e-13 * l2_norm(&f));
}

#[test]
fn strang_step_is_unitary() {
    let (cfg, init) = mathieu_config(1.0 / 32.0, DEFAULT_DT_FACTOR);
    let out = strang_step(&init, &cfg).unwrap();
    assert!((l2_norm(&out) / l2_norm(&init) - 1.0).abs() < 1e-13);
}

#[test]
fn free_gaussian_matches_closed_form() {
    let eps = 1.0 / 32.0;
    let grid = Grid::commensurate(0.0, 6.0, eps, 16).unwrap();
    let init = free_gaussian(&grid, eps, eps, 0.5, 0.0);
    let run = run_reference(&init, &free_config(grid, eps), 0.5).unwrap();
    let exact = free_gaussian(&grid, eps, eps, 0.5, 0.5);
    assert!(l2_error(&run.field, &exact).unwrap() < 1e-6);
    assert!(run.mass_drift < 1e-12);
    assert_abs_diff_eq!(run.field.t, 0.5, epsilon = 1e-15);
}

#[test]
fn zero_horizon_returns_the_input() {
    let (cfg, init) = mathieu_config(1.0 / 16.0, DEFAULT_DT_FACTOR);
    let run = run_reference(&init, &cfg, 0.0).unwrap();
    assert_eq!(run.field, init);
    assert_eq!(run.steps, 0);
}

#[test]
fn mass_is_conserved_and_step_divides_horizon() {
    let (cfg, init) = mathieu_config(1.0 / 32.0, DEFAULT_DT_FACTOR);
    let run = run_reference(&init, &cfg, 0.3).unwrap();
    assert!(run.mass_drift < 1e-12, "{}", run.mass_drift);
    assert!(run.dt <= cfg.dt);
    assert_abs_diff_eq!(run.dt * run.steps as f64, 0.3, epsilon = 1e-14);
}

#[test]
fn splitting_is_second_order() {
    let eps = 1.0 / 16.0;
    let t = 0.2;
    let fields: Vec<WaveField> = [0.5, 0.25, 0.125]
        .iter()
        .map(|&c| {
            let (cfg, init) = mathieu_config(eps, c);
            run_reference(&init, &cfg, t).unwrap().field
        })
        .collect();
    let d1 = l2_error(&fields[0], &fields[1]).unwrap();
    let d2 = l2_error(&fields[1], &fields[2]).unwrap();
    let order = (d1 / d2).log2();
    assert!((1.8..=2.2).contains(&order), "order {order}");
}

#[test]
fn step_limit_and_grid_are_checked() {
    let (mut cfg, init) = mathieu_config(1.0 / 16.0, DEFAULT_DT_FACTOR);
    cfg.dt *= 2.0;
    assert!(run_reference(&init, &cfg, 0.1).is_err());
    let coarse = Grid::new(-2.0, 4.0, 64).unwrap();
    assert!(SplitStepConfig::new(coarse, 1.0 / 16.0, vec![0.0; 64], 0.5).is_err());
}

#[test]
fn subsample_keeps_every_other_point() {
    let eps = 1.0 / 16.0;
    let fine = Grid::commensurate(0.0, 2.0, eps, 32).unwrap();
    let coarse = Grid::commensurate(0.0, 2.0, eps, 16).unwrap();
    let f = free_gaussian(&fine, eps, 0.1, 0.2, 0.0);
    let g = free_gaussian(&coarse, eps, 0.1, 0.2, 0.0);
    let s = subsample(&f, 2).unwrap();
    assert_eq!(s.grid, coarse);
    assert!(l2_error(&s, &g).unwrap() < 1e-14);
}
