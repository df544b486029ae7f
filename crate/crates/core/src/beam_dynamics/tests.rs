use approx::assert_abs_diff_eq;
use num_complex::Complex64;

use super::*;
use crate::cell_spectral::{CellProblem, FreeBand, PeriodicPotential, PlaneWaveBasis};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn mathieu() -> CellProblem {
    CellProblem::new(PeriodicPotential::cosine(1.0), PlaneWaveBasis::new(12).unwrap()).unwrap()
}

fn gaussian_spec(phase: PhaseProfile) -> InitialDataSpec {
    InitialDataSpec::new(
        phase,
        vec![BandEnvelope {
            band: 1,
            envelope: Envelope::Gaussian {
                amplitude: 1.0,
                sigma: 0.1,
                center: 0.0,
            },
        }],
        (-1.0, 1.0),
    )
    .unwrap()
}

fn free_state(p: f64, m: Complex64, a: Complex64) -> BeamState {
    BeamState {
        t: 0.0,
        x0: 0.0,
        band: 1,
        xt: 0.0,
        p,
        s: 0.0,
        m,
        a,
    }
}

#[test]
fn launch_from_linear_phase() {
    let spec = gaussian_spec(PhaseProfile::Linear { c: 0.1 });
    let s = init_beam(0.0, 1, &spec, &FreeBand::new(4)).unwrap();
    assert_eq!((s.p, s.s, s.m, s.xt), (0.1, 0.0, c(0.0, 1.0), 0.0));
    assert_eq!(s.a, c(1.0, 0.0));
}

#[test]
fn launch_from_quadratic_phase() {
    let spec = gaussian_spec(PhaseProfile::Quadratic { alpha: -0.25 });
    let s = init_beam(1.0, 1, &spec, &FreeBand::new(4)).unwrap();
    assert_eq!((s.p, s.s, s.m), (-0.5, -0.25, c(-0.5, 1.0)));
    assert!(init_beam(1.5, 1, &spec, &FreeBand::new(4)).is_err());
}

#[test]
fn launch_projection_matches_envelope_on_mathieu_band() {
    let cell = mathieu();
    let spec = gaussian_spec(PhaseProfile::Quadratic { alpha: -0.25 });
    for x0 in [-0.3, 0.0, 0.05, 0.2] {
        let projected = projected_amplitude(x0, 1, &spec, &cell).unwrap();
        assert_abs_diff_eq!(projected.re, spec.amplitude(1, x0), epsilon = 1e-8);
        assert_abs_diff_eq!(projected.im, 0.0, epsilon = 1e-8);
        init_beam(x0, 1, &spec, &cell).unwrap();
    }
}

#[test]
fn free_dynamics_rates() {
    let m = c(0.2, 1.0);
    let a = c(0.7, -0.1);
    let s = free_state(0.3, m, a);
    let zero_lattice =
        CellProblem::new(PeriodicPotential::zero(), PlaneWaveBasis::new(4).unwrap()).unwrap();
    for cell in [&FreeBand::new(4) as &dyn BandStructure, &zero_lattice] {
        let r = ode_rhs(&s, &ExternalPotential::Zero, cell).unwrap();
        assert_abs_diff_eq!(r.xt, 0.3, epsilon = 1e-12);
        assert_eq!(r.p, 0.0);
        assert_abs_diff_eq!(r.s, 0.045, epsilon = 1e-12);
        assert!((r.m + m * m).norm() < 1e-12);
        assert!((r.a + m * a * 0.5).norm() < 1e-12);
    }
}

#[test]
fn harmonic_free_band_is_an_oscillator() {
    let mut s = free_state(0.4, c(0.0, 1.0), c(1.0, 0.0));
    s.xt = -0.7;
    let r = ode_rhs(&s, &ExternalPotential::Harmonic { omega: 1.0 }, &FreeBand::new(2)).unwrap();
    assert_abs_diff_eq!(r.xt, 0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(r.p, 0.7, epsilon = 1e-15);
}

#[test]
fn berry_term_only_rotates_the_amplitude() {
    let cell = mathieu();
    let ve = ExternalPotential::Harmonic { omega: 1.0 };
    let mut s = free_state(0.2, c(-0.3, 0.8), c(0.9, 0.2));
    s.xt = 0.6;
    let r = ode_rhs(&s, &ve, &cell).unwrap();
    let e2 = cell.ray_data(0.2, 1).unwrap().e2;
    let growth = (r.a / s.a).re;
    assert_abs_diff_eq!(growth, (-0.5 * e2 * s.m).re, epsilon = 1e-12);
}

#[test]
fn riccati_and_amplitude_closed_forms() {
    let s0 = free_state(0.0, c(0.0, 1.0), c(1.0, 0.0));
    let traj = rk4_propagate(&s0, &ExternalPotential::Zero, &FreeBand::new(2), 1.0, 1e-3).unwrap();
    assert_eq!(traj.states.len(), 1001);
    for s in &traj.states {
        assert!(s.m.im > 0.0);
        let one_plus = c(1.0, s.t);
        assert!((s.a.norm() - (1.0 + s.t * s.t).powf(-0.25)).abs() < 1e-8);
        assert!((s.m - c(0.0, 1.0) / one_plus).norm() < 1e-8);
    }
    let end = traj.final_state();
    assert_abs_diff_eq!(end.t, 1.0, epsilon = 1e-14);
    assert!((end.m - c(0.5, 0.5)).norm() < 1e-8);
    assert!((end.a - c(1.0, 1.0).powf(-0.5)).norm() < 1e-8);
}

fn riccati_error(dt: f64) -> f64 {
    let s0 = free_state(0.0, c(0.0, 1.0), c(1.0, 0.0));
    let traj = rk4_propagate(&s0, &ExternalPotential::Zero, &FreeBand::new(2), 1.0, dt).unwrap();
    let end = traj.final_state();
    (end.m - c(0.5, 0.5)).norm() + (end.a - c(1.0, 1.0).powf(-0.5)).norm()
}

#[test]
fn rk4_is_fourth_order() {
    for dt in [0.1, 0.05] {
        let ratio = riccati_error(dt) / riccati_error(dt / 2.0);
        assert!((14.0..=18.0).contains(&ratio), "dt = {dt}: ratio {ratio}");
    }
}

#[test]
fn harmonic_quarter_period() {
    let mut s0 = free_state(0.0, c(0.0, 1.0), c(1.0, 0.0));
    s0.xt = 1.0;
    let ve = ExternalPotential::Harmonic { omega: 1.0 };
    let traj = rk4_propagate(&s0, &ve, &FreeBand::new(2), std::f64::consts::FRAC_PI_2, 1e-3).unwrap();
    let end = traj.final_state();
    assert_abs_diff_eq!(end.xt, 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(end.p, -1.0, epsilon = 1e-8);
}

#[test]
fn ray_energy_is_conserved() {
    let mut s0 = free_state(0.0, c(0.0, 1.0), c(1.0, 0.0));
    s0.xt = 1.0;
    let ve = ExternalPotential::Harmonic { omega: 1.0 };
    let cell = FreeBand::new(2);
    let traj = rk4_propagate(&s0, &ve, &cell, 5.0, 1e-3).unwrap();
    for s in &traj.states {
        let h = hamiltonian_energy(s, &ve, &cell).unwrap();
        assert!((h - 0.5).abs() < 1e-8);
    }
    let free = rk4_propagate(&free_state(0.3, c(0.0, 1.0), c(1.0, 0.0)), &ExternalPotential::Zero, &cell, 2.0, 1e-2)
        .unwrap();
    for s in &free.states {
        assert_abs_diff_eq!(hamiltonian_energy(s, &ExternalPotential::Zero, &cell).unwrap(), 0.045, epsilon = 1e-14);
    }
}

#[test]
fn step_is_adjusted_to_divide_the_horizon() {
    assert_eq!(uniform_steps(1.0, 0.3), (4, 0.25));
    assert_eq!(uniform_steps(0.5, 1e-3).0, 500);
    let s0 = free_state(0.0, c(0.0, 1.0), c(1.0, 0.0));
    let traj = rk4_propagate(&s0, &ExternalPotential::Zero, &FreeBand::new(2), 0.0, 1e-3).unwrap();
    assert_eq!(traj.states, vec![s0]);
}

#[test]
fn positivity_loss_is_reported() {
    let s0 = free_state(0.0, c(0.0, -1.0), c(1.0, 0.0));
    let err = rk4_propagate(&s0, &ExternalPotential::Zero, &FreeBand::new(2), 1.0, 1e-2).unwrap_err();
    assert!(matches!(err, Error::PositivityLoss { .. }));
}

#[test]
fn free_particle_has_no_corrector() {
    let s = free_state(0.3, c(0.1, 1.0), c(1.0, 0.0));
    let zero_lattice =
        CellProblem::new(PeriodicPotential::zero(), PlaneWaveBasis::new(4).unwrap()).unwrap();
    let a1 = compute_a1_on_ray(&s, &ExternalPotential::Harmonic { omega: 1.0 }, &zero_lattice).unwrap();
    assert!(a1.norm() < 1e-14);
    let silent = free_state(0.3, c(0.1, 1.0), c(0.0, 0.0));
    let a1 = compute_a1_on_ray(&silent, &ExternalPotential::Zero, &mathieu()).unwrap();
    assert_eq!(a1.norm(), 0.0);
}

#[test]
fn mathieu_corrector_solves_the_first_order_equation() {
    let cell = mathieu();
    let ve = ExternalPotential::Harmonic { omega: 1.0 };
    let spec = gaussian_spec(PhaseProfile::Quadratic { alpha: -0.25 });
    let s0 = init_beam(0.3, 1, &spec, &cell).unwrap();
    let traj = rk4_propagate(&s0, &ve, &cell, 0.3, 1e-2).unwrap().with_a1(&ve, &cell).unwrap();
    for (s, a1) in traj.states.iter().zip(traj.a1.as_ref().unwrap()) {
        assert!(solvability_residual(s, &ve, &cell).unwrap() <= 1e-8);
        let (la0, z) = transport_vector(s, &ve, &cell).unwrap();
        let mut projected = la0.clone();
        projected.axpy(-inner(&la0, &z), &z, c(1.0, 0.0));
        let h = cell.hamiltonian(s.p).unwrap();
        let energy = cell.ray_data(s.p, 1).unwrap().energy;
        let lhs = &h * a1 - a1 * c(energy, 0.0);
        assert!((lhs - projected * I).norm() <= 1e-9 * la0.norm());
        assert!(inner(a1, &z).norm() < 1e-12);
    }
}
