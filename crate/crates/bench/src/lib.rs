//! Shared fixtures for the benchmarks.

use blochbeam::beam_dynamics::{
    init_beam, BandEnvelope, Envelope, ExternalPotential, InitialDataSpec, PhaseProfile,
};
use blochbeam::cell_spectral::{CellProblem, PeriodicPotential, PlaneWaveBasis};

pub fn mathieu_cell(cutoff: usize) -> CellProblem {
    CellProblem::new(PeriodicPotential::cosine(1.0), PlaneWaveBasis::new(cutoff).unwrap()).unwrap()
}

pub fn mathieu_data() -> InitialDataSpec {
    InitialDataSpec::new(
        PhaseProfile::Quadratic { alpha: -0.25 },
        vec![BandEnvelope {
            band: 1,
            envelope: Envelope::Gaussian {
                amplitude: 1.0,
                sigma: 0.5,
                center: 0.0,
            },
        }],
        (-3.8, 3.8),
    )
    .unwrap()
}

pub fn harmonic() -> ExternalPotential {
    ExternalPotential::Harmonic { omega: 1.0 }
}

pub fn launched(cell: &CellProblem, x0: f64) -> blochbeam::beam_dynamics::BeamState {
    init_beam(x0, 1, &mathieu_data(), cell).unwrap()
}
