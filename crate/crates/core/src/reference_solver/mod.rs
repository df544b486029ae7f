//! Direct solver for `iε ∂ₜψ = −½ε² ∂ₓ²ψ + W(x) ψ`, `W = V(x/ε) + V_e(x)`,
//! by Strang splitting with exact potential and kinetic sub-flows.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlannerScalar};

use crate::beam_dynamics::{uniform_steps, ExternalPotential};
use crate::cell_spectral::PeriodicPotential;
use crate::error::{Error, Result};
use crate::wavefield::{l2_norm, Grid, WaveField};

pub const DEFAULT_DT_FACTOR: f64 = 0.5;

/// Steps between finiteness checks in the time loop.
const CHECK_EVERY: usize = 64;

#[derive(Debug, Clone)]
pub struct SplitStepConfig {
    pub epsilon: f64,
    pub grid: Grid,
    /// `c_t` in `dt_max = c_t ε^{3/2}`.
    pub dt_factor: f64,
    /// Requested step; [`run_reference`] shrinks it to divide `T`.
    pub dt: f64,
    /// `W(x_j)`.
    pub potential: Vec<f64>,
}

impl SplitStepConfig {
    pub fn new(grid: Grid, epsilon: f64, potential: Vec<f64>, dt_factor: f64) -> Result<Self> {
        let cfg = SplitStepConfig {
            epsilon,
            grid,
            dt_factor,
            dt: dt_factor * epsilon.powf(1.5),
            potential,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Samples `V(x/ε) + V_e(x)` on the grid.
    pub fn from_potentials(
        grid: Grid,
        epsilon: f64,
        lattice: &PeriodicPotential,
        external: &ExternalPotential,
        dt_factor: f64,
    ) -> Result<Self> {
        let potential = (0..grid.n)
            .map(|j| {
                let x = grid.x(j);
                lattice.eval(x / epsilon) + external.value(x)
            })
            .collect();
        SplitStepConfig::new(grid, epsilon, potential, dt_factor)
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_factor * self.epsilon.powf(1.5)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.grid.resolves(self.epsilon) {
            return Err(Error::Config(format!(
                "reference grid spacing {} does not resolve ε = {}",
                self.grid.dx, self.epsilon
            )));
        }
        if !(self.dt > 0.0) || self.dt > self.dt_max() * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "reference step {} must lie in (0, {}]",
                self.dt,
                self.dt_max()
            )));
        }
        if self.potential.len() != self.grid.n {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Angular frequencies of the discrete Fourier modes on the box.
pub fn frequencies(grid: &Grid) -> Vec<f64> {
    let n = grid.n as i64;
    let base = 2.0 * std::f64::consts::PI / grid.length();
    (0..n)
        .map(|j| base * if j < n / 2 { j } else { j - n } as f64)
        .collect()
}

fn unit_phase(theta: f64) -> Complex64 {
    let p = Complex64::from_polar(1.0, theta);
    p / p.norm()
}

/// Precomputed multipliers and FFT plans for a fixed step.
pub struct SplitStepper {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    half_potential: Vec<Complex64>,
    full_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
    scale: f64,
}

impl SplitStepper {
    pub fn new(cfg: &SplitStepConfig, dt: f64) -> Self {
        let mut planner = FftPlannerScalar::new();
        let n = cfg.grid.n;
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let eps = cfg.epsilon;
        SplitStepper {
            half_potential: cfg
                .potential
                .iter()
                .map(|w| unit_phase(-w * dt / (2.0 * eps)))
                .collect(),
            full_potential: cfg.potential.iter().map(|w| unit_phase(-w * dt / eps)).collect(),
            kinetic: frequencies(&cfg.grid)
                .iter()
                .map(|xi| unit_phase(-eps * xi * xi * dt / 2.0))
                .collect(),
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            scale: 1.0 / n as f64,
        }
    }

    fn multiply(values: &mut [Complex64], phases: &[Complex64]) {
        values.iter_mut().zip(phases).for_each(|(v, p)| *v *= p);
    }

    fn kinetic_step(&mut self, values: &mut [Complex64]) {
        self.forward.process_with_scratch(values, &mut self.scratch);
        for (v, k) in values.iter_mut().zip(&self.kinetic) {
            *v *= k * self.scale;
        }
        self.inverse.process_with_scratch(values, &mut self.scratch);
    }

    /// One Strang step: half potential, kinetic, half potential.
    pub fn step(&mut self, values: &mut [Complex64]) {
        Self::multiply(values, &self.half_potential);
        self.kinetic_step(values);
        Self::multiply(values, &self.half_potential);
    }

    /// `steps` Strang steps with the inner half potential phases merged.
    pub fn run(&mut self, values: &mut [Complex64], steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        Self::multiply(values, &self.half_potential);
        for step in 0..steps {
            self.kinetic_step(values);
            let last = step + 1 == steps;
            let phases = if last {
                &self.half_potential
            } else {
                &self.full_potential
            };
            Self::multiply(values, phases);
            if (step + 1) % CHECK_EVERY == 0 || last {
                if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::Instability { step: step + 1 });
                }
            }
        }
        Ok(())
    }
}

/// Single Strang step of length `cfg.dt`.
pub fn strang_step(field: &WaveField, cfg: &SplitStepConfig) -> Result<WaveField> {
    cfg.validate()?;
    if field.grid != cfg.grid {
        return Err(Error::GridMismatch);
    }
    let mut out = field.clone();
    SplitStepper::new(cfg, cfg.dt).step(&mut out.values);
    out.t += cfg.dt;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub field: WaveField,
    pub steps: usize,
    pub dt: f64,
    /// `|‖ψ(T)‖ − ‖ψ(0)‖| / ‖ψ(0)‖`.
    pub mass_drift: f64,
}

/// Evolves `initial` over a time span `t_final`.
pub fn run_reference(initial: &WaveField, cfg: &SplitStepConfig, t_final: f64) -> Result<ReferenceRun> {
    cfg.validate()?;
    if initial.grid != cfg.grid {
        return Err(Error::GridMismatch);
    }
    if !(t_final >= 0.0) {
        return Err(Error::Config(format!("negative final time {t_final}")));
    }
    let (steps, dt) = uniform_steps(t_final, cfg.dt);
    let mut field = initial.clone();
    if steps > 0 {
        SplitStepper::new(cfg, dt).run(&mut field.values, steps)?;
        field.t = initial.t + t_final;
    }
    let m0 = l2_norm(initial);
    let mass_drift = if m0 > 0.0 {
        (l2_norm(&field) - m0).abs() / m0
    } else {
        0.0
    };
    Ok(ReferenceRun {
        field,
        steps,
        dt,
        mass_drift,
    })
}

/// Every `factor`-th sample of a field on a refined grid.
pub fn subsample(field: &WaveField, factor: usize) -> Result<WaveField> {
    if factor == 0 || field.grid.n % factor != 0 {
        return Err(Error::GridMismatch);
    }
    let grid = Grid::new(field.grid.x_lo, field.grid.length(), field.grid.n / factor)?;
    Ok(WaveField {
        epsilon: field.epsilon,
        t: field.t,
        grid,
        values: field.values.iter().step_by(factor).copied().collect(),
    })
}

#[cfg(test)]
mod tests;
