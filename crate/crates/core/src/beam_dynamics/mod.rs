//! Gaussian beam components along classical rays of one Bloch band.
//!
//! Each beam carries the ray position `x̃`, momentum `p`, action `S`, the
//! complex Riccati parameter `M` and the complex amplitude `a`, evolved by
//!
//! ```text
//! ẋ = E'(p)          ṗ = −V_e'(x̃)       Ṡ = p E'(p) − E(p) − V_e(x̃)
//! Ṁ = −E''(p) M² − V_e''(x̃)
//! ȧ = a (V_e'(x̃) ⟨∂ₖz, z⟩ − ½ E''(p) M)
//! ```
//!
//! integrated with fixed-step classical RK4.

mod external;
mod initial;

pub use external::ExternalPotential;
pub use initial::{BandEnvelope, Envelope, InitialDataSpec, PhaseProfile};

use num_complex::Complex64;

use crate::cell_spectral::{
    apply_hk, eval_cell_function, inner, BandStructure, Coeffs, RayBandData,
};
use crate::error::{Error, Result};

/// Default tolerance for `|⟨LA₀, z⟩| / |a|`.
pub const DEFAULT_SOLVABILITY_TOL: f64 = 1e-8;

/// Cell quadrature points for the launch projection check.
const PROJECTION_POINTS: usize = 256;
const PROJECTION_TOL: f64 = 1e-8;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamState {
    pub t: f64,
    pub x0: f64,
    pub band: usize,
    pub xt: f64,
    pub p: f64,
    pub s: f64,
    pub m: Complex64,
    pub a: Complex64,
}

impl BeamState {
    fn check(&self) -> Result<()> {
        if !(self.m.im > 0.0) {
            return Err(Error::PositivityLoss {
                t: self.t,
                im_m: self.m.im,
            });
        }
        let finite = self.xt.is_finite()
            && self.p.is_finite()
            && self.s.is_finite()
            && self.m.re.is_finite()
            && self.a.norm().is_finite();
        if !finite {
            return Err(Error::Invariant(format!(
                "non-finite beam state at t = {} (x0 = {})",
                self.t, self.x0
            )));
        }
        Ok(())
    }
}

/// Time derivative of the evolved components of a [`BeamState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamRates {
    pub xt: f64,
    pub p: f64,
    pub s: f64,
    pub m: Complex64,
    pub a: Complex64,
}

/// Fixed-step trajectory of one beam.
#[derive(Debug, Clone)]
pub struct BeamTrajectory {
    pub dt: f64,
    pub states: Vec<BeamState>,
    /// Smallest local band gap met at the RK4 stage points.
    pub min_gap: f64,
    /// First-order corrector on the ray, one vector per state when filled.
    pub a1: Option<Vec<Coeffs>>,
}

impl BeamTrajectory {
    pub fn final_state(&self) -> &BeamState {
        self.states.last().expect("a trajectory holds at least the initial state")
    }

    /// Fills [`BeamTrajectory::a1`] for every stored state.
    pub fn with_a1(mut self, ve: &ExternalPotential, cell: &dyn BandStructure) -> Result<Self> {
        let a1 = self
            .states
            .iter()
            .map(|s| compute_a1_on_ray(s, ve, cell))
            .collect::<Result<Vec<_>>>()?;
        self.a1 = Some(a1);
        Ok(self)
    }
}

/// `g(x0, y) = Σ_n a_n(x0) z_n(S0'(x0), y)` projected back on band `band`
/// by cell quadrature.
pub fn projected_amplitude(
    x0: f64,
    band: usize,
    spec: &InitialDataSpec,
    cell: &dyn BandStructure,
) -> Result<Complex64> {
    let k = spec.phase.d1(x0);
    let target = cell.band_vector(k, band)?;
    let mut terms = Vec::new();
    for n in spec.bands() {
        terms.push((spec.amplitude(n, x0), cell.band_vector(k, n)?));
    }
    let dy = 2.0 * std::f64::consts::PI / PROJECTION_POINTS as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..PROJECTION_POINTS {
        let y = j as f64 * dy;
        let g: Complex64 = terms
            .iter()
            .map(|(a, z)| eval_cell_function(z, y) * *a)
            .sum();
        acc += g * eval_cell_function(&target, y).conj();
    }
    Ok(acc * dy)
}

/// Launches the beam of band `band` from `x0`.
pub fn init_beam(
    x0: f64,
    band: usize,
    spec: &InitialDataSpec,
    cell: &dyn BandStructure,
) -> Result<BeamState> {
    let launch = |source: Error| Error::Launch {
        x0,
        source: Box::new(source),
    };
    if !spec.contains(x0) {
        return Err(Error::Config(format!(
            "launch point {x0} lies outside K0 = [{}, {}]",
            spec.k0.0, spec.k0.1
        )));
    }
    let [s0, s1, s2, _] = spec.phase.derivatives(x0);
    cell.ray_data(s1, band).map_err(launch)?;
    let a = spec.amplitude(band, x0);
    let projected = projected_amplitude(x0, band, spec, cell).map_err(launch)?;
    if (projected - a).norm() > PROJECTION_TOL * a.abs().max(1.0) {
        return Err(launch(Error::Consistency(format!(
            "projected launch amplitude {projected} differs from the envelope value {a}"
        ))));
    }
    Ok(BeamState {
        t: 0.0,
        x0,
        band,
        xt: x0,
        p: s1,
        s: s0,
        m: Complex64::new(s2, 1.0),
        a: Complex64::new(a, 0.0),
    })
}

/// Beam right-hand side given band data already evaluated at `state.p`.
pub fn rates_from_band(state: &BeamState, ve: &ExternalPotential, bd: &RayBandData) -> BeamRates {
    let [v, v1, v2, _] = ve.derivatives(state.xt);
    let m = state.m;
    BeamRates {
        xt: bd.e1,
        p: -v1,
        s: state.p * bd.e1 - bd.energy - v,
        m: -m * m * bd.e2 - v2,
        a: state.a * (bd.berry * v1 - m * (0.5 * bd.e2)),
    }
}

pub fn ode_rhs(
    state: &BeamState,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<BeamRates> {
    let bd = cell.ray_data(state.p, state.band)?;
    Ok(rates_from_band(state, ve, &bd))
}

fn advance(state: &BeamState, r: &BeamRates, h: f64) -> BeamState {
    BeamState {
        t: state.t + h,
        xt: state.xt + h * r.xt,
        p: state.p + h * r.p,
        s: state.s + h * r.s,
        m: state.m + r.m * h,
        a: state.a + r.a * h,
        ..*state
    }
}

/// Number of steps and the adjusted step dividing `t_final` exactly.
pub fn uniform_steps(t_final: f64, dt: f64) -> (usize, f64) {
    if t_final == 0.0 {
        return (0, dt);
    }
    let ratio = t_final / dt;
    let n = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    };
    let n = (n as usize).max(1);
    (n, t_final / n as f64)
}

/// Classical RK4 from `state0.t` to `state0.t + t_final`.
pub fn rk4_propagate(
    state0: &BeamState,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
    t_final: f64,
    dt: f64,
) -> Result<BeamTrajectory> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::Config(format!(
            "propagation needs dt > 0 and T >= 0, got dt = {dt}, T = {t_final}"
        )));
    }
    state0.check()?;
    let (n_steps, dt) = uniform_steps(t_final, dt);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(*state0);
    let mut y = *state0;
    let mut min_gap = f64::INFINITY;
    for step in 0..n_steps {
        let bd = cell.ray_data(y.p, y.band)?;
        min_gap = min_gap.min(bd.gap);
        let k1 = rates_from_band(&y, ve, &bd);
        let k2 = ode_rhs(&advance(&y, &k1, 0.5 * dt), ve, cell)?;
        let k3 = ode_rhs(&advance(&y, &k2, 0.5 * dt), ve, cell)?;
        let k4 = ode_rhs(&advance(&y, &k3, dt), ve, cell)?;
        let w = dt / 6.0;
        y = BeamState {
            t: state0.t + (step + 1) as f64 * dt,
            xt: y.xt + w * (k1.xt + 2.0 * k2.xt + 2.0 * k3.xt + k4.xt),
            p: y.p + w * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
            s: y.s + w * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            m: y.m + (k1.m + k2.m * 2.0 + k3.m * 2.0 + k4.m) * w,
            a: y.a + (k1.a + k2.a * 2.0 + k3.a * 2.0 + k4.a) * w,
            ..y
        };
        y.check()?;
        states.push(y);
    }
    min_gap = min_gap.min(cell.ray_data(y.p, y.band)?.gap);
    Ok(BeamTrajectory {
        dt,
        states,
        min_gap,
        a1: None,
    })
}

/// Leading-order transport vector `LA₀` on the ray and the band vector `z`.
fn transport_vector(
    state: &BeamState,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<(Coeffs, Coeffs)> {
    let data = cell.local_data(state.p, state.band, false)?;
    let rates = rates_from_band(state, ve, &RayBandData::from(&data));
    let z = &data.pair.coeffs;
    let hk_dkz = apply_hk(&data.dkz, state.p);
    let m = state.m;
    let kt = -ve.d1(state.xt) - m * data.e1;
    let la0 = z * rates.a + (&data.dkz * kt + hk_dkz * m + z * (0.5 * m)) * state.a;
    Ok((la0, data.pair.coeffs))
}

/// `|⟨LA₀, z⟩| / |a|`, zero when the amplitude vanishes.
pub fn solvability_residual(
    state: &BeamState,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<f64> {
    if state.a == Complex64::new(0.0, 0.0) {
        return Ok(0.0);
    }
    let (la0, z) = transport_vector(state, ve, cell)?;
    Ok(inner(&la0, &z).norm() / state.a.norm())
}

/// First-order corrector `A₁ = i (H − E)⁻¹ (LA₀ − ⟨LA₀, z⟩ z)` at `k = p`,
/// with no component along `z`.
pub fn compute_a1_on_ray(
    state: &BeamState,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<Coeffs> {
    if state.a == Complex64::new(0.0, 0.0) {
        return Ok(Coeffs::zeros(cell.dim()));
    }
    let (la0, z) = transport_vector(state, ve, cell)?;
    let residual = inner(&la0, &z).norm() / state.a.norm();
    if residual > DEFAULT_SOLVABILITY_TOL {
        return Err(Error::Solvability {
            t: state.t,
            residual,
        });
    }
    let u = cell.reduced_resolvent(state.p, state.band, &la0)?;
    Ok(u * I)
}

/// Ray Hamiltonian `E(p) + V_e(x̃)`.
pub fn hamiltonian_energy(
    state: &BeamState,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<f64> {
    Ok(cell.ray_data(state.p, state.band)?.energy + ve.value(state.xt))
}

#[cfg(test)]
mod tests;
