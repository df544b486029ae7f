//! Fields on a uniform periodic grid: the exact two-scale initial datum,
//! Gaussian beam superpositions, L² norms and the Hamilton–Jacobi residual.

mod snapshot;

pub use snapshot::{read_field_csv, write_field_csv};

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::beam_dynamics::{
    compute_a1_on_ray, init_beam, rates_from_band, BeamState, ExternalPotential, InitialDataSpec,
};
use crate::cell_spectral::{BandStructure, Coeffs};
use crate::error::{Error, Result};

/// Minimum number of grid points per lattice period `2πε`.
pub const MIN_POINTS_PER_CELL: usize = 16;
/// Smallest admissible `r_cut / √(ε/δ_min)`.
pub const MIN_RCUT_FACTOR: f64 = 6.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Uniform grid `x_j = x_lo + j Δx`, `j < n`, on a periodic box of length
/// `n Δx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x_lo: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x_lo: f64, length: f64, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Config(format!("grid size {n} is not a power of two")));
        }
        if !(length > 0.0) || !length.is_finite() || !x_lo.is_finite() {
            return Err(Error::Config(format!("invalid grid box [{x_lo}, {x_lo} + {length}]")));
        }
        Ok(Grid {
            x_lo,
            dx: length / n as f64,
            n,
        })
    }

    /// Box centred at `center`, at least `min_length` long, made of a
    /// power-of-two number of lattice periods `2πε` with `points_per_cell`
    /// points each.
    pub fn commensurate(
        center: f64,
        min_length: f64,
        epsilon: f64,
        points_per_cell: usize,
    ) -> Result<Self> {
        if !points_per_cell.is_power_of_two() || points_per_cell < MIN_POINTS_PER_CELL {
            return Err(Error::Config(format!(
                "points per cell must be a power of two >= {MIN_POINTS_PER_CELL}, got {points_per_cell}"
            )));
        }
        let period = 2.0 * PI * epsilon;
        let cells = ((min_length / period).ceil() as usize).max(1).next_power_of_two();
        let length = cells as f64 * period;
        Grid::new(center - 0.5 * length, length, cells * points_per_cell)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_lo + j as f64 * self.dx
    }

    pub fn length(&self) -> f64 {
        self.dx * self.n as f64
    }

    pub fn resolves(&self, epsilon: f64) -> bool {
        self.dx <= 2.0 * PI * epsilon / MIN_POINTS_PER_CELL as f64 * (1.0 + 1e-12)
    }

    fn check_resolves(&self, epsilon: f64) -> Result<()> {
        if !self.resolves(epsilon) {
            return Err(Error::Config(format!(
                "grid spacing {} does not resolve ε = {epsilon} (needs <= 2πε/{MIN_POINTS_PER_CELL})",
                self.dx
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub epsilon: f64,
    pub t: f64,
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl WaveField {
    pub fn zeros(epsilon: f64, t: f64, grid: Grid) -> Self {
        WaveField {
            epsilon,
            t,
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus at the two box ends relative to the field maximum.
    pub fn edge_ratio(&self) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let edge = self.values[0].norm().max(self.values[self.grid.n - 1].norm());
        edge / max
    }
}

pub fn l2_norm(field: &WaveField) -> f64 {
    (field.grid.dx * field.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

pub fn l2_error(f1: &WaveField, f2: &WaveField) -> Result<f64> {
    if f1.grid != f2.grid {
        return Err(Error::GridMismatch);
    }
    let sum: f64 = f1
        .values
        .iter()
        .zip(&f2.values)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok((f1.grid.dx * sum).sqrt())
}

/// `Φ = S + p (x − x̃) + ½ M (x − x̃)²`.
pub fn beam_phase(state: &BeamState, x: f64) -> Complex64 {
    let h = x - state.xt;
    state.m * (0.5 * h * h) + state.s + state.p * h
}

/// One beam ready for assembly.
#[derive(Debug, Clone)]
pub struct Beam {
    pub state: BeamState,
    pub a1: Option<Coeffs>,
}

/// Beam contribution on the contiguous grid window `start..start + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamContribution {
    pub start: usize,
    pub values: Vec<Complex64>,
    /// Points where the complex-k offset exceeded the Taylor radius.
    pub extrapolated: usize,
    /// The cutoff window reached past the grid.
    pub clipped: bool,
}

/// Evaluates `(a z(κ, x/ε) + ε A₁(x/ε)) e^{iΦ/ε}` with `κ = p + M(x − x̃)`
/// on the grid points within `r_cut` of the ray.
pub fn eval_beam(
    state: &BeamState,
    a1: Option<&Coeffs>,
    grid: &Grid,
    epsilon: f64,
    r_cut: f64,
    cell: &dyn BandStructure,
) -> Result<BeamContribution> {
    let lo = ((state.xt - r_cut - grid.x_lo) / grid.dx).ceil();
    let hi = ((state.xt + r_cut - grid.x_lo) / grid.dx).floor();
    let clipped = lo < 0.0 || hi > (grid.n - 1) as f64;
    let lo = lo.max(0.0);
    let hi = hi.min((grid.n - 1) as f64);
    if hi < lo {
        return Ok(BeamContribution {
            start: 0,
            values: Vec::new(),
            extrapolated: 0,
            clipped,
        });
    }
    let (start, end) = (lo as usize, hi as usize);
    let data = cell.local_data(state.p, state.band, true)?;
    let z = &data.pair.coeffs;
    let d1 = &data.dkz;
    let d2 = data.dk2z.as_ref().expect("curvature requested");
    let cutoff = (z.len() as i32 - 1) / 2;
    let radius = cell.taylor_radius();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut values = Vec::with_capacity(end - start + 1);
    let mut extrapolated = 0;
    for j in start..=end {
        let x = grid.x(j);
        let delta = state.m * (x - state.xt);
        if delta.norm() > radius {
            extrapolated += 1;
        }
        let y = x / epsilon;
        let step = Complex64::from_polar(1.0, y);
        let mut phase = Complex64::from_polar(1.0, -(cutoff as f64) * y);
        let mut zsum = Complex64::new(0.0, 0.0);
        let mut asum = Complex64::new(0.0, 0.0);
        for i in 0..z.len() {
            zsum += (z[i] + delta * (d1[i] + 0.5 * delta * d2[i])) * phase;
            if let Some(a1) = a1 {
                asum += a1[i] * phase;
            }
            phase *= step;
        }
        let amplitude = (state.a * zsum + asum * epsilon) * norm;
        values.push(amplitude * (I * beam_phase(state, x) / epsilon).exp());
    }
    Ok(BeamContribution {
        start,
        values,
        extrapolated,
        clipped,
    })
}

/// Discretization of the launch integral over `K0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionSpec {
    /// Requested node spacing; the actual spacing divides `K0` evenly.
    pub dx0: f64,
    pub bands: Vec<usize>,
    pub with_a1: bool,
    /// `r_cut = rcut_factor · √(ε/δ_min)`, `δ_min = min Im(M)/2`.
    pub rcut_factor: f64,
    pub parallel: bool,
}

impl SuperpositionSpec {
    /// Default node spacing `√ε/4` and cutoff factor 6.
    pub fn standard(epsilon: f64, bands: Vec<usize>) -> Self {
        SuperpositionSpec {
            dx0: 0.25 * epsilon.sqrt(),
            bands,
            with_a1: true,
            rcut_factor: MIN_RCUT_FACTOR,
            parallel: true,
        }
    }

    pub fn validate(&self, epsilon: f64) -> Result<()> {
        if !(self.dx0 > 0.0) || self.dx0 > 0.25 * epsilon.sqrt() * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "Δx0 = {} must lie in (0, √ε/4 = {}]",
                self.dx0,
                0.25 * epsilon.sqrt()
            )));
        }
        if self.rcut_factor < MIN_RCUT_FACTOR {
            return Err(Error::Config(format!(
                "beam cutoff factor {} is below {MIN_RCUT_FACTOR}",
                self.rcut_factor
            )));
        }
        if self.bands.is_empty() {
            return Err(Error::Config("no bands selected for the superposition".into()));
        }
        Ok(())
    }
}

/// Midpoint nodes over `[lo, hi]` with spacing at most `dx0`; returns the
/// nodes and the actual spacing.
pub fn launch_nodes(k0: (f64, f64), dx0: f64) -> (Vec<f64>, f64) {
    let width = k0.1 - k0.0;
    let n = ((width / dx0) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = width / n as f64;
    ((0..n).map(|i| k0.0 + (i as f64 + 0.5) * h).collect(), h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpositionDiagnostics {
    pub beams: usize,
    pub r_cut: f64,
    pub min_im_m: f64,
    pub extrapolated_points: usize,
    pub clipped_beams: usize,
}

/// `(2πε)^{-1/2} Δx0 Σ_{x0} Σ_n` beam contributions.
///
/// Contributions are accumulated per band in ascending `x0` and band fields
/// are added in ascending band order. The parallel path only evaluates the
/// beams concurrently; the reduction is the same serial loop, so it
/// reproduces the serial result exactly.
pub fn superpose(
    beams: &[Beam],
    dx0: f64,
    spec: &SuperpositionSpec,
    grid: &Grid,
    epsilon: f64,
    cell: &dyn BandStructure,
) -> Result<(WaveField, SuperpositionDiagnostics)> {
    grid.check_resolves(epsilon)?;
    spec.validate(epsilon)?;
    if dx0 > spec.dx0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "node spacing {dx0} exceeds the requested Δx0 = {}",
            spec.dx0
        )));
    }
    let t = beams.first().map_or(0.0, |b| b.state.t);
    if beams.iter().any(|b| b.state.t != t) {
        return Err(Error::Config("beams do not share a common time".into()));
    }
    let min_im_m = beams
        .iter()
        .map(|b| b.state.m.im)
        .fold(f64::INFINITY, f64::min);
    let r_cut = if beams.is_empty() {
        0.0
    } else {
        spec.rcut_factor * (epsilon / (0.5 * min_im_m)).sqrt()
    };
    let mut order: Vec<usize> = (0..beams.len())
        .filter(|&i| spec.bands.contains(&beams[i].state.band))
        .collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&beams[i].state, &beams[j].state);
        (a.band, a.x0).partial_cmp(&(b.band, b.x0)).expect("finite launch points")
    });
    let eval = |&i: &usize| {
        let b = &beams[i];
        let a1 = if spec.with_a1 { b.a1.as_ref() } else { None };
        eval_beam(&b.state, a1, grid, epsilon, r_cut, cell)
    };
    let contributions: Vec<BeamContribution> = if spec.parallel {
        order.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        order.iter().map(eval).collect::<Result<_>>()?
    };
    let weight = dx0 / (2.0 * PI * epsilon).sqrt();
    let zero = Complex64::new(0.0, 0.0);
    let mut field = WaveField::zeros(epsilon, t, *grid);
    let mut band_acc = vec![zero; grid.n];
    let mut diag = SuperpositionDiagnostics {
        beams: order.len(),
        r_cut,
        min_im_m,
        extrapolated_points: 0,
        clipped_beams: 0,
    };
    for (pos, (&i, c)) in order.iter().zip(&contributions).enumerate() {
        for (slot, v) in band_acc[c.start..].iter_mut().zip(&c.values) {
            *slot += v * weight;
        }
        diag.extrapolated_points += c.extrapolated;
        diag.clipped_beams += c.clipped as usize;
        let band = beams[i].state.band;
        let last_of_band = order
            .get(pos + 1)
            .map_or(true, |&j| beams[j].state.band != band);
        if last_of_band {
            for (f, b) in field.values.iter_mut().zip(band_acc.iter_mut()) {
                *f += *b;
                *b = zero;
            }
        }
    }
    Ok((field, diag))
}

/// Launches one beam per node of `K0` and band, with the on-ray corrector
/// when requested.
pub fn launch_beams(
    spec: &InitialDataSpec,
    sup: &SuperpositionSpec,
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<(Vec<Beam>, f64)> {
    let (nodes, dx0) = launch_nodes(spec.k0, sup.dx0);
    let mut beams = Vec::with_capacity(nodes.len() * sup.bands.len());
    for &band in &sup.bands {
        for &x0 in &nodes {
            let state = init_beam(x0, band, spec, cell)?;
            let a1 = if sup.with_a1 {
                Some(compute_a1_on_ray(&state, ve, cell)?)
            } else {
                None
            };
            beams.push(Beam { state, a1 });
        }
    }
    Ok((beams, dx0))
}

/// Beam superposition of the initial datum (all beams at `t = 0`).
pub fn initial_superposition(
    spec: &InitialDataSpec,
    sup: &SuperpositionSpec,
    ve: &ExternalPotential,
    grid: &Grid,
    epsilon: f64,
    cell: &dyn BandStructure,
) -> Result<(WaveField, SuperpositionDiagnostics)> {
    let (beams, dx0) = launch_beams(spec, sup, ve, cell)?;
    superpose(&beams, dx0, sup, grid, epsilon, cell)
}

/// `Σ_n a_n(x) z_n(S0'(x), x/ε) e^{iS0(x)/ε}` on the grid, zero outside `K0`.
pub fn exact_initial(
    spec: &InitialDataSpec,
    grid: &Grid,
    epsilon: f64,
    cell: &dyn BandStructure,
) -> Result<WaveField> {
    grid.check_resolves(epsilon)?;
    let mut field = WaveField::zeros(epsilon, 0.0, *grid);
    let mut cache: HashMap<(i64, usize), Coeffs> = HashMap::new();
    let bands = spec.bands();
    for (j, value) in field.values.iter_mut().enumerate() {
        let x = grid.x(j);
        if !spec.contains(x) {
            continue;
        }
        let [s0, s1, _, _] = spec.phase.derivatives(x);
        let key = (s1 * 1e10).round() as i64;
        let mut cellsum = Complex64::new(0.0, 0.0);
        for &n in &bands {
            let z = match cache.get(&(key, n)) {
                Some(z) => z,
                None => {
                    let data = cell.local_data(s1, n, false).map_err(|e| {
                        Error::Config(format!("initial data at x = {x} (k = {s1}): {e}"))
                    })?;
                    cache.entry((key, n)).or_insert(data.pair.coeffs)
                }
            };
            cellsum += crate::cell_spectral::eval_cell_function(z, x / epsilon) * spec.amplitude(n, x);
        }
        *value = cellsum * (I * s0 / epsilon).exp();
    }
    Ok(field)
}

/// `|F(t, x̃ + h)|` for each offset, `F = ∂ₜΦ + E(∂ₓΦ) + V_e(x)`.
///
/// `E` at the complex argument `p + M h` uses its Taylor polynomial through
/// third order, with `E'''` taken by finite differences.
pub fn hj_residual(
    state: &BeamState,
    offsets: &[f64],
    ve: &ExternalPotential,
    cell: &dyn BandStructure,
) -> Result<Vec<f64>> {
    let bd = cell.ray_data(state.p, state.band)?;
    let e3 = cell.energy_third_derivative(state.p, state.band)?;
    let r = rates_from_band(state, ve, &bd);
    Ok(offsets
        .iter()
        .map(|&h| {
            let m = state.m;
            let dt_phi = m * (-h * r.xt) + r.m * (0.5 * h * h) + r.s + r.p * h - state.p * r.xt;
            let d = m * h;
            let energy = bd.energy + d * (bd.e1 + d * (0.5 * bd.e2 + d * (e3 / 6.0)));
            (dt_phi + energy + ve.value(state.xt + h)).norm()
        })
        .collect())
}
