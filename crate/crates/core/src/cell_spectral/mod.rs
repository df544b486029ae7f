//! Periodic cell eigenproblem in a truncated plane-wave basis.
//!
//! The cell Hamiltonian `H(k) = ½(-i∂_y + k)² + V(y)` acts on 2π-periodic
//! functions. In the basis `e^{imy}/√(2π)`, `|m| ≤ M_pw`, it is the dense
//! Hermitian matrix
//!
//! ```text
//! H_{m,m'} = ½(m + k)² δ_{mm'} + v_{m-m'}
//! ```
//!
//! Everything the beam dynamics needs from a band is derived here: energy,
//! group velocity, curvature, gauge-fixed eigenvector and its k-derivatives,
//! the Berry-type term `⟨∂ₖz, z⟩`, a Taylor extension to complex k and the
//! reduced resolvent on the orthogonal complement of an eigenvector.
//!
//! Coefficient vectors are indexed by `m + M_pw`. Inner products follow the
//! `⟨f, g⟩ = Σ f_m conj(g_m)` convention (linear in the first slot).

mod free;
mod potential;

pub use free::FreeBand;
pub use potential::{PeriodicPotential, PlaneWaveBasis};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Plane-wave coefficient vector of a cell function.
pub type Coeffs = DVector<Complex64>;

/// Default lower bound on the local band gap.
pub const DEFAULT_GAP_MIN: f64 = 1e-6;
/// Default step for finite-difference k-derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-3;
/// Default radius of trust for the complex-k Taylor extension.
pub const DEFAULT_TAYLOR_RADIUS: f64 = 0.5;

const TIE_TOL: f64 = 1e-12;

/// `⟨f, g⟩ = Σ f_m conj(g_m)`.
pub fn inner(f: &Coeffs, g: &Coeffs) -> Complex64 {
    f.iter().zip(g.iter()).map(|(a, b)| a * b.conj()).sum()
}

/// Applies `H_k = -i∂_y + k`, i.e. `c_m ↦ (m + k) c_m`.
pub fn apply_hk(c: &Coeffs, k: f64) -> Coeffs {
    let cutoff = (c.len() as i64 - 1) / 2;
    Coeffs::from_iterator(
        c.len(),
        c.iter()
            .enumerate()
            .map(|(i, v)| v * (i as i64 - cutoff) as f64 + v * k),
    )
}

/// Evaluates `(2π)^{-1/2} Σ c_m e^{imy}`.
pub fn eval_cell_function(c: &Coeffs, y: f64) -> Complex64 {
    let cutoff = (c.len() as i32 - 1) / 2;
    let step = Complex64::from_polar(1.0, y);
    let mut phase = Complex64::from_polar(1.0, -(cutoff as f64) * y);
    let mut acc = Complex64::new(0.0, 0.0);
    for coeff in c.iter() {
        acc += coeff * phase;
        phase *= step;
    }
    acc / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    Raw,
    Fixed,
}

/// One normalized eigenpair of `H(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochEigenpair {
    /// 1-based, ascending in energy.
    pub band: usize,
    pub k: f64,
    pub energy: f64,
    pub coeffs: Coeffs,
    pub gauge: Gauge,
}

/// Band quantities at one quasimomentum, in the fixed gauge.
#[derive(Debug, Clone)]
pub struct BandLocalData {
    pub pair: BlochEigenpair,
    pub e1: f64,
    pub e2: f64,
    pub dkz: Coeffs,
    /// Only filled when the curvature of the eigenvector was requested.
    pub dk2z: Option<Coeffs>,
    pub berry: Complex64,
    pub gap: f64,
}

/// The subset of band data the ray/Riccati/amplitude ODEs consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayBandData {
    pub energy: f64,
    pub e1: f64,
    pub e2: f64,
    pub berry: Complex64,
    pub gap: f64,
}

impl From<&BandLocalData> for RayBandData {
    fn from(d: &BandLocalData) -> Self {
        RayBandData {
            energy: d.pair.energy,
            e1: d.e1,
            e2: d.e2,
            berry: d.berry,
            gap: d.gap,
        }
    }
}

/// Complex-k Taylor evaluation of an eigenvector.
#[derive(Debug, Clone)]
pub struct TaylorEval {
    pub coeffs: Coeffs,
    /// Set when `|κ - k|` exceeded the trust radius.
    pub extrapolated: bool,
}

/// Band services consumed by the beam dynamics and the field assembly.
///
/// Implementations must be pure: the same `(k, band)` always yields the
/// same numbers.
pub trait BandStructure: Sync {
    /// Length of the coefficient vectors handed out.
    fn dim(&self) -> usize;

    /// All computed eigenpairs at `k`, ascending in band index, each with
    /// its largest-modulus coefficient real positive.
    fn eigenpairs(&self, k: f64) -> Result<Vec<BlochEigenpair>>;

    /// Gauge-fixed eigenvector of one band, in the same gauge as
    /// [`BandStructure::local_data`].
    fn band_vector(&self, k: f64, band: usize) -> Result<Coeffs>;

    fn ray_data(&self, k: f64, band: usize) -> Result<RayBandData>;

    fn local_data(&self, k: f64, band: usize, with_curvature: bool) -> Result<BandLocalData>;

    /// `u` with `(H(k) - E_n) u = rhs - ⟨rhs, z_n⟩ z_n` and `⟨u, z_n⟩ = 0`.
    fn reduced_resolvent(&self, k: f64, band: usize, rhs: &Coeffs) -> Result<Coeffs>;

    /// `E'''(k)`, diagnostics only.
    fn energy_third_derivative(&self, k: f64, band: usize) -> Result<f64>;

    fn taylor_radius(&self) -> f64 {
        DEFAULT_TAYLOR_RADIUS
    }
}

/// Assembles the dense Hermitian matrix of `H(k)`.
pub fn assemble_hamiltonian(
    k: f64,
    potential: &PeriodicPotential,
    basis: &PlaneWaveBasis,
) -> Result<DMatrix<Complex64>> {
    if basis.cutoff() < potential.cutoff() {
        return Err(Error::Config(format!(
            "plane-wave cutoff {} is below the potential cutoff {}",
            basis.cutoff(),
            potential.cutoff()
        )));
    }
    let dim = basis.dim();
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        let (m, mp) = (basis.mode(i), basis.mode(j));
        let mut entry = potential.coeff(m - mp);
        if i == j {
            let q = m as f64 + k;
            entry += 0.5 * q * q;
        }
        entry
    }))
}

fn eigen_decompose(
    h: DMatrix<Complex64>,
    k: f64,
    cutoff: usize,
) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    // Real symmetric matrices (potentials with real Fourier coefficients)
    // take the cheaper real path.
    let (raw_values, raw_vectors) = if h.iter().all(|v| v.im == 0.0) {
        let eig = nalgebra::SymmetricEigen::try_new(h.map(|v| v.re), f64::EPSILON, 10_000)
            .ok_or(Error::Eigensolver { k, cutoff })?;
        (eig.eigenvalues, eig.eigenvectors.map(|v| Complex64::new(v, 0.0)))
    } else {
        let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 10_000)
            .ok_or(Error::Eigensolver { k, cutoff })?;
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..raw_values.len()).collect();
    order.sort_by(|&a, &b| raw_values[a].total_cmp(&raw_values[b]));
    let values = order.iter().map(|&i| raw_values[i]).collect();
    let vectors = raw_vectors.select_columns(&order);
    Ok((values, vectors))
}

/// Lowest `n_bands` eigenpairs of `H(k)` in ascending order, raw gauge.
pub fn solve_bands(
    k: f64,
    potential: &PeriodicPotential,
    basis: &PlaneWaveBasis,
    n_bands: usize,
) -> Result<Vec<BlochEigenpair>> {
    if n_bands == 0 || n_bands > basis.dim() {
        return Err(Error::Config(format!(
            "requested {n_bands} bands from a basis of dimension {}",
            basis.dim()
        )));
    }
    let h = assemble_hamiltonian(k, potential, basis)?;
    let (values, vectors) = eigen_decompose(h, k, basis.cutoff())?;
    Ok((0..n_bands)
        .map(|i| {
            let mut coeffs: Coeffs = vectors.column(i).into_owned();
            let norm = coeffs.norm();
            coeffs /= Complex64::new(norm, 0.0);
            BlochEigenpair {
                band: i + 1,
                k,
                energy: values[i],
                coeffs,
                gauge: Gauge::Raw,
            }
        })
        .collect())
}

/// Index of the largest-modulus coefficient, ties resolved toward the
/// smallest mode index.
fn dominant_index(c: &Coeffs) -> usize {
    let mut best = 0;
    let mut best_abs = c[0].norm();
    for (i, v) in c.iter().enumerate().skip(1) {
        let a = v.norm();
        if a > best_abs + TIE_TOL {
            best = i;
            best_abs = a;
        }
    }
    best
}

/// Rotates the eigenvector so its largest-modulus coefficient is real and
/// positive.
pub fn fix_gauge(pair: BlochEigenpair) -> Result<BlochEigenpair> {
    let norm_sq = pair.coeffs.norm_squared();
    if norm_sq == 0.0 {
        return Err(Error::Invariant(format!(
            "zero eigenvector for band {} at k = {}",
            pair.band, pair.k
        )));
    }
    if (norm_sq - 1.0).abs() > 1e-8 {
        return Err(Error::Invariant(format!(
            "eigenvector for band {} at k = {} has norm² {norm_sq}",
            pair.band, pair.k
        )));
    }
    let idx = dominant_index(&pair.coeffs);
    let lead = pair.coeffs[idx];
    let phase = lead.conj() / lead.norm();
    let mut coeffs = pair.coeffs.map(|c| c * phase);
    coeffs[idx] = Complex64::new(lead.norm(), 0.0);
    Ok(BlochEigenpair {
        coeffs,
        gauge: Gauge::Fixed,
        ..pair
    })
}

/// Group velocity `E'(k) = Σ (m + k)|c_m|²`.
pub fn band_e1(pair: &BlochEigenpair) -> f64 {
    let cutoff = (pair.coeffs.len() as i64 - 1) / 2;
    pair.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| (i as i64 - cutoff) as f64 * c.norm_sqr() + pair.k * c.norm_sqr())
        .sum()
}

/// Smallest distance from band `n` to any other computed band, with the
/// nearest band's index.
fn local_gap(pairs: &[BlochEigenpair], n: usize) -> (f64, usize) {
    let e = pairs[n - 1].energy;
    pairs
        .iter()
        .filter(|p| p.band != n)
        .map(|p| ((p.energy - e).abs(), p.band))
        .fold((f64::INFINITY, n), |acc, x| if x.0 < acc.0 { x } else { acc })
}

fn check_gap(pairs: &[BlochEigenpair], n: usize, gap_min: f64) -> Result<f64> {
    let (gap, other) = local_gap(pairs, n);
    if gap < gap_min {
        return Err(Error::GapViolation {
            k: pairs[n - 1].k,
            band: n,
            other,
            gap,
            gap_min,
        });
    }
    Ok(gap)
}

fn band_index_check(pairs: &[BlochEigenpair], n: usize) -> Result<()> {
    if n == 0 || n > pairs.len() {
        return Err(Error::Config(format!(
            "band {n} not available ({} bands computed)",
            pairs.len()
        )));
    }
    Ok(())
}

/// `∂ₖz_n` of the gauge-fixed family.
///
/// The component orthogonal to `z_n` is the first-order perturbation sum
/// over every other eigenpair; the component along `z_n` is the imaginary
/// multiple of `z_n` that keeps the dominant coefficient real.
pub fn band_dkz(pairs: &[BlochEigenpair], n: usize, gap_min: f64) -> Result<Coeffs> {
    band_index_check(pairs, n)?;
    check_gap(pairs, n, gap_min)?;
    let target = if pairs[n - 1].gauge == Gauge::Fixed {
        pairs[n - 1].clone()
    } else {
        fix_gauge(pairs[n - 1].clone())?
    };
    let k = target.k;
    let hk_z = apply_hk(&target.coeffs, k);
    let mut perp = Coeffs::zeros(target.coeffs.len());
    for other in pairs.iter().filter(|p| p.band != n) {
        let coupling = inner(&hk_z, &other.coeffs);
        let weight = coupling / (target.energy - other.energy);
        perp.axpy(weight, &other.coeffs, Complex64::new(1.0, 0.0));
    }
    let idx = dominant_index(&target.coeffs);
    let beta = -perp[idx].im / target.coeffs[idx].re;
    perp.axpy(Complex64::new(0.0, beta), &target.coeffs, Complex64::new(1.0, 0.0));
    Ok(perp)
}

/// `E''(k) = 1 + 2⟨H_k ∂ₖz, z⟩ − 2E'⟨∂ₖz, z⟩`.
pub fn band_e2(pair: &BlochEigenpair, e1: f64, dkz: &Coeffs) -> Result<f64> {
    let value = Complex64::new(1.0, 0.0) + 2.0 * inner(&apply_hk(dkz, pair.k), &pair.coeffs)
        - 2.0 * e1 * inner(dkz, &pair.coeffs);
    if value.im.abs() > 1e-6 {
        return Err(Error::Consistency(format!(
            "E'' at k = {} has imaginary part {:.3e}",
            pair.k, value.im
        )));
    }
    Ok(value.re)
}

/// Gauge-fixed eigenpair of band `n` at `k`, together with its local gap.
fn fixed_pair(
    potential: &PeriodicPotential,
    basis: &PlaneWaveBasis,
    k: f64,
    n: usize,
    gap_min: f64,
) -> Result<BlochEigenpair> {
    let pairs = solve_bands(k, potential, basis, basis.dim())?;
    band_index_check(&pairs, n)?;
    check_gap(&pairs, n, gap_min)?;
    fix_gauge(pairs[n - 1].clone())
}

/// `∂ₖ²z_n` by a centered second difference of gauge-fixed eigenvectors.
pub fn band_dk2z(
    potential: &PeriodicPotential,
    basis: &PlaneWaveBasis,
    k: f64,
    n: usize,
    h: f64,
    gap_min: f64,
) -> Result<Coeffs> {
    let centre = fixed_pair(potential, basis, k, n, gap_min)?;
    let plus = fixed_pair(potential, basis, k + h, n, gap_min)?;
    let minus = fixed_pair(potential, basis, k - h, n, gap_min)?;
    second_difference(&centre, &plus, &minus, h)
}

fn second_difference(
    centre: &BlochEigenpair,
    plus: &BlochEigenpair,
    minus: &BlochEigenpair,
    h: f64,
) -> Result<Coeffs> {
    for side in [plus, minus] {
        let overlap = inner(&side.coeffs, &centre.coeffs).re;
        if overlap < 0.99 {
            return Err(Error::StepTooLarge {
                k: centre.k,
                overlap,
            });
        }
    }
    let two = Complex64::new(2.0, 0.0);
    Ok((&plus.coeffs - &centre.coeffs * two + &minus.coeffs) / Complex64::new(h * h, 0.0))
}

/// `z(κ) ≈ z(k) + ∂ₖz (κ−k) + ½ ∂ₖ²z (κ−k)²`.
pub fn eval_z_taylor(data: &BandLocalData, kappa: Complex64, radius: f64) -> Result<TaylorEval> {
    let dk2z = data.dk2z.as_ref().ok_or_else(|| {
        Error::Invariant("complex-k evaluation needs the eigenvector curvature".into())
    })?;
    let delta = kappa - data.pair.k;
    let coeffs = Coeffs::from_iterator(
        data.pair.coeffs.len(),
        data.pair
            .coeffs
            .iter()
            .zip(data.dkz.iter())
            .zip(dk2z.iter())
            .map(|((z, d1), d2)| z + delta * (d1 + 0.5 * delta * d2)),
    );
    Ok(TaylorEval {
        coeffs,
        extrapolated: delta.norm() > radius,
    })
}

/// Solves `(H − E_n) u = rhs_⊥` on the orthogonal complement of `z_n`.
///
/// The rank-one shift `z_n z_n^†` maps the null direction to itself with
/// eigenvalue one, so the shifted matrix is invertible whenever the band is
/// isolated.
pub fn reduced_resolvent_solve(
    hamiltonian: &DMatrix<Complex64>,
    pairs: &[BlochEigenpair],
    n: usize,
    rhs: &Coeffs,
) -> Result<Coeffs> {
    band_index_check(pairs, n)?;
    let z = &pairs[n - 1].coeffs;
    let energy = pairs[n - 1].energy;
    let mut projected = rhs.clone();
    projected.axpy(-inner(rhs, z), z, Complex64::new(1.0, 0.0));
    let dim = z.len();
    let shifted = DMatrix::from_fn(dim, dim, |i, j| {
        let mut v = hamiltonian[(i, j)] + z[i] * z[j].conj();
        if i == j {
            v -= energy;
        }
        v
    });
    let (gap, other) = local_gap(pairs, n);
    let singular = || Error::GapViolation {
        k: pairs[n - 1].k,
        band: n,
        other,
        gap,
        gap_min: DEFAULT_GAP_MIN,
    };
    if gap < DEFAULT_GAP_MIN {
        return Err(singular());
    }
    let mut u = shifted.lu().solve(&projected).ok_or_else(singular)?;
    let along = inner(&u, z);
    u.axpy(-along, z, Complex64::new(1.0, 0.0));
    Ok(u)
}

/// Lattice cell with plane-wave discretization and the numerical knobs of
/// the band services.
#[derive(Debug, Clone)]
pub struct CellProblem {
    potential: PeriodicPotential,
    basis: PlaneWaveBasis,
    pub gap_min: f64,
    pub fd_step: f64,
    pub taylor_radius: f64,
    gauge_rule: GaugeRule,
    gauge_range: f64,
    continuation: Vec<OnceLock<std::result::Result<GaugeTable, String>>>,
}

/// How the phase of band eigenvectors is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeRule {
    /// Largest-modulus coefficient real positive at every `k`.
    Dominant,
    /// Dominant rule on the stretch of `k` containing `0`; across each
    /// change of the dominant coefficient the phase is carried over so the
    /// family stays continuous.
    Continued,
}

/// Default half-width of the quasimomentum range covered by the continued
/// gauge.
pub const DEFAULT_GAUGE_RANGE: f64 = 2.5;

const GAUGE_SCAN_STEP: f64 = 5e-3;
const GAUGE_SEGMENT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
struct GaugeTable {
    segments: Vec<GaugeSegment>,
    stop_lo: Option<String>,
    stop_hi: Option<String>,
}

/// Interval of `k` on which one coefficient stays dominant, with the phase
/// that continues the family from `k = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GaugeSegment {
    lo: f64,
    hi: f64,
    dominant: usize,
    phase: Complex64,
}

impl CellProblem {
    pub fn new(potential: PeriodicPotential, basis: PlaneWaveBasis) -> Result<Self> {
        if basis.cutoff() < potential.cutoff() + 2 {
            return Err(Error::Config(format!(
                "plane-wave cutoff {} must be at least potential cutoff {} + 2",
                basis.cutoff(),
                potential.cutoff()
            )));
        }
        let dim = basis.dim();
        Ok(CellProblem {
            potential,
            basis,
            gap_min: DEFAULT_GAP_MIN,
            fd_step: DEFAULT_FD_STEP,
            taylor_radius: DEFAULT_TAYLOR_RADIUS,
            gauge_rule: GaugeRule::Continued,
            gauge_range: DEFAULT_GAUGE_RANGE,
            continuation: (0..dim).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Selects the gauge rule; `range` bounds `|k|` for the continued rule.
    pub fn with_gauge(mut self, rule: GaugeRule, range: f64) -> Self {
        self.gauge_rule = rule;
        self.gauge_range = range;
        self.continuation = (0..self.basis.dim()).map(|_| OnceLock::new()).collect();
        self
    }

    pub fn gauge_rule(&self) -> GaugeRule {
        self.gauge_rule
    }

    fn dominant_pair(&self, k: f64, n: usize) -> Result<BlochEigenpair> {
        let pairs = solve_bands(k, &self.potential, &self.basis, n)?;
        fix_gauge(pairs[n - 1].clone())
    }

    /// Follows band `n` from `k = 0` towards `dir · gauge_range`, splitting
    /// at every change of the dominant coefficient.
    ///
    /// Tracing stops early, with the reason, where the two dominant-rule
    /// vectors at a swap are not parallel (a crossing or near-degeneracy).
    fn trace_gauge(&self, n: usize, dir: f64) -> Result<(Vec<GaugeSegment>, Option<String>)> {
        let end = dir * self.gauge_range;
        let mut cur = self.dominant_pair(0.0, n)?;
        let mut dominant = dominant_index(&cur.coeffs);
        let mut phase = Complex64::new(1.0, 0.0);
        let mut seg_start = 0.0;
        let mut k = 0.0;
        let mut segments = Vec::new();
        let segment = |a: f64, b: f64, dominant, phase| GaugeSegment {
            lo: a.min(b),
            hi: a.max(b),
            dominant,
            phase,
        };
        while dir * k < self.gauge_range {
            let k_next = if dir * (k + dir * GAUGE_SCAN_STEP) > self.gauge_range {
                end
            } else {
                k + dir * GAUGE_SCAN_STEP
            };
            let next = self.dominant_pair(k_next, n)?;
            if dominant_index(&next.coeffs) == dominant {
                k = k_next;
                cur = next;
                continue;
            }
            let (mut a, mut za) = (k, cur);
            let (mut b, mut zb) = (k_next, next);
            while (b - a).abs() > 1e-12 {
                let mid = 0.5 * (a + b);
                if mid == a || mid == b {
                    break;
                }
                let zm = self.dominant_pair(mid, n)?;
                if dominant_index(&zm.coeffs) == dominant {
                    (a, za) = (mid, zm);
                } else {
                    (b, zb) = (mid, zm);
                }
            }
            let overlap = inner(&za.coeffs, &zb.coeffs);
            if overlap.norm() < 0.99 {
                segments.push(segment(seg_start, a, dominant, phase));
                let reason = format!(
                    "band {n} cannot be continued past k = {b} (overlap {:.4} across a change of dominant coefficient)",
                    overlap.norm()
                );
                return Ok((segments, Some(reason)));
            }
            segments.push(segment(seg_start, a, dominant, phase));
            phase *= overlap / overlap.norm();
            dominant = dominant_index(&zb.coeffs);
            seg_start = b;
            k = b;
            cur = zb;
        }
        segments.push(segment(seg_start, end, dominant, phase));
        Ok((segments, None))
    }

    fn build_gauge_segments(&self, n: usize) -> Result<GaugeTable> {
        let (mut segments, stop_lo) = self.trace_gauge(n, -1.0)?;
        let (right, stop_hi) = self.trace_gauge(n, 1.0)?;
        segments.reverse();
        // Both traces start on the segment through k = 0.
        let joined = segments.last_mut().expect("trace yields a segment");
        joined.hi = right[0].hi;
        segments.extend_from_slice(&right[1..]);
        Ok(GaugeTable {
            segments,
            stop_lo,
            stop_hi,
        })
    }

    fn gauge_table(&self, n: usize) -> Result<&GaugeTable> {
        self.continuation[n - 1]
            .get_or_init(|| self.build_gauge_segments(n).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Invariant(format!("gauge continuation of band {n}: {e}")))
    }

    /// Phase multiplying the dominant-rule eigenvector of band `n` at `k`.
    fn gauge_phase(&self, k: f64, n: usize, dominant: usize) -> Result<Complex64> {
        if self.gauge_rule == GaugeRule::Dominant {
            return Ok(Complex64::new(1.0, 0.0));
        }
        if k.abs() > self.gauge_range {
            return Err(Error::Config(format!(
                "k = {k} lies outside the continued gauge range ±{}",
                self.gauge_range
            )));
        }
        let table = self.gauge_table(n)?;
        let (lo, hi) = (table.segments[0].lo, table.segments[table.segments.len() - 1].hi);
        if k < lo - GAUGE_SEGMENT_SLACK || k > hi + GAUGE_SEGMENT_SLACK {
            let reason = if k < lo { &table.stop_lo } else { &table.stop_hi };
            return Err(Error::Invariant(format!(
                "continued gauge unavailable at k = {k}: {}",
                reason.as_deref().unwrap_or("outside the traced range")
            )));
        }
        table
            .segments
            .iter()
            .find(|s| {
                s.dominant == dominant
                    && s.lo - GAUGE_SEGMENT_SLACK <= k
                    && k <= s.hi + GAUGE_SEGMENT_SLACK
            })
            .map(|s| s.phase)
            .ok_or_else(|| {
                Error::Invariant(format!(
                    "no gauge segment of band {n} with dominant mode index {dominant} covers k = {k}"
                ))
            })
    }

    /// Applies the gauge rule to a dominant-rule pair.
    fn continue_gauge(&self, mut pair: BlochEigenpair) -> Result<BlochEigenpair> {
        let phase = self.gauge_phase(pair.k, pair.band, dominant_index(&pair.coeffs))?;
        if phase != Complex64::new(1.0, 0.0) {
            pair.coeffs *= phase;
        }
        Ok(pair)
    }

    pub fn potential(&self) -> &PeriodicPotential {
        &self.potential
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn hamiltonian(&self, k: f64) -> Result<DMatrix<Complex64>> {
        assemble_hamiltonian(k, &self.potential, &self.basis)
    }

    /// All `D` eigenpairs at `k`, raw gauge.
    pub fn all_bands(&self, k: f64) -> Result<Vec<BlochEigenpair>> {
        solve_bands(k, &self.potential, &self.basis, self.basis.dim())
    }

    /// Energy of band `n` without any derivative work.
    pub fn energy(&self, k: f64, n: usize) -> Result<f64> {
        let pairs = self.all_bands(k)?;
        band_index_check(&pairs, n)?;
        Ok(pairs[n - 1].energy)
    }

    /// Gauge-fixed eigenpair of band `n` under the selected rule.
    pub fn fixed_pair(&self, k: f64, n: usize) -> Result<BlochEigenpair> {
        self.continue_gauge(fixed_pair(&self.potential, &self.basis, k, n, self.gap_min)?)
    }

    /// `∂ₖ²z_n` by a centered second difference under the selected rule.
    pub fn dk2z(&self, k: f64, n: usize) -> Result<Coeffs> {
        let h = self.fd_step;
        let centre = self.fixed_pair(k, n)?;
        let plus = self.fixed_pair(k + h, n)?;
        let minus = self.fixed_pair(k - h, n)?;
        second_difference(&centre, &plus, &minus, h)
    }

    fn local_from_pairs(
        &self,
        pairs: &[BlochEigenpair],
        n: usize,
        with_curvature: bool,
    ) -> Result<BandLocalData> {
        band_index_check(pairs, n)?;
        let gap = check_gap(pairs, n, self.gap_min)?;
        let pair = fix_gauge(pairs[n - 1].clone())?;
        let mut dkz = band_dkz(pairs, n, self.gap_min)?;
        let phase = self.gauge_phase(pair.k, n, dominant_index(&pair.coeffs))?;
        let mut pair = pair;
        if phase != Complex64::new(1.0, 0.0) {
            pair.coeffs *= phase;
            dkz *= phase;
        }
        let e1 = band_e1(&pair);
        let e2 = band_e2(&pair, e1, &dkz)?;
        let berry = inner(&dkz, &pair.coeffs);
        if berry.re.abs() > 1e-8 {
            return Err(Error::Consistency(format!(
                "Re⟨∂ₖz, z⟩ = {:.3e} at k = {} for band {n}",
                berry.re, pair.k
            )));
        }
        let dk2z = if with_curvature {
            Some(self.dk2z(pair.k, n)?)
        } else {
            None
        };
        Ok(BandLocalData {
            pair,
            e1,
            e2,
            dkz,
            dk2z,
            berry,
            gap,
        })
    }
}

impl BandStructure for CellProblem {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn eigenpairs(&self, k: f64) -> Result<Vec<BlochEigenpair>> {
        self.all_bands(k)?.into_iter().map(fix_gauge).collect()
    }

    fn band_vector(&self, k: f64, band: usize) -> Result<Coeffs> {
        Ok(self.fixed_pair(k, band)?.coeffs)
    }

    fn ray_data(&self, k: f64, band: usize) -> Result<RayBandData> {
        let pairs = self.all_bands(k)?;
        Ok(RayBandData::from(&self.local_from_pairs(&pairs, band, false)?))
    }

    fn local_data(&self, k: f64, band: usize, with_curvature: bool) -> Result<BandLocalData> {
        let pairs = self.all_bands(k)?;
        self.local_from_pairs(&pairs, band, with_curvature)
    }

    fn reduced_resolvent(&self, k: f64, band: usize, rhs: &Coeffs) -> Result<Coeffs> {
        let h = self.hamiltonian(k)?;
        let pairs = self.all_bands(k)?;
        check_gap(&pairs, band, self.gap_min)?;
        reduced_resolvent_solve(&h, &pairs, band, rhs)
    }

    fn energy_third_derivative(&self, k: f64, band: usize) -> Result<f64> {
        let h = self.fd_step;
        let plus = self.ray_data(k + h, band)?.e2;
        let minus = self.ray_data(k - h, band)?.e2;
        Ok((plus - minus) / (2.0 * h))
    }

    fn taylor_radius(&self) -> f64 {
        self.taylor_radius
    }
}
