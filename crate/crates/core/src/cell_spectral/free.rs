use num_complex::Complex64;

use super::{
    BandLocalData, BandStructure, BlochEigenpair, Coeffs, Gauge, RayBandData,
    DEFAULT_TAYLOR_RADIUS,
};
use crate::error::{Error, Result};

/// Free particle without a lattice: a single unfolded band `E(k) = k²/2`
/// carried by the constant cell function.
///
/// Useful as a closed-form test bed for the ray, Riccati and amplitude
/// equations (`E'' ≡ 1`, `∂ₖz ≡ 0`). Only band 1 exists; other plane-wave
/// modes are exposed through [`BandStructure::eigenpairs`] as a complement
/// basis so projections and resolvents stay well defined.
#[derive(Debug, Clone, Copy)]
pub struct FreeBand {
    cutoff: usize,
}

impl FreeBand {
    pub fn new(cutoff: usize) -> Self {
        FreeBand {
            cutoff: cutoff.max(1),
        }
    }

    fn unit(&self, m: i64) -> Coeffs {
        let mut c = Coeffs::zeros(2 * self.cutoff + 1);
        c[(m + self.cutoff as i64) as usize] = Complex64::new(1.0, 0.0);
        c
    }

    fn check_band(band: usize) -> Result<()> {
        if band != 1 {
            return Err(Error::Config(format!(
                "the free band model only has band 1, got {band}"
            )));
        }
        Ok(())
    }
}

impl BandStructure for FreeBand {
    fn dim(&self) -> usize {
        2 * self.cutoff + 1
    }

    fn eigenpairs(&self, k: f64) -> Result<Vec<BlochEigenpair>> {
        let c = self.cutoff as i64;
        let mut modes = vec![0];
        for m in 1..=c {
            modes.push(-m);
            modes.push(m);
        }
        Ok(modes
            .into_iter()
            .enumerate()
            .map(|(i, m)| BlochEigenpair {
                band: i + 1,
                k,
                energy: 0.5 * (m as f64 + k).powi(2),
                coeffs: self.unit(m),
                gauge: Gauge::Fixed,
            })
            .collect())
    }

    fn band_vector(&self, _k: f64, band: usize) -> Result<Coeffs> {
        Self::check_band(band)?;
        Ok(self.unit(0))
    }

    fn ray_data(&self, k: f64, band: usize) -> Result<RayBandData> {
        Self::check_band(band)?;
        Ok(RayBandData {
            energy: 0.5 * k * k,
            e1: k,
            e2: 1.0,
            berry: Complex64::new(0.0, 0.0),
            gap: f64::INFINITY,
        })
    }

    fn local_data(&self, k: f64, band: usize, with_curvature: bool) -> Result<BandLocalData> {
        Self::check_band(band)?;
        let zero = Coeffs::zeros(self.dim());
        Ok(BandLocalData {
            pair: BlochEigenpair {
                band: 1,
                k,
                energy: 0.5 * k * k,
                coeffs: self.unit(0),
                gauge: Gauge::Fixed,
            },
            e1: k,
            e2: 1.0,
            dkz: zero.clone(),
            dk2z: with_curvature.then_some(zero),
            berry: Complex64::new(0.0, 0.0),
            gap: f64::INFINITY,
        })
    }

    fn reduced_resolvent(&self, k: f64, band: usize, rhs: &Coeffs) -> Result<Coeffs> {
        Self::check_band(band)?;
        let c = self.cutoff as i64;
        let mut u = Coeffs::zeros(self.dim());
        for (i, value) in rhs.iter().enumerate() {
            let m = i as i64 - c;
            if m == 0 {
                continue;
            }
            let shift = 0.5 * ((m as f64 + k).powi(2) - k * k);
            if shift.abs() < super::DEFAULT_GAP_MIN {
                return Err(Error::GapViolation {
                    k,
                    band: 1,
                    other: i + 1,
                    gap: shift.abs(),
                    gap_min: super::DEFAULT_GAP_MIN,
                });
            }
            u[i] = value / shift;
        }
        Ok(u)
    }

    fn energy_third_derivative(&self, _k: f64, band: usize) -> Result<f64> {
        Self::check_band(band)?;
        Ok(0.0)
    }

    fn taylor_radius(&self) -> f64 {
        DEFAULT_TAYLOR_RADIUS
    }
}
