use crate::error::{Error, Result};

/// Initial phase `S0(x)` with closed-form derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseProfile {
    /// `c · x`
    Linear { c: f64 },
    /// `α · x²`
    Quadratic { alpha: f64 },
    /// `β · exp(−x² / (2σ²))`
    GaussianPhase { beta: f64, sigma: f64 },
}

impl PhaseProfile {
    /// `[S0, S0', S0'', S0''']` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        match *self {
            PhaseProfile::Linear { c } => [c * x, c, 0.0, 0.0],
            PhaseProfile::Quadratic { alpha } => [alpha * x * x, 2.0 * alpha * x, 2.0 * alpha, 0.0],
            PhaseProfile::GaussianPhase { beta, sigma } => {
                let s2 = sigma * sigma;
                let g = beta * (-0.5 * x * x / s2).exp();
                [
                    g,
                    -g * x / s2,
                    g * (x * x / (s2 * s2) - 1.0 / s2),
                    g * (3.0 * x / (s2 * s2) - x.powi(3) / (s2 * s2 * s2)),
                ]
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.derivatives(x)[1]
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.derivatives(x)[2]
    }
}

/// Band envelope `a_n(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// `A · exp(−(x − x_c)² / (2σ²))`
    Gaussian { amplitude: f64, sigma: f64, center: f64 },
    /// `A · cos(π (x − x_c) / (2w))` on `|x − x_c| < w`, zero elsewhere.
    ///
    /// Continuous with a kink at the support edges, so it lies in `H¹`
    /// but not in `H²`.
    CosineBump { amplitude: f64, width: f64, center: f64 },
}

const NEGLIGIBLE: f64 = 1e-12;

impl Envelope {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Envelope::Gaussian {
                amplitude,
                sigma,
                center,
            } => {
                let u = (x - center) / sigma;
                amplitude * (-0.5 * u * u).exp()
            }
            Envelope::CosineBump {
                amplitude,
                width,
                center,
            } => {
                let u = (x - center) / width;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    amplitude * (0.5 * std::f64::consts::PI * u).cos()
                }
            }
        }
    }

    /// `∫ |a(x)|² dx` in closed form.
    pub fn norm_squared(&self) -> f64 {
        match *self {
            Envelope::Gaussian {
                amplitude, sigma, ..
            } => amplitude * amplitude * sigma * std::f64::consts::PI.sqrt(),
            Envelope::CosineBump {
                amplitude, width, ..
            } => amplitude * amplitude * width,
        }
    }

    /// Interval outside which `|a| < 1e-12 · peak`.
    pub fn effective_support(&self) -> (f64, f64) {
        match *self {
            Envelope::Gaussian { sigma, center, .. } => {
                let half = sigma * (-2.0 * NEGLIGIBLE.ln()).sqrt();
                (center - half, center + half)
            }
            Envelope::CosineBump { width, center, .. } => (center - width, center + width),
        }
    }
}

/// Envelope attached to one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandEnvelope {
    pub band: usize,
    pub envelope: Envelope,
}

/// Two-scale initial data `Σ_n a_n(x) z_n(S0'(x), x/ε) e^{i S0(x)/ε}`
/// restricted to the launch interval `K0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataSpec {
    pub phase: PhaseProfile,
    pub envelopes: Vec<BandEnvelope>,
    pub k0: (f64, f64),
}

impl InitialDataSpec {
    pub fn new(phase: PhaseProfile, envelopes: Vec<BandEnvelope>, k0: (f64, f64)) -> Result<Self> {
        let spec = InitialDataSpec {
            phase,
            envelopes,
            k0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.k0;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("K0 = [{lo}, {hi}] is not a bounded interval")));
        }
        if self.envelopes.is_empty() {
            return Err(Error::Config("at least one band envelope is required".into()));
        }
        let mut seen = Vec::new();
        for be in &self.envelopes {
            if be.band == 0 {
                return Err(Error::Config("band indices start at 1".into()));
            }
            if seen.contains(&be.band) {
                return Err(Error::Config(format!("band {} has two envelopes", be.band)));
            }
            seen.push(be.band);
            let (s_lo, s_hi) = be.envelope.effective_support();
            if s_lo < lo - 1e-12 || s_hi > hi + 1e-12 {
                return Err(Error::Config(format!(
                    "envelope of band {} is not negligible outside K0 = [{lo}, {hi}] (support [{s_lo:.4}, {s_hi:.4}])",
                    be.band
                )));
            }
        }
        Ok(())
    }

    pub fn bands(&self) -> Vec<usize> {
        self.envelopes.iter().map(|e| e.band).collect()
    }

    pub fn envelope(&self, band: usize) -> Option<&Envelope> {
        self.envelopes
            .iter()
            .find(|e| e.band == band)
            .map(|e| &e.envelope)
    }

    /// `a_n(x)` (zero for bands without an envelope).
    pub fn amplitude(&self, band: usize, x: f64) -> f64 {
        self.envelope(band).map_or(0.0, |e| e.value(x))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.k0.0 <= x && x <= self.k0.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_derivatives_match_finite_differences() {
        let h = 1e-4;
        for phase in [
            PhaseProfile::Linear { c: 0.1 },
            PhaseProfile::Quadratic { alpha: -0.25 },
            PhaseProfile::GaussianPhase {
                beta: 0.3,
                sigma: 0.5,
            },
        ] {
            for x in [-0.7, 0.0, 0.2, 1.1] {
                let d = phase.derivatives(x);
                for order in 0..3 {
                    let fd = (phase.derivatives(x + h)[order] - phase.derivatives(x - h)[order]) / (2.0 * h);
                    assert!((fd - d[order + 1]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn envelope_norms_match_quadrature() {
        for env in [
            Envelope::Gaussian {
                amplitude: 1.3,
                sigma: 0.2,
                center: 0.1,
            },
            Envelope::CosineBump {
                amplitude: 0.8,
                width: 0.5,
                center: -0.2,
            },
        ] {
            let (lo, hi) = env.effective_support();
            let n = 200_000;
            let dx = (hi - lo) / n as f64;
            let q: f64 = (0..n).map(|i| env.value(lo + (i as f64 + 0.5) * dx).powi(2) * dx).sum();
            assert!((q - env.norm_squared()).abs() < 1e-8, "{env:?}");
        }
    }

    #[test]
    fn support_must_fit_in_k0() {
        let env = BandEnvelope {
            band: 1,
            envelope: Envelope::Gaussian {
                amplitude: 1.0,
                sigma: 0.2,
                center: 0.0,
            },
        };
        let phase = PhaseProfile::Linear { c: 0.0 };
        assert!(InitialDataSpec::new(phase, vec![env], (-1.0, 1.0)).is_err());
        assert!(InitialDataSpec::new(phase, vec![env], (-1.6, 1.6)).is_ok());
        assert!(InitialDataSpec::new(phase, vec![env, env], (-1.6, 1.6)).is_err());
    }
}
