/// Smooth external potential `V_e(x)` from a closed-form catalog.
///
/// Each form supplies exact derivatives up to third order; the beam ODEs
/// need `V_e'` and `V_e''`, the Hamilton–Jacobi residual diagnostic also
/// uses `V_e'''`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExternalPotential {
    Zero,
    /// `½ ω² x²`. Unbounded at infinity; only meaningful on bounded studies.
    Harmonic { omega: f64 },
    /// `−depth · exp(−(x − center)² / (2 width²))`.
    GaussianWell { depth: f64, width: f64, center: f64 },
    /// `amplitude · cos(wavenumber · x)`.
    Cosine { amplitude: f64, wavenumber: f64 },
}

impl ExternalPotential {
    pub fn value(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.derivatives(x)[1]
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.derivatives(x)[2]
    }

    pub fn d3(&self, x: f64) -> f64 {
        self.derivatives(x)[3]
    }

    /// `[V_e, V_e', V_e'', V_e''']` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        match *self {
            ExternalPotential::Zero => [0.0; 4],
            ExternalPotential::Harmonic { omega } => {
                let w2 = omega * omega;
                [0.5 * w2 * x * x, w2 * x, w2, 0.0]
            }
            ExternalPotential::GaussianWell {
                depth,
                width,
                center,
            } => {
                let u = x - center;
                let w2 = width * width;
                let g = depth * (-0.5 * u * u / w2).exp();
                [
                    -g,
                    g * u / w2,
                    g * (1.0 / w2 - u * u / (w2 * w2)),
                    g * (-3.0 * u / (w2 * w2) + u.powi(3) / (w2 * w2 * w2)),
                ]
            }
            ExternalPotential::Cosine {
                amplitude,
                wavenumber,
            } => {
                let (s, c) = (wavenumber * x).sin_cos();
                let q = wavenumber;
                [
                    amplitude * c,
                    -amplitude * q * s,
                    -amplitude * q * q * c,
                    amplitude * q * q * q * s,
                ]
            }
        }
    }

    /// False for forms that grow without bound at infinity.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, ExternalPotential::Harmonic { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(v: ExternalPotential) {
        let h = 1e-4;
        for x in [-1.3, -0.2, 0.0, 0.45, 1.7] {
            let d = v.derivatives(x);
            for order in 0..3 {
                let fd = (v.derivatives(x + h)[order] - v.derivatives(x - h)[order]) / (2.0 * h);
                assert!((fd - d[order + 1]).abs() < 1e-6, "{v:?} order {} at {x}", order + 1);
            }
        }
    }

    #[test]
    fn closed_form_derivatives_match_finite_differences() {
        check_derivatives(ExternalPotential::Harmonic { omega: 1.3 });
        check_derivatives(ExternalPotential::GaussianWell {
            depth: 0.7,
            width: 0.4,
            center: 0.2,
        });
        check_derivatives(ExternalPotential::Cosine {
            amplitude: 0.3,
            wavenumber: 2.0,
        });
        assert_eq!(ExternalPotential::Zero.derivatives(0.3), [0.0; 4]);
    }

    #[test]
    fn harmonic_is_flagged_unbounded() {
        assert!(!ExternalPotential::Harmonic { omega: 1.0 }.is_bounded());
        assert!(ExternalPotential::Zero.is_bounded());
    }
}
