use num_complex::Complex64;

use crate::error::{Error, Result};

/// Lattice potential `V(y) = Σ_{|m|≤M_V} v_m e^{imy}` on the cell `[0, 2π]`.
///
/// Only `v_0, …, v_{M_V}` are stored; negative modes are the conjugates so
/// `V` is real by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    coeffs: Vec<Complex64>,
}

impl PeriodicPotential {
    /// Builds from `v_0, v_1, …, v_M`. `v_0` must be real.
    pub fn from_nonnegative(coeffs: Vec<Complex64>) -> Result<Self> {
        let coeffs = if coeffs.is_empty() {
            vec![Complex64::new(0.0, 0.0)]
        } else {
            coeffs
        };
        let v0 = coeffs[0];
        if v0.im.abs() > 1e-14 * (1.0 + v0.re.abs()) {
            return Err(Error::Invariant(format!(
                "v_0 = {v0} must be real for a real-valued potential"
            )));
        }
        let mut coeffs = coeffs;
        coeffs[0] = Complex64::new(v0.re, 0.0);
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == Complex64::new(0.0, 0.0) {
            coeffs.pop();
        }
        Ok(PeriodicPotential { coeffs })
    }

    /// Builds from the full two-sided list `v_{-M}, …, v_M`, checking
    /// `v_{-m} = conj(v_m)`.
    pub fn from_two_sided(coeffs: &[Complex64]) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::Invariant(
                "two-sided coefficient list must have odd length".into(),
            ));
        }
        let cutoff = coeffs.len() / 2;
        for m in 0..=cutoff {
            let (neg, pos) = (coeffs[cutoff - m], coeffs[cutoff + m]);
            if (neg - pos.conj()).norm() > 1e-14 * (1.0 + pos.norm()) {
                return Err(Error::Invariant(format!(
                    "v_-{m} = {neg} is not the conjugate of v_{m} = {pos}"
                )));
            }
        }
        Self::from_nonnegative(coeffs[cutoff..].to_vec())
    }

    pub fn zero() -> Self {
        PeriodicPotential {
            coeffs: vec![Complex64::new(0.0, 0.0)],
        }
    }

    /// `amplitude · cos(y)`, i.e. `v_{±1} = amplitude / 2`.
    pub fn cosine(amplitude: f64) -> Self {
        Self::from_nonnegative(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5 * amplitude, 0.0),
        ])
        .expect("real v_0")
    }

    /// Highest retained mode `M_V`.
    pub fn cutoff(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, m: i64) -> Complex64 {
        let idx = m.unsigned_abs() as usize;
        match self.coeffs.get(idx) {
            None => Complex64::new(0.0, 0.0),
            Some(v) if m >= 0 => *v,
            Some(v) => v.conj(),
        }
    }

    pub fn nonnegative_coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(m, v)| 2.0 * (v * Complex64::from_polar(1.0, m as f64 * y)).re)
            .sum::<f64>()
            + self.coeffs[0].re
    }
}

/// Plane waves `e^{imy}/√(2π)` for `|m| ≤ M_pw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaneWaveBasis {
    cutoff: usize,
}

impl PlaneWaveBasis {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::Config("plane-wave cutoff must be positive".into()));
        }
        Ok(PlaneWaveBasis { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `D = 2·M_pw + 1`.
    pub fn dim(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Mode number of coefficient slot `i`.
    pub fn mode(&self, i: usize) -> i64 {
        i as i64 - self.cutoff as i64
    }

    /// Coefficient slot of mode `m`, if retained.
    pub fn index(&self, m: i64) -> Option<usize> {
        let i = m + self.cutoff as i64;
        (0..self.dim() as i64).contains(&i).then_some(i as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_potential_evaluates_real() {
        let v = PeriodicPotential::cosine(1.0);
        for y in [0.0, 0.3, 1.0, 3.0, 6.0] {
            assert!((v.eval(y) - y.cos()).abs() < 1e-14);
        }
        assert_eq!(v.coeff(-1), Complex64::new(0.5, 0.0));
        assert_eq!(v.coeff(2), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn two_sided_rejects_non_hermitian_coefficients() {
        let c = |re, im| Complex64::new(re, im);
        assert!(PeriodicPotential::from_two_sided(&[c(0.1, 0.2), c(0.0, 0.0), c(0.1, 0.2)]).is_err());
        let v = PeriodicPotential::from_two_sided(&[c(0.1, -0.2), c(0.3, 0.0), c(0.1, 0.2)]).unwrap();
        assert_eq!(v.cutoff(), 1);
        let y: f64 = 0.7;
        let direct = 0.3 + 2.0 * (0.1 * y.cos() - 0.2 * y.sin());
        assert!((v.eval(y) - direct).abs() < 1e-14);
    }

    #[test]
    fn complex_v0_is_rejected() {
        let err = PeriodicPotential::from_nonnegative(vec![Complex64::new(1.0, 0.1)]);
        assert!(matches!(err, Err(Error::Invariant(_))));
    }

    #[test]
    fn basis_indexing() {
        let b = PlaneWaveBasis::new(2).unwrap();
        assert_eq!(b.dim(), 5);
        assert_eq!(b.mode(0), -2);
        assert_eq!(b.index(2), Some(4));
        assert_eq!(b.index(3), None);
        assert!(PlaneWaveBasis::new(0).is_err());
    }
}
