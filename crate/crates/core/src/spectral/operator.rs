use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::basis::Basis;
use super::state::StateVector;
use crate::error::{Error, Result};

/// Diagonal sectorial operator `A = diag(λ_k)` acting through its shifted
/// symbol `μ_k = λ_k + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<Complex64>,
    shifted: Vec<Complex64>,
    shift: f64,
    angle: f64,
    delta: f64,
    basis: Basis,
}

/// `μ^α` on the principal branch, exact on the positive axis.
pub(crate) fn cpow(mu: Complex64, alpha: f64) -> Complex64 {
    if alpha == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    if mu.im == 0.0 {
        return Complex64::new(mu.re.powf(alpha), 0.0);
    }
    mu.powf(alpha)
}

impl SpectralOperator {
    /// Validates sectoriality and stores `δ = min Re μ_k` and `σ = max |arg μ_k|`.
    ///
    /// Abstract spectra are sorted by real part; structured bases must already
    /// be in mode order, which is ascending.
    pub fn new(eigenvalues: Vec<Complex64>, shift: f64, basis: Basis) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if !(shift.is_finite() && shift >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "shift",
                value: shift,
            });
        }
        basis.validate()?;
        let mut eigenvalues = eigenvalues;
        match basis {
            Basis::Abstract => eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re)),
            _ => {
                if let Some(i) = eigenvalues.windows(2).position(|w| w[1].re < w[0].re) {
                    return Err(Error::UnsortedSpectrum { index: i + 1 });
                }
            }
        }
        let mut delta = f64::INFINITY;
        let mut angle: f64 = 0.0;
        let mut shifted = Vec::with_capacity(eigenvalues.len());
        for (index, &lambda) in eigenvalues.iter().enumerate() {
            let mu = lambda + shift;
            let arg = mu.arg().abs();
            if !(mu.re > 0.0) || !mu.im.is_finite() || arg >= FRAC_PI_2 {
                return Err(Error::SectorialityViolation { index, value: mu });
            }
            delta = delta.min(mu.re);
            angle = angle.max(arg);
            shifted.push(mu);
        }
        Ok(Self {
            eigenvalues,
            shifted,
            shift,
            angle,
            delta,
            basis,
        })
    }

    pub fn from_real(eigenvalues: &[f64], shift: f64, basis: Basis) -> Result<Self> {
        Self::new(
            eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect(),
            shift,
            basis,
        )
    }

    /// `(-Δ)^m + w` truncated to `modes` eigenfunctions of a structured basis.
    pub fn laplacian(basis: Basis, modes: usize, shift: f64) -> Result<Self> {
        let eig = basis.eigenvalues(modes)?;
        Self::from_real(&eig, shift, basis)
    }

    /// Same basis and shift, new eigenvalues.
    pub fn with_eigenvalues(&self, eigenvalues: Vec<Complex64>) -> Result<Self> {
        Self::new(eigenvalues, self.shift, self.basis.clone())
    }

    /// `cA`: both eigenvalues and shift scale by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter {
                name: "scale",
                value: c,
            });
        }
        Self::new(
            self.eigenvalues.iter().map(|l| l * c).collect(),
            self.shift * c,
            self.basis.clone(),
        )
    }

    pub fn len(&self) -> usize {
        self.shifted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifted.is_empty()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn shifted(&self) -> &[Complex64] {
        &self.shifted
    }

    pub fn mu(&self, k: usize) -> Complex64 {
        self.shifted[k]
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn max_re(&self) -> f64 {
        self.shifted.iter().map(|m| m.re).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.shifted.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.shifted.iter().all(|m| m.im == 0.0)
    }

    pub fn check_self_adjoint(&self) -> Result<()> {
        match self.shifted.iter().position(|m| m.im != 0.0) {
            Some(index) => Err(Error::NotSelfAdjoint { index }),
            None => Ok(()),
        }
    }

    /// Per-mode factors `e^{-t μ_k}`.
    pub fn semigroup_factors(&self, t: f64) -> Result<Vec<Complex64>> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.shifted.iter().map(|&m| (-m * t).exp()).collect())
    }

    pub fn semigroup_apply(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        x.check_len(self.len())?;
        let factors = self.semigroup_factors(t)?;
        Ok(StateVector::from_vec_unchecked(
            x.coeffs().iter().zip(&factors).map(|(c, f)| c * f).collect(),
        ))
    }

    pub fn frac_power_apply(&self, alpha: f64, x: &StateVector) -> Result<StateVector> {
        if !(-1.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
            });
        }
        x.check_len(self.len())?;
        Ok(StateVector::from_vec_unchecked(
            x.coeffs()
                .iter()
                .zip(&self.shifted)
                .map(|(c, &m)| c * cpow(m, alpha))
                .collect(),
        ))
    }

    /// `‖A^α x‖` for any real `α`.
    pub fn norm_alpha(&self, alpha: f64, x: &StateVector) -> f64 {
        debug_assert_eq!(x.len(), self.len());
        if alpha == 0.0 {
            return x.norm();
        }
        x.coeffs()
            .iter()
            .zip(&self.shifted)
            .map(|(c, &m)| c.norm_sqr() * m.norm().powf(2.0 * alpha))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_x1(&self, x: &StateVector) -> f64 {
        self.norm_alpha(1.0, x)
    }

    /// `sup |z| / |z − μ_k|` over `|arg z| ≥ σ'` sampled on a log grid of radii.
    pub fn sector_resolvent_sup(&self, sigma_prime: f64, radii: usize, angles: usize) -> Result<f64> {
        if !(sigma_prime > self.angle && sigma_prime < std::f64::consts::PI) {
            return Err(Error::InvalidParameter {
                name: "sigma_prime",
                value: sigma_prime,
            });
        }
        let lo = (self.delta * 1e-3).ln();
        let hi = (self.max_re() * 1e3).ln();
        let mut sup: f64 = 0.0;
        for i in 0..radii {
            let r = (lo + (hi - lo) * i as f64 / (radii - 1).max(1) as f64).exp();
            for j in 0..angles {
                let phi = sigma_prime
                    + (std::f64::consts::PI - sigma_prime) * j as f64 / (angles - 1).max(1) as f64;
                for sign in [1.0, -1.0] {
                    let z = Complex64::from_polar(r, sign * phi);
                    for &m in &self.shifted {
                        sup = sup.max(z.norm() / (z - m).norm());
                    }
                }
            }
        }
        Ok(sup)
    }

    /// Exact per-mode supremum of `|z| / |z − μ|` over `|arg z| ≥ σ'`.
    pub fn sector_resolvent_analytic(&self, sigma_prime: f64) -> f64 {
        self.shifted
            .iter()
            .map(|m| {
                let gap = sigma_prime - m.arg().abs();
                if gap >= FRAC_PI_2 {
                    1.0
                } else {
                    1.0 / gap.sin()
                }
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dirichlet_laplacian_is_valid() {
        let a = SpectralOperator::from_real(&[1.0, 4.0, 9.0], 0.0, Basis::SineInterval { order: 2 }).unwrap();
        assert_eq!(a.delta(), 1.0);
        assert_eq!(a.angle(), 0.0);
        assert_eq!(a, SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 3, 0.0).unwrap());
    }

    #[test]
    fn nonpositive_spectrum_rejected() {
        let err = SpectralOperator::from_real(&[-1.0], 0.0, Basis::Abstract).unwrap_err();
        assert!(matches!(err, Error::SectorialityViolation { index: 0, .. }));
        let err = SpectralOperator::new(vec![c(0.0, 1.0)], 0.0, Basis::Abstract).unwrap_err();
        assert!(matches!(err, Error::SectorialityViolation { .. }));
        assert!(matches!(
            SpectralOperator::new(vec![], 0.0, Basis::Abstract),
            Err(Error::EmptySpectrum)
        ));
    }

    #[test]
    fn complex_mode_angle() {
        let a = SpectralOperator::new(vec![c(1.0, 1.0)], 0.0, Basis::Abstract).unwrap();
        assert_relative_eq!(a.angle(), FRAC_PI_4, max_relative = 1e-15);
    }

    #[test]
    fn structured_spectrum_must_be_sorted() {
        let err = SpectralOperator::from_real(&[4.0, 1.0], 0.0, Basis::SineInterval { order: 2 }).unwrap_err();
        assert!(matches!(err, Error::UnsortedSpectrum { index: 1 }));
        let a = SpectralOperator::from_real(&[4.0, 1.0], 0.0, Basis::Abstract).unwrap();
        assert_eq!(a.shifted()[0].re, 1.0);
    }

    #[test]
    fn semigroup_scalar_and_identity() {
        let a = SpectralOperator::from_real(&[1.0], 0.0, Basis::Abstract).unwrap();
        let x = StateVector::from_real(&[1.0]);
        assert_eq!(a.semigroup_apply(0.0, &x).unwrap(), x);
        assert_relative_eq!(a.semigroup_apply(1.0, &x).unwrap().coeffs()[0].re, (-1.0f64).exp());
        assert!(matches!(a.semigroup_apply(-1.0, &x), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn fractional_powers() {
        let a = SpectralOperator::from_real(&[4.0], 0.0, Basis::Abstract).unwrap();
        let x = StateVector::from_real(&[1.0]);
        assert_eq!(a.frac_power_apply(0.5, &x).unwrap().coeffs()[0].re, 2.0);
        assert_eq!(a.frac_power_apply(0.0, &x).unwrap(), x);
        assert!(a.frac_power_apply(1.5, &x).is_err());

        let b = SpectralOperator::new(vec![c(2.0, 1.0), c(3.0, -0.5), c(7.0, 0.0)], 0.5, Basis::Abstract).unwrap();
        let y = StateVector::new(vec![c(1.0, 2.0), c(-0.3, 0.1), c(0.7, 0.0)]).unwrap();
        let twice = b.frac_power_apply(0.5, &b.frac_power_apply(0.5, &y).unwrap()).unwrap();
        let once = b.frac_power_apply(1.0, &y).unwrap();
        for (p, q) in twice.coeffs().iter().zip(once.coeffs()) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn scaled_operator_multiplies_symbol() {
        let a = SpectralOperator::from_real(&[1.0, 2.0], 0.5, Basis::Abstract).unwrap();
        let b = a.scaled(3.0).unwrap();
        assert_eq!(b.shifted()[1].re, 7.5);
    }

    #[test]
    fn sector_resolvent_matches_analytic() {
        let a = SpectralOperator::new(vec![c(1.0, 0.0), c(3.0, 2.0), c(10.0, -4.0)], 0.0, Basis::Abstract).unwrap();
        let sp = a.angle() + 0.3;
        let grid = a.sector_resolvent_sup(sp, 2001, 3).unwrap();
        let exact = a.sector_resolvent_analytic(sp);
        assert!(grid.is_finite());
        assert!(grid <= exact * (1.0 + 1e-12));
        assert!(grid >= exact * 0.999);
    }
}
