//! Real-interpolation norms through the semigroup orbit:
//!
//! ```text
//! ‖x‖_{θ,p} = ‖x‖ + ( ∫₀^∞ t^{(1−θ)p} ‖A S(t) x‖^p dt/t )^{1/p}
//! ```
//!
//! The integral is a trapezoid rule in `log t`. The node range is fixed per
//! operator: the lower end bounds the head integral relative to each mode,
//! the upper end bounds the exponential tail using `δ` for every input.

use statrs::function::gamma::gamma;

use super::operator::SpectralOperator;
use super::state::StateVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub nodes_per_decade: usize,
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            nodes_per_decade: 16,
            rel_tol: 1e-10,
            max_nodes: 4000,
        }
    }
}

impl Quadrature {
    pub fn refined(self) -> Self {
        Self {
            nodes_per_decade: 2 * self.nodes_per_decade,
            max_nodes: 2 * self.max_nodes,
            ..self
        }
    }
}

/// Precomputed orbit quadrature for one operator and one `(θ, p)`.
#[derive(Clone, Debug)]
pub struct TraceNorm {
    theta: f64,
    p: f64,
    /// `|μ_k|²`
    mod_sq: Vec<f64>,
    /// Row-major `nodes × modes` table of `e^{−2 Re μ_k t_i}`.
    decay: Vec<f64>,
    /// `h · t_i^{(1−θ)p}`
    weights: Vec<f64>,
    head_factor: f64,
    tail_factor: f64,
    closed_form: Option<Vec<f64>>,
    rel_tol: f64,
}

fn check_exponents(theta: f64, p: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            value: theta,
        });
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::InvalidParameter { name: "p", value: p });
    }
    Ok(())
}

impl TraceNorm {
    pub fn new(op: &SpectralOperator, theta: f64, p: f64, quad: Quadrature) -> Result<Self> {
        check_exponents(theta, p)?;
        let a = (1.0 - theta) * p;
        let modes = op.len();
        let mod_sq: Vec<f64> = op.shifted().iter().map(|m| m.norm_sqr()).collect();
        let re: Vec<f64> = op.shifted().iter().map(|m| m.re).collect();
        let tol = quad.rel_tol;
        let ga = gamma(a);

        let t_min = (tol * a * ga).powf(1.0 / a) / (p * op.max_abs());
        let h = std::f64::consts::LN_10 / quad.nodes_per_decade as f64;
        let delta = op.delta();
        let mode_factor = (modes as f64).powf(p / 2.0);
        // Worst relative tail over modes, valid for every input vector.
        let rel_tail = |t: f64| -> f64 {
            let rate = p * delta - (a - 1.0).max(0.0) / t;
            if rate <= 0.0 {
                return f64::INFINITY;
            }
            let worst = re
                .iter()
                .map(|&r| (-p * r * t).exp() * (p * r).powf(a))
                .fold(0.0, f64::max);
            mode_factor * worst * t.powf(a - 1.0) / (ga * rate)
        };

        let mut times = Vec::new();
        let mut s = t_min.ln();
        loop {
            let t = s.exp();
            times.push(t);
            if t > a / (p * delta) && rel_tail(t) <= tol {
                break;
            }
            if times.len() >= quad.max_nodes {
                return Err(Error::QuadratureNotConverged {
                    tail: rel_tail(t),
                    value: 1.0,
                });
            }
            s += h;
        }

        let mut decay = Vec::with_capacity(times.len() * modes);
        for &t in &times {
            decay.extend(re.iter().map(|&r| (-2.0 * r * t).exp()));
        }
        let mut weights: Vec<f64> = times.iter().map(|&t| h * t.powf(a)).collect();
        // Trapezoid end corrections.
        weights[0] *= 0.5;
        if let Some(w) = weights.last_mut() {
            *w *= 0.5;
        }
        let t_max = *times.last().unwrap_or(&t_min);
        let tail_rate = p * delta - (a - 1.0).max(0.0) / t_max;
        let closed_form = (p == 2.0).then(|| {
            op.shifted()
                .iter()
                .map(|m| gamma(a) * m.norm_sqr() / (2.0 * m.re).powf(a))
                .collect()
        });
        Ok(Self {
            theta,
            p,
            mod_sq,
            decay,
            weights,
            head_factor: t_min.powf(a) / a,
            tail_factor: t_max.powf(a - 1.0) / tail_rate,
            closed_form,
            rel_tol: tol,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// Seminorm and the input-specific tail bound of the integral.
    fn seminorm_with_tail(&self, x: &StateVector) -> (f64, f64) {
        let modes = self.mod_sq.len();
        let amp: Vec<f64> = x
            .coeffs()
            .iter()
            .zip(&self.mod_sq)
            .map(|(c, m)| c.norm_sqr() * m)
            .collect();
        let half_p = self.p / 2.0;
        let mut total = 0.0;
        let mut last = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let row = &self.decay[i * modes..(i + 1) * modes];
            let s2: f64 = amp.iter().zip(row).map(|(a, d)| a * d).sum();
            last = s2.powf(half_p);
            total += w * last;
        }
        let head = amp.iter().sum::<f64>().powf(half_p) * self.head_factor;
        let tail = last * self.tail_factor;
        ((total + head).powf(1.0 / self.p), tail)
    }

    /// Orbit seminorm by quadrature.
    pub fn seminorm_quadrature(&self, x: &StateVector) -> Result<f64> {
        x.check_len(self.mod_sq.len())?;
        let (semi, tail) = self.seminorm_with_tail(x);
        let integral = semi.powf(self.p);
        if tail > self.rel_tol * integral.max(f64::MIN_POSITIVE) && tail > 0.0 {
            return Err(Error::QuadratureNotConverged {
                tail,
                value: integral,
            });
        }
        Ok(semi)
    }

    /// Orbit seminorm; exact Gamma closed form when `p = 2`.
    pub fn seminorm(&self, x: &StateVector) -> f64 {
        match &self.closed_form {
            Some(cf) => x
                .coeffs()
                .iter()
                .zip(cf)
                .map(|(c, w)| c.norm_sqr() * w)
                .sum::<f64>()
                .sqrt(),
            None => self.seminorm_with_tail(x).0,
        }
    }

    pub fn norm(&self, x: &StateVector) -> f64 {
        x.norm() + self.seminorm(x)
    }
}

/// Trace-type norm `‖x‖_{X_{θ,p}}` by orbit quadrature.
pub fn interp_norm_real(
    op: &SpectralOperator,
    theta: f64,
    p: f64,
    x: &StateVector,
    quad: Quadrature,
) -> Result<f64> {
    let tn = TraceNorm::new(op, theta, p, quad)?;
    Ok(x.norm() + tn.seminorm_quadrature(x)?)
}

/// Single-mode seminorm `λ^θ (Γ((1−θ)p) / p^{(1−θ)p})^{1/p}`.
pub fn gamma_oracle(lambda: f64, theta: f64, p: f64) -> f64 {
    let a = (1.0 - theta) * p;
    lambda.powf(theta) * (gamma(a) / p.powf(a)).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Basis;
    use num_complex::Complex64;

    fn scalar(lambda: f64) -> SpectralOperator {
        SpectralOperator::from_real(&[lambda], 0.0, Basis::Abstract).unwrap()
    }

    #[test]
    fn unit_mode_half_half() {
        let a = scalar(1.0);
        let x = StateVector::from_real(&[1.0]);
        let n = interp_norm_real(&a, 0.5, 2.0, &x, Quadrature::default()).unwrap();
        assert!((n - (1.0 + 0.5f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn gamma_oracle_grid() {
        for theta in [0.5, 0.75] {
            for p in [2.0, 4.0, 8.0] {
                for lambda in [1.0, 10.0, 100.0] {
                    let a = scalar(lambda);
                    let x = StateVector::from_real(&[1.0]);
                    let tn = TraceNorm::new(&a, theta, p, Quadrature::default()).unwrap();
                    let got = tn.seminorm_quadrature(&x).unwrap();
                    let want = gamma_oracle(lambda, theta, p);
                    assert!(((got - want) / want).abs() < 1e-6, "{theta} {p} {lambda}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn zero_vector() {
        let a = scalar(3.0);
        assert_eq!(interp_norm_real(&a, 0.5, 4.0, &StateVector::zeros(1), Quadrature::default()).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_agrees_with_quadrature_for_complex_modes() {
        let a = SpectralOperator::new(
            vec![Complex64::new(1.0, 0.5), Complex64::new(4.0, 0.0), Complex64::new(30.0, -10.0)],
            0.0,
            Basis::Abstract,
        )
        .unwrap();
        let x = StateVector::new(vec![Complex64::new(0.3, 0.1), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 0.2)]).unwrap();
        let tn = TraceNorm::new(&a, 0.5, 2.0, Quadrature::default()).unwrap();
        let q = tn.seminorm_quadrature(&x).unwrap();
        assert!((q - tn.seminorm(&x)).abs() < 1e-9 * q);
    }

    #[test]
    fn doubling_nodes_is_stable() {
        let a = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 32, 0.0).unwrap();
        let x = StateVector::from_real(&(1..=32).map(|k| 1.0 / (k as f64).powi(2)).collect::<Vec<_>>());
        let quad = Quadrature::default();
        let coarse = interp_norm_real(&a, 0.75, 4.0, &x, quad).unwrap();
        let fine = interp_norm_real(&a, 0.75, 4.0, &x, quad.refined()).unwrap();
        assert!(((coarse - fine) / fine).abs() < quad.rel_tol * 10.0);
    }

    #[test]
    fn starved_quadrature_reports_tail() {
        let a = scalar(1e-3);
        let quad = Quadrature {
            max_nodes: 20,
            ..Quadrature::default()
        };
        assert!(matches!(
            TraceNorm::new(&a, 0.5, 2.0, quad),
            Err(Error::QuadratureNotConverged { .. })
        ));
    }
}
