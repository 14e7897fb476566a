use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{CounterRng, NoiseOperator, StreamTag};
use crate::spectral::{SpectralOperator, StateVector};

/// Declared Lipschitz and growth constants of a coefficient map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    /// Coefficient of `‖x − y‖_{X₁}`.
    pub l: f64,
    /// Coefficient of `‖x − y‖_{X₀}`.
    pub l_tilde: f64,
    /// Linear growth `‖F(x)‖ ≤ C(1 + ‖x‖_{X₁})`.
    pub growth: f64,
}

/// Drift `F(t, x)`: `X₁ → X₀`.
pub trait Drift: Send + Sync {
    fn eval(&self, t: f64, x: &StateVector) -> StateVector;
    fn constants(&self) -> LipschitzConstants;
    /// Constants on the trace ball of the given radius, for local forms.
    fn constants_at(&self, _radius: f64) -> LipschitzConstants {
        self.constants()
    }
}

/// Diffusion `B(t, x)`: `X₁ → HS(ℝ^M, X_{1/2})`.
pub trait Diffusion: Send + Sync {
    fn eval(&self, t: f64, x: &StateVector) -> NoiseOperator;
    fn noise_dim(&self) -> usize;
    fn constants(&self) -> LipschitzConstants;
    fn constants_at(&self, _radius: f64) -> LipschitzConstants {
        self.constants()
    }
}

/// Drift given by a closure.
pub struct FnDrift<F> {
    f: F,
    constants: LipschitzConstants,
}

impl<F> FnDrift<F>
where
    F: Fn(f64, &StateVector) -> StateVector + Send + Sync,
{
    pub fn new(f: F, constants: LipschitzConstants) -> Self {
        Self { f, constants }
    }
}

impl<F> Drift for FnDrift<F>
where
    F: Fn(f64, &StateVector) -> StateVector + Send + Sync,
{
    fn eval(&self, t: f64, x: &StateVector) -> StateVector {
        (self.f)(t, x)
    }
    fn constants(&self) -> LipschitzConstants {
        self.constants
    }
}

/// Diffusion given by a closure.
pub struct FnDiffusion<F> {
    f: F,
    dim: usize,
    constants: LipschitzConstants,
}

impl<F> FnDiffusion<F>
where
    F: Fn(f64, &StateVector) -> NoiseOperator + Send + Sync,
{
    pub fn new(f: F, dim: usize, constants: LipschitzConstants) -> Self {
        Self { f, dim, constants }
    }
}

impl<F> Diffusion for FnDiffusion<F>
where
    F: Fn(f64, &StateVector) -> NoiseOperator + Send + Sync,
{
    fn eval(&self, t: f64, x: &StateVector) -> NoiseOperator {
        (self.f)(t, x)
    }
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn constants(&self) -> LipschitzConstants {
        self.constants
    }
}

/// Scalar time profile `r(t)` multiplying the unshifted eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateProfile {
    /// `r(t) = 1 + slope · t / horizon`
    Ramp { slope: f64, horizon: f64 },
    /// Continuous piecewise-linear interpolation of `(t, r)` knots.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl RateProfile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            RateProfile::Ramp { slope, horizon } => 1.0 + slope * t / horizon,
            RateProfile::PiecewiseLinear { knots } => {
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                for w in knots.windows(2) {
                    let ((t0, r0), (t1, r1)) = (w[0], w[1]);
                    if t <= t1 {
                        return r0 + (r1 - r0) * (t - t0) / (t1 - t0);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }

    /// Right derivative `r'(t)`.
    pub fn slope(&self, t: f64) -> f64 {
        match self {
            RateProfile::Ramp { slope, horizon } => slope / horizon,
            RateProfile::PiecewiseLinear { knots } => {
                for w in knots.windows(2) {
                    let ((t0, r0), (t1, r1)) = (w[0], w[1]);
                    if t >= t0 && t < t1 {
                        return (r1 - r0) / (t1 - t0);
                    }
                }
                0.0
            }
        }
    }

    /// `∫₀^t r(s) ds`
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            RateProfile::Ramp { slope, horizon } => t + 0.5 * slope * t * t / horizon,
            RateProfile::PiecewiseLinear { knots } => {
                let mut acc = 0.0;
                let mut prev = (0.0, self.value(0.0));
                let mut points: Vec<(f64, f64)> = knots.iter().copied().filter(|k| k.0 > 0.0 && k.0 < t).collect();
                points.push((t, self.value(t)));
                for (tk, rk) in points {
                    acc += 0.5 * (prev.1 + rk) * (tk - prev.0);
                    prev = (tk, rk);
                }
                acc
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            RateProfile::Ramp { slope, horizon } => *horizon > 0.0 && 1.0 + slope.min(0.0) > 0.0,
            RateProfile::PiecewiseLinear { knots } => {
                knots.len() >= 2
                    && knots.windows(2).all(|w| w[1].0 > w[0].0)
                    && knots.iter().all(|k| k.1 > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario("rate profile must be positive with increasing knots".into()))
        }
    }
}

/// `t ↦ A(t)` sharing one eigenbasis.
#[derive(Clone, Debug)]
pub enum OperatorFamily {
    Constant(SpectralOperator),
    /// `λ_k(t) = λ_k · r(t)`, shift fixed.
    Scaled {
        base: SpectralOperator,
        profile: RateProfile,
    },
}

impl OperatorFamily {
    pub fn scaled(base: SpectralOperator, profile: RateProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self::Scaled { base, profile })
    }

    pub fn base(&self) -> &SpectralOperator {
        match self {
            OperatorFamily::Constant(op) => op,
            OperatorFamily::Scaled { base, .. } => base,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, OperatorFamily::Constant(_))
    }

    pub fn at(&self, t: f64) -> Result<SpectralOperator> {
        match self {
            OperatorFamily::Constant(op) => Ok(op.clone()),
            OperatorFamily::Scaled { base, profile } => {
                let r = profile.value(t);
                base.with_eigenvalues(base.eigenvalues().iter().map(|l| l * r).collect())
            }
        }
    }

    /// `μ_k(t)` for all modes.
    pub fn shifted_at(&self, t: f64) -> Vec<Complex64> {
        match self {
            OperatorFamily::Constant(op) => op.shifted().to_vec(),
            OperatorFamily::Scaled { base, profile } => {
                let r = profile.value(t);
                base.eigenvalues().iter().map(|l| l * r + base.shift()).collect()
            }
        }
    }

    /// `dμ_k/dt` at `t`.
    pub fn slope_at(&self, t: f64) -> Vec<Complex64> {
        match self {
            OperatorFamily::Constant(op) => vec![Complex64::new(0.0, 0.0); op.len()],
            OperatorFamily::Scaled { base, profile } => {
                let s = profile.slope(t);
                base.eigenvalues().iter().map(|l| l * s).collect()
            }
        }
    }

    /// Relative-continuity modulus on `[s, t]`: `‖(A(τ) − A(s))x‖ ≤ ε‖x‖_{X₁} + η‖x‖`.
    pub fn oscillation(&self, s: f64, t: f64, samples: usize) -> (f64, f64) {
        match self {
            OperatorFamily::Constant(_) => (0.0, 0.0),
            OperatorFamily::Scaled { base, profile } => {
                let rs = profile.value(s);
                let mut eps: f64 = 0.0;
                for i in 0..=samples {
                    let tau = s + (t - s) * i as f64 / samples.max(1) as f64;
                    eps = eps.max((profile.value(tau) - rs).abs() / rs);
                }
                (eps, eps * base.shift())
            }
        }
    }
}

/// Full equation data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub family: OperatorFamily,
    pub drift: Option<Arc<dyn Drift>>,
    pub diffusion: Option<Arc<dyn Diffusion>>,
    pub local_drift: Option<Arc<dyn Drift>>,
    pub local_diffusion: Option<Arc<dyn Diffusion>>,
    pub f: Option<StateVector>,
    pub b: Option<NoiseOperator>,
    pub u0: StateVector,
    pub horizon: f64,
    pub p: f64,
    pub q: f64,
    pub noise_dim: usize,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("family", &self.family)
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("local_drift", &self.local_drift.is_some())
            .field("local_diffusion", &self.local_diffusion.is_some())
            .field("horizon", &self.horizon)
            .field("p", &self.p)
            .finish()
    }
}

impl ProblemSpec {
    /// Linear problem `du + Au dt = 0` with the given data; add parts with the builders.
    pub fn new(family: OperatorFamily, u0: StateVector, horizon: f64, p: f64) -> Self {
        Self {
            family,
            drift: None,
            diffusion: None,
            local_drift: None,
            local_diffusion: None,
            f: None,
            b: None,
            u0,
            horizon,
            p,
            q: 2.0,
            noise_dim: 1,
        }
    }

    pub fn with_drift(mut self, drift: Arc<dyn Drift>) -> Self {
        self.drift = Some(drift);
        self
    }

    pub fn with_diffusion(mut self, diffusion: Arc<dyn Diffusion>) -> Self {
        self.noise_dim = diffusion.noise_dim();
        self.diffusion = Some(diffusion);
        self
    }

    pub fn with_local_drift(mut self, drift: Arc<dyn Drift>) -> Self {
        self.local_drift = Some(drift);
        self
    }

    pub fn with_local_diffusion(mut self, diffusion: Arc<dyn Diffusion>) -> Self {
        self.noise_dim = diffusion.noise_dim();
        self.local_diffusion = Some(diffusion);
        self
    }

    pub fn modes(&self) -> usize {
        self.family.base().len()
    }

    pub fn drift_constants(&self) -> LipschitzConstants {
        self.drift.as_ref().map(|d| d.constants()).unwrap_or_default()
    }

    pub fn diffusion_constants(&self) -> LipschitzConstants {
        self.diffusion.as_ref().map(|d| d.constants()).unwrap_or_default()
    }

    pub fn is_deterministic(&self) -> bool {
        self.diffusion.is_none() && self.local_diffusion.is_none() && self.b.as_ref().is_none_or(NoiseOperator::is_zero)
    }

    pub fn has_local_parts(&self) -> bool {
        self.local_drift.is_some() || self.local_diffusion.is_some()
    }

    /// Trace-space exponent `1 − 1/p`.
    pub fn trace_theta(&self) -> f64 {
        1.0 - 1.0 / self.p
    }
}

/// `θ = 1 − (K* L_F + K◇ L_B)` and the weight `M` of the equivalent norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Margin {
    pub theta: f64,
    pub m_weight: f64,
    pub kstar: f64,
    pub kdiamond: f64,
}

pub fn contraction_margin(drift: LipschitzConstants, diffusion: LipschitzConstants, kstar: f64, kdiamond: f64) -> Result<Margin> {
    let lead = kstar * drift.l + kdiamond * diffusion.l;
    let theta = 1.0 - lead;
    if theta <= 0.0 {
        return Err(Error::SmallnessViolated(lead));
    }
    let m_weight = if lead == 0.0 {
        0.0
    } else {
        (kstar * drift.l_tilde + kdiamond * diffusion.l_tilde) / lead
    };
    Ok(Margin {
        theta,
        m_weight,
        kstar,
        kdiamond,
    })
}

/// Largest observed excess over the declared bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub drift_lipschitz: f64,
    pub drift_growth: f64,
    pub diffusion_lipschitz: f64,
    pub diffusion_growth: f64,
    pub pairs: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.drift_lipschitz <= 0.0 && self.drift_growth <= 0.0 && self.diffusion_lipschitz <= 0.0 && self.diffusion_growth <= 0.0
    }
}

fn random_x1(op: &SpectralOperator, rng: &CounterRng, pair: u64, which: u64, amplitude: f64) -> StateVector {
    StateVector::from_vec_unchecked(
        (0..op.len())
            .map(|k| {
                let z = rng.normal(pair, which, StreamTag::Validation, k as u64);
                Complex64::new(amplitude * z / op.mu(k).norm(), 0.0)
            })
            .collect(),
    )
}

/// Spot-checks the declared constants of `F` and `B` on random pairs in `X₁`.
///
/// Excess is measured against `(L + ε)‖x−y‖_{X₁} + (L̃ + ε)‖x−y‖` with
/// `ε = 10⁻⁶ · scale`, scale being the size of the difference.
pub fn validate_constants(spec: &ProblemSpec, pairs: usize, seed: u64) -> ValidationReport {
    let op = spec.family.base();
    let rng = CounterRng::new(seed);
    let mut report = ValidationReport {
        drift_lipschitz: f64::NEG_INFINITY,
        drift_growth: f64::NEG_INFINITY,
        diffusion_lipschitz: f64::NEG_INFINITY,
        diffusion_growth: f64::NEG_INFINITY,
        pairs,
    };
    for pair in 0..pairs as u64 {
        let amplitude = [0.1, 1.0, 5.0][(pair % 3) as usize];
        let x = random_x1(op, &rng, pair, 0, amplitude);
        let y = if pair % 2 == 0 {
            x.add(&random_x1(op, &rng, pair, 1, 1e-3 * amplitude))
        } else {
            random_x1(op, &rng, pair, 1, amplitude)
        };
        let t = spec.horizon * rng.uniform(pair, 2, StreamTag::Validation, 0);
        let d = x.sub(&y);
        let (d1, d0) = (op.norm_x1(&d), d.norm());
        let eps = 1e-6 * d1.max(d0).max(1e-300);
        if let Some(f) = &spec.drift {
            let c = f.constants();
            let lhs = f.eval(t, &x).sub(&f.eval(t, &y)).norm();
            let rhs = c.l * d1 + c.l_tilde * d0 + eps * (d1 + d0);
            report.drift_lipschitz = report.drift_lipschitz.max(lhs - rhs);
            let g = f.eval(t, &x).norm() - c.growth * (1.0 + op.norm_x1(&x)) - 1e-6;
            report.drift_growth = report.drift_growth.max(g);
        }
        if let Some(b) = &spec.diffusion {
            let c = b.constants();
            let lhs = b.eval(t, &x).sub(&b.eval(t, &y)).hs_norm(op, 0.5);
            let rhs = c.l * d1 + c.l_tilde * d0 + eps * (d1 + d0);
            report.diffusion_lipschitz = report.diffusion_lipschitz.max(lhs - rhs);
            let g = b.eval(t, &x).hs_norm(op, 0.5) - c.growth * (1.0 + op.norm_x1(&x)) - 1e-6;
            report.diffusion_growth = report.diffusion_growth.max(g);
        }
    }
    for v in [
        &mut report.drift_lipschitz,
        &mut report.drift_growth,
        &mut report.diffusion_lipschitz,
        &mut report.diffusion_growth,
    ] {
        *v = v.max(0.0);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Basis;

    #[test]
    fn margin_cases() {
        let zero = LipschitzConstants::default();
        let m = contraction_margin(zero, zero, 1.0, 0.5f64.sqrt()).unwrap();
        assert_eq!((m.theta, m.m_weight), (1.0, 0.0));
        let f = LipschitzConstants { l: 0.3, l_tilde: 0.6, growth: 0.0 };
        let b = LipschitzConstants { l: 0.5f64.sqrt(), l_tilde: 0.0, growth: 0.0 };
        let m = contraction_margin(f, b, 1.0, 0.5f64.sqrt()).unwrap();
        assert!((m.theta - 0.2).abs() < 1e-12);
        assert!((m.m_weight - 0.6 / 0.8).abs() < 1e-12);
        let f = LipschitzConstants { l: 1.2, ..zero };
        assert!(matches!(contraction_margin(f, zero, 1.0, 0.7), Err(Error::SmallnessViolated(v)) if (v - 1.2).abs() < 1e-15));
    }

    #[test]
    fn hilbert_condition_reduces_to_sharp_form() {
        // L_F + L_B/√2 < 1 with K* = 1, K◇ = 1/√2
        let f = LipschitzConstants { l: 0.4, ..Default::default() };
        let b = LipschitzConstants { l: 0.8, ..Default::default() };
        let m = contraction_margin(f, b, 1.0, 0.5f64.sqrt()).unwrap();
        assert!((m.theta - (1.0 - 0.4 - 0.8 / 2.0f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn ramp_profile_integral() {
        let r = RateProfile::Ramp { slope: 0.2, horizon: 2.0 };
        assert!((r.integral(2.0) - 2.2).abs() < 1e-15);
        let pl = RateProfile::PiecewiseLinear { knots: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 2.0)] };
        assert!((pl.integral(2.0) - 3.5).abs() < 1e-15);
        assert_eq!(pl.slope(0.5), 1.0);
        assert_eq!(pl.slope(1.5), 0.0);
    }

    #[test]
    fn declared_constants_validated() {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 8, 0.0).unwrap();
        let c = 0.3;
        let lin = {
            let op = op.clone();
            FnDrift::new(
                move |_, x: &StateVector| op.frac_power_apply(1.0, x).unwrap().scale(c),
                LipschitzConstants { l: c, l_tilde: 0.0, growth: c },
            )
        };
        let spec = ProblemSpec::new(OperatorFamily::Constant(op.clone()), StateVector::zeros(8), 1.0, 2.0)
            .with_drift(Arc::new(lin));
        assert!(validate_constants(&spec, 100, 1).passed());
        let understated = {
            let op = op.clone();
            FnDrift::new(
                move |_, x: &StateVector| op.frac_power_apply(1.0, x).unwrap().scale(c),
                LipschitzConstants { l: 0.1, l_tilde: 0.0, growth: c },
            )
        };
        let spec = ProblemSpec::new(OperatorFamily::Constant(op), StateVector::zeros(8), 1.0, 2.0)
            .with_drift(Arc::new(understated));
        assert!(!validate_constants(&spec, 100, 1).passed());
    }
}
