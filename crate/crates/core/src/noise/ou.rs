//! Exact one-step stochastic convolution for a frozen integrand.
//!
//! Per mode the step integral `Z = ∫₀^Δt e^{−μ(Δt−r)} dW(r)` is split into its
//! conditional mean given `ΔW` and an independent Gaussian residual. With
//! `J(c) = (1 − e^{−cΔt})/c` and `a = Re μ`:
//!
//! ```text
//! E[Z ΔW] = J(μ),  E|Z|² = J(2a),  E[Z²] = J(2μ)
//! Z = (J(μ)/Δt) ΔW + R
//! ```
//!
//! `R` is drawn from the 2×2 real covariance of `(Re Z, Im Z)` minus the part
//! explained by `ΔW`. Real modes need a single residual normal.

use num_complex::Complex64;

use super::brownian::BrownianPath;
use super::operator::{AdaptedSteps, NoiseOperator};
use super::rng::{CounterRng, StreamTag};
use crate::error::{Error, Result};
use crate::path::SolutionPath;
use crate::spectral::{SpectralOperator, StateVector};

/// `J(c) = (1 − e^{−cΔt})/c`, with a series near `cΔt = 0`.
pub fn phi1(c: Complex64, dt: f64) -> Complex64 {
    let x = c * dt;
    if x.norm() < 1e-2 {
        let series = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x * x * x * x / 120.0
            - x * x * x * x * x / 720.0;
        return series * dt;
    }
    if c.im == 0.0 {
        return Complex64::new(-(-c.re * dt).exp_m1() / c.re, 0.0);
    }
    (1.0 - (-x).exp()) / c
}

/// `(Δt − J(c))/c = ∫₀^Δt (Δt − s) e^{−c(Δt−s)} ds`, with a series near `cΔt = 0`.
pub fn phi2(c: Complex64, dt: f64) -> Complex64 {
    let x = c * dt;
    if x.norm() < 1e-2 {
        let series = 0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0 + x * x * x * x / 720.0;
        return series * dt * dt;
    }
    (dt - phi1(c, dt)) / c
}

pub fn residual_address(mode: usize, part: usize, step: usize, n_steps: usize) -> u64 {
    ((mode * 2 + part) * n_steps + step) as u64
}

/// Precomputed per-mode coefficients for one operator and step size.
#[derive(Clone, Debug)]
pub struct OuStepper {
    dt: f64,
    decay: Vec<Complex64>,
    phi: Vec<Complex64>,
    gain: Vec<Complex64>,
    chol: Vec<[f64; 3]>,
    variance: Vec<f64>,
    complex: Vec<bool>,
}

impl OuStepper {
    pub fn new(op: &SpectralOperator, dt: f64) -> Self {
        let n = op.len();
        let mut s = Self {
            dt,
            decay: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            gain: Vec::with_capacity(n),
            chol: Vec::with_capacity(n),
            variance: Vec::with_capacity(n),
            complex: Vec::with_capacity(n),
        };
        for &mu in op.shifted() {
            let j = phi1(mu, dt);
            let abs2 = phi1(Complex64::new(2.0 * mu.re, 0.0), dt).re;
            s.decay.push((-mu * dt).exp());
            s.phi.push(j);
            s.gain.push(j / dt);
            s.variance.push(abs2);
            if mu.im == 0.0 {
                let c11 = abs2 - j.re * j.re / dt;
                s.chol.push([c11.max(0.0).sqrt(), 0.0, 0.0]);
                s.complex.push(false);
            } else {
                let j2 = phi1(2.0 * mu, dt);
                let c11 = 0.5 * (abs2 + j2.re) - j.re * j.re / dt;
                let c22 = 0.5 * (abs2 - j2.re) - j.im * j.im / dt;
                let c12 = 0.5 * j2.im - j.re * j.im / dt;
                let l11 = c11.max(0.0).sqrt();
                let l21 = if l11 > 0.0 { c12 / l11 } else { 0.0 };
                let l22 = (c22 - l21 * l21).max(0.0).sqrt();
                s.chol.push([l11, l21, l22]);
                s.complex.push(true);
            }
        }
        s
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decay.is_empty()
    }

    /// `e^{−μ_k Δt}`
    pub fn decay(&self) -> &[Complex64] {
        &self.decay
    }

    /// `J(μ_k)`, the exact step integral of a constant forcing.
    pub fn phi(&self) -> &[Complex64] {
        &self.phi
    }

    /// Exact per-mode variance `E|Z_k|² = (1 − e^{−2 Re μ_k Δt}) / (2 Re μ_k)`.
    pub fn variance(&self, k: usize) -> f64 {
        self.variance[k]
    }

    pub fn complex_modes(&self) -> &[bool] {
        &self.complex
    }

    /// `Z_k` for one noise component given `ΔW` and the residual normals.
    #[inline]
    pub fn increment(&self, k: usize, dw: f64, xi1: f64, xi2: f64) -> Complex64 {
        let [l11, l21, l22] = self.chol[k];
        self.gain[k] * dw + Complex64::new(l11 * xi1, l21 * xi1 + l22 * xi2)
    }
}

/// Residual normals of one path, laid out `[step][component][mode][part]`.
#[derive(Clone, Debug)]
pub struct ResidualDraws {
    modes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ResidualDraws {
    pub fn zeros(n_steps: usize, modes: usize, dim: usize) -> Self {
        Self {
            modes,
            dim,
            data: vec![0.0; n_steps * modes * dim * 2],
        }
    }

    /// All residual normals for `path`; imaginary parts only for complex modes.
    pub fn generate(path: &BrownianPath, complex_modes: &[bool]) -> Self {
        let n = path.grid().n_steps();
        let modes = complex_modes.len();
        let dim = path.noise_dim();
        let mut out = Self::zeros(n, modes, dim);
        let rng = CounterRng::new(path.seed());
        let mut buf = vec![0.0; n];
        for i in 0..dim {
            for (k, &cplx) in complex_modes.iter().enumerate() {
                for part in 0..if cplx { 2 } else { 1 } {
                    let start = residual_address(k, part, 0, n);
                    rng.normals_into(path.path_index(), i as u64, StreamTag::OuResidual, start, &mut buf);
                    for (s, v) in buf.iter().enumerate() {
                        out.data[((s * dim + i) * modes + k) * 2 + part] = *v;
                    }
                }
            }
        }
        out
    }

    pub fn block(&self, step: usize) -> &[f64] {
        let len = self.modes * self.dim * 2;
        &self.data[step * len..(step + 1) * len]
    }
}

/// One exact step: `U_{n+1} = e^{−μΔt} U_n + Σ_i (G e_i)_k Z_{k,i}`.
///
/// `draws` is the residual block of the step, `[component][mode][part]`.
pub fn ou_step(
    stepper: &OuStepper,
    u: &StateVector,
    g: &NoiseOperator,
    dw: &[f64],
    draws: &[f64],
) -> Result<StateVector> {
    let modes = stepper.len();
    u.check_len(modes)?;
    if g.modes() != modes || g.dim() != dw.len() || draws.len() != modes * dw.len() * 2 {
        return Err(Error::DimensionMismatch {
            expected: modes * dw.len() * 2,
            found: draws.len(),
        });
    }
    let mut out = Vec::with_capacity(modes);
    for (k, c) in u.coeffs().iter().enumerate() {
        let mut v = stepper.decay[k] * c;
        for (i, gk) in g.row(k).iter().enumerate() {
            if gk.re == 0.0 && gk.im == 0.0 {
                continue;
            }
            let base = (i * modes + k) * 2;
            v += gk * stepper.increment(k, dw[i], draws[base], draws[base + 1]);
        }
        out.push(v);
    }
    Ok(StateVector::from_vec_unchecked(out))
}

/// Trajectory of `S◇G` on the grid of `path`, starting from zero.
pub fn stoch_convolution(op: &SpectralOperator, steps: &AdaptedSteps, path: &BrownianPath) -> Result<SolutionPath> {
    let grid = *path.grid();
    let n = grid.n_steps();
    if steps.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: steps.len(),
        });
    }
    let stepper = OuStepper::new(op, grid.dt());
    let draws = ResidualDraws::generate(path, stepper.complex_modes());
    let mut states = Vec::with_capacity(n + 1);
    states.push(StateVector::zeros(op.len()));
    for (s, g) in steps.ops().iter().enumerate() {
        let next = ou_step(&stepper, &states[s], g, path.increments_at(s), draws.block(s))?;
        states.push(next);
    }
    let mut sol = SolutionPath::new(grid, states);
    sol.flags.converged = true;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, TimeGrid};
    use crate::spectral::Basis;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn phi_series_matches_direct() {
        for x in [c(0.009, 0.0), c(0.005, 0.007), c(0.02, 0.0), c(0.011, -0.004)] {
            let dt = 0.5;
            let mu = x / dt;
            let direct1 = (1.0 - (-x).exp()) / mu;
            let direct2 = (dt - direct1) / mu;
            assert!((phi1(mu, dt) - direct1).norm() < 1e-13 * dt);
            assert!((phi2(mu, dt) - direct2).norm() < 1e-11 * dt * dt);
        }
    }

    #[test]
    fn variance_limit_as_rate_vanishes() {
        let op = SpectralOperator::from_real(&[1e-9], 0.0, Basis::Abstract).unwrap();
        let st = OuStepper::new(&op, 0.1);
        assert!((st.variance(0) - 0.1).abs() < 1e-10);
    }

    #[test]
    fn zero_noise_is_semigroup_step() {
        let op = SpectralOperator::new(vec![c(1.0, 0.0), c(2.0, 3.0)], 0.0, Basis::Abstract).unwrap();
        let st = OuStepper::new(&op, 0.3);
        let u = StateVector::new(vec![c(1.0, 0.5), c(-2.0, 1.0)]).unwrap();
        let g = NoiseOperator::zeros(2, 1);
        let next = ou_step(&st, &u, &g, &[0.7], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(next, op.semigroup_apply(0.3, &u).unwrap());
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn stationary_variance_of_scalar_ou() {
        let op = SpectralOperator::from_real(&[1.0], 0.0, Basis::Abstract).unwrap();
        let grid = TimeGrid::new(12.0, 24).unwrap();
        let steps = AdaptedSteps::deterministic(vec![NoiseOperator::diagonal(1, &[1.0]); 24]);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|p| {
                stoch_convolution(&op, &steps, &sample_path(17, p, grid, 1))
                    .unwrap()
                    .final_state()
                    .coeffs()[0]
                    .re
            })
            .collect();
        let (_, var) = moments(&xs);
        let exact = (1.0 - (-24.0f64).exp()) / 2.0;
        assert!((var - exact).abs() <= 3.0 * exact * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn rotating_mode_covariance() {
        let mu = c(1.5, 4.0);
        let op = SpectralOperator::new(vec![mu], 0.0, Basis::Abstract).unwrap();
        let t = 0.8;
        let grid = TimeGrid::new(t, 5).unwrap();
        let steps = AdaptedSteps::deterministic(vec![NoiseOperator::diagonal(1, &[1.0]); 5]);
        let n = 10_000;
        let (mut re, mut im) = (Vec::new(), Vec::new());
        for p in 0..n {
            let sol = stoch_convolution(&op, &steps, &sample_path(23, p, grid, 1)).unwrap();
            let z = sol.final_state().coeffs()[0];
            re.push(z.re);
            im.push(z.im);
        }
        let full = (1.0 - (-2.0 * mu.re * t).exp()) / (2.0 * mu.re);
        let rot = (1.0 - (-2.0 * mu * t).exp()) / (2.0 * mu);
        let want_re = 0.5 * (full + rot.re);
        let want_im = 0.5 * (full - rot.re);
        let (_, vr) = moments(&re);
        let (_, vi) = moments(&im);
        let se = (2.0 / (n - 1) as f64).sqrt();
        assert!((vr - want_re).abs() <= 3.0 * want_re * se, "{vr} vs {want_re}");
        assert!((vi - want_im).abs() <= 3.0 * want_im * se, "{vi} vs {want_im}");
    }

    #[test]
    fn conditional_mean_tracks_increment() {
        // For small μΔt the step integral is ΔW up to O(μΔt).
        let op = SpectralOperator::from_real(&[1e-3], 0.0, Basis::Abstract).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let path = sample_path(2, 0, grid, 1);
        let steps = AdaptedSteps::deterministic(vec![NoiseOperator::diagonal(1, &[1.0]); 4]);
        let sol = stoch_convolution(&op, &steps, &path).unwrap();
        let w1 = path.values(0)[4];
        assert!((sol.final_state().coeffs()[0].re - w1).abs() < 5e-3);
    }
}
