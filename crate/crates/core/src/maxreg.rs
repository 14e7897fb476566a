//! Deterministic and stochastic maximal-regularity functionals.
//!
//! `K*_p` is the best constant in `‖Au‖_{L^p(X)} ≤ K ‖g‖_{L^p(X)}` for
//! `u' + Au = g`; `K◇_p` the best constant in
//! `‖A^{1/2} S◇G‖_{L^p(Ω×ℝ₊;X)} ≤ K ‖G‖_{L^p(Ω×ℝ₊;HS)}`. Both are estimated
//! from below as maxima over probe forcings.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::ou::residual_address;
use crate::noise::{phi1, sample_path, CounterRng, NoiseOperator, OuStepper, StreamTag, TimeGrid};
use crate::path::SolutionPath;
use crate::spectral::{SpectralOperator, StateVector};
use crate::stats::{compensated_sum, mean_se};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    Deterministic,
    Stochastic,
}

impl ConstantKind {
    pub fn label(self) -> &'static str {
        match self {
            ConstantKind::Deterministic => "kstar",
            ConstantKind::Stochastic => "kdiamond",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeResult {
    pub name: String,
    pub value: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsEstimate {
    pub kind: ConstantKind,
    pub p: f64,
    pub value: f64,
    pub standard_error: f64,
    pub probe_count: usize,
    pub sample_count: usize,
    pub best_probe: String,
    /// Shift `w` of the operator the constant refers to.
    pub shift: f64,
    /// Upper allowance for the part of the numerator beyond the horizon.
    pub tail: f64,
    pub per_probe: Vec<ProbeResult>,
}

impl ConstantsEstimate {
    fn from_probes(kind: ConstantKind, p: f64, shift: f64, samples: usize, results: Vec<ProbeResult>, tail: f64) -> Self {
        let best = results
            .iter()
            .enumerate()
            .fold(None::<usize>, |acc, (i, r)| match acc {
                Some(j) if results[j].value >= r.value => Some(j),
                _ => Some(i),
            })
            .expect("at least one probe");
        Self {
            kind,
            p,
            value: results[best].value,
            standard_error: results[best].standard_error,
            probe_count: results.len(),
            sample_count: samples,
            best_probe: results[best].name.clone(),
            shift,
            tail,
            per_probe: results,
        }
    }
}

/// `u_{n+1} = e^{−μΔt} u_n + J(μ) g_n`: exact for step forcing.
pub fn det_convolution(op: &SpectralOperator, forcing: &[StateVector], grid: TimeGrid) -> Result<SolutionPath> {
    if forcing.len() != grid.n_steps() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_steps(),
            found: forcing.len(),
        });
    }
    let dt = grid.dt();
    let decay = op.semigroup_factors(dt)?;
    let phi: Vec<Complex64> = op.shifted().iter().map(|&m| phi1(m, dt)).collect();
    let mut states = Vec::with_capacity(forcing.len() + 1);
    states.push(StateVector::zeros(op.len()));
    for (n, g) in forcing.iter().enumerate() {
        g.check_len(op.len())?;
        let prev = &states[n];
        let next = (0..op.len())
            .map(|k| decay[k] * prev.coeffs()[k] + phi[k] * g.coeffs()[k])
            .collect();
        states.push(StateVector::from_vec_unchecked(next));
    }
    Ok(SolutionPath::new(grid, states))
}

/// Log grid of `count` frequencies over `[δ·10⁻³, 10³·max Re μ]`, plus `s = 0`.
pub fn frequency_grid(op: &SpectralOperator, count: usize) -> Vec<f64> {
    let lo = (op.delta() * 1e-3).ln();
    let hi = (op.max_re() * 1e3).ln();
    std::iter::once(0.0)
        .chain((0..count).map(|i| (lo + (hi - lo) * i as f64 / (count.max(2) - 1) as f64).exp()))
        .collect()
}

/// `max_{s,k} μ_k / |is + μ_k|`, the multiplier bound behind `K*₂ ≤ 1`.
pub fn resolvent_bound_check(op: &SpectralOperator, s_grid: &[f64]) -> Result<f64> {
    op.check_self_adjoint()?;
    let mut sup: f64 = 0.0;
    for &s in s_grid {
        for m in op.shifted() {
            sup = sup.max(m.re / Complex64::new(m.re, s).norm());
        }
    }
    Ok(sup)
}

/// Step forcing on a grid.
#[derive(Clone, Debug)]
pub struct DetProbe {
    pub name: String,
    pub steps: Vec<StateVector>,
}

fn lp_step_norm(values: impl Iterator<Item = f64>, dt: f64, p: f64) -> f64 {
    (dt * compensated_sum(values.map(|v| v.powf(p)))).powf(1.0 / p)
}

/// Random block forcings plus single-mode constant and resonant probes.
pub fn deterministic_probes(op: &SpectralOperator, grid: TimeGrid, random: usize, seed: u64) -> Vec<DetProbe> {
    let n = grid.n_steps();
    let k_count = op.len();
    let rng = CounterRng::new(seed);
    let mut probes = Vec::new();
    for r in 0..random {
        let block = 1usize << ((rng.uniform(r as u64, 0, StreamTag::Probe, 0) * 7.0) as u32);
        let weights: Vec<f64> = (0..k_count)
            .map(|k| rng.normal(r as u64, k as u64 + 1, StreamTag::Probe, 0).exp())
            .collect();
        let steps = (0..n)
            .map(|s| {
                let b = (s / block) as u64 + 1;
                StateVector::from_vec_unchecked(
                    (0..k_count)
                        .map(|k| {
                            let re = rng.normal(r as u64, k as u64 + 1, StreamTag::Probe, 2 * b);
                            let im = if op.is_self_adjoint() {
                                0.0
                            } else {
                                rng.normal(r as u64, k as u64 + 1, StreamTag::Probe, 2 * b + 1)
                            };
                            Complex64::new(re, im) * weights[k]
                        })
                        .collect(),
                )
            })
            .collect();
        probes.push(DetProbe {
            name: format!("random_{r}"),
            steps,
        });
    }
    for k in 0..k_count {
        probes.push(DetProbe {
            name: format!("constant_mode_{k}"),
            steps: vec![StateVector::unit(k_count, k); n],
        });
        probes.push(oscillatory_probe(op, grid, k, op.mu(k).norm()));
    }
    probes
}

/// `g(t) = e^{iωt} e_k`, sampled at step midpoints.
pub fn oscillatory_probe(op: &SpectralOperator, grid: TimeGrid, k: usize, omega: f64) -> DetProbe {
    let dt = grid.dt();
    let steps = (0..grid.n_steps())
        .map(|s| {
            let mut v = StateVector::zeros(op.len());
            v.coeffs_mut()[k] = Complex64::from_polar(1.0, omega * (s as f64 + 0.5) * dt);
            v
        })
        .collect();
    DetProbe {
        name: format!("oscillatory_mode_{k}"),
        steps,
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// `‖Au‖_{L^p(0,∞)} / ‖g‖_{L^p(0,T)}` for a step forcing on `[0, T]`.
///
/// Within a step `μ u(t_n + s) = g_n + e^{−μs}(μ u_n − g_n)` exactly. For
/// `p = 2` the time integral is closed-form per mode, including the free decay
/// after `T`. Otherwise four-point Gauss–Legendre per step, free decay
/// continued until `e^{−pδt} < 10⁻⁸`, and the returned tail bounds the rest.
pub fn kstar_ratio(op: &SpectralOperator, p: f64, probe: &DetProbe, grid: TimeGrid) -> Result<(f64, f64)> {
    let dt = grid.dt();
    let k_count = op.len();
    let denom = lp_step_norm(probe.steps.iter().map(StateVector::norm), dt, p);
    if denom == 0.0 {
        return Err(Error::InvalidParameter {
            name: "probe_norm",
            value: 0.0,
        });
    }
    let mu = op.shifted();
    let decay = op.semigroup_factors(dt)?;
    let mut au = vec![Complex64::new(0.0, 0.0); k_count];
    if p == 2.0 {
        let j1: Vec<Complex64> = mu.iter().map(|&m| phi1(m, dt)).collect();
        let j2: Vec<f64> = mu.iter().map(|&m| phi1(Complex64::new(2.0 * m.re, 0.0), dt).re).collect();
        let mut acc = Vec::with_capacity(probe.steps.len() + 1);
        for g in &probe.steps {
            let mut step = 0.0;
            for k in 0..k_count {
                let gk = g.coeffs()[k];
                let v = au[k] - gk;
                step += gk.norm_sqr() * dt + 2.0 * (gk.conj() * v * j1[k]).re + v.norm_sqr() * j2[k];
                au[k] = gk + decay[k] * v;
            }
            acc.push(step);
        }
        for k in 0..k_count {
            acc.push(au[k].norm_sqr() / (2.0 * mu[k].re));
        }
        return Ok((compensated_sum(acc).sqrt() / denom, 0.0));
    }
    let nodes: Vec<(Vec<Complex64>, f64)> = GAUSS4
        .iter()
        .map(|&(x, w)| {
            let s = 0.5 * dt * (x + 1.0);
            (mu.iter().map(|&m| (-m * s).exp()).collect(), 0.5 * dt * w)
        })
        .collect();
    let zero = StateVector::zeros(k_count);
    let extra = ((18.5 / (p * op.delta())) / dt).ceil() as usize;
    let mut acc = Vec::with_capacity(probe.steps.len() + extra);
    let mut last = 0.0;
    for g in probe.steps.iter().chain(std::iter::repeat(&zero).take(extra)) {
        let mut step = 0.0;
        for (e, w) in &nodes {
            let s2: f64 = (0..k_count)
                .map(|k| (g.coeffs()[k] + e[k] * (au[k] - g.coeffs()[k])).norm_sqr())
                .sum();
            step += w * s2.powf(p / 2.0);
        }
        acc.push(step);
        for k in 0..k_count {
            let gk = g.coeffs()[k];
            au[k] = gk + decay[k] * (au[k] - gk);
        }
        last = au.iter().map(Complex64::norm_sqr).sum::<f64>();
    }
    let num = compensated_sum(acc);
    let tail = last.powf(p / 2.0) / (p * op.delta());
    Ok((num.powf(1.0 / p) / denom, ((num + tail).powf(1.0 / p) - num.powf(1.0 / p)) / denom))
}

/// Discrete `ℓ²` ratio `Σ_{n≥1}|μu_n|² / Σ|g_n|²` of the grid recursion, with exact geometric tail.
pub fn discrete_ratio_time(op: &SpectralOperator, probe: &DetProbe, dt: f64) -> f64 {
    let mut num = Vec::new();
    let mut den = Vec::new();
    for k in 0..op.len() {
        let q = (-op.mu(k) * dt).exp();
        let mut y = Complex64::new(0.0, 0.0);
        for g in &probe.steps {
            y = q * y + (1.0 - q) * g.coeffs()[k];
            num.push(y.norm_sqr());
            den.push(g.coeffs()[k].norm_sqr());
        }
        num.push(y.norm_sqr() * q.norm_sqr() / (1.0 - q.norm_sqr()));
    }
    (compensated_sum(num) / compensated_sum(den)).sqrt()
}

/// Same ratio via Plancherel: circular convolution with the periodized
/// kernel on a zero-padded window long enough for the kernel to decay.
pub fn discrete_ratio_fft(op: &SpectralOperator, probe: &DetProbe, dt: f64) -> f64 {
    let n = probe.steps.len();
    let pad = (36.0 / (op.delta() * dt)).ceil() as usize;
    let len = (n + pad).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let mut num = Vec::new();
    let mut den = Vec::new();
    for k in 0..op.len() {
        let q = (-op.mu(k) * dt).exp();
        let norm = 1.0 - q.powu(len as u32);
        let mut h: Vec<Complex64> = (0..len).map(|m| (1.0 - q) * q.powu(m as u32) / norm).collect();
        let mut g: Vec<Complex64> = (0..len)
            .map(|s| if s < n { probe.steps[s].coeffs()[k] } else { Complex64::new(0.0, 0.0) })
            .collect();
        fft.process(&mut h);
        fft.process(&mut g);
        num.extend(h.iter().zip(&g).map(|(a, b)| (a * b).norm_sqr()));
        den.extend(g.iter().map(Complex64::norm_sqr));
    }
    (compensated_sum(num) / compensated_sum(den)).sqrt()
}

pub fn estimate_kstar(op: &SpectralOperator, p: f64, probes: &[DetProbe], grid: TimeGrid) -> Result<ConstantsEstimate> {
    if probes.is_empty() {
        return Err(Error::InvalidParameter {
            name: "probe_count",
            value: 0.0,
        });
    }
    let mut results = Vec::with_capacity(probes.len());
    let mut tail: f64 = 0.0;
    for probe in probes {
        let (value, t) = kstar_ratio(op, p, probe, grid)?;
        tail = tail.max(t);
        results.push(ProbeResult {
            name: probe.name.clone(),
            value,
            standard_error: 0.0,
        });
    }
    Ok(ConstantsEstimate::from_probes(
        ConstantKind::Deterministic,
        p,
        op.shift(),
        0,
        results,
        tail,
    ))
}

/// Deterministic integrand supported on the first `steps.len()` grid steps.
#[derive(Clone, Debug)]
pub struct StochProbe {
    pub name: String,
    pub steps: Vec<NoiseOperator>,
}

impl StochProbe {
    pub fn noise_dim(&self) -> usize {
        self.steps.first().map_or(1, NoiseOperator::dim)
    }
}

/// Single-mode probes `G = 1_{[0,1/μ_k]} e_k` plus random block integrands on `[0, min(T/2, 2/δ)]`.
pub fn stochastic_probes(op: &SpectralOperator, grid: TimeGrid, random: usize, seed: u64) -> Vec<StochProbe> {
    let dt = grid.dt();
    let n = grid.n_steps();
    let k_count = op.len();
    let mut probes = Vec::new();
    for k in 0..k_count {
        let support = ((1.0 / (op.mu(k).norm() * dt)).round() as usize).clamp(1, n);
        let mut g = NoiseOperator::zeros(k_count, 1);
        g.set(k, 0, Complex64::new(1.0, 0.0));
        probes.push(StochProbe {
            name: format!("indicator_mode_{k}"),
            steps: vec![g; support],
        });
    }
    let rng = CounterRng::new(seed);
    let support = (((grid.horizon() / 2.0).min(2.0 / op.delta()) / dt).round() as usize).clamp(1, n);
    for r in 0..random {
        let stream = 1000 + r as u64;
        let block = 1usize << ((rng.uniform(stream, 0, StreamTag::Probe, 0) * 6.0) as u32);
        let steps = (0..support)
            .map(|s| {
                let b = (s / block) as u64 + 1;
                let mut g = NoiseOperator::zeros(k_count, 1);
                for k in 0..k_count {
                    g.set(k, 0, Complex64::new(rng.normal(stream, k as u64 + 1, StreamTag::Probe, b), 0.0));
                }
                g
            })
            .collect();
        probes.push(StochProbe {
            name: format!("random_{r}"),
            steps,
        });
    }
    probes
}

/// One path's `∫₀^T ‖A^{1/2} S◇G‖^p dt` (trapezoid on the grid while `G`
/// is active, exact decay afterwards when `p = 2`) and its beyond-horizon part.
fn kdiamond_sample(
    op: &SpectralOperator,
    stepper: &OuStepper,
    probe: &StochProbe,
    p: f64,
    grid: TimeGrid,
    seed: u64,
    path_index: u64,
) -> (f64, f64) {
    let n = grid.n_steps();
    let dt = grid.dt();
    let k_count = op.len();
    let dim = probe.noise_dim();
    let support = probe.steps.len();
    let path = sample_path(seed, path_index, grid, dim);
    let rng = CounterRng::new(seed);
    let active: Vec<bool> = (0..k_count)
        .map(|k| probe.steps.iter().any(|g| g.row(k).iter().any(|c| c.norm_sqr() > 0.0)))
        .collect();
    // Residual normals for active modes over the support only.
    let mut draws = vec![0.0; support * dim * k_count * 2];
    let mut buf = vec![0.0; support];
    for i in 0..dim {
        for k in (0..k_count).filter(|&k| active[k]) {
            let parts = if stepper.complex_modes()[k] { 2 } else { 1 };
            for part in 0..parts {
                rng.normals_into(path_index, i as u64, StreamTag::OuResidual, residual_address(k, part, 0, n), &mut buf);
                for (s, v) in buf.iter().enumerate() {
                    draws[((s * dim + i) * k_count + k) * 2 + part] = *v;
                }
            }
        }
    }
    let weight: Vec<f64> = op.shifted().iter().map(|m| m.norm()).collect();
    let f = |u: &[Complex64]| -> f64 {
        let s2: f64 = u.iter().zip(&weight).map(|(c, w)| c.norm_sqr() * w).sum();
        s2.powf(p / 2.0)
    };
    let mut u = vec![Complex64::new(0.0, 0.0); k_count];
    let mut acc = Vec::with_capacity(n + 1);
    let mut f_prev = 0.0;
    let block = k_count * dim * 2;
    for (s, g) in probe.steps.iter().enumerate() {
        let dw = path.increments_at(s);
        let d = &draws[s * block..(s + 1) * block];
        for k in (0..k_count).filter(|&k| active[k]) {
            let mut v = stepper.decay()[k] * u[k];
            for (i, gk) in g.row(k).iter().enumerate() {
                let base = (i * k_count + k) * 2;
                v += gk * stepper.increment(k, dw[i], d[base], d[base + 1]);
            }
            u[k] = v;
        }
        let f_next = f(&u);
        acc.push(0.5 * dt * (f_prev + f_next));
        f_prev = f_next;
    }
    let remaining = grid.horizon() - support as f64 * dt;
    if p == 2.0 {
        let mut tail = 0.0;
        for k in (0..k_count).filter(|&k| active[k]) {
            let a = op.mu(k).re;
            let e = u[k].norm_sqr() * weight[k];
            acc.push(e * phi1(Complex64::new(2.0 * a, 0.0), remaining).re);
            tail += e * (-2.0 * a * remaining).exp() / (2.0 * a);
        }
        return (compensated_sum(acc), tail);
    }
    for _ in support..n {
        for k in 0..k_count {
            u[k] *= stepper.decay()[k];
        }
        let f_next = f(&u);
        acc.push(0.5 * dt * (f_prev + f_next));
        f_prev = f_next;
    }
    (compensated_sum(acc), f_prev / (p * op.delta()))
}

/// Monte Carlo `K◇_p` over probes; paths run on the current rayon pool and
/// are reduced in path order.
pub fn estimate_kdiamond(
    op: &SpectralOperator,
    p: f64,
    probes: &[StochProbe],
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<ConstantsEstimate> {
    if probes.is_empty() || n_paths < 2 {
        return Err(Error::InvalidParameter {
            name: "probes_or_paths",
            value: n_paths as f64,
        });
    }
    let dt = grid.dt();
    let stepper = OuStepper::new(op, dt);
    let mut results = Vec::with_capacity(probes.len());
    let mut tail_max: f64 = 0.0;
    for probe in probes {
        if probe.steps.len() > grid.n_steps() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_steps(),
                found: probe.steps.len(),
            });
        }
        let denom = lp_step_norm(probe.steps.iter().map(|g| g.hs_norm(op, 0.0)), dt, p);
        if denom == 0.0 {
            return Err(Error::InsufficientSamples {
                stderr: 0.0,
                value: 0.0,
            });
        }
        let samples: Vec<(f64, f64)> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| kdiamond_sample(op, &stepper, probe, p, grid, seed, i))
            .collect();
        let nums: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let tails: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (mean, se) = mean_se(&nums);
        let (tail_mean, _) = mean_se(&tails);
        let value = mean.powf(1.0 / p) / denom;
        let value_se = value * se / (p * mean);
        if !(value > 0.0) || value_se > 0.1 * value {
            return Err(Error::InsufficientSamples {
                stderr: value_se,
                value,
            });
        }
        tail_max = tail_max.max(((mean + tail_mean).powf(1.0 / p) - mean.powf(1.0 / p)) / denom);
        results.push(ProbeResult {
            name: probe.name.clone(),
            value,
            standard_error: value_se,
        });
    }
    Ok(ConstantsEstimate::from_probes(
        ConstantKind::Stochastic,
        p,
        op.shift(),
        n_paths,
        results,
        tail_max,
    ))
}

/// `E‖S◇G(T)‖^p / ‖G‖^p_{L²(0,T;HS)}` for one deterministic integrand.
pub fn type2_ratio(op: &SpectralOperator, p: f64, probe: &StochProbe, n_paths: usize, seed: u64, grid: TimeGrid) -> Result<(f64, f64)> {
    let stepper = OuStepper::new(op, grid.dt());
    let dim = probe.noise_dim();
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(seed, i, grid, dim);
            let draws = crate::noise::ResidualDraws::generate(&path, stepper.complex_modes());
            let mut u = StateVector::zeros(op.len());
            let zero = NoiseOperator::zeros(op.len(), dim);
            for s in 0..grid.n_steps() {
                let g = probe.steps.get(s).unwrap_or(&zero);
                u = crate::noise::ou_step(&stepper, &u, g, path.increments_at(s), draws.block(s))
                    .expect("dimensions checked by construction");
            }
            u.norm().powf(p)
        })
        .collect();
    let (mean, se) = mean_se(&values);
    let hs2 = compensated_sum(probe.steps.iter().map(|g| g.hs_norm(op, 0.0).powi(2))) * grid.dt();
    let denom = hs2.powf(p / 2.0);
    Ok((mean / denom, se / denom))
}

/// Closed form of the scalar `K*₂` ratio² for `g = 1_{[0,1]}`, `λ = 1`.
pub fn unit_indicator_ratio_sq() -> f64 {
    let e1 = (-1.0f64).exp();
    let e2 = (-2.0f64).exp();
    1.0 - 2.0 * (1.0 - e1) + 0.5 * (1.0 - e2) + 0.5 * (1.0 - e1).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Basis;

    fn scalar(lambda: f64) -> SpectralOperator {
        SpectralOperator::from_real(&[lambda], 0.0, Basis::Abstract).unwrap()
    }

    fn sharp() -> SpectralOperator {
        SpectralOperator::from_real(&[1.0, 2.0, 4.0, 8.0, 16.0], 0.0, Basis::Abstract).unwrap()
    }

    #[test]
    fn det_convolution_constant_forcing() {
        let op = scalar(2.5);
        let grid = TimeGrid::new(3.0, 30).unwrap();
        let g = vec![StateVector::from_real(&[0.7]); 30];
        let sol = det_convolution(&op, &g, grid).unwrap();
        for (n, u) in sol.states.iter().enumerate() {
            let t = grid.time(n);
            let exact = 0.7 * (1.0 - (-2.5 * t).exp()) / 2.5;
            assert!((u.coeffs()[0].re - exact).abs() < 1e-12);
        }
        let zero = det_convolution(&op, &vec![StateVector::zeros(1); 30], grid).unwrap();
        assert_eq!(zero.final_state().norm(), 0.0);
    }

    #[test]
    fn resolvent_bound_values() {
        assert_eq!(resolvent_bound_check(&scalar(3.0), &[0.0]).unwrap(), 1.0);
        let v = resolvent_bound_check(&scalar(1.0), &[1.0]).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        let rot = SpectralOperator::new(vec![Complex64::new(1.0, 1.0)], 0.0, Basis::Abstract).unwrap();
        assert!(matches!(resolvent_bound_check(&rot, &[0.0]), Err(Error::NotSelfAdjoint { index: 0 })));
        let op = sharp();
        assert!(resolvent_bound_check(&op, &frequency_grid(&op, 200)).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn unit_indicator_closed_form() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let probe = DetProbe {
            name: "indicator".into(),
            steps: vec![StateVector::from_real(&[1.0]); 64],
        };
        let (r, _) = kstar_ratio(&scalar(1.0), 2.0, &probe, grid).unwrap();
        assert!((r * r - unit_indicator_ratio_sq()).abs() < 1e-12);
        assert!(r < 1.0);
    }

    #[test]
    fn kstar_two_bounded_by_one() {
        let op = sharp();
        let grid = TimeGrid::new(4.0, 512).unwrap();
        let probes = deterministic_probes(&op, grid, 100, 7);
        let est = estimate_kstar(&op, 2.0, &probes, grid).unwrap();
        assert!(est.value <= 1.0 + 1e-6, "{}", est.value);
        assert!(est.value > 0.5);
        assert_eq!(est.probe_count, 110);
    }

    #[test]
    fn plancherel_agrees_with_time_domain() {
        let op = sharp();
        let grid = TimeGrid::new(2.0, 256).unwrap();
        for probe in deterministic_probes(&op, grid, 5, 3).iter().take(6) {
            let t = discrete_ratio_time(&op, probe, grid.dt());
            let f = discrete_ratio_fft(&op, probe, grid.dt());
            assert!((t - f).abs() < 1e-6, "{}: {t} vs {f}", probe.name);
            assert!(t <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn resonant_probe_matches_multiplier() {
        let lambda = 3.0;
        let op = scalar(lambda);
        let grid = TimeGrid::new(60.0, 12_000).unwrap();
        let probe = oscillatory_probe(&op, grid, 0, lambda);
        let (r, _) = kstar_ratio(&op, 2.0, &probe, grid).unwrap();
        let target = lambda / Complex64::new(lambda, lambda).norm();
        assert!((r / target - 1.0).abs() < 0.02, "{r} vs {target}");
    }

    #[test]
    fn scale_invariance() {
        let op = sharp();
        let grid = TimeGrid::new(2.0, 128).unwrap();
        let probes = deterministic_probes(&op, grid, 3, 5);
        let c = 3.7;
        let scaled = op.scaled(c).unwrap();
        let sgrid = TimeGrid::new(2.0 / c, 128).unwrap();
        for probe in &probes {
            let (a, _) = kstar_ratio(&op, 2.0, probe, grid).unwrap();
            let (b, _) = kstar_ratio(&scaled, 2.0, probe, sgrid).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn general_p_is_reported() {
        let op = sharp();
        let grid = TimeGrid::new(2.0, 256).unwrap();
        let probes = deterministic_probes(&op, grid, 3, 5);
        let est = estimate_kstar(&op, 4.0, &probes, grid).unwrap();
        assert!(est.value.is_finite() && est.value > 0.0);
        assert!(est.tail < 1e-3);
    }

    #[test]
    fn kdiamond_scalar_indicator() {
        let op = scalar(1.0);
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        let mut g = NoiseOperator::zeros(1, 1);
        g.set(0, 0, Complex64::new(1.0, 0.0));
        let probe = StochProbe {
            name: "indicator".into(),
            steps: vec![g; 100],
        };
        let est = estimate_kdiamond(&op, 2.0, &[probe], 4000, 11, grid).unwrap();
        let target = 0.5f64.sqrt();
        assert!((est.value - target).abs() <= 3.0 * est.standard_error, "{} ± {}", est.value, est.standard_error);
        assert!(est.tail < 1e-6);
    }

    #[test]
    fn kdiamond_zero_probe_rejected() {
        let op = scalar(1.0);
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let probe = StochProbe {
            name: "zero".into(),
            steps: vec![NoiseOperator::zeros(1, 1); 4],
        };
        assert!(matches!(
            estimate_kdiamond(&op, 2.0, &[probe], 10, 1, grid),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn estimator_max_is_monotone_in_probe_count() {
        let op = sharp();
        let grid = TimeGrid::new(4.0, 256).unwrap();
        let probes = stochastic_probes(&op, grid, 3, 2);
        let mut last = 0.0;
        for m in 1..=probes.len() {
            let est = estimate_kdiamond(&op, 2.0, &probes[..m], 200, 4, grid).unwrap();
            assert!(est.value >= last);
            last = est.value;
        }
    }

    #[test]
    fn type2_ratio_is_finite() {
        let op = sharp();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let probes = stochastic_probes(&op, grid, 1, 2);
        let (r, se) = type2_ratio(&op, 4.0, probes.last().unwrap(), 200, 3, grid).unwrap();
        assert!(r.is_finite() && r > 0.0 && se < r);
    }
}
