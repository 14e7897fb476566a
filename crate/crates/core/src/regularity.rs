//! Pathwise regularity: Hölder exponents in the `X_α` scale, trace-space
//! continuity and the half-derivative divergence of Brownian paths.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{CounterRng, StreamTag};
use crate::path::SolutionPath;
use crate::spectral::{SpectralOperator, StateVector, TraceNorm};
use crate::stats::ls_slope;

/// Increment statistic per dyadic lag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderEstimator {
    /// Root mean square over all positions.
    #[default]
    Rms,
    /// Largest increment, the pathwise seminorm.
    Max,
}

/// Dyadic lags `2^j`, `j = 0..=J` with `J = ⌊log₂ n⌋ − 2`.
fn dyadic_lags(n_steps: usize) -> Result<Vec<usize>> {
    let levels = if n_steps == 0 { 0 } else { n_steps.ilog2() as usize };
    let top = levels.saturating_sub(2);
    if top + 1 < 5 {
        return Err(Error::InsufficientLevels {
            available: top + 1,
            required: 5,
        });
    }
    Ok((0..=top).map(|j| 1usize << j).collect())
}

fn exponent_from(n_steps: usize, dt: f64, estimator: HolderEstimator, dist: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let lags = dyadic_lags(n_steps)?;
    let mut x = Vec::with_capacity(lags.len());
    let mut y = Vec::with_capacity(lags.len());
    for &lag in &lags {
        let count = n_steps + 1 - lag;
        let stat = match estimator {
            HolderEstimator::Max => (0..count).map(|i| dist(i, i + lag)).fold(0.0, f64::max),
            HolderEstimator::Rms => ((0..count).map(|i| dist(i, i + lag).powi(2)).sum::<f64>() / count as f64).sqrt(),
        };
        if stat <= 0.0 {
            continue;
        }
        x.push((lag as f64 * dt).ln());
        y.push(stat.ln());
    }
    if x.len() < 2 {
        // A constant path is Lipschitz.
        return Ok(1.0);
    }
    Ok(ls_slope(&x, &y).clamp(0.0, 1.0))
}

/// Slope of log increment against log lag for a state trajectory in `X_α`.
pub fn holder_exponent(states: &[StateVector], op: &SpectralOperator, alpha: f64, dt: f64, estimator: HolderEstimator) -> Result<f64> {
    let n = states.len().saturating_sub(1);
    dyadic_lags(n)?;
    let scaled: Vec<StateVector> = states
        .iter()
        .map(|x| op.frac_power_apply(alpha, x))
        .collect::<Result<_>>()?;
    exponent_from(n, dt, estimator, |i, j| scaled[j].sub(&scaled[i]).norm())
}

/// Scalar version of [`holder_exponent`].
pub fn holder_exponent_scalar(values: &[f64], dt: f64, estimator: HolderEstimator) -> Result<f64> {
    let n = values.len().saturating_sub(1);
    exponent_from(n, dt, estimator, |i, j| (values[j] - values[i]).abs())
}

/// Random Fourier series with increment variance `∝ |h|^{2H}` at small lags.
///
/// Synthesized by FFT on a period four times the horizon and restricted to
/// `[0, T]`, which suppresses the periodic wrap-around at large lags.
pub fn synthesize_holder_path(hurst: f64, n_steps: usize, seed: u64, path_index: u64) -> Vec<f64> {
    let size = 4 * n_steps;
    let rng = CounterRng::new(seed);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
    for k in 1..size / 2 {
        let amp = (k as f64).powf(-(hurst + 0.5));
        let a = rng.normal(path_index, 0, StreamTag::Synthesis, 2 * k as u64);
        let b = rng.normal(path_index, 0, StreamTag::Synthesis, 2 * k as u64 + 1);
        spectrum[k] = Complex64::new(a, b) * amp;
        spectrum[size - k] = spectrum[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(size).process(&mut spectrum);
    let scale = (n_steps as f64).powf(hurst) / size as f64;
    spectrum[..=n_steps].iter().map(|c| c.re * scale).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Diverges,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalfRegCheck {
    pub verdict: Verdict,
    /// Surrogate seminorm per resolution level.
    pub level_values: Vec<f64>,
}

/// Discrete Besov-½ surrogate per level `ℓ = 1..=levels`:
/// `S_ℓ = Σ_{j=1}^{ℓ} h_j^{−p/2} E mean_t |x(t+h_j) − x(t)|^p` with `h_j = T 2^{−j}`.
///
/// The lag sum is the `dh/h` integral on a dyadic mesh. The ensemble
/// diverges when the last three levels increase and `S_L / S_1 ≥ 4`.
pub fn bm_halfreg_check(paths: &[Vec<f64>], horizon: f64, p: f64, levels: usize) -> HalfRegCheck {
    let n = paths.first().map_or(0, |x| x.len().saturating_sub(1));
    let levels = levels.min(if n == 0 { 0 } else { n.ilog2() as usize });
    let mut terms = Vec::with_capacity(levels);
    for j in 1..=levels {
        let lag = n >> j;
        let h = horizon * lag as f64 / n as f64;
        let count = n + 1 - lag;
        let moment: f64 = paths
            .iter()
            .map(|x| (0..count).map(|i| (x[i + lag] - x[i]).abs().powf(p)).sum::<f64>() / count as f64)
            .sum::<f64>()
            / paths.len() as f64;
        terms.push(h.powf(-p / 2.0) * moment);
    }
    let level_values: Vec<f64> = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let verdict = if level_values.len() >= 4 {
        let tail = &level_values[level_values.len() - 4..];
        let increasing = tail.windows(2).all(|w| w[1] > w[0] * (1.0 + 1e-3));
        let growth = level_values[level_values.len() - 1] / level_values[0];
        if increasing && growth >= 4.0 {
            Verdict::Diverges
        } else {
            Verdict::Bounded
        }
    } else {
        Verdict::Bounded
    };
    HalfRegCheck { verdict, level_values }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub n_steps: usize,
    pub horizon: f64,
    pub code_version: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub kstar: f64,
    pub kdiamond: f64,
    pub theta_margin: f64,
    /// Empirical κ from the probe surrogate.
    pub empirical_kappa: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// `sup_t ‖U(t)‖_{X_{1−1/p,p}}` over the stored states.
    pub trace_sup: f64,
    /// `(θ, exponent in X_{1−θ})`
    pub holder_table: Vec<(f64, f64)>,
    /// `max_n ‖U(t_{n+1}) − U(t_n)‖_{Tr}`
    pub continuity_modulus: f64,
    pub stopping_time: Option<f64>,
    pub constants: Option<RegularityConstants>,
    pub provenance: Option<Provenance>,
}

/// Trace-space supremum, continuity modulus and Hölder table of one path.
///
/// Hölder rows are computed for `θ ∈ thetas`; rows are skipped when the grid
/// has fewer than five dyadic levels.
pub fn trace_continuity_report(sol: &SolutionPath, op: &SpectralOperator, p: f64, thetas: &[f64]) -> Result<RegularityReport> {
    let trace = TraceNorm::new(op, 1.0 - 1.0 / p, p, Default::default())?;
    let trace_sup = sol.states.iter().map(|x| trace.norm(x)).fold(0.0, f64::max);
    let continuity_modulus = sol
        .states
        .windows(2)
        .map(|w| trace.norm(&w[1].sub(&w[0])))
        .fold(0.0, f64::max);
    let mut holder_table = Vec::new();
    for &theta in thetas {
        match holder_exponent(&sol.states, op, 1.0 - theta, sol.grid.dt(), HolderEstimator::Rms) {
            Ok(h) => holder_table.push((theta, h)),
            Err(Error::InsufficientLevels { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(RegularityReport {
        trace_sup,
        holder_table,
        continuity_modulus,
        stopping_time: sol.flags.stopping_time,
        constants: None,
        provenance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, TimeGrid};
    use crate::spectral::Basis;
    use crate::stats::median;

    #[test]
    fn smooth_orbit_is_lipschitz() {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 8, 0.0).unwrap();
        let u0 = StateVector::from_real(&[1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // Lags stay below 1/λ so the derivative dominates the increments.
        let n = 1024;
        let dt = 0.1 / n as f64;
        let states: Vec<StateVector> = (0..=n).map(|j| op.semigroup_apply(j as f64 * dt, &u0).unwrap()).collect();
        for est in [HolderEstimator::Rms, HolderEstimator::Max] {
            assert!(holder_exponent(&states, &op, 0.0, dt, est).unwrap() >= 0.95);
        }
    }

    #[test]
    fn too_few_levels() {
        let err = holder_exponent_scalar(&[0.0; 17], 0.1, HolderEstimator::Rms).unwrap_err();
        assert!(matches!(err, Error::InsufficientLevels { available: 3, required: 5 }));
    }

    #[test]
    fn brownian_exponent_is_one_half() {
        let grid = TimeGrid::new(1.0, 1024).unwrap();
        let est: Vec<f64> = (0..1000)
            .map(|i| holder_exponent_scalar(&sample_path(8, i, grid, 1).values(0), grid.dt(), HolderEstimator::Rms).unwrap())
            .collect();
        let m = median(&est);
        assert!((m - 0.5).abs() <= 0.05, "{m}");
    }

    #[test]
    fn synthesis_calibration() {
        let n = 10_000;
        for h in [0.25, 0.5, 0.75] {
            let est: Vec<f64> = (0..20)
                .map(|i| holder_exponent_scalar(&synthesize_holder_path(h, n, 3, i), 1.0 / n as f64, HolderEstimator::Rms).unwrap())
                .collect();
            let m = median(&est);
            assert!((m - h).abs() <= 0.05, "h={h}: {m}");
        }
    }

    #[test]
    fn half_derivative_verdicts() {
        let n = 1024;
        let grid = TimeGrid::new(1.0, n).unwrap();
        let bm: Vec<Vec<f64>> = (0..200).map(|i| sample_path(2, i, grid, 1).values(0)).collect();
        let smooth: Vec<Vec<f64>> = vec![(0..=n).map(|j| (j as f64 / n as f64).powi(2)).collect()];
        let rough: Vec<Vec<f64>> = (0..200).map(|i| synthesize_holder_path(0.4, n, 5, i)).collect();
        let p = 4.0;
        let b = bm_halfreg_check(&bm, 1.0, p, 10);
        let s = bm_halfreg_check(&smooth, 1.0, p, 10);
        let r = bm_halfreg_check(&rough, 1.0, p, 10);
        assert_eq!(b.verdict, Verdict::Diverges);
        assert_eq!(s.verdict, Verdict::Bounded);
        assert_eq!(r.verdict, Verdict::Diverges);
        let growth = |c: &HalfRegCheck| c.level_values.last().unwrap() / c.level_values[0];
        assert!(growth(&r) > growth(&b));
    }

    #[test]
    fn semigroup_orbit_stays_in_trace_ball() {
        let op = SpectralOperator::laplacian(Basis::FourierTorus { dim: 1, order: 2 }, 9, 1.0).unwrap();
        let u0 = StateVector::from_real(&(0..9).map(|k| 1.0 / (1.0 + k as f64)).collect::<Vec<_>>());
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let states = (0..=256).map(|j| op.semigroup_apply(grid.time(j), &u0).unwrap()).collect();
        let sol = SolutionPath::new(grid, states);
        for p in [2.0, 4.0] {
            let rep = trace_continuity_report(&sol, &op, p, &[0.3, 0.4]).unwrap();
            let t0 = TraceNorm::new(&op, 1.0 - 1.0 / p, p, Default::default()).unwrap().norm(&u0);
            assert!(rep.trace_sup <= t0 * (1.0 + 1e-9));
            assert!(rep.holder_table.iter().all(|(_, h)| (0.0..=1.0).contains(h)));
        }
    }

    #[test]
    fn continuity_modulus_shrinks_under_refinement() {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 8, 0.0).unwrap();
        let u0 = StateVector::from_real(&[1.0, 0.5, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0]);
        let moduli: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let grid = TimeGrid::new(1.0, n).unwrap();
                let states = (0..=n).map(|j| op.semigroup_apply(grid.time(j), &u0).unwrap()).collect();
                trace_continuity_report(&SolutionPath::new(grid, states), &op, 2.0, &[]).unwrap().continuity_modulus
            })
            .collect();
        assert!(moduli.windows(2).all(|w| w[1] < w[0]));
    }
}
