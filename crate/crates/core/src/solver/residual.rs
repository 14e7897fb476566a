use num_complex::Complex64;

use super::problem::ProblemSpec;
use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::path::SolutionPath;
use crate::spectral::StateVector;

/// `max_n ‖R_n‖` for the discrete strong form
///
/// ```text
/// R_n = U_n − u₀ + Σ_{j<n} (A(t_j)U_j − F(t_j,U_j) − f) Δt − Σ_{j<n} (B(t_j,U_j) + b) ΔW_j
/// ```
///
/// taken over the stored states, so a stopped path is checked up to `τ`.
pub fn strong_residual(spec: &ProblemSpec, sol: &SolutionPath, path: &BrownianPath) -> Result<f64> {
    if sol.grid != *path.grid() {
        return Err(Error::DimensionMismatch {
            expected: path.grid().n_steps(),
            found: sol.grid.n_steps(),
        });
    }
    let dt = sol.grid.dt();
    let modes = spec.modes();
    let mut acc = vec![Complex64::new(0.0, 0.0); modes];
    let mut worst: f64 = 0.0;
    for (j, u) in sol.states.iter().enumerate() {
        let r: f64 = u
            .coeffs()
            .iter()
            .zip(spec.u0.coeffs())
            .zip(&acc)
            .map(|((a, b), c)| (a - b + c).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
        if j + 1 == sol.states.len() {
            break;
        }
        let t = sol.grid.time(j);
        let mu = spec.family.shifted_at(t);
        let mut drift = StateVector::zeros(modes);
        for part in [
            spec.drift.as_ref().map(|d| d.eval(t, u)),
            spec.local_drift.as_ref().map(|d| d.eval(t, u)),
            spec.f.clone(),
        ]
        .into_iter()
        .flatten()
        {
            drift = drift.add(&part);
        }
        let mut noise = StateVector::zeros(modes);
        let dw = path.increments_at(j);
        for part in [
            spec.diffusion.as_ref().map(|d| d.eval(t, u)),
            spec.local_diffusion.as_ref().map(|d| d.eval(t, u)),
            spec.b.clone(),
        ]
        .into_iter()
        .flatten()
        {
            noise = noise.add(&part.apply(dw));
        }
        for k in 0..modes {
            acc[k] += (mu[k] * u.coeffs()[k] - drift.coeffs()[k]) * dt - noise.coeffs()[k];
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, NoiseOperator, TimeGrid};
    use crate::solver::picard::forward_solve;
    use crate::solver::problem::OperatorFamily;
    use crate::spectral::{Basis, SpectralOperator};
    use crate::stats::ls_slope;

    #[test]
    fn residual_decays_under_refinement() {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 8, 0.0).unwrap();
        let mut spec = ProblemSpec::new(
            OperatorFamily::Constant(op),
            StateVector::from_real(&[1.0, 0.0, 0.3, 0.0, 0.1, 0.0, 0.0, 0.0]),
            1.0,
            2.0,
        );
        spec.b = Some(NoiseOperator::diagonal(8, &[0.5]));
        let ns = [256usize, 512, 1024];
        let mut logs = Vec::new();
        for &n in &ns {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let mean: f64 = (0..8)
                .map(|i| {
                    let path = sample_path(11, i, grid, 1);
                    let sol = forward_solve(&spec, &path).unwrap();
                    strong_residual(&spec, &sol, &path).unwrap()
                })
                .sum::<f64>()
                / 8.0;
            logs.push(mean.ln());
        }
        let x: Vec<f64> = ns.iter().map(|n| (1.0 / *n as f64).ln()).collect();
        assert!(ls_slope(&x, &logs) >= 0.45);
    }
}
