use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::picard::{draws_for, glue_solve, glue_with, SolveMethod};
use super::problem::{OperatorFamily, ProblemSpec};
use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::path::SolutionPath;
use crate::spectral::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "pieces", rename_all = "snake_case")]
pub enum FreezePartition {
    /// Coarsest uniform partition with oscillation `≤ θ/2` on every piece.
    Auto,
    Uniform(usize),
}

fn boundaries(n_steps: usize, pieces: usize) -> Vec<usize> {
    (0..=pieces).map(|i| (i * n_steps + pieces / 2) / pieces).collect()
}

/// Freezes `A(t)` at the left endpoint of each piece and moves
/// `(A(s_m) − A(t))u` into the drift. A constant family runs the
/// unfrozen solver unchanged.
pub fn freeze_timedep_solve(
    spec: &ProblemSpec,
    path: &BrownianPath,
    theta: f64,
    partition: FreezePartition,
    method: SolveMethod,
) -> Result<SolutionPath> {
    let n = path.grid().n_steps();
    if spec.family.is_constant() {
        return glue_solve(spec, path, &[0, n], method);
    }
    let horizon = path.grid().horizon();
    let dt = path.grid().dt();
    let pieces = match partition {
        FreezePartition::Uniform(p) => p,
        FreezePartition::Auto => {
            let mut p = 1;
            loop {
                let b = boundaries(n, p.min(n));
                let worst = max_oscillation(&spec.family, &b, dt);
                if worst <= 0.5 * theta {
                    break p;
                }
                if p >= n {
                    return Err(Error::FreezingFailed {
                        required: horizon / (2 * p) as f64,
                        dt,
                    });
                }
                p *= 2;
            }
        }
    };
    if pieces == 0 || pieces > n {
        return Err(Error::FreezingFailed {
            required: horizon / pieces.max(1) as f64,
            dt,
        });
    }
    let b = boundaries(n, pieces);
    let base = spec.family.base();
    let draws = draws_for(base, path);
    let mut states = vec![spec.u0.clone()];
    let mut iterations = 0;
    let mut ratios = Vec::new();
    for w in b.windows(2) {
        let s_m = path.grid().time(w[0]);
        let op_m = spec.family.at(s_m)?;
        let engine = Engine::frozen(spec, op_m, path, &draws)?;
        let start = states.last().expect("nonempty").clone();
        let piece = glue_with(&engine, start, &[w[0], w[1]], method, path).map_err(|e| match e {
            Error::NoConvergence { iterations, last_ratio, .. } => Error::NoConvergence {
                iterations,
                last_ratio,
                piece: Some(w[0]),
            },
            other => other,
        })?;
        iterations = iterations.max(piece.flags.iterations);
        ratios.extend(piece.flags.contraction_ratios);
        states.extend(piece.states.into_iter().skip(1));
    }
    let mut sol = SolutionPath::new(*path.grid(), states);
    sol.flags.converged = true;
    sol.flags.iterations = iterations;
    sol.flags.contraction_ratios = ratios;
    sol.flags.freeze_oscillation = Some(max_oscillation(&spec.family, &b, dt));
    sol.flags.kappa_partition = b;
    Ok(sol)
}

fn max_oscillation(family: &OperatorFamily, b: &[usize], dt: f64) -> f64 {
    b.windows(2)
        .map(|w| family.oscillation(w[0] as f64 * dt, w[1] as f64 * dt, 32).0)
        .fold(0.0, f64::max)
}

/// Exact solution of `du + A(t)u dt = 0`: `u_k(t) = e^{−λ_k ∫₀^t r − w t} u_k(0)`.
pub fn exact_linear_timedep(family: &OperatorFamily, u0: &StateVector, t: f64) -> StateVector {
    match family {
        OperatorFamily::Constant(op) => op.semigroup_apply(t, u0).expect("t ≥ 0"),
        OperatorFamily::Scaled { base, profile } => {
            let integral = profile.integral(t);
            let coeffs = base
                .eigenvalues()
                .iter()
                .zip(u0.coeffs())
                .map(|(l, c)| (-(l * integral) - Complex64::new(base.shift() * t, 0.0)).exp() * c)
                .collect();
            StateVector::from_vec_unchecked(coeffs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, TimeGrid};
    use crate::solver::picard::{glue_solve, PicardOptions};
    use crate::solver::problem::RateProfile;
    use crate::spectral::{Basis, SpectralOperator};

    fn family() -> (OperatorFamily, StateVector) {
        let base = SpectralOperator::laplacian(Basis::FourierTorus { dim: 1, order: 2 }, 9, 1.0).unwrap();
        let u0 = StateVector::from_real(&(0..9).map(|k| 1.0 / (1 + k * k) as f64).collect::<Vec<_>>());
        (OperatorFamily::scaled(base, RateProfile::Ramp { slope: 0.2, horizon: 1.0 }).unwrap(), u0)
    }

    #[test]
    fn error_decreases_under_refinement() {
        let (fam, u0) = family();
        let spec = ProblemSpec::new(fam.clone(), u0.clone(), 1.0, 2.0);
        let path = BrownianPath::zero(TimeGrid::new(1.0, 256).unwrap(), 1);
        let exact = exact_linear_timedep(&fam, &u0, 1.0);
        let errs: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&p| {
                let s = freeze_timedep_solve(&spec, &path, 1.0, FreezePartition::Uniform(p), SolveMethod::Forward).unwrap();
                s.final_state().sub(&exact).norm()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn constant_family_is_bit_identical() {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 6, 0.0).unwrap();
        let spec = ProblemSpec::new(OperatorFamily::Constant(op), StateVector::from_real(&[1.0, 0.5, 0.0, 0.2, 0.0, 0.1]), 1.0, 2.0);
        let path = sample_path(1, 0, TimeGrid::new(1.0, 32).unwrap(), 1);
        let m = SolveMethod::Picard(PicardOptions::default());
        let a = freeze_timedep_solve(&spec, &path, 1.0, FreezePartition::Auto, m).unwrap();
        let b = glue_solve(&spec, &path, &[0, 32], m).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn auto_partition_respects_margin() {
        let (fam, u0) = family();
        let spec = ProblemSpec::new(fam, u0, 1.0, 2.0);
        let path = BrownianPath::zero(TimeGrid::new(1.0, 64).unwrap(), 1);
        let s = freeze_timedep_solve(&spec, &path, 0.05, FreezePartition::Auto, SolveMethod::Forward).unwrap();
        assert!(s.flags.freeze_oscillation.unwrap() <= 0.025);
        assert!(s.flags.kappa_partition.len() > 2);
        let err = freeze_timedep_solve(&spec, &path, 1e-6, FreezePartition::Auto, SolveMethod::Forward).unwrap_err();
        assert!(matches!(err, Error::FreezingFailed { .. }));
    }
}
