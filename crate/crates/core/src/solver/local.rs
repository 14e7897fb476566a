use serde::Serialize;

use super::engine::Engine;
use super::picard::{constant_operator, draws_for};
use super::problem::ProblemSpec;
use crate::error::{Error, Result};
use crate::noise::{ou_step, AdaptedSteps, BrownianPath, NoiseOperator, OuStepper, ResidualDraws};
use crate::path::SolutionPath;
use crate::spectral::{SpectralOperator, StateVector, TraceNorm};

/// Solves with local parts clamped to the current trace-norm level and
/// stops at the first grid time the trace norm reaches `n_max`.
///
/// Levels advance as `‖U_n‖_{Tr} ≥ ℓ`; the argument of each step lies
/// inside the current level, so clamping is only a safeguard.
pub fn local_solve(spec: &ProblemSpec, path: &BrownianPath, n_max: f64) -> Result<SolutionPath> {
    if !(n_max >= 1.0) {
        return Err(Error::InvalidParameter { name: "n_max", value: n_max });
    }
    let op = constant_operator(spec)?;
    let draws = draws_for(&op, path);
    let mut engine = Engine::new(spec, op.clone(), path, &draws)?;
    let grid = *path.grid();
    let norm = TraceNorm::new(&op, spec.trace_theta(), spec.p, Default::default())?;
    let mut level_times = Vec::new();
    let mut r = norm.norm(&spec.u0);
    let mut level = 1.0f64;
    while r >= level && level <= n_max {
        level_times.push(0.0);
        level += 1.0;
    }
    let mut states = vec![spec.u0.clone()];
    let mut stop = None;
    if r >= n_max {
        stop = Some(0);
    } else {
        for n in 0..grid.n_steps() {
            engine.radius = level;
            let prev = &states[n];
            let next = engine.advance(n, prev, prev);
            r = if next.is_finite() { norm.norm(&next) } else { f64::INFINITY };
            states.push(next);
            let t = grid.time(n + 1);
            while r >= level && level <= n_max {
                level_times.push(t);
                level += 1.0;
            }
            if r >= n_max {
                stop = Some(n + 1);
                break;
            }
        }
    }
    let mut sol = SolutionPath::new(grid, states);
    sol.flags.converged = true;
    sol.flags.level_times = level_times;
    sol.flags.kappa_partition = vec![0, grid.n_steps()];
    if let Some(s) = stop {
        sol.flags.stopping_step = Some(s);
        sol.flags.stopping_time = Some(grid.time(s));
    }
    Ok(sol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StoppedCheck {
    /// Step of `τ`, or `N` when the threshold is never reached.
    pub tau_step: usize,
    /// `max_n ‖I_τ(G)(t_n) − S(t_n − t_n∧τ) I(G)(t_n∧τ)‖`
    pub identity_deviation: f64,
    /// `max_{n ≤ τ} ‖I_τ(G)(t_n) − I(G)(t_n)‖`
    pub agreement_deviation: f64,
}

/// Checks `I_τ(G)(t) = S(t − t∧τ) I(G)(t∧τ)` where `I_τ` integrates `G 1_{[0,τ)}`
/// and `τ` is the first grid time with `‖I(G)‖ ≥ threshold`.
pub fn stopped_convolution_check(
    op: &SpectralOperator,
    steps: &AdaptedSteps,
    path: &BrownianPath,
    threshold: f64,
) -> Result<StoppedCheck> {
    let grid = *path.grid();
    let n = grid.n_steps();
    if steps.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: steps.len() });
    }
    let stepper = OuStepper::new(op, grid.dt());
    let draws = ResidualDraws::generate(path, stepper.complex_modes());
    let zero = NoiseOperator::zeros(op.len(), path.noise_dim());
    let mut full = vec![StateVector::zeros(op.len())];
    for (s, g) in steps.ops().iter().enumerate() {
        let next = ou_step(&stepper, &full[s], g, path.increments_at(s), draws.block(s))?;
        full.push(next);
    }
    let tau = full.iter().position(|x| x.norm() >= threshold).unwrap_or(n);
    let mut stopped = vec![StateVector::zeros(op.len())];
    for (s, g) in steps.ops().iter().enumerate() {
        let g = if s < tau { g } else { &zero };
        let next = ou_step(&stepper, &stopped[s], g, path.increments_at(s), draws.block(s))?;
        stopped.push(next);
    }
    let mut identity: f64 = 0.0;
    let mut agreement: f64 = 0.0;
    for j in 0..=n {
        let m = j.min(tau);
        let rhs = op.semigroup_apply(grid.time(j) - grid.time(m), &full[m])?;
        identity = identity.max(stopped[j].sub(&rhs).norm());
        if j <= tau {
            agreement = agreement.max(stopped[j].sub(&full[j]).norm());
        }
    }
    Ok(StoppedCheck {
        tau_step: tau,
        identity_deviation: identity,
        agreement_deviation: agreement,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::noise::{sample_path, TimeGrid};
    use crate::solver::problem::{FnDrift, LipschitzConstants, OperatorFamily};
    use crate::spectral::Basis;

    struct Quadratic;

    impl super::super::problem::Drift for Quadratic {
        fn eval(&self, _t: f64, x: &StateVector) -> StateVector {
            StateVector::from_vec_unchecked(x.coeffs().iter().map(|c| c * c).collect())
        }
        fn constants(&self) -> LipschitzConstants {
            LipschitzConstants::default()
        }
        fn constants_at(&self, radius: f64) -> LipschitzConstants {
            LipschitzConstants { l: 0.0, l_tilde: 2.0 * radius, growth: radius }
        }
    }

    fn scalar_spec(u0: f64) -> ProblemSpec {
        let op = SpectralOperator::from_real(&[1.0], 0.0, Basis::Abstract).unwrap();
        ProblemSpec::new(OperatorFamily::Constant(op), StateVector::from_real(&[u0]), 1.0, 2.0).with_local_drift(Arc::new(Quadratic))
    }

    #[test]
    fn blowup_time_of_riccati() {
        let spec = scalar_spec(2.0);
        let path = BrownianPath::zero(TimeGrid::new(1.0, 8192).unwrap(), 1);
        let sol = local_solve(&spec, &path, 1000.0).unwrap();
        let tau = sol.flags.stopping_time.unwrap();
        let blowup = 2.0f64.ln();
        assert!((tau - blowup).abs() < 0.05 * blowup, "{tau}");
        assert!(tau < blowup);
        assert!(sol.flags.level_times.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn levels_agree_before_lower_stop() {
        let spec = scalar_spec(2.0);
        let path = BrownianPath::zero(TimeGrid::new(1.0, 4096).unwrap(), 1);
        let a = local_solve(&spec, &path, 5.0).unwrap();
        let b = local_solve(&spec, &path, 6.0).unwrap();
        let s = a.flags.stopping_step.unwrap();
        assert_eq!(&a.states[..=s], &b.states[..=s]);
    }

    #[test]
    fn small_data_runs_to_horizon() {
        let spec = scalar_spec(0.1);
        let path = BrownianPath::zero(TimeGrid::new(1.0, 256).unwrap(), 1);
        let sol = local_solve(&spec, &path, 1000.0).unwrap();
        assert!(sol.flags.stopping_time.is_none());
        assert_eq!(sol.states.len(), 257);
    }

    #[test]
    fn global_parts_still_apply() {
        let op = SpectralOperator::from_real(&[1.0], 0.0, Basis::Abstract).unwrap();
        let lin = FnDrift::new(|_, x: &StateVector| x.scale(0.5), LipschitzConstants { l: 0.0, l_tilde: 0.5, growth: 0.5 });
        let global = ProblemSpec::new(OperatorFamily::Constant(op), StateVector::from_real(&[1.0]), 1.0, 2.0).with_drift(Arc::new(lin));
        let spec = global
            .clone()
            .with_local_drift(Arc::new(FnDrift::new(|_, x: &StateVector| x.scale(0.0), LipschitzConstants::default())));
        let path = BrownianPath::zero(TimeGrid::new(1.0, 64).unwrap(), 1);
        let sol = local_solve(&spec, &path, 100.0).unwrap();
        let reference = crate::solver::forward_solve(&global, &path).unwrap();
        assert_eq!(sol.states, reference.states);
        assert!(sol.final_state().coeffs()[0].re < 1.0);
    }

    #[test]
    fn stopped_convolution_identity() {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 6, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let g = NoiseOperator::diagonal(6, &[2.0, 1.0]);
        let steps = AdaptedSteps::deterministic(vec![g; 128]);
        for idx in 0..8 {
            let path = sample_path(4, idx, grid, 2);
            let c = stopped_convolution_check(&op, &steps, &path, 0.5).unwrap();
            assert!(c.identity_deviation <= 1e-10);
            assert!(c.agreement_deviation <= 1e-10);
        }
    }
}
