use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::engine::{picard_window, ratios, Engine};
use super::problem::{Margin, ProblemSpec};
use crate::error::{Error, Result};
use crate::noise::{BrownianPath, CounterRng, ResidualDraws, StreamTag};
use crate::path::SolutionPath;
use crate::spectral::{SpectralOperator, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight `M` of the `X₀` part of the iteration norm.
    pub m_weight: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            m_weight: 0.0,
        }
    }
}

/// How each window is solved. Both produce the same discrete fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveMethod {
    Picard(PicardOptions),
    Forward,
}

pub(crate) fn constant_operator(spec: &ProblemSpec) -> Result<SpectralOperator> {
    if spec.family.is_constant() {
        Ok(spec.family.base().clone())
    } else {
        Err(Error::InvalidScenario(
            "time-dependent operator: use freeze_timedep_solve".into(),
        ))
    }
}

pub(crate) fn draws_for(op: &SpectralOperator, path: &BrownianPath) -> ResidualDraws {
    let complex: Vec<bool> = op.shifted().iter().map(|m| m.im != 0.0).collect();
    ResidualDraws::generate(path, &complex)
}

/// Solves one window with the chosen method; returns states on `[j0, j1]`.
pub(crate) fn solve_window(
    engine: &Engine<'_>,
    j0: usize,
    j1: usize,
    start: StateVector,
    method: SolveMethod,
    piece: usize,
) -> Result<(Vec<StateVector>, usize, Vec<f64>)> {
    match method {
        SolveMethod::Forward => Ok((engine.forward(j0, j1, start), 0, Vec::new())),
        SolveMethod::Picard(opts) => {
            let w = picard_window(engine, j0, j1, &start, None, opts.tol, opts.max_iter, opts.m_weight);
            if !w.converged {
                let r = ratios(&w.increments);
                return Err(Error::NoConvergence {
                    iterations: w.iterations,
                    last_ratio: r.last().copied().unwrap_or(f64::NAN),
                    piece: Some(piece),
                });
            }
            let r = ratios(&w.increments);
            Ok((w.states, w.iterations, r))
        }
    }
}

/// Picard iteration on the whole horizon `[0, T]`.
pub fn picard_solve(spec: &ProblemSpec, path: &BrownianPath, opts: PicardOptions) -> Result<SolutionPath> {
    picard_solve_from(spec, path, opts, None)
}

/// Picard iteration from an explicit initial trajectory.
pub fn picard_solve_from(
    spec: &ProblemSpec,
    path: &BrownianPath,
    opts: PicardOptions,
    guess: Option<Vec<StateVector>>,
) -> Result<SolutionPath> {
    let op = constant_operator(spec)?;
    let draws = draws_for(&op, path);
    let engine = Engine::new(spec, op, path, &draws)?;
    let n = path.grid().n_steps();
    if let Some(g) = &guess {
        if g.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: g.len(),
            });
        }
    }
    let w = picard_window(&engine, 0, n, &spec.u0, guess, opts.tol, opts.max_iter, opts.m_weight);
    let r = ratios(&w.increments);
    if !w.converged {
        return Err(Error::NoConvergence {
            iterations: w.iterations,
            last_ratio: r.last().copied().unwrap_or(f64::NAN),
            piece: None,
        });
    }
    let mut sol = SolutionPath::new(*path.grid(), w.states);
    sol.flags.converged = true;
    sol.flags.iterations = w.iterations;
    sol.flags.contraction_ratios = r;
    sol.flags.picard_increments = w.increments;
    sol.flags.kappa_partition = vec![0, n];
    Ok(sol)
}

/// Forward exponential-integrator recursion on `[0, T]`.
pub fn forward_solve(spec: &ProblemSpec, path: &BrownianPath) -> Result<SolutionPath> {
    glue_solve(spec, path, &[0, path.grid().n_steps()], SolveMethod::Forward)
}

/// Grid index `j ≥ 1` such that pieces of `j` steps keep the lower-order
/// part of the map below half the margin, from the surrogate
/// `c̃(t) = sup ‖L(φ₁) − L(φ₂)‖_{L^p(0,t;X₀)} / |||φ₁ − φ₂|||_{(0,t)}`
/// over random probe pairs. Returns `N` when no split is needed.
pub fn split_horizon(spec: &ProblemSpec, path: &BrownianPath, margin: &Margin, probes: usize, seed: u64) -> Result<usize> {
    let n = path.grid().n_steps();
    if margin.m_weight == 0.0 || probes == 0 {
        return Ok(n);
    }
    let op = constant_operator(spec)?;
    let draws = draws_for(&op, path);
    let engine = Engine::new(spec, op.clone(), path, &draws)?;
    let p = spec.p;
    let dt = path.grid().dt();
    let rng = CounterRng::new(seed);
    let probe_path = |pair: u64, which: u64| -> Vec<StateVector> {
        (0..=n)
            .map(|s| {
                let coeffs = (0..op.len())
                    .map(|k| {
                        let addr = (s * op.len() + k) as u64;
                        let z = rng.normal(2 * pair + which, 0, StreamTag::Validation, addr);
                        Complex64::new(z / op.mu(k).norm(), 0.0)
                    })
                    .collect();
                StateVector::from_vec_unchecked(coeffs)
            })
            .collect()
    };
    // c̃(t_j) for j = 1..=N as running maxima over probes.
    let mut ctilde = vec![0.0f64; n + 1];
    for pair in 0..probes as u64 {
        let a = probe_path(pair, 0);
        let b = probe_path(pair, 1);
        let la = engine.apply_map(0, &spec.u0, &a);
        let lb = engine.apply_map(0, &spec.u0, &b);
        let (mut num, mut s1, mut s0) = (0.0, 0.0, 0.0);
        for j in 1..=n {
            num += la[j].sub(&lb[j]).norm().powf(p);
            let d = a[j - 1].sub(&b[j - 1]);
            s1 += op.norm_x1(&d).powf(p);
            s0 += d.norm().powf(p);
            let den = (dt * s1).powf(1.0 / p) + margin.m_weight * (dt * s0).powf(1.0 / p);
            if den > 0.0 {
                ctilde[j] = ctilde[j].max((dt * num).powf(1.0 / p) / den);
            }
        }
    }
    let target = 0.5 * margin.theta;
    let crosses = |j: usize| margin.m_weight * ctilde[j] >= target;
    if !crosses(n) {
        return Ok(n);
    }
    let (mut lo, mut hi) = (1usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if crosses(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo.saturating_sub(1).max(1))
}

/// Grid partition with pieces of `piece_steps` steps.
pub fn uniform_partition(n_steps: usize, piece_steps: usize) -> Vec<usize> {
    let step = piece_steps.clamp(1, n_steps.max(1));
    let mut out: Vec<usize> = (0..n_steps).step_by(step).collect();
    out.push(n_steps);
    out
}

/// Solves consecutive windows, restarting each from the previous endpoint.
pub fn glue_solve(spec: &ProblemSpec, path: &BrownianPath, partition: &[usize], method: SolveMethod) -> Result<SolutionPath> {
    let op = constant_operator(spec)?;
    let draws = draws_for(&op, path);
    let engine = Engine::new(spec, op, path, &draws)?;
    check_partition(partition, path.grid().n_steps())?;
    glue_with(&engine, spec.u0.clone(), partition, method, path)
}

pub(crate) fn glue_with(
    engine: &Engine<'_>,
    start: StateVector,
    partition: &[usize],
    method: SolveMethod,
    path: &BrownianPath,
) -> Result<SolutionPath> {
    let mut states = vec![start];
    let mut iterations = 0;
    let mut all_ratios = Vec::new();
    for (piece, w) in partition.windows(2).enumerate() {
        let start = states.last().expect("partition starts with a state").clone();
        let (window, it, r) = solve_window(engine, w[0], w[1], start, method, piece)?;
        states.extend(window.into_iter().skip(1));
        iterations = iterations.max(it);
        all_ratios.extend(r);
    }
    let mut sol = SolutionPath::new(*path.grid(), states);
    sol.flags.converged = true;
    sol.flags.iterations = iterations;
    sol.flags.contraction_ratios = all_ratios;
    sol.flags.kappa_partition = partition.to_vec();
    Ok(sol)
}

pub(crate) fn check_partition(partition: &[usize], n: usize) -> Result<()> {
    let ok = partition.len() >= 2
        && partition[0] == 0
        && partition[partition.len() - 1] == n
        && partition.windows(2).all(|w| w[1] > w[0]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "partition",
            value: partition.len() as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::noise::{sample_path, NoiseOperator, TimeGrid};
    use crate::solver::problem::{contraction_margin, FnDiffusion, FnDrift, LipschitzConstants, OperatorFamily};
    use crate::spectral::Basis;

    fn op() -> SpectralOperator {
        SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 8, 0.0).unwrap()
    }

    fn u0(len: usize) -> StateVector {
        StateVector::from_real(&(1..=len).map(|k| 1.0 / (k * k) as f64).collect::<Vec<_>>())
    }

    /// `F(x) = a·tanh`-like bounded Lipschitz map, `B(x) = b·x` on one noise component.
    fn nonlinear_spec(a: f64, b: f64) -> ProblemSpec {
        let o = op();
        let len = o.len();
        let drift = FnDrift::new(
            move |_, x: &StateVector| {
                StateVector::from_vec_unchecked(x.coeffs().iter().map(|c| Complex64::new(a * c.re.sin(), 0.0)).collect())
            },
            LipschitzConstants { l: 0.0, l_tilde: a, growth: a },
        );
        let oo = o.clone();
        let diff = FnDiffusion::new(
            move |_, x: &StateVector| {
                let col = oo.frac_power_apply(0.5, x).unwrap().scale(b);
                NoiseOperator::from_columns(&[col]).unwrap()
            },
            1,
            LipschitzConstants { l: b, l_tilde: 0.0, growth: b },
        );
        ProblemSpec::new(OperatorFamily::Constant(o), u0(len), 1.0, 2.0)
            .with_drift(Arc::new(drift))
            .with_diffusion(Arc::new(diff))
    }

    #[test]
    fn linear_problem_converges_in_one_iteration() {
        let o = op();
        let spec = ProblemSpec::new(OperatorFamily::Constant(o.clone()), u0(8), 1.0, 2.0);
        let path = BrownianPath::zero(TimeGrid::new(1.0, 64).unwrap(), 1);
        let sol = picard_solve(&spec, &path, PicardOptions::default()).unwrap();
        assert_eq!(sol.flags.iterations, 1);
        let exact = o.semigroup_apply(1.0, &spec.u0).unwrap();
        assert!(sol.final_state().sub(&exact).norm() < 1e-14);
    }

    #[test]
    fn picard_fixed_point_is_forward_recursion() {
        let spec = nonlinear_spec(0.5, 0.5);
        let path = sample_path(3, 0, TimeGrid::new(1.0, 128).unwrap(), 1);
        let opts = PicardOptions { tol: 1e-13, ..Default::default() };
        let a = picard_solve(&spec, &path, opts).unwrap();
        let b = forward_solve(&spec, &path).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
        assert!(a.flags.contraction_ratios.iter().all(|r| *r < 1.0));
    }

    #[test]
    fn uniqueness_from_different_starts() {
        let spec = nonlinear_spec(0.5, 0.5);
        let path = sample_path(5, 0, TimeGrid::new(1.0, 64).unwrap(), 1);
        let tol = 1e-12;
        let opts = PicardOptions { tol, ..Default::default() };
        let a = picard_solve(&spec, &path, opts).unwrap();
        let zeros = vec![StateVector::zeros(8); 65];
        let b = picard_solve_from(&spec, &path, opts, Some(zeros)).unwrap();
        let scale = a.states.iter().map(StateVector::norm).fold(0.0, f64::max);
        assert!(a.max_abs_diff(&b) <= 10.0 * tol * scale.max(1.0));
    }

    #[test]
    fn glued_matches_unsplit() {
        let spec = nonlinear_spec(0.8, 0.3);
        let path = sample_path(9, 1, TimeGrid::new(1.0, 128).unwrap(), 1);
        let opts = SolveMethod::Picard(PicardOptions { tol: 1e-13, ..Default::default() });
        let one = glue_solve(&spec, &path, &[0, 128], opts).unwrap();
        let two = glue_solve(&spec, &path, &[0, 64, 128], opts).unwrap();
        assert!(one.max_abs_diff(&two) < 1e-8);
    }

    #[test]
    fn split_horizon_shrinks_with_lower_order_constant() {
        let path = sample_path(1, 0, TimeGrid::new(1.0, 64).unwrap(), 1);
        let kd = 0.5f64.sqrt();
        let mut pieces = Vec::new();
        for a in [0.5, 4.0, 32.0] {
            let spec = nonlinear_spec(a, 0.5);
            let m = contraction_margin(spec.drift_constants(), spec.diffusion_constants(), 1.0, kd).unwrap();
            pieces.push(split_horizon(&spec, &path, &m, 4, 7).unwrap());
        }
        assert!(pieces.windows(2).all(|w| w[1] <= w[0]), "{pieces:?}");
        assert!(pieces[2] < 64);
    }

    #[test]
    fn bad_partition_rejected() {
        let spec = nonlinear_spec(0.5, 0.5);
        let path = sample_path(1, 0, TimeGrid::new(1.0, 8).unwrap(), 1);
        assert!(glue_solve(&spec, &path, &[0, 4], SolveMethod::Forward).is_err());
        assert!(glue_solve(&spec, &path, &[0, 4, 4, 8], SolveMethod::Forward).is_err());
    }

    #[test]
    fn divergent_picard_reports() {
        // K* L_F > 1: iteration on a long window does not settle.
        let o = op();
        let c = 3.0;
        let oo = o.clone();
        let drift = FnDrift::new(
            move |_, x: &StateVector| oo.frac_power_apply(1.0, x).unwrap().scale(c),
            LipschitzConstants { l: c, l_tilde: 0.0, growth: c },
        );
        let spec = ProblemSpec::new(OperatorFamily::Constant(o), u0(8), 1.0, 2.0).with_drift(Arc::new(drift));
        let path = BrownianPath::zero(TimeGrid::new(1.0, 64).unwrap(), 1);
        let err = picard_solve(&spec, &path, PicardOptions { max_iter: 20, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 20, .. }));
    }
}
