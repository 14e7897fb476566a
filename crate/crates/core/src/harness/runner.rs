use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::build::build_problem;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::maxreg::{
    deterministic_probes, estimate_kdiamond, estimate_kstar, stochastic_probes, ConstantsEstimate,
};
use crate::noise::{sample_path, BrownianPath, TimeGrid};
use crate::path::SolutionPath;
use crate::regularity::{trace_continuity_report, Provenance};
use crate::solver::{
    contraction_margin, freeze_timedep_solve, glue_solve, local_solve, split_horizon, uniform_partition, Margin, ProblemSpec,
    SolveMethod,
};
use crate::spectral::{SpectralOperator, TraceNorm};
use crate::stats::{bootstrap_se, compensated_sum, median};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest number of time rows per path in `norms.csv`.
pub const NORM_ROWS_PER_PATH: usize = 256;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub constants: bool,
    pub kdiamond_paths: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            n_paths: None,
            seed: None,
            threads: 1,
            constants: false,
            kdiamond_paths: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PathSummary {
    pub path: u64,
    pub iterations: usize,
    pub max_ratio: f64,
    pub stopping_time: Option<f64>,
    pub lp_x1: f64,
    pub lp_x0: f64,
    pub trace_sup: f64,
    pub continuity_modulus: f64,
    pub holder: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Moment {
    pub name: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityAggregate {
    /// `(θ, median exponent in X_{1−θ})`
    pub holder_median: Vec<(f64, f64)>,
    pub trace_sup_max: f64,
    pub continuity_modulus_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub n_paths: usize,
    pub threads: usize,
    pub margin: Option<Margin>,
    /// Empirical κ as a number of grid steps.
    pub kappa_steps: usize,
    pub paths: Vec<PathSummary>,
    pub moments: Vec<Moment>,
    pub constants: Vec<ConstantsEstimate>,
    pub regularity: RegularityAggregate,
    pub norms_stride: usize,
    pub partial: bool,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
    pub timestamp: u64,
}

/// Outcome of one path before summarizing.
pub struct PathRun {
    pub index: u64,
    pub solution: SolutionPath,
}

/// Contraction margin with sharp Hilbert constants at `p = 2` for
/// self-adjoint operators and quick estimates otherwise.
pub fn scenario_margin(spec: &ProblemSpec, scenario: &Scenario) -> Result<Option<Margin>> {
    let (f, b) = (spec.drift_constants(), spec.diffusion_constants());
    if f.l == 0.0 && b.l == 0.0 && f.l_tilde == 0.0 && b.l_tilde == 0.0 {
        return Ok(None);
    }
    let op = spec.family.base();
    let (kstar, kdiamond) = if (scenario.p - 2.0).abs() < 1e-15 && op.is_self_adjoint() {
        (1.0, std::f64::consts::FRAC_1_SQRT_2)
    } else if f.l == 0.0 && b.l == 0.0 {
        (1.0, 1.0)
    } else {
        let grid = TimeGrid::new(scenario.horizon, scenario.n_steps.min(256))?;
        let ks = estimate_kstar(op, scenario.p, &deterministic_probes(op, grid, 4, scenario.seed), grid)?;
        let kd = estimate_kdiamond(op, scenario.p, &stochastic_probes(op, grid, 2, scenario.seed), 500, scenario.seed, grid)?;
        (ks.value, kd.value)
    };
    contraction_margin(f, b, kstar, kdiamond).map(Some)
}

/// Solves one path with the procedure the scenario calls for.
pub fn solve_path(spec: &ProblemSpec, scenario: &Scenario, margin: Option<&Margin>, path: &BrownianPath, kappa_steps: usize) -> Result<SolutionPath> {
    let n = path.grid().n_steps();
    let cfg = &scenario.solver;
    if spec.has_local_parts() {
        return local_solve(spec, path, cfg.n_max.unwrap_or(f64::INFINITY).max(1.0));
    }
    if !spec.family.is_constant() {
        let theta = margin.map_or(1.0, |m| m.theta);
        return freeze_timedep_solve(spec, path, theta, cfg.freeze, cfg.method);
    }
    let partition = if kappa_steps < n {
        uniform_partition(n, kappa_steps)
    } else {
        vec![0, n]
    };
    let method = match (cfg.method, margin) {
        (SolveMethod::Picard(mut o), Some(m)) if o.m_weight == 0.0 => {
            o.m_weight = m.m_weight;
            SolveMethod::Picard(o)
        }
        (method, _) => method,
    };
    glue_solve(spec, path, &partition, method)
}

fn empirical_kappa(spec: &ProblemSpec, scenario: &Scenario, margin: Option<&Margin>, grid: TimeGrid, seed: u64) -> Result<usize> {
    match margin {
        Some(m) if scenario.solver.split && spec.family.is_constant() && !spec.has_local_parts() => {
            let path = sample_path(seed, 0, grid, spec.noise_dim);
            split_horizon(spec, &path, m, 4, seed)
        }
        _ => Ok(grid.n_steps()),
    }
}

fn summarize(run: &PathRun, op: &SpectralOperator, p: f64, thetas: &[f64]) -> Result<PathSummary> {
    let sol = &run.solution;
    let end = sol.states.len().saturating_sub(1).max(1);
    let rep = trace_continuity_report(sol, op, p, thetas)?;
    Ok(PathSummary {
        path: run.index,
        iterations: sol.flags.iterations,
        max_ratio: sol.flags.contraction_ratios.iter().copied().fold(0.0, f64::max),
        stopping_time: sol.flags.stopping_time,
        lp_x1: sol.lp_norm(op, 1.0, p, 0..end),
        lp_x0: sol.lp_norm(op, 0.0, p, 0..end),
        trace_sup: rep.trace_sup,
        continuity_modulus: rep.continuity_modulus,
        holder: rep.holder_table,
    })
}

/// Hölder rows reported for a given `p`: `θ` inside `(1/p, 1/2)`.
pub fn holder_thetas(p: f64) -> Vec<f64> {
    [0.3, 0.4, 0.45].into_iter().filter(|&t| t > 1.0 / p && t < 0.5).collect()
}

/// Solves all paths of a scenario on a dedicated pool of `threads` threads.
pub fn ensemble_run(scenario: &Scenario, n_paths: usize, seed: u64, threads: usize) -> Result<(ProblemSpec, Option<Margin>, usize, Vec<PathRun>)> {
    let spec = build_problem(scenario)?;
    let margin = scenario_margin(&spec, scenario)?;
    let grid = TimeGrid::new(scenario.horizon, scenario.n_steps)?;
    let kappa = empirical_kappa(&spec, scenario, margin.as_ref(), grid, seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let runs: Vec<Result<PathRun>> = pool.install(|| {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let path = sample_path(seed, i, grid, spec.noise_dim);
                solve_path(&spec, scenario, margin.as_ref(), &path, kappa)
                    .map(|solution| PathRun { index: i, solution })
                    .map_err(|e| Error::Path { path: i, source: Box::new(e) })
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((spec, margin, kappa, runs))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// `K*_p` and `K◇_p` for the scenario operator with the configured probe counts.
pub fn estimate_constants(
    scenario: &Scenario,
    op: &SpectralOperator,
    seed: u64,
    kdiamond_paths: Option<usize>,
    threads: usize,
) -> Result<Vec<ConstantsEstimate>> {
    let grid = TimeGrid::new(scenario.horizon, scenario.n_steps)?;
    let probes = scenario.constants.random_probes;
    let kstar = estimate_kstar(op, scenario.p, &deterministic_probes(op, grid, probes, seed), grid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let stoch = stochastic_probes(op, grid, probes, seed);
    let n_paths = kdiamond_paths.unwrap_or(scenario.constants.kdiamond_paths);
    let kdiamond = pool.install(|| estimate_kdiamond(op, scenario.p, &stoch, n_paths, seed, grid))?;
    Ok(vec![kstar, kdiamond])
}

pub fn write_constants_csv(constants: &[ConstantsEstimate], provenance: &Provenance, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "p", "value", "stderr", "probe", "notes"])?;
    for c in constants {
        w.write_record([
            c.kind.label().to_owned(),
            fmt(c.p),
            fmt(c.value),
            fmt(c.standard_error),
            c.best_probe.clone(),
            format!(
                "shift={};probes={};samples={};tail={};hash={};seed={}",
                fmt(c.shift),
                c.probe_count,
                c.sample_count,
                fmt(c.tail),
                provenance.scenario_hash,
                provenance.seed
            ),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn provenance(scenario: &Scenario, seed: u64) -> Provenance {
    Provenance {
        scenario_id: scenario.id.clone(),
        scenario_hash: scenario.hash(),
        seed,
        n_steps: scenario.n_steps,
        horizon: scenario.horizon,
        code_version: CODE_VERSION.to_owned(),
    }
}

/// Solves the ensemble and writes `report.json`, `norms.csv` and `constants.csv`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path, opts: &RunOptions) -> Result<RunReport> {
    let started = std::time::Instant::now();
    fs::create_dir_all(out_dir)?;
    let n_paths = opts.n_paths.unwrap_or(scenario.n_paths);
    let seed = opts.seed.unwrap_or(scenario.seed);
    let provenance = provenance(scenario, seed);
    let outcome = ensemble_run(scenario, n_paths, seed, opts.threads);
    let (spec, margin, kappa, runs) = match outcome {
        Ok(v) => v,
        Err(e) => {
            let partial = serde_json::json!({
                "provenance": provenance,
                "partial": true,
                "error": e.to_string(),
            });
            fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&partial)?)?;
            return Err(e);
        }
    };
    let op = spec.family.base().clone();
    let p = scenario.p;
    let trace = TraceNorm::new(&op, 1.0 - 1.0 / p, p, Default::default())?;
    let thetas = holder_thetas(p);
    let summaries = runs
        .iter()
        .map(|r| summarize(r, &op, p, &thetas))
        .collect::<Result<Vec<_>>>()?;

    // norms.csv
    let stride = scenario.n_steps.div_ceil(NORM_ROWS_PER_PATH).max(1);
    let mut w = csv::Writer::from_path(out_dir.join("norms.csv"))?;
    w.write_record(["path", "t", "normX0", "normX1", "normTrace"])?;
    for r in &runs {
        let sol = &r.solution;
        let last = sol.states.len() - 1;
        for (j, u) in sol.states.iter().enumerate() {
            if j % stride != 0 && j != last {
                continue;
            }
            w.write_record([
                r.index.to_string(),
                fmt(sol.grid.time(j)),
                fmt(u.norm()),
                fmt(op.norm_x1(u)),
                fmt(trace.norm(u)),
            ])?;
        }
    }
    w.flush()?;

    // Moments with bootstrap standard errors.
    let u0_trace = trace.norm(&spec.u0);
    let bound = (1.0 + u0_trace).powf(p);
    let series: [(&str, Vec<f64>); 3] = [
        ("E|U|^p_Lp(X1)", summaries.iter().map(|s| s.lp_x1.powf(p)).collect()),
        ("E sup|U|^p_trace", summaries.iter().map(|s| s.trace_sup.powf(p)).collect()),
        ("E|U|^p_Lp(X1)/(1+|u0|_trace)^p", summaries.iter().map(|s| s.lp_x1.powf(p) / bound).collect()),
    ];
    let moments = series
        .into_iter()
        .map(|(name, v)| Moment {
            name: name.to_owned(),
            mean: compensated_sum(v.iter().copied()) / v.len() as f64,
            stderr: bootstrap_se(&v, 200, seed),
        })
        .collect();

    let constants = if opts.constants {
        estimate_constants(scenario, &op, seed, opts.kdiamond_paths, opts.threads)?
    } else {
        Vec::new()
    };
    write_constants_csv(&constants, &provenance, &out_dir.join("constants.csv"))?;

    let holder_median = thetas
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let v: Vec<f64> = summaries.iter().filter_map(|s| s.holder.get(i).map(|h| h.1)).collect();
            (t, median(&v))
        })
        .collect();
    let regularity = RegularityAggregate {
        holder_median,
        trace_sup_max: summaries.iter().map(|s| s.trace_sup).fold(0.0, f64::max),
        continuity_modulus_max: summaries.iter().map(|s| s.continuity_modulus).fold(0.0, f64::max),
    };
    let report = RunReport {
        provenance,
        n_paths,
        threads: opts.threads,
        margin,
        kappa_steps: kappa,
        paths: summaries,
        moments,
        constants,
        regularity,
        norms_stride: stride,
        partial: false,
        error: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scenario_norms_match_semigroup() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::builtin("zero").unwrap();
        let report = run_scenario(&s, dir.path(), &RunOptions::default()).unwrap();
        assert_eq!(report.n_paths, 2);
        let spec = build_problem(&s).unwrap();
        let op = spec.family.base();
        let mut rdr = csv::Reader::from_path(dir.path().join("norms.csv")).unwrap();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let t: f64 = rec[1].parse().unwrap();
            let x0: f64 = rec[2].parse().unwrap();
            let x1: f64 = rec[3].parse().unwrap();
            let exact = op.semigroup_apply(t, &spec.u0).unwrap();
            assert!((x0 - exact.norm()).abs() <= 1e-10);
            assert!((x1 - op.norm_x1(&exact)).abs() <= 1e-10 * op.norm_x1(&spec.u0).max(1.0));
            rows += 1;
        }
        assert_eq!(rows, 2 * 65);
    }

    #[test]
    fn single_path_equals_single_solve() {
        let s = Scenario::builtin("heat_torus").unwrap();
        let mut small = s.clone();
        small.n_steps = 64;
        let (spec, margin, kappa, runs) = ensemble_run(&small, 1, 5, 1).unwrap();
        let grid = TimeGrid::new(small.horizon, 64).unwrap();
        let direct = solve_path(&spec, &small, margin.as_ref(), &sample_path(5, 0, grid, spec.noise_dim), kappa).unwrap();
        assert_eq!(runs[0].solution.states, direct.states);
    }

    #[test]
    fn thread_count_does_not_change_numbers() {
        let mut s = Scenario::builtin("heat_torus").unwrap();
        s.n_steps = 64;
        let (_, _, _, a) = ensemble_run(&s, 6, 2, 1).unwrap();
        let (_, _, _, b) = ensemble_run(&s, 6, 2, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.solution.states, y.solution.states);
        }
    }

    #[test]
    fn failure_writes_partial_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Scenario::builtin("contraction").unwrap();
        s.drift[0].coeff = 1.5;
        s.declared.drift.l = 1.5;
        s.declared.drift.growth = 1.5;
        let err = run_scenario(&s, dir.path(), &RunOptions::default()).unwrap_err();
        assert!(matches!(err.root(), Error::SmallnessViolated(_)));
        let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(text.contains("\"partial\": true"));
    }
}
