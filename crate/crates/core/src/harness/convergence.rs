use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::build::build_problem;
use super::runner::{scenario_margin, solve_path};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::noise::{sample_path, TimeGrid};
use crate::stats::compensated_sum;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub modes: usize,
    /// RMS over paths of `max_n ‖U_Δt(t_n) − U_ref(t_n)‖_{X₀}`.
    pub error: f64,
    /// Slope of `log error` against `log Δt` from the previous row.
    pub rate: Option<f64>,
}

/// Strong errors on dyadic grids against a reference on twice the finest grid.
/// Paths are coupled through the Brownian bridge.
pub fn convergence_study(scenario: &Scenario, grids: &[usize], n_paths: usize, seed: u64, threads: usize) -> Result<Vec<ConvergenceRow>> {
    let mut grids = grids.to_vec();
    grids.sort_unstable();
    grids.dedup();
    if grids.is_empty() || grids.iter().any(|n| !n.is_power_of_two()) {
        return Err(Error::InvalidScenario("convergence grids must be powers of two".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidParameter { name: "n_paths", value: 0.0 });
    }
    let spec = build_problem(scenario)?;
    let margin = scenario_margin(&spec, scenario)?;
    let fine = 2 * grids[grids.len() - 1];
    let fine_grid = TimeGrid::new(scenario.horizon, fine)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let per_path: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let wrap = |e| Error::Path { path: i, source: Box::new(e) };
                let reference = solve_path(&spec, scenario, margin.as_ref(), &sample_path(seed, i, fine_grid, spec.noise_dim), fine).map_err(wrap)?;
                grids
                    .iter()
                    .map(|&n| {
                        let grid = TimeGrid::new(scenario.horizon, n)?;
                        let sol = solve_path(&spec, scenario, margin.as_ref(), &sample_path(seed, i, grid, spec.noise_dim), n).map_err(wrap)?;
                        let stride = fine / n;
                        let len = sol.states.len().min(reference.states.len().div_ceil(stride));
                        Ok((0..len)
                            .map(|j| sol.states[j].sub(&reference.states[j * stride]).norm())
                            .fold(0.0, f64::max))
                    })
                    .collect()
            })
            .collect()
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(grids.len());
    for (g, &n) in grids.iter().enumerate() {
        let ms = compensated_sum(per_path.iter().map(|e| e[g] * e[g])) / n_paths as f64;
        let dt = scenario.horizon / n as f64;
        let error = ms.sqrt();
        let rate = rows.last().map(|prev| (prev.error / error).ln() / (prev.dt / dt).ln());
        rows.push(ConvergenceRow {
            dt,
            modes: spec.modes(),
            error,
            rate,
        });
    }
    Ok(rows)
}

pub fn write_convergence_csv(rows: &[ConvergenceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dt", "K", "error", "rate"])?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.dt),
            r.modes.to_string(),
            format!("{:e}", r.error),
            r.rate.map_or_else(String::new, |x| format!("{x:e}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_heat_converges_at_first_order() {
        let mut s = Scenario::builtin("dirichlet_interval").unwrap();
        s.noise.additive.clear();
        let rows = convergence_study(&s, &[32, 64, 128], 1, 1, 1).unwrap();
        assert!(rows.windows(2).all(|w| w[1].error < w[0].error));
        assert!(rows[2].rate.unwrap() > 0.8, "{rows:?}");
    }

    #[test]
    fn stochastic_rows_are_decreasing() {
        let mut s = Scenario::builtin("heat_torus").unwrap();
        s.operator.modes = 9;
        let rows = convergence_study(&s, &[64, 128, 256], 4, 3, 2).unwrap();
        assert!(rows.windows(2).all(|w| w[1].error < w[0].error), "{rows:?}");
        let dir = tempfile::tempdir().unwrap();
        write_convergence_csv(&rows, &dir.path().join("c.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn non_dyadic_grids_rejected() {
        let s = Scenario::builtin("zero").unwrap();
        assert!(convergence_study(&s, &[100], 1, 1, 1).is_err());
    }
}
