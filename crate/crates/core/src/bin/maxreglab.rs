use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use maxreglab::harness::checks::{run_all, suite_artifacts};
use maxreglab::harness::convergence::{convergence_study, write_convergence_csv, ConvergenceRow};
use maxreglab::harness::runner::{estimate_constants, provenance, run_scenario, write_constants_csv, RunOptions};
use maxreglab::harness::{build_problem, Scenario, BUILTIN_IDS};
use maxreglab::maxreg::ConstantsEstimate;
use maxreglab::regularity::Provenance;
use maxreglab::{Error, Result};

#[derive(Parser)]
#[command(name = "maxreglab", version, about = "Maximal Lp-regularity numerics for diagonal stochastic evolution equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file, or the id of a built-in scenario.
    scenario: String,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "MAXREGLAB_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate K* and K◇ for the scenario operator.
    Constants(Common),
    /// Solve the path ensemble and write norms and moments.
    Solve(Common),
    /// Solve and summarize trace-space continuity and Hölder exponents.
    Regularity(Common),
    /// Strong errors against a reference on twice the finest grid.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
    },
    /// Print a built-in scenario as JSON.
    Show { id: String },
    /// Run the acceptance suite and write its artifacts.
    Suite {
        #[arg(long, env = "MAXREGLAB_THREADS", default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.exists() {
        Scenario::load(path)
    } else if BUILTIN_IDS.contains(&spec) {
        Scenario::builtin(spec)
    } else {
        Err(Error::InvalidScenario(format!("`{spec}` is neither a file nor a built-in scenario")))
    }
}

fn options(c: &Common, constants: bool) -> RunOptions {
    RunOptions {
        n_paths: c.paths,
        seed: c.seed,
        threads: c.threads,
        constants,
        kdiamond_paths: None,
    }
}

#[derive(Serialize)]
struct ConstantsReport {
    provenance: Provenance,
    constants: Vec<ConstantsEstimate>,
}

#[derive(Serialize)]
struct ConvergenceReport {
    provenance: Provenance,
    n_paths: usize,
    rows: Vec<ConvergenceRow>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Constants(c) => {
            let s = load(&c.scenario)?;
            let seed = c.seed.unwrap_or(s.seed);
            let op = build_problem(&s)?.family.base().clone();
            fs::create_dir_all(&c.out)?;
            let constants = estimate_constants(&s, &op, seed, c.paths, c.threads)?;
            let prov = provenance(&s, seed);
            write_constants_csv(&constants, &prov, &c.out.join("constants.csv"))?;
            for e in &constants {
                println!("{} p={} value={:.6} stderr={:.2e} probe={}", e.kind.label(), e.p, e.value, e.standard_error, e.best_probe);
            }
            write_json(&c.out.join("report.json"), &ConstantsReport { provenance: prov, constants })?;
        }
        Command::Solve(c) => {
            let s = load(&c.scenario)?;
            let report = run_scenario(&s, &c.out, &options(&c, false))?;
            for m in &report.moments {
                println!("{} = {:.6e} ± {:.2e}", m.name, m.mean, m.stderr);
            }
            println!("paths {} · κ {} steps · wall {:.2} s", report.n_paths, report.kappa_steps, report.wall_clock_seconds);
        }
        Command::Regularity(c) => {
            let s = load(&c.scenario)?;
            let report = run_scenario(&s, &c.out, &options(&c, false))?;
            println!("sup trace norm (orbit quadrature) {:.6e}", report.regularity.trace_sup_max);
            println!("continuity modulus {:.6e}", report.regularity.continuity_modulus_max);
            for (theta, h) in &report.regularity.holder_median {
                println!("θ = {theta}: median Hölder exponent in X_(1−θ) {h:.4}");
            }
            write_json(&c.out.join("regularity.json"), &report.regularity)?;
        }
        Command::Converge { common: c, grids } => {
            let s = load(&c.scenario)?;
            let seed = c.seed.unwrap_or(s.seed);
            let n_paths = c.paths.unwrap_or(s.n_paths);
            fs::create_dir_all(&c.out)?;
            let rows = convergence_study(&s, &grids, n_paths, seed, c.threads)?;
            write_convergence_csv(&rows, &c.out.join("convergence.csv"))?;
            for r in &rows {
                let rate = r.rate.map_or_else(|| "-".to_owned(), |x| format!("{x:.3}"));
                println!("dt={:.3e} K={} error={:.4e} rate={rate}", r.dt, r.modes, r.error);
            }
            write_json(
                &c.out.join("report.json"),
                &ConvergenceReport {
                    provenance: provenance(&s, seed),
                    n_paths,
                    rows,
                },
            )?;
        }
        Command::Show { id } => println!("{}", Scenario::builtin(&id)?.to_json()?),
        Command::Suite { threads, out } => {
            fs::create_dir_all(&out)?;
            suite_artifacts(&out.join("artifacts"), threads)?;
            let results = run_all(&out.join("determinism"), threads);
            for r in &results {
                println!("{r}");
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::SmallnessViolated(_) => 2,
        Error::NoConvergence { .. } => 3,
        Error::InvalidScenario(_) | Error::UnknownForm(_) | Error::UnsupportedBasis(_) | Error::Json(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("maxreglab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
