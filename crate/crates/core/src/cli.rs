//! `gldmfg` command line: parse config, solve, write CSV.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ConfigError, RunConfig};
use crate::error::Error;
use crate::experiments::{convergence_study, delta_sweep, scenario_sweep, Scenario};
use crate::output;
use crate::utility::{regularity_constant, UtilityModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
/// Any other solver or I/O failure.
pub const EXIT_FAILURE: i32 = 3;

/// Environment variable overriding the output directory (below `--out`).
pub const OUT_DIR_ENV: &str = "GLDMFG_OUT";

#[derive(Debug, Parser)]
#[command(name = "gldmfg", version, about = "Generalized logit dynamics and mean field games")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; defaults to the fishing scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Keep every N-th time level in trajectory files.
    #[arg(long, global = true)]
    stride: Option<usize>,

    /// Abort instead of warning when a time-step guarantee is missing.
    #[arg(long, global = true, value_name = "BOOL")]
    strict_cfl: Option<bool>,

    /// Suppress all non-error output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the logit dynamic to its stationary state.
    Gld,
    /// Solve the mean field game.
    Mfg,
    /// Grid-convergence table against a fine reference.
    Convergence,
    /// Distance between the GLD stationary state and MFG turnpike over discounts.
    DeltaSweep,
    /// Batch runs over masses or indicator smoothing.
    ScenarioSweep,
}

enum Failure {
    Config(String),
    Solver(Error),
    Io(std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Solver(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// Runs the CLI and returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .try_init();

    match run(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                print!("{summary}");
                let _ = std::io::stdout().flush();
            }
            EXIT_OK
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Solver(e @ Error::NotConverged { .. })) => {
            eprintln!("error: {e}");
            EXIT_NOT_CONVERGED
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
        Err(Failure::Io(e)) => {
            eprintln!("io error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load(cli: &Cli) -> Result<(RunConfig, Scenario), Failure> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::defaults(crate::config::ScenarioKind::Fishing),
    };
    if let Some(dir) = &cli.out {
        config.output.dir = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        config.output.dir = PathBuf::from(dir);
    }
    if let Some(stride) = cli.stride {
        if stride == 0 {
            return Err(Failure::Config("--stride must be positive".into()));
        }
        config.output.stride = stride;
    }
    if let Some(strict) = cli.strict_cfl {
        config.solver_options.strict_cfl = Some(strict);
    }
    let scenario = config
        .to_scenario()
        .map_err(|e| Failure::Config(e.to_string()))?;
    Ok((config, scenario))
}

fn cfl_lines(scenario: &Scenario, model: &dyn UtilityModel, strict: bool) -> String {
    let limits = crate::mfg::cfl_limits(model, &scenario.params, scenario.delta);
    let dt = scenario.horizon / scenario.n_t as f64;
    format!(
        "dt: {dt}\ndt_hjb bound: {}\ndt_fp bound: {}\nkernel domain guarantee: {} (regularity constant {})\nstrict cfl: {strict}\n",
        limits.dt_hjb,
        limits
            .dt_fp
            .map_or_else(|| "none".to_string(), |b| b.to_string()),
        if limits.assumption2_ok { "holds" } else { "violated" },
        regularity_constant(model),
    )
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let (config, scenario) = load(cli)?;
    let dir = config.output.dir.clone();
    let start = Instant::now();
    let mut s = String::new();
    match cli.command {
        Command::Gld => {
            let grid = scenario.grid()?;
            let gcfg = scenario.gld_config(grid)?;
            let strict = gcfg.strict_cfl;
            let sol = scenario.run_gld_on(grid, Some(config.output.stride))?;
            let files = output::write_gld(&dir, &grid, &sol)?;
            s += &format!("gld {} n_x={} n_t={}\n", scenario.model.name(), grid.n_x(), grid.n_t());
            s += &format!("steps: {}\nresidual: {:e}\n", sol.steps, sol.residual);
            s += &format!("max mass defect: {:e}\n", sol.max_mass_defect);
            s += &cfl_lines(&scenario, gcfg.model.as_ref(), strict);
            s += &format!("files: {}\n", files.len());
        }
        Command::Mfg => {
            let grid = scenario.grid()?;
            let mcfg = scenario.mfg_config(grid)?;
            let strict = mcfg.strict_cfl;
            let sol = scenario.run_mfg_on(grid)?;
            let files = output::write_mfg(&dir, &grid, &sol, config.output.stride)?;
            s += &format!(
                "mfg {} n_x={} n_t={} delta={}\n",
                scenario.model.name(),
                grid.n_x(),
                grid.n_t(),
                scenario.delta
            );
            s += &format!(
                "iterations: {}\nresidual: {:e}\n",
                sol.log.iterations,
                sol.log.residuals.last().copied().unwrap_or(f64::NAN)
            );
            if let Some(slope) = sol.log.log10_slope() {
                s += &format!("log10 residual slope: {slope}\n");
            }
            s += &format!("max mass defect: {:e}\n", sol.density.max_mass_defect(&mcfg.pops));
            s += &cfl_lines(&scenario, mcfg.model.as_ref(), strict);
            s += &format!("files: {}\n", files.len());
        }
        Command::Convergence => {
            let target = config.experiment_target();
            let report = convergence_study(&scenario, target, &config.convergence_plan())?;
            output::write_convergence(&dir, &report)?;
            s += &format!("convergence {target} reference n_x={}\n", report.reference_n_x);
            for r in &report.rows {
                s += &format!(
                    "m={:<4} {:<5} max {:.3e} avg {:.3e}\n",
                    r.m, r.quantity, r.max_err, r.avg_err
                );
            }
        }
        Command::DeltaSweep => {
            let report = delta_sweep(&scenario, &config.experiment.deltas, config.experiment.eta)?;
            output::write_delta_sweep(&dir, &report)?;
            s += "delta sweep\n";
            for r in &report.rows {
                let d: Vec<String> = r.dist.iter().map(|v| format!("{v:.3e}")).collect();
                s += &format!("delta={:<6} dist {} ({} iterations)\n", r.delta, d.join(" "), r.iterations);
            }
            match report.slope() {
                Some(v) => s += &format!("slope: {v}\n"),
                None => s += "slope: undefined\n",
            }
        }
        Command::ScenarioSweep => {
            let target = config.experiment_target();
            let report = scenario_sweep(&scenario, target, &config.sweep())?;
            output::write_scenario_sweep(&dir, &report)?;
            s += &format!("scenario sweep {target}: {} runs\n", report.entries.len());
            for r in &report.swap_ratios {
                s += &format!(
                    "swap ratio m1={} vs {}: mean {:.4} (min {:.4}, max {:.4})\n",
                    r.m1, r.swapped_m1, r.stats.mean, r.stats.min, r.stats.max
                );
            }
        }
    }
    s += &format!("output: {}\nwall time: {:.3} s\n", dir.display(), start.elapsed().as_secs_f64());
    Ok(s)
}
