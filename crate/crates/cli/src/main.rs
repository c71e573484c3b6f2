use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use starlab::config::{ConfigError, ScenarioConfig};
use starlab::exit;
use starlab::report::{emit_outputs, Format, Output, OutputError};
use starlab::suites::{run_suite, Suite};
use starlab_core::fields::{Grid, GridScalar};
use starlab_core::flow::{integrate_coupled_system, CoupledConfig, StarRicciFlow};
use starlab_core::functionals::{f_functional, omega_entropy, u_v_fields, EntropyContext, F_INTEGRAND_CONSTANT};
use starlab_core::StarError;

#[derive(Parser)]
#[command(name = "starlab", version, about = "*-Ricci flow scenario runner and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and write its report.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        config: PathBuf,
        /// Report path (`.csv` for CSV, otherwise JSON); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Integrate the coupled system and write its time series.
    Flow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate F or ω at t = 0.
    Functional {
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    #[value(name = "F")]
    F,
    #[value(name = "omega")]
    Omega,
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<StarError> for Failure {
    fn from(e: StarError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn grid_for(cfg: &ScenarioConfig) -> Result<(starlab::config::ResolvedScenario, Grid), Failure> {
    let sc = cfg.resolve()?;
    let grid = Grid::new(&sc.domain, cfg.domain.n)?;
    Ok((sc, grid))
}

/// Fails before any computation when the output would be clobbered.
fn refuse_existing(path: Option<&Path>, force: bool) -> Result<(), Failure> {
    match path {
        Some(p) if p.exists() && !force => Err(OutputError::RefusedOverwrite(p.to_path_buf()).into()),
        _ => Ok(()),
    }
}

fn verify(suite: Suite, config: &Path, out: Option<&Path>, force: bool) -> Result<i32, Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let target = out.or(cfg.output.report.as_deref());
    refuse_existing(target, force)?;
    let report = run_suite(&cfg, suite)?;
    match target {
        Some(path) => emit_outputs(Output::Report(&report), Format::from_path(path), path, force)?,
        None => print!("{}", report.to_json()?),
    }
    for row in report.rows.iter().filter(|r| r.status == starlab::Status::Fail) {
        eprintln!("FAIL {} [{}]: rel_err {:e} > {:e} {}", row.check_id, row.scenario_id, row.rel_err, row.tolerance, row.note);
    }
    Ok(if report.passed() { exit::PASS } else { exit::CHECK_FAILURE })
}

fn flow(config: &Path, out: Option<&Path>, force: bool) -> Result<i32, Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let path = out
        .or(cfg.output.series.as_deref())
        .ok_or_else(|| Failure::Config(ConfigError::Invalid("no series path: pass --out or set output.series".into())))?;
    refuse_existing(Some(path), force)?;
    let (sc, grid) = grid_for(&cfg)?;
    let g0 = sc.metric.to_grid(&grid, 0.0)?;
    let flow = StarRicciFlow::new(&sc.phi, &grid)?;
    let f = sc.f.to_expr();
    let t_final = cfg.flow.t_final;
    let f_final = GridScalar::sample(&grid, |x| f.value(x, t_final));
    let cc = CoupledConfig {
        tau0: cfg.flow.tau0,
        horizon: t_final,
        dt: cfg.flow.dt,
        normalize: Some(cfg.u_convention),
        ..CoupledConfig::default()
    };
    let traj = integrate_coupled_system(&flow, &g0, &f_final, &cc)?;
    emit_outputs(Output::Trajectory(&traj, cfg.u_convention), Format::Csv, path, force)?;
    Ok(exit::PASS)
}

fn functional(which: Which, config: &Path) -> Result<i32, Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let (sc, grid) = grid_for(&cfg)?;
    let g = sc.metric.to_grid(&grid, 0.0)?;
    let f_expr = sc.f.to_expr();
    let f = GridScalar::sample(&grid, |x| f_expr.value(x, 0.0));
    let value = match which {
        Which::F => json!({ "functional": "F", "value": f_functional(&g, &f, F_INTEGRAND_CONSTANT)? }),
        Which::Omega => {
            let flow = StarRicciFlow::new(&sc.phi, &grid)?;
            let star = flow.star(&g)?;
            let ctx = EntropyContext::new(cfg.flow.tau0, cfg.u_convention, grid.dim())?;
            let shift = u_v_fields(&g, &f, &star, &ctx)?.shift;
            let shifted = GridScalar::new(&grid, f.data.iter().map(|v| v + shift).collect())?;
            json!({
                "functional": "omega",
                "tau": cfg.flow.tau0,
                "f_shift": shift,
                "value": omega_entropy(&g, &shifted, &star, &ctx)?,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&value).map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(exit::PASS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = starlab::thread_cap() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(exit::RUNTIME_ERROR as u8);
        }
    }
    let result = match &cli.command {
        Command::Verify { suite, config, out, force } => verify(*suite, config, out.as_deref(), *force),
        Command::Flow { config, out, force } => flow(config, out.as_deref(), *force),
        Command::Functional { which, config } => functional(*which, config),
    };
    let code = match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            exit::CONFIG_ERROR
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            exit::RUNTIME_ERROR
        }
    };
    ExitCode::from(code as u8)
}
