use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hopper_core::behavior::BehaviorKind;
use hopper_core::config::{Config, DtSetting};
use hopper_harness::error::HarnessError;
use hopper_harness::heatmap::run_heatmap;
use hopper_harness::plan::ExperimentPlan;
use hopper_harness::report::{load_suite, write_reports};
use hopper_harness::runner::{execute, SuiteResult};

/// Material-property experiments on a one-legged hopper.
#[derive(Parser)]
#[command(name = "hopsim", version)]
struct Cli {
    /// Experiment config (TOML); the bundled default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory of the plan.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Concurrent runs; defaults to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Integration timestep in seconds, or `auto`.
    #[arg(long, global = true)]
    dt: Option<DtSetting>,
    /// Simulated seconds per run.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Assert that no random numbers are drawn. The simulation is fully
    /// deterministic, so this only records the assertion in plan.json.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One design on one behavior.
    Simulate {
        /// Catalog material or gradient name.
        #[arg(long)]
        material: String,
        #[arg(long, default_value = "static")]
        behavior: BehaviorKind,
    },
    /// Mono-material legs compared against the rigid baseline.
    Mono {
        /// Catalog materials; all when omitted.
        #[arg(long, value_delimiter = ',')]
        materials: Vec<String>,
        /// Behaviors; all four when omitted.
        #[arg(long, value_delimiter = ',')]
        behaviors: Vec<BehaviorKind>,
    },
    /// Density sweep at fixed modulus.
    SweepDensity {
        /// Densities in kg/m³; the configured list when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        behaviors: Vec<BehaviorKind>,
    },
    /// Modulus sweep at fixed density.
    SweepModulus {
        /// Moduli in Pa; the configured list when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        behaviors: Vec<BehaviorKind>,
    },
    /// Graded legs compared against the baseline, the mono reference and
    /// each other.
    Gradient {
        /// Gradient names; all configured gradients when omitted.
        #[arg(long, value_delimiter = ',')]
        gradients: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        behaviors: Vec<BehaviorKind>,
    },
    /// Maximum stable timestep over the density × modulus grid.
    Heatmap {
        /// Only the 4×4 corner-and-interior subset of the grid.
        #[arg(long)]
        quick: bool,
    },
    /// Rebuild the suite tables of an existing output directory.
    Report,
}

fn load_config(cli: &Cli) -> Result<Config, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default_config(),
    };
    if let Some(dt) = cli.dt {
        cfg.sim.dt = dt;
    }
    if let Some(d) = cli.duration {
        cfg.behaviors.duration = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, HarnessError> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    let plan = match &cli.command {
        Command::Simulate { material, behavior } => ExperimentPlan::single(&cfg, material, *behavior, out)?,
        Command::Mono { materials, behaviors } => ExperimentPlan::mono(&cfg, materials, behaviors, out)?,
        Command::SweepDensity { values, behaviors } => ExperimentPlan::density_sweep(&cfg, values, behaviors, out)?,
        Command::SweepModulus { values, behaviors } => ExperimentPlan::modulus_sweep(&cfg, values, behaviors, out)?,
        Command::Gradient { gradients, behaviors } => ExperimentPlan::gradient(&cfg, gradients, behaviors, out)?,
        Command::Heatmap { quick } => {
            let map = run_heatmap(&cfg, out, *quick)?;
            let s = &map.sidecar;
            println!(
                "heatmap: {} ok, {} censored, {} unstable cells -> {}",
                s.ok_cells,
                s.censored_cells,
                s.unstable_cells,
                out.display()
            );
            if let Some(fit) = s.fit {
                println!(
                    "log-log fit: R² {:.4}, density coefficient {:.4}, modulus coefficient {:.4}",
                    fit.r_squared, fit.density_coef, fit.modulus_coef
                );
            }
            return Ok(ExitCode::SUCCESS);
        }
        Command::Report => {
            let suite = load_suite(out)?;
            write_reports(out, &suite, cfg.metrics.alpha)?;
            return Ok(finish(&suite, out));
        }
    };
    let plan = ExperimentPlan { seedless: cli.seedless, ..plan };
    let suite = execute(&cfg, plan, out)?;
    Ok(finish(&suite, out))
}

fn finish(suite: &SuiteResult, out: &std::path::Path) -> ExitCode {
    let failed = suite.failures();
    println!("{} runs, {} failed -> {}", suite.records.len(), failed, out.display());
    for r in suite.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("  {} {}: {}", r.design, r.behavior, r.error.as_deref().unwrap_or_default());
    }
    if failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global() {
        eprintln!("error: {}", HarnessError::Pool(e.to_string()));
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
