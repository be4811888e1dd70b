//! Command-line front end: single simulations with optional per-round
//! traces, grid sweeps, the numerical verification suite, the fluid
//! Eisenberg-Gale solver, and the epoch lower-bound calculator.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use replenish::analysis::epoch_lower_bound;
use replenish::config::{ExperimentConfig, OutputFormat};
use replenish::eg::{solve_fluid_eg, EgInstance};
use replenish::harness::{
    run_replication, run_sweep, summary_csv_row, sweep_to_csv, trace_replication, trace_to_csv,
    SUMMARY_CSV_HEADER,
};
use replenish::verify::run_verification;

#[derive(Parser)]
#[command(
    name = "replenish",
    about = "Sequential fair allocation with stochastic replenishments: \
             simulation, sweeps, and numerical verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Experiment configuration (JSON; sections env, policy, grid, costs, output)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (overrides the config's output section)
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Override the config's horizon T
    #[arg(long)]
    horizon: Option<u64>,
    /// Override the config's replication count
    #[arg(long)]
    reps: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run single replications of the first grid cell and print summaries
    Simulate {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Emit the per-round trace of replication 0 instead of summaries
        #[arg(long)]
        trace: bool,
    },
    /// Run the full (M, delta) grid experiment
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Worker threads for cell/replication parallelism
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Run the numerical oracle suite and emit a JSON report
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve a fluid Eisenberg-Gale instance
    Eg {
        /// Instance JSON with weights, type_means, supply_means
        #[arg(long, conflicts_with = "fixture")]
        config: Option<PathBuf>,
        /// Use the bundled food-bank instance
        #[arg(long)]
        fixture: bool,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Epoch lower-bound calculator for bounded-envy policies under
    /// coin-flip supply and unit demand
    LowerBound {
        /// Smallest allocation the policy ever makes
        #[arg(long)]
        alloc: f64,
        /// Width of the allocation band (the envy budget)
        #[arg(long)]
        delta: f64,
        /// Store capacity
        #[arg(long)]
        capacity: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Simulate { common, trace } => {
            let config = load_config(&common)?;
            let m = config.grid.m[0];
            let delta = config.delta_grid()[0];
            let out = resolve_out(&common, &config);
            if trace {
                let (summary, rows) = trace_replication(&config, m, delta, 0)?;
                emit(&out, &trace_to_csv(&rows))?;
                eprintln!(
                    "replication 0: delta_eff = {}, delta_fair = {}",
                    summary.delta_eff, summary.delta_fair
                );
            } else {
                let format = resolve_format(&common, &config);
                let kind = policy_kind(&config);
                // A single replication unless --reps asks for more.
                let reps = common.reps.unwrap_or(1);
                let mut summaries = Vec::new();
                for rep in 0..reps {
                    summaries.push(run_replication(&config, m, delta, rep)?);
                }
                let text = match format {
                    Format::Csv => {
                        let mut out = String::from(SUMMARY_CSV_HEADER);
                        out.push('\n');
                        for s in &summaries {
                            out.push_str(&summary_csv_row(&kind, m, delta, config.seed, s));
                            out.push('\n');
                        }
                        out
                    }
                    Format::Json => serde_json::to_string_pretty(&summaries)?,
                };
                emit(&out, &text)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, parallel } => {
            if let Some(threads) = parallel {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .ok();
            }
            let config = load_config(&common)?;
            let result = run_sweep(&config)?;
            for failure in &result.failures {
                eprintln!(
                    "cell (M={}, delta={}) failed: {}",
                    failure.m, failure.delta, failure.error
                );
            }
            let format = resolve_format(&common, &config);
            let text = match format {
                Format::Csv => sweep_to_csv(&result),
                Format::Json => serde_json::to_string_pretty(&result)?,
            };
            emit(&resolve_out(&common, &config), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { out, seed } => {
            let report = run_verification(seed);
            let text = serde_json::to_string_pretty(&report)?;
            emit(&out, &text)?;
            for checked in &report.checks {
                eprintln!(
                    "{} {}: {}",
                    if checked.passed { "PASS" } else { "FAIL" },
                    checked.name,
                    checked.detail
                );
            }
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Eg {
            config,
            fixture,
            tolerance,
            out,
        } => {
            let instance = if fixture {
                EgInstance::food_bank()
            } else {
                let path = config.ok_or("pass --config <instance.json> or --fixture")?;
                let text = fs::read_to_string(path)?;
                let instance: EgInstance = serde_json::from_str(&text)?;
                instance.validate()?;
                instance
            };
            let solution = solve_fluid_eg(&instance, tolerance)?;
            emit(&out, &serde_json::to_string_pretty(&solution)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::LowerBound {
            alloc,
            delta,
            capacity,
            out,
        } => {
            let bound = epoch_lower_bound(alloc, delta, capacity)?;
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "case": format!("{:?}", bound.case),
                "w_lower_bound": bound.w_lb,
                "v_lower_bound": bound.v_lb,
                "epoch_len": bound.epoch_len,
            }))?;
            emit(&out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_config(common: &CommonRunArgs) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(&common.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(horizon) = common.horizon {
        config.horizon = horizon;
    }
    if let Some(reps) = common.reps {
        config.replications = reps;
    }
    config.validate()?;
    Ok(config)
}

/// `--out` wins; otherwise the config's output section decides.
fn resolve_out(common: &CommonRunArgs, config: &ExperimentConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| {
        config
            .output
            .as_ref()
            .and_then(|o| o.path.as_ref().map(PathBuf::from))
    })
}

fn resolve_format(common: &CommonRunArgs, config: &ExperimentConfig) -> Format {
    if let Some(f) = common.format {
        return f;
    }
    match config.output.as_ref().map(|o| o.format) {
        Some(OutputFormat::Json) => Format::Json,
        _ => Format::Csv,
    }
}

fn policy_kind(config: &ExperimentConfig) -> String {
    serde_json::to_value(&config.policy)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str().map(String::from)))
        .unwrap_or_else(|| "unknown".into())
}

fn emit(path: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}
