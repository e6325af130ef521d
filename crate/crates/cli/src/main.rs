//! `pdterm`: lifetime PD term structures from macro-driven transition
//! matrices, with raw, naive-filtered and anchored-filtered macro estimates.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdterm_core::config::load_config;
use pdterm_core::error::Error as CoreError;
use pdterm_core::experiment::{
    bound_check, instability_demo, monte_carlo, BoundCheckParams, InstabilityParams, Method,
};
use pdterm_core::filter::{riccati_steady_state, ObservationModel};
use pdterm_core::macroecon::generate_scenario;
use pdterm_core::numeric::derive_seed;

#[derive(Parser)]
#[command(name = "pdterm", version, about = "Lifetime PD term-structure engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario-by-method experiment and write CSV outputs
    Run(CommonArgs),
    /// Write the scenario CSVs without running any filters
    Scenarios(CommonArgs),
    /// Print steady-state Riccati solutions for the naive and anchored filters
    Riccati(CommonArgs),
    /// Demonstrate raw-propagation instability under injected macro errors
    DemoInstability(CommonArgs),
    /// Verify the deviation accumulation bound on sampled error paths
    CheckBounds(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Replication-count override
    #[arg(long)]
    reps: Option<usize>,
    /// Method filter: raw, naive, anchored, or all
    #[arg(long, default_value = "all")]
    method: String,
    /// Scenario filter: a scenario name from the config, or all
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,
    /// Also write per-replication PD traces
    #[arg(long)]
    emit_traces: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Run(a)
        | Command::Scenarios(a)
        | Command::Riccati(a)
        | Command::DemoInstability(a)
        | Command::CheckBounds(a) => a,
    };
    match execute(&cli.command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let config_error = e
                .downcast_ref::<CoreError>()
                .map(|ce| matches!(ce, CoreError::Config(_)))
                .unwrap_or(false);
            if config_error {
                eprintln!("error[config]: {e:#}");
                ExitCode::from(3)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn execute(command: &Command, args: &CommonArgs) -> anyhow::Result<()> {
    let config_bytes = std::fs::read(&args.config)
        .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let config_hash = output::fnv1a_hex(&config_bytes);
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if args.scenario != "all" {
        config.scenarios.retain(|s| s.name == args.scenario);
        if config.scenarios.is_empty() {
            return Err(CoreError::Config(format!(
                "scenario '{}' is not defined in the config",
                args.scenario
            ))
            .into());
        }
    }
    let methods = parse_methods(&args.method)?;
    let threads = args.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CoreError::Validation(format!("cannot build thread pool: {e}")))?;

    if !matches!(command, Command::Riccati(_)) {
        std::fs::create_dir_all(&args.out)?;
    }

    match command {
        Command::Run(_) => {
            let summary = pool.install(|| monte_carlo(&config, &methods, args.emit_traces))?;
            output::write_summary(&args.out, &summary)?;
            output::write_pd_paths(&args.out, &summary, args.emit_traces)?;
            output::write_macro_paths(&args.out, &summary.traces)?;
            output::write_filter_traces(&args.out, &summary.traces)?;
            output::write_manifest(&args.out, &config_hash, &config, &methods, threads, "run")?;
            println!(
                "wrote {} summary cells for {} scenarios x {} methods to {}",
                summary.cells.len(),
                config.scenarios.len(),
                methods.len(),
                args.out.display()
            );
            for (method, var) in &summary.pooled_mean_var {
                println!(
                    "  mean variance of Y_t [{method}] = {}",
                    output::fmt_f64(*var)
                );
            }
        }
        Command::Scenarios(_) => {
            let mut traces = Vec::new();
            for (s_idx, spec) in config.scenarios.iter().enumerate() {
                let seed = derive_seed(config.master_seed, s_idx as u64, 0);
                let paths = generate_scenario(spec, &config.index_params, seed)?;
                traces.push(pdterm_core::experiment::ScenarioTraces {
                    scenario: spec.name.clone(),
                    paths,
                    filter_traces: Vec::new(),
                });
            }
            output::write_macro_paths(&args.out, &traces)?;
            output::write_manifest(
                &args.out,
                &config_hash,
                &config,
                &methods,
                threads,
                "scenarios",
            )?;
            println!(
                "wrote {} scenario CSVs to {}",
                traces.len(),
                args.out.display()
            );
        }
        Command::Riccati(_) => {
            let naive_obs = ObservationModel::naive(&config.model);
            let naive = riccati_steady_state(&config.model, &naive_obs, 1e-12, 100_000)?;
            let anchored_obs =
                ObservationModel::anchored(&config.model, config.anchor.sigma_star_sq_in);
            let anchored = riccati_steady_state(&config.model, &anchored_obs, 1e-12, 100_000)?;
            for (name, sol) in [("naive", &naive), ("anchored", &anchored)] {
                println!("{name}:");
                println!(
                    "  sigma_inf (filtered)  = {}",
                    output::fmt_f64(sol.sigma_inf[(0, 0)])
                );
                println!(
                    "  sigma_inf (predictor) = {}",
                    output::fmt_f64(sol.sigma_pred_inf[(0, 0)])
                );
                let gains: Vec<String> = sol.gain_inf.iter().map(|g| output::fmt_f64(*g)).collect();
                println!("  gain                  = [{}]", gains.join(", "));
                println!(
                    "  closed-loop radius    = {}",
                    output::fmt_f64(sol.closed_loop_spectral_radius)
                );
            }
        }
        Command::DemoInstability(_) => {
            let params = InstabilityParams {
                seed: config.master_seed,
                ..Default::default()
            };
            let report = pool.install(|| instability_demo(&config, &params))?;
            let path = args.out.join("instability.csv");
            let mut text = String::from("block,raw_exceedance_freq,anchored_exceedance_freq\n");
            for (b, (r, a)) in report
                .raw_block_freq
                .iter()
                .zip(&report.anchored_block_freq)
                .enumerate()
            {
                text.push_str(&format!(
                    "{},{},{}\n",
                    b,
                    output::fmt_f64(*r),
                    output::fmt_f64(*a)
                ));
            }
            std::fs::write(&path, text)?;
            println!(
                "alpha probe {}; late-block raw frequency {}, anchored {}",
                output::fmt_f64(report.alpha_probe),
                output::fmt_f64(*report.raw_block_freq.last().unwrap()),
                output::fmt_f64(*report.anchored_block_freq.last().unwrap()),
            );
            println!("wrote {}", path.display());
        }
        Command::CheckBounds(_) => {
            let n_paths = args.reps.unwrap_or(1000);
            let params = BoundCheckParams {
                seed: config.master_seed,
                ..Default::default()
            };
            let report = pool.install(|| bound_check(&config, n_paths, &params))?;
            let path = args.out.join("bounds.csv");
            std::fs::write(
                &path,
                format!(
                    "n_paths,fraction_holding,lipschitz,min_slack\n{},{},{},{}\n",
                    report.n_paths,
                    output::fmt_f64(report.fraction_holding),
                    output::fmt_f64(report.lipschitz),
                    output::fmt_f64(report.min_slack),
                ),
            )?;
            println!(
                "bound held on {} of {} paths (fraction {})",
                (report.fraction_holding * report.n_paths as f64).round() as usize,
                report.n_paths,
                output::fmt_f64(report.fraction_holding)
            );
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, CoreError> {
    match spec {
        "all" => Ok(Method::ALL.to_vec()),
        "raw" => Ok(vec![Method::Raw]),
        "naive" => Ok(vec![Method::Naive]),
        "anchored" => Ok(vec![Method::Anchored]),
        other => Err(CoreError::Config(format!(
            "method filter must be raw, naive, anchored or all, got '{other}'"
        ))),
    }
}
