//! Command-line front end: run experiment grids, validate scenarios, analyze
//! public-topology feasibility, and project compound gains.
//!
//! Exit codes: 0 success, 1 parse error, 2 validation error (including
//! infeasible partitions, with the blocking constraint named), 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chainsplit::analysis::{emit_results, project_gain, project_gain_discrete, run_grid};
use chainsplit::error::Error;
use chainsplit::intel::{analyze_feasibility, ingest_pool_dataset, DatasetError};
use chainsplit::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "chainsplit",
    version,
    about = "Double-spending risk simulator for proof-of-work chains under network partition attacks"
)]
struct Cli {
    /// Master seed override for the experiment grid.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Trials-per-cell override for the experiment grid.
    #[arg(long, global = true)]
    trials: Option<u32>,

    /// Output directory for result files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for trial execution (default: all cores). Results are
    /// identical at any setting.
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    /// Dump one event-trace file per trial under <out>/traces/.
    #[arg(long, global = true)]
    verbose_trace: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario's full experiment grid and write result files.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
    },
    /// Parse and validate a scenario, printing the planned partition.
    Validate {
        /// Scenario TOML file.
        scenario: PathBuf,
    },
    /// Analyze how much mining power a route hijack could separate on a
    /// pool/AS dataset.
    Feasibility {
        /// Pool dataset file (pool/server directives).
        pools: PathBuf,
        /// Peering edge file (edge directives).
        peering: PathBuf,
    },
    /// Project the compound gain of repeating the attack.
    Gain {
        /// Per-attempt success probability in [0, 1].
        #[arg(long)]
        p: f64,
        /// Duration of one attack attempt, minutes.
        #[arg(long)]
        attack_duration_min: f64,
        /// Total horizon, hours.
        #[arg(long)]
        horizon_hours: f64,
        /// Initial fund (defaults to 1 so the output reads as a multiple).
        #[arg(long, default_value_t = 1.0)]
        fund: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run { scenario } => cmd_run(cli, scenario),
        Command::Validate { scenario } => cmd_validate(cli, scenario),
        Command::Feasibility { pools, peering } => cmd_feasibility(pools, peering),
        Command::Gain { p, attack_duration_min, horizon_hours, fund } => {
            cmd_gain(*p, *attack_duration_min, *horizon_hours, *fund)
        }
    }
}

fn load_with_overrides(cli: &Cli, path: &PathBuf) -> Result<ScenarioConfig, Error> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.grid.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.grid.trials_per_cell = trials;
    }
    Ok(cfg)
}

fn cmd_run(cli: &Cli, path: &PathBuf) -> Result<(), Error> {
    let cfg = load_with_overrides(cli, path)?;
    let name = cfg.name.clone();
    let prepared = cfg.prepare()?;
    let trace_dir = cli.verbose_trace.then(|| cli.out.join("traces"));
    let output = run_grid(&prepared, cli.parallelism, trace_dir.as_deref())?;
    emit_results(&cli.out, &output)?;

    println!("scenario: {name}");
    if let Some(split) = prepared.split() {
        println!(
            "partition: |A| = {} ({:.2}%), |B| = {} ({:.2}%), difference {:.2} pp",
            split.group_a.len(),
            100.0 * split.power_a,
            split.group_b.len(),
            100.0 * split.power_b,
            100.0 * split.difference
        );
    }
    println!(
        "{:>10} {:>9} {:>4} {:>7} {:>9} {:>8} {:>17} {:>12} {:>12}",
        "duration_s", "delay_ms", "m", "trials", "success%", "commit%", "wilson95%", "blocks_adv", "blocks_vic"
    );
    for cell in &output.cells {
        println!(
            "{:>10} {:>9} {:>4} {:>7} {:>9.1} {:>8.1} {:>8.1}-{:<8.1} {:>12.1} {:>12.1}",
            cell.cell.duration_s,
            cell.cell.delay_ms,
            cell.cell.m,
            cell.trials,
            100.0 * cell.success_rate,
            100.0 * cell.commit_rate,
            100.0 * cell.wilson_low,
            100.0 * cell.wilson_high,
            cell.mean_blocks_adversary,
            cell.mean_blocks_victim,
        );
    }
    println!("results written to {}", cli.out.display());
    Ok(())
}

fn cmd_validate(cli: &Cli, path: &PathBuf) -> Result<(), Error> {
    let cfg = load_with_overrides(cli, path)?;
    let name = cfg.name.clone();
    let grid = cfg.grid.clone();
    let prepared = cfg.prepare()?;
    println!("scenario {name}: OK");
    println!(
        "  miners: {}, adversary: {}",
        prepared.power().entries.len(),
        prepared.adversary()
    );
    match prepared.split() {
        Some(split) => {
            println!(
                "  partition plan: A = {:?} ({:.2}%), B = {:?} ({:.2}%)",
                split.group_a,
                100.0 * split.power_a,
                split.group_b,
                100.0 * split.power_b
            );
            println!(
                "  residual imbalance {:.4} pp, reported difference {:.2} pp",
                100.0 * split.rest_imbalance,
                100.0 * split.difference
            );
        }
        None => println!("  no partition (baseline scenario)"),
    }
    println!(
        "  grid: {} durations x {} delays x {} m values x {} trials",
        grid.durations_s.len(),
        grid.delays_ms.len(),
        grid.m_values.len(),
        grid.trials_per_cell
    );
    Ok(())
}

fn map_dataset_err(e: DatasetError) -> Error {
    match e {
        DatasetError::BadLine { .. } => Error::parse(e.to_string()),
        other => Error::validation(other.to_string()),
    }
}

fn cmd_feasibility(pools_path: &PathBuf, peering_path: &PathBuf) -> Result<(), Error> {
    let pools_src = std::fs::read_to_string(pools_path)?;
    let peering_src = std::fs::read_to_string(peering_path)?;
    let (pools, graph) = ingest_pool_dataset(&pools_src, &peering_src).map_err(map_dataset_err)?;
    let report = analyze_feasibility(&graph, &pools).map_err(map_dataset_err)?;
    print!("{report}");
    Ok(())
}

fn cmd_gain(p: f64, attack_duration_min: f64, horizon_hours: f64, fund: f64) -> Result<(), Error> {
    let duration_s = attack_duration_min * 60.0;
    let horizon_s = horizon_hours * 3600.0;
    let continuous = project_gain(p, duration_s, horizon_s, fund)?;
    println!(
        "continuous projection: y({horizon_hours} h) = {continuous:.3} (x{:.3} of the initial fund)",
        continuous / fund
    );
    let attempts = (horizon_s / duration_s).floor() as u32;
    println!("per-attempt series (T = {attack_duration_min} min, {attempts} whole attempts):");
    let shown: Vec<u32> = (1..=attempts)
        .filter(|i| *i <= 5 || *i == attempts || i % 10 == 0)
        .collect();
    for i in shown {
        let y = project_gain_discrete(p, i, fund)?;
        println!("  after attempt {i:>4}: {y:.3}");
    }
    Ok(())
}
