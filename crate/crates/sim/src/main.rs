//! `hetnet-sim`: run the clustering/beamforming experiments from a scenario
//! file and emit plot-ready CSVs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hetnet_sim::config::{load_scenario, Scenario};
use hetnet_sim::experiment::{
    completed_keys, run_draw, run_experiment, write_metrics_csv, MetricsRow, METRICS_HEADER,
};
use hetnet_sim::SimError;

#[derive(Parser)]
#[command(name = "hetnet-sim", version, about = "Multicell clustering/beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (sectioned key = value).
    #[arg(long, visible_alias = "scenario")]
    config: PathBuf,

    /// Overrides the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Worker thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm on a single draw and write traces plus metrics.
    Solve(CommonArgs),
    /// Run the full Monte-Carlo sweep.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip (algorithm, snr, draw) triples already present in the output.
        #[arg(long)]
        resume: bool,
    },
    /// Parse and validate the scenario, printing a summary.
    Check(CommonArgs),
}

fn load(common: &CommonArgs) -> Result<Scenario, SimError> {
    let mut scenario = load_scenario(&common.config)?;
    if let Some(seed) = common.seed {
        scenario.base_seed = seed;
    }
    if let Some(n) = common.threads {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&common.out)?;
    Ok(scenario)
}

fn write_rows(path: &Path, rows: &[MetricsRow]) -> Result<(), SimError> {
    let mut buf = Vec::new();
    write_metrics_csv(rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn cmd_solve(common: &CommonArgs) -> Result<(), SimError> {
    let scenario = load(common)?;
    let snr_db = scenario.snr_grid_db[0];
    let output = run_draw(&scenario, snr_db, 0)?;
    write_rows(&common.out.join("metrics.csv"), &output.rows)?;
    for (row, (name, trace)) in output.rows.iter().zip(&output.traces) {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        std::fs::write(
            common.out.join(format!("trace_{name}_{}.csv", row.seed)),
            buf,
        )?;
    }
    println!(
        "solved 1 draw at {snr_db} dB: {} algorithms -> {}",
        output.rows.len(),
        common.out.display()
    );
    Ok(())
}

fn cmd_sweep(common: &CommonArgs, resume: bool) -> Result<(), SimError> {
    let scenario = load(common)?;
    let path = common.out.join("metrics.csv");
    let existing = if resume && path.exists() {
        std::fs::read_to_string(&path)?
    } else {
        String::new()
    };
    let done = completed_keys(&existing);

    let rows = run_experiment(&scenario)?;
    if done.is_empty() {
        write_rows(&path, &rows)?;
        println!("wrote {} rows -> {}", rows.len(), path.display());
    } else {
        let fresh: Vec<&MetricsRow> = rows.iter().filter(|r| !done.contains(&r.key())).collect();
        let mut text = existing;
        if text.is_empty() {
            text.push_str(METRICS_HEADER);
            text.push('\n');
        }
        for r in &fresh {
            text.push_str(&r.csv_line());
            text.push('\n');
        }
        std::fs::write(&path, text)?;
        println!(
            "resumed: {} rows already present, appended {} -> {}",
            done.len(),
            fresh.len(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_check(common: &CommonArgs) -> Result<(), SimError> {
    let scenario = load(common)?;
    let n = &scenario.network;
    println!(
        "ok: {} cells x {} BSs x {} users, {}x{} antennas",
        n.cells, n.bs_per_cell, n.users_per_cell, n.tx_antennas, n.rx_antennas
    );
    println!(
        "    algorithms: {}",
        scenario
            .algorithms
            .iter()
            .map(|a| a.name())
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "    snr grid (dB): {:?}, draws: {}, base seed: {}",
        scenario.snr_grid_db, scenario.num_draws, scenario.base_seed
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Sweep { common, resume } => cmd_sweep(common, *resume),
        Command::Check(c) => cmd_check(c),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
