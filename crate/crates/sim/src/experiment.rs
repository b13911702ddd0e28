//! Sweep orchestration and metric computation.
//!
//! One "draw" is a seeded topology-plus-channel realization; every algorithm
//! listed in the scenario runs on the identical realization so comparisons
//! are paired. Rows are emitted in canonical (snr, draw, algorithm) order
//! regardless of how many worker threads execute the jobs, so the output CSV
//! is byte-stable.

use rayon::prelude::*;

use hetnet_core::baselines::{
    nn_assignment, wmmse_full, wmmse_nn, zf_beamformers, zf_greedy_clusters, ZfConfig,
};
use hetnet_core::net::{generate_channels, generate_topology, ChannelSet, NetworkConfig, Topology};
use hetnet_core::rng;
use hetnet_core::signal::{user_rate, BeamformerSet};
use hetnet_core::swmmse::{
    extract_clusters, swmmse, LambdaPolicy, SwmmseTrace, CLUSTER_THRESHOLD_REL,
};

use crate::config::{AlgorithmSpec, Scenario};
use crate::SimError;

/// Substream tag for per-draw seeds (disjoint from the core tags).
const DRAW_TAG: u64 = 101;

/// One Monte-Carlo result. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub snr_db: f64,
    pub algorithm: String,
    /// Per-cell lambdas joined with ';'; empty for non-penalized algorithms.
    pub lambda_used: String,
    pub sum_rate_nats: f64,
    pub sum_rate_bits: f64,
    /// Per-user rates in nats, joined with ';'.
    pub per_user_rates: String,
    pub avg_serving_bs: f64,
    /// Mean per-BS transmit power relative to the full-coordination reference
    /// of the same draw (absolute when no reference ran).
    pub per_bs_power_rel: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_ms: Option<f64>,
}

pub const METRICS_HEADER: &str = "seed,snr_db,algorithm,lambda_used,sum_rate_nats,sum_rate_bits,\
per_user_rates,avg_serving_bs,per_bs_power_rel,outer_iterations,converged,wall_ms";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.snr_db,
            self.algorithm,
            self.lambda_used,
            self.sum_rate_nats,
            self.sum_rate_bits,
            self.per_user_rates,
            self.avg_serving_bs,
            self.per_bs_power_rel,
            self.outer_iterations,
            self.converged,
            self.wall_ms.map(|w| w.to_string()).unwrap_or_default(),
        )
    }

    /// Resume key: identifies a completed (draw, sweep point, algorithm).
    pub fn key(&self) -> (String, String, String) {
        (
            self.seed.to_string(),
            self.snr_db.to_string(),
            self.algorithm.clone(),
        )
    }
}

/// Writes the metrics CSV (header plus one line per row).
pub fn write_metrics_csv<W: std::io::Write>(
    rows: &[MetricsRow],
    out: &mut W,
) -> Result<(), SimError> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Extracts resume keys from an existing metrics CSV.
pub fn completed_keys(text: &str) -> std::collections::HashSet<(String, String, String)> {
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let mut parts = line.split(',');
            let seed = parts.next()?.to_string();
            let snr = parts.next()?.to_string();
            let algo = parts.next()?.to_string();
            Some((seed, snr, algo))
        })
        .collect()
}

fn mean_bs_power(v: &BeamformerSet, config: &NetworkConfig) -> f64 {
    let mut total = 0.0;
    for k in 0..config.cells {
        for q in 0..config.bs_per_cell {
            total += v.bs_power(k, q);
        }
    }
    total / (config.cells * config.bs_per_cell) as f64
}

/// Rate/cluster/power metrics of one beamformer set. `reference_v` is the
/// full-coordination run of the same draw when available.
pub fn compute_metrics(
    channels: &ChannelSet,
    v: &BeamformerSet,
    config: &NetworkConfig,
    reference_v: Option<&BeamformerSet>,
) -> Result<(f64, f64, String, f64, f64), SimError> {
    let mut rates = Vec::new();
    for user in channels.user_ids().collect::<Vec<_>>() {
        rates.push(user_rate(channels, v, config.noise_power, user)?);
    }
    let sum_nats: f64 = rates.iter().sum();
    let sum_bits = sum_nats / std::f64::consts::LN_2;
    let per_user = rates
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let clusters = extract_clusters(v, config.power, config.users_per_cell, CLUSTER_THRESHOLD_REL);
    let own = mean_bs_power(v, config);
    let rel = match reference_v {
        Some(r) => {
            let base = mean_bs_power(r, config);
            if base > 0.0 {
                own / base
            } else {
                own
            }
        }
        None => own,
    };
    Ok((sum_nats, sum_bits, per_user, clusters.avg_serving_bs(), rel))
}

/// Everything produced by one (draw, sweep point): canonical-order rows plus
/// the per-algorithm traces (for the `solve` command).
pub struct DrawOutput {
    pub rows: Vec<MetricsRow>,
    pub traces: Vec<(String, SwmmseTrace)>,
}

fn fixed_policy_for(scenario: &Scenario) -> LambdaPolicy {
    match &scenario.solver.lambda_policy {
        LambdaPolicy::Fixed(v) if v.len() == 1 => {
            LambdaPolicy::Fixed(vec![v[0]; scenario.network.cells])
        }
        LambdaPolicy::Fixed(v) => LambdaPolicy::Fixed(v.clone()),
        LambdaPolicy::Adaptive | LambdaPolicy::FormulaFixed => LambdaPolicy::FormulaFixed,
    }
}

fn run_algorithm(
    spec: &AlgorithmSpec,
    scenario: &Scenario,
    config: &NetworkConfig,
    topology: &Topology,
    channels: &ChannelSet,
    seed: u64,
) -> Result<(BeamformerSet, SwmmseTrace), SimError> {
    let utility = scenario.utility.model();
    let mut params = scenario.solver.params(seed);
    match spec {
        AlgorithmSpec::SwmmseFixed => {
            params.lambda_policy = fixed_policy_for(scenario);
            Ok(swmmse(channels, config, &utility, &params)?)
        }
        AlgorithmSpec::SwmmseAdaptive => {
            params.lambda_policy = LambdaPolicy::Adaptive;
            Ok(swmmse(channels, config, &utility, &params)?)
        }
        AlgorithmSpec::WmmseFull => Ok(wmmse_full(channels, config, &utility, &params)?),
        AlgorithmSpec::WmmseNn => {
            let assignment = nn_assignment(topology);
            Ok(wmmse_nn(channels, config, &utility, &params, &assignment)?)
        }
        AlgorithmSpec::Zf { cluster_size } => {
            let clustering = zf_greedy_clusters(
                topology,
                channels,
                &ZfConfig {
                    cluster_size: *cluster_size,
                },
            );
            let v = zf_beamformers(&clustering, channels, config);
            let trace = SwmmseTrace {
                records: Vec::new(),
                converged: true,
                lambdas: Vec::new(),
                floor_events: 0,
            };
            Ok((v, trace))
        }
    }
}

fn lambda_field(trace: &SwmmseTrace) -> String {
    trace
        .lambdas
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Runs every scenario algorithm on one seeded realization.
///
/// The channel draw depends only on `(base_seed, draw)`, so sweep points
/// share realizations and SNR curves are paired too.
pub fn run_draw(scenario: &Scenario, snr_db: f64, draw: usize) -> Result<DrawOutput, SimError> {
    let seed = rng::derive_seed(scenario.base_seed, &[DRAW_TAG, draw as u64]);
    let mut config = scenario.network.clone();
    config.power = scenario.power_at(snr_db);
    config.seed = seed;
    config.validate()?;
    let topology = generate_topology(&config);
    let channels = generate_channels(&topology, &config);

    // Full-coordination reference for relative power, run once if listed.
    let mut results: Vec<(String, BeamformerSet, SwmmseTrace)> = Vec::new();
    for spec in &scenario.algorithms {
        let (v, trace) = run_algorithm(spec, scenario, &config, &topology, &channels, seed)?;
        results.push((spec.name(), v, trace));
    }
    let reference = results
        .iter()
        .find(|(name, _, _)| name == "wmmse_full")
        .map(|(_, v, _)| v.clone());

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (name, v, trace) in results {
        let (sum_nats, sum_bits, per_user, avg_bs, rel) =
            compute_metrics(&channels, &v, &config, reference.as_ref())?;
        rows.push(MetricsRow {
            seed,
            snr_db,
            algorithm: name.clone(),
            lambda_used: lambda_field(&trace),
            sum_rate_nats: sum_nats,
            sum_rate_bits: sum_bits,
            per_user_rates: per_user,
            avg_serving_bs: avg_bs,
            per_bs_power_rel: rel,
            outer_iterations: trace.outer_iterations(),
            converged: trace.converged,
            wall_ms: None,
        });
        traces.push((name, trace));
    }
    Ok(DrawOutput { rows, traces })
}

/// Full sweep: every (sweep point, draw) job, scheduled in parallel, rows
/// returned in canonical order. Non-converged runs are recorded, never fatal.
pub fn run_experiment(scenario: &Scenario) -> Result<Vec<MetricsRow>, SimError> {
    scenario.validate()?;
    let jobs: Vec<(f64, usize)> = scenario
        .snr_grid_db
        .iter()
        .flat_map(|&snr| (0..scenario.num_draws).map(move |d| (snr, d)))
        .collect();
    let outputs: Result<Vec<DrawOutput>, SimError> = jobs
        .par_iter()
        .map(|&(snr, draw)| run_draw(scenario, snr, draw))
        .collect();
    Ok(outputs?.into_iter().flat_map(|o| o.rows).collect())
}
