//! Scenario files: sectioned `key = value` plain text.
//!
//! Three sections are recognized — `[network]`, `[solver]` and
//! `[experiment]`. Unknown sections or keys are hard errors so that a typo
//! cannot silently fall back to a default. `#` starts a comment.

use hetnet_core::net::NetworkConfig;
use hetnet_core::signal::UtilityModel;
use hetnet_core::swmmse::{InitKind, LambdaPolicy, SwmmseParams};

use crate::SimError;

/// Algorithm selector as listed in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmSpec {
    SwmmseFixed,
    SwmmseAdaptive,
    WmmseFull,
    WmmseNn,
    Zf { cluster_size: usize },
}

impl AlgorithmSpec {
    /// Name used in CSV rows and trace file names.
    pub fn name(&self) -> String {
        match self {
            Self::SwmmseFixed => "swmmse_fixed".into(),
            Self::SwmmseAdaptive => "swmmse_adaptive".into(),
            Self::WmmseFull => "wmmse_full".into(),
            Self::WmmseNn => "wmmse_nn".into(),
            Self::Zf { cluster_size } => format!("zf{cluster_size}"),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let t = text.trim();
        match t {
            "swmmse_fixed" => Ok(Self::SwmmseFixed),
            "swmmse_adaptive" => Ok(Self::SwmmseAdaptive),
            "wmmse_full" => Ok(Self::WmmseFull),
            "wmmse_nn" => Ok(Self::WmmseNn),
            _ => {
                if let Some(inner) = t.strip_prefix("zf(").and_then(|s| s.strip_suffix(')')) {
                    let cluster_size = inner
                        .trim()
                        .parse()
                        .map_err(|_| SimError::Config(format!("bad zf cluster size: {t}")))?;
                    if cluster_size == 0 {
                        return Err(SimError::Config("zf cluster size must be >= 1".into()));
                    }
                    Ok(Self::Zf { cluster_size })
                } else {
                    Err(SimError::Config(format!("unknown algorithm: {t}")))
                }
            }
        }
    }
}

/// Solver knobs shared by every algorithm in a run.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub lambda_policy: LambdaPolicy,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub inner_tol: f64,
    pub inner_max_passes: usize,
    pub bisection_tol: f64,
    pub init_kind: InitKind,
    pub warmup_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SwmmseParams::default_with_seed(0);
        Self {
            lambda_policy: d.lambda_policy,
            outer_tol: d.outer_tol,
            max_outer_iters: d.max_outer_iters,
            inner_tol: d.inner_tol,
            inner_max_passes: d.inner_max_passes,
            bisection_tol: d.bisection_tol,
            init_kind: d.init_kind,
            warmup_iters: d.warmup_iters,
        }
    }
}

impl SolverSettings {
    /// Materializes solver parameters for one run.
    pub fn params(&self, seed: u64) -> SwmmseParams {
        SwmmseParams {
            lambda_policy: self.lambda_policy.clone(),
            outer_tol: self.outer_tol,
            max_outer_iters: self.max_outer_iters,
            inner_tol: self.inner_tol,
            inner_max_passes: self.inner_max_passes,
            bisection_tol: self.bisection_tol,
            init_kind: self.init_kind,
            warmup_iters: self.warmup_iters,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityKind {
    SumRate,
    ProportionalFair,
}

impl UtilityKind {
    pub fn model(&self) -> UtilityModel {
        match self {
            Self::SumRate => UtilityModel::SumRate,
            Self::ProportionalFair => UtilityModel::proportional_fair(),
        }
    }
}

/// One experiment: network shape, algorithms, SNR grid and repetition count.
///
/// The per-BS budget is not a scenario field: each sweep point sets
/// `P = SNR / Q` with unit noise.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub utility: UtilityKind,
    pub algorithms: Vec<AlgorithmSpec>,
    pub snr_grid_db: Vec<f64>,
    pub num_draws: usize,
    pub base_seed: u64,
    pub solver: SolverSettings,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_draws < 1 {
            return Err(SimError::Config("num_draws must be >= 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(SimError::Config("snr_grid_db must be nonempty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(SimError::Config("algorithms must be nonempty".into()));
        }
        let mut probe = self.network.clone();
        probe.power = 1.0;
        probe
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// Per-BS budget at one sweep point: `P = SNR / Q` (linear).
    pub fn power_at(&self, snr_db: f64) -> f64 {
        10f64.powf(snr_db / 10.0) / self.network.bs_per_cell as f64
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SimError> {
    value
        .trim()
        .parse()
        .map_err(|_| SimError::Config(format!("bad value for {key}: {value}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, SimError> {
    value
        .split(',')
        .map(|v| parse_num(key, v))
        .collect()
}

/// Parses a scenario from the sectioned plain-text format.
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let mut network = NetworkConfig::default_with_seed(0);
    network.noise_power = 1.0;
    let mut solver = SolverSettings::default();
    let mut utility = UtilityKind::SumRate;
    let mut algorithms = Vec::new();
    let mut snr_grid_db = vec![10.0];
    let mut num_draws = 1usize;
    let mut base_seed = 0u64;

    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !matches!(section.as_str(), "network" | "solver" | "experiment") {
                return Err(SimError::Config(format!(
                    "line {}: unknown section [{section}]",
                    lineno + 1
                )));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            SimError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match (section.as_str(), key) {
            ("network", "cells") => network.cells = parse_num(key, value)?,
            ("network", "bs_per_cell") => network.bs_per_cell = parse_num(key, value)?,
            ("network", "users_per_cell") => network.users_per_cell = parse_num(key, value)?,
            ("network", "tx_antennas") => network.tx_antennas = parse_num(key, value)?,
            ("network", "rx_antennas") => network.rx_antennas = parse_num(key, value)?,
            ("network", "noise_power") => network.noise_power = parse_num(key, value)?,
            ("network", "cell_spacing_m") => network.cell_spacing_m = parse_num(key, value)?,
            ("network", "min_link_distance_m") => {
                network.min_link_distance_m = parse_num(key, value)?
            }
            ("network", "shadowing_sigma_db") => {
                network.shadowing_sigma_db = parse_num(key, value)?
            }
            ("solver", "lambda_policy") => {
                solver.lambda_policy = match value {
                    "formula" => LambdaPolicy::FormulaFixed,
                    "adaptive" => LambdaPolicy::Adaptive,
                    other => {
                        if let Some(v) = other.strip_prefix("fixed:") {
                            // one value replicated per cell at run time
                            LambdaPolicy::Fixed(vec![parse_num(key, v)?])
                        } else {
                            return Err(SimError::Config(format!(
                                "bad lambda_policy: {other} (formula | adaptive | fixed:<v>)"
                            )));
                        }
                    }
                };
            }
            ("solver", "outer_tol") => solver.outer_tol = parse_num(key, value)?,
            ("solver", "max_outer_iters") => solver.max_outer_iters = parse_num(key, value)?,
            ("solver", "inner_tol") => solver.inner_tol = parse_num(key, value)?,
            ("solver", "inner_max_passes") => solver.inner_max_passes = parse_num(key, value)?,
            ("solver", "bisection_tol") => solver.bisection_tol = parse_num(key, value)?,
            ("solver", "warmup_iters") => solver.warmup_iters = parse_num(key, value)?,
            ("solver", "init") => {
                solver.init_kind = match value {
                    "gaussian" => InitKind::GaussianScaled,
                    "zero" => InitKind::Zero,
                    other => {
                        return Err(SimError::Config(format!(
                            "bad init: {other} (gaussian | zero)"
                        )))
                    }
                };
            }
            ("experiment", "utility") => {
                utility = match value {
                    "sum_rate" => UtilityKind::SumRate,
                    "proportional_fair" => UtilityKind::ProportionalFair,
                    other => {
                        return Err(SimError::Config(format!(
                            "bad utility: {other} (sum_rate | proportional_fair)"
                        )))
                    }
                };
            }
            ("experiment", "algorithms") => {
                algorithms = value
                    .split(',')
                    .map(AlgorithmSpec::parse)
                    .collect::<Result<_, _>>()?;
            }
            ("experiment", "snr_grid_db") => snr_grid_db = parse_list(key, value)?,
            ("experiment", "num_draws") => num_draws = parse_num(key, value)?,
            ("experiment", "base_seed") => base_seed = parse_num(key, value)?,
            _ => {
                return Err(SimError::Config(format!(
                    "line {}: unknown key {key} in section [{section}]",
                    lineno + 1
                )));
            }
        }
    }
    let scenario = Scenario {
        network,
        utility,
        algorithms,
        snr_grid_db,
        num_draws,
        base_seed,
        solver,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
[network]
cells = 2
bs_per_cell = 4
users_per_cell = 4

[solver]
lambda_policy = formula
outer_tol = 0.1

[experiment]
algorithms = swmmse_fixed, wmmse_full, zf(2)
snr_grid_db = 0, 10, 20
num_draws = 5
base_seed = 7
";

    #[test]
    fn parses_sample() {
        let s = parse_scenario(SAMPLE).unwrap();
        assert_eq!(s.network.cells, 2);
        assert_eq!(s.algorithms.len(), 3);
        assert_eq!(s.algorithms[2], AlgorithmSpec::Zf { cluster_size: 2 });
        assert_eq!(s.snr_grid_db, vec![0.0, 10.0, 20.0]);
        assert_eq!(s.base_seed, 7);
        // P = SNR/Q at 10 dB with Q = 4
        assert!((s.power_at(10.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_is_hard_error() {
        let bad = format!("{SAMPLE}\n[network]\nfoo = 1\n");
        assert!(parse_scenario(&bad).is_err());
    }

    #[test]
    fn unknown_section_is_hard_error() {
        assert!(parse_scenario("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for name in ["swmmse_fixed", "swmmse_adaptive", "wmmse_full", "wmmse_nn"] {
            assert_eq!(AlgorithmSpec::parse(name).unwrap().name(), name);
        }
        assert_eq!(AlgorithmSpec::parse("zf(3)").unwrap().name(), "zf3");
        assert!(AlgorithmSpec::parse("zf(0)").is_err());
        assert!(AlgorithmSpec::parse("mystery").is_err());
    }
}
