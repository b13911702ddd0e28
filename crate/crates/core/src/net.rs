//! Network topology and random channel generation.
//!
//! Cells are laid out on a hexagonal-packing grid with a fixed spacing between
//! adjacent cell centers. BSs and users are placed uniformly in a disk of
//! radius `spacing / 2` around their cell center. Channel entries are
//! circularly symmetric complex Gaussian with per-dimension variance
//! `(200 / d)^3 * L`, where `d` is the BS-user distance clamped from below and
//! `10 log10(L)` is a zero-mean Gaussian shadowing term.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::{standard_normal, standard_normal_pair, substream, tag};
use crate::{C64, CMat, UserId};

/// Static description of the network to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of cells (K).
    pub cells: usize,
    /// BSs per cell (Q).
    pub bs_per_cell: usize,
    /// Users per cell (I).
    pub users_per_cell: usize,
    /// Transmit antennas per BS (M).
    pub tx_antennas: usize,
    /// Receive antennas per user (N).
    pub rx_antennas: usize,
    /// Per-BS power budget, linear watts.
    pub power: f64,
    /// Noise power per user, linear.
    pub noise_power: f64,
    /// Distance between adjacent cell centers, meters.
    pub cell_spacing_m: f64,
    /// Lower clamp on BS-user distance before the pathloss formula, meters.
    pub min_link_distance_m: f64,
    /// Standard deviation of log-normal shadowing, dB. Zero disables shadowing.
    pub shadowing_sigma_db: f64,
    /// Base RNG seed.
    pub seed: u64,
}

impl NetworkConfig {
    /// A small desk-scale default; callers override the fields they sweep.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            cells: 2,
            bs_per_cell: 4,
            users_per_cell: 4,
            tx_antennas: 2,
            rx_antennas: 2,
            power: 1.0,
            noise_power: 1.0,
            cell_spacing_m: 2000.0,
            min_link_distance_m: 35.0,
            shadowing_sigma_db: 8.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = self.cells >= 1
            && self.bs_per_cell >= 1
            && self.users_per_cell >= 1
            && self.tx_antennas >= 1
            && self.rx_antennas >= 1;
        if !positive_counts {
            return Err(CoreError::InvalidConfig(
                "cells, BSs, users and antenna counts must all be >= 1".into(),
            ));
        }
        if !(self.power > 0.0) {
            return Err(CoreError::InvalidConfig("power budget must be > 0".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(CoreError::InvalidConfig("noise power must be > 0".into()));
        }
        if !(self.cell_spacing_m > 0.0) {
            return Err(CoreError::InvalidConfig("cell spacing must be > 0".into()));
        }
        if !(self.min_link_distance_m > 0.0) {
            return Err(CoreError::InvalidConfig(
                "minimum link distance must be > 0".into(),
            ));
        }
        if self.shadowing_sigma_db < 0.0 {
            return Err(CoreError::InvalidConfig(
                "shadowing sigma must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Network SNR, defined as `P * Q` (linear).
    pub fn snr(&self) -> f64 {
        snr_of(self)
    }

    /// Length of a user's stacked beamformer, `M * Q`.
    pub fn stacked_len(&self) -> usize {
        self.tx_antennas * self.bs_per_cell
    }

    pub fn total_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    pub fn user_ids(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.cells)
            .flat_map(move |k| (0..self.users_per_cell).map(move |i| UserId::new(k, i)))
    }
}

/// Network SNR, `P * Q` (linear).
pub fn snr_of(config: &NetworkConfig) -> f64 {
    config.power * config.bs_per_cell as f64
}

/// Planar positions of cell centers, BSs and users.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub cell_centers: Vec<[f64; 2]>,
    /// `bs_positions[k][q]`
    pub bs_positions: Vec<Vec<[f64; 2]>>,
    /// `user_positions[k][i]`
    pub user_positions: Vec<Vec<[f64; 2]>>,
}

impl Topology {
    /// Euclidean BS-user distance, unclamped.
    pub fn distance(&self, user: UserId, cell: usize, bs: usize) -> f64 {
        let u = self.user_positions[user.cell][user.user];
        let b = self.bs_positions[cell][bs];
        ((u[0] - b[0]).powi(2) + (u[1] - b[1]).powi(2)).sqrt()
    }
}

/// Centers of a hexagonal packing in spiral order, starting at the origin.
fn hex_centers(count: usize, spacing: f64) -> Vec<[f64; 2]> {
    let mut axial: Vec<(i64, i64)> = vec![(0, 0)];
    let dirs: [(i64, i64); 6] = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)];
    let mut ring = 1i64;
    while axial.len() < count {
        let (mut q, mut r) = (ring, 0i64);
        for d in dirs {
            for _ in 0..ring {
                axial.push((q, r));
                q += d.0;
                r += d.1;
            }
        }
        ring += 1;
    }
    axial.truncate(count);
    axial
        .into_iter()
        .map(|(q, r)| {
            [
                spacing * (q as f64 + r as f64 / 2.0),
                spacing * (3.0f64.sqrt() / 2.0) * r as f64,
            ]
        })
        .collect()
}

fn uniform_in_disk<R: Rng>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.gen::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Lays out cell centers and draws BS/user positions. Pure in (config, seed).
pub fn generate_topology(config: &NetworkConfig) -> Topology {
    let centers = hex_centers(config.cells, config.cell_spacing_m);
    let radius = config.cell_spacing_m / 2.0;
    let bs_positions = (0..config.cells)
        .map(|k| {
            (0..config.bs_per_cell)
                .map(|q| {
                    let mut rng = substream(config.seed, &[tag::BS_POSITION, k as u64, q as u64]);
                    uniform_in_disk(&mut rng, centers[k], radius)
                })
                .collect()
        })
        .collect();
    let user_positions = (0..config.cells)
        .map(|k| {
            (0..config.users_per_cell)
                .map(|i| {
                    let mut rng = substream(config.seed, &[tag::USER_POSITION, k as u64, i as u64]);
                    uniform_in_disk(&mut rng, centers[k], radius)
                })
                .collect()
        })
        .collect();
    Topology {
        cell_centers: centers,
        bs_positions,
        user_positions,
    }
}

/// All channel matrices of one realization.
///
/// `matrix(user, l)` is the `N x (M * Q)` concatenation of the per-BS channels
/// from cell `l`'s BSs to `user`; `block(user, l, q)` is one `N x M` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `h[k][i][l]`: channel from cell `l` to user `(k, i)`, `N x (M * Q)`.
    h: Vec<Vec<Vec<CMat>>>,
    pub cells: usize,
    pub bs_per_cell: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
}

impl ChannelSet {
    /// Builds a channel set from explicit matrices, `h[k][i][l]` of shape
    /// `N x (M * Q)`. Used by tests and by loaders of dumped realizations.
    pub fn from_matrices(h: Vec<Vec<Vec<CMat>>>, tx_antennas: usize) -> Result<Self> {
        let cells = h.len();
        let users_per_cell = h.first().map(|c| c.len()).unwrap_or(0);
        if cells == 0 || users_per_cell == 0 {
            return Err(CoreError::DimensionMismatch("empty channel set".into()));
        }
        let rx_antennas = h[0][0][0].nrows();
        let stacked = h[0][0][0].ncols();
        if tx_antennas == 0 || stacked % tx_antennas != 0 {
            return Err(CoreError::DimensionMismatch(
                "stacked width must be a multiple of the antenna count".into(),
            ));
        }
        let bs_per_cell = stacked / tx_antennas;
        for cell in &h {
            if cell.len() != users_per_cell {
                return Err(CoreError::DimensionMismatch("ragged user count".into()));
            }
            for user in cell {
                if user.len() != cells {
                    return Err(CoreError::DimensionMismatch(
                        "every user needs one matrix per cell".into(),
                    ));
                }
                for m in user {
                    if m.nrows() != rx_antennas || m.ncols() != stacked {
                        return Err(CoreError::DimensionMismatch(format!(
                            "expected {rx_antennas}x{stacked}, got {}x{}",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(CoreError::Numerical("non-finite channel entry".into()));
                    }
                }
            }
        }
        Ok(Self {
            h,
            cells,
            bs_per_cell,
            users_per_cell,
            tx_antennas,
            rx_antennas,
        })
    }

    pub fn matrix(&self, user: UserId, from_cell: usize) -> &CMat {
        &self.h[user.cell][user.user][from_cell]
    }

    /// The `N x M` block for one (user, BS) pair.
    pub fn block(
        &self,
        user: UserId,
        from_cell: usize,
        bs: usize,
    ) -> nalgebra::DMatrixView<'_, C64> {
        self.matrix(user, from_cell)
            .columns(bs * self.tx_antennas, self.tx_antennas)
    }

    pub fn user_ids(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.cells)
            .flat_map(move |k| (0..self.users_per_cell).map(move |i| UserId::new(k, i)))
    }

    /// Dumps all entries as CSV rows `(k, i, l, q, row, col, re, im)`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "k,i,l,q,row,col,re,im")?;
        for user in self.user_ids().collect::<Vec<_>>() {
            for l in 0..self.cells {
                for q in 0..self.bs_per_cell {
                    let block = self.block(user, l, q);
                    for row in 0..self.rx_antennas {
                        for col in 0..self.tx_antennas {
                            let z = block[(row, col)];
                            writeln!(
                                out,
                                "{},{},{},{},{},{},{},{}",
                                user.cell, user.user, l, q, row, col, z.re, z.im
                            )?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Order-stable hash of all entries; used to confirm that paired
    /// algorithm runs consumed the identical realization.
    pub fn content_hash(&self) -> u64 {
        let mut state = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |bits: u64| {
            state ^= bits;
            state = state.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for k in 0..self.cells {
            for i in 0..self.users_per_cell {
                for l in 0..self.cells {
                    for z in self.h[k][i][l].iter() {
                        mix(z.re.to_bits());
                        mix(z.im.to_bits());
                    }
                }
            }
        }
        state
    }
}

/// Per-dimension Gaussian variance of a channel entry at clamped distance `d`
/// with shadowing factor `l` (linear).
pub fn pathloss_variance(d: f64, l: f64) -> f64 {
    (200.0 / d).powi(3) * l
}

/// Draws one channel realization for a topology. Pure in (config, seed).
pub fn generate_channels(topology: &Topology, config: &NetworkConfig) -> ChannelSet {
    let (m, n) = (config.tx_antennas, config.rx_antennas);
    let shadow_scale = config.shadowing_sigma_db;
    let h = (0..config.cells)
        .map(|k| {
            (0..config.users_per_cell)
                .map(|i| {
                    let user = UserId::new(k, i);
                    (0..config.cells)
                        .map(|l| {
                            let mut full = CMat::zeros(n, m * config.bs_per_cell);
                            for q in 0..config.bs_per_cell {
                                let mut rng = substream(
                                    config.seed,
                                    &[tag::CHANNEL, k as u64, i as u64, l as u64, q as u64],
                                );
                                // One independent shadowing draw per (user, BS) pair.
                                let shadow_db = shadow_scale * standard_normal(&mut rng);
                                let shadow = 10f64.powf(shadow_db / 10.0);
                                let d = topology
                                    .distance(user, l, q)
                                    .max(config.min_link_distance_m);
                                let sigma = pathloss_variance(d, shadow).sqrt();
                                for col in 0..m {
                                    for row in 0..n {
                                        let (re, im) = standard_normal_pair(&mut rng);
                                        full[(row, q * m + col)] =
                                            C64::new(sigma * re, sigma * im);
                                    }
                                }
                            }
                            full
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ChannelSet {
        h,
        cells: config.cells,
        bs_per_cell: config.bs_per_cell,
        users_per_cell: config.users_per_cell,
        tx_antennas: m,
        rx_antennas: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> NetworkConfig {
        NetworkConfig::default_with_seed(seed)
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut c = cfg(1);
        c.power = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.cells = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.shadowing_sigma_db = -1.0;
        assert!(c.validate().is_err());
        assert!(cfg(1).validate().is_ok());
    }

    #[test]
    fn single_cell_topology_is_centered() {
        let mut c = cfg(3);
        c.cells = 1;
        let topo = generate_topology(&c);
        assert_eq!(topo.cell_centers, vec![[0.0, 0.0]]);
        let radius = c.cell_spacing_m / 2.0;
        for p in topo.bs_positions[0].iter().chain(&topo.user_positions[0]) {
            assert!((p[0].powi(2) + p[1].powi(2)).sqrt() <= radius);
        }
    }

    #[test]
    fn adjacent_centers_are_exactly_spaced() {
        let c = cfg(4);
        let topo = generate_topology(&c);
        let (a, b) = (topo.cell_centers[0], topo.cell_centers[1]);
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert_eq!(d, 2000.0);
    }

    #[test]
    fn topology_and_channels_are_deterministic() {
        let c = cfg(42);
        let t1 = generate_topology(&c);
        let t2 = generate_topology(&c);
        assert_eq!(t1, t2);
        let h1 = generate_channels(&t1, &c);
        let h2 = generate_channels(&t2, &c);
        assert_eq!(h1, h2);
        assert_eq!(h1.content_hash(), h2.content_hash());
    }

    #[test]
    fn pathloss_formula_values() {
        assert_eq!(pathloss_variance(200.0, 1.0), 1.0);
        assert_eq!(pathloss_variance(400.0, 1.0), 0.125);
    }

    #[test]
    fn snr_formula() {
        let mut c = cfg(1);
        c.power = 1.0;
        c.bs_per_cell = 20;
        assert_eq!(snr_of(&c), 20.0);
        c.power = 0.5;
        c.bs_per_cell = 4;
        assert_eq!(snr_of(&c), 2.0);
        c.power = 5.0;
        c.bs_per_cell = 20;
        assert_eq!(snr_of(&c), 100.0);
        assert!((10.0 * snr_of(&c).log10() - 20.0).abs() < 1e-12);
    }

    /// Empirical per-entry second moment against the stated distribution:
    /// with shadowing disabled and every distance equal to `d`, the expected
    /// |entry|^2 is `2 * (200 / d)^3`.
    #[test]
    fn empirical_entry_variance_matches_model() {
        for d in [200.0, 400.0] {
            let mut c = cfg(9);
            c.shadowing_sigma_db = 0.0;
            c.cells = 1;
            c.bs_per_cell = 25;
            c.users_per_cell = 25;
            c.tx_antennas = 4;
            c.rx_antennas = 4;
            // Pin all links to distance d: shrink the cell so every raw
            // distance is tiny, then clamp from below at d.
            c.cell_spacing_m = 0.002;
            c.min_link_distance_m = d;
            let topo = generate_topology(&c);
            let ch = generate_channels(&topo, &c);
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..c.users_per_cell {
                let m = ch.matrix(UserId::new(0, i), 0);
                for z in m.iter() {
                    sum += z.norm_sqr();
                    count += 1;
                }
            }
            assert!(count >= 10_000, "need >= 1e4 draws, got {count}");
            let mean = sum / count as f64;
            let expected = 2.0 * pathloss_variance(d, 1.0);
            // Var(|z|^2) = 2 sigma^4 per dimension pair => std err below.
            let se = (2.0 * (expected / 2.0).powi(2) * 2.0 / count as f64).sqrt();
            assert!(
                (mean - expected).abs() <= 3.0 * se,
                "d={d}: mean {mean} expected {expected} se {se}"
            );
        }
    }

    #[test]
    fn channel_csv_has_all_pairs() {
        let mut c = cfg(5);
        c.cells = 2;
        c.bs_per_cell = 2;
        c.users_per_cell = 1;
        c.tx_antennas = 2;
        c.rx_antennas = 1;
        let ch = generate_channels(&generate_topology(&c), &c);
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // header + K*I*K*Q*N*M rows
        assert_eq!(text.lines().count(), 1 + 2 * 1 * 2 * 2 * 1 * 2);
        assert!(text.starts_with("k,i,l,q,row,col,re,im"));
    }
}
