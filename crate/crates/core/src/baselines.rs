//! Comparison algorithms: unregularized WMMSE (full coordination), WMMSE with
//! nearest-BS assignment, and greedy-clustered zero-forcing.
//!
//! The first two reuse the main solver verbatim — full coordination is the
//! `lambda = 0` special case, and the nearest-neighbor variant additionally
//! hard-zeroes every block outside the user's assigned BS. The zero-forcing
//! comparator builds block-diagonalization beams inside fixed BS clusters and
//! never iterates.

use nalgebra::SymmetricEigen;

use crate::error::Result;
use crate::net::{ChannelSet, NetworkConfig, Topology};
use crate::signal::{BeamformerSet, UtilityModel};
use crate::swmmse::{swmmse_masked, BlockMask, LambdaPolicy, SwmmseParams, SwmmseTrace};
use crate::{C64, CMat, CVec, UserId};

/// Zero-forcing comparator settings. Users are dropped weakest-direct-channel
/// first when a cluster cannot support all attached users.
#[derive(Debug, Clone, Copy)]
pub struct ZfConfig {
    pub cluster_size: usize,
}

/// One serving BS per user, used to hard-zero all other blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedAssignment {
    /// `serving[k][i]`: BS index within the user's own cell.
    pub serving: Vec<Vec<usize>>,
}

/// Fixed BS clusters within each cell plus the user-to-cluster attachment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// `clusters[k]`: list of BS-index groups partitioning cell `k`'s BSs.
    pub clusters: Vec<Vec<Vec<usize>>>,
    /// `user_cluster[k][i]`: index into `clusters[k]`.
    pub user_cluster: Vec<Vec<usize>>,
}

impl Clustering {
    /// BS set of the cluster serving `user`.
    pub fn cluster_of(&self, user: UserId) -> &[usize] {
        &self.clusters[user.cell][self.user_cluster[user.cell][user.user]]
    }
}

/// Full-coordination WMMSE: the solver with the penalty switched off.
pub fn wmmse_full(
    channels: &ChannelSet,
    config: &NetworkConfig,
    utility: &UtilityModel,
    params: &SwmmseParams,
) -> Result<(BeamformerSet, SwmmseTrace)> {
    let mut p = params.clone();
    p.lambda_policy = LambdaPolicy::Fixed(vec![0.0; config.cells]);
    swmmse_masked(channels, config, utility, &p, None)
}

/// Assigns every user to the geographically nearest BS in its own cell, ties
/// to the lowest BS index.
pub fn nn_assignment(topology: &Topology) -> FixedAssignment {
    let serving = topology
        .user_positions
        .iter()
        .enumerate()
        .map(|(k, users)| {
            (0..users.len())
                .map(|i| {
                    let user = UserId::new(k, i);
                    let mut best = 0usize;
                    let mut best_d = f64::INFINITY;
                    for q in 0..topology.bs_positions[k].len() {
                        let d = topology.distance(user, k, q);
                        if d < best_d {
                            best_d = d;
                            best = q;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    FixedAssignment { serving }
}

/// WMMSE restricted to one serving BS per user.
pub fn wmmse_nn(
    channels: &ChannelSet,
    config: &NetworkConfig,
    utility: &UtilityModel,
    params: &SwmmseParams,
    assignment: &FixedAssignment,
) -> Result<(BeamformerSet, SwmmseTrace)> {
    let mask: BlockMask = (0..config.cells)
        .map(|k| {
            (0..config.users_per_cell)
                .map(|i| {
                    (0..config.bs_per_cell)
                        .map(|q| assignment.serving[k][i] == q)
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut p = params.clone();
    p.lambda_policy = LambdaPolicy::Fixed(vec![0.0; config.cells]);
    swmmse_masked(channels, config, utility, &p, Some(&mask))
}

/// Spectral norm (largest singular value) of a complex matrix.
fn matrix_2norm(m: &CMat) -> f64 {
    spectral_decomp(&(m.adjoint() * m))
        .first()
        .map(|&(_, e)| e.max(0.0).sqrt())
        .unwrap_or(0.0)
}

/// Eigenpairs of a Hermitian PSD matrix, sorted by descending eigenvalue.
fn spectral_decomp(g: &CMat) -> Vec<(CVec, f64)> {
    let eig = SymmetricEigen::new(g.clone());
    let mut pairs: Vec<(CVec, f64)> = (0..g.nrows())
        .map(|j| (eig.eigenvectors.column(j).into_owned(), eig.eigenvalues[j]))
        .collect();
    pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    pairs
}

/// Concatenated channel from the cluster's BSs to `user` (own cell).
fn cluster_channel(channels: &ChannelSet, user: UserId, cluster: &[usize]) -> CMat {
    let m = channels.tx_antennas;
    let mut out = CMat::zeros(channels.rx_antennas, m * cluster.len());
    for (pos, &q) in cluster.iter().enumerate() {
        out.view_mut((0, pos * m), (channels.rx_antennas, m))
            .copy_from(&channels.block(user, user.cell, q));
    }
    out
}

/// Greedy cluster formation and strongest-channel user attachment.
///
/// Within each cell, a cluster is seeded with the lowest-index unclustered BS
/// and filled with its nearest unclustered BSs (ties to the lowest index)
/// until it holds `cluster_size` BSs or none remain. Users attach to the
/// cluster whose concatenated direct channel has the largest 2-norm.
pub fn zf_greedy_clusters(
    topology: &Topology,
    channels: &ChannelSet,
    zf: &ZfConfig,
) -> Clustering {
    let cells = topology.bs_positions.len();
    let mut clusters = Vec::with_capacity(cells);
    for k in 0..cells {
        let q_total = topology.bs_positions[k].len();
        let size = zf.cluster_size.clamp(1, q_total);
        let mut unclustered: Vec<usize> = (0..q_total).collect();
        let mut cell_clusters = Vec::new();
        while !unclustered.is_empty() {
            let seed = unclustered[0];
            let sp = topology.bs_positions[k][seed];
            // nearest first, ties by index (sort is stable over the
            // index-ordered list)
            let mut rest: Vec<usize> = unclustered[1..].to_vec();
            rest.sort_by(|&a, &b| {
                let da = dist2(topology.bs_positions[k][a], sp);
                let db = dist2(topology.bs_positions[k][b], sp);
                da.partial_cmp(&db).unwrap()
            });
            let mut cluster = vec![seed];
            cluster.extend(rest.iter().take(size - 1).copied());
            cluster.sort_unstable();
            unclustered.retain(|q| !cluster.contains(q));
            cell_clusters.push(cluster);
        }
        clusters.push(cell_clusters);
    }
    let user_cluster = (0..cells)
        .map(|k| {
            (0..channels.users_per_cell)
                .map(|i| {
                    let user = UserId::new(k, i);
                    let mut best = 0usize;
                    let mut best_norm = -1.0f64;
                    for (c, cluster) in clusters[k].iter().enumerate() {
                        let norm = matrix_2norm(&cluster_channel(channels, user, cluster));
                        if norm > best_norm {
                            best_norm = norm;
                            best = c;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    Clustering {
        clusters,
        user_cluster,
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Orthonormal basis of the null space of `stacked` (columns of the result),
/// from the eigen-decomposition of the Gram matrix.
fn null_space_basis(stacked: &CMat, dim: usize) -> CMat {
    if stacked.nrows() == 0 {
        return CMat::identity(dim, dim);
    }
    let gram = stacked.adjoint() * stacked;
    let pairs = spectral_decomp(&gram);
    let max_e = pairs.first().map(|p| p.1).unwrap_or(0.0);
    let tol = 1e-10 * max_e.max(1.0);
    let kept: Vec<&CVec> = pairs
        .iter()
        .filter(|(_, e)| *e <= tol)
        .map(|(v, _)| v)
        .collect();
    let mut basis = CMat::zeros(dim, kept.len());
    for (j, v) in kept.iter().enumerate() {
        basis.column_mut(j).copy_from(*v);
    }
    basis
}

/// Block-diagonalization zero-forcing beams for a fixed clustering.
///
/// Within each cluster, every served user's beam lies in the null space of
/// the other served users' concatenated channels; when the cluster's antennas
/// cannot support all attached users, the weakest users by direct-channel
/// 2-norm are dropped one at a time. Every stream gets the same amplitude,
/// chosen so the most-loaded BS of the cluster meets its budget exactly.
pub fn zf_beamformers(
    clustering: &Clustering,
    channels: &ChannelSet,
    config: &NetworkConfig,
) -> BeamformerSet {
    let m = config.tx_antennas;
    let mut out = BeamformerSet::zeros(
        config.cells,
        config.users_per_cell,
        config.stacked_len(),
        m,
    );
    for k in 0..config.cells {
        for (c, cluster) in clustering.clusters[k].iter().enumerate() {
            let attached: Vec<usize> = (0..config.users_per_cell)
                .filter(|&i| clustering.user_cluster[k][i] == c)
                .collect();
            if attached.is_empty() {
                continue;
            }
            let dim = m * cluster.len();
            let chans: Vec<(usize, CMat)> = attached
                .iter()
                .map(|&i| (i, cluster_channel(channels, UserId::new(k, i), cluster)))
                .collect();
            // Drop weakest users until every kept user has a nonempty null
            // space to beam into.
            let mut kept: Vec<usize> = {
                let mut order: Vec<usize> = (0..chans.len()).collect();
                order.sort_by(|&a, &b| {
                    matrix_2norm(&chans[b].1)
                        .partial_cmp(&matrix_2norm(&chans[a].1))
                        .unwrap()
                });
                order // strongest first
            };
            while !kept.is_empty()
                && (kept.len() - 1) * config.rx_antennas >= dim
            {
                kept.pop(); // weakest is last
            }
            if kept.is_empty() {
                continue;
            }
            // Unit-norm beam directions in the cluster coordinate system.
            let mut directions: Vec<(usize, CVec)> = Vec::new();
            for &idx in &kept {
                let others: Vec<&CMat> = kept
                    .iter()
                    .filter(|&&j| j != idx)
                    .map(|&j| &chans[j].1)
                    .collect();
                let mut stacked = CMat::zeros(others.len() * config.rx_antennas, dim);
                for (r, h) in others.iter().enumerate() {
                    stacked
                        .view_mut((r * config.rx_antennas, 0), (config.rx_antennas, dim))
                        .copy_from(*h);
                }
                let basis = null_space_basis(&stacked, dim);
                if basis.ncols() == 0 {
                    continue;
                }
                // Matched filter within the null space.
                let projected = &chans[idx].1 * &basis;
                let top = spectral_decomp(&(projected.adjoint() * &projected))
                    .remove(0)
                    .0;
                let mut g = &basis * top;
                let n = g.norm();
                if n > 0.0 {
                    g /= C64::new(n, 0.0);
                    directions.push((chans[idx].0, g));
                }
            }
            if directions.is_empty() {
                continue;
            }
            // Single amplitude for all streams, tight at the busiest BS.
            let mut beta2 = f64::INFINITY;
            for (pos, _) in cluster.iter().enumerate() {
                let load: f64 = directions
                    .iter()
                    .map(|(_, g)| g.rows(pos * m, m).norm_squared())
                    .sum();
                if load > 0.0 {
                    beta2 = beta2.min(config.power / load);
                }
            }
            let beta = C64::new(beta2.sqrt(), 0.0);
            for (i, g) in &directions {
                for (pos, &q) in cluster.iter().enumerate() {
                    out.v[k][*i]
                        .rows_mut(q * m, m)
                        .copy_from(&(g.rows(pos * m, m) * beta));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{generate_channels, generate_topology};
    use crate::swmmse::{extract_clusters, swmmse, CLUSTER_THRESHOLD_REL};

    fn small_net(seed: u64) -> (NetworkConfig, Topology, ChannelSet) {
        let mut cfg = NetworkConfig::default_with_seed(seed);
        cfg.cells = 2;
        cfg.bs_per_cell = 3;
        cfg.users_per_cell = 2;
        let topo = generate_topology(&cfg);
        let ch = generate_channels(&topo, &cfg);
        (cfg, topo, ch)
    }

    #[test]
    fn wmmse_full_matches_lambda_zero_run() {
        let (cfg, _, ch) = small_net(9);
        let mut params = SwmmseParams::default_with_seed(9);
        params.outer_tol = 1e-3;
        params.max_outer_iters = 40;
        let (va, ta) = wmmse_full(&ch, &cfg, &UtilityModel::SumRate, &params).unwrap();
        let mut p2 = params.clone();
        p2.lambda_policy = LambdaPolicy::Fixed(vec![0.0; cfg.cells]);
        let (vb, tb) = swmmse(&ch, &cfg, &UtilityModel::SumRate, &p2).unwrap();
        assert_eq!(va.v, vb.v);
        assert_eq!(ta.records.len(), tb.records.len());
        for (a, b) in ta.records.iter().zip(&tb.records) {
            assert_eq!(a.objective_p1_nats, b.objective_p1_nats);
        }
    }

    #[test]
    fn nn_assignment_matches_brute_force() {
        let (_, topo, _) = small_net(11);
        let a = nn_assignment(&topo);
        for k in 0..topo.user_positions.len() {
            for i in 0..topo.user_positions[k].len() {
                let user = UserId::new(k, i);
                let best = (0..topo.bs_positions[k].len())
                    .min_by(|&p, &q| {
                        topo.distance(user, k, p)
                            .partial_cmp(&topo.distance(user, k, q))
                            .unwrap()
                    })
                    .unwrap();
                assert_eq!(a.serving[k][i], best);
            }
        }
    }

    #[test]
    fn nn_serving_sets_are_singletons() {
        let (cfg, topo, ch) = small_net(13);
        let mut params = SwmmseParams::default_with_seed(13);
        params.outer_tol = 1e-2;
        params.max_outer_iters = 30;
        let a = nn_assignment(&topo);
        let (v, _) = wmmse_nn(&ch, &cfg, &UtilityModel::SumRate, &params, &a).unwrap();
        assert!(v.is_power_feasible(cfg.power, 1e-9 * cfg.power));
        let clusters = extract_clusters(&v, cfg.power, cfg.users_per_cell, CLUSTER_THRESHOLD_REL);
        for k in 0..cfg.cells {
            for i in 0..cfg.users_per_cell {
                let s = clusters.serving_set(UserId::new(k, i));
                assert!(s.len() <= 1);
                if let Some(&q) = s.first() {
                    assert_eq!(q, a.serving[k][i]);
                }
            }
        }
    }

    #[test]
    fn greedy_clusters_trivial_sizes() {
        let (cfg, topo, ch) = small_net(17);
        let all = zf_greedy_clusters(&topo, &ch, &ZfConfig { cluster_size: cfg.bs_per_cell });
        assert_eq!(all.clusters[0], vec![(0..cfg.bs_per_cell).collect::<Vec<_>>()]);
        let singles = zf_greedy_clusters(&topo, &ch, &ZfConfig { cluster_size: 1 });
        assert_eq!(singles.clusters[0].len(), cfg.bs_per_cell);
        assert!(singles.clusters[0].iter().all(|c| c.len() == 1));
    }

    #[test]
    fn greedy_clusters_collinear_hand_trace() {
        // 4 equally spaced collinear BSs, size 2: seeds 0 then 2.
        let topo = Topology {
            cell_centers: vec![[0.0, 0.0]],
            bs_positions: vec![vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]],
            user_positions: vec![vec![[0.5, 0.0]]],
        };
        let mut cfg = NetworkConfig::default_with_seed(0);
        cfg.cells = 1;
        cfg.bs_per_cell = 4;
        cfg.users_per_cell = 1;
        let ch = generate_channels(&topo, &cfg);
        let c = zf_greedy_clusters(&topo, &ch, &ZfConfig { cluster_size: 2 });
        assert_eq!(c.clusters[0], vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn zf_crosstalk_and_power() {
        let (cfg, topo, ch) = small_net(23);
        let clustering = zf_greedy_clusters(&topo, &ch, &ZfConfig { cluster_size: 3 });
        let v = zf_beamformers(&clustering, &ch, &cfg);
        assert!(v.is_power_feasible(cfg.power, 1e-9 * cfg.power));
        for k in 0..cfg.cells {
            for (c, cluster) in clustering.clusters[k].iter().enumerate() {
                let served: Vec<usize> = (0..cfg.users_per_cell)
                    .filter(|&i| {
                        clustering.user_cluster[k][i] == c
                            && v.stacked(UserId::new(k, i)).norm() > 0.0
                    })
                    .collect();
                for &i in &served {
                    for &j in &served {
                        if i == j {
                            continue;
                        }
                        let hj = cluster_channel(&ch, UserId::new(k, j), cluster);
                        let mut vi = CVec::zeros(cfg.tx_antennas * cluster.len());
                        for (pos, &q) in cluster.iter().enumerate() {
                            vi.rows_mut(pos * cfg.tx_antennas, cfg.tx_antennas)
                                .copy_from(&v.block(UserId::new(k, i), q));
                        }
                        let cross = (&hj * &vi).norm();
                        assert!(
                            cross <= 1e-9 * matrix_2norm(&hj) * vi.norm().max(1.0),
                            "crosstalk {cross}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn single_user_cluster_is_matched_filter_direction() {
        let mut cfg = NetworkConfig::default_with_seed(31);
        cfg.cells = 1;
        cfg.bs_per_cell = 1;
        cfg.users_per_cell = 1;
        let topo = generate_topology(&cfg);
        let ch = generate_channels(&topo, &cfg);
        let clustering = zf_greedy_clusters(&topo, &ch, &ZfConfig { cluster_size: 1 });
        let v = zf_beamformers(&clustering, &ch, &cfg);
        let user = UserId::new(0, 0);
        let vi = v.stacked(user).clone();
        assert!((vi.norm_squared() - cfg.power).abs() < 1e-9);
        // direction = top right singular vector of H
        let h = ch.matrix(user, 0);
        let top = spectral_decomp(&(h.adjoint() * h)).remove(0).0;
        let overlap = (top.adjoint() * &vi)[(0, 0)].norm();
        assert!((overlap - vi.norm()).abs() < 1e-8);
    }
}
