//! Joint base-station clustering and linear beamformer design for multicell
//! heterogeneous networks.
//!
//! A cell contains many distributed base stations (BSs) that can jointly serve
//! the cell's users. Serving every user from every BS maximizes throughput but
//! the backhaul cost grows with the cluster size, so each user should be served
//! by a small subset of BSs. This crate selects the serving clusters and the
//! transmit beamformers jointly, by maximizing a network utility penalized with
//! a mixed l2/l1 norm over the per-(BS, user) beamformer blocks. The penalty
//! drives whole blocks to zero, and the surviving blocks define the clusters.
//!
//! The solver is a three-block coordinate descent over receivers, MSE weights
//! and transmit beamformers (sparse weighted-MMSE). The beamformer block
//! decomposes per cell into a quadratically constrained group-LASSO problem
//! solved by block shrinkage with nested bisections on the group scale and the
//! power-budget multiplier.
//!
//! Modules:
//! - [`net`]: topology and random channel generation;
//! - [`signal`]: per-user covariance, MMSE receiver, rates and objectives;
//! - [`lasso`]: the per-cell constrained group-LASSO solver;
//! - [`swmmse`]: the outer sparse weighted-MMSE loop and cluster extraction;
//! - [`baselines`]: full-coordination WMMSE, nearest-BS WMMSE, greedy ZF.

pub mod baselines;
pub mod error;
pub mod lasso;
pub mod net;
pub mod rng;
pub mod signal;
pub mod swmmse;

pub use error::CoreError;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;

/// Identifies one user as (cell index, user index within the cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UserId {
    pub cell: usize,
    pub user: usize,
}

impl UserId {
    pub fn new(cell: usize, user: usize) -> Self {
        Self { cell, user }
    }
}
