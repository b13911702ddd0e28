//! Per-user signal-level math: received covariance, MMSE receiver, MSE,
//! achievable rate, utility models, and the objective evaluators of the
//! penalized utility problem and its weighted-MSE reformulation.
//!
//! Rates are in nats throughout; the reporting layer divides by `ln 2`.

use nalgebra::Cholesky;

use crate::error::{CoreError, Result};
use crate::net::ChannelSet;
use crate::{C64, CMat, CVec, UserId};

/// Clamp applied to the minimum MSE before taking logs; guards catastrophic
/// cancellation at very high SNR.
pub const MMSE_CLAMP_LO: f64 = 1e-300;

/// Per-(user, own-cell-BS) transmit beamformers, stored stacked: `v[k][i]` is
/// the length `M * Q` concatenation of user `(k, i)`'s per-BS blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub v: Vec<Vec<CVec>>,
    pub block_len: usize,
}

impl BeamformerSet {
    pub fn zeros(cells: usize, users_per_cell: usize, stacked_len: usize, block_len: usize) -> Self {
        Self {
            v: vec![vec![CVec::zeros(stacked_len); users_per_cell]; cells],
            block_len,
        }
    }

    pub fn stacked(&self, user: UserId) -> &CVec {
        &self.v[user.cell][user.user]
    }

    /// The `M`-vector this user gets from BS `q` of its own cell.
    pub fn block(&self, user: UserId, bs: usize) -> nalgebra::DVectorView<'_, C64> {
        self.v[user.cell][user.user].rows(bs * self.block_len, self.block_len)
    }

    pub fn block_norm(&self, user: UserId, bs: usize) -> f64 {
        self.block(user, bs).norm()
    }

    pub fn bs_count(&self) -> usize {
        if self.v.is_empty() || self.v[0].is_empty() {
            0
        } else {
            self.v[0][0].len() / self.block_len
        }
    }

    /// Transmit power of BS `q` in cell `k`: sum over the cell's users.
    pub fn bs_power(&self, cell: usize, bs: usize) -> f64 {
        self.v[cell]
            .iter()
            .map(|v| v.rows(bs * self.block_len, self.block_len).norm_squared())
            .sum()
    }

    /// Mixed l2/l1 penalty of one user: sum of its per-BS block norms.
    pub fn group_norm(&self, user: UserId) -> f64 {
        (0..self.bs_count())
            .map(|q| self.block_norm(user, q))
            .sum()
    }

    pub fn is_power_feasible(&self, budget: f64, tol: f64) -> bool {
        (0..self.v.len()).all(|k| {
            (0..self.bs_count()).all(|q| self.bs_power(k, q) <= budget + tol)
        })
    }
}

/// Per-user receive vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverSet {
    pub u: Vec<Vec<CVec>>,
}

impl ReceiverSet {
    pub fn get(&self, user: UserId) -> &CVec {
        &self.u[user.cell][user.user]
    }
}

/// Per-user positive MSE weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub w: Vec<Vec<f64>>,
}

impl WeightSet {
    pub fn get(&self, user: UserId) -> f64 {
        self.w[user.cell][user.user]
    }
}

/// System utility applied to each user's rate.
///
/// All variants are concave and strictly increasing in the rate, so the
/// derivative used as the MSE-weight multiplier is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilityModel {
    SumRate,
    /// Per-user constant rate weights, indexed `[cell][user]`.
    WeightedSumRate(Vec<Vec<f64>>),
    /// `u(R) = log R`; rates are floored at `rate_floor` inside utility
    /// evaluation only, so the first iteration from a random start is
    /// well-defined.
    ProportionalFair { rate_floor: f64 },
}

impl UtilityModel {
    pub fn proportional_fair() -> Self {
        Self::ProportionalFair { rate_floor: 1e-12 }
    }

    pub fn value(&self, user: UserId, rate: f64) -> f64 {
        match self {
            Self::SumRate => rate,
            Self::WeightedSumRate(a) => a[user.cell][user.user] * rate,
            Self::ProportionalFair { rate_floor } => rate.max(*rate_floor).ln(),
        }
    }

    /// `du/dR` at the given rate; strictly positive.
    pub fn derivative(&self, user: UserId, rate: f64) -> f64 {
        match self {
            Self::SumRate => 1.0,
            Self::WeightedSumRate(a) => a[user.cell][user.user],
            Self::ProportionalFair { rate_floor } => 1.0 / rate.max(*rate_floor),
        }
    }

    /// True when some rate had to be floored during evaluation.
    pub fn floors_at(&self, rate: f64) -> bool {
        matches!(self, Self::ProportionalFair { rate_floor } if rate < *rate_floor)
    }
}

/// Covariance, minimum MSE and rate of one link.
#[derive(Debug, Clone)]
pub struct LinkStats {
    pub covariance: CMat,
    pub mse: f64,
    pub rate: f64,
}

/// Received signal covariance `C = sum_(l,j) H v v^H H^H + sigma^2 I`.
pub fn received_covariance(
    channels: &ChannelSet,
    v: &BeamformerSet,
    noise_power: f64,
    user: UserId,
) -> Result<CMat> {
    let n = channels.rx_antennas;
    let mut c = CMat::identity(n, n) * C64::new(noise_power, 0.0);
    for l in 0..channels.cells {
        let h = channels.matrix(user, l);
        if h.ncols() != v.v[l][0].len() {
            return Err(CoreError::DimensionMismatch(format!(
                "channel from cell {l} has {} columns, beamformers have length {}",
                h.ncols(),
                v.v[l][0].len()
            )));
        }
        for vj in &v.v[l] {
            let hv = h * vj;
            // rank-1 accumulation: C += (H v)(H v)^H
            c.ger(C64::new(1.0, 0.0), &hv, &hv.conjugate(), C64::new(1.0, 0.0));
        }
    }
    Ok(c)
}

fn cholesky_solve(cov: &CMat, rhs: &CVec) -> Result<CVec> {
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| CoreError::Numerical("received covariance is not positive definite".into()))?;
    Ok(chol.solve(rhs))
}

/// MMSE receiver `u = C^{-1} H v`.
pub fn mmse_receiver(covariance: &CMat, channel: &CMat, v_user: &CVec) -> Result<CVec> {
    let rhs = channel * v_user;
    cholesky_solve(covariance, &rhs)
}

/// MSE of `user` under receiver `u`:
/// `|1 - u^H H v|^2 + sum_(l,j)!=(k,i) |u^H H v_j|^2 + sigma^2 ||u||^2`.
pub fn mse(
    channels: &ChannelSet,
    v: &BeamformerSet,
    u: &ReceiverSet,
    noise_power: f64,
    user: UserId,
) -> f64 {
    let ui = u.get(user);
    let own = channels.matrix(user, user.cell);
    let direct = C64::new(1.0, 0.0) - (ui.adjoint() * own * v.stacked(user))[(0, 0)];
    let mut e = direct.norm_sqr() + noise_power * ui.norm_squared();
    for l in 0..channels.cells {
        let h = channels.matrix(user, l);
        let uh = ui.adjoint() * h;
        for (j, vj) in v.v[l].iter().enumerate() {
            if l == user.cell && j == user.user {
                continue;
            }
            e += (&uh * vj)[(0, 0)].norm_sqr();
        }
    }
    e
}

/// Minimum MSE `e = 1 - v^H H^H C^{-1} H v`, clamped into
/// `[MMSE_CLAMP_LO, 1]`.
pub fn mmse_value(
    channels: &ChannelSet,
    v: &BeamformerSet,
    noise_power: f64,
    user: UserId,
) -> Result<f64> {
    let cov = received_covariance(channels, v, noise_power, user)?;
    let hv = channels.matrix(user, user.cell) * v.stacked(user);
    let solved = cholesky_solve(&cov, &hv)?;
    let quad = (hv.adjoint() * solved)[(0, 0)].re;
    Ok((1.0 - quad).clamp(MMSE_CLAMP_LO, 1.0))
}

/// Achievable rate in nats; equals `-log(e_mmse)` for single-stream links.
pub fn user_rate(
    channels: &ChannelSet,
    v: &BeamformerSet,
    noise_power: f64,
    user: UserId,
) -> Result<f64> {
    Ok(-mmse_value(channels, v, noise_power, user)?.ln())
}

/// Covariance, minimum MSE and rate of one link in one pass.
pub fn link_stats(
    channels: &ChannelSet,
    v: &BeamformerSet,
    noise_power: f64,
    user: UserId,
) -> Result<LinkStats> {
    let covariance = received_covariance(channels, v, noise_power, user)?;
    let hv = channels.matrix(user, user.cell) * v.stacked(user);
    let solved = cholesky_solve(&covariance, &hv)?;
    let quad = (hv.adjoint() * solved)[(0, 0)].re;
    let mse = (1.0 - quad).clamp(MMSE_CLAMP_LO, 1.0);
    Ok(LinkStats {
        covariance,
        mse,
        rate: -mse.ln(),
    })
}

/// Sum of per-user rates in nats.
pub fn sum_rate(channels: &ChannelSet, v: &BeamformerSet, noise_power: f64) -> Result<f64> {
    let mut total = 0.0;
    for user in channels.user_ids().collect::<Vec<_>>() {
        total += user_rate(channels, v, noise_power, user)?;
    }
    Ok(total)
}

/// Total mixed l2/l1 penalty `sum_k lambda_k sum_i sum_q ||v_i[q]||`.
pub fn penalty_value(v: &BeamformerSet, lambdas: &[f64]) -> f64 {
    v.v.iter()
        .enumerate()
        .map(|(k, cell)| {
            lambdas[k]
                * cell
                    .iter()
                    .enumerate()
                    .map(|(i, _)| v.group_norm(UserId::new(k, i)))
                    .sum::<f64>()
        })
        .sum()
}

/// Penalized utility objective:
/// `sum u(R) - sum_k lambda_k sum_i sum_q ||v_i[q]||`.
pub fn objective_p1(
    channels: &ChannelSet,
    v: &BeamformerSet,
    utility: &UtilityModel,
    lambdas: &[f64],
    noise_power: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for user in channels.user_ids().collect::<Vec<_>>() {
        let rate = user_rate(channels, v, noise_power, user)?;
        total += utility.value(user, rate);
    }
    Ok(total - penalty_value(v, lambdas))
}

/// Weighted-MSE objective for the sum-rate utility:
/// `sum (w e - log w) + penalty`. At `u = u*(v)`, `w = 1/e` this equals
/// `|users| - objective_p1`.
pub fn objective_p2_sumrate(
    channels: &ChannelSet,
    v: &BeamformerSet,
    u: &ReceiverSet,
    w: &WeightSet,
    lambdas: &[f64],
    noise_power: f64,
) -> f64 {
    let mut total = 0.0;
    for user in channels.user_ids().collect::<Vec<_>>() {
        let wk = w.get(user);
        assert!(wk > 0.0, "weights must be strictly positive (w = {wk})");
        total += wk * mse(channels, v, u, noise_power, user) - wk.ln();
    }
    total + penalty_value(v, lambdas)
}
