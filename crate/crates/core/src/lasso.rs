//! Per-cell constrained group-LASSO solver.
//!
//! With receivers and weights fixed, each cell's beamformer subproblem is
//! quadratic in the stacked per-user vectors plus a sum of per-(user, BS)
//! block norms, under one power budget per BS. The constraint set is separable
//! across BSs, so the problem is solved by cyclic per-BS block updates. Each
//! block update is itself a quadratically constrained group-LASSO with a
//! closed-form structure: blocks whose residual norm falls below `lambda / 2`
//! shrink to exactly zero, and the remaining blocks are obtained from a linear
//! solve whose two scalar unknowns (the block-scale `delta` and the power
//! multiplier `mu`) are found by nested bisections.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{CoreError, Result};
use crate::net::ChannelSet;
use crate::signal::{ReceiverSet, WeightSet};
use crate::{C64, CMat, CVec};

/// Data of one cell's beamformer subproblem.
///
/// `j` is the `MQ x MQ` Hermitian PSD quadratic form shared by all users of
/// the cell; `d[i]` is user `i`'s linear term. Both carry a `Q x Q` block
/// partition with `M x M` (resp. `M`) blocks.
#[derive(Debug, Clone)]
pub struct QcGroupLassoInstance {
    pub j: CMat,
    pub d: Vec<CVec>,
    pub lambda: f64,
    /// Per-BS power budget.
    pub power: f64,
    pub bs_count: usize,
    pub block_len: usize,
}

/// Diagnostic state of one per-BS block solve.
#[derive(Debug, Clone)]
pub struct BlockSolveState {
    /// Power-budget multiplier at the solution.
    pub mu: f64,
    /// `(user, delta)` for each active user; `1 / delta` is the block norm.
    pub deltas: Vec<(usize, f64)>,
    /// Users whose residual exceeded the shrinkage threshold.
    pub active: Vec<usize>,
    /// Final `mu` bisection bracket.
    pub mu_bracket: (f64, f64),
    /// `(user, delta_upper_bound)` used to seed the inner bisections.
    pub delta_bounds: Vec<(usize, f64)>,
    /// Bisection tolerance in force.
    pub tol: f64,
}

impl QcGroupLassoInstance {
    pub fn stacked_len(&self) -> usize {
        self.bs_count * self.block_len
    }

    pub fn users(&self) -> usize {
        self.d.len()
    }

    pub fn j_block(&self, q: usize, p: usize) -> nalgebra::DMatrixView<'_, C64> {
        let m = self.block_len;
        self.j.view((q * m, p * m), (m, m))
    }

    pub fn d_block(&self, user: usize, q: usize) -> nalgebra::DVectorView<'_, C64> {
        self.d[user].rows(q * self.block_len, self.block_len)
    }

    /// `2 * max_{q,i} ||d_i[q]||`: any `lambda` above this forces the all-zero
    /// solution in a single pass from a zero start.
    pub fn lambda_bar(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.users() {
            for q in 0..self.bs_count {
                best = best.max(self.d_block(i, q).norm());
            }
        }
        2.0 * best
    }

    /// Smooth-plus-penalty objective of the cell subproblem.
    pub fn objective(&self, v_cell: &[CVec]) -> f64 {
        let mut total = 0.0;
        for (i, v) in v_cell.iter().enumerate() {
            let quad = (v.adjoint() * &self.j * v)[(0, 0)].re;
            let lin = (self.d[i].adjoint() * v)[(0, 0)].re;
            total += quad - 2.0 * lin;
            for q in 0..self.bs_count {
                total += self.lambda * v.rows(q * self.block_len, self.block_len).norm();
            }
        }
        total
    }

    /// Writes the instance as CSV rows for the external cross-check harness.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "dims,{},{},{}",
            self.bs_count,
            self.block_len,
            self.users()
        )?;
        writeln!(out, "lambda,{}", self.lambda)?;
        writeln!(out, "power,{}", self.power)?;
        for r in 0..self.j.nrows() {
            for c in 0..self.j.ncols() {
                let z = self.j[(r, c)];
                writeln!(out, "j,{},{},{},{}", r, c, z.re, z.im)?;
            }
        }
        for (i, d) in self.d.iter().enumerate() {
            for (idx, z) in d.iter().enumerate() {
                writeln!(out, "d,{},{},{},{}", i, idx, z.re, z.im)?;
            }
        }
        Ok(())
    }

    /// Parses the format produced by [`Self::write_csv`].
    pub fn read_csv<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut bs_count = 0usize;
        let mut block_len = 0usize;
        let mut users = 0usize;
        let mut lambda = None;
        let mut power = None;
        let mut j = None;
        let mut d: Vec<CVec> = Vec::new();
        let bad = |line: &str| CoreError::Parse(format!("bad instance line: {line}"));
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            match parts[0] {
                "dims" if parts.len() == 4 => {
                    bs_count = parts[1].parse().map_err(|_| bad(&line))?;
                    block_len = parts[2].parse().map_err(|_| bad(&line))?;
                    users = parts[3].parse().map_err(|_| bad(&line))?;
                    let n = bs_count * block_len;
                    j = Some(CMat::zeros(n, n));
                    d = vec![CVec::zeros(n); users];
                }
                "lambda" if parts.len() == 2 => {
                    lambda = Some(parts[1].parse().map_err(|_| bad(&line))?);
                }
                "power" if parts.len() == 2 => {
                    power = Some(parts[1].parse().map_err(|_| bad(&line))?);
                }
                "j" if parts.len() == 5 => {
                    let m = j.as_mut().ok_or_else(|| bad(&line))?;
                    let r: usize = parts[1].parse().map_err(|_| bad(&line))?;
                    let c: usize = parts[2].parse().map_err(|_| bad(&line))?;
                    m[(r, c)] = C64::new(
                        parts[3].parse().map_err(|_| bad(&line))?,
                        parts[4].parse().map_err(|_| bad(&line))?,
                    );
                }
                "d" if parts.len() == 5 => {
                    let i: usize = parts[1].parse().map_err(|_| bad(&line))?;
                    let idx: usize = parts[2].parse().map_err(|_| bad(&line))?;
                    if i >= users {
                        return Err(bad(&line));
                    }
                    d[i][idx] = C64::new(
                        parts[3].parse().map_err(|_| bad(&line))?,
                        parts[4].parse().map_err(|_| bad(&line))?,
                    );
                }
                _ => return Err(bad(&line)),
            }
        }
        Ok(Self {
            j: j.ok_or_else(|| CoreError::Parse("missing dims".into()))?,
            d,
            lambda: lambda.ok_or_else(|| CoreError::Parse("missing lambda".into()))?,
            power: power.ok_or_else(|| CoreError::Parse("missing power".into()))?,
            bs_count,
            block_len,
        })
    }
}

/// Assembles one cell's subproblem from the current receivers and weights.
///
/// The quadratic form sums over every user in the network (they all see
/// interference from this cell's BSs); the linear terms exist only for the
/// cell's own users.
pub fn build_instance(
    channels: &ChannelSet,
    u: &ReceiverSet,
    w: &WeightSet,
    cell: usize,
    lambda: f64,
    power: f64,
) -> Result<QcGroupLassoInstance> {
    let n = channels.tx_antennas * channels.bs_per_cell;
    let mut j = CMat::zeros(n, n);
    for user in channels.user_ids().collect::<Vec<_>>() {
        let weight = w.get(user);
        if !(weight > 0.0) {
            return Err(CoreError::ContractViolation(format!(
                "weight of user ({}, {}) is {weight}, must be > 0",
                user.cell, user.user
            )));
        }
        let h = channels.matrix(user, cell);
        let hu = h.adjoint() * u.get(user); // (MQ x 1)
        j.ger(
            C64::new(weight, 0.0),
            &hu,
            &hu.conjugate(),
            C64::new(1.0, 0.0),
        );
    }
    let d = (0..channels.users_per_cell)
        .map(|i| {
            let user = crate::UserId::new(cell, i);
            let h = channels.matrix(user, cell);
            (h.adjoint() * u.get(user)) * C64::new(w.get(user), 0.0)
        })
        .collect();
    Ok(QcGroupLassoInstance {
        j,
        d,
        lambda,
        power,
        bs_count: channels.bs_per_cell,
        block_len: channels.tx_antennas,
    })
}

/// Residual `c = d[q] - sum_{p != q} J[q,p] v[p]` for one (user, BS).
pub fn residual_c(
    instance: &QcGroupLassoInstance,
    v_cell: &[CVec],
    bs: usize,
    user: usize,
) -> CVec {
    let m = instance.block_len;
    let mut c = instance.d_block(user, bs).into_owned();
    for p in 0..instance.bs_count {
        if p == bs {
            continue;
        }
        let block = v_cell[user].rows(p * m, m);
        c -= instance.j_block(bs, p) * block;
    }
    c
}

/// True when the block must shrink to zero: `||c|| <= lambda / 2`.
pub fn shrink_test(c: &CVec, lambda: f64) -> bool {
    c.norm() <= lambda / 2.0
}

fn regularized_solve(j_qq: &CMat, eta: f64, c: &CVec) -> CVec {
    let m = j_qq.nrows();
    let b = j_qq + CMat::identity(m, m) * C64::new(eta, 0.0);
    match Cholesky::new(b.clone()) {
        Some(chol) => chol.solve(c),
        // PSD + eta with eta ~ 0 can fail numerically; fall back to the
        // minimum-norm solution.
        None => b
            .pseudo_inverse(1e-12)
            .map(|pinv| &pinv * c)
            .unwrap_or_else(|_| CVec::zeros(m)),
    }
}

/// `h(delta, mu) = delta * ||(J_qq + (lambda delta / 2 + mu) I)^{-1} c||`.
///
/// Strictly increasing in `delta` and strictly decreasing in `mu` whenever
/// `||c|| > lambda / 2`.
pub fn h_value(j_qq: &CMat, c: &CVec, lambda: f64, mu: f64, delta: f64) -> f64 {
    delta * regularized_solve(j_qq, lambda * delta / 2.0 + mu, c).norm()
}

/// Largest eigenvalue of a Hermitian PSD matrix.
pub fn spectral_radius(m: &CMat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].re.max(0.0);
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &e| acc.max(e))
}

/// Upper bisection bound for `delta` that guarantees `h(bound, mu) > 1` for
/// every `mu` in `[0, mu_hi]`. The factor 2 keeps the inequality strict under
/// floating point.
pub fn delta_upper_bound(rho_jqq: f64, c_norm: f64, lambda: f64, mu_hi: f64) -> f64 {
    2.0 * (rho_jqq + mu_hi) / (c_norm - lambda / 2.0)
}

/// Upper bisection bound for `mu` that guarantees the block powers sum below
/// the budget. The factor 2 keeps the inequality strict under floating point.
pub fn mu_upper_bound(active_count: usize, power: f64, max_c_norm: f64) -> f64 {
    2.0 * (active_count as f64 / power).sqrt() * max_c_norm
}

/// Solves `h(delta, mu) = 1` for `delta` by bisection.
///
/// Preconditions: `||c|| > lambda / 2`, `lambda > 0`, `mu >= 0`. Returns
/// `f64::INFINITY` when no finite solution exists (possible only when both
/// `J_qq = 0` and `mu = 0`, in which case the block norm is unbounded and the
/// power constraint must activate).
pub fn solve_delta(j_qq: &CMat, c: &CVec, lambda: f64, mu: f64, tol: f64) -> f64 {
    let c_norm = c.norm();
    assert!(
        c_norm > lambda / 2.0,
        "solve_delta requires an active block (||c|| > lambda / 2); shrink instead"
    );
    assert!(lambda > 0.0 && mu >= 0.0);
    let rho = spectral_radius(j_qq);
    let mut hi = delta_upper_bound(rho, c_norm, lambda, mu);
    if !(hi > 0.0) {
        return f64::INFINITY;
    }
    // The bound is strict mathematically; expand defensively if rounding bites.
    let mut guard = 0;
    while h_value(j_qq, c, lambda, mu, hi) <= 1.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 64 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0f64;
    while hi - lo > tol * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if h_value(j_qq, c, lambda, mu, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form scalar block update for the single-user, single-antenna case.
pub fn scalar_block_update(j_qq: f64, c: C64, lambda: f64, power: f64) -> C64 {
    let c_abs = c.norm();
    if c_abs <= lambda / 2.0 {
        return C64::new(0.0, 0.0);
    }
    let direction = c / c_abs;
    let unconstrained = (c_abs - lambda / 2.0) / j_qq;
    if j_qq > 0.0 && unconstrained <= power.sqrt() {
        direction * unconstrained
    } else {
        direction * power.sqrt()
    }
}

/// Norms of the active blocks at a given `mu` (without forming the vectors).
fn active_norms(
    j_qq: &CMat,
    cs: &[(usize, CVec)],
    lambda: f64,
    mu: f64,
    tol: f64,
    deltas: &mut Vec<(usize, f64)>,
) -> f64 {
    deltas.clear();
    let mut power = 0.0;
    for (i, c) in cs {
        let norm = if lambda > 0.0 {
            let delta = solve_delta(j_qq, c, lambda, mu, tol);
            deltas.push((*i, delta));
            if delta.is_finite() {
                1.0 / delta
            } else {
                f64::INFINITY
            }
        } else if mu > 0.0 {
            regularized_solve(j_qq, mu, c).norm()
        } else {
            // minimum-norm solution of J v = c
            match j_qq.clone().pseudo_inverse(1e-12) {
                Ok(pinv) => {
                    let v = &pinv * c;
                    // If J is singular along c the linear term is unbounded.
                    if ((j_qq * &v) - c).norm() > 1e-8 * (1.0 + c.norm()) {
                        f64::INFINITY
                    } else {
                        v.norm()
                    }
                }
                Err(_) => f64::INFINITY,
            }
        };
        if norm.is_infinite() {
            return f64::INFINITY;
        }
        power += norm * norm;
    }
    power
}

fn block_vector(j_qq: &CMat, c: &CVec, lambda: f64, delta: f64, mu: f64) -> CVec {
    if lambda > 0.0 {
        regularized_solve(j_qq, lambda * delta / 2.0 + mu, c)
    } else if mu > 0.0 {
        regularized_solve(j_qq, mu, c)
    } else {
        j_qq.clone()
            .pseudo_inverse(1e-12)
            .map(|pinv| &pinv * c)
            .unwrap_or_else(|_| CVec::zeros(c.len()))
    }
}

/// Exact minimization of the subproblem over BS `bs`'s blocks, all other
/// blocks fixed. `allowed`, when present, hard-zeroes the blocks of users not
/// permitted at this BS (used by the nearest-neighbor baseline).
pub fn block_update(
    instance: &QcGroupLassoInstance,
    v_cell: &mut [CVec],
    bs: usize,
    tol: f64,
    allowed: Option<&[bool]>,
) -> BlockSolveState {
    let m = instance.block_len;
    let lambda = instance.lambda;
    let j_qq = instance.j_block(bs, bs).into_owned();
    let mut active: Vec<(usize, CVec)> = Vec::new();
    for i in 0..instance.users() {
        let permitted = allowed.map_or(true, |a| a[i]);
        let c = residual_c(instance, v_cell, bs, i);
        let keep = permitted && !shrink_test(&c, lambda) && c.norm() > 0.0;
        if keep {
            active.push((i, c));
        } else {
            v_cell[i].rows_mut(bs * m, m).fill(C64::new(0.0, 0.0));
        }
    }
    let active_ids: Vec<usize> = active.iter().map(|(i, _)| *i).collect();
    if active.is_empty() {
        return BlockSolveState {
            mu: 0.0,
            deltas: Vec::new(),
            active: active_ids,
            mu_bracket: (0.0, 0.0),
            delta_bounds: Vec::new(),
            tol,
        };
    }

    let mut deltas: Vec<(usize, f64)> = Vec::new();
    // mu = 0 shortcut: if the unconstrained active blocks already fit in the
    // budget, complementarity holds with mu = 0.
    let power0 = active_norms(&j_qq, &active, lambda, 0.0, tol, &mut deltas);
    let (mu, bracket) = if power0 <= instance.power {
        (0.0, (0.0, 0.0))
    } else {
        let max_c = active
            .iter()
            .map(|(_, c)| c.norm())
            .fold(0.0f64, f64::max);
        let mu_hi_init = mu_upper_bound(active.len(), instance.power, max_c);
        let mut lo = 0.0f64;
        let mut hi = mu_hi_init;
        let mu_tol = tol * (1.0 + mu_hi_init);
        while hi - lo > mu_tol {
            let mid = 0.5 * (lo + hi);
            let p = active_norms(&j_qq, &active, lambda, mid, tol, &mut deltas);
            if p < instance.power {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (hi, (lo, hi))
    };

    // Materialize the active blocks at the final multiplier.
    active_norms(&j_qq, &active, lambda, mu, tol, &mut deltas);
    let mut realized = 0.0;
    for (idx, (i, c)) in active.iter().enumerate() {
        let delta = if lambda > 0.0 { deltas[idx].1 } else { 0.0 };
        let v = block_vector(&j_qq, c, lambda, delta, mu);
        realized += v.norm_squared();
        v_cell[*i].rows_mut(bs * m, m).copy_from(&v);
    }
    // Guard: bisection slack can leave the realized power a hair over budget.
    if realized > instance.power {
        let s = (instance.power / realized).sqrt();
        for (i, _) in &active {
            let mut blk = v_cell[*i].rows_mut(bs * m, m);
            blk *= C64::new(s, 0.0);
        }
    }

    let rho = spectral_radius(&j_qq);
    let delta_bounds = if lambda > 0.0 {
        active
            .iter()
            .map(|(i, c)| {
                (
                    *i,
                    delta_upper_bound(rho, c.norm(), lambda, bracket.1.max(mu)),
                )
            })
            .collect()
    } else {
        Vec::new()
    };
    BlockSolveState {
        mu,
        deltas,
        active: active_ids,
        mu_bracket: bracket,
        delta_bounds,
        tol,
    }
}

/// Cyclic block-coordinate descent over the cell's BSs.
///
/// Stops when the largest per-block change drops below `inner_tol` or after
/// `max_passes` full sweeps. Returns the beamformers and the pass count.
pub fn solve_p3(
    instance: &QcGroupLassoInstance,
    v_init: &[CVec],
    inner_tol: f64,
    max_passes: usize,
    allowed: Option<&Vec<Vec<bool>>>,
) -> (Vec<CVec>, usize) {
    solve_p3_with(instance, v_init, inner_tol, max_passes, 1e-8, allowed)
}

/// [`solve_p3`] with an explicit bisection tolerance.
pub fn solve_p3_with(
    instance: &QcGroupLassoInstance,
    v_init: &[CVec],
    inner_tol: f64,
    max_passes: usize,
    bisection_tol: f64,
    allowed: Option<&Vec<Vec<bool>>>,
) -> (Vec<CVec>, usize) {
    let m = instance.block_len;
    let mut v: Vec<CVec> = v_init.to_vec();
    let mut passes = 0;
    for pass in 0..max_passes {
        passes = pass + 1;
        let mut max_change = 0.0f64;
        for q in 0..instance.bs_count {
            let before: Vec<CVec> = v.iter().map(|vi| vi.rows(q * m, m).into_owned()).collect();
            let mask: Option<Vec<bool>> =
                allowed.map(|a| (0..instance.users()).map(|i| a[i][q]).collect());
            block_update(instance, &mut v, q, bisection_tol, mask.as_deref());
            for (i, old) in before.iter().enumerate() {
                let change = (v[i].rows(q * m, m) - old).norm();
                max_change = max_change.max(change);
            }
        }
        if max_change < inner_tol {
            break;
        }
    }
    (v, passes)
}
