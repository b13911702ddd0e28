//! Structural invariants of the per-cell solver: monotonicity of the scalar
//! root functions, bracket validity of the bisection bounds, KKT residuals
//! and complementarity at block-update outputs, and descent of the cell
//! objective across block updates.

use hetnet_core::lasso::{
    block_update, build_instance, delta_upper_bound, h_value, mu_upper_bound, residual_c,
    solve_delta, solve_p3, spectral_radius, QcGroupLassoInstance,
};
use hetnet_core::net::{generate_channels, generate_topology, NetworkConfig};
use hetnet_core::rng::substream;
use hetnet_core::signal::{ReceiverSet, WeightSet};
use hetnet_core::{C64, CMat, CVec, UserId};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

fn random_psd(rng: &mut ChaCha12Rng, m: usize, scale: f64) -> CMat {
    let a = CMat::from_fn(m, m, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * C64::new(scale, 0.0)
    });
    &a * a.adjoint()
}

fn random_vec(rng: &mut ChaCha12Rng, m: usize, scale: f64) -> CVec {
    CVec::from_fn(m, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * C64::new(scale, 0.0)
    })
}

fn random_instance(rng: &mut ChaCha12Rng, q: usize, users: usize, m: usize) -> QcGroupLassoInstance {
    let n = q * m;
    QcGroupLassoInstance {
        j: random_psd(rng, n, 1.0),
        d: (0..users).map(|_| random_vec(rng, n, 2.0)).collect(),
        lambda: rng.gen::<f64>() * 1.5,
        power: 0.5 + rng.gen::<f64>() * 2.0,
        bs_count: q,
        block_len: m,
    }
}

#[test]
fn h_is_monotone_in_delta_and_mu() {
    let mut rng = substream(1001, &[1]);
    for _ in 0..100 {
        let m = 1 + rng.gen_range(0..3);
        let j = random_psd(&mut rng, m, 1.0);
        let c = random_vec(&mut rng, m, 1.0) + CVec::from_element(m, C64::new(1.0, 0.0));
        let lambda = 0.5 * c.norm();
        let deltas = [0.1, 0.3, 1.0, 3.0, 10.0];
        let mus = [0.0, 0.2, 1.0, 5.0];
        for &mu in &mus {
            let mut prev = 0.0;
            for &d in &deltas {
                let h = h_value(&j, &c, lambda, mu, d);
                assert!(h > prev, "h not increasing in delta");
                prev = h;
            }
        }
        for &d in &deltas {
            let mut prev = f64::INFINITY;
            for &mu in &mus {
                let h = h_value(&j, &c, lambda, mu, d);
                assert!(h < prev, "h not decreasing in mu");
                prev = h;
            }
        }
    }
}

#[test]
fn block_norm_is_strictly_decreasing_in_mu() {
    let mut rng = substream(1001, &[2]);
    for _ in 0..100 {
        let m = 1 + rng.gen_range(0..3);
        let j = random_psd(&mut rng, m, 1.0);
        let c = random_vec(&mut rng, m, 1.0) + CVec::from_element(m, C64::new(1.0, 0.0));
        let lambda = 0.4 * c.norm();
        let mut prev = f64::INFINITY;
        for mu in [0.0, 0.1, 0.5, 2.0, 10.0] {
            let delta = solve_delta(&j, &c, lambda, mu, 1e-11);
            let norm = 1.0 / delta;
            assert!(norm < prev, "||v(mu)|| not decreasing: {norm} !< {prev}");
            prev = norm;
        }
    }
}

#[test]
fn bisection_bounds_bracket_their_targets() {
    let mut rng = substream(1001, &[3]);
    for _ in 0..100 {
        let m = 1 + rng.gen_range(0..3);
        let j = random_psd(&mut rng, m, 1.0);
        let c = random_vec(&mut rng, m, 1.0) + CVec::from_element(m, C64::new(1.0, 0.0));
        let c_norm = c.norm();
        let lambda = 0.5 * c_norm;
        let users = 1 + rng.gen_range(0..3);
        let power = 0.5 + rng.gen::<f64>();
        let mu_hi = mu_upper_bound(users, power, c_norm);
        // At mu_hi a single block's norm must already be under budget.
        let delta = solve_delta(&j, &c, lambda, mu_hi, 1e-11);
        assert!(
            (users as f64) * (1.0 / delta).powi(2) < power,
            "mu bound does not bracket"
        );
        // The delta bound keeps h above 1 for every mu in [0, mu_hi].
        let rho = spectral_radius(&j);
        let dbar = delta_upper_bound(rho, c_norm, lambda, mu_hi);
        for mu in [0.0, 0.5 * mu_hi, mu_hi] {
            assert!(h_value(&j, &c, lambda, mu, dbar) > 1.0, "delta bound fails");
        }
    }
}

#[test]
fn residual_matches_block_restricted_gradient() {
    let mut rng = substream(1001, &[4]);
    for _ in 0..50 {
        let (q, users, m) = (2 + rng.gen_range(0..2), 1 + rng.gen_range(0..2), 1 + rng.gen_range(0..2));
        let inst = random_instance(&mut rng, q, users, m);
        let v: Vec<CVec> = (0..users).map(|_| random_vec(&mut rng, q * m, 1.0)).collect();
        for i in 0..users {
            let grad = &inst.j * &v[i] - &inst.d[i]; // (1/2) smooth gradient
            for bs in 0..q {
                let c = residual_c(&inst, &v, bs, i);
                let lhs = inst.j_block(bs, bs) * v[i].rows(bs * m, m) - c;
                let rhs = grad.rows(bs * m, m);
                assert!((lhs - rhs).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn smooth_objective_matches_finite_differences() {
    let mut rng = substream(1001, &[5]);
    let inst = {
        let mut i = random_instance(&mut rng, 2, 2, 2);
        i.lambda = 0.0; // differentiate only the smooth part
        i
    };
    let v: Vec<CVec> = (0..2).map(|_| random_vec(&mut rng, 4, 0.7)).collect();
    let f = |v: &[CVec]| inst.objective(v);
    let base = f(&v);
    let eps = 1e-6;
    for i in 0..2 {
        let dir = random_vec(&mut rng, 4, 1.0);
        let mut vp = v.clone();
        vp[i] += &dir * C64::new(eps, 0.0);
        let fd = (f(&vp) - base) / eps;
        let grad = (&inst.j * &v[i] - &inst.d[i]) * C64::new(2.0, 0.0);
        let analytic = (dir.adjoint() * grad)[(0, 0)].re;
        assert!(
            (fd - analytic).abs() < 1e-4 * (1.0 + analytic.abs()),
            "finite difference {fd} vs analytic {analytic}"
        );
    }
}

#[test]
fn build_instance_matches_accumulation_oracle() {
    let mut cfg = NetworkConfig::default_with_seed(77);
    cfg.cells = 2;
    cfg.bs_per_cell = 2;
    cfg.users_per_cell = 2;
    let ch = generate_channels(&generate_topology(&cfg), &cfg);
    let mut rng = substream(1001, &[6]);
    let u = ReceiverSet {
        u: (0..cfg.cells)
            .map(|_| (0..cfg.users_per_cell).map(|_| random_vec(&mut rng, cfg.rx_antennas, 1.0)).collect())
            .collect(),
    };
    let w = WeightSet {
        w: (0..cfg.cells)
            .map(|_| (0..cfg.users_per_cell).map(|_| 0.5 + rng.gen::<f64>()).collect())
            .collect(),
    };
    for cell in 0..cfg.cells {
        let inst = build_instance(&ch, &u, &w, cell, 0.3, cfg.power).unwrap();
        // brute-force J
        let n = cfg.stacked_len();
        let mut j = CMat::zeros(n, n);
        for k in 0..cfg.cells {
            for i in 0..cfg.users_per_cell {
                let user = UserId::new(k, i);
                let h = ch.matrix(user, cell);
                let hu = h.adjoint() * u.get(user);
                j += &hu * hu.adjoint() * C64::new(w.get(user), 0.0);
            }
        }
        assert!((&inst.j - &j).norm() < 1e-12 * (1.0 + j.norm()));
        assert!((&inst.j - inst.j.adjoint()).norm() < 1e-12 * (1.0 + j.norm()));
        for i in 0..cfg.users_per_cell {
            let user = UserId::new(cell, i);
            let d = (ch.matrix(user, cell).adjoint() * u.get(user)) * C64::new(w.get(user), 0.0);
            assert!((&inst.d[i] - d).norm() < 1e-12);
        }
    }
}

#[test]
fn block_updates_never_increase_the_objective() {
    let mut rng = substream(1001, &[7]);
    for _ in 0..30 {
        let (q, users, m) = (2, 2, 2);
        let inst = random_instance(&mut rng, q, users, m);
        let mut v: Vec<CVec> = vec![CVec::zeros(q * m); users];
        let mut prev = inst.objective(&v);
        for _pass in 0..3 {
            for bs in 0..q {
                block_update(&inst, &mut v, bs, 1e-10, None);
                let obj = inst.objective(&v);
                assert!(
                    obj <= prev + 1e-8 * (1.0 + prev.abs()),
                    "objective rose {prev} -> {obj}"
                );
                prev = obj;
            }
        }
    }
}

#[test]
fn kkt_and_complementarity_at_block_solutions() {
    let mut rng = substream(1001, &[8]);
    for trial in 0..60 {
        let q = 1 + rng.gen_range(0..3);
        let users = 1 + rng.gen_range(0..3);
        let m = 1 + rng.gen_range(0..3);
        let inst = random_instance(&mut rng, q, users, m);
        let (v, _) = solve_p3(&inst, &vec![CVec::zeros(q * m); users], 1e-9, 80, None);
        let mut v = v;
        for bs in 0..q {
            let state = block_update(&inst, &mut v, bs, 1e-11, None);
            let mut power = 0.0;
            for i in 0..users {
                let c = residual_c(&inst, &v, bs, i);
                let blk = v[i].rows(bs * m, m).into_owned();
                power += blk.norm_squared();
                if blk.norm() == 0.0 {
                    assert!(
                        c.norm() <= inst.lambda / 2.0 + 1e-7,
                        "trial {trial}: zero block with ||c|| = {} > lambda/2 = {}",
                        c.norm(),
                        inst.lambda / 2.0
                    );
                } else {
                    let r = (inst.j_block(bs, bs) * &blk
                        + &blk * C64::new(state.mu + inst.lambda / (2.0 * blk.norm()), 0.0)
                        - &c)
                        * C64::new(2.0, 0.0);
                    assert!(
                        r.norm() <= 1e-5 * (1.0 + c.norm()),
                        "trial {trial}: KKT residual {}",
                        r.norm()
                    );
                }
            }
            assert!(power <= inst.power * (1.0 + 1e-9), "power violated");
            assert!(
                state.mu * (inst.power - power) <= 1e-5 * inst.power,
                "complementarity violated: mu {} slack {}",
                state.mu,
                inst.power - power
            );
        }
    }
}

#[test]
fn instance_csv_round_trips_random_data() {
    let mut rng = substream(1001, &[9]);
    let inst = random_instance(&mut rng, 3, 2, 2);
    let mut buf = Vec::new();
    inst.write_csv(&mut buf).unwrap();
    let parsed = QcGroupLassoInstance::read_csv(&buf[..]).unwrap();
    assert_eq!(parsed.j, inst.j);
    assert_eq!(parsed.d, inst.d);
    assert_eq!(parsed.lambda, inst.lambda);
    assert_eq!(parsed.power, inst.power);
    assert_eq!((parsed.bs_count, parsed.block_len), (3, 2));
}
