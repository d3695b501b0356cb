mod common;

use common::*;
use cran_core::channel::ChannelSet;
use cran_core::greedy::SideInfoState;
use cran_core::hermitian::{factor_gain, CMatrix, HermitianMatrix};
use cran_core::selection::*;
use cran_core::solvers::max_rate_gains;
use rand::Rng;

const LN2: f64 = std::f64::consts::LN_2;

struct Setup {
    ch: ChannelSet,
    sigma1: HermitianMatrix,
    md: cran_core::rates::BsCompression,
    hbs: Vec<usize>,
}

fn setup(seed: u64, n_hbs: usize) -> Setup {
    let mut r = rng(seed);
    let n_m = r.random_range(2..=4);
    let p = r.random_range(1.0..6.0);
    let ch = random_channels(&mut r, n_hbs + 1, 2, n_m, p);
    let md = mbs_design(&ch, 0, 3.0).unwrap();
    let sigma1 = SideInfoState::new(ch.sigma_x.clone())
        .with(0, &md.gain, &ch.h[0])
        .unwrap()
        .sigma_cond()
        .clone();
    Setup { ch, sigma1, md, hbs: (1..=n_hbs).collect() }
}

fn random_omegas(r: &mut impl Rng, ch: &ChannelSet, members: &[usize]) -> Vec<HermitianMatrix> {
    (0..ch.n_bs())
        .map(|i| {
            if members.contains(&i) {
                random_psd(r, ch.bs_antennas[i], 1).scaled(r.random_range(0.0..0.5))
            } else {
                HermitianMatrix::zeros(ch.bs_antennas[i])
            }
        })
        .collect()
}

/// `I(y_S; ŷ_S | ŷ_MBS)` from the joint covariance of all descriptions.
fn shared_oracle(ch: &ChannelSet, md: &CMatrix, omegas: &[HermitianMatrix], members: &[usize]) -> f64 {
    let mut gains = vec![md.clone()];
    let mut hs = vec![ch.h[0].clone()];
    for &j in members {
        gains.push(factor_gain(&omegas[j]).unwrap());
        hs.push(ch.h[j].clone());
    }
    // I(y_S; ŷ_S | ŷ_1) = I(x; ŷ_1, ŷ_S) − I(x; ŷ_1) + Σ_j I(z_j; ŷ_j | x)
    let joint = mutual_info(ch.sigma_x.as_matrix(), &hs, &gains);
    let mbs = mutual_info(ch.sigma_x.as_matrix(), &hs[..1], &gains[..1]);
    let noise: f64 = members
        .iter()
        .map(|&j| log2_det(&(eye(omegas[j].dim()) + omegas[j].as_matrix())))
        .sum();
    joint - mbs + noise
}

fn lagrangian(alpha: f64, lambda: f64, mu: f64, q: f64) -> f64 {
    (1.0 - mu) * log2_1p(alpha * lambda) - log2_1p(alpha) - q * alpha
}

#[test]
fn theorem_scalar_example() {
    let a = penalized_gain(4.0, 0.0, 1.0);
    assert!((a - (57f64.sqrt() - 5.0) / 8.0).abs() < 1e-9);
    assert!((4.0 * a * a + 5.0 * a - 2.0).abs() < 1e-12);
    // 1-D grid maximization agrees
    let q = 1.0 / LN2;
    let best = (0..=200_000).map(|k| k as f64 * 1e-5).max_by(|x, y| lagrangian(*x, 4.0, 0.0, q).total_cmp(&lagrangian(*y, 4.0, 0.0, q))).unwrap();
    assert!((best - a).abs() < 2e-5);
}

#[test]
fn block_update_kkt_and_global_optimality() {
    let mut r = rng(1);
    let mut active = 0;
    for trial in 0..50 {
        let s = setup(trial, 3);
        let q_h = [0.0, 0.05, 0.5, 3.0][trial as usize % 4];
        let c_h = r.random_range(0.5..10.0);
        let omegas = random_omegas(&mut r, &s.ch, &s.hbs);
        for &i in &s.hbs {
            let u = omega_update(i, &s.ch, &s.sigma1, &omegas, &s.hbs, q_h, c_h).unwrap();
            // Independent eigenvalues of the conditional form.
            let others: Vec<usize> = s.hbs.iter().copied().filter(|&j| j != i).collect();
            let mut hs = vec![s.ch.h[0].clone()];
            let mut gs = vec![s.md.gain.clone()];
            for &j in &others {
                hs.push(s.ch.h[j].clone());
                gs.push(factor_gain(&omegas[j]).unwrap());
            }
            let sc = cond_cov_oracle(s.ch.sigma_x.as_matrix(), &hs, &gs);
            let form = HermitianMatrix::new(&s.ch.h[i] * sc * s.ch.h[i].adjoint() + eye(2)).unwrap();
            let mut want = form.eigenvalues_desc().unwrap();
            let mut got = u.eigenvalues.clone();
            want.sort_by(f64::total_cmp);
            got.sort_by(f64::total_cmp);
            for (a, b) in want.iter().zip(&got) {
                assert!((a - b).abs() < 1e-7 * a.max(1.0));
            }
            if u.residual_budget <= 0.0 {
                assert!(u.omega.is_zero(0.0));
                continue;
            }
            let h: f64 = u.gains.iter().zip(&u.eigenvalues).map(|(a, l)| log2_1p(a * l)).sum();
            assert!(h <= u.residual_budget + 1e-6);
            assert!(u.mu * (u.residual_budget - h).abs() < 1e-6);
            if q_h < 1e-10 {
                let m = max_rate_gains(&u.eigenvalues, u.residual_budget).unwrap();
                for (a, b) in m.gains.iter().zip(&u.gains) {
                    assert!((a - b).abs() < 1e-9);
                }
                continue;
            }
            let qp = LN2 * q_h;
            for (&a, &l) in u.gains.iter().zip(&u.eigenvalues) {
                if a > 0.0 {
                    active += 1;
                    let st = (1.0 - u.mu) * l / (1.0 + a * l) - 1.0 / (1.0 + a) - qp;
                    assert!(st.abs() < 1e-6, "stationarity {st}");
                } else {
                    assert!((1.0 - u.mu) * l - 1.0 - qp <= 1e-9);
                }
                let best = lagrangian(a, l, u.mu, q_h);
                for k in 0..=10_000 {
                    let x = (10.0 * a + 1.0) * k as f64 / 10_000.0;
                    assert!(lagrangian(x, l, u.mu, q_h) <= best + 1e-6);
                }
            }
        }
    }
    assert!(active > 50);
}

#[test]
fn shared_backhaul_decomposition_and_feasibility() {
    let cfg = SelectionConfig { q_h: 0.2, c_h: 5.0, ..Default::default() };
    for seed in 0..20 {
        let s = setup(seed + 100, 3);
        let init = (0..s.ch.n_bs()).map(|i| HermitianMatrix::zeros(s.ch.bs_antennas[i])).collect();
        let res = block_coordinate_ascent(&s.ch, &s.sigma1, &s.hbs, init, cfg.q_h, &cfg).unwrap();
        let got = shared_backhaul(&s.ch, &s.sigma1, &res.omegas, &s.hbs).unwrap();
        let want = shared_oracle(&s.ch, &s.md.gain, &res.omegas, &s.hbs);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        assert!(got <= cfg.c_h + 1e-6);
        let out = two_phase_select(&s.ch, &cfg, 0, &s.md).unwrap();
        assert!(out.hbs_backhaul <= cfg.c_h + 1e-6);
    }
}

#[test]
fn ascent_trace_is_monotone() {
    let mut r = rng(2);
    for seed in 0..50 {
        let s = setup(seed + 200, 3);
        let q_h = r.random_range(0.0..2.0);
        let cfg = SelectionConfig { q_h, c_h: r.random_range(1.0..12.0), ..Default::default() };
        let init = random_omegas(&mut r, &s.ch, &[]);
        let res = block_coordinate_ascent(&s.ch, &s.sigma1, &s.hbs, init, q_h, &cfg).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace decreased: {:?}", res.trace);
        }
        let out = two_phase_select(&s.ch, &cfg, 0, &s.md).unwrap();
        for t in [&out.phase1_trace, &out.phase2_trace] {
            for w in t.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }
}

/// Largest eigenvalue of `I + H_i Σ_1 H_i†` over the HBSs: an upper bound on
/// every eigenvalue a block update can see.
fn lambda_bound(s: &Setup) -> f64 {
    s.hbs
        .iter()
        .map(|&i| {
            HermitianMatrix::new(&s.ch.h[i] * s.sigma1.as_matrix() * s.ch.h[i].adjoint() + eye(2))
                .unwrap()
                .max_eigenvalue()
                .unwrap()
        })
        .fold(0.0, f64::max)
}

#[test]
fn penalty_dominance_empties_selection() {
    // q_H = 10 C_H silences every HBS once q_H ln 2 ≥ λ_max − 1.
    let c_h = 6.0;
    let cfg = SelectionConfig { q_h: 10.0 * c_h, c_h, ..Default::default() };
    let mut checked = 0;
    for seed in 0..40 {
        let s = setup(seed + 300, 4);
        if lambda_bound(&s) - 1.0 > cfg.q_h * LN2 {
            continue;
        }
        checked += 1;
        let out = two_phase_select(&s.ch, &cfg, 0, &s.md).unwrap();
        assert!(out.selected.is_empty());
        assert!(s.hbs.iter().all(|&i| out.solution.designs[i].omega.is_zero(0.0)));
    }
    assert!(checked >= 10);
}

#[test]
fn strong_channel_survives_large_penalty() {
    // A single stream with λ − 1 > q_H ln 2 has positive marginal value at zero.
    let ch = ChannelSet::from_real(&[(1, vec![0.0]), (1, vec![20.0])], 1, 1.0).unwrap();
    let c_h = 6.0;
    let cfg = SelectionConfig { q_h: 10.0 * c_h, c_h, ..Default::default() };
    let md = mbs_design(&ch, 0, cfg.c_mbs).unwrap();
    let out = two_phase_select(&ch, &cfg, 0, &md).unwrap();
    assert_eq!(out.selected, vec![1]);
}

#[test]
fn zero_penalty_phase_one_is_plain_ascent() {
    for seed in 0..10 {
        let s = setup(seed + 400, 3);
        let cfg = SelectionConfig { q_h: 0.0, c_h: 6.0, ..Default::default() };
        let out = two_phase_select(&s.ch, &cfg, 0, &s.md).unwrap();
        let init = (0..s.ch.n_bs()).map(|i| HermitianMatrix::zeros(s.ch.bs_antennas[i])).collect();
        let plain = block_coordinate_ascent(&s.ch, &s.sigma1, &s.hbs, init, 0.0, &cfg).unwrap();
        assert_eq!(out.phase1_trace, plain.trace);
        assert!(!out.selected.is_empty());
    }
}

#[test]
fn exhaustive_dominates_two_phase_per_instance() {
    let cfg = SelectionConfig { q_h: 0.3, c_h: 6.0, ..Default::default() };
    for seed in 0..15 {
        let s = setup(seed + 500, 4);
        let two = two_phase_select(&s.ch, &cfg, 0, &s.md).unwrap();
        let k = two.selected.len();
        let ex = baseline_select(&s.ch, &cfg, 0, &s.md, k, BaselineMode::Exhaustive, 0).unwrap();
        let ex_rate = subset_pipeline(&s.ch, &cfg, 0, &s.md, &ex).unwrap().sum_rate;
        assert!(ex_rate >= two.sum_rate - 1e-9);
        let again = subset_pipeline(&s.ch, &cfg, 0, &s.md, &two.selected).unwrap();
        assert!((again.sum_rate - two.sum_rate).abs() < 1e-12);
    }
}

#[test]
fn baseline_examples() {
    let ch = ChannelSet::from_real(&[(1, vec![1.0]), (1, vec![1.0]), (1, vec![0.5]), (1, vec![2.0])], 1, 1.0).unwrap();
    assert!((local_capacity(&ch, 1).unwrap() - 1.0).abs() < 1e-12);
    let cfg = SelectionConfig::default();
    let md = mbs_design(&ch, 0, cfg.c_mbs).unwrap();
    let mut count = 0;
    for_each_subset(&[1, 2, 3], 2, |_| {
        count += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(count, 3);
    assert_eq!(baseline_select(&ch, &cfg, 0, &md, 2, BaselineMode::Local, 0).unwrap(), vec![1, 3]);
    let a = baseline_select(&ch, &cfg, 0, &md, 2, BaselineMode::Random, 42).unwrap();
    assert_eq!(a, baseline_select(&ch, &cfg, 0, &md, 2, BaselineMode::Random, 42).unwrap());
    assert_eq!(a.len(), 2);
    assert!(baseline_select(&ch, &cfg, 0, &md, 4, BaselineMode::Local, 0).is_err());
}

#[test]
fn exhaustive_cap_is_enforced() {
    let mut r = rng(3);
    let ch = random_channels(&mut r, 26, 1, 1, 1.0);
    let cfg = SelectionConfig::default();
    let md = mbs_design(&ch, 0, 1.0).unwrap();
    assert!(matches!(
        baseline_select(&ch, &cfg, 0, &md, 12, BaselineMode::Exhaustive, 0),
        Err(cran_core::Error::TooLarge(_))
    ));
}
