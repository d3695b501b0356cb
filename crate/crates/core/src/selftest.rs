//! Quick invariant suite shipped with the library, run by `cran-sim selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{complex_gaussian, ChannelSet};
use crate::error::Result;
use crate::greedy::{greedy_compress, Solver};
use crate::hermitian::{CMatrix, HermitianMatrix};
use crate::rates::{region_check, sum_rate, vertex_rates};
use crate::robust::{kkt_residual, robust_gains, UncertaintyBounds};
use crate::selection::{block_coordinate_ascent, mbs_design, penalized_gain, SelectionConfig};
use crate::solvers::{max_rate_gains, mmse_gains};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_channels(rng: &mut ChaCha8Rng, n_bs: usize, n_b: usize, n_m: usize) -> Result<ChannelSet> {
    let h = (0..n_bs)
        .map(|_| CMatrix::from_fn(n_b, n_m, |_, _| complex_gaussian(rng, 1.0)))
        .collect();
    ChannelSet::new(h, HermitianMatrix::scaled_identity(n_m, rng.random_range(0.5..4.0)))
}

/// Runs every check; `seed` drives the random instances.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    out.push(check("scalar_max_rate", || {
        let a = max_rate_gains(&[4.0], 1.0)?;
        let err = (a.gains[0] - 0.25).abs().max((a.mu - 0.6).abs());
        Ok((err < 1e-9, format!("alpha={} mu={}", a.gains[0], a.mu)))
    }));

    out.push(check("scalar_mmse", || {
        let a = mmse_gains(&[4.0], 1.0)?;
        let err = (a.gains[0] - 0.25).abs().max((a.mu - 2.0).abs());
        Ok((err < 1e-9, format!("alpha={} mu={}", a.gains[0], a.mu)))
    }));

    out.push(check("penalized_gain_scalar", || {
        let a = penalized_gain(4.0, 0.0, 1.0);
        let want = (57f64.sqrt() - 5.0) / 8.0;
        Ok(((a - want).abs() < 1e-9, format!("alpha={a}")))
    }));

    out.push(check("greedy_chain_rule_and_region", || {
        let mut worst = 0.0f64;
        let mut feasible = true;
        for _ in 0..20 {
            let n_bs = rng.random_range(2..=4);
            let (n_b, n_m) = (rng.random_range(1..=2), rng.random_range(1..=3));
            let ch = random_channels(&mut rng, n_bs, n_b, n_m)?;
            let caps: Vec<f64> = (0..n_bs).map(|_| rng.random_range(0.2..4.0)).collect();
            let g = greedy_compress(&ch, &caps, Solver::MaxRate)?;
            worst = worst.max((g.sum_rate() - sum_rate(&ch, &g.solution)?).abs());
            let v = vertex_rates(&g.order, &ch, &g.solution)?;
            let all: Vec<usize> = (0..n_bs).collect();
            feasible &= region_check(&g.solution, &v, &ch, &all)?.feasible;
        }
        Ok((worst < 1e-6 && feasible, format!("max chain-rule gap {worst:e}")))
    }));

    out.push(check("robust_zero_bounds_reduce", || {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(1..=3);
            let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..30.0)).collect();
            let c = rng.random_range(0.1..8.0);
            let r = robust_gains(&lambdas, c, &UncertaintyBounds::zero())?;
            let m = max_rate_gains(&lambdas, c)?;
            for (a, b) in r.gains.iter().zip(&m.gains) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok((worst < 1e-6, format!("max gain gap {worst:e}")))
    }));

    out.push(check("robust_kkt", || {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(1..=3);
            let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(1.5..30.0)).collect();
            let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
            let radius = rng.random_range(0.0..lmin.min(3.0));
            let b = UncertaintyBounds::new(-radius, radius)?;
            let c = rng.random_range(0.1..8.0);
            let a = robust_gains(&lambdas, c, &b)?;
            if a.no_signal {
                continue;
            }
            let r = kkt_residual(&lambdas, &a.gains, a.mu, c, &b)?;
            worst = worst.max(r.max());
        }
        Ok((worst < 1e-6, format!("max residual {worst:e}")))
    }));

    out.push(check("selection_trace_monotone", || {
        let cfg = SelectionConfig::default();
        let mut worst_drop = 0.0f64;
        for _ in 0..5 {
            let ch = random_channels(&mut rng, 4, 2, 3)?;
            let md = mbs_design(&ch, 0, cfg.c_mbs)?;
            let sigma1 = crate::greedy::SideInfoState::new(ch.sigma_x.clone())
                .with(0, &md.gain, &ch.h[0])?
                .sigma_cond()
                .clone();
            let zeros = ch.bs_antennas.iter().map(|&n| HermitianMatrix::zeros(n)).collect();
            let res = block_coordinate_ascent(&ch, &sigma1, &[1, 2, 3], zeros, 0.2, &cfg)?;
            for w in res.trace.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }
        Ok((worst_drop <= 1e-9, format!("largest decrease {worst_drop:e}")))
    }));

    out
}
