//! Closed-form single-BS compression designs.
//!
//! Both families are reverse water-filling problems over the eigen-streams of
//! a received covariance. For a fixed active set the budget equation
//! `Σ log2(1 + α_l λ_l) = C` is solvable in closed form, so the multiplier is
//! found exactly by walking the active set instead of bisecting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{CMatrix, HermitianCholesky, HermitianMatrix};
use crate::rates::{received_form, BsCompression};

/// Streams with `λ − 1` (Max-Rate) or `λ` (MMSE) below this fraction of the
/// largest eigenvalue are treated as carrying no signal.
const SIGNAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmseTarget {
    /// Estimate the received signal `y_i`.
    Direct,
    /// Estimate the transmitted signal `x`.
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MmseVariant {
    pub target: MmseTarget,
    pub side_info: bool,
}

impl MmseVariant {
    pub const DIRECT_SI: Self = Self { target: MmseTarget::Direct, side_info: true };
    pub const DIRECT_NSI: Self = Self { target: MmseTarget::Direct, side_info: false };
    pub const INDIRECT_SI: Self = Self { target: MmseTarget::Indirect, side_info: true };
    pub const INDIRECT_NSI: Self = Self { target: MmseTarget::Indirect, side_info: false };
}

/// Gains and multiplier of a water-filling solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub gains: Vec<f64>,
    pub mu: f64,
    /// `Σ log2(1 + α_l λ_l)`
    pub rate: f64,
    /// Positive budget but no stream carries signal.
    pub no_signal: bool,
}

fn check_budget(c: f64) -> Result<()> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("backhaul budget must be finite and >= 0, got {c}")));
    }
    Ok(())
}

fn budget_rate(gains: &[f64], lambdas: &[f64]) -> f64 {
    gains.iter().zip(lambdas).map(|(a, l)| (a * l).ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

/// Largest consistent active prefix of the descending `signal` values.
/// `level(k)` returns the water level given the first `k` streams active;
/// stream `l` is active at level `t` iff `signal[l] * t >= 1`.
fn active_prefix(signal: &[f64], level: impl Fn(usize) -> f64) -> (usize, f64) {
    let n = signal.len();
    let mut best = (1, level(1));
    for k in 1..=n {
        let t = level(k);
        let inside = signal[k - 1] * t >= 1.0;
        let outside = k == n || signal[k] * t <= 1.0;
        if inside && outside {
            return (k, t);
        }
        if inside {
            best = (k, t);
        }
    }
    best
}

/// Max-Rate gains `α_l = [(1/μ)(1 − 1/λ_l) − 1]⁺` meeting
/// `Σ log2(1 + α_l λ_l) = C`, for eigenvalues `λ_l ≥ 1` in any order.
pub fn max_rate_gains(lambdas: &[f64], c: f64) -> Result<Allocation> {
    check_budget(c)?;
    let n = lambdas.len();
    let lmax = lambdas.iter().cloned().fold(1.0, f64::max);
    let threshold_mu = 1.0 - 1.0 / lmax;
    let floor = SIGNAL_FLOOR * lmax;
    let mut idx: Vec<usize> = (0..n).filter(|&l| lambdas[l] - 1.0 > floor).collect();
    if c == 0.0 || idx.is_empty() {
        return Ok(Allocation {
            gains: vec![0.0; n],
            mu: threshold_mu,
            rate: 0.0,
            no_signal: c > 0.0,
        });
    }
    idx.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let signal: Vec<f64> = idx.iter().map(|&l| lambdas[l] - 1.0).collect();
    // With t = (1 − μ)/μ the active streams satisfy 1 + α λ = (λ − 1) t.
    let mut prefix_log = vec![0.0];
    for s in &signal {
        prefix_log.push(prefix_log.last().unwrap() + s.log2());
    }
    let (k, t) = active_prefix(&signal, |k| ((c - prefix_log[k]) / k as f64).exp2());
    let mut gains = vec![0.0; n];
    for (j, &l) in idx.iter().take(k).enumerate() {
        gains[l] = ((signal[j] * t - 1.0) / lambdas[l]).max(0.0);
    }
    Ok(Allocation {
        rate: budget_rate(&gains, lambdas),
        gains,
        mu: 1.0 / (1.0 + t),
        no_signal: false,
    })
}

/// MMSE gains `α_l = [1/μ − 1/λ_l]⁺` meeting `Σ log2(1 + α_l λ_l) = C`,
/// for eigenvalues `λ_l ≥ 0`.
pub fn mmse_gains(lambdas: &[f64], c: f64) -> Result<Allocation> {
    check_budget(c)?;
    let n = lambdas.len();
    let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
    let floor = SIGNAL_FLOOR * lmax.max(1.0);
    let mut idx: Vec<usize> = (0..n).filter(|&l| lambdas[l] > floor).collect();
    if c == 0.0 || idx.is_empty() {
        return Ok(Allocation {
            gains: vec![0.0; n],
            mu: lmax,
            rate: 0.0,
            no_signal: c > 0.0,
        });
    }
    idx.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let lam: Vec<f64> = idx.iter().map(|&l| lambdas[l]).collect();
    // Active streams satisfy 1 + α λ = λ / μ; work with t = 1/μ.
    let mut prefix_log = vec![0.0];
    for l in &lam {
        prefix_log.push(prefix_log.last().unwrap() + l.log2());
    }
    let (k, t) = active_prefix(&lam, |k| ((c - prefix_log[k]) / k as f64).exp2());
    let mut gains = vec![0.0; n];
    for (j, &l) in idx.iter().take(k).enumerate() {
        gains[l] = (t - 1.0 / lam[j]).max(0.0);
    }
    Ok(Allocation {
        rate: budget_rate(&gains, lambdas),
        gains,
        mu: 1.0 / t,
        no_signal: false,
    })
}

/// Max-Rate design given the received form `H Σ_cond H†`.
pub fn max_rate_from_form(form: &HermitianMatrix, c: f64) -> Result<BsCompression> {
    let eig = form.shifted(1.0).eig_desc()?;
    let alloc = max_rate_gains(&eig.values, c)?;
    let mut out = BsCompression::from_eigen(eig.basis, alloc.gains, alloc.mu, alloc.rate);
    out.no_signal = alloc.no_signal;
    Ok(out)
}

/// Rate-optimal compression of `y = H x + z` against side information that
/// leaves `Σ_cond` as the conditional covariance of `x`. Passing `Σ_x` gives
/// the design that ignores side information.
pub fn max_rate_compress(h: &CMatrix, sigma_cond: &HermitianMatrix, c: f64) -> Result<BsCompression> {
    if h.ncols() != sigma_cond.dim() {
        return Err(Error::Dimension(format!(
            "H has {} columns, covariance is {}x{}",
            h.ncols(),
            sigma_cond.dim(),
            sigma_cond.dim()
        )));
    }
    max_rate_from_form(&received_form(h, sigma_cond), c)
}

/// Estimator applied before compression: `I` for direct targets,
/// `Σ_x H† (H Σ_x H† + I)^{-1}` for indirect ones.
pub fn mmse_preprocessing(h: &CMatrix, sigma_x: &HermitianMatrix, target: MmseTarget) -> Result<CMatrix> {
    match target {
        MmseTarget::Direct => Ok(CMatrix::identity(h.nrows(), h.nrows())),
        MmseTarget::Indirect => {
            let sy = received_form(h, sigma_x).shifted(1.0);
            let chol = HermitianCholesky::new(&sy)
                .ok_or_else(|| Error::Numerical("H Σ_x H† + I is not positive definite".into()))?;
            // (Σ_y^{-1} H Σ_x)† = Σ_x H† Σ_y^{-1}
            let t = chol.solve(&(h * sigma_x.as_matrix()));
            Ok(t.adjoint())
        }
    }
}

/// MMSE compression design for one of the four variants.
pub fn mmse_compress(
    h: &CMatrix,
    sigma_x: &HermitianMatrix,
    sigma_cond: &HermitianMatrix,
    c: f64,
    variant: MmseVariant,
) -> Result<BsCompression> {
    if h.ncols() != sigma_x.dim() || sigma_x.dim() != sigma_cond.dim() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, Σ_x {}x{}, Σ_cond {}x{}",
            h.nrows(),
            h.ncols(),
            sigma_x.dim(),
            sigma_x.dim(),
            sigma_cond.dim(),
            sigma_cond.dim()
        )));
    }
    let p = mmse_preprocessing(h, sigma_x, variant.target)?;
    let base = if variant.side_info { sigma_cond } else { sigma_x };
    let sy = received_form(h, base).shifted(1.0);
    let eig = sy.congruence(&p).eig_desc()?;
    let alloc = mmse_gains(&eig.values, c)?;
    let inner = crate::hermitian::compose(&eig.basis, &alloc.gains);
    let omega = inner.congruence(&p.adjoint());
    let mut out = BsCompression::from_omega(omega, eig.basis, alloc.gains, alloc.mu, alloc.rate)?;
    out.no_signal = alloc.no_signal;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::real_matrix;
    use crate::hermitian::testutil::*;
    use crate::rates::{net_rate, side_rate_f};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn max_rate_scalar() {
        let a = max_rate_gains(&[4.0], 1.0).unwrap();
        assert!((a.gains[0] - 0.25).abs() < 1e-12);
        assert!((a.mu - 0.6).abs() < 1e-12);
        assert!((a.rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_rate_noise_stream_gets_zero() {
        let a = max_rate_gains(&[4.0, 1.0], 1.0).unwrap();
        assert!((a.gains[0] - 0.25).abs() < 1e-12);
        assert_eq!(a.gains[1], 0.0);
        let a = max_rate_gains(&[1.0, 4.0], 1.0).unwrap();
        assert_eq!(a.gains[0], 0.0);
        assert!((a.gains[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_and_no_signal() {
        let a = max_rate_gains(&[4.0, 2.0], 0.0).unwrap();
        assert_eq!(a.gains, vec![0.0, 0.0]);
        assert!(!a.no_signal);
        let a = max_rate_gains(&[1.0, 1.0], 2.0).unwrap();
        assert_eq!(a.gains, vec![0.0, 0.0]);
        assert!(a.no_signal);
        assert!(max_rate_gains(&[2.0], -1.0).is_err());
        let h = real_matrix(1, 1, &[0.0]);
        let d = max_rate_compress(&h, &HermitianMatrix::identity(1), 1.0).unwrap();
        assert!(d.no_signal && d.omega.is_zero(0.0) && d.backhaul_used == 0.0);
    }

    #[test]
    fn max_rate_water_levels_match_multiplier() {
        let lambdas = [9.0, 5.0, 1.5, 1.0];
        for c in [0.1, 0.5, 1.0, 2.0, 4.0, 10.0] {
            let a = max_rate_gains(&lambdas, c).unwrap();
            assert!((a.rate - c).abs() < 1e-9, "c={c}: {}", a.rate);
            for (g, l) in a.gains.iter().zip(&lambdas) {
                let expect = ((1.0 / a.mu) * (1.0 - 1.0 / l) - 1.0).max(0.0);
                assert!((g - expect).abs() < 1e-9 * (1.0 + expect), "c={c}");
            }
        }
    }

    #[test]
    fn mmse_scalar_and_water_levels() {
        let a = mmse_gains(&[4.0], 1.0).unwrap();
        assert!((a.gains[0] - 0.25).abs() < 1e-12);
        assert!((a.mu - 2.0).abs() < 1e-12);
        let lambdas = [6.0, 2.0, 1.0, 0.5, 0.0];
        for c in [0.2, 1.0, 3.0, 8.0] {
            let a = mmse_gains(&lambdas, c).unwrap();
            assert!((a.rate - c).abs() < 1e-9);
            for (g, l) in a.gains.iter().zip(&lambdas) {
                let expect = if *l > 0.0 { (1.0 / a.mu - 1.0 / l).max(0.0) } else { 0.0 };
                assert!((g - expect).abs() < 1e-9 * (1.0 + expect));
            }
        }
        // A pure-noise stream (λ = 1) is still described once the budget is large.
        let a = mmse_gains(&[4.0, 1.0], 6.0).unwrap();
        assert!(a.gains[1] > 0.0);
        assert_eq!(max_rate_gains(&[4.0, 1.0], 6.0).unwrap().gains[1], 0.0);
    }

    #[test]
    fn indirect_preprocessing_scalar() {
        let h = real_matrix(1, 1, &[1.0]);
        let sx = HermitianMatrix::identity(1);
        let p = mmse_preprocessing(&h, &sx, MmseTarget::Indirect).unwrap();
        assert!((p[(0, 0)].re - 0.5).abs() < 1e-12 && p[(0, 0)].im.abs() < 1e-15);
        let form = received_form(&h, &sx).shifted(1.0).congruence(&p);
        assert!((form.as_matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mmse_zero_budget_every_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_cmatrix(&mut rng, 2, 3);
        let sx = HermitianMatrix::identity(3);
        let sc = random_psd(&mut rng, 3, 3);
        for v in [MmseVariant::DIRECT_SI, MmseVariant::DIRECT_NSI, MmseVariant::INDIRECT_SI, MmseVariant::INDIRECT_NSI] {
            let d = mmse_compress(&h, &sx, &sc, 0.0, v).unwrap();
            assert!(d.omega.is_zero(0.0), "{v:?}");
        }
    }

    #[test]
    fn si_designs_meet_budget_with_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h = random_cmatrix(&mut rng, 2, 3);
            let sx = HermitianMatrix::scaled_identity(3, 3.0);
            let sc = crate::hermitian::cond_cov(&sx, &random_cmatrix(&mut rng, 1, 3), &HermitianMatrix::identity(1)).unwrap();
            let d = max_rate_compress(&h, &sc, 1.7).unwrap();
            assert!((side_rate_f(&d.omega, &h, &sc).unwrap() - 1.7).abs() < 1e-6);
            for v in [MmseVariant::DIRECT_SI, MmseVariant::INDIRECT_SI] {
                let d = mmse_compress(&h, &sx, &sc, 1.7, v).unwrap();
                assert!((side_rate_f(&d.omega, &h, &sc).unwrap() - 1.7).abs() < 1e-6, "{v:?}");
            }
            for v in [MmseVariant::DIRECT_NSI, MmseVariant::INDIRECT_NSI] {
                let d = mmse_compress(&h, &sx, &sc, 1.7, v).unwrap();
                assert!(side_rate_f(&d.omega, &h, &sc).unwrap() <= 1.7 + 1e-6, "{v:?}");
                assert!((side_rate_f(&d.omega, &h, &sx).unwrap() - 1.7).abs() < 1e-6, "{v:?}");
            }
        }
    }

    /// Grid search over diagonal gains in the KLT basis.
    fn grid_best(lambdas: &[f64], c: f64, step: f64) -> f64 {
        let rate = |g: &[f64]| budget_rate(g, lambdas);
        let obj = |g: &[f64]| rate(g) - g.iter().map(|a| a.ln_1p()).sum::<f64>() / std::f64::consts::LN_2;
        let amax = |l: f64| ((c * std::f64::consts::LN_2).exp() - 1.0) / l;
        let mut best = 0.0f64;
        let n0 = (amax(lambdas[0]) / step) as usize + 1;
        for i in 0..=n0 {
            let a0 = i as f64 * step;
            if lambdas.len() == 1 {
                if rate(&[a0]) <= c {
                    best = best.max(obj(&[a0]));
                }
                continue;
            }
            let n1 = (amax(lambdas[1]) / step) as usize + 1;
            for j in 0..=n1 {
                let g = [a0, j as f64 * step];
                if rate(&g) <= c {
                    best = best.max(obj(&g));
                }
            }
        }
        best
    }

    #[test]
    fn max_rate_beats_grid_search() {
        for (lambdas, c) in [(vec![4.0], 1.0), (vec![2.5], 0.4), (vec![3.0, 1.8], 1.0), (vec![6.0, 2.0], 1.5)] {
            let a = max_rate_gains(&lambdas, c).unwrap();
            let solver = budget_rate(&a.gains, &lambdas)
                - a.gains.iter().map(|g| g.ln_1p()).sum::<f64>() / std::f64::consts::LN_2;
            let grid = grid_best(&lambdas, c, 1e-3);
            assert!(grid <= solver + 1e-4, "{lambdas:?}: grid {grid} solver {solver}");
        }
    }

    #[test]
    fn solver_net_rate_matches_allocation() {
        let h = real_matrix(1, 1, &[3f64.sqrt()]);
        let sx = HermitianMatrix::identity(1);
        let d = max_rate_compress(&h, &sx, 1.0).unwrap();
        let r = net_rate(&d.omega, &h, &sx).unwrap();
        assert!((r - (1.0 - 1.25f64.log2())).abs() < 1e-12);
    }
}
