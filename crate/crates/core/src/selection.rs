//! Joint HBS selection and compression under a shared HBS backhaul budget.
//!
//! The MBS is always active and decoded first. The HBS descriptions are
//! designed jointly by block-coordinate ascent on
//! `I(x; ŷ_H | ŷ_MBS) − q_H Σ tr(Ω_i)` subject to
//! `I(y_H; ŷ_H | ŷ_MBS) ≤ C_H`. The trace penalty drives some `Ω_i` to zero;
//! the surviving set is then re-optimized without penalty.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::greedy::SideInfoState;
use crate::hermitian::{compose, cond_cov, logdet_cap, vstack, CMatrix, HermitianMatrix};
use crate::rates::{received_form, sum_rate, BsCompression, CompressionSolution};
use crate::solvers::{max_rate_compress, max_rate_gains};

/// Penalties below this are treated as zero (the update switches to the
/// unpenalized closed form, whose limit it is).
pub const ZERO_PENALTY: f64 = 1e-10;

/// Largest number of subsets the exhaustive baseline will evaluate.
pub const EXHAUSTIVE_CAP: u64 = 100_000;

const BISECTION_ITERS: usize = 200;

fn default_activation_threshold() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    200
}
fn default_convergence_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Activation cost per unit of `tr(Ω_i)`, in bits.
    pub q_h: f64,
    /// Backhaul shared by all HBSs, in bits.
    pub c_h: f64,
    pub c_mbs: f64,
    #[serde(default = "default_activation_threshold")]
    pub activation_threshold: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            q_h: 1.0,
            c_h: 6.0,
            c_mbs: 4.0,
            activation_threshold: default_activation_threshold(),
            max_iters: default_max_iters(),
            convergence_tol: default_convergence_tol(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("q_h", self.q_h),
            ("c_h", self.c_h),
            ("c_mbs", self.c_mbs),
            ("convergence_tol", self.convergence_tol),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.activation_threshold > 0.0) {
            return Err(Error::Config("activation_threshold must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// `diag(√(ω/(1+ω))) V† H` for `Ω = V diag(ω) V†`, so that
/// `F†F = H† (I + Ω)^{-1} Ω H`.
fn whitened_block(omega: &HermitianMatrix, h: &CMatrix) -> Result<CMatrix> {
    let eig = omega.eig_desc()?;
    let w: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0) / (1.0 + v.max(0.0))).collect();
    Ok(crate::hermitian::gain_from_eigen(&eig.basis, &w) * h)
}

fn whitened_stack(channels: &ChannelSet, omegas: &[HermitianMatrix], members: &[usize]) -> Result<CMatrix> {
    let blocks = members
        .iter()
        .filter(|&&j| !omegas[j].is_zero(0.0))
        .map(|&j| whitened_block(&omegas[j], &channels.h[j]))
        .collect::<Result<Vec<_>>>()?;
    Ok(vstack(&blocks, channels.n_ms_antennas()))
}

/// `I(x; ŷ_S | ŷ_MBS)` for the HBSs in `members`.
pub fn conditional_rate(
    channels: &ChannelSet,
    sigma1: &HermitianMatrix,
    omegas: &[HermitianMatrix],
    members: &[usize],
) -> Result<f64> {
    let f = whitened_stack(channels, omegas, members)?;
    logdet_cap(&sigma1.congruence(&f))
}

/// `I(y_S; ŷ_S | ŷ_MBS) = log2 det R + Σ log2 det(I + Ω_j)`.
pub fn shared_backhaul(
    channels: &ChannelSet,
    sigma1: &HermitianMatrix,
    omegas: &[HermitianMatrix],
    members: &[usize],
) -> Result<f64> {
    let mut total = conditional_rate(channels, sigma1, omegas, members)?;
    for &j in members {
        total += logdet_cap(&omegas[j])?;
    }
    Ok(total)
}

/// Penalized objective `I(x; ŷ_S | ŷ_MBS) − q_H Σ tr(Ω_i)`.
pub fn penalized_objective(
    channels: &ChannelSet,
    sigma1: &HermitianMatrix,
    omegas: &[HermitianMatrix],
    members: &[usize],
    q_h: f64,
) -> Result<f64> {
    let penalty: f64 = members.iter().map(|&j| omegas[j].trace()).sum();
    Ok(conditional_rate(channels, sigma1, omegas, members)? - q_h * penalty)
}

/// Stationary gain of `(1 − μ) log2(1 + αλ) − log2(1 + α) − q α` with
/// `q' = q ln 2`, written in the cancellation-free form of the positive root.
pub fn penalized_gain(lambda: f64, mu: f64, q_prime: f64) -> f64 {
    // q'λ α² + b α − c = 0
    let b = mu * lambda + q_prime * (lambda + 1.0);
    let c = (1.0 - mu) * lambda - 1.0 - q_prime;
    if c <= 0.0 {
        return 0.0;
    }
    let disc = b * b + 4.0 * q_prime * lambda * c;
    2.0 * c / (b + disc.sqrt())
}

/// Result of one block update.
#[derive(Debug, Clone)]
pub struct BlockUpdate {
    pub omega: HermitianMatrix,
    pub basis: CMatrix,
    pub gains: Vec<f64>,
    pub mu: f64,
    /// Eigenvalues of `Σ_{y_i | ŷ_others}` in the order of `basis`.
    pub eigenvalues: Vec<f64>,
    /// Backhaul left for this HBS after the others' usage.
    pub residual_budget: f64,
}

impl BlockUpdate {
    /// `Σ log2(1 + α_l λ_l)`
    pub fn backhaul(&self) -> f64 {
        self.gains
            .iter()
            .zip(&self.eigenvalues)
            .map(|(a, l)| (a * l).ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    }
}

fn budget_of(lambdas: &[f64], mu: f64, q_prime: f64) -> (Vec<f64>, f64) {
    let gains: Vec<f64> = lambdas.iter().map(|&l| penalized_gain(l, mu, q_prime)).collect();
    let h = gains.iter().zip(lambdas).map(|(a, l)| (a * l).ln_1p()).sum::<f64>() / std::f64::consts::LN_2;
    (gains, h)
}

/// Exact maximizer of the penalized objective over `Ω_i` with every other
/// HBS in `members` held fixed.
pub fn omega_update(
    i: usize,
    channels: &ChannelSet,
    sigma1: &HermitianMatrix,
    omegas: &[HermitianMatrix],
    members: &[usize],
    q_h: f64,
    c_h: f64,
) -> Result<BlockUpdate> {
    let others: Vec<usize> = members.iter().copied().filter(|&j| j != i).collect();
    let f = whitened_stack(channels, omegas, &others)?;
    let n_m = channels.n_ms_antennas();
    let sigma_cond = cond_cov(sigma1, &f, &HermitianMatrix::identity(f.nrows()))?;
    let log_det_r = logdet_cap(&sigma1.congruence(&f))?;
    let mut residual = c_h - log_det_r;
    for &j in &others {
        residual -= logdet_cap(&omegas[j])?;
    }
    debug_assert_eq!(sigma_cond.dim(), n_m);
    let eig = received_form(&channels.h[i], &sigma_cond).shifted(1.0).eig_desc()?;
    let n = eig.values.len();

    let (gains, mu) = if residual <= 0.0 {
        (vec![0.0; n], 0.0)
    } else if q_h < ZERO_PENALTY {
        let a = max_rate_gains(&eig.values, residual)?;
        (a.gains, a.mu)
    } else {
        let qp = std::f64::consts::LN_2 * q_h;
        let (g0, h0) = budget_of(&eig.values, 0.0, qp);
        if h0 <= residual {
            (g0, 0.0)
        } else {
            let mut hi = 1.0;
            while budget_of(&eig.values, hi, qp).1 > residual {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if budget_of(&eig.values, mid, qp).1 > residual {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // `hi` is on the feasible side.
            (budget_of(&eig.values, hi, qp).0, hi)
        }
    };
    Ok(BlockUpdate {
        omega: compose(&eig.basis, &gains),
        basis: eig.basis,
        gains,
        mu,
        eigenvalues: eig.values,
        residual_budget: residual,
    })
}

/// Designs and diagnostics of a block-coordinate run.
#[derive(Debug, Clone)]
pub struct AscentResult {
    pub updates: Vec<Option<BlockUpdate>>,
    pub omegas: Vec<HermitianMatrix>,
    /// Objective at initialization and after every sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Block-coordinate ascent over the HBSs in `members`, starting from `init`.
pub fn block_coordinate_ascent(
    channels: &ChannelSet,
    sigma1: &HermitianMatrix,
    members: &[usize],
    init: Vec<HermitianMatrix>,
    q_h: f64,
    cfg: &SelectionConfig,
) -> Result<AscentResult> {
    let mut omegas = init;
    let mut updates: Vec<Option<BlockUpdate>> = vec![None; channels.n_bs()];
    let mut trace = vec![penalized_objective(channels, sigma1, &omegas, members, q_h)?];
    let mut converged = members.is_empty();
    for _ in 0..cfg.max_iters {
        if converged {
            break;
        }
        for &i in members {
            let u = omega_update(i, channels, sigma1, &omegas, members, q_h, cfg.c_h)?;
            omegas[i] = u.omega.clone();
            updates[i] = Some(u);
        }
        let obj = penalized_objective(channels, sigma1, &omegas, members, q_h)?;
        let prev = *trace.last().expect("trace starts nonempty");
        trace.push(obj);
        converged = (obj - prev).abs() <= cfg.convergence_tol * obj.abs().max(1.0);
    }
    Ok(AscentResult {
        updates,
        omegas,
        trace,
        converged,
    })
}

/// Outcome of a selection run.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    /// HBSs the final design was computed on, ascending.
    pub selected: Vec<usize>,
    /// Designs for every BS, the MBS included.
    pub solution: CompressionSolution,
    /// Penalized objective per sweep of the selection phase (empty when the
    /// phase was skipped).
    pub phase1_trace: Vec<f64>,
    /// Unpenalized objective per sweep of the refinement phase.
    pub phase2_trace: Vec<f64>,
    /// `I(x; ŷ)` over all descriptions.
    pub sum_rate: f64,
    /// `I(y_H; ŷ_H | ŷ_MBS)`
    pub hbs_backhaul: f64,
}

/// MBS description: rate-optimal, no side information, budget `C_mbs`.
pub fn mbs_design(channels: &ChannelSet, mbs: usize, c_mbs: f64) -> Result<BsCompression> {
    max_rate_compress(&channels.h[mbs], &channels.sigma_x, c_mbs)
}

fn hbs_indices(channels: &ChannelSet, mbs: usize) -> Vec<usize> {
    (0..channels.n_bs()).filter(|&i| i != mbs).collect()
}

fn sigma_after_mbs(channels: &ChannelSet, mbs: usize, design: &BsCompression) -> Result<HermitianMatrix> {
    let state = SideInfoState::new(channels.sigma_x.clone()).with(mbs, &design.gain, &channels.h[mbs])?;
    Ok(state.sigma_cond().clone())
}

fn finish(
    channels: &ChannelSet,
    mbs: usize,
    mbs_design: &BsCompression,
    sigma1: &HermitianMatrix,
    members: &[usize],
    ascent: Option<AscentResult>,
) -> Result<SelectionOutcome> {
    let mut solution = CompressionSolution::zeros(channels);
    solution.designs[mbs] = mbs_design.clone();
    let (omegas, phase2_trace) = match ascent {
        Some(a) => {
            for &i in members {
                if let Some(u) = &a.updates[i] {
                    solution.designs[i] = BsCompression::from_eigen(u.basis.clone(), u.gains.clone(), u.mu, u.backhaul());
                }
            }
            (a.omegas, a.trace)
        }
        None => (vec_zero_omegas(channels), Vec::new()),
    };
    Ok(SelectionOutcome {
        hbs_backhaul: shared_backhaul(channels, sigma1, &omegas, members)?,
        sum_rate: sum_rate(channels, &solution)?,
        selected: members.to_vec(),
        solution,
        phase1_trace: Vec::new(),
        phase2_trace,
    })
}

fn vec_zero_omegas(channels: &ChannelSet) -> Vec<HermitianMatrix> {
    channels.bs_antennas.iter().map(|&n| HermitianMatrix::zeros(n)).collect()
}

/// Unpenalized joint design restricted to `subset`, started from an equal
/// split of `C_H` (each HBS compressed alone against `ŷ_MBS` at
/// `C_H / |subset|`, which is jointly feasible).
pub fn subset_pipeline(
    channels: &ChannelSet,
    cfg: &SelectionConfig,
    mbs: usize,
    mbs_design: &BsCompression,
    subset: &[usize],
) -> Result<SelectionOutcome> {
    cfg.validate()?;
    let mut members: Vec<usize> = subset.to_vec();
    members.sort_unstable();
    members.dedup();
    if members.iter().any(|&i| i == mbs || i >= channels.n_bs()) {
        return Err(Error::InvalidInput(format!("subset {subset:?} must list HBS indices only")));
    }
    let sigma1 = sigma_after_mbs(channels, mbs, mbs_design)?;
    if members.is_empty() {
        return finish(channels, mbs, mbs_design, &sigma1, &members, None);
    }
    let share = cfg.c_h / members.len() as f64;
    let mut init = vec_zero_omegas(channels);
    for &i in &members {
        init[i] = max_rate_compress(&channels.h[i], &sigma1, share)?.omega;
    }
    let ascent = block_coordinate_ascent(channels, &sigma1, &members, init, 0.0, cfg)?;
    finish(channels, mbs, mbs_design, &sigma1, &members, Some(ascent))
}

/// Two-phase selection: penalized ascent from all-zero designs selects the
/// HBSs with `tr(Ω_i) > ε_act`, then the unpenalized design is computed on
/// that set.
pub fn two_phase_select(
    channels: &ChannelSet,
    cfg: &SelectionConfig,
    mbs: usize,
    mbs_design: &BsCompression,
) -> Result<SelectionOutcome> {
    cfg.validate()?;
    let sigma1 = sigma_after_mbs(channels, mbs, mbs_design)?;
    let all = hbs_indices(channels, mbs);
    let phase1 = block_coordinate_ascent(channels, &sigma1, &all, vec_zero_omegas(channels), cfg.q_h, cfg)?;
    let chosen: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| phase1.omegas[i].trace() > cfg.activation_threshold)
        .collect();
    let mut out = subset_pipeline(channels, cfg, mbs, mbs_design, &chosen)?;
    out.phase1_trace = phase1.trace;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// The `k` HBSs with the largest `log2 det(I + H Σ_x H†)`.
    Local,
    /// Best sum-rate over all `k`-subsets.
    Exhaustive,
    Random,
}

/// `log2 det(I + H_i Σ_x H_i†)`, the capacity from all MSs to BS `i`.
pub fn local_capacity(channels: &ChannelSet, i: usize) -> Result<f64> {
    logdet_cap(&received_form(&channels.h[i], &channels.sigma_x))
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for j in 0..k {
        r = r * (n - j) as u128 / (j + 1) as u128;
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

/// Visits every `k`-subset of `items` in lexicographic order.
pub fn for_each_subset(items: &[usize], k: usize, mut visit: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let n = items.len();
    if k > n {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let subset: Vec<usize> = idx.iter().map(|&p| items[p]).collect();
        visit(&subset)?;
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == pos - 1 + n - k {
            pos -= 1;
        }
        if pos == 0 {
            return Ok(());
        }
        idx[pos - 1] += 1;
        for j in pos..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Baseline HBS choice of size `k`; the result is sorted ascending.
pub fn baseline_select(
    channels: &ChannelSet,
    cfg: &SelectionConfig,
    mbs: usize,
    mbs_design: &BsCompression,
    k: usize,
    mode: BaselineMode,
    seed: u64,
) -> Result<Vec<usize>> {
    let hbs = hbs_indices(channels, mbs);
    if k > hbs.len() {
        return Err(Error::InvalidInput(format!("cannot select {k} of {} HBSs", hbs.len())));
    }
    let mut chosen = match mode {
        BaselineMode::Local => {
            let mut scored = hbs
                .iter()
                .map(|&i| Ok((i, local_capacity(channels, i)?)))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.into_iter().take(k).map(|(i, _)| i).collect()
        }
        BaselineMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, hbs.len(), k).into_iter().map(|p| hbs[p]).collect()
        }
        BaselineMode::Exhaustive => {
            let count = binomial(hbs.len(), k);
            if count > EXHAUSTIVE_CAP {
                return Err(Error::TooLarge(format!(
                    "exhaustive search over {count} subsets exceeds {EXHAUSTIVE_CAP}"
                )));
            }
            let mut best: Option<(f64, Vec<usize>)> = None;
            for_each_subset(&hbs, k, |s| {
                let r = subset_pipeline(channels, cfg, mbs, mbs_design, s)?.sum_rate;
                if best.as_ref().map_or(true, |b| r > b.0 + 1e-12) {
                    best = Some((r, s.to_vec()));
                }
                Ok(())
            })?;
            best.map(|b| b.1).unwrap_or_default()
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}
