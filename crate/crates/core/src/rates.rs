//! Information-theoretic evaluation of Gaussian test channels `ŷ_i = A_i y_i + q_i`
//! with `q_i ~ CN(0, I)`: side rates, net rates, sum-rate, vertex backhaul
//! rates of the Berger–Tung region and the full subset check of that region.
//!
//! All rates are in bits per channel use.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::greedy::SideInfoState;
use crate::hermitian::{
    block_diagonal, compose, factor_gain, gain_from_eigen, log2_det_pd, logdet_cap, vstack,
    CMatrix, HermitianMatrix,
};

/// Tolerance for rate equalities checked across independent routes.
pub const RATE_TOLERANCE: f64 = 1e-6;

/// Slack allowed by [`region_check`] before a subset counts as violated.
pub const REGION_TOLERANCE: f64 = 1e-8;

/// Largest number of BSs [`region_check`] will enumerate subsets for.
pub const REGION_MAX_BS: usize = 12;

/// Compression design of a single BS.
#[derive(Debug, Clone)]
pub struct BsCompression {
    /// `Ω = A†A`
    pub omega: HermitianMatrix,
    /// `A`, square with the BS antenna count.
    pub gain: CMatrix,
    /// Eigen-basis the solver allocated gains in.
    pub basis: CMatrix,
    /// Per-stream gains in `basis`.
    pub gains: Vec<f64>,
    /// Lagrange multiplier of the solver's budget constraint.
    pub mu: f64,
    pub backhaul_used: f64,
    /// Set when the budget is positive but no stream carries signal.
    pub no_signal: bool,
}

impl BsCompression {
    pub fn zero(n_antennas: usize) -> Self {
        Self {
            omega: HermitianMatrix::zeros(n_antennas),
            gain: CMatrix::zeros(n_antennas, n_antennas),
            basis: CMatrix::identity(n_antennas, n_antennas),
            gains: vec![0.0; n_antennas],
            mu: 0.0,
            backhaul_used: 0.0,
            no_signal: false,
        }
    }

    /// `Ω = U diag(α) U†` with a square unitary `U`.
    pub fn from_eigen(basis: CMatrix, gains: Vec<f64>, mu: f64, backhaul_used: f64) -> Self {
        let omega = compose(&basis, &gains);
        let gain = gain_from_eigen(&basis, &gains);
        Self {
            omega,
            gain,
            basis,
            gains,
            mu,
            backhaul_used,
            no_signal: false,
        }
    }

    /// Arbitrary PSD `Ω`; the gain factor is recomputed from its spectrum.
    pub fn from_omega(
        omega: HermitianMatrix,
        basis: CMatrix,
        gains: Vec<f64>,
        mu: f64,
        backhaul_used: f64,
    ) -> Result<Self> {
        let omega = omega.into_psd()?;
        let gain = factor_gain(&omega)?;
        Ok(Self {
            omega,
            gain,
            basis,
            gains,
            mu,
            backhaul_used,
            no_signal: false,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.omega.dim()
    }

    pub fn is_active(&self, threshold: f64) -> bool {
        self.omega.trace() > threshold
    }
}

/// Designs for every BS of a [`ChannelSet`], indexed by BS.
#[derive(Debug, Clone)]
pub struct CompressionSolution {
    pub designs: Vec<BsCompression>,
}

impl CompressionSolution {
    pub fn zeros(channels: &ChannelSet) -> Self {
        Self {
            designs: channels.bs_antennas.iter().map(|&n| BsCompression::zero(n)).collect(),
        }
    }

    pub fn active(&self, threshold: f64) -> Vec<usize> {
        (0..self.designs.len())
            .filter(|&i| self.designs[i].is_active(threshold))
            .collect()
    }
}

/// `H Σ H†`
pub fn received_form(h: &CMatrix, sigma: &HermitianMatrix) -> HermitianMatrix {
    sigma.congruence(h)
}

/// `f(Ω) = log2 det(I + Ω (H Σ_cond H† + I))`, the rate `I(y; ŷ | ŷ_S)`.
pub fn side_rate_f(omega: &HermitianMatrix, h: &CMatrix, sigma_cond: &HermitianMatrix) -> Result<f64> {
    let a = factor_gain(omega)?;
    side_rate_with_gain(&a, h, sigma_cond)
}

/// Same as [`side_rate_f`] with `Ω = A†A` already factored.
pub fn side_rate_with_gain(a: &CMatrix, h: &CMatrix, sigma_cond: &HermitianMatrix) -> Result<f64> {
    check_dims(h, sigma_cond)?;
    side_rate_from_form(a, &received_form(h, sigma_cond))
}

/// `log2 det(I + A (F + I) A†)` for a received form `F = H Σ H†`.
pub fn side_rate_from_form(a: &CMatrix, form: &HermitianMatrix) -> Result<f64> {
    logdet_cap(&form.shifted(1.0).congruence(a))
}

/// `f(Ω) − log2 det(I + Ω)`, the rate `I(x; ŷ | ŷ_S)`.
pub fn net_rate(omega: &HermitianMatrix, h: &CMatrix, sigma_cond: &HermitianMatrix) -> Result<f64> {
    Ok(side_rate_f(omega, h, sigma_cond)? - logdet_cap(omega)?)
}

fn check_dims(h: &CMatrix, sigma: &HermitianMatrix) -> Result<()> {
    if h.ncols() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "H has {} columns, covariance is {}x{}",
            h.ncols(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// Stacked `H̄ = [A_i H_i]` and block-diagonal `Σ_t = diag(A_i A_i† + I)` for
/// the listed BSs.
pub fn stacked_descriptions(
    channels: &ChannelSet,
    designs: &[BsCompression],
    bss: &[usize],
) -> (CMatrix, HermitianMatrix) {
    let n_m = channels.n_ms_antennas();
    let hbar: Vec<CMatrix> = bss.iter().map(|&i| &designs[i].gain * &channels.h[i]).collect();
    let noise: Vec<HermitianMatrix> = bss
        .iter()
        .map(|&i| description_noise(&designs[i].gain))
        .collect();
    (vstack(&hbar, n_m), block_diagonal(&noise))
}

/// Covariance `A A† + I` of `t = A z + q`.
pub fn description_noise(a: &CMatrix) -> HermitianMatrix {
    HermitianMatrix::identity(a.nrows()).congruence(a).shifted(1.0)
}

/// `I(x; ŷ_B)` for the BSs in `bss`.
pub fn sum_rate_subset(channels: &ChannelSet, sol: &CompressionSolution, bss: &[usize]) -> Result<f64> {
    if bss.is_empty() {
        return Ok(0.0);
    }
    let (hbar, st) = stacked_descriptions(channels, &sol.designs, bss);
    let cov = channels.sigma_x.congruence(&hbar).plus(&st);
    Ok(log2_det_pd(&cov)? - log2_det_pd(&st)?)
}

/// Achievable sum-rate `I(x; ŷ_{N_B})` over every BS.
pub fn sum_rate(channels: &ChannelSet, sol: &CompressionSolution) -> Result<f64> {
    let all: Vec<usize> = (0..channels.n_bs()).collect();
    sum_rate_subset(channels, sol, &all)
}

/// Vertex rates `C_π(i) = I(y_π(i); ŷ_π(i) | ŷ_π(1..i−1))`, indexed by BS
/// (BSs outside `order` get 0).
pub fn vertex_rates(order: &[usize], channels: &ChannelSet, sol: &CompressionSolution) -> Result<Vec<f64>> {
    let mut rates = vec![0.0; channels.n_bs()];
    let mut state = SideInfoState::new(channels.sigma_x.clone());
    for &bs in order {
        let d = &sol.designs[bs];
        rates[bs] = side_rate_with_gain(&d.gain, &channels.h[bs], state.sigma_cond())?;
        state.push(bs, &d.gain, &channels.h[bs])?;
    }
    Ok(rates)
}

/// Outcome of the Berger–Tung region check.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCheck {
    pub feasible: bool,
    /// Subset with the largest `I(y_S; ŷ_S | ŷ_S̄) − Σ_{j∈S} C_j`.
    pub worst_subset: Vec<usize>,
    pub worst_violation: f64,
}

/// Evaluates `I(y_S; ŷ_S | ŷ_{U∖S})` for every nonempty `S ⊆ U` of the
/// universe `U` through Schur complements of the joint description
/// covariance `H̄ Σ_x H̄† + Σ_t`.
pub fn subset_rates(channels: &ChannelSet, sol: &CompressionSolution, universe: &[usize]) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = universe.len();
    if n > REGION_MAX_BS {
        return Err(Error::TooLarge(format!(
            "region check enumerates 2^N subsets; N = {n} exceeds {REGION_MAX_BS}"
        )));
    }
    let (hbar, st) = stacked_descriptions(channels, &sol.designs, universe);
    let cov = channels.sigma_x.congruence(&hbar).plus(&st);
    let mut offsets = Vec::with_capacity(n);
    let mut off = 0;
    for &bs in universe {
        offsets.push(off);
        off += sol.designs[bs].gain.nrows();
    }
    let full = log2_det_pd(&cov)?;
    let mut out = Vec::with_capacity((1usize << n) - 1);
    for mask in 1u32..(1u32 << n) {
        let mut rows = Vec::new();
        let mut subset = Vec::new();
        for k in 0..n {
            let bs = universe[k];
            if mask & (1 << k) != 0 {
                subset.push(bs);
            } else {
                let d = sol.designs[bs].gain.nrows();
                rows.extend(offsets[k]..offsets[k] + d);
            }
        }
        let comp = HermitianMatrix::new(cov.as_matrix().select_rows(&rows).select_columns(&rows))?;
        out.push((subset, full - log2_det_pd(&comp)?));
    }
    Ok(out)
}

/// Checks `Σ_{j∈S} C_j ≥ I(y_S; ŷ_S | ŷ_S̄)` for every nonempty subset of the
/// BSs in `universe`; `capacities` is indexed by BS.
pub fn region_check(
    sol: &CompressionSolution,
    capacities: &[f64],
    channels: &ChannelSet,
    universe: &[usize],
) -> Result<RegionCheck> {
    let mut worst = (Vec::new(), f64::NEG_INFINITY);
    for (subset, need) in subset_rates(channels, sol, universe)? {
        let have: f64 = subset.iter().map(|&j| capacities[j]).sum();
        let violation = need - have;
        if violation > worst.1 {
            worst = (subset, violation);
        }
    }
    Ok(RegionCheck {
        feasible: worst.1 <= REGION_TOLERANCE,
        worst_subset: worst.0,
        worst_violation: worst.1,
    })
}
