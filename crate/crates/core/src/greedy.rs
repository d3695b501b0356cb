//! Sequential decompression: the cloud recovers descriptions one BS at a time,
//! each one compressed against the descriptions already recovered. The order
//! is chosen greedily by the per-step rate gain.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::hermitian::{block_diagonal, cond_cov, vstack, CMatrix, HermitianMatrix};
use crate::rates::{description_noise, net_rate, side_rate_with_gain, BsCompression, CompressionSolution};
use crate::solvers::{max_rate_compress, mmse_compress, MmseVariant};

/// Two per-step objectives within this many bits count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Descriptions already recovered by the cloud and the resulting conditional
/// covariance `Σ_{x|ŷ_S}`.
#[derive(Debug, Clone)]
pub struct SideInfoState {
    sigma_x: HermitianMatrix,
    selected: Vec<usize>,
    hbar: Vec<CMatrix>,
    noise: Vec<HermitianMatrix>,
    sigma_cond: HermitianMatrix,
}

impl SideInfoState {
    pub fn new(sigma_x: HermitianMatrix) -> Self {
        Self {
            sigma_cond: sigma_x.clone(),
            sigma_x,
            selected: Vec::new(),
            hbar: Vec::new(),
            noise: Vec::new(),
        }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn contains(&self, bs: usize) -> bool {
        self.selected.contains(&bs)
    }

    pub fn sigma_x(&self) -> &HermitianMatrix {
        &self.sigma_x
    }

    pub fn sigma_cond(&self) -> &HermitianMatrix {
        &self.sigma_cond
    }

    /// Stacked `H̄` and block-diagonal `Σ_t` of the recovered descriptions.
    pub fn stack(&self) -> (CMatrix, HermitianMatrix) {
        (vstack(&self.hbar, self.sigma_x.dim()), block_diagonal(&self.noise))
    }

    /// Adds the description `ŷ = A (H x + z) + q` of `bs`.
    pub fn push(&mut self, bs: usize, a: &CMatrix, h: &CMatrix) -> Result<()> {
        if self.contains(bs) {
            return Err(Error::Logic(format!("BS {bs} is already in the side information")));
        }
        if a.ncols() != h.nrows() || h.ncols() != self.sigma_x.dim() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, H is {}x{}",
                a.nrows(),
                a.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        self.hbar.push(a * h);
        self.noise.push(description_noise(a));
        self.selected.push(bs);
        let (hbar, st) = self.stack();
        self.sigma_cond = cond_cov(&self.sigma_x, &hbar, &st)?;
        Ok(())
    }

    /// Consuming form of [`push`](Self::push).
    pub fn with(mut self, bs: usize, a: &CMatrix, h: &CMatrix) -> Result<Self> {
        self.push(bs, a, h)?;
        Ok(self)
    }
}

/// Per-BS compression rule used inside the sequential pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Rate-optimal design against the current side information.
    MaxRate,
    /// Rate-optimal design that ignores side information.
    MaxRateNoSi,
    Mmse(MmseVariant),
}

impl Solver {
    pub fn design(&self, h: &CMatrix, sigma_x: &HermitianMatrix, sigma_cond: &HermitianMatrix, c: f64) -> Result<BsCompression> {
        match self {
            Solver::MaxRate => max_rate_compress(h, sigma_cond, c),
            Solver::MaxRateNoSi => max_rate_compress(h, sigma_x, c),
            Solver::Mmse(v) => mmse_compress(h, sigma_x, sigma_cond, c, *v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// Decompression order; zero-channel BSs come last.
    pub order: Vec<usize>,
    pub solution: CompressionSolution,
    /// `I(x; ŷ_π(j) | ŷ_π(1..j−1))` for each step, aligned with `order`.
    pub step_rates: Vec<f64>,
}

impl GreedyOutcome {
    pub fn sum_rate(&self) -> f64 {
        self.step_rates.iter().sum()
    }
}

fn check_capacities(channels: &ChannelSet, capacities: &[f64]) -> Result<()> {
    if capacities.len() != channels.n_bs() {
        return Err(Error::Dimension(format!(
            "{} capacities for {} BSs",
            capacities.len(),
            channels.n_bs()
        )));
    }
    if let Some(c) = capacities.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
        return Err(Error::InvalidInput(format!("backhaul capacity {c} is not a finite nonnegative number")));
    }
    Ok(())
}

fn is_zero_channel(h: &CMatrix) -> bool {
    h.iter().all(|z| z.norm_sqr() == 0.0)
}

/// Commits `design` for `bs`: records the vertex rate actually used under the
/// current side information and extends the state.
fn commit(
    state: &mut SideInfoState,
    channels: &ChannelSet,
    bs: usize,
    mut design: BsCompression,
) -> Result<(BsCompression, f64)> {
    let h = &channels.h[bs];
    let rate = net_rate(&design.omega, h, state.sigma_cond())?;
    design.backhaul_used = side_rate_with_gain(&design.gain, h, state.sigma_cond())?;
    state.push(bs, &design.gain, h)?;
    Ok((design, rate))
}

/// Greedy ordering: at each step every remaining BS is compressed against
/// the current side information and the one with the largest rate gain is
/// appended. Ties go to the lowest index.
pub fn greedy_compress(channels: &ChannelSet, capacities: &[f64], solver: Solver) -> Result<GreedyOutcome> {
    check_capacities(channels, capacities)?;
    let n = channels.n_bs();
    let mut state = SideInfoState::new(channels.sigma_x.clone());
    let mut solution = CompressionSolution::zeros(channels);
    let (mut remaining, zero): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| !is_zero_channel(&channels.h[i]));
    let mut order = Vec::with_capacity(n);
    let mut step_rates = Vec::with_capacity(n);

    while !remaining.is_empty() {
        let mut best: Option<(usize, BsCompression, f64)> = None;
        for (pos, &bs) in remaining.iter().enumerate() {
            let d = solver.design(&channels.h[bs], &channels.sigma_x, state.sigma_cond(), capacities[bs])?;
            let phi = net_rate(&d.omega, &channels.h[bs], state.sigma_cond())?;
            if best.as_ref().map_or(true, |b| phi > b.2 + TIE_TOLERANCE) {
                best = Some((pos, d, phi));
            }
        }
        let (pos, design, _) = best.expect("remaining is nonempty");
        let bs = remaining.remove(pos);
        let (design, rate) = commit(&mut state, channels, bs, design)?;
        solution.designs[bs] = design;
        order.push(bs);
        step_rates.push(rate);
    }
    for bs in zero {
        order.push(bs);
        step_rates.push(0.0);
    }
    Ok(GreedyOutcome { order, solution, step_rates })
}

/// The sequential pipeline along a prescribed order.
pub fn fixed_order_compress(
    channels: &ChannelSet,
    capacities: &[f64],
    solver: Solver,
    order: &[usize],
) -> Result<GreedyOutcome> {
    check_capacities(channels, capacities)?;
    let mut state = SideInfoState::new(channels.sigma_x.clone());
    let mut solution = CompressionSolution::zeros(channels);
    let mut step_rates = Vec::with_capacity(order.len());
    for &bs in order {
        if bs >= channels.n_bs() {
            return Err(Error::InvalidInput(format!("BS index {bs} out of range")));
        }
        let d = solver.design(&channels.h[bs], &channels.sigma_x, state.sigma_cond(), capacities[bs])?;
        let (design, rate) = commit(&mut state, channels, bs, d)?;
        solution.designs[bs] = design;
        step_rates.push(rate);
    }
    Ok(GreedyOutcome {
        order: order.to_vec(),
        solution,
        step_rates,
    })
}
