//! Monte-Carlo harness: random drops, per-scheme evaluation, aggregation
//! into per-MS rate tables.

mod config;
mod output;

pub use config::{ExperimentConfig, Scenario, Scheme, Sweep, SweepAxis};
pub use output::{config_digest, write_csv, write_metadata, RunMetadata};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, generate_channels, generate_topology, ChannelSet};
use crate::error::{Error, Result};
use crate::greedy::{greedy_compress, SideInfoState, Solver};
use crate::rates::{side_rate_with_gain, sum_rate_subset, BsCompression, CompressionSolution};
use crate::robust::{robust_from_form, sample_uncertainty_with};
use crate::selection::{baseline_select, mbs_design, subset_pipeline, two_phase_select, BaselineMode};
use crate::solvers::{max_rate_compress, max_rate_from_form};

/// Slack on the backhaul check of imperfect-SI designs.
pub const FAILURE_TOLERANCE: f64 = 1e-9;

/// One table row: a scheme at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub per_ms_rate_mean: f64,
    pub per_ms_rate_stderr: f64,
    pub n_drops: usize,
}

/// Seeds of one drop, all derived from `base_seed + drop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropSeeds {
    pub topology: u64,
    pub channel: u64,
    pub uncertainty: u64,
    pub baseline: u64,
}

impl DropSeeds {
    pub fn new(base_seed: u64, drop: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(drop as u64));
        Self {
            topology: rng.next_u64(),
            channel: rng.next_u64(),
            uncertainty: rng.next_u64(),
            baseline: rng.next_u64(),
        }
    }
}

/// Outcome of the sequential pipeline when each BS designs against side
/// information it only knows approximately.
#[derive(Debug, Clone)]
pub struct ImperfectOutcome {
    pub sum_rate: f64,
    /// `failed[i]`: the description of BS `i` needed more than `C_i` under
    /// the true side information and was dropped.
    pub failed: Vec<bool>,
    pub solution: CompressionSolution,
}

impl ImperfectOutcome {
    pub fn n_failed(&self) -> usize {
        self.failed.iter().filter(|f| **f).count()
    }
}

/// Runs the pipeline along `order`. `design(bs, state)` returns the design of
/// `bs` given the true side information recovered so far; a design whose
/// true rate `f` exceeds `C_bs` cannot be decoded, so it is dropped and later
/// BSs see side information without it.
pub fn evaluate_imperfect_si<F>(
    channels: &ChannelSet,
    capacities: &[f64],
    order: &[usize],
    mut design: F,
) -> Result<ImperfectOutcome>
where
    F: FnMut(usize, &SideInfoState) -> Result<BsCompression>,
{
    let n = channels.n_bs();
    if capacities.len() != n {
        return Err(Error::Dimension(format!("{} capacities for {n} BSs", capacities.len())));
    }
    let mut state = SideInfoState::new(channels.sigma_x.clone());
    let mut solution = CompressionSolution::zeros(channels);
    let mut failed = vec![false; n];
    let mut decoded = Vec::with_capacity(n);
    for &bs in order {
        let h = channels.h.get(bs).ok_or_else(|| Error::InvalidInput(format!("BS index {bs} out of range")))?;
        let mut d = design(bs, &state)?;
        let need = side_rate_with_gain(&d.gain, h, state.sigma_cond())?;
        if need > capacities[bs] + FAILURE_TOLERANCE {
            failed[bs] = true;
            continue;
        }
        d.backhaul_used = need;
        state.push(bs, &d.gain, h)?;
        solution.designs[bs] = d;
        decoded.push(bs);
    }
    Ok(ImperfectOutcome {
        sum_rate: sum_rate_subset(channels, &solution, &decoded)?,
        failed,
        solution,
    })
}

/// How each BS treats the perturbed side information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImperfectMode {
    Robust,
    NonRobust,
}

/// Imperfect-SI pipeline along the perfect-SI greedy order. Each BS after the
/// first sees `F̂ = F − Δ̃` with `Δ̃` drawn by [`sample_uncertainty_with`]
/// from a stream keyed by the BS index.
pub fn imperfect_si_pipeline(
    channels: &ChannelSet,
    capacities: &[f64],
    mode: ImperfectMode,
    uncertainty: bool,
    seed: u64,
) -> Result<ImperfectOutcome> {
    let order = greedy_compress(channels, capacities, Solver::MaxRate)?.order;
    evaluate_imperfect_si(channels, capacities, &order, |bs, state| {
        let h = &channels.h[bs];
        let c = capacities[bs];
        if !uncertainty || state.selected().is_empty() {
            return max_rate_compress(h, state.sigma_cond(), c);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bs as u64);
        let sample = sample_uncertainty_with(&mut rng, h, state.sigma_cond())?;
        match mode {
            ImperfectMode::NonRobust => max_rate_from_form(&sample.nominal_form, c),
            ImperfectMode::Robust => {
                let bounds = sample.bounds.tightened_for(&sample.nominal_form)?;
                Ok(robust_from_form(&sample.nominal_form, c, &bounds)?.compression)
            }
        }
    })
}

/// The random network of one drop.
#[derive(Debug, Clone)]
pub struct NetworkDrop {
    pub channels: ChannelSet,
    /// Backhaul per BS: `C` for MBSs, `ωC` for HBSs.
    pub capacities: Vec<f64>,
    pub n_ms: usize,
    pub mbs_indices: Vec<usize>,
    pub seeds: DropSeeds,
}

pub fn make_drop(cfg: &ExperimentConfig, drop: usize) -> Result<NetworkDrop> {
    let seeds = DropSeeds::new(cfg.base_seed, drop);
    let topo = generate_topology(&cfg.topology, seeds.topology)?;
    let channels = generate_channels(&topo, &cfg.antennas, db_to_linear(cfg.p_tx_db), seeds.channel)?;
    let mbs_indices: Vec<usize> = topo
        .base_stations
        .iter()
        .enumerate()
        .filter(|(_, b)| b.role == crate::channel::BsRole::Mbs)
        .map(|(i, _)| i)
        .collect();
    let capacities = topo
        .base_stations
        .iter()
        .map(|b| match b.role {
            crate::channel::BsRole::Mbs => cfg.capacity,
            crate::channel::BsRole::Hbs => cfg.omega * cfg.capacity,
        })
        .collect();
    Ok(NetworkDrop {
        channels,
        capacities,
        n_ms: topo.n_ms(),
        mbs_indices,
        seeds,
    })
}

fn greedy_rate(d: &NetworkDrop, solver: Solver) -> Result<f64> {
    Ok(greedy_compress(&d.channels, &d.capacities, solver)?.sum_rate())
}

/// Sum-rates of every scheme on one drop, in the order of `schemes`.
pub fn evaluate_drop(cfg: &ExperimentConfig, schemes: &[Scheme], d: &NetworkDrop) -> Result<Vec<f64>> {
    let selection = if schemes.iter().any(Scheme::is_selection) {
        let mbs = *d
            .mbs_indices
            .first()
            .ok_or_else(|| Error::Config("selection needs an MBS".into()))?;
        let md = mbs_design(&d.channels, mbs, cfg.selection.c_mbs)?;
        let two = two_phase_select(&d.channels, &cfg.selection, mbs, &md)?;
        Some((mbs, md, two))
    } else {
        None
    };
    schemes
        .iter()
        .map(|s| match s {
            Scheme::MaxRateSi | Scheme::PerfectSi => greedy_rate(d, Solver::MaxRate),
            Scheme::MaxRateNsi | Scheme::NoSi => greedy_rate(d, Solver::MaxRateNoSi),
            Scheme::Mmse(v) => greedy_rate(d, Solver::Mmse(*v)),
            Scheme::Robust | Scheme::ImperfectNonRobust => {
                let mode = if *s == Scheme::Robust { ImperfectMode::Robust } else { ImperfectMode::NonRobust };
                Ok(imperfect_si_pipeline(&d.channels, &d.capacities, mode, cfg.uncertainty, d.seeds.uncertainty)?.sum_rate)
            }
            Scheme::TwoPhase | Scheme::Exhaustive | Scheme::Local | Scheme::Random => {
                let (mbs, md, two) = selection.as_ref().expect("selection outcome computed above");
                let mode = match s {
                    Scheme::TwoPhase => return Ok(two.sum_rate),
                    Scheme::Exhaustive => BaselineMode::Exhaustive,
                    Scheme::Local => BaselineMode::Local,
                    _ => BaselineMode::Random,
                };
                let k = two.selected.len();
                let subset = baseline_select(&d.channels, &cfg.selection, *mbs, md, k, mode, d.seeds.baseline)?;
                Ok(subset_pipeline(&d.channels, &cfg.selection, *mbs, md, &subset)?.sum_rate)
            }
        })
        .collect()
}

/// Sample mean and standard error (`s / √n`, zero for a single sample).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-MS rates `[scheme][drop]` at a single (non-swept) configuration.
pub fn per_ms_rates(cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let schemes = cfg.parsed_schemes()?;
    let per_drop: Vec<Vec<f64>> = (0..cfg.n_drops)
        .into_par_iter()
        .map(|k| {
            let d = make_drop(cfg, k)?;
            let rates = evaluate_drop(cfg, &schemes, &d)?;
            Ok(rates.into_iter().map(|r| r / d.n_ms as f64).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..schemes.len())
        .map(|s| per_drop.iter().map(|r| r[s]).collect())
        .collect())
}

/// Runs the whole table: every sweep point, every scheme, `n_drops` drops
/// each. NetworkDrop `k` uses the same seeds at every sweep point.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let schemes = cfg.parsed_schemes()?;
    let mut rows = Vec::new();
    for (axis, value) in cfg.points() {
        let point = cfg.with_axis(axis, value)?;
        let rates = per_ms_rates(&point)?;
        for (s, xs) in schemes.iter().zip(&rates) {
            let (mean, se) = mean_stderr(xs);
            rows.push(ResultRow {
                sweep_value: value,
                scheme: s.name().to_string(),
                per_ms_rate_mean: mean,
                per_ms_rate_stderr: se,
                n_drops: xs.len(),
            });
        }
    }
    Ok(rows)
}

/// Mean per-MS rate of `scheme` at each sweep point, in sweep order.
pub fn series(rows: &[ResultRow], scheme: &str) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.scheme == scheme)
        .map(|r| (r.sweep_value, r.per_ms_rate_mean))
        .collect()
}
