use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{Antennas, HotSpotConfig, TopologyConfig};
use crate::error::{Error, Result};
use crate::selection::SelectionConfig;
use crate::solvers::MmseVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CompareSchemes,
    Robustness,
    Selection,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::CompareSchemes, Scenario::Robustness, Scenario::Selection];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CompareSchemes => "compare_schemes",
            Scenario::Robustness => "robustness",
            Scenario::Selection => "selection",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// A compression or selection scheme evaluated per drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    MaxRateSi,
    MaxRateNsi,
    Mmse(MmseVariant),
    /// Rate-optimal greedy pipeline with exact side information.
    PerfectSi,
    /// Rate-optimal greedy pipeline ignoring side information.
    NoSi,
    /// Worst-case designs from perturbed side information.
    Robust,
    /// Rate-optimal designs that trust perturbed side information.
    ImperfectNonRobust,
    TwoPhase,
    Exhaustive,
    Local,
    Random,
}

impl Scheme {
    pub const ALL: [Scheme; 14] = [
        Scheme::MaxRateSi,
        Scheme::MaxRateNsi,
        Scheme::Mmse(MmseVariant::DIRECT_SI),
        Scheme::Mmse(MmseVariant::DIRECT_NSI),
        Scheme::Mmse(MmseVariant::INDIRECT_SI),
        Scheme::Mmse(MmseVariant::INDIRECT_NSI),
        Scheme::PerfectSi,
        Scheme::NoSi,
        Scheme::Robust,
        Scheme::ImperfectNonRobust,
        Scheme::TwoPhase,
        Scheme::Exhaustive,
        Scheme::Local,
        Scheme::Random,
    ];

    pub fn name(&self) -> &'static str {
        use crate::solvers::MmseTarget::*;
        match self {
            Scheme::MaxRateSi => "maxrate_si",
            Scheme::MaxRateNsi => "maxrate_nsi",
            Scheme::Mmse(v) => match (v.target, v.side_info) {
                (Direct, true) => "mmse_direct_si",
                (Direct, false) => "mmse_direct_nsi",
                (Indirect, true) => "mmse_indirect_si",
                (Indirect, false) => "mmse_indirect_nsi",
            },
            Scheme::PerfectSi => "perfect_si",
            Scheme::NoSi => "no_si",
            Scheme::Robust => "robust",
            Scheme::ImperfectNonRobust => "imperfect_nonrobust",
            Scheme::TwoPhase => "two_phase",
            Scheme::Exhaustive => "exhaustive",
            Scheme::Local => "local",
            Scheme::Random => "random",
        }
    }

    pub fn is_selection(&self) -> bool {
        matches!(self, Scheme::TwoPhase | Scheme::Exhaustive | Scheme::Local | Scheme::Random)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Parameter varied across the rows of one output table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PTxDb,
    /// MBS backhaul `C` (for selection runs, `C_mbs`).
    Capacity,
    Omega,
    HotSpotRatio,
    /// HBSs per cell (group 1).
    NHbs,
    /// Shared HBS backhaul `C_H`.
    SharedCapacity,
    QH,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::PTxDb,
        SweepAxis::Capacity,
        SweepAxis::Omega,
        SweepAxis::HotSpotRatio,
        SweepAxis::NHbs,
        SweepAxis::SharedCapacity,
        SweepAxis::QH,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PTxDb => "p_tx_db",
            SweepAxis::Capacity => "capacity",
            SweepAxis::Omega => "omega",
            SweepAxis::HotSpotRatio => "hot_spot_ratio",
            SweepAxis::NHbs => "n_hbs",
            SweepAxis::SharedCapacity => "shared_capacity",
            SweepAxis::QH => "q_h",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub antennas: Antennas,
    /// Per-MS transmit power in dB (the SNR at the reference distance).
    pub p_tx_db: f64,
    /// MBS backhaul `C` in bits per channel use.
    pub capacity: f64,
    /// HBS backhaul as a fraction of `C`.
    pub omega: f64,
    pub n_drops: usize,
    pub base_seed: u64,
    pub schemes: Vec<String>,
    /// Perturb the side information seen by each BS (robust and imperfect
    /// schemes only).
    #[serde(default = "default_true")]
    pub uncertainty: bool,
    #[serde(default)]
    pub selection: SelectionConfig,
    /// Without a sweep the table has one row per scheme, keyed by `p_tx_db`.
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn parsed_schemes(&self) -> Result<Vec<Scheme>> {
        self.schemes.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_drops == 0 {
            return Err(Error::Config("n_drops must be at least 1".into()));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config(format!("omega must lie in (0, 1], got {}", self.omega)));
        }
        if !(self.capacity >= 0.0) || !self.capacity.is_finite() {
            return Err(Error::Config(format!("capacity must be finite and >= 0, got {}", self.capacity)));
        }
        if !self.p_tx_db.is_finite() {
            return Err(Error::Config("p_tx_db must be finite".into()));
        }
        if self.antennas.mbs == 0 || self.antennas.hbs == 0 || self.antennas.ms == 0 {
            return Err(Error::Config("antenna counts must be positive".into()));
        }
        self.topology.validate()?;
        self.selection.validate()?;
        let schemes = self.parsed_schemes()?;
        if schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        let selection = self.scenario == Scenario::Selection;
        if let Some(bad) = schemes.iter().find(|s| s.is_selection() != selection) {
            return Err(Error::Config(format!(
                "scheme '{bad}' cannot run in scenario '{}'",
                self.scenario
            )));
        }
        if selection && self.topology.n_cells != 1 {
            return Err(Error::Config("the selection scenario is single-cell".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep needs at least one value".into()));
            }
            for &v in &sw.values {
                self.with_axis(sw.axis, v)?;
            }
        }
        Ok(())
    }

    /// Copy of the config with one axis set to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.sweep = None;
        match axis {
            SweepAxis::PTxDb => c.p_tx_db = value,
            SweepAxis::Capacity if c.scenario == Scenario::Selection => c.selection.c_mbs = value,
            SweepAxis::Capacity => c.capacity = value,
            SweepAxis::Omega => c.omega = value,
            SweepAxis::HotSpotRatio => match &mut c.topology.hot_spot {
                Some(hs) => hs.radius_ratio = value,
                None => return Err(Error::Config("hot_spot_ratio sweep needs a hot_spot topology".into())),
            },
            SweepAxis::NHbs => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("n_hbs must be a nonnegative integer, got {value}")));
                }
                c.topology.n_hbs_per_cell = value as usize;
            }
            SweepAxis::SharedCapacity => c.selection.c_h = value,
            SweepAxis::QH => c.selection.q_h = value,
        }
        c.validate_scalars()?;
        Ok(c)
    }

    fn validate_scalars(&self) -> Result<()> {
        let c = self;
        if !(c.omega > 0.0 && c.omega <= 1.0) {
            return Err(Error::Config(format!("omega must lie in (0, 1], got {}", c.omega)));
        }
        c.topology.validate()?;
        c.selection.validate()?;
        if !(c.capacity >= 0.0) {
            return Err(Error::Config("capacity must be >= 0".into()));
        }
        Ok(())
    }

    /// The (axis, value) points of the table, in order.
    pub fn points(&self) -> Vec<(SweepAxis, f64)> {
        match &self.sweep {
            Some(sw) => sw.values.iter().map(|&v| (sw.axis, v)).collect(),
            None => vec![(SweepAxis::PTxDb, self.p_tx_db)],
        }
    }

    /// Desk-scale defaults for each scenario.
    pub fn preset(scenario: Scenario) -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        match scenario {
            Scenario::CompareSchemes => Self {
                scenario,
                topology: TopologyConfig {
                    n_cells: 3,
                    n_hbs_per_cell: 2,
                    n_ms_per_cell: 3,
                    ..Default::default()
                },
                antennas: Antennas { mbs: 2, hbs: 2, ms: 1 },
                p_tx_db: 5.0,
                capacity: 6.0,
                omega: 0.5,
                n_drops: 50,
                base_seed: 1,
                schemes: names(&[
                    "maxrate_si",
                    "maxrate_nsi",
                    "mmse_direct_si",
                    "mmse_direct_nsi",
                    "mmse_indirect_si",
                    "mmse_indirect_nsi",
                ]),
                uncertainty: false,
                selection: SelectionConfig::default(),
                sweep: Some(Sweep {
                    axis: SweepAxis::Omega,
                    values: vec![0.1, 0.3, 0.5, 0.7, 1.0],
                }),
            },
            Scenario::Robustness => Self {
                scenario,
                topology: TopologyConfig {
                    n_cells: 1,
                    n_hbs_per_cell: 3,
                    n_ms_per_cell: 8,
                    ..Default::default()
                },
                antennas: Antennas { mbs: 2, hbs: 2, ms: 1 },
                p_tx_db: 10.0,
                capacity: 4.0,
                omega: 0.5,
                n_drops: 50,
                base_seed: 1,
                schemes: names(&["perfect_si", "robust", "imperfect_nonrobust", "no_si"]),
                uncertainty: true,
                selection: SelectionConfig::default(),
                sweep: Some(Sweep {
                    axis: SweepAxis::Capacity,
                    values: vec![2.0, 4.0, 6.0, 8.0],
                }),
            },
            Scenario::Selection => Self {
                scenario,
                topology: TopologyConfig {
                    n_cells: 1,
                    n_hbs_per_cell: 2,
                    n_ms_per_cell: 4,
                    hot_spot: Some(HotSpotConfig {
                        radius_ratio: 0.3,
                        n_hbs_group2: 3,
                        n_ms_group2: 3,
                    }),
                    ..Default::default()
                },
                antennas: Antennas { mbs: 2, hbs: 2, ms: 1 },
                p_tx_db: 10.0,
                capacity: 6.0,
                omega: 1.0,
                n_drops: 50,
                base_seed: 1,
                schemes: names(&["two_phase", "exhaustive", "local", "random"]),
                uncertainty: false,
                selection: SelectionConfig {
                    q_h: 100.0,
                    c_h: 12.0,
                    c_mbs: 6.0,
                    ..Default::default()
                },
                sweep: Some(Sweep {
                    axis: SweepAxis::HotSpotRatio,
                    values: vec![0.1, 0.3, 0.6, 1.0],
                }),
            },
        }
    }
}
