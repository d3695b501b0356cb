//! Random network topologies and Rayleigh-fading channel draws.
//!
//! Every cell has one macro BS (MBS) at its center; home BSs (HBSs) and mobile
//! stations (MSs) are dropped uniformly in the cell disc, or in an optional
//! hot-spot disc overlaid on the cell. Channel entries are i.i.d. circularly
//! symmetric complex Gaussian with variance `(D0 / d)^ν`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{CMatrix, HermitianMatrix};

/// MS positions closer than this fraction of `R_cell` to a BS are redrawn.
const COLLISION_FRACTION: f64 = 1e-6;

fn default_pathloss_exponent() -> f64 {
    3.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotSpotConfig {
    /// `R_spot / R_cell`, in `(0, 1]`.
    pub radius_ratio: f64,
    pub n_hbs_group2: usize,
    pub n_ms_group2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub n_cells: usize,
    pub cell_radius: f64,
    pub n_hbs_per_cell: usize,
    pub n_ms_per_cell: usize,
    #[serde(default)]
    pub hot_spot: Option<HotSpotConfig>,
    #[serde(default = "default_pathloss_exponent")]
    pub pathloss_exponent: f64,
    /// Defaults to `R_cell / 2`.
    #[serde(default)]
    pub reference_distance: Option<f64>,
    /// Distance between neighbouring cell centers; defaults to
    /// `2 R_cell cos(30°)`, the hexagonal spacing.
    #[serde(default)]
    pub cell_spacing: Option<f64>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_cells: 1,
            cell_radius: 1.0,
            n_hbs_per_cell: 3,
            n_ms_per_cell: 8,
            hot_spot: None,
            pathloss_exponent: default_pathloss_exponent(),
            reference_distance: None,
            cell_spacing: None,
        }
    }
}

impl TopologyConfig {
    pub fn reference_distance(&self) -> f64 {
        self.reference_distance.unwrap_or(self.cell_radius / 2.0)
    }

    pub fn cell_spacing(&self) -> f64 {
        self.cell_spacing
            .unwrap_or(2.0 * self.cell_radius * (std::f64::consts::PI / 6.0).cos())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 || self.n_cells > 7 {
            return Err(Error::Config(format!(
                "n_cells must be in 1..=7, got {}",
                self.n_cells
            )));
        }
        if !(self.cell_radius > 0.0) {
            return Err(Error::Config("cell_radius must be positive".into()));
        }
        if !(self.pathloss_exponent > 2.0) {
            return Err(Error::Config("pathloss_exponent must exceed 2".into()));
        }
        if !(self.reference_distance() > 0.0) {
            return Err(Error::Config("reference_distance must be positive".into()));
        }
        if let Some(hs) = &self.hot_spot {
            if !(hs.radius_ratio > 0.0 && hs.radius_ratio <= 1.0) {
                return Err(Error::Config(format!(
                    "hot-spot radius ratio must be in (0, 1], got {}",
                    hs.radius_ratio
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BsRole {
    Mbs,
    Hbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: [f64; 2],
    pub role: BsRole,
    pub cell: usize,
    /// 1 for whole-cell drops, 2 for hot-spot drops (MBSs are group 1).
    pub group: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileStation {
    pub position: [f64; 2],
    pub cell: usize,
    pub group: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub cell_centers: Vec<[f64; 2]>,
    pub hot_spot_centers: Vec<Option<[f64; 2]>>,
    pub cell_radius: f64,
    pub hot_spot_radius: Option<f64>,
    pub pathloss_exponent: f64,
    pub reference_distance: f64,
    /// Per cell: the MBS, then group-1 HBSs, then group-2 HBSs.
    pub base_stations: Vec<BaseStation>,
    pub mobiles: Vec<MobileStation>,
}

impl Topology {
    pub fn n_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn n_ms(&self) -> usize {
        self.mobiles.len()
    }

    pub fn distance(&self, bs: usize, ms: usize) -> f64 {
        dist(self.base_stations[bs].position, self.mobiles[ms].position)
    }

    /// Per-entry channel variance `(D0 / d)^ν`.
    pub fn path_gain(&self, distance: f64) -> f64 {
        path_gain(distance, self.reference_distance, self.pathloss_exponent)
    }
}

pub fn path_gain(distance: f64, reference_distance: f64, exponent: f64) -> f64 {
    (reference_distance / distance).powf(exponent)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn uniform_in_disc<R: Rng>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

fn cell_centers(n: usize, spacing: f64) -> Vec<[f64; 2]> {
    let mut centers = vec![[0.0, 0.0]];
    for k in 0..n.saturating_sub(1) {
        let angle = k as f64 * std::f64::consts::PI / 3.0;
        centers.push([spacing * angle.cos(), spacing * angle.sin()]);
    }
    centers
}

pub fn generate_topology(cfg: &TopologyConfig, seed: u64) -> Result<Topology> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = cfg.cell_radius;
    let centers = cell_centers(cfg.n_cells, cfg.cell_spacing());
    let spot_radius = cfg.hot_spot.as_ref().map(|h| h.radius_ratio * radius);

    let mut base_stations = Vec::new();
    let mut hot_spot_centers = Vec::new();
    let mut regions = Vec::new();
    for (cell, &c) in centers.iter().enumerate() {
        let spot = spot_radius.map(|rs| uniform_in_disc(&mut rng, c, radius - rs));
        hot_spot_centers.push(spot);
        regions.push(spot);
        base_stations.push(BaseStation {
            position: c,
            role: BsRole::Mbs,
            cell,
            group: 1,
        });
        for _ in 0..cfg.n_hbs_per_cell {
            base_stations.push(BaseStation {
                position: uniform_in_disc(&mut rng, c, radius),
                role: BsRole::Hbs,
                cell,
                group: 1,
            });
        }
        if let (Some(hs), Some(sc), Some(rs)) = (&cfg.hot_spot, spot, spot_radius) {
            for _ in 0..hs.n_hbs_group2 {
                base_stations.push(BaseStation {
                    position: uniform_in_disc(&mut rng, sc, rs),
                    role: BsRole::Hbs,
                    cell,
                    group: 2,
                });
            }
        }
    }

    let min_sep = COLLISION_FRACTION * radius;
    let draw_ms = |rng: &mut ChaCha8Rng, center: [f64; 2], r: f64| loop {
        let p = uniform_in_disc(rng, center, r);
        if base_stations.iter().all(|b| dist(b.position, p) > min_sep) {
            break p;
        }
    };
    let mut mobiles = Vec::new();
    for (cell, &c) in centers.iter().enumerate() {
        for _ in 0..cfg.n_ms_per_cell {
            mobiles.push(MobileStation {
                position: draw_ms(&mut rng, c, radius),
                cell,
                group: 1,
            });
        }
        if let (Some(hs), Some(sc), Some(rs)) = (&cfg.hot_spot, regions[cell], spot_radius) {
            for _ in 0..hs.n_ms_group2 {
                mobiles.push(MobileStation {
                    position: draw_ms(&mut rng, sc, rs),
                    cell,
                    group: 2,
                });
            }
        }
    }

    Ok(Topology {
        cell_centers: centers,
        hot_spot_centers,
        cell_radius: radius,
        hot_spot_radius: spot_radius,
        pathloss_exponent: cfg.pathloss_exponent,
        reference_distance: cfg.reference_distance(),
        base_stations,
        mobiles,
    })
}

/// Antenna counts per node class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Antennas {
    pub mbs: usize,
    pub hbs: usize,
    #[serde(default = "one")]
    pub ms: usize,
}

fn one() -> usize {
    1
}

impl Default for Antennas {
    fn default() -> Self {
        Self {
            mbs: 2,
            hbs: 2,
            ms: 1,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Per-BS channel matrices `H_i = [H_i1 ⋯ H_iN_M]` and the transmit
/// covariance `Σ_x`.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h: Vec<CMatrix>,
    pub bs_antennas: Vec<usize>,
    pub ms_antennas: Vec<usize>,
    pub sigma_x: HermitianMatrix,
}

impl ChannelSet {
    pub fn new(h: Vec<CMatrix>, sigma_x: HermitianMatrix) -> Result<Self> {
        let n_m = sigma_x.dim();
        for (i, hi) in h.iter().enumerate() {
            if hi.ncols() != n_m {
                return Err(Error::Dimension(format!(
                    "H_{i} has {} columns, Σ_x is {n_m}x{n_m}",
                    hi.ncols()
                )));
            }
        }
        let bs_antennas = h.iter().map(|m| m.nrows()).collect();
        Ok(Self {
            h,
            bs_antennas,
            ms_antennas: vec![1; n_m],
            sigma_x,
        })
    }

    /// Scalar-entry convenience constructor, used heavily in tests:
    /// `channels[i]` is row-major `n_rows[i] × n_m`.
    pub fn from_real(rows: &[(usize, Vec<f64>)], n_m: usize, p_tx: f64) -> Result<Self> {
        let h = rows
            .iter()
            .map(|(r, e)| crate::hermitian::real_matrix(*r, n_m, e))
            .collect();
        Self::new(h, HermitianMatrix::scaled_identity(n_m, p_tx))
    }

    pub fn n_bs(&self) -> usize {
        self.h.len()
    }

    pub fn n_ms_antennas(&self) -> usize {
        self.sigma_x.dim()
    }

    pub fn channel(&self, i: usize) -> &CMatrix {
        &self.h[i]
    }

    pub fn to_snapshot(&self) -> ChannelSnapshot {
        ChannelSnapshot {
            bs_antennas: self.bs_antennas.clone(),
            ms_antennas: self.ms_antennas.clone(),
            sigma_x: MatrixSnapshot::from(self.sigma_x.as_matrix()),
            channels: self.h.iter().map(MatrixSnapshot::from).collect(),
        }
    }

    pub fn from_snapshot(s: &ChannelSnapshot) -> Result<Self> {
        let h = s.channels.iter().map(MatrixSnapshot::to_matrix).collect::<Result<_>>()?;
        let mut set = Self::new(h, HermitianMatrix::new(s.sigma_x.to_matrix()?)?)?;
        set.ms_antennas = s.ms_antennas.clone();
        Ok(set)
    }
}

/// JSON form of a complex matrix: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSnapshot {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMatrix> for MatrixSnapshot {
    fn from(m: &CMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { rows, cols, re, im }
    }
}

impl MatrixSnapshot {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(Error::Dimension("matrix snapshot length mismatch".into()));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let k = i * self.cols + j;
            Complex64::new(self.re[k], self.im[k])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnapshot {
    pub bs_antennas: Vec<usize>,
    pub ms_antennas: Vec<usize>,
    pub sigma_x: MatrixSnapshot,
    pub channels: Vec<MatrixSnapshot>,
}

pub fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn generate_channels(
    topo: &Topology,
    antennas: &Antennas,
    p_tx: f64,
    seed: u64,
) -> Result<ChannelSet> {
    if !(p_tx >= 0.0) {
        return Err(Error::InvalidInput(format!("P_tx must be nonnegative, got {p_tx}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms_antennas = vec![antennas.ms; topo.n_ms()];
    let n_m: usize = ms_antennas.iter().sum();
    let mut h = Vec::with_capacity(topo.n_bs());
    let mut bs_antennas = Vec::with_capacity(topo.n_bs());
    for (i, bs) in topo.base_stations.iter().enumerate() {
        let rows = match bs.role {
            BsRole::Mbs => antennas.mbs,
            BsRole::Hbs => antennas.hbs,
        };
        let mut hi = CMatrix::zeros(rows, n_m);
        for j in 0..topo.n_ms() {
            let var = topo.path_gain(topo.distance(i, j));
            for a in 0..antennas.ms {
                let col = j * antennas.ms + a;
                for r in 0..rows {
                    hi[(r, col)] = complex_gaussian(&mut rng, var);
                }
            }
        }
        bs_antennas.push(rows);
        h.push(hi);
    }
    Ok(ChannelSet {
        h,
        bs_antennas,
        ms_antennas,
        sigma_x: HermitianMatrix::scaled_identity(n_m, p_tx),
    })
}
