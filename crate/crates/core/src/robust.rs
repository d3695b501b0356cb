//! Worst-case robust compression when the BS only knows an estimate of the
//! conditional covariance. The uncertainty is described by eigenvalue bounds
//! `λ_LB ≤ λ(Δ̃) ≤ λ_UB` on the error of the received form `H Σ H†`.
//!
//! The worst-case rate is attained at `Δ̃ = λ_LB I` and the worst-case
//! backhaul at `Δ̃ = λ_UB I`, which reduces the problem to a per-stream
//! search over a multiplier `μ ∈ (0, 1)` and at most three stationary gains
//! per stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_gaussian;
use crate::error::{Error, Result};
use crate::hermitian::{compose, CMatrix, HermitianMatrix, PSD_TOLERANCE};
use crate::rates::{received_form, BsCompression};

/// Sample points per branch-pattern interval of `μ` before bisection.
pub const MU_GRID_POINTS: usize = 400;
const MU_FLOOR: f64 = 1e-300;
/// Largest budget mismatch accepted from the grid-and-bisect search.
pub const BUDGET_TOLERANCE: f64 = 1e-4;
const BISECTION_ITERS: usize = 200;
/// Patterns are enumerated over `3^n` combinations; keep `n` modest.
const MAX_STREAMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBounds {
    pub lower: f64,
    pub upper: f64,
}

impl UncertaintyBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= 0.0 && upper >= 0.0) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InfeasibleBounds(format!(
                "need finite λ_LB ≤ 0 ≤ λ_UB, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn zero() -> Self {
        Self { lower: 0.0, upper: 0.0 }
    }

    pub fn symmetric(radius: f64) -> Result<Self> {
        Self::new(-radius, radius)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Rejects a lower bound that would let the true form `F + Δ̃` leave the
    /// PSD cone, i.e. requires `λ_LB ≥ −λ_min(F)`.
    pub fn check_against(&self, form: &HermitianMatrix) -> Result<()> {
        let lmin = form.min_eigenvalue()?;
        let tol = PSD_TOLERANCE * lmin.abs().max(1.0);
        if self.lower < -lmin - tol {
            return Err(Error::InfeasibleBounds(format!(
                "λ_LB = {} is below −λ_min = {}",
                self.lower, -lmin
            )));
        }
        Ok(())
    }

    /// Raises the lower bound to `−λ_min(F)` when it is looser than that.
    pub fn tightened_for(&self, form: &HermitianMatrix) -> Result<Self> {
        let lmin = form.min_eigenvalue()?.max(0.0);
        Ok(Self {
            lower: self.lower.max(-lmin),
            upper: self.upper,
        })
    }
}

/// `(c^L, c^U) = (λ + λ_LB, λ + λ_UB)`.
fn extremes(lambda: f64, b: &UncertaintyBounds) -> (f64, f64) {
    (lambda + b.lower, lambda + b.upper)
}

/// Coefficients of the stationarity quadratic `α² + Q α + S = 0`.
pub fn qs_coeffs(mu: f64, lambda: f64, bounds: &UncertaintyBounds) -> Result<(f64, f64)> {
    let (cl, cu) = extremes(lambda, bounds);
    if !(cl > 0.0 && cu > 0.0) {
        return Err(Error::InfeasibleBounds(format!(
            "extreme eigenvalues must be positive, got c^L = {cl}, c^U = {cu}"
        )));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidInput(format!("μ must lie in (0, 1), got {mu}")));
    }
    Ok(coeffs(mu, cl, cu))
}

fn coeffs(mu: f64, cl: f64, cu: f64) -> (f64, f64) {
    let den = mu * cu * cl;
    let q = cu * (1.0 + mu + (mu - 1.0) * cl) / den;
    let s = (mu * cu + 1.0 - cl) / den;
    (q, s)
}

/// Which element of the candidate set a stream takes. Each label follows a
/// continuous branch in `μ`, which lets the budget equation be bisected with
/// the labels held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `[(−Q + √(Q² − 4S)) / 2]⁺`
    Upper,
    /// `(−Q − √(Q² − 4S)) / 2`, present only when both roots are nonnegative.
    Lower,
    Zero,
}

const BRANCHES: [Branch; 3] = [Branch::Upper, Branch::Lower, Branch::Zero];

/// The discrete set of stationary gains for one stream at multiplier `μ`.
pub fn candidate_set(mu: f64, lambda: f64, bounds: &UncertaintyBounds) -> Result<Vec<f64>> {
    let (q, s) = qs_coeffs(mu, lambda, bounds)?;
    let disc = q * q - 4.0 * s;
    let plus = (-q + disc.max(0.0).sqrt()) / 2.0;
    let minus = (-q - disc.max(0.0).sqrt()) / 2.0;
    Ok(match (q >= 0.0, s >= 0.0) {
        (true, true) => vec![0.0],
        (true, false) | (false, false) => vec![plus],
        (false, true) if disc >= 0.0 => vec![plus, minus, 0.0],
        (false, true) => vec![0.0],
    })
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// `g^U(α) = Σ log2(1 + α_l c^U_l)`, the backhaul under the worst perturbation.
pub fn upper_budget(lambdas: &[f64], gains: &[f64], bounds: &UncertaintyBounds) -> f64 {
    lambdas.iter().zip(gains).map(|(l, a)| log2_1p(a * (l + bounds.upper))).sum()
}

/// `g^L(α) − Σ log2(1 + α_l)`, the rate under the worst perturbation.
pub fn worst_case_rate(lambdas: &[f64], gains: &[f64], bounds: &UncertaintyBounds) -> f64 {
    lambdas
        .iter()
        .zip(gains)
        .map(|(l, a)| log2_1p(a * (l + bounds.lower)) - log2_1p(*a))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustAllocation {
    pub gains: Vec<f64>,
    pub mu: f64,
    pub worst_case_rate: f64,
    /// `g^U` of the returned gains.
    pub budget_used: f64,
    pub no_signal: bool,
}

#[derive(Debug, Clone)]
pub struct RobustDesign {
    pub compression: BsCompression,
    pub worst_case_rate: f64,
    /// Eigenvalues of `H Σ̂ H† + I` in the order of the compression basis.
    pub eigenvalues: Vec<f64>,
    pub bounds: UncertaintyBounds,
}

/// Robust per-stream gains for eigenvalues `λ_l` of `H Σ̂ H† + I`.
pub fn robust_gains(lambdas: &[f64], c: f64, bounds: &UncertaintyBounds) -> Result<RobustAllocation> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("backhaul budget must be finite and >= 0, got {c}")));
    }
    let n = lambdas.len();
    let mut ext = Vec::with_capacity(n);
    for &l in lambdas {
        let (cl, cu) = extremes(l, bounds);
        if !(cl > 0.0) {
            return Err(Error::InfeasibleBounds(format!("c^L = {cl} is not positive")));
        }
        ext.push((cl, cu));
    }
    // Streams with c^L ≤ 1 cannot improve the worst-case rate.
    let threshold = ext.iter().map(|&(cl, cu)| (cl - 1.0) / cu).fold(0.0, f64::max);
    if c == 0.0 || threshold <= 0.0 {
        return Ok(RobustAllocation {
            gains: vec![0.0; n],
            mu: threshold,
            worst_case_rate: 0.0,
            budget_used: 0.0,
            no_signal: c > 0.0,
        });
    }
    let (gains, mu) = if bounds.width() < 1.0 {
        single_branch_solve(&ext, c)?
    } else {
        pattern_search(lambdas, &ext, c, bounds)?
    };
    Ok(RobustAllocation {
        worst_case_rate: worst_case_rate(lambdas, &gains, bounds),
        budget_used: upper_budget(lambdas, &gains, bounds),
        gains,
        mu,
        no_signal: false,
    })
}

/// Interval of `μ` on which `branch` exists for a stream with extremes
/// `(c^L, c^U)`, or `None` if it never does.
///
/// Along a stream, stationarity gives `μ(α) = (c^L − 1)(1 + c^U α) /
/// (c^U (1 + α)(1 + c^L α))`. When `c^U − c^L > 1` this rises from the
/// threshold `(c^L − 1)/c^U` to a peak and then decays to zero; the two
/// roots of the quadratic meet at the peak.
fn branch_interval(branch: Branch, cl: f64, cu: f64) -> Option<(f64, f64)> {
    let top = 1.0 - f64::EPSILON;
    if cl <= 1.0 {
        return (branch == Branch::Zero).then_some((MU_FLOOR, top));
    }
    let thr = (cl - 1.0) / cu;
    let mu_of = |a: f64| (cl - 1.0) * (1.0 + cu * a) / (cu * (1.0 + a) * (1.0 + cl * a));
    // Stationary point of μ(α): c^U c^L α² + 2 c^L α + (1 + c^L − c^U) = 0.
    let disc = cl * cl - cu * cl * (1.0 + cl - cu);
    let peak = (disc > 0.0)
        .then(|| (disc.sqrt() - cl) / (cu * cl))
        .filter(|&a| a > 0.0)
        .map(|a| mu_of(a).max(thr).min(top));
    match (branch, peak) {
        (Branch::Zero, _) => (thr < top).then_some((thr, top)),
        (Branch::Upper, Some(p)) => Some((MU_FLOOR, p)),
        (Branch::Upper, None) => Some((MU_FLOOR, thr.min(top))),
        (Branch::Lower, Some(p)) => (p > thr).then_some((thr, p)),
        (Branch::Lower, None) => None,
    }
}

/// Gain of `branch` at `μ`; a slightly negative discriminant near the fold
/// is treated as zero.
fn branch_gain(branch: Branch, mu: f64, cl: f64, cu: f64) -> f64 {
    if branch == Branch::Zero {
        return 0.0;
    }
    let (q, s) = coeffs(mu, cl, cu);
    let root = (q * q - 4.0 * s).max(0.0).sqrt();
    match branch {
        Branch::Upper => ((-q + root) / 2.0).max(0.0),
        _ => ((-q - root) / 2.0).max(0.0),
    }
}

fn gains_for(ext: &[(f64, f64)], mu: f64, pattern: &[Branch]) -> Vec<f64> {
    ext.iter()
        .zip(pattern)
        .map(|(&(cl, cu), &b)| branch_gain(b, mu, cl, cu))
        .collect()
}

fn budget_gap(ext: &[(f64, f64)], gains: &[f64], c: f64) -> f64 {
    ext.iter().zip(gains).map(|(&(_, cu), a)| log2_1p(a * cu)).sum::<f64>() - c
}

/// Midpoint for bisection on `μ`: geometric across decades, arithmetic
/// otherwise.
fn mu_mid(lo: f64, hi: f64) -> f64 {
    if hi / lo > 4.0 {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

/// Bisects `μ` on `[lo, hi]` with the branch pattern held fixed; `gap(lo)`
/// and `gap(hi)` must have opposite signs.
fn bisect_pattern(ext: &[(f64, f64)], c: f64, pattern: &[Branch], mut lo: f64, mut hi: f64) -> (Vec<f64>, f64) {
    let mut g_lo = budget_gap(ext, &gains_for(ext, lo, pattern), c);
    for _ in 0..BISECTION_ITERS * 6 {
        let mid = mu_mid(lo, hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = budget_gap(ext, &gains_for(ext, mid, pattern), c);
        if g_mid == 0.0 {
            return (gains_for(ext, mid, pattern), mid);
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    let gl = gains_for(ext, lo, pattern);
    let gh = gains_for(ext, hi, pattern);
    let (el, eh) = (budget_gap(ext, &gl, c), budget_gap(ext, &gh, c));
    if el.abs() <= eh.abs() {
        (gl, lo)
    } else {
        (gh, hi)
    }
}

/// Narrow-uncertainty case: every candidate set is a singleton, so one
/// bisection on `μ` meets the budget.
fn single_branch_solve(ext: &[(f64, f64)], c: f64) -> Result<(Vec<f64>, f64)> {
    let upper = vec![Branch::Upper; ext.len()];
    let value = |mu: f64| gains_for(ext, mu, &upper);
    let (mut lo, mut hi) = (MU_FLOOR, 1.0 - 1e-15);
    for _ in 0..BISECTION_ITERS * 6 {
        let mid = mu_mid(lo, hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if budget_gap(ext, &value(mid), c) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (gl, gh) = (value(lo), value(hi));
    let (el, eh) = (budget_gap(ext, &gl, c), budget_gap(ext, &gh, c));
    let (gains, mu) = if el.abs() <= eh.abs() { (gl, lo) } else { (gh, hi) };
    let err = budget_gap(ext, &gains, c);
    if err.abs() > BUDGET_TOLERANCE {
        return Err(Error::BudgetUnattainable { budget: c, closest: c + err });
    }
    Ok((gains, mu))
}

/// Sample points on `[lo, hi]`, endpoints included; geometric spacing when
/// the interval spans decades.
fn interval_grid(lo: f64, hi: f64) -> Vec<f64> {
    let m = MU_GRID_POINTS;
    if hi <= lo {
        return vec![lo];
    }
    let geometric = hi / lo > 4.0;
    (0..m)
        .map(|k| {
            let t = k as f64 / (m - 1) as f64;
            if k == m - 1 {
                hi
            } else if geometric {
                lo * (hi / lo).powf(t)
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect()
}

/// Enumerates branch patterns. On the interval of `μ` where a pattern
/// exists the budget is continuous in `μ`; each sign change of the budget
/// gap on a sample grid is refined by bisection. Keeps the best worst-case
/// rate among the budget-meeting points.
fn pattern_search(lambdas: &[f64], ext: &[(f64, f64)], c: f64, bounds: &UncertaintyBounds) -> Result<(Vec<f64>, f64)> {
    let n = ext.len();
    if n > MAX_STREAMS {
        return Err(Error::TooLarge(format!("robust search supports up to {MAX_STREAMS} streams, got {n}")));
    }
    let intervals: Vec<[Option<(f64, f64)>; 3]> = ext
        .iter()
        .map(|&(cl, cu)| BRANCHES.map(|b| branch_interval(b, cl, cu)))
        .collect();

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut closest = f64::INFINITY;
    let mut consider = |gains: Vec<f64>, mu: f64, closest: &mut f64| {
        let err = budget_gap(ext, &gains, c);
        *closest = closest.min(err.abs());
        if err.abs() <= BUDGET_TOLERANCE {
            let obj = worst_case_rate(lambdas, &gains, bounds);
            if best.as_ref().map_or(true, |b| obj > b.0 + 1e-12) {
                best = Some((obj, gains, mu));
            }
        }
    };
    let mut pattern = vec![Branch::Upper; n];
    let mut code = vec![0usize; n];
    loop {
        let mut range = Some((0.0f64, 1.0f64));
        for l in 0..n {
            pattern[l] = BRANCHES[code[l]];
            range = match (range, intervals[l][code[l]]) {
                (Some((a, b)), Some((lo, hi))) => Some((a.max(lo), b.min(hi))).filter(|(a, b)| a <= b),
                _ => None,
            };
        }
        if let Some((lo, hi)) = range.filter(|_| pattern.iter().any(|&b| b != Branch::Zero)) {
            let grid = interval_grid(lo, hi);
            let gaps: Vec<f64> = grid
                .iter()
                .map(|&mu| budget_gap(ext, &gains_for(ext, mu, &pattern), c))
                .collect();
            for k in 0..grid.len() {
                if gaps[k] == 0.0 {
                    consider(gains_for(ext, grid[k], &pattern), grid[k], &mut closest);
                } else if k > 0 && gaps[k - 1] != 0.0 && (gaps[k] > 0.0) != (gaps[k - 1] > 0.0) {
                    let (gains, mu) = bisect_pattern(ext, c, &pattern, grid[k - 1], grid[k]);
                    consider(gains, mu, &mut closest);
                } else {
                    closest = closest.min(gaps[k].abs());
                }
            }
        }
        // Next pattern in base-3 order.
        let mut l = 0;
        while l < n {
            code[l] += 1;
            if code[l] < 3 {
                break;
            }
            code[l] = 0;
            l += 1;
        }
        if l == n {
            break;
        }
    }
    match best {
        Some((_, gains, mu)) => Ok((gains, mu)),
        None => Err(Error::BudgetUnattainable {
            budget: c,
            closest: c + closest,
        }),
    }
}

/// Robust design from the nominal received form `F̂ = H Σ̂ H†`.
pub fn robust_from_form(form: &HermitianMatrix, c: f64, bounds: &UncertaintyBounds) -> Result<RobustDesign> {
    bounds.check_against(form)?;
    let eig = form.shifted(1.0).eig_desc()?;
    let alloc = robust_gains(&eig.values, c, bounds)?;
    let mut compression = BsCompression::from_eigen(eig.basis, alloc.gains, alloc.mu, alloc.budget_used);
    compression.no_signal = alloc.no_signal;
    Ok(RobustDesign {
        compression,
        worst_case_rate: alloc.worst_case_rate,
        eigenvalues: eig.values,
        bounds: *bounds,
    })
}

/// Worst-case optimal compression given an estimate `Σ̂_cond`.
pub fn robust_compress(
    h: &CMatrix,
    sigma_hat: &HermitianMatrix,
    c: f64,
    bounds: &UncertaintyBounds,
) -> Result<RobustDesign> {
    if h.ncols() != sigma_hat.dim() {
        return Err(Error::Dimension(format!(
            "H has {} columns, covariance is {}x{}",
            h.ncols(),
            sigma_hat.dim(),
            sigma_hat.dim()
        )));
    }
    robust_from_form(&received_form(h, sigma_hat), c, bounds)
}

/// Residuals of the stationarity conditions of a robust allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// Largest per-stream violation: `|α² + Qα + S|` for active streams,
    /// `max(0, −S)` for inactive ones, each relative to the size of its terms.
    pub stationarity: f64,
    /// `|g^U(α) − C|`
    pub budget: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.budget)
    }
}

pub fn kkt_residual(
    lambdas: &[f64],
    gains: &[f64],
    mu: f64,
    c: f64,
    bounds: &UncertaintyBounds,
) -> Result<KktResidual> {
    let mut stationarity = 0.0f64;
    for (&l, &a) in lambdas.iter().zip(gains) {
        let (q, s) = qs_coeffs(mu, l, bounds)?;
        let r = if a > 0.0 {
            (a * a + q * a + s).abs() / (a * a).max((q * a).abs()).max(s.abs()).max(1.0)
        } else {
            (-s).max(0.0) / s.abs().max(1.0)
        };
        stationarity = stationarity.max(r);
    }
    Ok(KktResidual {
        stationarity,
        budget: (upper_budget(lambdas, gains, bounds) - c).abs(),
    })
}

/// A perturbation draw: the nominal form seen by the BS and the error that
/// separates it from the true form, `F = F̂ + Δ̃`.
#[derive(Debug, Clone)]
pub struct UncertaintySample {
    pub nominal_form: HermitianMatrix,
    pub delta: HermitianMatrix,
    pub bounds: UncertaintyBounds,
}

/// Haar-distributed unitary of size `n`.
pub fn haar_unitary<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { 1.0.into() };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Draws `Δ̃` with isotropic eigenvectors on the column space of `H` and
/// eigenvalues uniform in `[−λ_min, λ_min]`, where `λ_min` is the smallest
/// eigenvalue of `H Σ_cond H†` restricted to that space.
pub fn sample_uncertainty_with<R: Rng>(rng: &mut R, h: &CMatrix, sigma_cond: &HermitianMatrix) -> Result<UncertaintySample> {
    let form = received_form(h, sigma_cond);
    let n = form.dim();
    let svd = h.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return left singular vectors".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10 * smax.max(f64::MIN_POSITIVE))
        .collect();
    let none = || UncertaintySample {
        nominal_form: form.clone(),
        delta: HermitianMatrix::zeros(n),
        bounds: UncertaintyBounds::zero(),
    };
    if cols.is_empty() {
        return Ok(none());
    }
    let basis = u.select_columns(&cols);
    let lmin = form.congruence(&basis.adjoint()).min_eigenvalue()?;
    if !(lmin > 0.0) {
        return Ok(none());
    }
    let r = cols.len();
    let v = haar_unitary(rng, r);
    let d: Vec<f64> = (0..r).map(|_| rng.random_range(-lmin..=lmin)).collect();
    let delta = compose(&(&basis * v), &d);
    Ok(UncertaintySample {
        nominal_form: form.minus(&delta).into_psd()?,
        delta,
        bounds: UncertaintyBounds::symmetric(lmin)?,
    })
}

/// Seeded form of [`sample_uncertainty_with`].
pub fn sample_uncertainty(h: &CMatrix, sigma_cond: &HermitianMatrix, seed: u64) -> Result<UncertaintySample> {
    sample_uncertainty_with(&mut ChaCha8Rng::seed_from_u64(seed), h, sigma_cond)
}
