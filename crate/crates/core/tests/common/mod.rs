//! Shared generators and brute-force oracles for the integration tests.
//! Oracles deliberately avoid the library's own linear-algebra helpers.
#![allow(dead_code)]

use cran_core::channel::ChannelSet;
use cran_core::hermitian::{CMatrix, HermitianMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cmatrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> HermitianMatrix {
    let g = random_cmatrix(rng, n, rank);
    HermitianMatrix::psd(&g * g.adjoint()).unwrap()
}

/// Random channels: `n_bs` BSs with `n_b` antennas each, `n_m` single-antenna
/// users, and `Σ_x = p I`.
pub fn random_channels<R: Rng>(rng: &mut R, n_bs: usize, n_b: usize, n_m: usize, p: f64) -> ChannelSet {
    let h = (0..n_bs).map(|_| random_cmatrix(rng, n_b, n_m)).collect();
    ChannelSet::new(h, HermitianMatrix::scaled_identity(n_m, p)).unwrap()
}

/// `log2 det` of a Hermitian positive definite matrix through LU.
pub fn log2_det(m: &CMatrix) -> f64 {
    let d = m.clone().determinant();
    assert!(d.re > 0.0 && d.im.abs() <= 1e-8 * d.re.max(1.0), "determinant {d} is not positive real");
    d.re.log2()
}

pub fn inv(m: &CMatrix) -> CMatrix {
    m.clone().try_inverse().expect("matrix is invertible")
}

pub fn eye(n: usize) -> CMatrix {
    DMatrix::identity(n, n)
}

/// `I(x; ŷ_S)` by direct covariance algebra: `ŷ_j = A_j (H_j x + z_j) + q_j`.
pub fn mutual_info(sigma_x: &CMatrix, h: &[CMatrix], a: &[CMatrix]) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let rows: usize = a.iter().map(|g| g.nrows()).sum();
    let n_m = sigma_x.nrows();
    let mut hb = CMatrix::zeros(rows, n_m);
    let mut st = CMatrix::zeros(rows, rows);
    let mut r = 0;
    for (hj, aj) in h.iter().zip(a) {
        let k = aj.nrows();
        hb.view_mut((r, 0), (k, n_m)).copy_from(&(aj * hj));
        st.view_mut((r, r), (k, k)).copy_from(&(aj * aj.adjoint() + eye(k)));
        r += k;
    }
    let cov = &hb * sigma_x * hb.adjoint() + &st;
    log2_det(&cov) - log2_det(&st)
}

/// `Σ_x − Σ_x H̄† (H̄ Σ_x H̄† + Σ_t)^{-1} H̄ Σ_x` by explicit inversion.
pub fn cond_cov_oracle(sigma_x: &CMatrix, h: &[CMatrix], a: &[CMatrix]) -> CMatrix {
    if h.is_empty() {
        return sigma_x.clone();
    }
    let rows: usize = a.iter().map(|g| g.nrows()).sum();
    let n_m = sigma_x.nrows();
    let mut hb = CMatrix::zeros(rows, n_m);
    let mut st = CMatrix::zeros(rows, rows);
    let mut r = 0;
    for (hj, aj) in h.iter().zip(a) {
        let k = aj.nrows();
        hb.view_mut((r, 0), (k, n_m)).copy_from(&(aj * hj));
        st.view_mut((r, r), (k, k)).copy_from(&(aj * aj.adjoint() + eye(k)));
        r += k;
    }
    let cov = &hb * sigma_x * hb.adjoint() + &st;
    sigma_x - sigma_x * hb.adjoint() * inv(&cov) * &hb * sigma_x
}

/// `log2 det(I + A (H Σ H† + I) A†)` for a gain matrix `A`.
pub fn side_rate_oracle(a: &CMatrix, h: &CMatrix, sigma: &CMatrix) -> f64 {
    let k = a.nrows();
    let f = h * sigma * h.adjoint() + eye(h.nrows());
    log2_det(&(eye(k) + a * f * a.adjoint()))
}

/// Largest absolute entry difference.
pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}
