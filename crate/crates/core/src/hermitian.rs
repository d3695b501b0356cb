//! Complex Hermitian matrices and the handful of spectral primitives every
//! solver in this crate is built on: sorted eigendecomposition, Gaussian
//! conditional covariance, `log2 det(I + M)` and gain factorization.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalues above `-PSD_TOLERANCE * max(1, |λ_max|)` are clamped to zero
/// when a matrix is tagged PSD; anything lower is an error.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// A square complex matrix that is Hermitian by construction.
///
/// Construction symmetrizes the input as `(M + M†)/2`, so the stored entries
/// satisfy `m[i][j] == conj(m[j][i])` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMatrix,
}

/// Eigendecomposition `M = U diag(values) U†` with values sorted non-increasing.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub basis: CMatrix,
    pub values: Vec<f64>,
}

impl EigenPair {
    pub fn reconstruct(&self) -> HermitianMatrix {
        reconstruct_from(&self.basis, &self.values)
    }
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds a PSD-tagged matrix, clamping tiny negative eigenvalues to zero.
    pub fn psd(m: CMatrix) -> Result<Self> {
        Self::new(m)?.into_psd()
    }

    pub fn into_psd(self) -> Result<Self> {
        let eig = self.eig_desc()?;
        let Some(&min) = eig.values.last() else {
            return Ok(self);
        };
        if min >= 0.0 {
            return Ok(self);
        }
        let scale = eig.values[0].abs().max(1.0);
        if min < -PSD_TOLERANCE * scale {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        let clamped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
        Ok(reconstruct_from(&eig.basis, &clamped))
    }

    fn symmetrized(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Self {
            m: (m + adj) * Complex64::new(0.5, 0.0),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: CMatrix::zeros(n, n),
        }
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self {
            m: CMatrix::identity(n, n) * Complex64::new(s, 0.0),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            m: CMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::new(diag[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Real symmetric matrix from row-major entries.
    pub fn from_real(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| {
            Complex64::new(entries[i * n + j], 0.0)
        }))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn eig_desc(&self) -> Result<EigenPair> {
        eig_desc(self)
    }

    pub fn eigenvalues_desc(&self) -> Result<Vec<f64>> {
        Ok(self.eig_desc()?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues_desc()?.last().copied().unwrap_or(0.0))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues_desc()?.first().copied().unwrap_or(0.0))
    }

    pub fn trace(&self) -> f64 {
        self.m.diagonal().iter().map(|z| z.re).sum()
    }

    /// `M + s I`
    pub fn shifted(&self, s: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += Complex64::new(s, 0.0);
        }
        Self { m }
    }

    pub fn plus(&self, other: &HermitianMatrix) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn minus(&self, other: &HermitianMatrix) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            m: &self.m * Complex64::new(s, 0.0),
        }
    }

    /// `A M A†`
    pub fn congruence(&self, a: &CMatrix) -> Self {
        Self::symmetrized(a * &self.m * a.adjoint())
    }

    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        max_abs_diff(&self.m, &other.m)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.m.iter().all(|z| z.norm() <= tol)
    }
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn reconstruct_from(basis: &CMatrix, values: &[f64]) -> HermitianMatrix {
    let n = basis.nrows();
    let mut scaled = basis.clone();
    for (j, &v) in values.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= v;
        }
    }
    HermitianMatrix::symmetrized(scaled * basis.adjoint())
}

/// Eigendecomposition with eigenvalues sorted non-increasing.
pub fn eig_desc(m: &HermitianMatrix) -> Result<EigenPair> {
    let n = m.dim();
    if n == 0 {
        return Ok(EigenPair {
            basis: CMatrix::zeros(0, 0),
            values: Vec::new(),
        });
    }
    if m.m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(m.m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition diverged".into()));
    }
    Ok(EigenPair { basis, values })
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
///
/// nalgebra's complex Cholesky takes complex square roots of the pivots and so
/// never reports indefiniteness; this one requires real positive pivots.
pub struct HermitianCholesky {
    l: CMatrix,
}

impl HermitianCholesky {
    pub fn new(m: &HermitianMatrix) -> Option<Self> {
        let n = m.dim();
        let a = &m.m;
        let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
        let floor = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > floor) {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = Complex64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l })
    }

    pub fn log2_det(&self) -> f64 {
        let acc: f64 = self.l.diagonal().iter().map(|z| z.re.ln()).sum();
        2.0 * acc / std::f64::consts::LN_2
    }

    /// Solves `M X = B`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        x
    }

    pub fn inverse(&self) -> HermitianMatrix {
        let n = self.l.nrows();
        HermitianMatrix::symmetrized(self.solve(&CMatrix::identity(n, n)))
    }
}

/// `log2 det(M)` for Hermitian positive definite `M`, via Cholesky.
pub fn log2_det_pd(m: &HermitianMatrix) -> Result<f64> {
    if m.dim() == 0 {
        return Ok(0.0);
    }
    let chol = HermitianCholesky::new(m)
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.log2_det())
}

/// `log2 det(I + M)`.
pub fn logdet_cap(m: &HermitianMatrix) -> Result<f64> {
    log2_det_pd(&m.shifted(1.0))
}

/// Gaussian conditional covariance
/// `Σ_x − Σ_x H̄† (H̄ Σ_x H̄† + Σ_t)^{-1} H̄ Σ_x`.
///
/// An empty stack (`hbar` with zero rows) returns `Σ_x` unchanged.
pub fn cond_cov(
    sigma_x: &HermitianMatrix,
    hbar: &CMatrix,
    sigma_t: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    if hbar.nrows() == 0 {
        return Ok(sigma_x.clone());
    }
    if hbar.ncols() != sigma_x.dim() || hbar.nrows() != sigma_t.dim() {
        return Err(Error::Dimension(format!(
            "stack {}x{} incompatible with Σ_x {} and Σ_t {}",
            hbar.nrows(),
            hbar.ncols(),
            sigma_x.dim(),
            sigma_t.dim()
        )));
    }
    let hs = hbar * &sigma_x.m;
    let inner = HermitianMatrix::symmetrized(&hs * hbar.adjoint() + &sigma_t.m);
    let chol = HermitianCholesky::new(&inner)
        .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
    let solved = chol.solve(&hs);
    HermitianMatrix::psd(&sigma_x.m - hs.adjoint() * solved)
}

/// Factor a PSD `Ω` as `A = diag(√α) U†` so that `A†A = Ω`.
pub fn factor_gain(omega: &HermitianMatrix) -> Result<CMatrix> {
    let eig = omega.eig_desc()?;
    Ok(gain_from_eigen(&eig.basis, &eig.values))
}

/// `diag(√α) U†`, with negative `α` treated as zero.
pub fn gain_from_eigen(basis: &CMatrix, gains: &[f64]) -> CMatrix {
    let mut a = basis.adjoint();
    for (i, &g) in gains.iter().enumerate() {
        let s = g.max(0.0).sqrt();
        for j in 0..a.ncols() {
            a[(i, j)] *= s;
        }
    }
    a
}

/// `U diag(α) U†` for a (possibly rectangular) orthonormal column set `U`.
pub fn compose(basis: &CMatrix, gains: &[f64]) -> HermitianMatrix {
    let mut scaled = basis.clone();
    for (j, &g) in gains.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= g;
        }
    }
    HermitianMatrix::symmetrized(scaled * basis.adjoint())
}

pub fn block_diagonal(blocks: &[HermitianMatrix]) -> HermitianMatrix {
    let n: usize = blocks.iter().map(HermitianMatrix::dim).sum();
    let mut m = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let d = b.dim();
        m.view_mut((off, off), (d, d)).copy_from(&b.m);
        off += d;
    }
    HermitianMatrix { m }
}

/// Stacks matrices with a common column count on top of each other.
pub fn vstack(blocks: &[CMatrix], ncols: usize) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = CMatrix::zeros(n, ncols);
    let mut off = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), ncols);
        m.view_mut((off, 0), (b.nrows(), ncols)).copy_from(b);
        off += b.nrows();
    }
    m
}

pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| Complex64::new(entries[i * cols + j], 0.0))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eig_of_identity_and_diagonal() {
        let e = HermitianMatrix::identity(2).eig_desc().unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = HermitianMatrix::from_diagonal(&[1.0, 3.0]).eig_desc().unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_of_two_by_two() {
        let m = HermitianMatrix::from_real(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = m.eig_desc().unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        // eigenvector of 3 is (1,1)/√2 up to phase
        let v = e.basis.column(0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].norm() - r).abs() < 1e-12 && (v[1].norm() - r).abs() < 1e-12);
        assert!((v[0] - v[1]).norm() < 1e-12);
        let w = e.basis.column(1);
        assert!((w[0] + w[1]).norm() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            let g = random_cmatrix(&mut rng, n, n);
            let m = HermitianMatrix::new(&g + g.adjoint()).unwrap();
            let e = m.eig_desc().unwrap();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            assert!(e.reconstruct().max_abs_diff(&m) < 1e-8);
            let utu = e.basis.adjoint() * &e.basis;
            assert!(max_abs_diff(&utu, &CMatrix::identity(n, n)) < 1e-9);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let m = real_matrix(1, 1, &[f64::NAN]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn psd_clamps_tiny_negatives_and_rejects_large() {
        let m = HermitianMatrix::psd(real_matrix(2, 2, &[1.0, 0.0, 0.0, -1e-12])).unwrap();
        assert!(m.min_eigenvalue().unwrap() >= 0.0);
        let bad = HermitianMatrix::psd(real_matrix(2, 2, &[1.0, 0.0, 0.0, -1e-3]));
        assert!(matches!(bad, Err(Error::NotPsd { .. })));
    }

    #[test]
    fn cond_cov_cases() {
        let sx = HermitianMatrix::identity(1);
        let empty = CMatrix::zeros(0, 1);
        assert_eq!(cond_cov(&sx, &empty, &HermitianMatrix::zeros(0)).unwrap(), sx);

        let h = real_matrix(1, 1, &[1.0]);
        let c = cond_cov(&sx, &h, &HermitianMatrix::identity(1)).unwrap();
        assert!((c.as_matrix()[(0, 0)].re - 0.5).abs() < 1e-14);

        let sx2 = HermitianMatrix::identity(2);
        let h2 = real_matrix(1, 2, &[1.0, 0.0]);
        let c2 = cond_cov(&sx2, &h2, &HermitianMatrix::identity(1)).unwrap();
        let want = HermitianMatrix::from_diagonal(&[0.5, 1.0]);
        assert!(c2.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn cond_cov_dimension_error() {
        let sx = HermitianMatrix::identity(2);
        let h = real_matrix(1, 3, &[1.0, 0.0, 0.0]);
        assert!(matches!(
            cond_cov(&sx, &h, &HermitianMatrix::identity(1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cond_cov_singular_inner_is_numerical_error() {
        let sx = HermitianMatrix::zeros(1);
        let h = real_matrix(1, 1, &[1.0]);
        assert!(matches!(
            cond_cov(&sx, &h, &HermitianMatrix::zeros(1)),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn cond_cov_spectrum_within_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let sx = random_psd(&mut rng, 4, 4);
            let h = random_cmatrix(&mut rng, 3, 4);
            let st = random_psd(&mut rng, 3, 3).shifted(1.0);
            let c = cond_cov(&sx, &h, &st).unwrap();
            let lmax = sx.max_eigenvalue().unwrap();
            for v in c.eigenvalues_desc().unwrap() {
                assert!(v >= 0.0 && v <= lmax + 1e-9);
            }
            // Σ_x − Σ_cond ⪰ 0
            assert!(sx.minus(&c).min_eigenvalue().unwrap() > -1e-9);
        }
    }

    #[test]
    fn logdet_cap_values() {
        assert_eq!(logdet_cap(&HermitianMatrix::zeros(3)).unwrap(), 0.0);
        assert!((logdet_cap(&HermitianMatrix::identity(2)).unwrap() - 2.0).abs() < 1e-14);
        assert!((logdet_cap(&HermitianMatrix::from_diagonal(&[3.0])).unwrap() - 2.0).abs() < 1e-14);
        assert!(logdet_cap(&HermitianMatrix::from_diagonal(&[-2.0])).is_err());
    }

    #[test]
    fn logdet_cap_is_loewner_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_psd(&mut rng, 3, 2);
            let b = a.plus(&random_psd(&mut rng, 3, 1));
            assert!(logdet_cap(&a).unwrap() <= logdet_cap(&b).unwrap() + 1e-9);
        }
    }

    #[test]
    fn cholesky_solves_and_rejects_indefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = random_psd(&mut rng, 4, 4).shifted(0.5);
        let b = random_cmatrix(&mut rng, 4, 2);
        let x = HermitianCholesky::new(&m).unwrap().solve(&b);
        assert!(max_abs_diff(&(m.as_matrix() * x), &b) < 1e-10);
        let inv = HermitianCholesky::new(&m).unwrap().inverse();
        assert!(max_abs_diff(&(m.as_matrix() * inv.as_matrix()), &CMatrix::identity(4, 4)) < 1e-10);
        let ind = HermitianMatrix::from_real(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(HermitianCholesky::new(&ind).is_none());
    }

    #[test]
    fn factor_gain_cases() {
        let a = factor_gain(&HermitianMatrix::zeros(2)).unwrap();
        assert!(a.iter().all(|z| z.norm() == 0.0));
        let a = factor_gain(&HermitianMatrix::from_diagonal(&[3.0])).unwrap();
        assert!((a[(0, 0)].norm() - 3f64.sqrt()).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=5 {
            let om = random_psd(&mut rng, n, n.max(2) - 1);
            let a = factor_gain(&om).unwrap();
            assert!(max_abs_diff(&(a.adjoint() * &a), om.as_matrix()) < 1e-8);
        }
    }
}
