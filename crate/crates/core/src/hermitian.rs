//! Dense complex Hermitian matrices and the factorizations the detectors run on.
//!
//! Every constructor symmetrizes its input as `(A + Aᴴ)/2`, so downstream code
//! may assume exact Hermitian storage. Positive-definiteness is discovered by
//! attempting a Cholesky factorization; there is no eigenvalue pre-scan.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative asymmetry accepted by [`HermitianMatrix::from_entries`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    inner: DMatrix<C64>,
}

impl HermitianMatrix {
    /// Builds a Hermitian matrix from a row-major grid, rejecting inputs whose
    /// asymmetry exceeds [`HERMITIAN_TOLERANCE`] relative to the largest entry.
    pub fn from_entries(raw: &[Vec<C64>]) -> Result<Self> {
        let m = raw.len();
        if m == 0 {
            return Err(Error::EmptyMatrix);
        }
        for (row, r) in raw.iter().enumerate() {
            if r.len() != m {
                return Err(Error::NotSquare {
                    row,
                    len: r.len(),
                    expected: m,
                });
            }
        }
        Self::from_matrix(DMatrix::from_fn(m, m, |r, c| raw[r][c]))
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                row: 0,
                len: m.ncols(),
                expected: m.nrows(),
            });
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1.0);
        let n = m.nrows();
        let mut asym = 0.0_f64;
        for c in 0..n {
            for r in c..n {
                asym = asym.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        let asymmetry = asym / scale;
        if asymmetry > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian {
                asymmetry,
                tolerance: HERMITIAN_TOLERANCE,
            });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the tolerance check. Used internally where the
    /// input is Hermitian up to rounding by construction.
    pub(crate) fn symmetrized(mut m: DMatrix<C64>) -> Self {
        let n = m.nrows();
        for c in 0..n {
            m[(c, c)] = C64::new(m[(c, c)].re, 0.0);
            for r in (c + 1)..n {
                let avg = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
                m[(r, c)] = avg;
                m[(c, r)] = avg.conj();
            }
        }
        Self { inner: m }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::symmetrized(DMatrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            inner: DMatrix::from_fn(n, n, |r, c| {
                if r == c {
                    C64::new(diag[r], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.inner[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `A + s·I`
    pub fn add_identity(&self, s: f64) -> Self {
        let mut m = self.inner.clone();
        for i in 0..m.nrows() {
            m[(i, i)].re += s;
        }
        Self { inner: m }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            inner: self.inner.scale(s),
        }
    }

    /// `U·A·Uᴴ` for a square `U` of matching size.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.nrows(),
            });
        }
        Ok(Self::symmetrized(u * &self.inner * u.adjoint()))
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.inner - &other.inner)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn eig(&self) -> Result<EigenSystem> {
        eig_hermitian(self)
    }

    /// Ascending eigenvalues without eigenvectors.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.inner.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn cholesky(&self) -> Result<PdFactor> {
        PdFactor::new(self)
    }

    pub fn logdet_psd(&self) -> Result<f64> {
        Ok(self.cholesky()?.logdet())
    }

    pub fn quadform_inv(&self, v: &[C64]) -> Result<f64> {
        self.cholesky()?.quadform_inv(v)
    }

    /// `tr(self · b⁻¹)`
    pub fn trace_product_inv(&self, b: &HermitianMatrix) -> Result<f64> {
        b.cholesky()?.trace_inv_product(self)
    }
}

/// Eigendecomposition with eigenvalues sorted ascending and the eigenvector
/// columns permuted to match.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<C64>,
}

impl EigenSystem {
    /// `Φ·diag(values)·Φᴴ`
    pub fn compose(&self, values: &[f64]) -> HermitianMatrix {
        let n = self.eigenvectors.nrows();
        let mut scaled = self.eigenvectors.clone();
        for (c, &v) in values.iter().enumerate().take(n) {
            scaled.column_mut(c).scale_mut(v);
        }
        HermitianMatrix::symmetrized(scaled * self.eigenvectors.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.compose(&self.eigenvalues)
    }
}

pub fn eig_hermitian(a: &HermitianMatrix) -> Result<EigenSystem> {
    let eig = SymmetricEigen::try_new(a.inner.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenConvergence)?;
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Lower Cholesky factor `A = L·Lᴴ` of a positive-definite matrix, stored
/// row-major so forward substitution and `L·z` walk contiguous memory.
#[derive(Debug, Clone)]
pub struct PdFactor {
    dim: usize,
    rows: Vec<C64>,
    logdet: f64,
}

impl PdFactor {
    pub fn new(a: &HermitianMatrix) -> Result<Self> {
        let n = a.dim();
        let mut rows = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.inner[(i, j)];
                for k in 0..j {
                    s -= rows[i * n + k] * rows[j * n + k].conj();
                }
                if i == j {
                    let d = s.re;
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    rows[i * n + i] = C64::new(d.sqrt(), 0.0);
                } else {
                    rows[i * n + j] = s / rows[j * n + j].re;
                }
            }
        }
        let logdet = 2.0 * (0..n).map(|i| rows[i * n + i].re.ln()).sum::<f64>();
        Ok(Self { dim: n, rows, logdet })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Solves `L·y = v` in place.
    pub fn forward_solve_in_place(&self, v: &mut [C64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.rows[i * n..i * n + i];
            let mut s = v[i];
            for (l, y) in row.iter().zip(v.iter()) {
                s -= *l * *y;
            }
            v[i] = s / self.rows[i * n + i].re;
        }
    }

    /// `vᴴ·A⁻¹·v` via forward substitution.
    pub fn quadform_inv(&self, v: &[C64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(self.quadform_inv_unchecked(v))
    }

    pub(crate) fn quadform_inv_unchecked(&self, v: &[C64]) -> f64 {
        let n = self.dim;
        let mut y = [C64::new(0.0, 0.0); 64];
        if n <= y.len() {
            let y = &mut y[..n];
            y.copy_from_slice(v);
            self.forward_solve_in_place(y);
            y.iter().map(|z| z.norm_sqr()).sum()
        } else {
            let mut y = v.to_vec();
            self.forward_solve_in_place(&mut y);
            y.iter().map(|z| z.norm_sqr()).sum()
        }
    }

    /// `L·z` written into `out`.
    pub fn mul_lower_into(&self, z: &[C64], out: &mut [C64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.rows[i * n..=i * n + i];
            out[i] = row.iter().zip(z.iter()).map(|(l, x)| *l * *x).sum();
        }
    }

    pub fn lower(&self) -> DMatrix<C64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |r, c| if c <= r { self.rows[r * n + c] } else { C64::new(0.0, 0.0) })
    }

    /// `tr(A⁻¹·B)` where `A` is the factored matrix.
    pub fn trace_inv_product(&self, b: &HermitianMatrix) -> Result<f64> {
        let n = self.dim;
        if b.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.dim(),
            });
        }
        // A⁻¹B = L⁻ᴴ(L⁻¹B): forward-solve every column, then back-solve.
        let mut x = b.inner.clone();
        let mut col = vec![C64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = x[(r, c)];
            }
            self.forward_solve_in_place(&mut col);
            for r in 0..n {
                x[(r, c)] = col[r];
            }
        }
        // only the diagonal of the back-solve result is kept
        let mut tr = C64::new(0.0, 0.0);
        for c in 0..n {
            for r in 0..n {
                col[r] = x[(r, c)];
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s -= self.rows[k * n + i].conj() * col[k];
                }
                col[i] = s / self.rows[i * n + i].re;
            }
            tr += col[c];
        }
        Ok(tr.re)
    }
}

pub fn logdet_psd(a: &HermitianMatrix) -> Result<f64> {
    a.logdet_psd()
}

pub fn quadform_inv(a: &HermitianMatrix, v: &DVector<C64>) -> Result<f64> {
    a.quadform_inv(v.as_slice())
}

pub fn trace_product_inv(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    a.trace_product_inv(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_pd(n: usize, seed: u64) -> HermitianMatrix {
        // deterministic pseudo-random entries without pulling an rng into unit tests
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let g = DMatrix::from_fn(n, n, |_, _| c(next(), next()));
        HermitianMatrix::symmetrized(&g * g.adjoint()).add_identity(0.1)
    }

    #[test]
    fn scalar_entry_accepted() {
        let a = HermitianMatrix::from_entries(&[vec![c(5.0, 0.0)]]).unwrap();
        assert_eq!(a.get(0, 0), c(5.0, 0.0));
    }

    #[test]
    fn hermitian_grid_unchanged() {
        let raw = vec![vec![c(1.0, 0.0), c(1.0, 1.0)], vec![c(1.0, -1.0), c(2.0, 0.0)]];
        let a = HermitianMatrix::from_entries(&raw).unwrap();
        for r in 0..2 {
            for col in 0..2 {
                assert_eq!(a.get(r, col), raw[r][col]);
            }
        }
    }

    #[test]
    fn asymmetric_grid_rejected() {
        let raw = vec![vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(matches!(
            HermitianMatrix::from_entries(&raw),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn ragged_grid_rejected() {
        let raw = vec![vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0)]];
        assert!(matches!(
            HermitianMatrix::from_entries(&raw),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(HermitianMatrix::from_entries(&[]), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn construction_is_idempotent() {
        let a = random_pd(5, 3);
        let b = HermitianMatrix::from_matrix(a.as_matrix().clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = HermitianMatrix::identity(2).eig().unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        let d = HermitianMatrix::from_diagonal(&[3.0, 1.0]).eig().unwrap();
        assert!((d.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((d.eigenvalues[1] - 3.0).abs() < 1e-14);
        // eigenvector for 1 is the second axis
        assert!((d.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(d.eigenvectors[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn eigen_reconstruction_and_unitarity() {
        let a = random_pd(6, 11);
        let e = a.eig().unwrap();
        let rec = e.reconstruct();
        let err = HermitianMatrix::symmetrized(rec.as_matrix() - a.as_matrix()).frobenius_norm();
        assert!(err / a.frobenius_norm() <= 1e-10);
        let gram = e.eigenvectors.adjoint() * &e.eigenvectors;
        for r in 0..6 {
            for col in 0..6 {
                let want = if r == col { 1.0 } else { 0.0 };
                assert!((gram[(r, col)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn logdet_cases() {
        assert_eq!(HermitianMatrix::identity(4).logdet_psd().unwrap(), 0.0);
        let d = HermitianMatrix::from_diagonal(&[2.0, 2.0]).logdet_psd().unwrap();
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-15);
        let a = random_pd(5, 7);
        let via_eig: f64 = a.eig().unwrap().eigenvalues.iter().map(|l| l.ln()).sum();
        let ld = a.logdet_psd().unwrap();
        assert!((ld - via_eig).abs() <= 1e-10 * ld.abs().max(1.0));
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let a = HermitianMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(a.logdet_psd(), Err(Error::NotPositiveDefinite)));
        let z = HermitianMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(z.cholesky(), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn quadform_cases() {
        let q = HermitianMatrix::identity(2)
            .quadform_inv(&[c(1.0, 0.0), c(0.0, 1.0)])
            .unwrap();
        assert!((q - 2.0).abs() < 1e-15);
        let q = HermitianMatrix::from_diagonal(&[4.0]).quadform_inv(&[c(2.0, 0.0)]).unwrap();
        assert!((q - 1.0).abs() < 1e-15);
        assert!(matches!(
            HermitianMatrix::identity(2).quadform_inv(&[c(1.0, 0.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quadform_matches_explicit_inverse() {
        let a = random_pd(4, 19);
        let v = DVector::from_fn(4, |i, _| c(0.3 * i as f64 - 0.2, 0.1 + 0.05 * i as f64));
        let inv = a.as_matrix().clone().try_inverse().unwrap();
        let explicit = (v.adjoint() * inv * &v)[(0, 0)];
        let q = quadform_inv(&a, &v).unwrap();
        assert!((q - explicit.re).abs() <= 1e-9);
        assert!(explicit.im.abs() < 1e-10);
    }

    #[test]
    fn trace_product_cases() {
        let i4 = HermitianMatrix::identity(4);
        assert!((i4.trace_product_inv(&i4).unwrap() - 4.0).abs() < 1e-14);
        let two = i4.scale(2.0);
        assert!((two.trace_product_inv(&i4).unwrap() - 8.0).abs() < 1e-14);
        let a = random_pd(4, 23);
        let b = random_pd(4, 29);
        let explicit = (a.as_matrix() * b.as_matrix().clone().try_inverse().unwrap()).trace();
        assert!((trace_product_inv(&a, &b).unwrap() - explicit.re).abs() <= 1e-9);
        assert!((a.trace_product_inv(&a).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn conjugation_by_unitary_preserves_spectrum() {
        let a = random_pd(4, 31);
        let u = a.eig().unwrap().eigenvectors;
        let b = a.conjugate_by(&u).unwrap();
        let ea = a.eigenvalues();
        let eb = b.eigenvalues();
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
