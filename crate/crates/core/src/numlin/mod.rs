//! Dense and banded complex linear algebra used by every other module.
//!
//! The dense hermitian eigensolver is a Householder tridiagonalization
//! followed by implicit QL sweeps with Wilkinson-type shifts. Dense singular
//! values come from the augmented hermitian matrix `[[0, M], [M*, 0]]`.
//! Large block-banded assemblies go through [`band`], which works on a
//! Givens QR factor and never forms a normal matrix.

pub mod band;
mod eigh;
mod svd;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub use band::{band_svd_tail, hermitian_band_extremes, BandMatrix, BandSvdTail};
pub use eigh::{eigh, eigvalsh};
pub use svd::{numerical_rank, op_norm, outer, singular_values, svd, RankInfo, Svd};

/// Dense complex matrix, column-major.
pub type CMat = DMatrix<Complex64>;

/// Imaginary unit.
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is not hermitian: entries ({row},{col}) and ({col},{row}) differ by {deviation:e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("eigenvalue inside guard band: |{eigenvalue:e}| <= {guard:e}")]
    GuardBand { eigenvalue: f64, guard: f64 },
    #[error("no convergence in {0}")]
    NoConvergence(&'static str),
}

/// A validated hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermMatrix(CMat);

impl HermMatrix {
    /// Relative hermiticity tolerance accepted by [`HermMatrix::new`].
    pub const TOL: f64 = 1e-13;

    pub fn new(m: CMat) -> Result<Self, NumError> {
        if m.nrows() != m.ncols() {
            return Err(NumError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut scale = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let z = m[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(NumError::NonFinite { row: i, col: j });
                }
                scale = scale.max(z.norm());
            }
        }
        let mut worst = (0, 0, 0.0f64);
        for j in 0..n {
            for i in j..n {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > worst.2 {
                    worst = (i, j, dev);
                }
            }
        }
        if worst.2 > Self::TOL * scale.max(1.0) {
            return Err(NumError::NotHermitian {
                row: worst.0,
                col: worst.1,
                deviation: worst.2,
            });
        }
        Ok(HermMatrix(m))
    }

    /// `(m + m*) / 2`, always hermitian.
    pub fn hermitian_part(m: &CMat) -> Result<Self, NumError> {
        if m.nrows() != m.ncols() {
            return Err(NumError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let h = (m + m.adjoint()).scale(0.5);
        HermMatrix::new(h)
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        HermMatrix(CMat::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }
}

/// Eigenvalues ascending with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl EigDecomp {
    /// `V diag(f(lambda)) V*`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for z in scaled.column_mut(k).iter_mut() {
                *z *= w;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Number of eigenvalues below zero; fails if any eigenvalue lies within `guard` of zero.
pub fn negative_count(h: &HermMatrix, guard: f64) -> Result<usize, NumError> {
    let vals = eigvalsh(h)?;
    if let Some(&bad) = vals.iter().find(|v| v.abs() <= guard) {
        return Err(NumError::GuardBand { eigenvalue: bad, guard });
    }
    Ok(vals.iter().filter(|&&v| v < 0.0).count())
}

/// Frobenius norm.
pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `ab - ba`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == Complex64::new(0.0, 0.0) {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(total, total);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_non_hermitian_with_worst_pair() {
        let mut m = CMat::zeros(3, 3);
        m[(0, 1)] = c(1.0, 0.0);
        m[(1, 0)] = c(1.0, 0.0);
        m[(2, 0)] = c(0.0, 2.0);
        m[(0, 2)] = c(0.0, 2.0);
        match HermMatrix::new(m) {
            Err(NumError::NotHermitian { row, col, .. }) => assert_eq!((row, col), (2, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = CMat::zeros(2, 2);
        m[(1, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(HermMatrix::new(m), Err(NumError::NonFinite { .. })));
    }

    #[test]
    fn negative_count_examples() {
        let h = HermMatrix::from_real_diagonal(&[-2.0, 3.0]);
        assert_eq!(negative_count(&h, 0.1).unwrap(), 1);
        let h = HermMatrix::from_real_diagonal(&[-1.0, -1.0, -1.0]);
        assert_eq!(negative_count(&h, 0.1).unwrap(), 3);
        let h = HermMatrix::from_real_diagonal(&[0.05, 1.0]);
        assert!(matches!(negative_count(&h, 0.1), Err(NumError::GuardBand { .. })));
    }

    #[test]
    fn kron_shapes_and_entries() {
        let a = CMat::from_row_slice(2, 1, &[c(1.0, 0.0), c(2.0, 0.0)]);
        let b = CMat::from_row_slice(1, 2, &[c(0.0, 1.0), c(3.0, 0.0)]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 2));
        assert_eq!(k[(1, 0)], c(0.0, 2.0));
        assert_eq!(k[(1, 1)], c(6.0, 0.0));
    }
}
