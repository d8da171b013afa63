use num_complex::Complex64;

use super::{eigh, eigvalsh, CMat, HermMatrix, NumError};

/// Thin singular value decomposition, singular values descending.
///
/// Left/right vectors attached to (numerically) zero singular values are
/// only determined up to mixing inside the null block.
#[derive(Debug, Clone)]
pub struct Svd {
    pub s: Vec<f64>,
    pub u: CMat,
    pub v: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
}

fn augmented(m: &CMat) -> HermMatrix {
    let (r, c) = m.shape();
    let mut a = CMat::zeros(r + c, r + c);
    a.view_mut((0, r), (r, c)).copy_from(m);
    a.view_mut((r, 0), (c, r)).copy_from(&m.adjoint());
    HermMatrix::new(a).expect("augmented matrix is hermitian by construction")
}

/// Singular values, descending, from the spectrum of `[[0, M], [M*, 0]]`.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>, NumError> {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(Vec::new());
    }
    let vals = eigvalsh(&augmented(m))?;
    Ok(vals.iter().rev().take(k).map(|v| v.max(0.0)).collect())
}

pub fn svd(m: &CMat) -> Result<Svd, NumError> {
    let (r, c) = m.shape();
    let k = r.min(c);
    let e = eigh(&augmented(m))?;
    let total = r + c;
    let scale = std::f64::consts::SQRT_2;
    let mut s = Vec::with_capacity(k);
    let mut u = CMat::zeros(r, k);
    let mut v = CMat::zeros(c, k);
    for t in 0..k {
        let col = total - 1 - t;
        s.push(e.values[col].max(0.0));
        let vec = e.vectors.column(col);
        for i in 0..r {
            u[(i, t)] = vec[i] * scale;
        }
        for i in 0..c {
            v[(i, t)] = vec[r + i] * scale;
        }
    }
    Ok(Svd { s, u, v })
}

/// Count of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &CMat, tol: f64) -> Result<RankInfo, NumError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(NumError::InvalidTolerance(tol));
    }
    let s = singular_values(m)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = tol * smax;
    let rank = if smax == 0.0 {
        0
    } else {
        s.iter().filter(|&&x| x > threshold).count()
    };
    Ok(RankInfo {
        rank,
        singular_values: s,
        threshold,
    })
}

/// Spectral norm via the smaller Gram matrix.
pub fn op_norm(m: &CMat) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    let g = if r >= c { m.adjoint() * m } else { m * m.adjoint() };
    let h = HermMatrix::hermitian_part(&g).expect("Gram matrix is square and finite");
    let top = eigvalsh(&h).map(|v| v.last().copied().unwrap_or(0.0));
    match top {
        Ok(t) => t.max(0.0).sqrt(),
        Err(_) => m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
    }
}

/// Outer product `u v*`.
pub fn outer(u: &[Complex64], v: &[Complex64]) -> CMat {
    CMat::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::fro_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(r: usize, c: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(r, c, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_rank() {
        let r = numerical_rank(&CMat::identity(4, 4), 1e-8).unwrap();
        assert_eq!(r.rank, 4);
    }

    #[test]
    fn zero_rank() {
        let r = numerical_rank(&CMat::zeros(3, 5), 1e-8).unwrap();
        assert_eq!(r.rank, 0);
    }

    #[test]
    fn rank_one_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<Complex64> = (0..6)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let v: Vec<Complex64> = (0..4)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let m = outer(&u, &v);
        assert_eq!(numerical_rank(&m, 1e-8).unwrap().rank, 1);
        assert_eq!(numerical_rank(&m.adjoint(), 1e-8).unwrap().rank, 1);
    }

    #[test]
    fn bad_tolerance() {
        assert!(numerical_rank(&CMat::identity(2, 2), 0.0).is_err());
        assert!(numerical_rank(&CMat::identity(2, 2), f64::NAN).is_err());
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        for (r, c) in [(3, 5), (6, 2), (4, 4)] {
            let m = random_mat(r, c, (r * 10 + c) as u64);
            let d = svd(&m).unwrap();
            let sig = CMat::from_fn(d.s.len(), d.s.len(), |i, j| {
                if i == j {
                    d.s[i].into()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            let recon = &d.u * sig * d.v.adjoint();
            assert!(fro_norm(&(recon - &m)) < 1e-11);
            assert!((op_norm(&m) - d.s[0]).abs() < 1e-11);
        }
    }

    #[test]
    fn rank_of_adjoint_matches() {
        for seed in 0..20 {
            let a = random_mat(5, 2, seed);
            let b = random_mat(2, 7, seed + 100);
            let m = a * b;
            let r1 = numerical_rank(&m, 1e-8).unwrap().rank;
            let r2 = numerical_rank(&m.adjoint(), 1e-8).unwrap().rank;
            assert_eq!(r1, 2);
            assert_eq!(r1, r2);
        }
    }
}
