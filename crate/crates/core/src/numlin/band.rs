//! Banded complex matrices and their extreme singular values.
//!
//! The small end of the singular spectrum comes from inverse subspace
//! iteration with `(M*M + μ²I)⁻¹`, applied through a Givens factor of the
//! stacked matrix `[M; μI]`. The shift keeps every pivot at least `μ`, so
//! exact null vectors cause no blow-up in the triangular solves.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{eigh, CMat, HermMatrix, NumError};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Row-major band storage: row `i` keeps columns `i - kl ..= i + ku`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    rows: usize,
    cols: usize,
    kl: usize,
    ku: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, Complex64)> + Clone,
    ) -> Self {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for (i, j, _) in entries.clone() {
            assert!(i < rows && j < cols, "triplet ({i},{j}) out of bounds");
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let w = kl + ku + 1;
        let mut data = vec![ZERO; rows * w];
        for (i, j, z) in entries {
            data[i * w + (j + kl - i)] += z;
        }
        BandMatrix {
            rows,
            cols,
            kl,
            ku,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn col_range(&self, i: usize) -> (usize, usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku + 1).min(self.cols);
        (lo, hi)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i >= self.rows || j >= self.cols || i > j + self.kl || j > i + self.ku {
            return ZERO;
        }
        self.data[i * self.width() + (j + self.kl - i)]
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let w = self.width();
        (0..self.rows)
            .map(|i| {
                let (lo, hi) = self.col_range(i);
                let row = &self.data[i * w..(i + 1) * w];
                (lo..hi).map(|j| row[j + self.kl - i] * x[j]).sum()
            })
            .collect()
    }

    pub fn adjoint_mul_vec(&self, y: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(y.len(), self.rows);
        let w = self.width();
        let mut out = vec![ZERO; self.cols];
        for i in 0..self.rows {
            let (lo, hi) = self.col_range(i);
            let row = &self.data[i * w..(i + 1) * w];
            for j in lo..hi {
                out[j] += row[j + self.kl - i].conj() * y[i];
            }
        }
        out
    }

    pub fn adjoint(&self) -> BandMatrix {
        let entries: Vec<(usize, usize, Complex64)> = self.nonzeros().map(|(i, j, z)| (j, i, z.conj())).collect();
        BandMatrix::from_triplets(self.cols, self.rows, entries)
    }

    /// Stored entries that are nonzero.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (lo, hi) = self.col_range(i);
            (lo..hi).filter_map(move |j| {
                let z = self.get(i, j);
                (z != ZERO).then_some((i, j, z))
            })
        })
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.rows, self.cols);
        for (i, j, z) in self.nonzeros() {
            m[(i, j)] = z;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Square upper-triangular band factor, row `i` holding columns `i ..= i + w`.
struct UpperBand {
    n: usize,
    w: usize,
    data: Vec<Complex64>,
}

impl UpperBand {
    /// Solves `R* y = x` in place.
    fn solve_adjoint(&self, x: &mut [Complex64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.w);
            let mut acc = x[i];
            for j in lo..i {
                acc -= self.data[j * (self.w + 1) + (i - j)].conj() * x[j];
            }
            x[i] = acc / self.data[i * (self.w + 1)].conj();
        }
    }

    /// Solves `R z = y` in place.
    fn solve(&self, y: &mut [Complex64]) {
        for i in (0..self.n).rev() {
            let hi = (i + self.w + 1).min(self.n);
            let row = &self.data[i * (self.w + 1)..];
            let mut acc = y[i];
            for j in (i + 1)..hi {
                acc -= row[j - i] * y[j];
            }
            y[i] = acc / row[0];
        }
    }
}

/// Triangular factor of the stacked matrix `[M; μI]`, so that `R*R = M*M + μ²I`.
///
/// Rows are absorbed one at a time by Givens rotations in order of their
/// leading column, which bounds the work per row by the band width.
fn shifted_factor(m: &BandMatrix, mu: f64) -> UpperBand {
    let c = m.cols;
    let w = m.kl + m.ku;
    let mut data = vec![ZERO; c * (w + 1)];
    let mut filled = vec![false; c];

    let mut rows: Vec<(usize, Vec<Complex64>)> = Vec::with_capacity(m.rows + c);
    for i in 0..m.rows {
        let (lo, hi) = m.col_range(i);
        let Some(lead) = (lo..hi).find(|&j| m.get(i, j) != ZERO) else {
            continue;
        };
        let mut v = vec![ZERO; w + 1];
        for j in lead..hi {
            v[j - lead] = m.get(i, j);
        }
        rows.push((lead, v));
    }
    for k in 0..c {
        let mut v = vec![ZERO; w + 1];
        v[0] = Complex64::new(mu, 0.0);
        rows.push((k, v));
    }
    rows.sort_by_key(|r| r.0);

    for (lead, mut v) in rows {
        let mut l = lead;
        while l < c {
            if v[0] != ZERO {
                let row = &mut data[l * (w + 1)..(l + 1) * (w + 1)];
                if !filled[l] {
                    row.copy_from_slice(&v);
                    filled[l] = true;
                    break;
                }
                let a = row[0];
                let b = v[0];
                let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
                let (cs, sn) = if a == ZERO {
                    (0.0, b.conj() / b.norm())
                } else {
                    let an = a.norm();
                    (an / r, (a / an) * b.conj() / r)
                };
                for (x, y) in row.iter_mut().zip(v.iter_mut()) {
                    let (p, q) = (*x, *y);
                    *x = p * cs + sn * q;
                    *y = -sn.conj() * p + q * cs;
                }
            }
            v.rotate_left(1);
            v[w] = ZERO;
            l += 1;
            if v.iter().all(|z| *z == ZERO) {
                break;
            }
        }
    }
    UpperBand { n: c, w, data }
}

/// Result of [`band_svd_tail`].
#[derive(Debug, Clone)]
pub struct BandSvdTail {
    /// Lanczos estimate of the largest singular value.
    pub sigma_max: f64,
    /// Smallest singular values of the zero-padded square factor, ascending.
    /// The first `structural_zeros` correspond to padding when `cols > rows`.
    pub smallest: Vec<f64>,
    /// Right singular vectors matching `smallest`.
    pub right_vectors: Vec<DVector<Complex64>>,
    /// `cols - rows` when the matrix is wide, else zero.
    pub structural_zeros: usize,
}

impl BandSvdTail {
    /// Smallest genuine singular values (of the `min(rows, cols)` ones), ascending.
    pub fn genuine(&self) -> &[f64] {
        &self.smallest[self.structural_zeros.min(self.smallest.len())..]
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn orthonormalize(basis: &mut [Vec<Complex64>]) {
    for k in 0..basis.len() {
        for _ in 0..2 {
            for q in 0..k {
                let (done, rest) = basis.split_at_mut(k);
                let proj = dot(&done[q], &rest[0]);
                for (x, y) in rest[0].iter_mut().zip(&done[q]) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm(&basis[k]);
        if nrm > 0.0 {
            basis[k].iter_mut().for_each(|z| *z /= nrm);
        }
    }
}

/// Largest eigenvalue of a hermitian operator by Lanczos with full reorthogonalisation.
fn lanczos_extremes(
    n: usize,
    steps: usize,
    seed: u64,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
) -> Result<(f64, f64), NumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q0: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let nr = norm(&q0);
    q0.iter_mut().for_each(|z| *z /= nr);
    let steps = steps.min(n).max(1);
    let mut basis: Vec<Vec<Complex64>> = vec![q0];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for k in 0..steps {
        let mut w = apply(&basis[k]);
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let p = dot(q, &w);
                for (x, y) in w.iter_mut().zip(q) {
                    *x -= p * y;
                }
            }
        }
        let b = norm(&w);
        if k + 1 == steps || b <= 1e-14 * (a.abs() + beta.last().copied().unwrap_or(0.0) + 1e-300) {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|z| *z /= b);
        basis.push(w);
    }
    let m = alpha.len();
    let t = CMat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i].into()
        } else if i + 1 == j {
            beta[i].into()
        } else if j + 1 == i {
            beta[j].into()
        } else {
            ZERO
        }
    });
    let vals = super::eigvalsh(&HermMatrix::new(t)?)?;
    Ok((vals[0], vals[m - 1]))
}

/// Smallest and largest eigenvalue estimates of a hermitian band matrix.
pub fn hermitian_band_extremes(h: &BandMatrix, steps: usize) -> Result<(f64, f64), NumError> {
    if h.rows != h.cols {
        return Err(NumError::NotSquare {
            rows: h.rows,
            cols: h.cols,
        });
    }
    lanczos_extremes(h.rows, steps, 0x5eed, |x| h.mul_vec(x))
}

/// Shift `μ = SHIFT σ_max` of the inverse iteration.
const SHIFT: f64 = 1e-6;
const MAX_ITERS: usize = 2000;
/// After `LOOSE_AFTER` sweeps, values above `LOOSE σ_max` only need to settle to 1e-6 relative.
const LOOSE: f64 = 1e-2;
const LOOSE_AFTER: usize = 200;

/// The `count` smallest genuine singular values (with right vectors) and the largest one.
///
/// Inverse subspace iteration with `(M*M + μ²I)⁻¹`, applied through the
/// triangular factor of `[M; μI]`, followed by Rayleigh-Ritz on `M` itself.
pub fn band_svd_tail(m: &BandMatrix, count: usize) -> Result<BandSvdTail, NumError> {
    let c = m.cols;
    let structural = c.saturating_sub(m.rows);
    let want = (structural + count).min(c);
    if c == 0 {
        return Ok(BandSvdTail {
            sigma_max: 0.0,
            smallest: Vec::new(),
            right_vectors: Vec::new(),
            structural_zeros: 0,
        });
    }
    let (_, top) = lanczos_extremes(c, 60, 0xa11ce, |x| m.adjoint_mul_vec(&m.mul_vec(x)))?;
    let sigma_max = top.max(0.0).sqrt();
    if sigma_max == 0.0 || m.max_abs() == 0.0 {
        let right_vectors = (0..want)
            .map(|k| {
                let mut v = DVector::from_element(c, ZERO);
                v[k] = Complex64::new(1.0, 0.0);
                v
            })
            .collect();
        return Ok(BandSvdTail {
            sigma_max: 0.0,
            smallest: vec![0.0; want],
            right_vectors,
            structural_zeros: structural,
        });
    }
    let r = shifted_factor(m, SHIFT * sigma_max);
    let floor = 1e-12 * sigma_max;

    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11);
    let mut random_vec = || -> Vec<Complex64> {
        (0..c)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let block = (want + 6.max(want / 2)).min(c);
    let mut z: Vec<Vec<Complex64>> = (0..block).map(|_| random_vec()).collect();
    orthonormalize(&mut z);
    let mut prev: Vec<f64> = Vec::new();

    for iter in 0..MAX_ITERS {
        for v in z.iter_mut() {
            r.solve_adjoint(v);
            r.solve(v);
        }
        reseed_degenerate(&mut z, &mut random_vec);
        let (vals, vecs) = rayleigh_ritz(m, &z)?;
        let converged = prev.len() == vals.len()
            && (0..want).all(|k| {
                let step = (vals[k] - prev[k]).abs();
                if iter >= LOOSE_AFTER && vals[k] > LOOSE * sigma_max {
                    step <= 1e-6 * vals[k]
                } else {
                    step <= 1e-10 * vals[k] + floor
                }
            });
        z = vecs;
        prev = vals;
        if converged {
            return Ok(BandSvdTail {
                sigma_max: sigma_max.max(prev.iter().copied().fold(0.0, f64::max)),
                smallest: prev[..want].to_vec(),
                right_vectors: z[..want].iter().map(|v| DVector::from_column_slice(v)).collect(),
                structural_zeros: structural,
            });
        }
    }
    Err(NumError::NoConvergence("band inverse subspace iteration"))
}

/// Orthonormalises the block, replacing vectors that collapsed to roundoff
/// by fresh random ones.
fn reseed_degenerate(z: &mut [Vec<Complex64>], random_vec: &mut impl FnMut() -> Vec<Complex64>) {
    for k in 0..z.len() {
        for attempt in 0..3 {
            let before = norm(&z[k]);
            let (done, rest) = z.split_at_mut(k);
            for _ in 0..2 {
                for q in done.iter() {
                    let p = dot(q, &rest[0]);
                    for (x, y) in rest[0].iter_mut().zip(q) {
                        *x -= p * y;
                    }
                }
            }
            let after = norm(&z[k]);
            if after > 1e-8 * before && after > 0.0 {
                z[k].iter_mut().for_each(|x| *x /= after);
                break;
            }
            if attempt == 2 {
                z[k] = vec![ZERO; z[k].len()];
            } else {
                z[k] = random_vec();
            }
        }
    }
}

/// Ritz singular values (ascending) and vectors of `m` on the orthonormal basis `z`.
fn rayleigh_ritz(m: &BandMatrix, z: &[Vec<Complex64>]) -> Result<(Vec<f64>, Vec<Vec<Complex64>>), NumError> {
    let p = z.len();
    let y: Vec<Vec<Complex64>> = z.iter().map(|v| m.mul_vec(v)).collect();
    let gram = CMat::from_fn(p, p, |i, j| dot(&y[i], &y[j]));
    let e = eigh(&HermMatrix::hermitian_part(&gram)?)?;
    let c = z[0].len();
    let rows = y[0].len();
    let mut rot: Vec<Vec<Complex64>> = Vec::with_capacity(p);
    let mut vals = Vec::with_capacity(p);
    for k in 0..p {
        let mut v = vec![ZERO; c];
        let mut yv = vec![ZERO; rows];
        for q in 0..p {
            let w = e.vectors[(q, k)];
            for (a, b) in v.iter_mut().zip(&z[q]) {
                *a += w * b;
            }
            for (a, b) in yv.iter_mut().zip(&y[q]) {
                *a += w * b;
            }
        }
        vals.push(norm(&yv));
        rot.push(v);
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    Ok((
        order.iter().map(|&k| vals[k]).collect(),
        order.iter().map(|&k| rot[k].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::singular_values;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_band(rows: usize, cols: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..rows {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(cols) {
                t.push((i, j, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
            }
        }
        BandMatrix::from_triplets(rows, cols, t)
    }

    #[test]
    fn matvec_matches_dense() {
        let m = random_band(9, 7, 2, 1, 3);
        let d = m.to_dense();
        let x: Vec<Complex64> = (0..7).map(|k| c(k as f64, 1.0)).collect();
        let y = m.mul_vec(&x);
        let yd = &d * DVector::from_column_slice(&x);
        for i in 0..9 {
            assert!((y[i] - yd[i]).norm() < 1e-13);
        }
        let a = m.adjoint().to_dense();
        assert!((a - d.adjoint()).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn tail_matches_dense_svd() {
        for (rows, cols, kl, ku, seed) in [
            (30, 30, 2, 3, 1),
            (34, 30, 4, 1, 2),
            (27, 30, 1, 3, 3),
            (40, 41, 2, 2, 4),
        ] {
            let m = random_band(rows, cols, kl, ku, seed);
            let dense = singular_values(&m.to_dense()).unwrap();
            let mut asc = dense.clone();
            asc.reverse();
            let tail = band_svd_tail(&m, 5).unwrap();
            assert_eq!(tail.structural_zeros, cols.saturating_sub(rows));
            for (a, b) in tail.genuine().iter().zip(&asc) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            assert!((tail.sigma_max - dense[0]).abs() < 1e-8 * dense[0]);
            for (k, v) in tail.right_vectors.iter().enumerate() {
                let mv = m.mul_vec(v.as_slice());
                let res = norm(&mv);
                assert!((res - tail.smallest[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_null_vector_found() {
        // forward difference on 20 nodes: kernel = constants
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, c(-1.0, 0.0)));
            t.push((i, i + 1, c(1.0, 0.0)));
        }
        let m = BandMatrix::from_triplets(n - 1, n, t);
        let tail = band_svd_tail(&m, 3).unwrap();
        assert_eq!(tail.structural_zeros, 1);
        assert!(tail.smallest[0] < 1e-13);
        let v = &tail.right_vectors[0];
        let mean: Complex64 = v.iter().sum::<Complex64>() / n as f64;
        for z in v.iter() {
            assert!((z - mean).norm() < 1e-12);
        }
        assert!(tail.genuine()[0] > 1e-3);
    }

    #[test]
    fn several_exact_zeros_and_a_tiny_value() {
        let mut m = random_band(40, 40, 2, 2, 9);
        let mut t: Vec<(usize, usize, Complex64)> = m.nonzeros().collect();
        // zero two columns and scale a third
        t.retain(|&(_, j, _)| j != 5 && j != 17);
        for e in t.iter_mut() {
            if e.1 == 30 {
                e.2 *= 1e-11;
            }
        }
        m = BandMatrix::from_triplets(40, 40, t);
        let dense = singular_values(&m.to_dense()).unwrap();
        let tail = band_svd_tail(&m, 6).unwrap();
        assert!(tail.smallest[0] < 1e-14 && tail.smallest[1] < 1e-14);
        for (a, b) in tail.smallest.iter().zip(dense.iter().rev()).skip(2) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(tail.smallest[2] > 1e-13 && tail.smallest[2] < 1e-10);
    }

    #[test]
    fn hermitian_extremes_match_dense() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(i as f64 / 10.0, 0.0)));
            if i + 1 < n {
                t.push((i, i + 1, c(0.0, -1.0)));
                t.push((i + 1, i, c(0.0, 1.0)));
            }
        }
        let h = BandMatrix::from_triplets(n, n, t);
        let (lo, hi) = hermitian_band_extremes(&h, 50).unwrap();
        let vals = super::super::eigvalsh(&HermMatrix::new(h.to_dense()).unwrap()).unwrap();
        assert!((lo - vals[0]).abs() < 1e-9);
        assert!((hi - vals[n - 1]).abs() < 1e-9);
    }
}
