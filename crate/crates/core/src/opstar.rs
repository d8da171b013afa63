//! Grid-function algebras embedded as lower-triangular 2x2 block operators,
//! their first-order norm, approximate units, and matrix-level norm estimates.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Grid, GridFunction, GridKind};
use crate::numlin::{commutator, kron, op_norm, svd, CMat, HermMatrix, NumError, I};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpStarError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("an interval grid is required")]
    IntervalGridRequired,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

fn check_dim(f: &GridFunction, d2: &HermMatrix) -> Result<(), OpStarError> {
    if f.len() != d2.dim() {
        return Err(OpStarError::DimensionMismatch {
            expected: d2.dim(),
            found: f.len(),
        });
    }
    Ok(())
}

/// `[D, π(f)]`.
pub fn derivation(f: &GridFunction, d2: &HermMatrix) -> Result<CMat, OpStarError> {
    check_dim(f, d2)?;
    let d = d2.matrix();
    let v = f.values();
    // the diagonal factor makes the commutator entrywise: D_ij (f_j - f_i)
    Ok(CMat::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] * (v[j] - v[i])))
}

/// `sup |f| + ‖[D, π(f)]‖`.
pub fn one_norm(f: &GridFunction, d2: &HermMatrix) -> Result<f64, OpStarError> {
    let delta = derivation(f, d2)?;
    Ok(f.sup_norm() + op_norm(&delta))
}

#[derive(Debug, Clone)]
pub struct RhoEmbedding {
    /// `[[π(f), 0], [δ(f), π(f)]]`.
    pub block: CMat,
    /// `‖ρ(f̄) − V ρ(f)* V‖` with `V = [[0, -i], [i, 0]]`.
    pub involution_defect: f64,
}

fn rho_block(f: &GridFunction, d2: &HermMatrix) -> Result<CMat, OpStarError> {
    let n = f.len();
    let pi = f.diag();
    let delta = derivation(f, d2)?;
    let mut b = CMat::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(&pi);
    b.view_mut((n, n), (n, n)).copy_from(&pi);
    b.view_mut((n, 0), (n, n)).copy_from(&delta);
    Ok(b)
}

/// The unitary `[[0, U*], [U, 0]]` with `U = i`.
pub fn flip_unitary(n: usize) -> CMat {
    let mut v = CMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        v[(j, n + j)] = -I;
        v[(n + j, j)] = I;
    }
    v
}

pub fn rho_embed(f: &GridFunction, d2: &HermMatrix) -> Result<RhoEmbedding, OpStarError> {
    let block = rho_block(f, d2)?;
    let conj_block = rho_block(&f.conj(), d2)?;
    let v = flip_unitary(f.len());
    let rhs = &v * block.adjoint() * &v;
    let involution_defect = (conj_block - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(RhoEmbedding {
        block,
        involution_defect,
    })
}

/// `‖δ(fg) − δ(f)π(g) − π(f)δ(g)‖`.
pub fn leibniz_defect(f: &GridFunction, g: &GridFunction, d2: &HermMatrix) -> Result<f64, OpStarError> {
    let lhs = derivation(&f.mul(g), d2)?;
    let rhs = derivation(f, d2)? * g.diag() + f.diag() * derivation(g, d2)?;
    Ok(op_norm(&(lhs - rhs)))
}

/// `clamp(2 − |x|/k, 0, 1)`.
pub fn approximate_unit_chi(grid: &Grid, k: f64) -> Result<GridFunction, OpStarError> {
    if grid.kind() != GridKind::Interval {
        return Err(OpStarError::IntervalGridRequired);
    }
    if !(k >= 1.0 && k.is_finite()) {
        return Err(OpStarError::InvalidParameter(format!("k must be >= 1, got {k}")));
    }
    Ok(GridFunction::from_real_fn(*grid, |x| {
        (2.0 - x.abs() / k).clamp(0.0, 1.0)
    }))
}

/// A linear map given on a basis of a concrete matrix space.
#[derive(Debug, Clone)]
pub struct MatrixLevelMap {
    domain: Vec<CMat>,
    images: Vec<CMat>,
    // (row, col) of each basis element when the basis is all matrix units
    units: Option<Vec<(usize, usize)>>,
}

fn matrix_unit_positions(domain: &[CMat]) -> Option<Vec<(usize, usize)>> {
    let (r, c) = domain[0].shape();
    if domain.len() != r * c {
        return None;
    }
    let mut seen = vec![false; r * c];
    let mut out = Vec::with_capacity(domain.len());
    for e in domain {
        let nz: Vec<(usize, usize)> = (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .filter(|&(i, j)| e[(i, j)] != Complex64::new(0.0, 0.0))
            .collect();
        if nz.len() != 1 || e[nz[0]] != Complex64::new(1.0, 0.0) || seen[nz[0].0 * c + nz[0].1] {
            return None;
        }
        seen[nz[0].0 * c + nz[0].1] = true;
        out.push(nz[0]);
    }
    Some(out)
}

impl MatrixLevelMap {
    pub fn new(domain: Vec<CMat>, images: Vec<CMat>) -> Result<Self, OpStarError> {
        if domain.is_empty() || domain.len() != images.len() {
            return Err(OpStarError::InvalidParameter(format!(
                "{} basis elements but {} images",
                domain.len(),
                images.len()
            )));
        }
        let ds = domain[0].shape();
        let is = images[0].shape();
        if domain.iter().any(|m| m.shape() != ds) || images.iter().any(|m| m.shape() != is) {
            return Err(OpStarError::InvalidParameter("inconsistent matrix shapes".into()));
        }
        let units = matrix_unit_positions(&domain);
        Ok(MatrixLevelMap { domain, images, units })
    }

    fn matrix_units(d: usize) -> Vec<(usize, usize, CMat)> {
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = Complex64::new(1.0, 0.0);
                out.push((i, j, e));
            }
        }
        out
    }

    pub fn identity(d: usize) -> Self {
        let units = Self::matrix_units(d);
        let dom: Vec<CMat> = units.iter().map(|u| u.2.clone()).collect();
        MatrixLevelMap::new(dom.clone(), dom).unwrap()
    }

    pub fn transpose(d: usize) -> Self {
        let units = Self::matrix_units(d);
        let dom = units.iter().map(|u| u.2.clone()).collect();
        let img = units.iter().map(|u| u.2.transpose()).collect();
        MatrixLevelMap::new(dom, img).unwrap()
    }

    /// Map on the column Hilbert space `C^N` (basis `e_i` as `N x 1` matrices).
    pub fn on_column_space(images: Vec<CMat>) -> Result<Self, OpStarError> {
        let n = images.len();
        let dom = (0..n)
            .map(|i| {
                let mut e = CMat::zeros(n, 1);
                e[(i, 0)] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        MatrixLevelMap::new(dom, images)
    }

    /// Random map on `C^N` into `rows x cols` matrices.
    pub fn random_on_column_space(n: usize, rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let images = (0..n)
            .map(|_| {
                CMat::from_fn(rows, cols, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            })
            .collect();
        MatrixLevelMap::on_column_space(images).unwrap()
    }

    pub fn basis_len(&self) -> usize {
        self.domain.len()
    }

    /// `N · max ‖α(e_i)‖`, an upper bound for every matrix level when the
    /// domain is an `N`-dimensional column Hilbert space.
    pub fn column_space_ceiling(&self) -> f64 {
        self.domain.len() as f64 * self.images.iter().map(op_norm).fold(0.0, f64::max)
    }

    /// `Σ X_k ⊗ E_k` and `Σ X_k ⊗ α(E_k)`.
    pub fn lift(&self, coeffs: &[CMat]) -> (CMat, CMat) {
        let mut x = kron(&coeffs[0], &self.domain[0]);
        let mut y = kron(&coeffs[0], &self.images[0]);
        for k in 1..coeffs.len() {
            x += kron(&coeffs[k], &self.domain[k]);
            y += kron(&coeffs[k], &self.images[k]);
        }
        (x, y)
    }

    /// `‖(id ⊗ α)(x)‖ / ‖x‖` for `x = Σ X_k ⊗ E_k`.
    pub fn ratio(&self, coeffs: &[CMat]) -> f64 {
        let (x, y) = self.lift(coeffs);
        let nx = op_norm(&x);
        if nx == 0.0 {
            0.0
        } else {
            op_norm(&y) / nx
        }
    }

    /// Max deviation between the level-1 lift of random scalar coefficients
    /// and the direct combination `Σ c_k α(E_k)`.
    pub fn linearity_defect(&self, rng: &mut impl Rng) -> f64 {
        let c: Vec<Complex64> = (0..self.domain.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let one = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        let coeffs: Vec<CMat> = c.iter().map(|z| &one * *z).collect();
        let (_, y) = self.lift(&coeffs);
        let mut direct = CMat::zeros(y.nrows(), y.ncols());
        for (z, img) in c.iter().zip(&self.images) {
            direct += img * *z;
        }
        (y - direct).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Top singular vectors split into `n` blocks.
fn top_pair(m: &CMat) -> (f64, Vec<Complex64>, Vec<Complex64>) {
    let d = svd(m).expect("finite matrix");
    (
        d.s[0],
        d.u.column(0).iter().copied().collect(),
        d.v.column(0).iter().copied().collect(),
    )
}

/// Gradient direction of `‖Σ X_k ⊗ F_k‖` with respect to the `X_k`.
fn norm_gradient(fs: &[CMat], n: usize, m: &CMat) -> (f64, Vec<CMat>) {
    let (s, u, v) = top_pair(m);
    let (a, b) = fs[0].shape();
    let grads = fs
        .iter()
        .map(|f| {
            CMat::from_fn(n, n, |i, j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in 0..a {
                    let ui = u[i * a + p].conj();
                    if ui == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for q in 0..b {
                        acc += ui * f[(p, q)] * v[j * b + q];
                    }
                }
                acc.conj()
            })
        })
        .collect();
    (s, grads)
}

fn normalise(coeffs: &mut [CMat]) {
    let total: f64 = coeffs.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
    if total > 0.0 {
        coeffs.iter_mut().for_each(|c| *c /= Complex64::new(total, 0.0));
    }
}

const STARTS: usize = 8;

/// Maximiser over the unit ball of `x ↦ Re u*(id ⊗ α)(x)v`, where `(u, v)` is
/// the top singular pair at the current point. The new value is at least the
/// old one, so iterating is monotone.
fn polar_step(alpha: &MatrixLevelMap, units: &[(usize, usize)], n: usize, ym: &CMat) -> Vec<CMat> {
    let (_, u, v) = top_pair(ym);
    let (a, b) = alpha.domain[0].shape();
    let (fa, fb) = alpha.images[0].shape();
    let mut w = CMat::zeros(n * a, n * b);
    for (k, &(p, q)) in units.iter().enumerate() {
        let f = &alpha.images[k];
        for i in 0..n {
            for j in 0..n {
                let mut c = Complex64::new(0.0, 0.0);
                for s in 0..fa {
                    for t in 0..fb {
                        c += u[i * fa + s].conj() * f[(s, t)] * v[j * fb + t];
                    }
                }
                w[(i * a + p, j * b + q)] = c.conj();
            }
        }
    }
    let d = svd(&w).expect("finite matrix");
    let floor = d.s.first().copied().unwrap_or(0.0) * 1e-12;
    let mut x = CMat::zeros(n * a, n * b);
    for (k, &sk) in d.s.iter().enumerate() {
        if sk > floor {
            x += d.u.column(k) * d.v.column(k).adjoint();
        }
    }
    units
        .iter()
        .map(|&(p, q)| CMat::from_fn(n, n, |i, j| x[(i * a + p, j * b + q)]))
        .collect()
}

fn ascend(alpha: &MatrixLevelMap, n: usize, budget: usize, start: Vec<CMat>) -> f64 {
    let mut x = start;
    normalise(&mut x);
    let mut best = alpha.ratio(&x);
    let mut step: f64 = 0.5;
    for _ in 0..budget {
        let (xm, ym) = alpha.lift(&x);
        if let Some(units) = &alpha.units {
            let mut trial = polar_step(alpha, units, n, &ym);
            normalise(&mut trial);
            let r = alpha.ratio(&trial);
            if r > best {
                best = r;
                x = trial;
                continue;
            }
            break;
        }
        let (nx, gx) = norm_gradient(&alpha.domain, n, &xm);
        let (ny, gy) = norm_gradient(&alpha.images, n, &ym);
        if nx == 0.0 || ny == 0.0 {
            break;
        }
        let dir: Vec<CMat> = gy
            .iter()
            .zip(&gx)
            .map(|(a, b)| a / Complex64::new(ny, 0.0) - b / Complex64::new(nx, 0.0))
            .collect();
        let dn: f64 = dir.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
        if dn < 1e-14 {
            break;
        }
        let mut improved = false;
        let mut t = step.min(1.0) * 2.0;
        for _ in 0..12 {
            let mut trial: Vec<CMat> = x
                .iter()
                .zip(&dir)
                .map(|(a, d)| a + d * Complex64::new(t / dn, 0.0))
                .collect();
            normalise(&mut trial);
            let r = alpha.ratio(&trial);
            if r > best {
                best = r;
                x = trial;
                step = t;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Certified lower bound for `‖id_n ⊗ α‖` by ascent from a fixed set of
/// seeded random starts.
///
/// Domains spanned by matrix units use the polar step; other domains use
/// projected gradient steps on the ratio. Every start runs at most `budget`
/// accept-only-improving steps, so the result is nondecreasing in `budget`
/// for a fixed seed.
pub fn matrix_level_norm(alpha: &MatrixLevelMap, n: usize, budget: usize, seed: u64) -> f64 {
    assert!(n >= 1, "matrix level must be positive");
    let k = alpha.basis_len();
    let starts: Vec<Vec<CMat>> = (0..STARTS as u64)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            (0..k)
                .map(|_| {
                    CMat::from_fn(n, n, |_, _| {
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    })
                })
                .collect()
        })
        .collect();
    starts
        .into_par_iter()
        .map(|s| ascend(alpha, n, budget, s))
        .reduce(|| 0.0, f64::max)
}

/// `‖fg‖₁ / (‖f‖₁ ‖g‖₁)`.
pub fn product_ratio(f: &GridFunction, g: &GridFunction, d2: &HermMatrix) -> Result<f64, OpStarError> {
    let num = one_norm(&f.mul(g), d2)?;
    let den = one_norm(f, d2)? * one_norm(g, d2)?;
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// `‖[D, π(f)]‖` next to the central-difference bound `sup |f_{j+1} − f_{j−1}| / 2h`.
pub fn symbol_bound(f: &GridFunction, d2: &HermMatrix) -> Result<(f64, f64), OpStarError> {
    check_dim(f, d2)?;
    let c = op_norm(&commutator(d2.matrix(), &f.diag()));
    Ok((c, f.max_central_difference()))
}
