use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::DirSchrodError;
use crate::family::{assumption_report, evaluate, gauge_psi, FamilySamples, FamilySpec, DEFAULT_GUARD};
use crate::grid::{Grid, GridFunction};
use crate::numlin::{band_svd_tail, eigh, BandMatrix, HermMatrix, NumError};
use crate::spectral_flow::spectral_flow;

/// Interior difference scheme of the assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApsScheme {
    /// `(u_{j+1} − u_j)/h + λ Ā_{j+½} (u_j + u_{j+1})/2`, second order.
    Midpoint,
    /// `(u_{j+1} − u_j)/h + λ A_j u_j`, first order.
    Forward,
}

/// `λA + d/dx` on `[-R, R]` with spectral boundary conditions: the positive
/// eigenspace of `A(−R)` is removed from `u_0` and the negative eigenspace of
/// `A(R)` from `u_N`.
#[derive(Debug, Clone)]
pub struct ApsAssembly {
    pub matrix: BandMatrix,
    pub fiber: usize,
    pub intervals: usize,
    pub half_width: f64,
    pub lambda: f64,
    /// `n₊(A(−R))`.
    pub left_rank: usize,
    /// `n₋(A(R))`.
    pub right_rank: usize,
    pub scheme: ApsScheme,
}

impl ApsAssembly {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn assemble_aps(
    samples: &FamilySamples,
    lambda: f64,
    psi: Option<&GridFunction>,
) -> Result<ApsAssembly, DirSchrodError> {
    assemble_aps_with(samples, lambda, psi, ApsScheme::Midpoint)
}

fn boundary_vectors(m: &HermMatrix, positive: bool) -> Result<Vec<DVector<Complex64>>, DirSchrodError> {
    let e = eigh(m)?;
    if let Some(&v) = e.values.iter().find(|v| v.abs() <= DEFAULT_GUARD) {
        return Err(NumError::GuardBand {
            eigenvalue: v,
            guard: DEFAULT_GUARD,
        }
        .into());
    }
    Ok(e.values
        .iter()
        .enumerate()
        .filter(|(_, v)| (**v > 0.0) == positive)
        .map(|(k, _)| e.vectors.column(k).into_owned())
        .collect())
}

pub fn assemble_aps_with(
    samples: &FamilySamples,
    lambda: f64,
    psi: Option<&GridFunction>,
    scheme: ApsScheme,
) -> Result<ApsAssembly, DirSchrodError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DirSchrodError::InvalidParameter(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    let gauged;
    let samples = match psi {
        Some(p) => {
            gauged = samples
                .gauged(p)
                .map_err(|e| DirSchrodError::InvalidParameter(e.to_string()))?;
            &gauged
        }
        None => samples,
    };
    let a = samples.matrices();
    let n = samples.dim();
    let big_n = a.len() - 1;
    let h = samples.grid().h();
    let left = boundary_vectors(&a[0], true)?;
    let right = boundary_vectors(&a[big_n], false)?;
    let nb = left.len();

    let mut t: Vec<(usize, usize, Complex64)> = Vec::with_capacity(big_n * n * (2 * n + 2) + 2 * n * n);
    for (r, v) in left.iter().enumerate() {
        for k in 0..n {
            t.push((r, k, v[k].conj()));
        }
    }
    let inv_h = Complex64::new(1.0 / h, 0.0);
    for j in 0..big_n {
        let row0 = nb + j * n;
        let (lo, hi) = match scheme {
            ApsScheme::Midpoint => {
                let avg = (a[j].matrix() + a[j + 1].matrix()).scale(0.25 * lambda);
                (avg.clone(), avg)
            }
            ApsScheme::Forward => (a[j].matrix().scale(lambda), crate::numlin::CMat::zeros(n, n)),
        };
        for i in 0..n {
            for k in 0..n {
                let mut l = lo[(i, k)];
                let mut u = hi[(i, k)];
                if i == k {
                    l -= inv_h;
                    u += inv_h;
                }
                t.push((row0 + i, j * n + k, l));
                t.push((row0 + i, (j + 1) * n + k, u));
            }
        }
    }
    let row0 = nb + big_n * n;
    for (r, v) in right.iter().enumerate() {
        for k in 0..n {
            t.push((row0 + r, big_n * n + k, v[k].conj()));
        }
    }
    let rows = row0 + right.len();
    let cols = n * (big_n + 1);
    Ok(ApsAssembly {
        matrix: BandMatrix::from_triplets(rows, cols, t),
        fiber: n,
        intervals: big_n,
        half_width: samples.grid().half_width(),
        lambda,
        left_rank: nb,
        right_rank: right.len(),
        scheme,
    })
}

/// Default relative rank tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Minimum separation between zero and nonzero singular values.
pub const MIN_GAP_RATIO: f64 = 10.0;
const REPORTED: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct IndexResult {
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub index: i64,
    /// Smallest singular values of the assembly, ascending.
    pub smallest: Vec<f64>,
    /// Smallest singular values of its adjoint, ascending.
    pub smallest_adjoint: Vec<f64>,
    pub sigma_max: f64,
    pub tol: f64,
    pub threshold: f64,
    /// Separation of the zero and nonzero singular values relative to the threshold.
    pub gap_ratio: f64,
    /// `cols − rows`, a sanity value only.
    pub shape_index: i64,
    /// Right singular vectors spanning the numerical kernel.
    #[serde(skip)]
    pub kernel: Vec<DVector<Complex64>>,
}

struct Tail {
    zeros: usize,
    values: Vec<f64>,
    sigma_max: f64,
    vectors: Vec<DVector<Complex64>>,
    /// Smallest value above the threshold, if seen.
    above: Option<f64>,
    /// Largest value at or below the threshold, if any.
    below: Option<f64>,
}

fn small_tail(m: &BandMatrix, tol: f64) -> Result<Tail, DirSchrodError> {
    let genuine_total = m.rows().min(m.cols());
    let mut count = (REPORTED + 3).min(genuine_total);
    loop {
        let tail = band_svd_tail(m, count)?;
        let tau = tol * tail.sigma_max;
        let genuine = tail.genuine();
        let small = genuine.iter().filter(|s| **s <= tau).count();
        if small < genuine.len() || count >= genuine_total {
            let structural = tail.structural_zeros;
            let zeros = structural + small;
            let values: Vec<f64> = tail.smallest.clone();
            let above = genuine.get(small).copied();
            let below = if small > 0 { Some(genuine[small - 1]) } else { None };
            return Ok(Tail {
                zeros,
                sigma_max: tail.sigma_max,
                vectors: tail.right_vectors.into_iter().take(zeros).collect(),
                values,
                above,
                below,
            });
        }
        count = (2 * count).min(genuine_total);
    }
}

/// Kernel and cokernel dimensions from the small singular values of the
/// assembly and, independently, of its adjoint.
pub fn fredholm_index(assembly: &ApsAssembly, tol: f64) -> Result<IndexResult, DirSchrodError> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(DirSchrodError::InvalidParameter(format!(
            "tol must lie in (0, 1e-3], got {tol}"
        )));
    }
    let m = &assembly.matrix;
    let direct = small_tail(m, tol)?;
    let adjoint = small_tail(&m.adjoint(), tol)?;
    let sigma_max = direct.sigma_max.max(adjoint.sigma_max);
    let tau = tol * sigma_max;
    let rank_direct = m.cols() - direct.zeros;
    let rank_adjoint = m.rows() - adjoint.zeros;
    if rank_direct != rank_adjoint {
        return Err(DirSchrodError::IllSeparated {
            gap_ratio: 0.0,
            detail: format!("rank {rank_direct} from the assembly, {rank_adjoint} from its adjoint"),
        });
    }
    let floor = f64::EPSILON * sigma_max;
    let above = [direct.above, adjoint.above]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    let below = [direct.below, adjoint.below]
        .into_iter()
        .flatten()
        .fold(floor, f64::max);
    let gap_ratio = (above / tau).min(tau / below);
    if gap_ratio < MIN_GAP_RATIO {
        return Err(DirSchrodError::IllSeparated {
            gap_ratio,
            detail: "increase N or R".into(),
        });
    }
    let report = |v: &[f64]| {
        v.iter()
            .copied()
            .take(direct.zeros.max(adjoint.zeros) + REPORTED)
            .collect::<Vec<_>>()
    };
    Ok(IndexResult {
        dim_ker: direct.zeros,
        dim_coker: adjoint.zeros,
        index: direct.zeros as i64 - adjoint.zeros as i64,
        smallest: report(&direct.values),
        smallest_adjoint: report(&adjoint.values),
        sigma_max,
        tol,
        threshold: tau,
        gap_ratio,
        shape_index: m.cols() as i64 - m.rows() as i64,
        kernel: direct.vectors,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaCell {
    pub lambda: f64,
    pub rows: usize,
    pub index: Option<i64>,
    pub gap_ratio: Option<f64>,
    pub refused: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaSweep {
    pub cells: Vec<LambdaCell>,
    /// Smallest λ from which every cell succeeds with the same index.
    pub lambda0: Option<f64>,
}

pub fn lambda_sweep(samples: &FamilySamples, lambdas: &[f64], tol: f64) -> Result<LambdaSweep, DirSchrodError> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| !(w[0] < w[1])) || lambdas[0] <= 0.0 {
        return Err(DirSchrodError::InvalidParameter(
            "λ list must be positive and ascending".into(),
        ));
    }
    let mut cells = Vec::new();
    for &lambda in lambdas {
        let asm = assemble_aps(samples, lambda, None)?;
        let cell = match fredholm_index(&asm, tol) {
            Ok(r) => LambdaCell {
                lambda,
                rows: asm.rows(),
                index: Some(r.index),
                gap_ratio: Some(r.gap_ratio),
                refused: None,
            },
            Err(DirSchrodError::IllSeparated { gap_ratio, detail }) => LambdaCell {
                lambda,
                rows: asm.rows(),
                index: None,
                gap_ratio: Some(gap_ratio),
                refused: Some(detail),
            },
            Err(e) => return Err(e),
        };
        cells.push(cell);
    }
    let last = cells.last().and_then(|c| c.index);
    let mut lambda0 = None;
    if last.is_some() {
        for c in cells.iter().rev() {
            if c.index != last {
                break;
            }
            lambda0 = Some(c.lambda);
        }
    }
    Ok(LambdaSweep { cells, lambda0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRecord {
    pub spec: String,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub sf: i64,
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub index: i64,
    pub singular_gap: f64,
    pub runtime_ms: u128,
    pub equal: bool,
}

/// Spectral flow by crossing counting against the index of the APS assembly.
pub fn sf_index_verify(
    spec: &FamilySpec,
    lambda: f64,
    r: f64,
    n: usize,
    tol: f64,
) -> Result<VerifyRecord, DirSchrodError> {
    sf_index_verify_gauged(spec, lambda, r, n, tol, None)
}

/// As [`sf_index_verify`], with the assembly gauged by `ψ` for the given window.
pub fn sf_index_verify_gauged(
    spec: &FamilySpec,
    lambda: f64,
    r: f64,
    n: usize,
    tol: f64,
    window: Option<(f64, f64)>,
) -> Result<VerifyRecord, DirSchrodError> {
    let start = Instant::now();
    if !(r > 0.0 && r.is_finite()) || n < 2 {
        return Err(DirSchrodError::InvalidParameter(format!(
            "need R > 0 and N >= 2, got R={r}, N={n}"
        )));
    }
    let grid = Grid::interval(r, n);
    let wrap = |e: crate::family::FamilyError| DirSchrodError::InvalidParameter(e.to_string());
    let samples = evaluate(spec, &grid).map_err(wrap)?;
    let report = assumption_report(&samples, (-r, r)).map_err(wrap)?;
    if !(report.bounded && report.bounded_derivative) {
        return Err(DirSchrodError::InvalidParameter(
            "family fails the boundedness assumptions".into(),
        ));
    }
    let sf = spectral_flow(&samples, DEFAULT_GUARD)
        .map_err(|e| DirSchrodError::InvalidParameter(e.to_string()))?
        .sf;
    let psi = match window {
        Some(w) => Some(gauge_psi(&grid, w).map_err(wrap)?.psi),
        None => None,
    };
    let asm = assemble_aps(&samples, lambda, psi.as_ref())?;
    let idx = fredholm_index(&asm, tol)?;
    Ok(VerifyRecord {
        spec: spec.label(),
        lambda,
        r,
        n,
        sf,
        dim_ker: idx.dim_ker,
        dim_coker: idx.dim_coker,
        index: idx.index,
        singular_gap: idx.gap_ratio,
        runtime_ms: start.elapsed().as_millis(),
        equal: sf == idx.index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{Entry, MatrixSpec};

    fn constant_one() -> FamilySpec {
        FamilySpec::Constant {
            a: MatrixSpec(vec![vec![Entry::Real(1.0)]]),
        }
    }

    #[test]
    fn shapes_follow_boundary_ranks() {
        let g = Grid::interval(8.0, 50);
        let shape = |spec: FamilySpec| {
            let a = assemble_aps(&evaluate(&spec, &g).unwrap(), 1.0, None).unwrap();
            (a.rows(), a.cols())
        };
        assert_eq!(shape(FamilySpec::ScaledIdentity { n: 1 }), (50, 51));
        assert_eq!(shape(constant_one()), (51, 51));
        assert_eq!(shape(FamilySpec::diag_pair()), (102, 102));
    }

    #[test]
    fn tanh_kernel_is_sech() {
        let n = 2000;
        let g = Grid::interval(8.0, n);
        let asm = assemble_aps(&evaluate(&FamilySpec::ScaledIdentity { n: 1 }, &g).unwrap(), 1.0, None).unwrap();
        let res = fredholm_index(&asm, DEFAULT_TOL).unwrap();
        assert_eq!((res.index, res.dim_ker, res.dim_coker), (1, 1, 0));
        let v = &res.kernel[0];
        let exact: Vec<f64> = g.nodes().iter().map(|x| 1.0 / x.cosh()).collect();
        let en = exact.iter().map(|x| x * x).sum::<f64>().sqrt();
        let phase = v[n / 2] / v[n / 2].norm();
        let err = (0..=n)
            .map(|j| (v[j] / phase).re - exact[j] / en)
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-4, "kernel deviates from sech by {err}");
    }

    #[test]
    fn constant_and_symmetric_pair() {
        let g = Grid::interval(8.0, 400);
        let idx = |spec: FamilySpec| {
            fredholm_index(
                &assemble_aps(&evaluate(&spec, &g).unwrap(), 1.0, None).unwrap(),
                DEFAULT_TOL,
            )
            .unwrap()
        };
        assert_eq!(idx(constant_one()).index, 0);
        let pair = idx(FamilySpec::diag_pair());
        assert_eq!(pair.index, 0);
        assert_eq!(pair.dim_ker, pair.dim_coker);
        assert_eq!(pair.dim_ker, 1);
    }

    #[test]
    fn forward_scheme_agrees() {
        let g = Grid::interval(8.0, 400);
        let s = evaluate(
            &FamilySpec::RandomSmooth {
                n: 3,
                seed: 5,
                degree: 3,
            },
            &g,
        )
        .unwrap();
        let a = fredholm_index(&assemble_aps(&s, 4.0, None).unwrap(), DEFAULT_TOL).unwrap();
        let b = fredholm_index(
            &assemble_aps_with(&s, 4.0, None, ApsScheme::Forward).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap();
        assert_eq!(a.index, b.index);
    }

    #[test]
    fn verify_examples() {
        for (spec, want) in [
            (FamilySpec::ScaledIdentity { n: 1 }, 1),
            (FamilySpec::diag_pair(), 0),
            (FamilySpec::ScaledIdentity { n: 2 }, 2),
        ] {
            let rec = sf_index_verify(&spec, 1.0, 8.0, 400, DEFAULT_TOL).unwrap();
            assert!(rec.equal);
            assert_eq!(rec.sf, want);
        }
    }

    #[test]
    fn sweep_and_refusal() {
        let g = Grid::interval(8.0, 400);
        let s = evaluate(&FamilySpec::ScaledIdentity { n: 1 }, &g).unwrap();
        let sw = lambda_sweep(&s, &[0.5, 1.0, 2.0, 4.0, 8.0], DEFAULT_TOL).unwrap();
        assert!(sw.cells.iter().all(|c| c.index == Some(1)));
        assert!(sw.cells.windows(2).all(|w| w[0].rows == w[1].rows));
        assert_eq!(sw.lambda0, Some(0.5));
        assert!(lambda_sweep(&s, &[2.0, 1.0], DEFAULT_TOL).is_err());
        assert!(fredholm_index(&assemble_aps(&s, 1.0, None).unwrap(), 0.5).is_err());
    }

    #[test]
    fn clustered_spectrum_still_decides() {
        // unit eigenvalues everywhere: singular values pile up near λ
        let s = evaluate(&FamilySpec::pauli_well(), &Grid::interval(8.0, 800)).unwrap();
        let res = fredholm_index(&assemble_aps(&s, 100.0, None).unwrap(), DEFAULT_TOL).unwrap();
        assert_eq!(res.index, 0);
        assert!(res.gap_ratio > 1e5);
    }
}
