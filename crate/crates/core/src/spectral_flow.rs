//! Spectral flow of a sampled hermitian family by tracking eigenvalue branches
//! between nodes and counting signed zero crossings.

use std::io::Write;

use num_complex::Complex64;
use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::family::{endpoint_signature_sf, FamilyError, FamilySamples, DEFAULT_GUARD};
use crate::numlin::{eigh, CMat, EigDecomp, NumError};

/// Squared overlap below which an interval is refined.
pub const MIN_SQUARED_OVERLAP: f64 = 0.25;
pub const MAX_DEPTH: usize = 12;

#[derive(Debug, Error)]
pub enum SfError {
    #[error("family varies too fast for grid on [{0}, {1}]")]
    VariesTooFast(f64, f64),
    #[error("crossing count {count} disagrees with endpoint signature {signature}")]
    OracleMismatch { count: i64, signature: i64 },
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    /// Indices into `EigenFlowTrace::x` of the last and next nodes outside the guard band.
    pub from: usize,
    pub to: usize,
    /// Linear interpolation of the zero.
    pub x: f64,
    pub branch: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenFlowTrace {
    pub x: Vec<f64>,
    /// Ascending eigenvalues per node.
    pub values: Vec<Vec<f64>>,
    /// `branches[j][k]` is the branch carrying the `k`-th eigenvalue at node `j`.
    pub branches: Vec<Vec<usize>>,
    /// Smallest squared overlap of matched eigenvectors between consecutive nodes.
    pub min_overlap: f64,
    pub depth: usize,
    pub guard: f64,
    pub crossings: Vec<Crossing>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SfResult {
    pub sf: i64,
    pub crossings: Vec<Crossing>,
    pub depth: usize,
    pub guard: f64,
}

struct Node {
    x: f64,
    eig: EigDecomp,
    depth: usize,
}

fn decompose(samples: &FamilySamples, x: f64, depth: usize) -> Result<Node, NumError> {
    Ok(Node {
        x,
        eig: eigh(&samples.evaluate_at(x)?)?,
        depth,
    })
}

/// Rotates each degenerate cluster of `next` to the basis closest to `prev`.
fn align_clusters(prev: &CMat, next: &mut EigDecomp) {
    let vals = &next.values;
    let n = vals.len();
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-8 * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end] - vals[end - 1] <= tol {
            end += 1;
        }
        if end - start > 1 {
            let w = next.vectors.columns(start, end - start).into_owned();
            let proj = w.adjoint() * prev;
            let mut order: Vec<usize> = (0..n).collect();
            let weight = |c: usize| proj.column(c).norm_squared();
            order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)));
            let mut basis: Vec<nalgebra::DVector<Complex64>> = Vec::new();
            let candidates = order
                .iter()
                .map(|&c| &w * proj.column(c))
                .chain((0..end - start).map(|c| w.column(c).into_owned()));
            for mut v in candidates {
                if basis.len() == end - start {
                    break;
                }
                for b in &basis {
                    let d = b.dotc(&v);
                    v -= b * d;
                }
                let nv = v.norm();
                if nv > 1e-6 {
                    basis.push(v / Complex64::new(nv, 0.0));
                }
            }
            for (k, b) in basis.into_iter().enumerate() {
                next.vectors.set_column(start + k, &b);
            }
        }
        start = end;
    }
}

/// Overlap-maximising assignment `prev index -> next index` and its smallest overlap.
fn match_nodes(prev: &CMat, next: &CMat) -> (Vec<usize>, f64) {
    let n = prev.ncols();
    let overlap = prev.adjoint() * next;
    let sq = |i: usize, k: usize| overlap[(i, k)].norm_sqr();
    let weights: Vec<i64> = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .map(|(i, k)| (sq(i, k) * 1e12).round() as i64)
        .collect();
    let m = Matrix::from_vec(n, n, weights).expect("square weights");
    let (_, assign) = kuhn_munkres(&m);
    let min = assign
        .iter()
        .enumerate()
        .map(|(i, &k)| sq(i, k))
        .fold(f64::INFINITY, f64::min);
    (assign, min)
}

/// Eigenvalue branches with the default guard band.
pub fn eigen_traces(samples: &FamilySamples) -> Result<EigenFlowTrace, SfError> {
    eigen_traces_with_guard(samples, DEFAULT_GUARD)
}

pub fn eigen_traces_with_guard(samples: &FamilySamples, guard: f64) -> Result<EigenFlowTrace, SfError> {
    let grid = samples.grid();
    let coarse: Vec<Node> = samples
        .matrices()
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            Ok(Node {
                x: grid.x(j),
                eig: eigh(m)?,
                depth: 0,
            })
        })
        .collect::<Result<_, NumError>>()?;

    let n = samples.dim();
    let mut nodes: Vec<Node> = Vec::with_capacity(coarse.len());
    let mut branches: Vec<Vec<usize>> = Vec::with_capacity(coarse.len());
    let mut min_overlap = f64::INFINITY;
    let mut depth = 0;

    let mut iter = coarse.into_iter();
    let first = iter.next().expect("grid has nodes");
    branches.push((0..n).collect());
    nodes.push(first);

    for target in iter {
        // pending holds the right end points still to be reached, nearest last
        let mut pending = vec![target];
        while let Some(mut next) = pending.pop() {
            let prev = nodes.last().unwrap();
            align_clusters(&prev.eig.vectors, &mut next.eig);
            let (assign, ov) = match_nodes(&prev.eig.vectors, &next.eig.vectors);
            if ov < MIN_SQUARED_OVERLAP {
                let d = next.depth.max(prev.depth) + 1;
                if d > MAX_DEPTH {
                    return Err(SfError::VariesTooFast(prev.x, next.x));
                }
                let mid = decompose(samples, 0.5 * (prev.x + next.x), d)?;
                next.depth = next.depth.max(d);
                pending.push(next);
                pending.push(mid);
                continue;
            }
            min_overlap = min_overlap.min(ov);
            depth = depth.max(next.depth);
            let prev_ids = branches.last().unwrap();
            let mut ids = vec![0; n];
            for (i, &k) in assign.iter().enumerate() {
                ids[k] = prev_ids[i];
            }
            branches.push(ids);
            nodes.push(next);
        }
    }

    let x: Vec<f64> = nodes.iter().map(|p| p.x).collect();
    let values: Vec<Vec<f64>> = nodes.into_iter().map(|p| p.eig.values).collect();
    let crossings = count_crossings(&x, &values, &branches, guard);
    Ok(EigenFlowTrace {
        x,
        values,
        branches,
        min_overlap: if min_overlap.is_finite() { min_overlap } else { 1.0 },
        depth,
        guard,
        crossings,
    })
}

/// Sign changes along each branch, skipping values inside the guard band.
fn count_crossings(x: &[f64], values: &[Vec<f64>], branches: &[Vec<usize>], guard: f64) -> Vec<Crossing> {
    let n = values.first().map_or(0, Vec::len);
    let mut last: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut out = Vec::new();
    for (j, (vals, ids)) in values.iter().zip(branches).enumerate() {
        for (k, &v) in vals.iter().enumerate() {
            if v.abs() <= guard {
                continue;
            }
            let b = ids[k];
            if let Some((i, u)) = last[b] {
                if (u < 0.0) != (v < 0.0) {
                    out.push(Crossing {
                        from: i,
                        to: j,
                        x: x[i] + (x[j] - x[i]) * u / (u - v),
                        branch: b,
                        sign: if v > 0.0 { 1 } else { -1 },
                    });
                }
            }
            last[b] = Some((j, v));
        }
    }
    out.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.branch.cmp(&b.branch)));
    out
}

/// Net number of eigenvalues crossing zero upwards.
pub fn spectral_flow(samples: &FamilySamples, guard: f64) -> Result<SfResult, SfError> {
    let signature = endpoint_signature_sf(samples, guard)?;
    let trace = eigen_traces_with_guard(samples, guard)?;
    let sf = trace.crossings.iter().map(|c| c.sign as i64).sum();
    if sf != signature {
        return Err(SfError::OracleMismatch { count: sf, signature });
    }
    Ok(SfResult {
        sf,
        crossings: trace.crossings,
        depth: trace.depth,
        guard,
    })
}

/// CSV with columns `x, lambda_1..lambda_n, branch_1..branch_n`.
pub fn write_trace_csv<W: Write>(trace: &EigenFlowTrace, out: W) -> Result<(), SfError> {
    let n = trace.values.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string()];
    header.extend((1..=n).map(|k| format!("lambda_{k}")));
    header.extend((1..=n).map(|k| format!("branch_{k}")));
    w.write_record(&header)?;
    for ((x, vals), ids) in trace.x.iter().zip(&trace.values).zip(&trace.branches) {
        let mut rec = vec![format!("{x:.12e}")];
        rec.extend(vals.iter().map(|v| format!("{v:.12e}")));
        rec.extend(ids.iter().map(|b| b.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::family::{evaluate, Family, FamilySpec};
    use crate::grid::Grid;

    fn diag(a: f64, b: f64) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(a, 0.0),
            Complex64::new(b, 0.0),
        ]))
    }

    #[test]
    fn straight_branches_cross_at_zero() {
        let fam = Family::custom(2, "diag(x,-x)", |x| diag(x, -x), None);
        let s = FamilySamples::new(Arc::new(fam), &Grid::interval(1.0, 10)).unwrap();
        let t = eigen_traces(&s).unwrap();
        assert_eq!(t.crossings.len(), 2);
        assert!(t.crossings.iter().all(|c| c.x.abs() < 1e-12));
        // branch 0 starts as the negative eigenvalue x and stays the line x
        let first = t.branches[0].iter().position(|&b| b == 0).unwrap();
        assert!(t.values[0][first] < 0.0);
        let last_idx = t.branches.last().unwrap().iter().position(|&b| b == 0).unwrap();
        assert!(t.values.last().unwrap()[last_idx] > 0.0);
        assert_eq!(spectral_flow(&s, 1e-8).unwrap().sf, 0);
    }

    #[test]
    fn pinned_branches_do_not_cross() {
        let s = evaluate(&FamilySpec::pauli_well(), &Grid::interval(6.0, 60)).unwrap();
        let t = eigen_traces(&s).unwrap();
        assert!(t.crossings.is_empty());
        assert!(t.min_overlap >= MIN_SQUARED_OVERLAP);
        for v in &t.values {
            assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn examples() {
        let g = Grid::interval(8.0, 400);
        let sf = |spec| spectral_flow(&evaluate(&spec, &g).unwrap(), 1e-8).unwrap().sf;
        assert_eq!(sf(FamilySpec::ScaledIdentity { n: 1 }), 1);
        assert_eq!(sf(FamilySpec::ScaledIdentity { n: 2 }), 2);
        assert_eq!(sf(FamilySpec::diag_pair()), 0);
        assert_eq!(sf(FamilySpec::AvoidedCrossing { g: 0.2 }), 0);
    }

    #[test]
    fn random_family_refines_within_depth() {
        let s = evaluate(
            &FamilySpec::RandomSmooth {
                n: 4,
                seed: 3,
                degree: 3,
            },
            &Grid::interval(8.0, 50),
        )
        .unwrap();
        let t = eigen_traces(&s).unwrap();
        assert!(t.min_overlap >= MIN_SQUARED_OVERLAP);
        assert!(t.depth <= MAX_DEPTH);
        for ids in &t.branches {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..4).collect::<Vec<_>>());
        }
    }

    #[test]
    fn eigenbasis_jump_is_reported() {
        let n = 5;
        let d = CMat::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| {
            Complex64::new(i as f64 + 1.0, 0.0)
        }));
        let f = CMat::from_fn(n, n, |j, k| {
            Complex64::from_polar(
                1.0 / (n as f64).sqrt(),
                2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64,
            )
        });
        let rotated = &f * &d * f.adjoint();
        let fam = Family::custom(
            n,
            "jump",
            move |x| if x < 0.3 { d.clone() } else { rotated.clone() },
            None,
        );
        let s = FamilySamples::new(Arc::new(fam), &Grid::interval(1.0, 4)).unwrap();
        assert!(matches!(eigen_traces(&s), Err(SfError::VariesTooFast(..))));
    }

    #[test]
    fn csv_layout() {
        let s = evaluate(&FamilySpec::ScaledIdentity { n: 2 }, &Grid::interval(2.0, 4)).unwrap();
        let t = eigen_traces(&s).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,lambda_1,lambda_2,branch_1,branch_2");
        assert_eq!(lines.count(), 5);
    }
}
