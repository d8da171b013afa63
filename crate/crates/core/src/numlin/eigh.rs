use num_complex::Complex64;

use super::{CMat, EigDecomp, HermMatrix, NumError};

const MAX_QL_SWEEPS: usize = 60;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a hermitian matrix.
pub fn eigh(h: &HermMatrix) -> Result<EigDecomp, NumError> {
    let n = h.dim();
    if n == 0 {
        return Ok(EigDecomp {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        });
    }
    let tri = tridiagonalize(h.matrix(), true);
    let mut d = tri.diag;
    let mut e = tri.offdiag;
    let mut z = tri.q.expect("requested");
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| z[i + order[j] * n]);
    Ok(EigDecomp { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(h: &HermMatrix) -> Result<Vec<f64>, NumError> {
    let n = h.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let tri = tridiagonalize(h.matrix(), false);
    let mut d = tri.diag;
    let mut e = tri.offdiag;
    ql_implicit(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

struct Tridiagonal {
    diag: Vec<f64>,
    /// `offdiag[k]` couples `k` and `k + 1`; last entry is zero.
    offdiag: Vec<f64>,
    /// Column-major `Q D`, so that `A = (QD) T (QD)*` with real `T`.
    q: Option<Vec<Complex64>>,
}

/// Householder reduction of a hermitian matrix to real symmetric tridiagonal form.
fn tridiagonalize(h: &CMat, want_q: bool) -> Tridiagonal {
    let n = h.nrows();
    let mut a: Vec<Complex64> = h.as_slice().to_vec();
    let idx = |i: usize, j: usize| i + j * n;
    let zero = Complex64::new(0.0, 0.0);

    let mut sub = vec![zero; n];
    let mut reflectors: Vec<(usize, Vec<Complex64>, f64)> = Vec::new();
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];

    for k in 0..n.saturating_sub(1) {
        let m = n - k - 1;
        if m == 1 {
            sub[k] = a[idx(k + 1, k)];
            continue;
        }
        let col = &a[idx(k + 1, k)..idx(n, k)];
        let alpha = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if alpha == 0.0 {
            sub[k] = zero;
            continue;
        }
        let x0 = col[0];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let v = &mut v[..m];
        v.copy_from_slice(col);
        v[0] += phase * alpha;
        let vnorm2 = 2.0 * alpha * (alpha + x0.norm());
        let tau = 2.0 / vnorm2;

        // p = tau * B v, B the trailing block
        let p = &mut p[..m];
        p.iter_mut().for_each(|z| *z = zero);
        for (jj, &vj) in v.iter().enumerate() {
            if vj == zero {
                continue;
            }
            let base = idx(k + 1, k + 1 + jj);
            let colj = &a[base..base + m];
            for (pi, &bij) in p.iter_mut().zip(colj) {
                *pi += bij * vj;
            }
        }
        p.iter_mut().for_each(|z| *z *= tau);
        let vp: Complex64 = v.iter().zip(p.iter()).map(|(vi, pi)| vi.conj() * pi).sum();
        let kk = 0.5 * tau * vp.re;
        // w = p - K v;  B -= v w* + w v*
        let w: Vec<Complex64> = p.iter().zip(v.iter()).map(|(pi, vi)| pi - kk * vi).collect();
        for jj in 0..m {
            let wj = w[jj].conj();
            let vj = v[jj].conj();
            let base = idx(k + 1, k + 1 + jj);
            let colj = &mut a[base..base + m];
            for ii in 0..m {
                colj[ii] -= v[ii] * wj + w[ii] * vj;
            }
        }
        let newsub = -phase * alpha;
        a[idx(k + 1, k)] = newsub;
        a[idx(k, k + 1)] = newsub.conj();
        for ii in (k + 2)..n {
            a[idx(ii, k)] = zero;
            a[idx(k, ii)] = zero;
        }
        sub[k] = newsub;
        if want_q {
            reflectors.push((k, v.to_vec(), tau));
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[idx(i, i)].re).collect();

    // Phases that make the off-diagonal real and nonnegative.
    let mut phases = vec![Complex64::new(1.0, 0.0); n];
    let mut offdiag = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let s = sub[k];
        let r = s.norm();
        offdiag[k] = r;
        phases[k + 1] = if r > 0.0 { phases[k] * (s / r) } else { phases[k] };
    }

    let q = want_q.then(|| {
        let mut q = vec![zero; n * n];
        for i in 0..n {
            q[idx(i, i)] = Complex64::new(1.0, 0.0);
        }
        // Q = P_0 P_1 ...; apply from the right: Q[:, k+1..] -= tau (Q[:, k+1..] v) v*
        let mut qv = vec![zero; n];
        for (k, v, tau) in &reflectors {
            let off = k + 1;
            qv.iter_mut().for_each(|z| *z = zero);
            for (jj, &vj) in v.iter().enumerate() {
                let base = idx(0, off + jj);
                for (acc, &qij) in qv.iter_mut().zip(&q[base..base + n]) {
                    *acc += qij * vj;
                }
            }
            for (jj, &vj) in v.iter().enumerate() {
                let c = vj.conj() * *tau;
                let base = idx(0, off + jj);
                for (qij, &acc) in q[base..base + n].iter_mut().zip(qv.iter()) {
                    *qij -= acc * c;
                }
            }
        }
        for (j, ph) in phases.iter().enumerate() {
            for z in &mut q[idx(0, j)..idx(0, j) + n] {
                *z *= ph;
            }
        }
        q
    });

    Tridiagonal { diag, offdiag, q }
}

/// Implicit QL iteration with Wilkinson-type shifts on a real symmetric tridiagonal matrix.
/// Rotations are accumulated into the columns of `z` (column-major, `n x n`) when given.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Vec<Complex64>>) -> Result<(), NumError> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(NumError::NoConvergence("implicit QL"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    let (left, right) = z.split_at_mut((i + 1) * n);
                    let zi = &mut left[i * n..];
                    let zi1 = &mut right[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f = *b;
                        *b = *a * s + f * c;
                        *a = *a * c - f * s;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
