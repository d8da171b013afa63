//! Complex exterior algebra of a Euclidean `m`-space and the modified Hodge star.
//!
//! Basis elements are sorted subsets of `{0..m}` stored as bitmasks and ordered
//! lexicographically within each degree. The full algebra is ordered by degree.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::numlin::{op_norm, CMat};

pub const MAX_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HodgeError {
    #[error("fiber dimension {0} outside 1..={MAX_DIM}")]
    DimensionOutOfRange(usize),
    #[error("degree {p} outside 0..={m}")]
    DegreeOutOfRange { p: usize, m: usize },
    #[error("expected {expected} coefficients, found {found}")]
    CoefficientCount { expected: usize, found: usize },
}

fn i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn sign_pow(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `(-1)^{p(p-1)/2} i^{m(m-1)/2}`.
pub fn lambda_coeff(m: usize, p: usize) -> Result<Complex64, HodgeError> {
    if p > m {
        return Err(HodgeError::DegreeOutOfRange { p, m });
    }
    Ok(i_pow(m * (m.saturating_sub(1)) / 2) * sign_pow(p * p.saturating_sub(1) / 2))
}

/// Number of inversions when the subsets `a` and `b` are concatenated and sorted.
fn merge_inversions(a: u32, b: u32) -> u32 {
    let mut count = 0;
    let mut bits = b;
    while bits != 0 {
        let j = bits.trailing_zeros();
        count += (a >> (j + 1)).count_ones();
        bits &= bits - 1;
    }
    count
}

fn merge_sign(a: u32, b: u32) -> f64 {
    sign_pow(merge_inversions(a, b) as usize)
}

#[derive(Debug, Clone)]
pub struct HodgeContext {
    m: usize,
    lambda: Vec<Complex64>,
    basis: Vec<Vec<u32>>,
    // bitmask -> position within its degree
    position: Vec<usize>,
    offsets: Vec<usize>,
}

impl HodgeContext {
    pub fn new(m: usize) -> Result<Self, HodgeError> {
        if !(1..=MAX_DIM).contains(&m) {
            return Err(HodgeError::DimensionOutOfRange(m));
        }
        let lambda = (0..=m).map(|p| lambda_coeff(m, p).unwrap()).collect();
        let mut basis = vec![Vec::new(); m + 1];
        let mut masks: Vec<u32> = (0..(1u32 << m)).collect();
        // lexicographic order of the sorted index lists
        masks.sort_by_key(|&s| {
            let mut idx: Vec<u32> = (0..m as u32).filter(|b| s >> b & 1 == 1).collect();
            idx.push(u32::MAX);
            idx
        });
        for s in masks {
            basis[s.count_ones() as usize].push(s);
        }
        let mut position = vec![0; 1 << m];
        for per_degree in &basis {
            for (k, &s) in per_degree.iter().enumerate() {
                position[s as usize] = k;
            }
        }
        let mut offsets = vec![0; m + 2];
        for p in 0..=m {
            offsets[p + 1] = offsets[p] + basis[p].len();
        }
        Ok(HodgeContext {
            m,
            lambda,
            basis,
            position,
            offsets,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lambda(&self, p: usize) -> Complex64 {
        self.lambda[p]
    }

    /// Bitmasks of the degree-`p` basis in lexicographic order.
    pub fn basis(&self, p: usize) -> &[u32] {
        &self.basis[p]
    }

    pub fn total_dim(&self) -> usize {
        1 << self.m
    }

    /// Position of a basis subset in the full algebra ordering.
    pub fn full_index(&self, mask: u32) -> usize {
        self.offsets[mask.count_ones() as usize] + self.position[mask as usize]
    }

    fn full_mask(&self) -> u32 {
        ((1u64 << self.m) - 1) as u32
    }

    fn check_degree(&self, p: usize) -> Result<(), HodgeError> {
        if p > self.m {
            Err(HodgeError::DegreeOutOfRange { p, m: self.m })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    degree: usize,
    coeffs: Vec<Complex64>,
}

impl Form {
    pub fn new(ctx: &HodgeContext, degree: usize, coeffs: Vec<Complex64>) -> Result<Self, HodgeError> {
        ctx.check_degree(degree)?;
        let expected = ctx.basis(degree).len();
        if coeffs.len() != expected {
            return Err(HodgeError::CoefficientCount {
                expected,
                found: coeffs.len(),
            });
        }
        Ok(Form { degree, coeffs })
    }

    pub fn zero(ctx: &HodgeContext, degree: usize) -> Result<Self, HodgeError> {
        ctx.check_degree(degree)?;
        Ok(Form {
            degree,
            coeffs: vec![Complex64::new(0.0, 0.0); ctx.basis(degree).len()],
        })
    }

    /// The basis element `dx_{i_1} ∧ ... ∧ dx_{i_p}` for zero-based `indices`.
    pub fn basis_element(ctx: &HodgeContext, indices: &[usize]) -> Result<Self, HodgeError> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= ctx.m {
                return Err(HodgeError::DegreeOutOfRange { p: i, m: ctx.m });
            }
            mask |= 1 << i;
        }
        let mut f = Form::zero(ctx, mask.count_ones() as usize)?;
        f.coeffs[ctx.position[mask as usize]] = Complex64::new(1.0, 0.0);
        Ok(f)
    }

    /// Coefficients uniform in the unit square of the complex plane.
    pub fn random(ctx: &HodgeContext, degree: usize, rng: &mut impl Rng) -> Result<Self, HodgeError> {
        ctx.check_degree(degree)?;
        let coeffs = (0..ctx.basis(degree).len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Ok(Form { degree, coeffs })
    }

    pub fn scaled(&self, z: Complex64) -> Form {
        Form {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * z).collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn conj(&self) -> Form {
        Form {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Form) -> f64 {
        if self.degree != other.degree {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Hermitian inner product, linear in the first slot.
    pub fn inner(&self, other: &Form) -> Complex64 {
        assert_eq!(self.degree, other.degree);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum()
    }
}

/// Unmodified Hodge star: `★ e_I = sign(I, I^c) e_{I^c}`.
pub fn hodge_star(ctx: &HodgeContext, w: &Form) -> Form {
    let full = ctx.full_mask();
    let q = ctx.m - w.degree;
    let mut out = vec![Complex64::new(0.0, 0.0); ctx.basis(q).len()];
    for (k, &s) in ctx.basis(w.degree).iter().enumerate() {
        let c = full & !s;
        out[ctx.position[c as usize]] += w.coeffs[k] * merge_sign(s, c);
    }
    Form { degree: q, coeffs: out }
}

/// `λ_p ★` on degree `p`; an involution.
pub fn modified_star(ctx: &HodgeContext, w: &Form) -> Result<Form, HodgeError> {
    ctx.check_degree(w.degree)?;
    let mut f = hodge_star(ctx, w);
    let l = ctx.lambda(w.degree);
    f.coeffs.iter_mut().for_each(|z| *z *= l);
    Ok(f)
}

pub fn wedge(ctx: &HodgeContext, a: &Form, b: &Form) -> Result<Form, HodgeError> {
    let degree = a.degree + b.degree;
    let mut out = Form::zero(ctx, degree)?;
    for (i, &s) in ctx.basis(a.degree).iter().enumerate() {
        if a.coeffs[i] == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (j, &t) in ctx.basis(b.degree).iter().enumerate() {
            if s & t != 0 {
                continue;
            }
            out.coeffs[ctx.position[(s | t) as usize]] += a.coeffs[i] * b.coeffs[j] * merge_sign(s, t);
        }
    }
    Ok(out)
}

/// Matrix of `η ↦ ω ∧ η` on the full algebra.
pub fn ext_matrix(ctx: &HodgeContext, w: &Form) -> CMat {
    let n = ctx.total_dim();
    let mut e = CMat::zeros(n, n);
    for (i, &s) in ctx.basis(w.degree).iter().enumerate() {
        let z = w.coeffs[i];
        if z == Complex64::new(0.0, 0.0) {
            continue;
        }
        for t in 0..(n as u32) {
            if s & t == 0 {
                e[(ctx.full_index(s | t), ctx.full_index(t))] += z * merge_sign(s, t);
            }
        }
    }
    e
}

/// Matrix of the modified star on the full algebra.
pub fn star_matrix(ctx: &HodgeContext) -> CMat {
    let n = ctx.total_dim();
    let full = ctx.full_mask();
    let mut s = CMat::zeros(n, n);
    for t in 0..(n as u32) {
        let c = full & !t;
        let p = t.count_ones() as usize;
        s[(ctx.full_index(c), ctx.full_index(t))] = ctx.lambda(p) * merge_sign(t, c);
    }
    s
}

/// `‖ext(ω)* − (−1)^{p(p−1)/2} ★̃ ext(ω̄) ★̃‖`.
///
/// The star is complex-linear, so the conjugate appears on the right. For real
/// `ω` this is the plain adjoint identity; it is also the form in which
/// `(δf)* = ★̃ δ(f̄) ★̃` holds for complex `f`.
pub fn ext_adjoint_defect(ctx: &HodgeContext, w: &Form) -> f64 {
    let p = w.degree;
    let star = star_matrix(ctx);
    let lhs = ext_matrix(ctx, w).adjoint();
    let rhs = (&star * ext_matrix(ctx, &w.conj()) * &star).scale(sign_pow(p * p.saturating_sub(1) / 2));
    op_norm(&(lhs - rhs))
}

/// `|⟨ω,η⟩ − top coefficient of ω ∧ ★η̄|`.
pub fn pairing_defect(ctx: &HodgeContext, w: &Form, eta: &Form) -> Result<f64, HodgeError> {
    let top = wedge(ctx, w, &hodge_star(ctx, &eta.conj()))?;
    Ok((w.inner(eta) - top.coeffs[0]).norm())
}

/// `max |★̃★̃ω − ω|`.
pub fn star_involution_defect(ctx: &HodgeContext, w: &Form) -> Result<f64, HodgeError> {
    let twice = modified_star(ctx, &modified_star(ctx, w)?)?;
    Ok(twice.max_abs_diff(w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaIdentityReport {
    /// `λ_p λ_{m−p} = (−1)^{p(m−p)}`.
    pub complementary: f64,
    /// `λ_{p+1} = (−1)^p λ_p`.
    pub recursion: f64,
    /// `λ_{p+q} λ_{m−q} = (−1)^{p(p−1)/2 + q(m−p−q)}` for `q ≥ 1`, `p + q ≤ m`.
    pub mixed: f64,
    pub unit_modulus: f64,
}

impl LambdaIdentityReport {
    pub fn max(&self) -> f64 {
        self.complementary
            .max(self.recursion)
            .max(self.mixed)
            .max(self.unit_modulus)
    }
}

/// Maximum deviations of the λ sign identities over all admissible degrees.
pub fn lambda_identity_report(m: usize) -> Result<LambdaIdentityReport, HodgeError> {
    let ctx = HodgeContext::new(m)?;
    let l = |p: usize| ctx.lambda(p);
    let mut rep = LambdaIdentityReport {
        complementary: 0.0,
        recursion: 0.0,
        mixed: 0.0,
        unit_modulus: 0.0,
    };
    for p in 0..=m {
        rep.unit_modulus = rep.unit_modulus.max((l(p).norm() - 1.0).abs());
        let d = (l(p) * l(m - p) - sign_pow(p * (m - p))).norm();
        rep.complementary = rep.complementary.max(d);
        if p < m {
            rep.recursion = rep.recursion.max((l(p + 1) - l(p) * sign_pow(p)).norm());
        }
        for q in 1..=(m - p) {
            let rhs = sign_pow(p * p.saturating_sub(1) / 2 + q * (m - p - q));
            rep.mixed = rep.mixed.max((l(p + q) * l(m - q) - rhs).norm());
        }
    }
    Ok(rep)
}
