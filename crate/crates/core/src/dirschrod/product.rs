use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{build_d2, D2Variant, DirSchrodError};
use crate::family::FamilySamples;
use crate::numlin::{block_diag, commutator, eigh, eigvalsh, fro_norm, identity, kron, op_norm, CMat, HermMatrix};

/// `D = [[0, S − iT], [S + iT, 0]]` with grading `γ = diag(I, −I)`.
#[derive(Debug, Clone)]
pub struct ProductOperator {
    pub s: HermMatrix,
    pub t: HermMatrix,
    pub d: HermMatrix,
    /// `‖D − D*‖_F`.
    pub hermitian_defect: f64,
    /// `‖Dγ + γD‖_F`.
    pub grading_defect: f64,
    /// `‖(S − iT)(S + iT) − S² − T² − i[S,T]‖ / (‖S‖ + ‖T‖)²`.
    pub factorization_defect: f64,
}

fn i_times(m: &CMat) -> CMat {
    m.map(|z| Complex64::new(-z.im, z.re))
}

pub fn product_operator(s: &HermMatrix, t: &HermMatrix) -> Result<ProductOperator, DirSchrodError> {
    let n = s.dim();
    if t.dim() != n {
        return Err(DirSchrodError::InvalidParameter(format!(
            "S is {n}x{n} but T is {0}x{0}",
            t.dim()
        )));
    }
    let (sm, tm) = (s.matrix(), t.matrix());
    let minus = sm - i_times(tm);
    let plus = sm + i_times(tm);
    let mut d = CMat::zeros(2 * n, 2 * n);
    d.view_mut((0, n), (n, n)).copy_from(&minus);
    d.view_mut((n, 0), (n, n)).copy_from(&plus);
    let hermitian_defect = fro_norm(&(&d - d.adjoint()));
    let mut gamma = identity(2 * n);
    for k in n..2 * n {
        gamma[(k, k)] = Complex64::new(-1.0, 0.0);
    }
    let grading_defect = fro_norm(&(&d * &gamma + &gamma * &d));
    let scale = (op_norm(sm) + op_norm(tm)).max(f64::MIN_POSITIVE).powi(2);
    let expected = sm * sm + tm * tm + i_times(&commutator(sm, tm));
    let factorization_defect = op_norm(&(&minus * &plus - expected)) / scale;
    Ok(ProductOperator {
        s: s.clone(),
        t: t.clone(),
        d: HermMatrix::hermitian_part(&d)?,
        hermitian_defect,
        grading_defect,
        factorization_defect,
    })
}

impl ProductOperator {
    pub fn verified(&self) -> bool {
        self.hermitian_defect <= 1e-12 && self.grading_defect == 0.0 && self.factorization_defect <= 1e-10
    }
}

/// `S = blockdiag(A(x_j))` and `T = D₂ ⊗ I_n` with the Dirichlet central stencil.
pub fn dirac_schrodinger_pair(samples: &FamilySamples) -> Result<(HermMatrix, HermMatrix), DirSchrodError> {
    let blocks: Vec<CMat> = samples.matrices().iter().map(|m| m.matrix().clone()).collect();
    let s = HermMatrix::hermitian_part(&block_diag(&blocks))?;
    let g = samples.grid();
    let d2 = build_d2(g.intervals(), g.h(), D2Variant::DirichletCentral)?;
    let t = HermMatrix::hermitian_part(&kron(&d2.dense(), &identity(samples.dim())))?;
    Ok((s, t))
}

pub const DEFAULT_MU: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondencePoint {
    pub mu: f64,
    /// `‖[S,T](S − iμ)⁻¹‖`.
    pub norm: f64,
    /// `‖TR − RT − R[S,T]R‖ / (‖T‖‖R‖)` with `R = (S − iμ)⁻¹`.
    pub identity_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceReport {
    pub points: Vec<CorrespondencePoint>,
    pub sup: f64,
    pub commutator_norm: f64,
    /// Norms do not increase with `|μ|` (up to 1e-9).
    pub decreasing: bool,
    pub max_identity_defect: f64,
}

pub fn correspondence_check(
    s: &HermMatrix,
    t: &HermMatrix,
    mus: &[f64],
) -> Result<CorrespondenceReport, DirSchrodError> {
    if s.dim() != t.dim() {
        return Err(DirSchrodError::InvalidParameter("S and T differ in size".into()));
    }
    if mus.is_empty() || mus.iter().any(|m| *m == 0.0 || !m.is_finite()) {
        return Err(DirSchrodError::InvalidParameter(
            "μ values must be finite and nonzero".into(),
        ));
    }
    let e = eigh(s)?;
    let c = commutator(s.matrix(), t.matrix());
    let t_norm = op_norm(t.matrix());
    let mut points = Vec::new();
    for &mu in mus {
        let r = e.apply_fn(|lam| Complex64::new(1.0, 0.0) / Complex64::new(lam, -mu));
        let norm = op_norm(&(&c * &r));
        let tr = t.matrix() * &r;
        let rt = &r * t.matrix();
        let rcr = &r * &c * &r;
        let r_norm = 1.0 / mu.abs();
        let identity_defect = op_norm(&(tr - rt - rcr)) / (t_norm * r_norm).max(f64::MIN_POSITIVE);
        points.push(CorrespondencePoint {
            mu,
            norm,
            identity_defect,
        });
    }
    let mut by_abs = points.clone();
    by_abs.sort_by(|a, b| a.mu.abs().total_cmp(&b.mu.abs()));
    Ok(CorrespondenceReport {
        sup: points.iter().map(|p| p.norm).fold(0.0, f64::max),
        commutator_norm: op_norm(&c),
        decreasing: by_abs.windows(2).all(|w| w[1].norm <= w[0].norm + 1e-9),
        max_identity_defect: points.iter().map(|p| p.identity_defect).fold(0.0, f64::max),
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KucerovskyReport {
    /// Minus the smallest eigenvalue of `D S̃ + S̃ D`, `S̃ = [[0, S], [S, 0]]`.
    pub c_obs: f64,
    /// `‖[S,T]‖`.
    pub c_bound: f64,
    /// Smallest `‖(S ± iT)z‖² − ½‖Sz‖² − ‖Tz‖² + C_bound‖z‖²` over unit probes.
    pub garding_margin: f64,
    pub probes: usize,
    pub pass: bool,
}

pub fn kucerovsky_check(op: &ProductOperator) -> Result<KucerovskyReport, DirSchrodError> {
    let n = op.s.dim();
    let s = op.s.matrix();
    let t = op.t.matrix();
    let c = commutator(s, t);
    let ic = i_times(&c);
    let s2 = (s * s).scale(2.0);
    let upper = &s2 + &ic;
    let lower = &s2 - &ic;
    let lo_upper = eigvalsh(&HermMatrix::hermitian_part(&upper)?)?[0];
    let lo_lower = eigvalsh(&HermMatrix::hermitian_part(&lower)?)?[0];
    let c_obs = -lo_upper.min(lo_lower);
    let c_bound = op_norm(&c);
    let s_norm = op_norm(s);
    let floor = 1e-10 * s_norm.powi(2).max(1.0).max(op_norm(t).powi(2));

    let mut probes: Vec<DVector<Complex64>> = Vec::new();
    let es = eigh(&op.s)?;
    let et = eigh(&op.t)?;
    for k in 0..n {
        probes.push(es.vectors.column(k).into_owned());
        probes.push(et.vectors.column(k).into_owned());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a4d);
    for _ in 0..8 {
        let v = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let nv = v.norm();
        probes.push(v / Complex64::new(nv, 0.0));
    }
    let plus = s + i_times(t);
    let minus = s - i_times(t);
    let mut margin = f64::INFINITY;
    for z in &probes {
        let rhs = 0.5 * (s * z).norm_squared() + (t * z).norm_squared() - c_bound;
        let lhs = (&plus * z).norm_squared().min((&minus * z).norm_squared());
        margin = margin.min(lhs - rhs);
    }
    let pass = c_obs <= c_bound * (1.0 + 1e-6) + floor && margin >= -floor;
    Ok(KucerovskyReport {
        c_obs,
        c_bound,
        garding_margin: margin,
        probes: probes.len(),
        pass,
    })
}

/// `F = H (1 + H²)^{-1/2}`.
pub fn bounded_transform(h: &HermMatrix) -> Result<CMat, DirSchrodError> {
    let e = eigh(h)?;
    Ok(e.apply_fn(|l| Complex64::new(l / (1.0 + l * l).sqrt(), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{evaluate, FamilySpec};
    use crate::grid::Grid;

    fn random_herm(n: usize, seed: u64) -> HermMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        HermMatrix::hermitian_part(&(&g + g.adjoint())).unwrap()
    }

    fn diag(v: &[f64]) -> HermMatrix {
        HermMatrix::from_real_diagonal(v)
    }

    fn sorted_eigs(m: &HermMatrix) -> Vec<f64> {
        eigvalsh(m).unwrap()
    }

    #[test]
    fn grading_and_symmetry() {
        let p = product_operator(&random_herm(5, 1), &random_herm(5, 2)).unwrap();
        assert!(p.verified());
        let ev = sorted_eigs(&p.d);
        for (a, b) in ev.iter().zip(ev.iter().rev()) {
            assert!((a + b).abs() < 1e-10);
        }
        assert!(product_operator(&random_herm(3, 1), &random_herm(4, 1)).is_err());
    }

    #[test]
    fn degenerate_cases() {
        let s = diag(&[1.0, -2.0, 3.0]);
        let zero = diag(&[0.0; 3]);
        let ev = sorted_eigs(&product_operator(&s, &zero).unwrap().d);
        let want = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        assert!(ev.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
        let ev = sorted_eigs(&product_operator(&zero, &s).unwrap().d);
        assert!(ev.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
        let t = diag(&[0.5, 1.0, -1.0]);
        let ev = sorted_eigs(&product_operator(&s, &t).unwrap().d);
        let mut sq: Vec<f64> = [1.25f64, 5.0, 10.0].iter().map(|v| v.sqrt()).collect();
        sq.extend(sq.clone().iter().map(|v| -v));
        sq.sort_by(f64::total_cmp);
        assert!(ev.iter().zip(&sq).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn correspondence_commuting_and_resolvent_identity() {
        let s = diag(&[1.0, 2.0, -1.0]);
        let t = diag(&[3.0, 0.0, 1.0]);
        let rep = correspondence_check(&s, &t, &DEFAULT_MU).unwrap();
        assert!(rep.sup == 0.0);
        let rep = correspondence_check(&random_herm(6, 3), &random_herm(6, 4), &DEFAULT_MU).unwrap();
        assert!(rep.max_identity_defect < 1e-10);
        assert!(rep.decreasing);
        assert!(correspondence_check(&s, &t, &[0.0]).is_err());
    }

    #[test]
    fn dirac_schrodinger_commutator_bound() {
        let s = evaluate(&FamilySpec::ScaledIdentity { n: 1 }, &Grid::interval(6.0, 120)).unwrap();
        let (sm, tm) = dirac_schrodinger_pair(&s).unwrap();
        let rep = correspondence_check(&sm, &tm, &DEFAULT_MU).unwrap();
        assert!(rep.decreasing);
        assert!(rep.max_identity_defect < 1e-10);
        for p in &rep.points {
            assert!(p.norm <= 1.0 / p.mu * 1.05, "{p:?}");
        }
    }

    #[test]
    fn kucerovsky_examples() {
        let s = diag(&[1.0, -2.0]);
        let t = diag(&[0.3, 4.0]);
        let rep = kucerovsky_check(&product_operator(&s, &t).unwrap()).unwrap();
        assert!(rep.pass && rep.c_obs <= 1e-10);
        let rep = kucerovsky_check(&product_operator(&random_herm(5, 8), &diag(&[0.0; 5])).unwrap()).unwrap();
        assert!(rep.pass);
        let samples = evaluate(&FamilySpec::ScaledIdentity { n: 1 }, &Grid::interval(6.0, 80)).unwrap();
        let (sm, tm) = dirac_schrodinger_pair(&samples).unwrap();
        let rep = kucerovsky_check(&product_operator(&sm, &tm).unwrap()).unwrap();
        assert!(rep.pass);
        assert!(rep.c_obs <= 1.0 + 1e-6);
        let rep = kucerovsky_check(&product_operator(&random_herm(6, 11), &random_herm(6, 12)).unwrap()).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn bounded_transform_examples() {
        let f = bounded_transform(&diag(&[0.0, 0.0])).unwrap();
        assert!(f.iter().all(|z| z.norm() == 0.0));
        let f = bounded_transform(&diag(&[2.0, -2.0])).unwrap();
        let v = 2.0 / 5f64.sqrt();
        assert!((f[(0, 0)].re - v).abs() < 1e-15 && (f[(1, 1)].re + v).abs() < 1e-15);
        let h = random_herm(6, 5);
        let f = bounded_transform(&h).unwrap();
        assert!(op_norm(&f) < 1.0);
        let lhs = identity(6) - &f * &f;
        let rhs = eigh(&h).unwrap().apply_fn(|l| Complex64::new(1.0 / (1.0 + l * l), 0.0));
        assert!(op_norm(&(lhs - rhs)) < 1e-10);
        assert!(op_norm(&commutator(&f, h.matrix())) < 1e-10);
    }
}
