//! Projective modules `P·A^k` over a grid algebra and their connections.
//!
//! The total space is `V = ⊕_j C^k` with node-major index `j·k + a`. A section
//! `ξ` is a flat vector in `V` with `P_j ξ_j = ξ_j`. For a scalar grid vector
//! `y`, `M_ξ y` is the node-wise product `(ξ_j y_j)`. The connection applied
//! to `ξ` is realised as the operator `C_ξ = Q·(⊕_i [D, diag ξ_{·,i}]) + Ω M_ξ`
//! from the grid space into `V`, and the total operator is `T = Q(D⊗1)Q + Ω`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dirschrod::{build_d2, D2Variant};
use crate::grid::{Grid, GridFunction, GridKind};
use crate::numlin::{
    block_diag, hermitian_band_extremes, identity, kron, op_norm, BandMatrix, CMat, HermMatrix, NumError,
};
use crate::opstar::approximate_unit_chi;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuleError {
    #[error("projection at node {node} is not a hermitian idempotent (defect {defect:e})")]
    NotProjection { node: usize, defect: f64 },
    #[error("perturbation at node {node} is not compressed by the projection (defect {defect:e})")]
    NotCompressed { node: usize, defect: f64 },
    #[error("section is not in the range of the projections (defect {0:e})")]
    NotASection(f64),
    #[error("connections are defined over different projection paths")]
    PathMismatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("an interval grid is required")]
    IntervalGridRequired,
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Operator(#[from] crate::dirschrod::DirSchrodError),
}

const PROJECTION_TOL: f64 = 1e-12;

fn max_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPath {
    grid: Grid,
    k: usize,
    projections: Vec<CMat>,
}

impl ProjectionPath {
    pub fn new(grid: Grid, projections: Vec<CMat>) -> Result<Self, ModuleError> {
        if projections.len() != grid.len() {
            return Err(ModuleError::DimensionMismatch {
                expected: grid.len(),
                found: projections.len(),
            });
        }
        let k = projections.first().map(|p| p.nrows()).unwrap_or(0);
        for (node, p) in projections.iter().enumerate() {
            if p.shape() != (k, k) {
                return Err(ModuleError::DimensionMismatch {
                    expected: k,
                    found: p.nrows(),
                });
            }
            let defect = max_entry(&(p * p - p)).max(max_entry(&(p - p.adjoint())));
            if defect > PROJECTION_TOL {
                return Err(ModuleError::NotProjection { node, defect });
            }
        }
        Ok(ProjectionPath { grid, k, projections })
    }

    pub fn from_rule(grid: Grid, rule: impl Fn(f64) -> CMat) -> Result<Self, ModuleError> {
        ProjectionPath::new(grid, grid.nodes().into_iter().map(rule).collect())
    }

    pub fn constant(grid: Grid, p: CMat) -> Result<Self, ModuleError> {
        ProjectionPath::new(grid, vec![p; grid.len()])
    }

    /// Rank-one projection onto `(cos θ(x), sin θ(x))`.
    pub fn rotation(grid: Grid, theta: impl Fn(f64) -> f64) -> Result<Self, ModuleError> {
        ProjectionPath::from_rule(grid, |x| rotation_projection(theta(x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fiber_dim(&self) -> usize {
        self.k
    }

    pub fn projections(&self) -> &[CMat] {
        &self.projections
    }

    pub fn total_dim(&self) -> usize {
        self.k * self.projections.len()
    }

    /// `max ‖P_{j+1} − P_j‖ / h` over consecutive nodes (wrapping on periodic grids).
    pub fn lipschitz(&self) -> f64 {
        let n = self.projections.len();
        let pairs = match self.grid.kind() {
            GridKind::Interval => n - 1,
            GridKind::Periodic => n,
        };
        (0..pairs)
            .map(|j| op_norm(&(&self.projections[(j + 1) % n] - &self.projections[j])))
            .fold(0.0, f64::max)
            / self.grid.h()
    }

    /// `Q = blockdiag(P_j)`.
    pub fn total_projection(&self) -> CMat {
        block_diag(&self.projections)
    }

    /// `Q` applied to a flat vector.
    pub fn project(&self, raw: &[Complex64]) -> Vec<Complex64> {
        let k = self.k;
        let mut out = vec![Complex64::new(0.0, 0.0); raw.len()];
        for (j, p) in self.projections.iter().enumerate() {
            for a in 0..k {
                out[j * k + a] = (0..k).map(|b| p[(a, b)] * raw[j * k + b]).sum();
            }
        }
        out
    }

    /// A random section `Q·r` with `r` uniform in the unit square.
    pub fn random_section(&self, rng: &mut impl Rng) -> Vec<Complex64> {
        let raw: Vec<Complex64> = (0..self.total_dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        self.project(&raw)
    }

    /// A random node-wise hermitian perturbation `P_j H_j P_j`.
    pub fn random_hermitian_perturbation(&self, rng: &mut impl Rng) -> Vec<CMat> {
        self.projections
            .iter()
            .map(|p| {
                let h = random_matrix(self.k, rng);
                p * (&h + h.adjoint()) * p
            })
            .collect()
    }

    /// A random node-wise perturbation `P_j H_j P_j` with `H_j` not hermitian.
    pub fn random_general_perturbation(&self, rng: &mut impl Rng) -> Vec<CMat> {
        self.projections
            .iter()
            .map(|p| p * random_matrix(self.k, rng) * p)
            .collect()
    }

    fn check_section(&self, xi: &[Complex64]) -> Result<(), ModuleError> {
        if xi.len() != self.total_dim() {
            return Err(ModuleError::DimensionMismatch {
                expected: self.total_dim(),
                found: xi.len(),
            });
        }
        let q = self.project(xi);
        let scale = xi.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = q.iter().zip(xi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if defect > 1e-12 * scale {
            return Err(ModuleError::NotASection(defect));
        }
        Ok(())
    }
}

fn random_matrix(k: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(k, k, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Rank-one projection onto `(cos θ, e^{iφ} sin θ)`.
pub fn rotation_projection(theta: f64, phi: f64) -> CMat {
    let v = [
        Complex64::new(theta.cos(), 0.0),
        Complex64::from_polar(theta.sin(), phi),
    ];
    CMat::from_fn(2, 2, |a, b| v[a] * v[b].conj())
}

/// `M_ξ`: grid space to `V`, `y ↦ (ξ_j y_j)`.
pub fn section_multiplier(k: usize, xi: &[Complex64]) -> CMat {
    let n = xi.len() / k;
    let mut m = CMat::zeros(n * k, n);
    for j in 0..n {
        for a in 0..k {
            m[(j * k + a, j)] = xi[j * k + a];
        }
    }
    m
}

/// Node-wise product `(ξ_j f_j)`.
pub fn scale_section(k: usize, xi: &[Complex64], f: &GridFunction) -> Vec<Complex64> {
    xi.iter().enumerate().map(|(idx, z)| z * f.values()[idx / k]).collect()
}

#[derive(Debug, Clone)]
pub struct ConnectionOperator {
    path: ProjectionPath,
    d2: HermMatrix,
    omega: Option<Vec<CMat>>,
    total: CMat,
}

/// `T = Q(D⊗1)Q`.
pub fn grassmann_operator(path: &ProjectionPath, d2: &HermMatrix) -> Result<ConnectionOperator, ModuleError> {
    if d2.dim() != path.grid.len() {
        return Err(ModuleError::DimensionMismatch {
            expected: path.grid.len(),
            found: d2.dim(),
        });
    }
    let q = path.total_projection();
    let lift = kron(d2.matrix(), &identity(path.k));
    let total = &q * lift * &q;
    Ok(ConnectionOperator {
        path: path.clone(),
        d2: d2.clone(),
        omega: None,
        total,
    })
}

impl ConnectionOperator {
    /// Adds `Ω = blockdiag(ω_j)`; requires `ω_j = P_j ω_j P_j`.
    pub fn perturbed(&self, omega: Vec<CMat>) -> Result<ConnectionOperator, ModuleError> {
        if omega.len() != self.path.projections.len() {
            return Err(ModuleError::DimensionMismatch {
                expected: self.path.projections.len(),
                found: omega.len(),
            });
        }
        for (node, (w, p)) in omega.iter().zip(&self.path.projections).enumerate() {
            let defect = max_entry(&(p * w * p - w));
            if defect > 1e-12 * (1.0 + max_entry(w)) {
                return Err(ModuleError::NotCompressed { node, defect });
            }
        }
        let mut all = self
            .omega
            .clone()
            .unwrap_or_else(|| vec![CMat::zeros(self.path.k, self.path.k); omega.len()]);
        for (a, w) in all.iter_mut().zip(&omega) {
            *a += w;
        }
        let total = &self.total + block_diag(&omega);
        Ok(ConnectionOperator {
            path: self.path.clone(),
            d2: self.d2.clone(),
            omega: Some(all),
            total,
        })
    }

    pub fn path(&self) -> &ProjectionPath {
        &self.path
    }

    pub fn matrix(&self) -> &CMat {
        &self.total
    }

    pub fn is_grassmann(&self) -> bool {
        self.omega.is_none()
    }

    /// `C_ξ`, built from component commutators rather than from `T`.
    pub fn connection_form(&self, xi: &[Complex64]) -> Result<CMat, ModuleError> {
        self.path.check_section(xi)?;
        let k = self.path.k;
        let n = self.path.projections.len();
        let d = self.d2.matrix();
        let mut g = CMat::zeros(n * k, n);
        for a in 0..k {
            // [D, diag(ξ_{·,a})]_{jl} = D_{jl} (ξ_{l,a} − ξ_{j,a})
            for j in 0..n {
                for l in 0..n {
                    let dj = d[(j, l)];
                    if dj != Complex64::new(0.0, 0.0) {
                        g[(j * k + a, l)] = dj * (xi[l * k + a] - xi[j * k + a]);
                    }
                }
            }
        }
        let mut c = block_diag(&self.path.projections) * g;
        if let Some(omega) = &self.omega {
            c += block_diag(omega) * section_multiplier(k, xi);
        }
        Ok(c)
    }

    /// `‖C_{ξf} − C_ξ π(f) − M_ξ [D, π(f)]‖`.
    pub fn leibniz_defect(&self, xi: &[Complex64], f: &GridFunction) -> Result<f64, ModuleError> {
        let k = self.path.k;
        let xf = scale_section(k, xi, f);
        let fm = f.diag();
        let df = crate::numlin::commutator(self.d2.matrix(), &fm);
        let lhs = self.connection_form(&xf)?;
        let rhs = self.connection_form(xi)? * &fm + section_multiplier(k, xi) * df;
        Ok(op_norm(&(lhs - rhs)))
    }

    /// `‖C_{ξ₁}* M_{ξ₂} − M_{ξ₁}* C_{ξ₂} + [D, ⟨ξ₁, ξ₂⟩]‖`, zero for hermitian connections.
    pub fn hermitian_defect(&self, xi1: &[Complex64], xi2: &[Complex64]) -> Result<f64, ModuleError> {
        let k = self.path.k;
        let m1 = section_multiplier(k, xi1);
        let m2 = section_multiplier(k, xi2);
        let c1 = self.connection_form(xi1)?;
        let c2 = self.connection_form(xi2)?;
        let inner = m1.adjoint() * &m2;
        let d = self.d2.matrix();
        let form = c1.adjoint() * &m2 - m1.adjoint() * c2 + (d * &inner - &inner * d);
        Ok(op_norm(&form))
    }

    /// `‖T M_ξ y − M_ξ D y − C_ξ y‖` for a scalar grid vector `y`.
    pub fn expform_defect(&self, xi: &[Complex64], y: &GridFunction) -> Result<f64, ModuleError> {
        let k = self.path.k;
        let m = section_multiplier(k, xi);
        let yv = nalgebra::DVector::from_column_slice(y.values());
        let lhs = &self.total * (&m * &yv);
        let rhs = &m * (self.d2.matrix() * &yv) + self.connection_form(xi)? * &yv;
        Ok((lhs - rhs).norm())
    }
}

#[derive(Debug, Clone)]
pub struct ConnectionComparison {
    /// `T − T′` on `V`.
    pub difference: CMat,
    pub hermiticity_defect: f64,
    /// `‖[T − T′, π(f)⊗1]‖` for a seeded random grid function `f`.
    pub linearity_defect: f64,
}

impl ConnectionComparison {
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect <= tol
    }

    pub fn is_module_linear(&self, tol: f64) -> bool {
        self.linearity_defect <= tol
    }

    pub fn hermitian_difference(&self) -> Result<HermMatrix, NumError> {
        HermMatrix::new(self.difference.clone())
    }
}

pub fn compare_connections(
    t: &ConnectionOperator,
    t2: &ConnectionOperator,
    seed: u64,
) -> Result<ConnectionComparison, ModuleError> {
    if t.path != t2.path || t.d2 != t2.d2 {
        return Err(ModuleError::PathMismatch);
    }
    let difference = &t.total - &t2.total;
    let hermiticity_defect = max_entry(&(&difference - difference.adjoint()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = GridFunction::new(
        t.path.grid,
        (0..t.path.grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    );
    let fl = kron(&f.diag(), &identity(t.path.k));
    let linearity_defect = max_entry(&(&difference * &fl - &fl * &difference));
    Ok(ConnectionComparison {
        difference,
        hermiticity_defect,
        linearity_defect,
    })
}

/// `sup_j ‖θ_{w,w}(ξ)_j − ξ_j‖` with `w_i = χ_k P e_i`, computed as `Σ_i w_i ⟨w_i, ξ⟩`.
pub fn theta_approx_defect(path: &ProjectionPath, xi: &[Complex64], k: f64) -> Result<f64, ModuleError> {
    if path.grid.kind() != GridKind::Interval {
        return Err(ModuleError::IntervalGridRequired);
    }
    path.check_section(xi)?;
    let chi = approximate_unit_chi(&path.grid, k).map_err(|_| ModuleError::IntervalGridRequired)?;
    let kd = path.k;
    let mut worst: f64 = 0.0;
    for (j, p) in path.projections.iter().enumerate() {
        let c = chi.values()[j];
        let xj = &xi[j * kd..(j + 1) * kd];
        let mut theta = vec![Complex64::new(0.0, 0.0); kd];
        for i in 0..kd {
            // w_i(x_j) = χ P_j e_i
            let w: Vec<Complex64> = (0..kd).map(|a| c * p[(a, i)]).collect();
            let pairing: Complex64 = w.iter().zip(xj).map(|(a, b)| a.conj() * b).sum();
            for a in 0..kd {
                theta[a] += w[a] * pairing;
            }
        }
        let d = theta
            .iter()
            .zip(xj)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub intervals: usize,
    pub h: f64,
    pub norm: f64,
}

/// `‖[Q, D⊗1]‖` for `P` sampled from `rule` on `[-R, R]` at each resolution.
///
/// Uses the central stencil without wrap-around, so rules need not be periodic.
/// Entries are `D_{jl} (P_j − P_l)`; the norm comes from Lanczos on the
/// hermitian banded matrix `i[Q, D⊗1]`.
pub fn projection_commutator_sweep(
    rule: &(dyn Fn(f64) -> CMat + Sync),
    half_width: f64,
    intervals: &[usize],
) -> Result<Vec<SweepPoint>, ModuleError> {
    intervals
        .par_iter()
        .map(|&n| {
            let grid = Grid::interval(half_width, n);
            let path = ProjectionPath::from_rule(grid, rule)?;
            let d = build_d2(n, grid.h(), D2Variant::DirichletCentral)?;
            let k = path.k;
            let mut t = Vec::new();
            for &(j, l, dz) in d.triplets() {
                let diff = &path.projections[j] - &path.projections[l];
                for a in 0..k {
                    for b in 0..k {
                        let z = dz * diff[(a, b)] * Complex64::new(0.0, 1.0);
                        if z != Complex64::new(0.0, 0.0) {
                            t.push((j * k + a, l * k + b, z));
                        }
                    }
                }
            }
            let dim = path.total_dim();
            let norm = if t.is_empty() {
                0.0
            } else {
                let band = BandMatrix::from_triplets(dim, dim, t);
                let (lo, hi) = hermitian_band_extremes(&band, 200)?;
                lo.abs().max(hi.abs())
            };
            Ok(SweepPoint {
                intervals: n,
                h: grid.h(),
                norm,
            })
        })
        .collect()
}

/// Operator norm of the column `(π(f_1); …; π(f_K))` by SVD, next to
/// `sup_j (Σ_i |f_i(x_j)|²)^{1/2}`.
pub fn column_norm_pair(fs: &[GridFunction]) -> (f64, f64) {
    let n = fs[0].len();
    let mut col = CMat::zeros(n * fs.len(), n);
    for (i, f) in fs.iter().enumerate() {
        for j in 0..n {
            col[(i * n + j, j)] = f.values()[j];
        }
    }
    let fiber = (0..n)
        .map(|j| fs.iter().map(|f| f.values()[j].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    (op_norm(&col), fiber)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::eigvalsh;

    fn setup(n: usize, path_kind: u8) -> (ProjectionPath, HermMatrix) {
        let g = Grid::periodic(3.0, n);
        let d = build_d2(n, g.h(), D2Variant::PeriodicCentral)
            .unwrap()
            .hermitian()
            .unwrap();
        let path = match path_kind {
            0 => ProjectionPath::constant(g, identity(2)).unwrap(),
            1 => ProjectionPath::constant(g, rotation_projection(0.4, 0.3)).unwrap(),
            _ => ProjectionPath::from_rule(g, |x| {
                let s = (std::f64::consts::PI * x / 3.0).sin();
                rotation_projection(0.7 * s, 0.5 * (1.0 + s))
            })
            .unwrap(),
        };
        (path, d)
    }

    fn random_fn(g: Grid, rng: &mut impl Rng) -> GridFunction {
        GridFunction::new(
            g,
            (0..g.len())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        )
    }

    #[test]
    fn full_module_gives_lifted_d2() {
        let (path, d) = setup(12, 0);
        let t = grassmann_operator(&path, &d).unwrap();
        let lift = kron(d.matrix(), &identity(2));
        assert!(max_entry(&(t.matrix() - lift)) < 1e-15);
    }

    #[test]
    fn constant_rank_one_keeps_spectrum() {
        let (path, d) = setup(10, 1);
        let t = grassmann_operator(&path, &d).unwrap();
        let vals = eigvalsh(&HermMatrix::new(t.matrix().clone()).unwrap()).unwrap();
        let mut expect = eigvalsh(&d).unwrap();
        expect.extend(std::iter::repeat(0.0).take(10));
        expect.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn grassmann_identities() {
        let (path, d) = setup(16, 2);
        let t = grassmann_operator(&path, &d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let x1 = path.random_section(&mut rng);
            let x2 = path.random_section(&mut rng);
            let f = random_fn(*path.grid(), &mut rng);
            assert!(t.leibniz_defect(&x1, &f).unwrap() <= 1e-11);
            assert!(t.hermitian_defect(&x1, &x2).unwrap() <= 1e-11);
            assert!(t.expform_defect(&x1, &f).unwrap() <= 1e-10);
        }
        let one = GridFunction::constant(*path.grid(), Complex64::new(2.0, 0.0));
        let x = path.random_section(&mut rng);
        assert!(t.leibniz_defect(&x, &one).unwrap() < 1e-12);
    }

    #[test]
    fn perturbations() {
        let (path, d) = setup(12, 2);
        let t = grassmann_operator(&path, &d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = path.random_hermitian_perturbation(&mut rng);
        let tp = t.perturbed(w.clone()).unwrap();
        let x1 = path.random_section(&mut rng);
        let x2 = path.random_section(&mut rng);
        let f = random_fn(*path.grid(), &mut rng);
        assert!(tp.leibniz_defect(&x1, &f).unwrap() <= 1e-11);
        assert!(tp.hermitian_defect(&x1, &x2).unwrap() <= 1e-11);

        let cmp = compare_connections(&tp, &t, 1).unwrap();
        assert!(cmp.is_hermitian(1e-11) && cmp.is_module_linear(1e-11));
        let sup = w.iter().map(op_norm).fold(0.0, f64::max);
        assert!((op_norm(&cmp.difference) - sup).abs() < 1e-10);

        let bad = t.perturbed(path.random_general_perturbation(&mut rng)).unwrap();
        assert!(bad.hermitian_defect(&x1, &x2).unwrap() > 1e-6);
        let cmp = compare_connections(&bad, &t, 1).unwrap();
        assert!(!cmp.is_hermitian(1e-11));
        assert!(cmp.hermitian_difference().is_err());

        let same = compare_connections(&t, &t, 1).unwrap();
        assert_eq!(max_entry(&same.difference), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::periodic(1.0, 4);
        let mut p = identity(2);
        p[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            ProjectionPath::constant(g, p),
            Err(ModuleError::NotProjection { .. })
        ));
        let (path, d) = setup(8, 1);
        let t = grassmann_operator(&path, &d).unwrap();
        assert!(t.perturbed(vec![identity(2); 8]).is_err());
        let raw = vec![Complex64::new(1.0, 0.0); 16];
        assert!(t.connection_form(&raw).is_err());
    }

    #[test]
    fn theta_defect_decreases() {
        let g = Grid::interval(6.0, 120);
        let path = ProjectionPath::rotation(g, |x| x.atan()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xi = path.random_section(&mut rng);
        for (j, x) in g.nodes().iter().enumerate() {
            if x.abs() > 4.5 {
                xi[2 * j] = Complex64::new(0.0, 0.0);
                xi[2 * j + 1] = Complex64::new(0.0, 0.0);
            }
        }
        let xi = path.project(&xi);
        let mut last = f64::INFINITY;
        for k in [1.0, 2.0, 3.0, 6.0] {
            let d = theta_approx_defect(&path, &xi, k).unwrap();
            assert!(d <= last + 1e-15);
            last = d;
        }
        assert!(last <= 1e-9);
        let zero = vec![Complex64::new(0.0, 0.0); xi.len()];
        assert_eq!(theta_approx_defect(&path, &zero, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn commutator_sweep_bounded() {
        let rule = |x: f64| rotation_projection(x.atan(), 0.0);
        let pts = projection_commutator_sweep(&rule, 8.0, &[100, 200, 400]).unwrap();
        for p in &pts {
            assert!(p.norm <= 1.0 + 0.1, "{p:?}");
            assert!(p.norm >= 0.8, "{p:?}");
        }
        let flat = |_: f64| rotation_projection(0.3, 0.0);
        let pts = projection_commutator_sweep(&flat, 8.0, &[50]).unwrap();
        assert_eq!(pts[0].norm, 0.0);
    }

    #[test]
    fn column_norm_matches_fiber_sup() {
        let g = Grid::interval(2.0, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fs: Vec<GridFunction> = (0..3).map(|_| random_fn(g, &mut rng)).collect();
        let (a, b) = column_norm_pair(&fs);
        assert!((a - b).abs() < 1e-10);
    }
}
