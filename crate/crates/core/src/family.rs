//! Hermitian matrix families `x ↦ A(x)` on the line, their samples on a grid,
//! assumption diagnostics and the growth gauge `ψ`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridFunction, GridKind};
use crate::numlin::{eigvalsh, identity, negative_count, op_norm, CMat, HermMatrix, NumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("invalid family parameter: {0}")]
    InvalidParameter(String),
    #[error("an interval grid is required")]
    IntervalGridRequired,
    #[error("endpoint x = {x}: eigenvalue {eigenvalue:e} inside guard band {guard:e}")]
    EndpointGuard { x: f64, eigenvalue: f64, guard: f64 },
    #[error("window [{0}, {1}] is not inside the grid")]
    BadWindow(f64, f64),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// A matrix entry in configuration files: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> Complex64 {
        match self {
            Entry::Real(r) => Complex64::new(r, 0.0),
            Entry::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixSpec(pub Vec<Vec<Entry>>);

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<CMat, FamilyError> {
        let n = self.0.len();
        if n == 0 || self.0.iter().any(|r| r.len() != n) {
            return Err(FamilyError::InvalidParameter(
                "matrix must be square and non-empty".into(),
            ));
        }
        Ok(CMat::from_fn(n, n, |i, j| self.0[i][j].value()))
    }

    pub fn from_matrix(m: &CMat) -> Self {
        MatrixSpec(
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| {
                            let z = m[(i, j)];
                            if z.im == 0.0 {
                                Entry::Real(z.re)
                            } else {
                                Entry::Complex([z.re, z.im])
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

fn default_degree() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `tanh(x) I_n`.
    ScaledIdentity { n: usize },
    /// `tanh(x) S + sech(x) B`.
    TanhWell { s: MatrixSpec, b: MatrixSpec },
    /// `diag(tanh x, −tanh x) + g σ₁`.
    AvoidedCrossing { g: f64 },
    /// Trigonometric polynomial in `πτ/2`, `τ = tanh(x/2)`, with random hermitian
    /// coefficients and a constant shift keeping the limits invertible.
    RandomSmooth {
        n: usize,
        seed: u64,
        #[serde(default = "default_degree")]
        degree: usize,
    },
    /// `diag(j − K₀)_{j=0..2K₀} + t(x) I` with `t` running from `t_start` to
    /// `t_end` along `(1 + tanh x)/2`.
    TruncatedHarmonic { k0: usize, t_start: f64, t_end: f64 },
    /// `x`-independent matrix.
    Constant { a: MatrixSpec },
}

fn pauli(k: u8) -> CMat {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

impl FamilySpec {
    /// `diag(tanh x, −tanh x)`.
    pub fn diag_pair() -> Self {
        FamilySpec::TanhWell {
            s: MatrixSpec::from_matrix(&pauli(3)),
            b: MatrixSpec::from_matrix(&CMat::zeros(2, 2)),
        }
    }

    /// `tanh(x) σ₃ + sech(x) σ₁`.
    pub fn pauli_well() -> Self {
        FamilySpec::TanhWell {
            s: MatrixSpec::from_matrix(&pauli(3)),
            b: MatrixSpec::from_matrix(&pauli(1)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FamilySpec::ScaledIdentity { n } => format!("scaled_identity(n={n})"),
            FamilySpec::TanhWell { .. } => "tanh_well".into(),
            FamilySpec::AvoidedCrossing { g } => format!("avoided_crossing(g={g})"),
            FamilySpec::RandomSmooth { n, seed, .. } => format!("random_smooth(n={n},seed={seed})"),
            FamilySpec::TruncatedHarmonic { k0, .. } => format!("truncated_harmonic(k0={k0})"),
            FamilySpec::Constant { .. } => "constant".into(),
        }
    }
}

type MatrixFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;

#[derive(Clone)]
enum Kind {
    TanhWell {
        s: CMat,
        b: CMat,
    },
    RandomSmooth {
        cos: Vec<CMat>,
        sin: Vec<CMat>,
        shift: f64,
    },
    Harmonic {
        diag: Vec<f64>,
        t0: f64,
        t1: f64,
    },
    Constant(CMat),
    Custom {
        value: MatrixFn,
        derivative: Option<MatrixFn>,
    },
}

/// An evaluable family with its fiber dimension.
#[derive(Clone)]
pub struct Family {
    n: usize,
    label: String,
    kind: Kind,
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Family")
            .field("n", &self.n)
            .field("label", &self.label)
            .finish()
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn random_hermitian(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> CMat {
    let mut g = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            g[(i, j)] = Complex64::new(re, im);
        }
    }
    (&g + g.adjoint()).scale(0.5 * scale / (n as f64).sqrt())
}

const RANDOM_MARGIN: f64 = 0.25;

fn min_abs_eig(m: &CMat) -> Result<f64, NumError> {
    let v = eigvalsh(&HermMatrix::hermitian_part(m)?)?;
    Ok(v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min))
}

impl Family {
    pub fn new(spec: &FamilySpec) -> Result<Self, FamilyError> {
        let label = spec.label();
        match spec {
            FamilySpec::ScaledIdentity { n } => {
                if *n == 0 {
                    return Err(FamilyError::InvalidParameter("n must be positive".into()));
                }
                Ok(Family {
                    n: *n,
                    label,
                    kind: Kind::TanhWell {
                        s: identity(*n),
                        b: CMat::zeros(*n, *n),
                    },
                })
            }
            FamilySpec::TanhWell { s, b } => {
                let s = HermMatrix::new(s.to_matrix()?)?.into_matrix();
                let b = HermMatrix::new(b.to_matrix()?)?.into_matrix();
                if s.shape() != b.shape() {
                    return Err(FamilyError::InvalidParameter("S and B differ in size".into()));
                }
                Ok(Family {
                    n: s.nrows(),
                    label,
                    kind: Kind::TanhWell { s, b },
                })
            }
            FamilySpec::AvoidedCrossing { g } => {
                if !g.is_finite() {
                    return Err(FamilyError::InvalidParameter("g must be finite".into()));
                }
                Ok(Family {
                    n: 2,
                    label,
                    kind: Kind::TanhWell {
                        s: pauli(3),
                        b: CMat::zeros(2, 2),
                    }
                    .with_constant(pauli(1).scale(*g)),
                })
            }
            FamilySpec::RandomSmooth { n, seed, degree } => {
                if *n == 0 || *n > 64 || *degree > 16 {
                    return Err(FamilyError::InvalidParameter(
                        "random_smooth needs 1 <= n <= 64 and degree <= 16".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut cos = Vec::new();
                let mut sin = Vec::new();
                for m in 0..=*degree {
                    let scale = 1.0 / (m as f64 + 1.0);
                    cos.push(random_hermitian(*n, scale, &mut rng));
                    sin.push(random_hermitian(*n, scale, &mut rng));
                }
                let mut fam = Family {
                    n: *n,
                    label,
                    kind: Kind::RandomSmooth { cos, sin, shift: 0.0 },
                };
                let left = fam.at_tau(-1.0);
                let right = fam.at_tau(1.0);
                let bound = op_norm(&left).max(op_norm(&right)) + 2.0 * RANDOM_MARGIN;
                let mut shift = None;
                let mut k = 0usize;
                while shift.is_none() {
                    for cand in [k as f64 * 0.05, -(k as f64) * 0.05] {
                        let id = identity(*n).scale(cand);
                        if min_abs_eig(&(&left + &id))? >= RANDOM_MARGIN
                            && min_abs_eig(&(&right + &id))? >= RANDOM_MARGIN
                        {
                            shift = Some(cand);
                            break;
                        }
                    }
                    k += 1;
                    if k as f64 * 0.05 > bound {
                        shift = Some(bound);
                    }
                }
                if let Kind::RandomSmooth { shift: s, .. } = &mut fam.kind {
                    *s = shift.unwrap();
                }
                Ok(fam)
            }
            FamilySpec::TruncatedHarmonic { k0, t_start, t_end } => {
                if !(t_start.is_finite() && t_end.is_finite()) || *k0 > 200 {
                    return Err(FamilyError::InvalidParameter(
                        "truncated_harmonic needs finite endpoints and k0 <= 200".into(),
                    ));
                }
                let diag = (0..=2 * k0).map(|j| j as f64 - *k0 as f64).collect();
                Ok(Family {
                    n: 2 * k0 + 1,
                    label,
                    kind: Kind::Harmonic {
                        diag,
                        t0: *t_start,
                        t1: *t_end,
                    },
                })
            }
            FamilySpec::Constant { a } => {
                let a = HermMatrix::new(a.to_matrix()?)?.into_matrix();
                Ok(Family {
                    n: a.nrows(),
                    label,
                    kind: Kind::Constant(a),
                })
            }
        }
    }

    /// A family from closures; without a derivative, difference quotients are used.
    pub fn custom(
        n: usize,
        label: impl Into<String>,
        value: impl Fn(f64) -> CMat + Send + Sync + 'static,
        derivative: Option<MatrixFn>,
    ) -> Self {
        Family {
            n,
            label: label.into(),
            kind: Kind::Custom {
                value: Arc::new(value),
                derivative,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn at_tau(&self, tau: f64) -> CMat {
        match &self.kind {
            Kind::RandomSmooth { cos, sin, shift } => {
                let mut a = identity(self.n).scale(*shift);
                for (m, (c, s)) in cos.iter().zip(sin).enumerate() {
                    let arg = std::f64::consts::FRAC_PI_2 * m as f64 * tau;
                    a += c.scale(arg.cos()) + s.scale(arg.sin());
                }
                a
            }
            _ => unreachable!("only random families are parametrised by tau"),
        }
    }

    /// `A(x)`, hermitian up to rounding.
    pub fn matrix(&self, x: f64) -> CMat {
        match &self.kind {
            Kind::TanhWell { s, b } => s.scale(x.tanh()) + b.scale(sech(x)),
            Kind::RandomSmooth { .. } => self.at_tau((x / 2.0).tanh()),
            Kind::Harmonic { diag, t0, t1 } => {
                let t = t0 + (t1 - t0) * 0.5 * (1.0 + x.tanh());
                CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                    diag.len(),
                    diag.iter().map(|d| Complex64::new(d + t, 0.0)),
                ))
            }
            Kind::Constant(a) => a.clone(),
            Kind::Custom { value, .. } => value(x),
        }
    }

    pub fn herm(&self, x: f64) -> Result<HermMatrix, NumError> {
        HermMatrix::hermitian_part(&self.matrix(x))
    }

    /// `A′(x)`; closed form for builtins, central difference for custom families.
    pub fn derivative(&self, x: f64) -> CMat {
        match &self.kind {
            Kind::TanhWell { s, b } => s.scale(sech(x).powi(2)) - b.scale(x.tanh() * sech(x)),
            Kind::RandomSmooth { cos, sin, .. } => {
                let tau = (x / 2.0).tanh();
                let dtau = 0.5 * (1.0 - tau * tau);
                let mut a = CMat::zeros(self.n, self.n);
                for (m, (c, s)) in cos.iter().zip(sin).enumerate() {
                    let w = std::f64::consts::FRAC_PI_2 * m as f64;
                    let arg = w * tau;
                    a += (s.scale(arg.cos()) - c.scale(arg.sin())).scale(w * dtau);
                }
                a
            }
            Kind::Harmonic { t0, t1, .. } => identity(self.n).scale((t1 - t0) * 0.5 * sech(x).powi(2)),
            Kind::Constant(a) => CMat::zeros(a.nrows(), a.ncols()),
            Kind::Custom { value, derivative } => match derivative {
                Some(d) => d(x),
                None => {
                    let e = 1e-6;
                    (value(x + e) - value(x - e)).scale(0.5 / e)
                }
            },
        }
    }
}

impl Kind {
    fn with_constant(self, c: CMat) -> Kind {
        match self {
            Kind::TanhWell { s, b } => {
                let value: MatrixFn = Arc::new(move |x: f64| s.scale(x.tanh()) + b.scale(sech(x)) + &c);
                Kind::Custom {
                    value,
                    derivative: Some(Arc::new(|x: f64| pauli(3).scale(sech(x).powi(2)))),
                }
            }
            other => other,
        }
    }
}

/// Samples of a family on an interval grid.
#[derive(Debug, Clone)]
pub struct FamilySamples {
    family: Arc<Family>,
    grid: Grid,
    a: Vec<HermMatrix>,
    scale: Option<Vec<f64>>,
}

pub fn evaluate(spec: &FamilySpec, grid: &Grid) -> Result<FamilySamples, FamilyError> {
    FamilySamples::new(Arc::new(Family::new(spec)?), grid)
}

impl FamilySamples {
    pub fn new(family: Arc<Family>, grid: &Grid) -> Result<Self, FamilyError> {
        if grid.kind() != GridKind::Interval {
            return Err(FamilyError::IntervalGridRequired);
        }
        let a = grid
            .nodes()
            .into_iter()
            .map(|x| family.herm(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FamilySamples {
            family,
            grid: *grid,
            a,
            scale: None,
        })
    }

    /// The family multiplied node-wise by `ψ⁻¹`.
    pub fn gauged(&self, psi: &GridFunction) -> Result<Self, FamilyError> {
        if psi.len() != self.a.len() {
            return Err(FamilyError::InvalidParameter("ψ does not match the grid".into()));
        }
        let inv: Vec<f64> = psi.values().iter().map(|z| 1.0 / z.re).collect();
        if inv.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FamilyError::InvalidParameter("ψ must be positive".into()));
        }
        let a = self
            .a
            .iter()
            .zip(&inv)
            .map(|(m, s)| HermMatrix::new(m.matrix().scale(*s)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FamilySamples {
            family: self.family.clone(),
            grid: self.grid,
            a,
            scale: Some(inv),
        })
    }

    pub fn family(&self) -> &Arc<Family> {
        &self.family
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn matrices(&self) -> &[HermMatrix] {
        &self.a
    }

    /// `(A_{j+1} − A_j)/h` per interval.
    pub fn differences(&self) -> Vec<CMat> {
        let h = self.grid.h();
        self.a
            .windows(2)
            .map(|w| (w[1].matrix() - w[0].matrix()).scale(1.0 / h))
            .collect()
    }

    /// Re-evaluates the family at an arbitrary point; gauged samples are
    /// interpolated linearly in the gauge factor.
    pub fn evaluate_at(&self, x: f64) -> Result<HermMatrix, NumError> {
        let m = self.family.matrix(x);
        let m = match &self.scale {
            None => m,
            Some(inv) => {
                let h = self.grid.h();
                let t = ((x + self.grid.half_width()) / h).clamp(0.0, (inv.len() - 1) as f64);
                let j = (t.floor() as usize).min(inv.len() - 2);
                let w = t - j as f64;
                m.scale(inv[j] * (1.0 - w) + inv[j + 1] * w)
            }
        };
        HermMatrix::hermitian_part(&m)
    }

    /// The same family restricted to nodes `lo..=hi`, re-centred so the
    /// sub-interval is symmetric about the origin.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        assert!(lo < hi && hi < self.a.len());
        let n = hi - lo;
        let half = 0.5 * n as f64 * self.grid.h();
        let shift = self.grid.x(lo) + half;
        let fam = self.family.clone();
        let shifted = Family::custom(
            fam.dim(),
            fam.label().to_string(),
            {
                let f = fam.clone();
                move |x| f.matrix(x + shift)
            },
            Some(Arc::new(move |x| fam.derivative(x + shift))),
        );
        FamilySamples {
            family: Arc::new(shifted),
            grid: Grid::interval(half, n),
            a: self.a[lo..=hi].to_vec(),
            scale: self.scale.as_ref().map(|s| s[lo..=hi].to_vec()),
        }
    }

    /// The path traversed backwards.
    pub fn reversed(&self) -> Self {
        let fam = self.family.clone();
        let rev = Family::custom(
            fam.dim(),
            format!("{} reversed", fam.label()),
            {
                let f = fam.clone();
                move |x| f.matrix(-x)
            },
            Some(Arc::new({
                let f = fam;
                move |x| -f.derivative(-x)
            })),
        );
        let mut a = self.a.clone();
        a.reverse();
        let scale = self.scale.as_ref().map(|s| s.iter().rev().copied().collect());
        FamilySamples {
            family: Arc::new(rev),
            grid: self.grid,
            a,
            scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `max_j ‖(A_{j+1} − A_j)/h‖`.
    pub derivative_bound: f64,
    /// `max_j ‖A(x_j)‖`.
    pub sup_norm: f64,
    /// `min |eig A(x_j)|` over nodes outside the window.
    pub gap_outside: f64,
    /// `min |eig A(x_j)|` over nodes inside the window.
    pub gap_inside: f64,
    pub window: (f64, f64),
    pub bounded_derivative: bool,
    pub bounded: bool,
    pub invertible_at_infinity: bool,
}

pub const DEFAULT_GUARD: f64 = 1e-8;

pub fn assumption_report(samples: &FamilySamples, window: (f64, f64)) -> Result<AssumptionReport, FamilyError> {
    let (a, b) = window;
    if !(a <= b) {
        return Err(FamilyError::BadWindow(a, b));
    }
    let derivative_bound = samples.differences().iter().map(op_norm).fold(0.0, f64::max);
    let mut sup_norm: f64 = 0.0;
    let mut outside = f64::INFINITY;
    let mut inside = f64::INFINITY;
    for (x, m) in samples.grid.nodes().into_iter().zip(&samples.a) {
        let v = eigvalsh(m)?;
        let gap = v.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
        sup_norm = sup_norm.max(v[0].abs().max(v[v.len() - 1].abs()));
        if x < a || x > b {
            outside = outside.min(gap);
        } else {
            inside = inside.min(gap);
        }
    }
    Ok(AssumptionReport {
        derivative_bound,
        sup_norm,
        gap_outside: if outside.is_finite() { outside } else { 0.0 },
        gap_inside: if inside.is_finite() { inside } else { 0.0 },
        window,
        bounded_derivative: derivative_bound.is_finite(),
        bounded: sup_norm.is_finite(),
        invertible_at_infinity: outside.is_finite() && outside > DEFAULT_GUARD,
    })
}

/// `max_j ‖A′(x_j)‖` from the closed-form derivative.
pub fn analytic_derivative_bound(samples: &FamilySamples) -> f64 {
    samples
        .grid
        .nodes()
        .into_iter()
        .map(|x| op_norm(&samples.family.derivative(x)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct Gauge {
    pub psi: GridFunction,
    /// `max_j |ψ⁻¹_{j+1} − ψ⁻¹_j| / h`.
    pub inverse_slope: f64,
}

/// `ψ⁻¹(x) = 1 + dist(x, window)`: equal to 1 on the window, 1-Lipschitz.
pub fn gauge_psi(grid: &Grid, window: (f64, f64)) -> Result<Gauge, FamilyError> {
    let (a, b) = window;
    let r = grid.half_width();
    if !(a <= b) || a < -r - 1e-12 || b > r + 1e-12 {
        return Err(FamilyError::BadWindow(a, b));
    }
    let inv: Vec<f64> = grid
        .nodes()
        .into_iter()
        .map(|x| 1.0 + (a - x).max(0.0) + (x - b).max(0.0))
        .collect();
    let h = grid.h();
    let inverse_slope = inv.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max);
    Ok(Gauge {
        psi: GridFunction::new(*grid, inv.iter().map(|v| Complex64::new(1.0 / v, 0.0)).collect()),
        inverse_slope,
    })
}

/// `n₋(A(x_first)) − n₋(A(x_last))`.
pub fn endpoint_signature_sf(samples: &FamilySamples, guard: f64) -> Result<i64, FamilyError> {
    let first = &samples.a[0];
    let last = &samples.a[samples.a.len() - 1];
    let count = |m: &HermMatrix, x: f64| -> Result<i64, FamilyError> {
        negative_count(m, guard).map(|c| c as i64).map_err(|e| match e {
            NumError::GuardBand { eigenvalue, guard } => FamilyError::EndpointGuard { x, eigenvalue, guard },
            other => other.into(),
        })
    };
    let nodes = samples.grid.len();
    Ok(count(first, samples.grid.x(0))? - count(last, samples.grid.x(nodes - 1))?)
}
