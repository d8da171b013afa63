//! Identity suites run by `sflab verify` and by the acceptance tests.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dirschrod::{
    build_d2, correspondence_check, dirac_schrodinger_pair, kucerovsky_check, product_operator, sf_index_verify,
    sf_index_verify_gauged, D2Variant, VerifyRecord, DEFAULT_MU,
};
use crate::exterior_hodge::{
    ext_adjoint_defect, lambda_identity_report, pairing_defect, star_involution_defect, Form, HodgeContext,
};
use crate::family::{endpoint_signature_sf, evaluate, Family, FamilySamples, FamilySpec, DEFAULT_GUARD};
use crate::grid::{Grid, GridFunction};
use crate::numlin::{eigvalsh, negative_count, CMat, HermMatrix};
use crate::opmodule::{
    compare_connections, grassmann_operator, projection_commutator_sweep, rotation_projection, ProjectionPath,
};
use crate::opstar::{leibniz_defect, matrix_level_norm, product_ratio, rho_embed, MatrixLevelMap};
use crate::spectral_flow::spectral_flow;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    /// Largest defect among the tolerance checks.
    pub max_defect: f64,
    pub runtime_ms: u128,
    /// The first few failures.
    pub notes: Vec<String>,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    name: String,
    start: Instant,
    checks: usize,
    failures: usize,
    max_defect: f64,
    notes: Vec<String>,
}

impl Tally {
    fn new(name: &str) -> Self {
        Tally {
            name: name.into(),
            start: Instant::now(),
            checks: 0,
            failures: 0,
            max_defect: 0.0,
            notes: Vec::new(),
        }
    }

    fn ok(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.notes.len() < 10 {
                self.notes.push(what());
            }
        }
    }

    fn defect(&mut self, d: f64, tol: f64, what: impl FnOnce() -> String) {
        if d.is_finite() {
            self.max_defect = self.max_defect.max(d);
        }
        self.ok(d <= tol, || format!("{}: defect {d:e} > {tol:e}", what()));
    }

    fn fail(&mut self, what: String) {
        self.ok(false, || what);
    }

    fn finish(self) -> SuiteOutcome {
        SuiteOutcome {
            name: self.name,
            checks: self.checks,
            failures: self.failures,
            max_defect: self.max_defect,
            runtime_ms: self.start.elapsed().as_millis(),
            notes: self.notes,
        }
    }
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub const HODGE_TOL: f64 = 1e-12;

/// Modified-star involution, adjoint of exterior multiplication, the pairing
/// and the λ sign identities, on `forms` random forms spread over `m ≤ 6`.
pub fn hodge_suite(seed: u64, forms: usize) -> SuiteOutcome {
    let mut t = Tally::new("hodge");
    let mut r = rng(seed, 1);
    let contexts: Vec<HodgeContext> = (1..=6).map(|m| HodgeContext::new(m).expect("m <= 6")).collect();
    for ctx in &contexts {
        match lambda_identity_report(ctx.m()) {
            Ok(rep) => t.defect(rep.max(), HODGE_TOL, || format!("λ identities m={}", ctx.m())),
            Err(e) => t.fail(e.to_string()),
        }
    }
    let cases: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|k| (0..=contexts[k].m()).map(move |p| (k, p)))
        .collect();
    for i in 0..forms {
        let (k, p) = cases[i % cases.len()];
        let ctx = &contexts[k];
        let (w, eta) = match (Form::random(ctx, p, &mut r), Form::random(ctx, p, &mut r)) {
            (Ok(w), Ok(eta)) => (w, eta),
            (Err(e), _) | (_, Err(e)) => {
                t.fail(e.to_string());
                continue;
            }
        };
        let label = || format!("m={} p={p} form {i}", ctx.m());
        match star_involution_defect(ctx, &w) {
            Ok(d) => t.defect(d, HODGE_TOL, || format!("★̃² {}", label())),
            Err(e) => t.fail(e.to_string()),
        }
        t.defect(ext_adjoint_defect(ctx, &w), HODGE_TOL, || {
            format!("ext adjoint {}", label())
        });
        match pairing_defect(ctx, &w, &eta) {
            Ok(d) => t.defect(d, HODGE_TOL, || format!("pairing {}", label())),
            Err(e) => t.fail(e.to_string()),
        }
    }
    t.finish()
}

fn random_grid_fn(g: Grid, r: &mut impl Rng) -> GridFunction {
    GridFunction::new(
        g,
        (0..g.len())
            .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
            .collect(),
    )
}

/// Leibniz rule, involution compatibility and submultiplicativity of the
/// derivation norm for random functions on periodic grids.
pub fn derivation_suite(seed: u64, instances: usize) -> SuiteOutcome {
    let mut t = Tally::new("derivations");
    let mut r = rng(seed, 2);
    for i in 0..instances {
        let n = 16 + 4 * (i % 5);
        let g = Grid::periodic(3.0, n);
        let d = match build_d2(n, g.h(), D2Variant::PeriodicCentral).and_then(|d| d.hermitian()) {
            Ok(d) => d,
            Err(e) => {
                t.fail(e.to_string());
                continue;
            }
        };
        let f = random_grid_fn(g, &mut r);
        let h = random_grid_fn(g, &mut r);
        match leibniz_defect(&f, &h, &d) {
            Ok(v) => t.defect(v, 1e-11, || format!("leibniz instance {i}")),
            Err(e) => t.fail(e.to_string()),
        }
        match rho_embed(&f, &d) {
            Ok(rho) => t.defect(rho.involution_defect, 1e-12, || format!("involution instance {i}")),
            Err(e) => t.fail(e.to_string()),
        }
        match product_ratio(&f, &h, &d) {
            Ok(v) => t.ok(v <= 1.0 + 1e-12, || format!("product ratio {v} > 1, instance {i}")),
            Err(e) => t.fail(e.to_string()),
        }
    }
    t.finish()
}

/// Transpose map at level 2 and the column-space ceiling on random maps.
pub fn cb_norm_suite(seed: u64, maps: usize) -> SuiteOutcome {
    let mut t = Tally::new("cb_norm");
    let transpose = MatrixLevelMap::transpose(2);
    let level2 = matrix_level_norm(&transpose, 2, 60, seed);
    t.ok(level2 >= 2.0 - 1e-6, || {
        format!("transpose level-2 estimate {level2} < 2 - 1e-6")
    });
    let level1 = matrix_level_norm(&transpose, 1, 20, seed);
    t.defect((level1 - 1.0).abs(), 1e-9, || "transpose level 1".into());
    let mut r = rng(seed, 3);
    for i in 0..maps {
        let n = 1 + i % 4;
        let (rows, cols) = (1 + (i / 4) % 3, 1 + (i / 12) % 3);
        let a = MatrixLevelMap::random_on_column_space(n, rows, cols, &mut r);
        let ceiling = a.column_space_ceiling();
        for level in 1..=3 {
            let v = matrix_level_norm(&a, level, 20, seed.wrapping_add(i as u64));
            t.ok(v <= ceiling * (1.0 + 1e-9), || {
                format!("map {i} (N={n}) level {level}: {v} exceeds ceiling {ceiling}")
            });
        }
        t.defect(a.linearity_defect(&mut r), 1e-12, || format!("linearity map {i}"));
    }
    t.finish()
}

pub const CONNECTION_TOL: f64 = 1e-11;

/// Leibniz and hermitian defects of Grassmann connections and their
/// hermitian perturbations, hermiticity of their differences, and the
/// uniform bound of `[D, P]` under grid refinement.
pub fn connection_suite(seed: u64, instances: usize) -> SuiteOutcome {
    let mut t = Tally::new("connections");
    let mut r = rng(seed, 4);
    for i in 0..instances {
        let n = 12 + 2 * (i % 4);
        let g = Grid::periodic(3.0, n);
        let d = match build_d2(n, g.h(), D2Variant::PeriodicCentral).and_then(|d| d.hermitian()) {
            Ok(d) => d,
            Err(e) => {
                t.fail(e.to_string());
                continue;
            }
        };
        let (a, b, c) = (r.gen_range(-1.0..1.0), r.gen_range(0.2..1.5), r.gen_range(0.0..3.0));
        let path = match ProjectionPath::from_rule(g, |x| {
            let s = (std::f64::consts::PI * x / 3.0 + c).sin();
            rotation_projection(a + b * s, 0.5 * (1.0 + s))
        }) {
            Ok(p) => p,
            Err(e) => {
                t.fail(e.to_string());
                continue;
            }
        };
        let base = match grassmann_operator(&path, &d) {
            Ok(op) => op,
            Err(e) => {
                t.fail(e.to_string());
                continue;
            }
        };
        let op = if i % 2 == 0 {
            base.clone()
        } else {
            match base.perturbed(path.random_hermitian_perturbation(&mut r)) {
                Ok(op) => op,
                Err(e) => {
                    t.fail(e.to_string());
                    continue;
                }
            }
        };
        let x1 = path.random_section(&mut r);
        let x2 = path.random_section(&mut r);
        let f = random_grid_fn(g, &mut r);
        match op.leibniz_defect(&x1, &f) {
            Ok(v) => t.defect(v, CONNECTION_TOL, || format!("leibniz instance {i}")),
            Err(e) => t.fail(e.to_string()),
        }
        match op.hermitian_defect(&x1, &x2) {
            Ok(v) => t.defect(v, CONNECTION_TOL, || format!("hermitian instance {i}")),
            Err(e) => t.fail(e.to_string()),
        }
        match op.expform_defect(&x1, &f) {
            Ok(v) => t.defect(v, 1e-10, || format!("expform instance {i}")),
            Err(e) => t.fail(e.to_string()),
        }
        match compare_connections(&op, &base, seed.wrapping_add(i as u64)) {
            Ok(cmp) => {
                t.defect(cmp.hermiticity_defect, CONNECTION_TOL, || {
                    format!("difference hermiticity {i}")
                });
                t.defect(cmp.linearity_defect, CONNECTION_TOL, || {
                    format!("difference linearity {i}")
                });
            }
            Err(e) => t.fail(e.to_string()),
        }
    }
    // sup |θ′| = 1 for θ = atan
    let rule = |x: f64| rotation_projection(x.atan(), 0.0);
    match projection_commutator_sweep(&rule, 8.0, &[250, 500, 1000, 2000]) {
        Ok(points) => {
            for p in points {
                t.ok(p.norm.is_finite() && p.norm <= 1.1, || {
                    format!("commutator norm {} at h={} exceeds the uniform bound", p.norm, p.h)
                });
            }
        }
        Err(e) => t.fail(e.to_string()),
    }
    t.finish()
}

/// The builtin family battery with its expected spectral flow.
pub fn battery() -> Vec<(FamilySpec, i64)> {
    vec![
        (FamilySpec::ScaledIdentity { n: 1 }, 1),
        (FamilySpec::ScaledIdentity { n: 2 }, 2),
        (FamilySpec::ScaledIdentity { n: 3 }, 3),
        (FamilySpec::diag_pair(), 0),
        (FamilySpec::pauli_well(), 0),
        (
            FamilySpec::TruncatedHarmonic {
                k0: 5,
                t_start: -0.45,
                t_end: 0.45,
            },
            1,
        ),
    ]
}

/// Random smooth families of fiber dimension `1..=5`.
pub fn random_battery(count: usize, seed: u64) -> Vec<FamilySpec> {
    (0..count as u64)
        .map(|k| FamilySpec::RandomSmooth {
            n: 1 + (k % 5) as usize,
            seed: seed.wrapping_add(k),
            degree: 3,
        })
        .collect()
}

fn dirac_schrodinger_samples(spec: &FamilySpec) -> Result<FamilySamples, String> {
    let n = Family::new(spec).map_err(|e| e.to_string())?.dim();
    let intervals = (360 / n).clamp(24, 80);
    evaluate(spec, &Grid::interval(6.0, intervals)).map_err(|e| e.to_string())
}

fn random_herm(n: usize, r: &mut impl Rng) -> HermMatrix {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    });
    HermMatrix::hermitian_part(&g).expect("finite")
}

/// Grading, hermiticity and factorisation of the product operator on random
/// pairs and on the Dirac-Schrödinger pairs of the battery.
pub fn product_suite(seed: u64) -> SuiteOutcome {
    let mut t = Tally::new("product_operator");
    let mut r = rng(seed, 5);
    let mut pairs: Vec<(String, HermMatrix, HermMatrix)> = (0..20)
        .map(|i| {
            let n = 2 + i % 6;
            (
                format!("random pair {i}"),
                random_herm(n, &mut r),
                random_herm(n, &mut r),
            )
        })
        .collect();
    for (spec, _) in battery() {
        match dirac_schrodinger_samples(&spec).and_then(|s| dirac_schrodinger_pair(&s).map_err(|e| e.to_string())) {
            Ok((s, tm)) => pairs.push((spec.label(), s, tm)),
            Err(e) => t.fail(format!("{}: {e}", spec.label())),
        }
    }
    for (label, s, tm) in &pairs {
        match product_operator(s, tm) {
            Ok(p) => {
                t.defect(p.hermitian_defect, 1e-12, || format!("{label}: hermiticity"));
                t.ok(p.grading_defect == 0.0, || {
                    format!("{label}: grading defect {}", p.grading_defect)
                });
                t.defect(p.factorization_defect, 1e-10, || format!("{label}: factorisation"));
                if s.dim() <= 64 {
                    match eigvalsh(&p.d) {
                        Ok(ev) => {
                            let scale = ev.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                            let asym = ev
                                .iter()
                                .zip(ev.iter().rev())
                                .map(|(a, b)| (a + b).abs())
                                .fold(0.0, f64::max);
                            t.defect(asym / scale, 1e-10, || format!("{label}: spectral symmetry"));
                        }
                        Err(e) => t.fail(e.to_string()),
                    }
                }
            }
            Err(e) => t.fail(format!("{label}: {e}")),
        }
    }
    t.finish()
}

/// Kucerovsky positivity and the Gårding bound on the battery.
pub fn kucerovsky_suite(seed: u64) -> SuiteOutcome {
    let mut t = Tally::new("kucerovsky");
    let mut r = rng(seed, 6);
    let mut pairs: Vec<(String, HermMatrix, HermMatrix)> = Vec::new();
    for (spec, _) in battery() {
        match dirac_schrodinger_samples(&spec).and_then(|s| dirac_schrodinger_pair(&s).map_err(|e| e.to_string())) {
            Ok((s, tm)) => pairs.push((spec.label(), s, tm)),
            Err(e) => t.fail(format!("{}: {e}", spec.label())),
        }
    }
    for i in 0..10 {
        let n = 2 + i % 5;
        pairs.push((
            format!("random pair {i}"),
            random_herm(n, &mut r),
            random_herm(n, &mut r),
        ));
    }
    for (label, s, tm) in &pairs {
        match product_operator(s, tm).and_then(|p| kucerovsky_check(&p)) {
            Ok(rep) => {
                t.ok(rep.pass, || {
                    format!(
                        "{label}: C_obs {} vs C_bound {}, Gårding margin {}",
                        rep.c_obs, rep.c_bound, rep.garding_margin
                    )
                });
                t.defect((rep.c_obs - rep.c_bound).max(0.0), rep.c_bound * 1e-6 + 1e-10, || {
                    format!("{label}: C_obs above C_bound")
                });
            }
            Err(e) => t.fail(format!("{label}: {e}")),
        }
    }
    t.finish()
}

/// `‖[S,T](S − iμ)⁻¹‖` against the resolvent bound and the resolvent
/// commutator identity, on the battery.
pub fn correspondence_suite(mus: &[f64]) -> SuiteOutcome {
    let mut t = Tally::new("correspondence");
    for (spec, _) in battery() {
        let label = spec.label();
        let pair = dirac_schrodinger_samples(&spec).and_then(|s| dirac_schrodinger_pair(&s).map_err(|e| e.to_string()));
        let (s, tm) = match pair {
            Ok(p) => p,
            Err(e) => {
                t.fail(format!("{label}: {e}"));
                continue;
            }
        };
        match correspondence_check(&s, &tm, mus) {
            Ok(rep) => {
                t.ok(rep.sup.is_finite(), || format!("{label}: sup not finite"));
                for p in &rep.points {
                    let bound = rep.commutator_norm / p.mu.abs();
                    t.defect((p.norm - bound).max(0.0), 1e-9, || {
                        format!("{label}: resolvent bound at μ={}", p.mu)
                    });
                }
                t.defect(rep.max_identity_defect, 1e-10, || {
                    format!("{label}: resolvent identity")
                });
                t.ok(rep.decreasing, || format!("{label}: norms increase with |μ|"));
            }
            Err(e) => t.fail(format!("{label}: {e}")),
        }
    }
    t.finish()
}

/// Every suite that `sflab verify` runs.
pub fn verify_all(seed: u64) -> Vec<SuiteOutcome> {
    vec![
        hodge_suite(seed, 1000),
        derivation_suite(seed, 50),
        cb_norm_suite(seed, 50),
        connection_suite(seed, 200),
        product_suite(seed),
        kucerovsky_suite(seed),
        correspondence_suite(&DEFAULT_MU),
    ]
}

/// Crossing count against the endpoint signature, concatenation at random
/// split points, path reversal, and endpoint-preserving perturbations.
pub fn sf_oracle_suite(seed: u64, families: usize, splits: usize) -> SuiteOutcome {
    let mut t = Tally::new("sf_oracle");
    let mut r = rng(seed, 7);
    let grid = Grid::interval(8.0, 400);
    let specs = random_battery(families, seed);
    let mut sampled = Vec::new();
    for spec in &specs {
        let label = spec.label();
        let s = match evaluate(spec, &grid) {
            Ok(s) => s,
            Err(e) => {
                t.fail(format!("{label}: {e}"));
                continue;
            }
        };
        let count = spectral_flow(&s, DEFAULT_GUARD).map(|x| x.sf);
        let oracle = endpoint_signature_sf(&s, DEFAULT_GUARD);
        match (count, oracle) {
            (Ok(a), Ok(b)) => {
                t.ok(a == b, || format!("{label}: crossings {a} vs signature {b}"));
                sampled.push((s, a));
            }
            (Err(e), _) => t.fail(format!("{label}: {e}")),
            (_, Err(e)) => t.fail(format!("{label}: {e}")),
        }
    }
    if sampled.is_empty() {
        return t.finish();
    }
    let mut done = 0;
    let mut attempts = 0;
    while done < splits && attempts < 20 * splits {
        attempts += 1;
        let (s, total) = &sampled[r.gen_range(0..sampled.len())];
        let j = r.gen_range(1..grid.intervals());
        if negative_count(&s.matrices()[j], DEFAULT_GUARD).is_err() {
            continue;
        }
        done += 1;
        let left = spectral_flow(&s.slice(0, j), DEFAULT_GUARD).map(|x| x.sf);
        let right = spectral_flow(&s.slice(j, grid.intervals()), DEFAULT_GUARD).map(|x| x.sf);
        let back = spectral_flow(&s.reversed(), DEFAULT_GUARD).map(|x| x.sf);
        match (left, right, back) {
            (Ok(a), Ok(b), Ok(c)) => {
                t.ok(a + b == *total, || format!("split at node {j}: {a} + {b} != {total}"));
                t.ok(c == -total, || format!("reversed path gives {c}, expected {}", -total));
            }
            _ => t.fail(format!("split at node {j} failed to evaluate")),
        }
    }
    t.ok(done == splits, || format!("only {done} invertible split points found"));

    // endpoint-preserving perturbations
    for k in 0..splits {
        let (s, total) = &sampled[k % sampled.len()];
        let base = s.family().clone();
        let n = base.dim();
        let mut h = random_herm(n, &mut r);
        h = HermMatrix::new(h.matrix().scale(0.5)).expect("hermitian");
        let r_half = grid.half_width();
        let hm = h.matrix().clone();
        let fam = Family::custom(
            n,
            "perturbed",
            move |x| {
                let u = (x / r_half).clamp(-1.0, 1.0);
                base.matrix(x) + hm.scale((1.0 - u * u).powi(2))
            },
            None,
        );
        match FamilySamples::new(Arc::new(fam), &grid) {
            Ok(p) => match spectral_flow(&p, DEFAULT_GUARD) {
                Ok(res) => t.ok(res.sf == *total, || {
                    format!("perturbation {k}: sf {} vs {total}", res.sf)
                }),
                Err(e) => t.fail(format!("perturbation {k}: {e}")),
            },
            Err(e) => t.fail(format!("perturbation {k}: {e}")),
        }
    }
    t.finish()
}

/// Spectral flow against the APS index on the battery and `random` random families.
pub fn index_battery(random: usize, lambda: f64, r: f64, n: usize, tol: f64) -> (SuiteOutcome, Vec<VerifyRecord>) {
    let mut t = Tally::new("sf_equals_index");
    let mut records = Vec::new();
    let mut specs: Vec<(FamilySpec, Option<i64>)> = battery().into_iter().map(|(s, e)| (s, Some(e))).collect();
    specs.extend(random_battery(random, 0).into_iter().map(|s| (s, None)));
    for (spec, expected) in specs {
        match sf_index_verify(&spec, lambda, r, n, tol) {
            Ok(rec) => {
                t.ok(rec.equal, || {
                    format!("{}: sf {} vs index {}", rec.spec, rec.sf, rec.index)
                });
                if let Some(e) = expected {
                    t.ok(rec.sf == e, || format!("{}: sf {} expected {e}", rec.spec, rec.sf));
                }
                records.push(rec);
            }
            Err(e) => t.fail(format!("{}: {e}", spec.label())),
        }
    }
    (t.finish(), records)
}

/// Index invariance under ψ-gauging, `λ` and `R` on the battery.
pub fn stability_suite(lambdas: &[f64], radii: &[f64], tol: f64) -> SuiteOutcome {
    let mut t = Tally::new("stability");
    for (spec, expected) in battery() {
        for &r in radii {
            let n = (100.0 * r).round() as usize;
            for &lambda in lambdas {
                for window in [None, Some((-2.0, 2.0))] {
                    let cell = format!("{} λ={lambda} R={r} gauge={}", spec.label(), window.is_some());
                    match sf_index_verify_gauged(&spec, lambda, r, n, tol, window) {
                        Ok(rec) => t.ok(rec.index == expected && rec.equal, || {
                            format!("{cell}: index {} sf {}", rec.index, rec.sf)
                        }),
                        Err(e) => t.fail(format!("{cell}: {e}")),
                    }
                }
            }
        }
    }
    t.finish()
}
