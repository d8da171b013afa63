use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sflab::dirschrod::{assemble_aps, build_d2, fredholm_index, product_operator, D2Variant, DEFAULT_TOL};
use sflab::exterior_hodge::{pairing_defect, star_involution_defect, Form, HodgeContext};
use sflab::family::{endpoint_signature_sf, evaluate, gauge_psi, FamilySpec, DEFAULT_GUARD};
use sflab::grid::{Grid, GridFunction};
use sflab::numlin::{eigvalsh, negative_count, numerical_rank, CMat, HermMatrix};
use sflab::opstar::{leibniz_defect, matrix_level_norm, product_ratio, symbol_bound, MatrixLevelMap};
use sflab::spectral_flow::spectral_flow;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    })
}

fn random_herm(n: usize, seed: u64) -> HermMatrix {
    HermMatrix::hermitian_part(&random_matrix(n, n, seed)).unwrap()
}

fn periodic_d2(n: usize) -> (Grid, HermMatrix) {
    let g = Grid::periodic(3.0, n);
    (
        g,
        build_d2(n, g.h(), D2Variant::PeriodicCentral)
            .unwrap()
            .hermitian()
            .unwrap(),
    )
}

fn random_fn(g: Grid, seed: u64) -> GridFunction {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    GridFunction::new(
        g,
        (0..g.len())
            .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_sum_to_trace(n in 1usize..40, seed in any::<u64>()) {
        let h = random_herm(n, seed);
        let sum: f64 = eigvalsh(&h).unwrap().iter().sum();
        let tr = h.matrix().trace().re;
        prop_assert!((sum - tr).abs() <= 1e-10 * (1.0 + tr.abs().max(n as f64)));
    }

    #[test]
    fn rank_is_adjoint_invariant(rows in 1usize..12, cols in 1usize..12, k in 0usize..6, seed in any::<u64>()) {
        let k = k.min(rows).min(cols);
        let m = random_matrix(rows, k, seed) * random_matrix(k, cols, seed ^ 1);
        let a = numerical_rank(&m, DEFAULT_TOL).unwrap().rank;
        let b = numerical_rank(&m.adjoint(), DEFAULT_TOL).unwrap().rank;
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, k);
    }

    #[test]
    fn inertia_adds_up(n in 1usize..20, seed in any::<u64>()) {
        let h = random_herm(n, seed);
        if let Ok(neg) = negative_count(&h, DEFAULT_GUARD) {
            let pos = eigvalsh(&h).unwrap().iter().filter(|v| **v > 0.0).count();
            prop_assert_eq!(neg + pos, n);
        }
    }

    #[test]
    fn modified_star_is_an_involution(m in 1usize..=8, p in 0usize..=8, seed in any::<u64>()) {
        let ctx = HodgeContext::new(m).unwrap();
        let w = Form::random(&ctx, p.min(m), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(star_involution_defect(&ctx, &w).unwrap() <= 1e-14);
    }

    #[test]
    fn pairing_matches_wedge_with_star(m in 1usize..=6, p in 0usize..=6, seed in any::<u64>()) {
        let ctx = HodgeContext::new(m).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let w = Form::random(&ctx, p.min(m), &mut r).unwrap();
        let eta = Form::random(&ctx, p.min(m), &mut r).unwrap();
        prop_assert!(pairing_defect(&ctx, &w, &eta).unwrap() <= 1e-12);
    }

    #[test]
    fn derivation_obeys_leibniz_and_product_bound(n in 8usize..40, seed in any::<u64>()) {
        let (g, d) = periodic_d2(n);
        let f = random_fn(g, seed);
        let h = random_fn(g, seed ^ 7);
        prop_assert!(leibniz_defect(&f, &h, &d).unwrap() <= 1e-12);
        prop_assert!(product_ratio(&f, &h, &d).unwrap() <= 2.0);
    }

    #[test]
    fn commutator_bounded_by_central_difference(k in 1u32..=3, a in -2.0f64..2.0, phase in 0.0f64..6.3) {
        let (g, d) = periodic_d2(128);
        let w = std::f64::consts::PI * k as f64 / 3.0;
        let f = GridFunction::from_real_fn(g, |x| a * (w * x + phase).sin());
        let (c, bound) = symbol_bound(&f, &d).unwrap();
        prop_assert!(c <= bound + 1e-9, "{} > {}", c, bound);
    }

    #[test]
    fn product_operator_is_odd(n in 1usize..8, seed in any::<u64>()) {
        let p = product_operator(&random_herm(n, seed), &random_herm(n, seed ^ 3)).unwrap();
        prop_assert_eq!(p.grading_defect, 0.0);
        let ev = eigvalsh(&p.d).unwrap();
        let scale = ev.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in ev.iter().zip(ev.iter().rev()) {
            prop_assert!((x + y).abs() <= 1e-10 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn level_estimates_respect_the_ceiling(n in 1usize..=4, rows in 1usize..3, cols in 1usize..3, seed in any::<u64>()) {
        let a = MatrixLevelMap::random_on_column_space(n, rows, cols, &mut ChaCha8Rng::seed_from_u64(seed));
        let ceiling = a.column_space_ceiling();
        let mut running = 0.0f64;
        for level in 1..=3 {
            let v = matrix_level_norm(&a, level, 10, seed);
            prop_assert!(v <= ceiling * (1.0 + 1e-9) + 1e-9);
            prop_assert!(running.max(v) >= running);
            running = running.max(v);
        }
    }

    #[test]
    fn spectral_flow_reverses_sign(n in 1usize..=4, seed in any::<u64>()) {
        let s = evaluate(&FamilySpec::RandomSmooth { n, seed, degree: 3 }, &Grid::interval(8.0, 300)).unwrap();
        let fwd = spectral_flow(&s, DEFAULT_GUARD).unwrap().sf;
        let back = spectral_flow(&s.reversed(), DEFAULT_GUARD).unwrap().sf;
        prop_assert_eq!(fwd, -back);
        prop_assert_eq!(fwd, endpoint_signature_sf(&s, DEFAULT_GUARD).unwrap());
    }

    #[test]
    fn gauging_keeps_signatures(n in 1usize..=4, seed in any::<u64>(), lo in -4.0f64..0.0, width in 0.5f64..4.0) {
        let grid = Grid::interval(8.0, 200);
        let s = evaluate(&FamilySpec::RandomSmooth { n, seed, degree: 3 }, &grid).unwrap();
        let gauge = gauge_psi(&grid, (lo, lo + width)).unwrap();
        let gs = s.gauged(&gauge.psi).unwrap();
        for (a, b) in s.matrices().iter().zip(gs.matrices()) {
            let na = eigvalsh(a).unwrap().iter().filter(|v| **v < 0.0).count();
            let nb = eigvalsh(b).unwrap().iter().filter(|v| **v < 0.0).count();
            prop_assert_eq!(na, nb);
        }
    }

    #[test]
    fn cokernel_is_kernel_of_adjoint(n in 1usize..=3, seed in any::<u64>()) {
        let s = evaluate(&FamilySpec::RandomSmooth { n, seed, degree: 3 }, &Grid::interval(6.0, 120)).unwrap();
        let asm = assemble_aps(&s, 4.0, None).unwrap();
        let dense = asm.matrix.to_dense();
        let res = fredholm_index(&asm, DEFAULT_TOL);
        prop_assume!(res.is_ok());
        let res = res.unwrap();
        let sv = numerical_rank(&dense, DEFAULT_TOL).unwrap();
        prop_assert_eq!(res.dim_ker, asm.cols() - sv.rank);
        prop_assert_eq!(res.dim_coker, asm.rows() - numerical_rank(&dense.adjoint(), DEFAULT_TOL).unwrap().rank);
    }
}
