use proptest::prelude::*;

use ringmod_core::analysis::{f_integral, i_integral, psi_fmo, PsiFunction, QField};
use ringmod_core::equicontinuity::{
    diameter_bound, dilatation_field, equicontinuity_certificate, loewner_lower_bound, CertificateOptions, CertificateVerdict, MappingSpec,
    TargetGeometry,
};
use ringmod_core::expr::Expr;
use ringmod_core::grid::ChartGrid;
use ringmod_core::manifold::{CurvePolyline, MetricField};
use ringmod_core::modulus::{modulus_lower, CurveFamily, SolverOptions};

fn unit_square(cells: usize) -> MetricField {
    MetricField::euclidean(ChartGrid::cube(2, 0.0, 1.0, cells).unwrap())
}

fn tight() -> SolverOptions {
    SolverOptions { max_sweeps: 20_000, gap_tol: 1e-9, stall_window: 200, stall_tol: 1e-12 }
}

fn segment() -> impl Strategy<Value = CurvePolyline> {
    (0.05..0.95f64, 0.05..0.95f64, 0.05..0.95f64, 0.05..0.95f64)
        .prop_filter("nondegenerate", |(a, b, c, d)| (a - c).hypot(b - d) > 0.1)
        .prop_map(|(a, b, c, d)| CurvePolyline::segment(vec![a, b], vec![c, d]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn modulus_is_monotone_in_the_family(curves in prop::collection::vec(segment(), 2..8), keep in 1usize..7) {
        let field = unit_square(16);
        let keep = keep.min(curves.len() - 1);
        let all = CurveFamily::user(curves.clone()).unwrap();
        let sub = CurveFamily::user(curves[..keep].to_vec()).unwrap();
        let m_all = modulus_lower(&all, &field, &tight()).unwrap();
        let m_sub = modulus_lower(&sub, &field, &tight()).unwrap();
        prop_assert!(m_sub.lower <= m_all.primal * (1.0 + 1e-9), "{} > {}", m_sub.lower, m_all.primal);
        prop_assert!(m_all.lower <= m_all.primal * (1.0 + 1e-12));
    }

    #[test]
    fn repeating_curves_leaves_modulus_unchanged(curves in prop::collection::vec(segment(), 1..5)) {
        let field = unit_square(16);
        let once = CurveFamily::user(curves.clone()).unwrap();
        let twice = once.union(&once);
        let a = modulus_lower(&once, &field, &tight()).unwrap();
        let b = modulus_lower(&twice, &field, &tight()).unwrap();
        prop_assert!((a.lower - b.lower).abs() <= 1e-6 * a.lower.max(1e-12), "{} vs {}", a.lower, b.lower);
    }

    #[test]
    fn diameter_bound_is_monotone(a in 0.0..10.0f64, b in 0.0..10.0f64, c in 1.0..50.0f64) {
        let g = TargetGeometry::new(2, 1.0, 1.5, c).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let (x, y) = (diameter_bound(lo, &g).unwrap(), diameter_bound(hi, &g).unwrap());
        prop_assert!(x.bound <= y.bound);
        prop_assert!(!y.min_attained || x.min_attained);
    }

    #[test]
    fn loewner_bound_grows_with_the_smaller_continuum(e in 0.01..1.0f64, f in 0.01..1.0f64, s in 1.0..4.0f64) {
        let g = TargetGeometry::new(3, 2.0, 1.0, 5.0).unwrap();
        let small = loewner_lower_bound(e, f, 2.0, &g).unwrap();
        let large = loewner_lower_bound(e * s, f * s, 2.0, &g).unwrap();
        prop_assert!(small > 0.0);
        prop_assert!(small <= large * (1.0 + 1e-12));
    }

    #[test]
    fn fmo_weight_integral_is_additive(a in 1e-9..1e-3f64, b in 1e-3..0.01f64, c in 0.01..0.3f64) {
        let psi = psi_fmo();
        let whole = i_integral(&psi, a, c).unwrap();
        let parts = i_integral(&psi, a, b).unwrap() + i_integral(&psi, b, c).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-10 * whole);
    }

    #[test]
    fn f_integral_is_linear_in_q(scale in 0.1..10.0f64, eps in 1e-4..0.1f64) {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 8).unwrap());
        let q = QField::from_expr(2, Expr::parse("1 + x1^2").unwrap()).unwrap();
        let psi = PsiFunction::power_law(1.0, -1.0, 1.0);
        let base = f_integral(&q, &psi, &[0.0, 0.0], eps, 0.5, &field).unwrap();
        let scaled = f_integral(&q.scaled(scale), &psi, &[0.0, 0.0], eps, 0.5, &field).unwrap();
        prop_assert!((scaled / (scale * base) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_maps_have_dilatation_at_least_one(a in 0.2..5.0f64, b in -2.0..2.0f64, d in 0.2..5.0f64) {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 4).unwrap());
        let f = MappingSpec::linear(vec![vec![a, b], vec![0.0, d]]).unwrap();
        let k = dilatation_field(&f, &field).unwrap().eval(&[0.3, -0.2]);
        prop_assert!(k >= 1.0 - 1e-12);
        if b == 0.0 {
            let expect = a.max(d) / a.min(d);
            prop_assert!((k - expect).abs() < 1e-9 * expect);
        }
    }

    #[test]
    fn constant_expressions_evaluate_like_floats(x in -50.0..50.0f64, y in 0.1..20.0f64) {
        let text = format!("({x}) * 2 + ({y})^2 - ({x}) / ({y})");
        let v = Expr::parse(&text).unwrap().eval(&[]);
        let expect = x * 2.0 + y * y - x / y;
        prop_assert!((v - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn certified_tables_are_monotone(c in 1.0..4.0f64, sigmas in prop::collection::vec(0.2..2.0f64, 2..5)) {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 8).unwrap());
        let geom = TargetGeometry::new(2, 1.0, 1.0, 1.0).unwrap();
        let rep = equicontinuity_certificate(&QField::constant(2, c), &[0.0, 0.0], Some(0.5), &geom, &sigmas, &field, &CertificateOptions::default())
            .unwrap();
        prop_assert_ne!(rep.verdict, CertificateVerdict::NotCertified);
        let mut table = rep.table.clone();
        table.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
        for w in table.windows(2) {
            if let (Some(a), Some(b)) = (w[0].delta, w[1].delta) {
                prop_assert!(a <= b, "σ {} → {a}, σ {} → {b}", w[0].sigma, w[1].sigma);
            }
        }
    }
}
