//! Closed-form checks that cross module boundaries, at small grid sizes.

use std::f64::consts::{E, PI};

use approx::assert_relative_eq;
use ringmod_core::analysis::{condition3_test, i_integral, psi_fmo, psi_from_q, Condition3Options, Condition3Verdict, QField};
use ringmod_core::condenser::{capacity, CapacityOptions, Condenser};
use ringmod_core::equicontinuity::{dilatation_field, ring_q_verify, MappingSpec, RadialWeight, RingQOptions};
use ringmod_core::expr::Expr;
use ringmod_core::grid::ChartGrid;
use ringmod_core::manifold::MetricField;
use ringmod_core::modulus::{modulus_bracket, BracketPlan, RingSpec};

fn plane(half: f64, cells: usize) -> MetricField {
    MetricField::euclidean(ChartGrid::cube(2, -half, half, cells).unwrap())
}

#[test]
fn coarse_annulus_bracket_contains_two_pi() {
    let field = plane(3.0, 96);
    let ring = RingSpec::chart(vec![0.0, 0.0], 1.0, E).unwrap();
    let plan = BracketPlan { curves: 256, ..BracketPlan::for_dim(2) };
    let b = modulus_bracket(&ring, &field, &plan).unwrap();
    assert!(b.lower <= 2.0 * PI && 2.0 * PI <= b.upper, "[{}, {}]", b.lower, b.upper);
}

#[test]
fn wider_ring_has_smaller_modulus() {
    let field = plane(5.0, 128);
    let plan = BracketPlan { curves: 256, ..BracketPlan::for_dim(2) };
    let narrow = modulus_bracket(&RingSpec::chart(vec![0.0, 0.0], 1.0, 2.0).unwrap(), &field, &plan).unwrap();
    let wide = modulus_bracket(&RingSpec::chart(vec![0.0, 0.0], 1.0, 4.0).unwrap(), &field, &plan).unwrap();
    assert!(wide.upper < narrow.lower);
    assert_relative_eq!(narrow.upper, 2.0 * PI / 2f64.ln(), max_relative = 0.02);
}

#[test]
fn round_capacity_in_the_plane() {
    let grid = ChartGrid::cube(2, -3.0, 3.0, 128).unwrap();
    let field = MetricField::euclidean(grid.clone());
    let e = Condenser::round(grid, vec![0.0, 0.0], 1.0, E).unwrap();
    let r = capacity(&e, &field, &CapacityOptions::default()).unwrap();
    assert_relative_eq!(r.cap, 2.0 * PI, max_relative = 0.03);
    assert_relative_eq!(e.round_capacity().unwrap(), 2.0 * PI, max_relative = 1e-12);
}

#[test]
fn fmo_weight_closed_form() {
    let v = i_integral(&psi_fmo(), (-E * E).exp(), (-E).exp()).unwrap();
    assert_relative_eq!(v, 1.0, max_relative = 1e-12);
}

#[test]
fn shell_weight_of_linear_q() {
    let field = plane(1.0, 8);
    let q = QField::from_expr(2, Expr::parse("sqrt(x1^2 + x2^2)").unwrap()).unwrap();
    let psi = psi_from_q(&q, &[0.0, 0.0], 0.5, &field, &Condition3Options::default()).unwrap();
    for t in [1e-6, 1e-3, 0.1, 0.4] {
        assert_relative_eq!(psi.eval(t).unwrap(), 1.0 / (2.0 * PI * t * t), max_relative = 1e-3);
    }
    let r = condition3_test(&q, &[0.0, 0.0], Some(0.5), &field, &Condition3Options::default()).unwrap();
    assert_eq!(r.verdict, Condition3Verdict::Divergent);
}

#[test]
fn winding_map_ring_check() {
    let field = plane(3.0, 64);
    let ring = RingSpec::chart(vec![0.0, 0.0], 1.0, E).unwrap();
    let f = MappingSpec::winding(vec![0.0, 0.0], 2).unwrap();
    let q = dilatation_field(&f, &field).unwrap();
    assert_relative_eq!(q.eval(&[0.5, 0.7]), 2.0, max_relative = 1e-9);
    let opts = RingQOptions { curves: 256, target_cells: 128, ..Default::default() };
    let r = ring_q_verify(&f, &ring, &q, &[RadialWeight::Extremal], &field, &opts).unwrap();
    assert!(r.pass, "{r:?}");
    assert_relative_eq!(r.etas[0].right.unwrap(), 4.0 * PI, max_relative = 1e-6);
}
