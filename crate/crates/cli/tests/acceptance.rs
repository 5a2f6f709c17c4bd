use std::f64::consts::{E, PI};
use std::time::Instant;

use ringmod_cli::{Command, RunConfig};
use ringmod_core::analysis::{
    capacity_upper_bound, condition3_test, f_integral, fmo_indicator, i_integral, psi_from_q, Condition3Options, Condition3Verdict,
    FmoVerdict, QField,
};
use ringmod_core::condenser::{cap_equals_modulus_check, CapModOptions, Condenser};
use ringmod_core::equicontinuity::{
    dilatation_field, equicontinuity_certificate, ring_q_verify, CertificateOptions, CertificateVerdict, MappingSpec, RadialWeight,
    RingQOptions, TargetGeometry, DEFAULT_LOEWNER_C,
};
use ringmod_core::expr::Expr;
use ringmod_core::grid::ChartGrid;
use ringmod_core::manifold::MetricField;
use ringmod_core::modulus::{modulus_axiom_suite, modulus_bracket, random_axiom_families, BracketPlan, RingSpec};
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    summary: String,
    json: Value,
}

fn cube(dim: usize, half: f64, cells: usize) -> MetricField {
    MetricField::euclidean(ChartGrid::cube(dim, -half, half, cells).unwrap())
}

fn origin(dim: usize) -> Vec<f64> {
    vec![0.0; dim]
}

fn radius_sq(dim: usize) -> String {
    (1..=dim).map(|k| format!("x{k}^2")).collect::<Vec<_>>().join(" + ")
}

/// `|x|^p`, marked singular at the origin when `p < 0`.
fn power_q(dim: usize, p: f64) -> QField {
    let q = QField::from_expr(dim, Expr::parse(&format!("({})^({})", radius_sq(dim), p / 2.0)).unwrap()).unwrap();
    if p < 0.0 {
        q.with_singularity(origin(dim))
    } else {
        q
    }
}

fn log_q(dim: usize) -> QField {
    QField::from_expr(dim, Expr::parse(&format!("log(1/sqrt({}))", radius_sq(dim))).unwrap()).unwrap().with_singularity(origin(dim))
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn annulus(dim: usize, cells: usize, limit_s: f64, width_tol: f64) -> Outcome {
    let field = cube(dim, 3.0, cells);
    let ring = RingSpec::chart(origin(dim), 1.0, E).unwrap();
    let exact = if dim == 2 { 2.0 * PI } else { 4.0 * PI };
    let t = Instant::now();
    let b = modulus_bracket(&ring, &field, &BracketPlan::for_dim(dim)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let contains = b.lower <= exact && exact <= b.upper;
    let width = b.width / exact;
    Outcome {
        pass: contains && width <= width_tol && secs < limit_s,
        summary: format!(
            "[{:.4}, {:.4}] vs {:.4}, width {:.2}% (≤ {:.0}%), {} curves, {:.1}s (< {limit_s}s)",
            b.lower,
            b.upper,
            exact,
            100.0 * width,
            100.0 * width_tol,
            b.lower_detail.curves,
            secs
        ),
        json: serde_json::to_value(&b).unwrap(),
    }
}

fn criterion1() -> Outcome {
    annulus(2, 256, 60.0, 0.10)
}

fn criterion2() -> Outcome {
    annulus(3, 64, 300.0, 0.15)
}

fn criterion3() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for (dim, cells) in [(2, 256), (3, 64)] {
        let grid = ChartGrid::cube(dim, -3.0, 3.0, cells).unwrap();
        let field = MetricField::euclidean(grid.clone());
        let e = Condenser::round(grid, origin(dim), 1.0, E).unwrap();
        let r = cap_equals_modulus_check(&e, &field, &CapModOptions::default()).unwrap();
        let analytic = r.analytic.unwrap();
        let dev = (r.cap - r.midpoint).abs() / analytic;
        pass &= dev <= 0.07;
        parts.push(format!("{dim}-D cap {:.4} midpoint {:.4} analytic {:.4} dev {:.2}%", r.cap, r.midpoint, analytic, 100.0 * dev));
        reports.push(json!({ "dim": dim, "cap": r.cap, "lower": r.lower, "upper": r.upper, "midpoint": r.midpoint }));
    }
    Outcome { pass, summary: parts.join("; ") + " (≤ 7%)", json: Value::Array(reports) }
}

fn criterion4() -> Outcome {
    let field = cube(2, 1.0, 32);
    let t = Instant::now();
    let mut reports = Vec::new();
    let mut failures = 0;
    let mut checks = 0;
    let mut empty_exact = true;
    for seed in 0..20 {
        let fams = random_axiom_families(&field, seed).unwrap();
        let r = modulus_axiom_suite(&fams.as_list(), &field, 1e-3).unwrap();
        failures += r.failures().len();
        checks += r.checks();
        empty_exact &= r.empty_family.lhs == 0.0;
        reports.push(serde_json::to_value(&r).unwrap());
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: failures == 0 && empty_exact && secs < 120.0,
        summary: format!("20 seeds, {checks} checks, {failures} failures, M(∅) = 0 exact: {empty_exact}, {secs:.1}s (< 120s)"),
        json: Value::Array(reports),
    }
}

fn criterion5() -> Outcome {
    let eps: Vec<f64> = (2..=10).map(|k| 10f64.powf(-0.5 * k as f64)).collect();
    let fixtures = [
        ("Q = 1, plane", QField::constant(2, 1.0), FmoVerdict::Fmo),
        ("Q = 5, space", QField::constant(3, 5.0), FmoVerdict::Fmo),
        ("Q = log(1/|x|), plane", log_q(2), FmoVerdict::Fmo),
        ("Q = log(1/|x|), space", log_q(3), FmoVerdict::Fmo),
        ("Q = 1/|x|, plane", power_q(2, -1.0), FmoVerdict::NotFmo),
        ("Q = 1/|x|, space", power_q(3, -1.0), FmoVerdict::NotFmo),
    ];
    let mut wrong = Vec::new();
    let mut reports = Vec::new();
    for (name, q, expect) in &fixtures {
        let dim = q.dim();
        let r = fmo_indicator(q, &origin(dim), &eps, &cube(dim, 1.0, 8)).unwrap();
        if r.verdict != *expect {
            wrong.push(format!("{name}: {:?}", r.verdict));
        }
        reports.push(serde_json::to_value(&r).unwrap());
    }
    Outcome {
        pass: wrong.is_empty(),
        summary: format!("{} fixtures, {} misclassified {:?}", fixtures.len(), wrong.len(), wrong),
        json: Value::Array(reports),
    }
}

fn criterion6() -> Outcome {
    let mut fixtures: Vec<(String, QField, Condition3Verdict)> = Vec::new();
    for a in [0.0, -0.5] {
        fixtures.push((format!("a = {a}"), power_q(2, -a), Condition3Verdict::Divergent));
    }
    for a in [0.25, 0.5, 1.0] {
        fixtures.push((format!("a = {a}"), power_q(2, -a), Condition3Verdict::Convergent));
    }
    fixtures.push(("log(1/|x|)".into(), log_q(2), Condition3Verdict::Divergent));
    let field = cube(2, 1.0, 8);
    let mut wrong = Vec::new();
    let mut reports = Vec::new();
    for (name, q, expect) in &fixtures {
        let r = condition3_test(q, &origin(2), None, &field, &Condition3Options::default()).unwrap();
        if r.verdict != *expect {
            wrong.push(format!("{name}: {:?}", r.verdict));
        }
        reports.push(serde_json::to_value(&r).unwrap());
    }
    Outcome {
        pass: wrong.is_empty(),
        summary: format!("{} fixtures, {} misclassified {:?}", fixtures.len(), wrong.len(), wrong),
        json: Value::Array(reports),
    }
}

fn criterion7() -> Outcome {
    let field = cube(2, 1.0, 8);
    let q = QField::constant(2, 1.0);
    let eps0 = 0.5;
    let psi = psi_from_q(&q, &origin(2), eps0, &field, &Condition3Options::default()).unwrap();
    let r = capacity_upper_bound(&q, &origin(2), eps0 / 10.0, eps0, &psi, &field).unwrap();
    let rows = &r.trend[..3];
    let mut worst = 0.0f64;
    for row in rows {
        worst = worst.max(rel(row.bound, 2.0 * PI / (eps0 / row.eps).ln()));
    }
    let decreasing = rows.windows(2).all(|w| w[1].bound < w[0].bound);
    Outcome {
        pass: worst <= 0.05 && decreasing,
        summary: format!(
            "bounds {:.5} {:.5} {:.5}, worst deviation {:.3e} (≤ 5%), decreasing: {decreasing}",
            rows[0].bound, rows[1].bound, rows[2].bound, worst
        ),
        json: serde_json::to_value(&r).unwrap(),
    }
}

fn criterion8() -> Outcome {
    let fixtures = [
        ("Q = 1, plane", QField::constant(2, 1.0)),
        ("Q = |x|, plane", power_q(2, 1.0)),
        ("Q = |x|^-1/2, plane", power_q(2, -0.5)),
        ("Q = log(1/|x|), plane", log_q(2)),
        ("Q = 2, space", QField::constant(3, 2.0)),
    ];
    let (eps, eps0) = (1e-3, 0.5);
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for (name, q) in &fixtures {
        let dim = q.dim();
        let field = cube(dim, 1.0, 8);
        let psi = psi_from_q(q, &origin(dim), eps0, &field, &Condition3Options::default()).unwrap();
        let f = f_integral(q, &psi, &origin(dim), eps, eps0, &field).unwrap();
        let i = i_integral(&psi, eps, eps0).unwrap();
        worst = worst.max(rel(f, i));
        values.push(json!({ "fixture": name, "f": f, "i": i }));
    }
    Outcome {
        pass: worst <= 0.01,
        summary: format!("{} fixtures, worst |F/I - 1| = {worst:.3e} (≤ 1%)", fixtures.len()),
        json: Value::Array(values),
    }
}

fn criterion9() -> Outcome {
    let field = cube(2, 3.0, 256);
    let ring = RingSpec::chart(origin(2), 1.0, E).unwrap();
    let stretch = MappingSpec::radial_stretch(origin(2), 0.5).unwrap();
    let one = QField::constant(2, 1.0);
    let dil = dilatation_field(&stretch, &field).unwrap();
    // (name, mapping, Q, expected PASS, closed-form left, closed-form right)
    let cases = [
        ("identity, Q = 1", MappingSpec::identity(2), one.clone(), true, 2.0 * PI, 2.0 * PI),
        ("stretch 1/2, Q = K", stretch.clone(), dil, true, 4.0 * PI, 4.0 * PI),
        ("stretch 1/2, Q = 1", stretch, one, false, 4.0 * PI, 2.0 * PI),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for (name, f, q, expect, left, right) in &cases {
        let r = ring_q_verify(f, &ring, q, &[RadialWeight::Extremal], &field, &RingQOptions::default()).unwrap();
        let got_right = r.etas[0].right.unwrap();
        let ok = r.pass == *expect && rel(r.left_lower, *left) <= 0.05 && rel(got_right, *right) <= 0.05;
        pass &= ok;
        parts.push(format!(
            "{name}: {} left {:.4}/{:.4} right {:.4}/{:.4}",
            if r.pass { "PASS" } else { "FAIL" },
            r.left_lower,
            left,
            got_right,
            right
        ));
        reports.push(serde_json::to_value(&r).unwrap());
    }
    Outcome { pass, summary: parts.join("; "), json: Value::Array(reports) }
}

fn criterion10() -> Outcome {
    // The certificate is parametric in the Loewner constant: run each Q under C = 1 and the shipped C.
    let settings: [(f64, &[f64]); 2] = [(1.0, &[0.1, 0.2, 0.3, 0.5]), (DEFAULT_LOEWNER_C, &[1.0, 1.5, 2.0])];
    let fixtures = [
        ("Q = 1, plane", QField::constant(2, 1.0), true),
        ("Q = 3, plane", QField::constant(2, 3.0), true),
        ("Q = log(1/|x|), plane", log_q(2), true),
        ("Q = 1, space", QField::constant(3, 1.0), true),
        ("Q = |x|^-1/2, plane", power_q(2, -0.5), false),
        ("Q = 1/|x|, plane", power_q(2, -1.0), false),
    ];
    let mut pass = true;
    let mut certified = 0;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for (name, q, criterion_holds) in &fixtures {
        let dim = q.dim();
        let field = cube(dim, 1.0, 8);
        let mut verdicts = Vec::new();
        for (c, sigmas) in settings {
            let geom = TargetGeometry::new(dim, 1.0, 1.0, c).unwrap();
            let r = equicontinuity_certificate(q, &origin(dim), Some(0.5), &geom, sigmas, &field, &CertificateOptions::default())
                .unwrap();
            let mut table = r.table.clone();
            table.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
            let monotone = table.windows(2).all(|w| match (w[0].delta, w[1].delta) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => false,
                _ => true,
            });
            let is_cert = r.verdict == CertificateVerdict::Certified;
            if is_cert {
                certified += 1;
                pass &= monotone;
            }
            if !criterion_holds {
                pass &= !is_cert;
            }
            verdicts.push(format!("C={c}: {:?}{}", r.verdict, if is_cert && !monotone { " (not monotone)" } else { "" }));
            reports.push(serde_json::to_value(&r).unwrap());
        }
        parts.push(format!("{name} [{}]", verdicts.join(", ")));
    }
    pass &= certified > 0;
    Outcome { pass, summary: format!("{certified} certified; {}", parts.join("; ")), json: Value::Array(reports) }
}

const CLI_CONFIG: &str = "[grid]\nlo = -3\nhi = 3\ncells = 64\n\n[ring]\nr1 = 1\nr2 = e\n\n[modulus]\ncurves = 256\n";

fn cli_report() -> String {
    let mut cfg = RunConfig::from_text(Command::Modulus, CLI_CONFIG).unwrap();
    cfg.seed = Some(7);
    ringmod_cli::run(&cfg).unwrap().json()
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "annulus modulus, plane", criterion1),
        (2, "annulus modulus, space", criterion2),
        (3, "capacity equals modulus", criterion3),
        (4, "modulus axioms", criterion4),
        (5, "FMO classifier", criterion5),
        (6, "condition-3 classifier", criterion6),
        (7, "capacity bound chain", criterion7),
        (8, "F = I identity", criterion8),
        (9, "ring-Q zoo", criterion9),
        (10, "certificate monotonicity", criterion10),
    ];
    let mut all = true;
    let mut first = Vec::new();
    for (n, name, f) in &criteria {
        let t = Instant::now();
        let out = f();
        all &= out.pass;
        println!(
            "criterion {n:>2} ({name}): {}  {}  [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.summary,
            t.elapsed().as_secs_f64()
        );
        first.push(serde_json::to_string(&out.json).unwrap());
    }

    let t = Instant::now();
    let mut differing = Vec::new();
    for ((n, _, f), before) in criteria.iter().zip(&first) {
        if serde_json::to_string(&f().json).unwrap() != *before {
            differing.push(*n);
        }
    }
    let cli_same = cli_report() == cli_report();
    let pass = differing.is_empty() && cli_same;
    all &= pass;
    println!(
        "criterion 11 (determinism): {}  reruns of 1-10 differing: {differing:?}, CLI report identical: {cli_same}  [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64()
    );

    if !all {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
