use serde::Serialize;
use serde_json::Value;

use ringmod_core::analysis::{
    capacity_upper_bound, condition3_test, fmo_indicator, psi_fmo, psi_from_q, AnalysisError, Condition3Options, PsiFunction,
    QField,
};
use ringmod_core::condenser::{cap_equals_modulus_check, capacity, CapModOptions, CapacityOptions, Condenser, CondenserError};
use ringmod_core::equicontinuity::{
    dilatation_field, equicontinuity_certificate, ring_q_verify, CertificateOptions, CertificateVerdict, CriterionChoice,
    EquicontinuityError, MappingSpec, RadialWeight, RingQOptions, TargetGeometry,
};
use ringmod_core::expr::Expr;
use ringmod_core::grid::ChartGrid;
use ringmod_core::manifold::{ahlfors_probe, ManifoldError, MetricField};
use ringmod_core::modulus::{modulus_bracket, BracketPlan, ModulusError, RingSpec, SolverOptions};
use ringmod_core::quad::unit_sphere_area;

use crate::{CliError, Command, CsvTable, Params, Status};

pub(crate) struct CommandOutput {
    pub result: Value,
    pub csv: CsvTable,
    pub status: Status,
}

pub(crate) type Job = Box<dyn FnOnce() -> Result<CommandOutput, CliError>>;

const I_HYPOTHESIS: &str = "0 < I(eps, eps0) < inf";
const Q_INTEGRABLE: &str = "Q locally integrable";
const Q_NONNEGATIVE: &str = "Q nonnegative and measurable";
const CRITERION: &str = "Q in FMO(x0) or divergence of the sphere integral of Q";
const RING_Q: &str = "f is a ring Q-mapping at x0";

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let hypothesis = match &e {
            AnalysisError::IntegralViolation { .. } => I_HYPOTHESIS,
            AnalysisError::NonIntegrableSingularity { .. } => Q_INTEGRABLE,
            AnalysisError::NegativeQ { .. } => Q_NONNEGATIVE,
            _ => return CliError::Input(e.to_string()),
        };
        CliError::Hypothesis { hypothesis: hypothesis.into(), message: e.to_string() }
    }
}

impl From<EquicontinuityError> for CliError {
    fn from(e: EquicontinuityError) -> Self {
        match e {
            EquicontinuityError::Analysis(a) => a.into(),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModulusError> for CliError {
    fn from(e: ModulusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ManifoldError> for CliError {
    fn from(e: ManifoldError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CondenserError> for CliError {
    fn from(e: CondenserError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn fmt(v: f64) -> String {
    crate::config::format_f64(v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn grid(p: &Params) -> Result<ChartGrid, CliError> {
    let dim = p.usize("grid", "dim", 2)?;
    if !(2..=3).contains(&dim) {
        return Err(CliError::Config(format!("grid.dim must be 2 or 3, got {dim}")));
    }
    let cells = p.usize("grid", "cells", if dim == 2 { 256 } else { 64 })?;
    let axis = |key: &str, default: f64| -> Result<Vec<f64>, CliError> {
        let v = p.list_f64("grid", key, &[default])?;
        match v.len() {
            1 => Ok(vec![v[0]; dim]),
            n if n == dim => Ok(v),
            n => Err(CliError::Config(format!("grid.{key} needs 1 or {dim} values, got {n}"))),
        }
    };
    let (lo, hi) = (axis("lo", -1.0)?, axis("hi", 1.0)?);
    Ok(ChartGrid::bounding(&lo, &hi, cells)?)
}

fn expr(text: &str, what: &str) -> Result<Expr, CliError> {
    Expr::parse(text).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

fn metric(p: &Params, grid: ChartGrid) -> Result<MetricField, CliError> {
    let dim = grid.dim();
    match p.choice("metric", "kind", "euclidean", &["euclidean", "conformal", "matrix"])?.as_str() {
        "euclidean" => Ok(MetricField::euclidean(grid)),
        "conformal" => {
            let e = expr(&p.required_string("metric", "factor")?, "metric.factor")?;
            Ok(MetricField::conformal_expr(grid, e)?)
        }
        _ => {
            let mut table = Vec::with_capacity(dim);
            for i in 1..=dim {
                let key = format!("row{i}");
                let row = p.required_string("metric", &key)?;
                let exprs = row.split(',').map(|t| expr(t.trim(), &format!("metric.{key}"))).collect::<Result<Vec<_>, _>>()?;
                table.push(exprs);
            }
            Ok(MetricField::tensor_exprs(grid, table)?)
        }
    }
}

fn point(p: &Params, section: &str, key: &str, dim: usize) -> Result<Vec<f64>, CliError> {
    let v = p.list_f64(section, key, &vec![0.0; dim])?;
    if v.len() != dim {
        return Err(CliError::Config(format!("{section}.{key} needs {dim} coordinates, got {}", v.len())));
    }
    Ok(v)
}

fn qfield(p: &Params, dim: usize) -> Result<QField, CliError> {
    let text = p.string("q", "expr", "1");
    let mut q = QField::from_expr(dim, expr(&text, "q.expr")?).map_err(CliError::from)?;
    match p.raw("q", "singular").as_deref() {
        None | Some("none") => p.derived("q", "singular", "none"),
        Some(_) => q = q.with_singularity(point(p, "q", "singular", dim)?),
    }
    let integrable = p.bool("q", "integrable", true)?;
    Ok(q.with_integrable(integrable))
}

fn solver(p: &Params, section: &str) -> Result<SolverOptions, CliError> {
    let d = SolverOptions::default();
    Ok(SolverOptions {
        max_sweeps: p.usize(section, "max_sweeps", d.max_sweeps)?,
        gap_tol: p.f64(section, "gap_tol", d.gap_tol)?,
        stall_window: p.usize(section, "stall_window", d.stall_window)?,
        stall_tol: p.f64(section, "stall_tol", d.stall_tol)?,
    })
}

fn ring(p: &Params, dim: usize) -> Result<RingSpec, CliError> {
    let x0 = point(p, "ring", "x0", dim)?;
    let r1 = p.required_f64("ring", "r1")?;
    let r2 = p.required_f64("ring", "r2")?;
    Ok(RingSpec::chart(x0, r1, r2)?)
}

fn condenser(p: &Params, grid: ChartGrid) -> Result<Condenser, CliError> {
    let dim = grid.dim();
    match p.choice("condenser", "shape", "round", &["round", "box"])?.as_str() {
        "round" => {
            let x0 = point(p, "condenser", "x0", dim)?;
            let r1 = p.required_f64("condenser", "r1")?;
            let r2 = p.required_f64("condenser", "r2")?;
            Ok(Condenser::round(grid, x0, r1, r2)?)
        }
        _ => {
            let corner = |key: &str| -> Result<Vec<f64>, CliError> {
                let v = p.required_list_f64("condenser", key)?;
                if v.len() != dim {
                    return Err(CliError::Config(format!("condenser.{key} needs {dim} coordinates")));
                }
                Ok(v)
            };
            let (a_lo, a_hi, c_lo, c_hi) = (corner("a_lo")?, corner("a_hi")?, corner("c_lo")?, corner("c_hi")?);
            Ok(Condenser::boxed(grid, &a_lo, &a_hi, &c_lo, &c_hi)?)
        }
    }
}

fn capacity_options(p: &Params) -> Result<CapacityOptions, CliError> {
    let d = CapacityOptions::default();
    Ok(CapacityOptions {
        cg_tol: p.f64("capacity", "cg_tol", d.cg_tol)?,
        cg_max_iter: p.usize("capacity", "cg_max_iter", d.cg_max_iter)?,
        regularization: p.f64("capacity", "regularization", d.regularization)?,
        damping: p.f64("capacity", "damping", d.damping)?,
        max_outer: p.usize("capacity", "max_outer", d.max_outer)?,
        outer_tol: p.f64("capacity", "outer_tol", d.outer_tol)?,
    })
}

fn condition3_options(p: &Params, section: &str) -> Result<Condition3Options, CliError> {
    let d = Condition3Options::default();
    Ok(Condition3Options {
        t_min_ratio: p.f64(section, "t_min_ratio", d.t_min_ratio)?,
        points_per_decade: p.usize(section, "points_per_decade", d.points_per_decade)?,
    })
}

fn ring_analytic(field: &MetricField, ring: &RingSpec) -> Option<f64> {
    let n = ring.dim();
    field.is_euclidean().then(|| unit_sphere_area(n) * ring.log_ratio().powi(1 - n as i32))
}

fn converged(ok: bool, what: &str) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::NonConvergence { message: format!("{what} did not converge within its iteration budget") }
    }
}

pub(crate) fn prepare(command: Command, p: &Params, seed: u64) -> Result<Job, CliError> {
    let grid = grid(p)?;
    let dim = grid.dim();
    let field = metric(p, grid.clone())?;
    match command {
        Command::Modulus => {
            let ring = ring(p, dim)?;
            let d = BracketPlan::for_dim(dim);
            let plan = BracketPlan {
                curves: p.usize("modulus", "curves", d.curves)?,
                perturbation: p.usize("modulus", "perturbation", 0)?.min(u8::MAX as usize) as u8,
                seed,
                solver: solver(p, "modulus")?,
                admissibility_tol: p.f64("modulus", "admissibility_tol", d.admissibility_tol)?,
            };
            Ok(Box::new(move || {
                let b = modulus_bracket(&ring, &field, &plan)?;
                let analytic = ring_analytic(&field, &ring);
                let mut result = to_value(&b);
                result["analytic"] = to_value(&analytic);
                result["contains_analytic"] = to_value(&analytic.map(|a| b.lower <= a && a <= b.upper));
                let mut csv = CsvTable::new(&["lower", "upper", "width", "relative_width", "analytic"]);
                csv.push(vec![fmt(b.lower), fmt(b.upper), fmt(b.width), fmt(b.relative_width), fmt_opt(analytic)]);
                Ok(CommandOutput { result, csv, status: converged(b.converged, "the dual ascent") })
            }))
        }
        Command::Capacity => {
            let e = condenser(p, grid)?;
            let opts = capacity_options(p)?;
            Ok(Box::new(move || {
                let r = capacity(&e, &field, &opts)?;
                let analytic = if field.is_euclidean() { e.round_capacity() } else { None };
                let mut result = to_value(&r);
                result["analytic"] = to_value(&analytic);
                let mut csv = CsvTable::new(&["cap", "iterations", "cg_iterations", "converged", "analytic"]);
                csv.push(vec![
                    fmt(r.cap),
                    r.iterations.to_string(),
                    r.cg_iterations.to_string(),
                    r.converged.to_string(),
                    fmt_opt(analytic),
                ]);
                Ok(CommandOutput { result, csv, status: converged(r.converged, "the energy minimization") })
            }))
        }
        Command::CapVsModulus => {
            let e = condenser(p, grid)?;
            let opts = CapModOptions {
                curves: p.usize("modulus", "curves", 0)?,
                seed,
                solver: solver(p, "modulus")?,
                capacity: capacity_options(p)?,
                tol: p.f64("modulus", "tol", 0.05)?,
            };
            Ok(Box::new(move || {
                let mut r = cap_equals_modulus_check(&e, &field, &opts)?;
                if !field.is_euclidean() {
                    r.analytic = None;
                }
                let ok = r.capacity.converged && r.lower_detail.converged;
                let mut csv = CsvTable::new(&["cap", "lower", "upper", "midpoint", "analytic", "agree"]);
                csv.push(vec![fmt(r.cap), fmt(r.lower), fmt(r.upper), fmt(r.midpoint), fmt_opt(r.analytic), r.agree.to_string()]);
                Ok(CommandOutput { result: to_value(&r), csv, status: converged(ok, "the capacity or modulus solve") })
            }))
        }
        Command::Fmo => {
            let q = qfield(p, dim)?;
            let x0 = point(p, "point", "x0", dim)?;
            let eps = p.list_f64("fmo", "eps", &[0.1, 0.01, 0.001, 0.0001])?;
            Ok(Box::new(move || {
                let r = fmo_indicator(&q, &x0, &eps, &field)?;
                let mut csv = CsvTable::new(&["eps", "ball_volume", "mean", "oscillation"]);
                for i in 0..r.eps.len() {
                    csv.push(vec![fmt(r.eps[i]), fmt(r.ball_volumes[i]), fmt(r.means[i]), fmt(r.oscillations[i])]);
                }
                Ok(CommandOutput { result: to_value(&r), csv, status: Status::Ok })
            }))
        }
        Command::Condition3 => {
            let q = qfield(p, dim)?;
            let x0 = point(p, "point", "x0", dim)?;
            let delta = p.opt_f64("condition3", "delta")?;
            let opts = condition3_options(p, "condition3")?;
            Ok(Box::new(move || {
                let r = condition3_test(&q, &x0, delta, &field, &opts)?;
                let mut csv = CsvTable::new(&["t", "a(t)", "integrand", "partial_integral"]);
                for i in 0..r.radii.len() {
                    csv.push(vec![fmt(r.radii[i]), fmt(r.areas[i]), fmt(r.integrand[i]), fmt(r.partial_integrals[i])]);
                }
                Ok(CommandOutput { result: to_value(&r), csv, status: Status::Ok })
            }))
        }
        Command::Bound => {
            let q = qfield(p, dim)?;
            let x0 = point(p, "point", "x0", dim)?;
            let eps = p.required_f64("bound", "eps")?;
            let eps0 = p.required_f64("bound", "eps0")?;
            let kind = p.choice("bound", "psi", "fmo", &["fmo", "from-q", "power"])?;
            let (coef, exponent) = if kind == "power" {
                (p.f64("bound", "coef", 1.0)?, p.f64("bound", "exponent", -1.0)?)
            } else {
                (0.0, 0.0)
            };
            let c3 = if kind == "from-q" { Some(condition3_options(p, "bound")?) } else { None };
            Ok(Box::new(move || {
                let psi: PsiFunction = match kind.as_str() {
                    "fmo" => psi_fmo(),
                    "from-q" => psi_from_q(&q, &x0, eps0, &field, c3.as_ref().expect("options read"))?,
                    _ => PsiFunction::power_law(coef, exponent, eps0),
                };
                let r = capacity_upper_bound(&q, &x0, eps, eps0, &psi, &field)?;
                let mut csv = CsvTable::new(&["eps", "F", "I", "bound"]);
                for row in &r.trend {
                    csv.push(vec![fmt(row.eps), fmt(row.f), fmt(row.i), fmt(row.bound)]);
                }
                let mut result = to_value(&r);
                result["psi"] = Value::String(psi.description().to_string());
                Ok(CommandOutput { result, csv, status: Status::Ok })
            }))
        }
        Command::Certificate => {
            let q = qfield(p, dim)?;
            let x0 = point(p, "point", "x0", dim)?;
            let delta0 = p.opt_f64("certificate", "delta0")?;
            let sigmas = p.required_list_f64("certificate", "sigmas")?;
            let d = CertificateOptions::default();
            let criterion = match p.choice("certificate", "criterion", "auto", &["auto", "fmo", "condition3"])?.as_str() {
                "auto" => CriterionChoice::Auto,
                "fmo" => CriterionChoice::Fmo,
                _ => CriterionChoice::Condition3,
            };
            let fmo_eps = match p.raw("certificate", "fmo_eps").as_deref() {
                None | Some("auto") => {
                    p.derived("certificate", "fmo_eps", "auto");
                    Vec::new()
                }
                Some(_) => p.list_f64("certificate", "fmo_eps", &[])?,
            };
            let opts = CertificateOptions {
                criterion,
                per_decade: p.usize("certificate", "per_decade", d.per_decade)?,
                min_decades: p.usize("certificate", "min_decades", d.min_decades)?,
                max_decades: p.usize("certificate", "max_decades", d.max_decades)?,
                bisection_steps: p.usize("certificate", "bisection_steps", d.bisection_steps)?,
                fmo_eps,
                condition3: condition3_options(p, "certificate")?,
            };
            let r = p.f64("target", "r", 1.0)?;
            let diam_k = p.f64("target", "diam_k", 1.0)?;
            let c = p.f64("target", "c_loewner", ringmod_core::equicontinuity::DEFAULT_LOEWNER_C)?;
            p.derived("target", "q_tilde", dim);
            let geom = TargetGeometry::new(dim, r, diam_k, c)?;
            Ok(Box::new(move || {
                let rep = equicontinuity_certificate(&q, &x0, delta0, &geom, &sigmas, &field, &opts)?;
                let mut csv = CsvTable::new(&["sigma", "delta", "F", "I", "bound"]);
                for s in &rep.table {
                    csv.push(vec![fmt(s.sigma), fmt_opt(s.delta), fmt_opt(s.f), fmt_opt(s.i), fmt_opt(s.bound)]);
                }
                let status = if rep.verdict == CertificateVerdict::NotCertified {
                    Status::HypothesisFailure {
                        hypothesis: CRITERION.into(),
                        message: format!(
                            "neither criterion holds at x0 (FMO: {:?}, sphere integral: {:?})",
                            rep.fmo_verdict, rep.condition3_verdict
                        ),
                    }
                } else {
                    Status::Ok
                };
                Ok(CommandOutput { result: to_value(&rep), csv, status })
            }))
        }
        Command::ZooVerify => {
            let center = point(p, "mapping", "center", dim)?;
            let f = match p.choice("mapping", "kind", "identity", &["identity", "radial-stretch", "winding", "linear"])?.as_str() {
                "identity" => MappingSpec::identity(dim),
                "radial-stretch" => MappingSpec::radial_stretch(center, p.required_f64("mapping", "alpha")?)?,
                "winding" => {
                    let k = p.usize("mapping", "k", 2)?;
                    MappingSpec::winding(center, u32::try_from(k).map_err(|_| CliError::Config("mapping.k too large".into()))?)?
                }
                _ => {
                    let rows =
                        (1..=dim).map(|i| p.required_list_f64("mapping", &format!("row{i}"))).collect::<Result<Vec<_>, _>>()?;
                    MappingSpec::linear(rows)?
                }
            };
            let ring = ring(p, dim)?;
            let q_source = p.choice("zoo", "q", "dilatation", &["dilatation", "field"])?;
            let q_field = if q_source == "field" { Some(qfield(p, dim)?) } else { None };
            let q_scale = p.f64("zoo", "q_scale", 1.0)?;
            let names = p.string("zoo", "etas", "extremal, uniform");
            let mut etas = Vec::new();
            for name in names.split(',').map(str::trim) {
                etas.push(match name {
                    "extremal" => RadialWeight::Extremal,
                    "uniform" => RadialWeight::Uniform,
                    other => return Err(CliError::Config(format!("zoo.etas: unknown weight `{other}` (extremal, uniform)"))),
                });
            }
            let d = RingQOptions::default();
            let opts = RingQOptions {
                curves: p.usize("zoo", "curves", d.curves)?,
                seed,
                target_cells: p.usize("zoo", "target_cells", d.target_cells)?,
                margin: p.f64("zoo", "margin", d.margin)?,
                tol: p.f64("zoo", "tol", d.tol)?,
                norm_tol: p.f64("zoo", "norm_tol", d.norm_tol)?,
                solver: solver(p, "zoo")?,
            };
            Ok(Box::new(move || {
                let q = match q_field {
                    Some(q) => q,
                    None => dilatation_field(&f, &field)?,
                };
                let q = if q_scale == 1.0 { q } else { q.scaled(q_scale) };
                let rep = ring_q_verify(&f, &ring, &q, &etas, &field, &opts)?;
                let mut csv = CsvTable::new(&["eta", "normalization", "left_lower", "right", "pass"]);
                for c in &rep.etas {
                    csv.push(vec![
                        c.eta.clone(),
                        fmt(c.normalization),
                        fmt(rep.left_lower),
                        fmt_opt(c.right),
                        c.pass.map(|b| b.to_string()).unwrap_or_default(),
                    ]);
                }
                let status = if rep.pass {
                    Status::Ok
                } else {
                    Status::HypothesisFailure {
                        hypothesis: RING_Q.into(),
                        message: "the image modulus exceeds the weighted integral for some radial weight".into(),
                    }
                };
                Ok(CommandOutput { result: to_value(&rep), csv, status })
            }))
        }
        Command::Ahlfors => {
            let x0 = point(p, "point", "x0", dim)?;
            let radii = p.list_f64("ahlfors", "radii", &[0.5, 0.25, 0.125, 0.0625])?;
            Ok(Box::new(move || {
                let r = ahlfors_probe(&field, &x0, &radii)?;
                let mut csv = CsvTable::new(&["radius", "volume"]);
                for (t, v) in r.radii.iter().zip(&r.volumes) {
                    csv.push(vec![fmt(*t), fmt(*v)]);
                }
                Ok(CommandOutput { result: to_value(&r), csv, status: Status::Ok })
            }))
        }
    }
}
