use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fem::Energy;
use super::{capacity, CapacityOptions, CapacityReport, Condenser, CondenserError, CondenserShape};
use crate::manifold::{CurvePolyline, MetricField};
use crate::modulus::{
    curve_incidence, modulus_lower, modulus_upper, sample_ring_curves, stratified_directions, BracketPlan, CurveFamily,
    DensityField, FamilyKind, LowerEstimate, Perturbation, RingSpec, SolverOptions,
};

fn in_region(e: &Condenser, p: &[f64], c_only: bool) -> bool {
    match e.grid().locate_cell(p) {
        Some(cell) if c_only => e.c().contains(cell),
        Some(cell) => e.a().contains(cell),
        None => false,
    }
}

fn bisect(lo: f64, hi: f64, mut inside: impl FnMut(f64) -> bool) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if inside(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Curves leaving `C` and reaching `∂A` inside `A`.
///
/// Round condensers reuse radial ring segments from `|x - x0| = r1` to `r2`.
/// Otherwise rays from the centroid of `C` are cut to the stretch between
/// their last exit from `C` and their first exit from `A`; rays crossing a
/// cell outside `A` on the way are dropped.
pub fn condenser_curve_family(e: &Condenser, count: usize, seed: u64) -> Result<CurveFamily, CondenserError> {
    if count == 0 {
        return Err(CondenserError::Invalid("count must be at least 1".into()));
    }
    let grid = e.grid();
    if let CondenserShape::Round { x0, r1, r2 } = e.shape() {
        let ring = RingSpec::chart(x0.clone(), *r1, *r2)?;
        return Ok(sample_ring_curves(&ring, grid, count, Perturbation::NONE, seed)?);
    }
    let dim = grid.dim();
    let mut centroid = vec![0.0; dim];
    let mut total = 0.0;
    for cell in e.c().cells() {
        for (c, x) in centroid.iter_mut().zip(grid.cell_center(cell)) {
            *c += x;
        }
        total += 1.0;
    }
    centroid.iter_mut().for_each(|c| *c /= total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = stratified_directions(dim, count, &mut rng);
    let step = grid.min_spacing() / 8.0;
    let reach: f64 = grid.upper().iter().zip(grid.origin()).map(|(u, o)| (u - o) * (u - o)).sum::<f64>().sqrt();
    let euclid = MetricField::euclidean(grid.clone());
    let mut curves = Vec::new();
    for dir in &dirs {
        let at = |t: f64| -> Vec<f64> { centroid.iter().zip(dir).map(|(c, d)| c + t * d).collect() };
        let mut last_c = None;
        let mut exit = None;
        let mut t = 0.0;
        while t <= reach {
            let p = at(t);
            if !in_region(e, &p, false) {
                exit = Some(t);
                break;
            }
            if in_region(e, &p, true) {
                last_c = Some(t);
            }
            t += step;
        }
        let (Some(tc), Some(te)) = (last_c, exit) else { continue };
        let t_end = bisect(te - step, te, |s| in_region(e, &at(s), false));
        let t_start = bisect(tc, (tc + step).min(t_end), |s| in_region(e, &at(s), true));
        if t_end - t_start <= 1e-9 * step {
            continue;
        }
        let curve = CurvePolyline::segment(at(t_start), at(t_end))?;
        let inc = curve_incidence(&euclid, &curve)?;
        if inc.cells.iter().all(|&c| e.a().contains(c)) {
            curves.push(curve);
        }
    }
    if curves.is_empty() {
        return Err(CondenserError::Invalid("no escape curve stays inside A".into()));
    }
    Ok(CurveFamily::new(curves, FamilyKind::CondenserEscape)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapModOptions {
    /// Escape curves; 0 uses the modulus bracket default for the dimension.
    pub curves: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub capacity: CapacityOptions,
    /// Relative slack around the modulus bracket.
    pub tol: f64,
}

impl Default for CapModOptions {
    fn default() -> Self {
        Self { curves: 0, seed: 0, solver: SolverOptions::default(), capacity: CapacityOptions::default(), tol: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscapeUpperSource {
    ExtremalRingDensity,
    /// Corner-maximal `|∇u|_g` of the computed potential, rescaled to be
    /// admissible on the sampled curves.
    PotentialGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapModReport {
    pub cap: f64,
    pub capacity: CapacityReport,
    pub lower: f64,
    pub upper: f64,
    pub upper_source: EscapeUpperSource,
    pub midpoint: f64,
    pub lower_detail: LowerEstimate,
    /// `ω_{n-1} (log(r2/r1))^{1-n}` for round condensers.
    pub analytic: Option<f64>,
    pub tol: f64,
    /// `cap ∈ [lower (1 - tol), upper (1 + tol)]`.
    pub agree: bool,
}

/// Compares the capacity of `e` with a modulus bracket of its escape family.
pub fn cap_equals_modulus_check(e: &Condenser, field: &MetricField, opts: &CapModOptions) -> Result<CapModReport, CondenserError> {
    let cap = capacity(e, field, &opts.capacity)?;
    let count = if opts.curves == 0 { BracketPlan::for_dim(field.dim()).curves } else { opts.curves };
    let family = condenser_curve_family(e, count, opts.seed)?;
    let lower = modulus_lower(&family, field, &opts.solver)?;
    let (upper, upper_source) = if family.ring().is_some() {
        (modulus_upper(&family, field, None, 1e-3)?.upper, EscapeUpperSource::ExtremalRingDensity)
    } else {
        let u = cap.potential.as_ref().map(|p| p.u.clone()).unwrap_or_default();
        (gradient_upper(e, field, &family, &u)?, EscapeUpperSource::PotentialGradient)
    };
    let agree = cap.cap >= lower.lower * (1.0 - opts.tol) && cap.cap <= upper * (1.0 + opts.tol);
    Ok(CapModReport {
        cap: cap.cap,
        capacity: cap,
        lower: lower.lower,
        upper,
        upper_source,
        midpoint: 0.5 * (lower.lower + upper),
        lower_detail: lower,
        analytic: e.round_capacity(),
        tol: opts.tol,
        agree,
    })
}

fn gradient_upper(e: &Condenser, field: &MetricField, family: &CurveFamily, u: &[f64]) -> Result<f64, CondenserError> {
    let grid = field.grid();
    let mut values = vec![0.0; grid.num_cells()];
    for (cell, rho) in Energy::new(e, field).corner_max_gradient(u) {
        values[cell] = rho;
    }
    let mut worst = f64::INFINITY;
    for c in family.curves() {
        worst = worst.min(curve_incidence(field, c)?.integrate(&values));
    }
    if !(worst > 0.0) {
        return Ok(f64::INFINITY);
    }
    let rho = DensityField::new(grid.clone(), values.iter().map(|v| v / worst).collect())?;
    Ok(rho.energy(field))
}
