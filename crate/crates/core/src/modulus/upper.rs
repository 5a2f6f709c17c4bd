use serde::{Deserialize, Serialize};

use super::{curve_incidence, modulus_lower, sample_ring_curves, CurveFamily, DensityField, LowerEstimate, ModulusError, Perturbation, RingSpec, SolverOptions};
use crate::manifold::{polar_integral, MetricField, PolarQuadrature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Index of the curve with the smallest line integral.
    pub worst_curve: Option<usize>,
    pub worst_integral: f64,
    pub tol: f64,
}

/// Whether `∫_γ ρ ds ≥ 1 - tol` for every curve of the family.
pub fn is_admissible(rho: &DensityField, family: &CurveFamily, field: &MetricField, tol: f64) -> Result<AdmissibilityReport, ModulusError> {
    if rho.grid() != field.grid() {
        return Err(ModulusError::InvalidDensity("density and metric live on different grids".into()));
    }
    let mut worst = (None, f64::INFINITY);
    for (i, c) in family.curves().iter().enumerate() {
        let v = curve_incidence(field, c)?.integrate(rho.values());
        if v < worst.1 {
            worst = (Some(i), v);
        }
    }
    Ok(AdmissibilityReport { admissible: worst.1 >= 1.0 - tol, worst_curve: worst.0, worst_integral: worst.1, tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperSource {
    /// `ρ = 1 / (d(x, x0) log(r2/r1) √λ_min(g))`, admissible for every curve joining the spheres.
    ExtremalRingDensity,
    /// User density checked on a dense curve sample.
    UserDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperEstimate {
    pub upper: f64,
    pub source: UpperSource,
    pub admissibility: Option<AdmissibilityReport>,
}

fn ring_quadrature(dim: usize) -> PolarQuadrature {
    PolarQuadrature { panels_per_decade: 16, order: 8, angular_points: if dim <= 2 { 128 } else { 48 }, core_fraction: 1e-12 }
}

/// Upper bound for the modulus of the full ring family behind `family`.
///
/// Without a candidate, integrates the extremal ring density over the ring.
/// A user candidate must pass [`is_admissible`] on the family plus a denser
/// perturbed sample before its energy is accepted.
pub fn modulus_upper(
    family: &CurveFamily,
    field: &MetricField,
    candidate: Option<&DensityField>,
    tol: f64,
) -> Result<UpperEstimate, ModulusError> {
    let ring = family
        .ring()
        .ok_or_else(|| ModulusError::InvalidFamily("upper bounds need a structured ring family".into()))?;
    ring.require_chart_mode()?;
    ring.check_in_grid(field.grid())?;
    match candidate {
        None => {
            let n = field.dim() as i32;
            let log = ring.log_ratio();
            let upper = polar_integral(field, &ring.x0, ring.r1, ring.r2, &ring_quadrature(field.dim()), |p, t| {
                let lmin = if field.is_euclidean() { 1.0 } else { field.local(p).eigen_range().0 };
                (1.0 / (t * log * lmin.sqrt())).powi(n)
            });
            Ok(UpperEstimate { upper, source: UpperSource::ExtremalRingDensity, admissibility: None })
        }
        Some(rho) => {
            let seed = match family.kind() {
                super::FamilyKind::RingRadial { seed, .. } => seed.wrapping_add(1),
                _ => 1,
            };
            let dense = sample_ring_curves(ring, field.grid(), (4 * family.len()).max(256), Perturbation::new(2)?, seed)?;
            let report = is_admissible(rho, &family.union(&dense), field, tol)?;
            if !report.admissible {
                return Err(ModulusError::NotAdmissible {
                    worst_curve: report.worst_curve.unwrap_or(0),
                    worst_integral: report.worst_integral,
                    tol,
                });
            }
            Ok(UpperEstimate { upper: rho.energy(field), source: UpperSource::UserDensity, admissibility: Some(report) })
        }
    }
}

/// Sampling and solver settings of a bracket computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketPlan {
    pub curves: usize,
    pub perturbation: u8,
    pub seed: u64,
    pub solver: SolverOptions,
    pub admissibility_tol: f64,
}

impl BracketPlan {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            curves: if dim <= 2 { 1024 } else { 8192 },
            perturbation: 0,
            seed: 0,
            solver: SolverOptions::default(),
            admissibility_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusBracket {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    /// `width / upper`.
    pub relative_width: f64,
    pub ordered: bool,
    pub lower_detail: LowerEstimate,
    pub upper_source: UpperSource,
    pub converged: bool,
}

/// `lower ≤ M(Γ(S1, S2, A)) ≤ upper` from the sampled program and the extremal density.
pub fn modulus_bracket(ring: &RingSpec, field: &MetricField, plan: &BracketPlan) -> Result<ModulusBracket, ModulusError> {
    let family = sample_ring_curves(ring, field.grid(), plan.curves, Perturbation::new(plan.perturbation)?, plan.seed)?;
    let lower = modulus_lower(&family, field, &plan.solver)?;
    let upper = modulus_upper(&family, field, None, plan.admissibility_tol)?;
    let width = upper.upper - lower.lower;
    Ok(ModulusBracket {
        lower: lower.lower,
        upper: upper.upper,
        width,
        relative_width: width / upper.upper,
        ordered: lower.lower <= upper.upper,
        converged: lower.converged,
        lower_detail: lower,
        upper_source: upper.source,
    })
}
