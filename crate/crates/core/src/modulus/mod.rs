//! Two-sided estimates of the conformal modulus `M(Γ)` of curve families.

mod axioms;
mod incidence;
mod sampling;
mod solver;
mod upper;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ChartGrid;
use crate::manifold::{check_ball_in_grid, DistanceMode, ManifoldError, MetricField, CurvePolyline};

pub use axioms::{is_subcurve, modulus_axiom_suite, random_axiom_families, AxiomCheck, AxiomFamilies, AxiomReport};
pub use incidence::{curve_incidence, Incidence};
pub use sampling::{sample_ring_curves, Perturbation};
pub(crate) use sampling::stratified_directions;
pub use solver::{modulus_lower, LowerEstimate, SolverOptions};
pub use upper::{
    is_admissible, modulus_bracket, modulus_upper, AdmissibilityReport, BracketPlan, ModulusBracket, UpperEstimate,
    UpperSource,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModulusError {
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("invalid ring: {0}")]
    InvalidRing(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("candidate density is not admissible: curve {worst_curve} has integral {worst_integral} < 1 - {tol}")]
    NotAdmissible { worst_curve: usize, worst_integral: f64, tol: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
}

/// Ring `A(r1, r2, x0) = {r1 < d(x, x0) < r2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub x0: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
    pub mode: DistanceMode,
}

impl RingSpec {
    pub fn new(x0: Vec<f64>, r1: f64, r2: f64, mode: DistanceMode) -> Result<Self, ModulusError> {
        if !(r1 > 0.0 && r1 < r2 && r2.is_finite()) {
            return Err(ModulusError::InvalidRing(format!("need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")));
        }
        if x0.iter().any(|x| !x.is_finite()) {
            return Err(ModulusError::InvalidRing("center must be finite".into()));
        }
        Ok(Self { x0, r1, r2, mode })
    }

    pub fn chart(x0: Vec<f64>, r1: f64, r2: f64) -> Result<Self, ModulusError> {
        Self::new(x0, r1, r2, DistanceMode::ChartEuclidean)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `log(r2 / r1)`.
    pub fn log_ratio(&self) -> f64 {
        (self.r2 / self.r1).ln()
    }

    /// Checks that the closed ball `B(x0, r2)` lies in the grid.
    pub fn check_in_grid(&self, grid: &ChartGrid) -> Result<(), ModulusError> {
        check_ball_in_grid(grid, &self.x0, self.r2)?;
        Ok(())
    }

    pub(crate) fn require_chart_mode(&self) -> Result<(), ModulusError> {
        if self.mode != DistanceMode::ChartEuclidean {
            return Err(ModulusError::Unsupported("ring families are generated in chart-Euclidean mode only".into()));
        }
        Ok(())
    }
}

/// Generator that produced a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FamilyKind {
    Empty,
    RingRadial { ring: RingSpec, perturbation: u8, seed: u64 },
    CondenserEscape,
    UserSupplied,
}

/// Finite set of polylines standing in for a curve family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    curves: Vec<CurvePolyline>,
    kind: FamilyKind,
}

impl CurveFamily {
    pub fn new(curves: Vec<CurvePolyline>, kind: FamilyKind) -> Result<Self, ModulusError> {
        if curves.is_empty() && kind != FamilyKind::Empty {
            return Err(ModulusError::InvalidFamily("only the empty family may have no curves".into()));
        }
        if let Some(c) = curves.first() {
            let dim = c.dim();
            if curves.iter().any(|c| c.dim() != dim) {
                return Err(ModulusError::InvalidFamily("curves have different dimensions".into()));
            }
        }
        Ok(Self { curves, kind })
    }

    pub fn user(curves: Vec<CurvePolyline>) -> Result<Self, ModulusError> {
        Self::new(curves, FamilyKind::UserSupplied)
    }

    pub fn empty() -> Self {
        Self { curves: Vec::new(), kind: FamilyKind::Empty }
    }

    pub fn curves(&self) -> &[CurvePolyline] {
        &self.curves
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Ring of a structured ring family.
    pub fn ring(&self) -> Option<&RingSpec> {
        match &self.kind {
            FamilyKind::RingRadial { ring, .. } => Some(ring),
            _ => None,
        }
    }

    /// Concatenation of the curve lists (a user-supplied family).
    pub fn union(&self, other: &CurveFamily) -> CurveFamily {
        let curves: Vec<CurvePolyline> = self.curves.iter().chain(&other.curves).cloned().collect();
        if curves.is_empty() {
            return CurveFamily::empty();
        }
        CurveFamily { curves, kind: FamilyKind::UserSupplied }
    }

    /// Family made of the curves at `indices`.
    pub fn subset(&self, indices: &[usize]) -> CurveFamily {
        let curves: Vec<CurvePolyline> = indices.iter().map(|&i| self.curves[i].clone()).collect();
        if curves.is_empty() {
            return CurveFamily::empty();
        }
        CurveFamily { curves, kind: FamilyKind::UserSupplied }
    }

    /// Whether every curve of `self` also belongs to `other`.
    pub fn is_subfamily_of(&self, other: &CurveFamily) -> bool {
        self.curves.iter().all(|c| other.curves.contains(c))
    }
}

/// Nonnegative cell-constant density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    grid: ChartGrid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: ChartGrid, values: Vec<f64>) -> Result<Self, ModulusError> {
        if values.len() != grid.num_cells() {
            return Err(ModulusError::InvalidDensity(format!(
                "expected {} cell values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(ModulusError::InvalidDensity(format!("values must be finite and nonnegative, got {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: ChartGrid) -> Self {
        let n = grid.num_cells();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: ChartGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self, ModulusError> {
        let values = (0..grid.num_cells()).map(|c| f(&grid.cell_center(c))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_cells ρⁿ √det g · cell volume`.
    pub fn energy(&self, field: &MetricField) -> f64 {
        let n = self.grid.dim() as i32;
        let vol = self.grid.cell_volume();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(c, v)| v.powi(n) * field.sqrt_det(&self.grid.cell_center(c)) * vol)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_validation() {
        assert!(RingSpec::chart(vec![0.0, 0.0], 2.0, 1.0).is_err());
        assert!(RingSpec::chart(vec![0.0, 0.0], 0.0, 1.0).is_err());
        let ring = RingSpec::chart(vec![0.0, 0.0], 1.0, std::f64::consts::E).unwrap();
        assert!((ring.log_ratio() - 1.0).abs() < 1e-15);
        let small = ChartGrid::cube(2, -2.0, 2.0, 8).unwrap();
        assert!(ring.check_in_grid(&small).is_err());
    }

    #[test]
    fn density_validation() {
        let grid = ChartGrid::cube(2, 0.0, 1.0, 2).unwrap();
        assert!(DensityField::new(grid.clone(), vec![1.0, 1.0, -1.0, 0.0]).is_err());
        assert!(DensityField::new(grid.clone(), vec![1.0; 3]).is_err());
        let rho = DensityField::new(grid.clone(), vec![1.0; 4]).unwrap();
        assert!((rho.energy(&MetricField::euclidean(grid)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn family_relations() {
        let a = CurvePolyline::segment(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let b = CurvePolyline::segment(vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        let f1 = CurveFamily::user(vec![a.clone()]).unwrap();
        let f2 = CurveFamily::user(vec![a, b]).unwrap();
        assert!(f1.is_subfamily_of(&f2));
        assert!(!f2.is_subfamily_of(&f1));
        assert!(CurveFamily::user(Vec::new()).is_err());
        assert!(CurveFamily::empty().is_subfamily_of(&f1));
    }
}
