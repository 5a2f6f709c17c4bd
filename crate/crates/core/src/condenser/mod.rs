//! Condensers `E = (A, C)`: n-capacity by energy minimization over grid
//! potentials, escape-curve families, and the capacity-modulus comparison.

mod family;
mod fem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellRegion, ChartGrid};
use crate::manifold::{euclid, ManifoldError};
use crate::modulus::ModulusError;

pub use family::{cap_equals_modulus_check, condenser_curve_family, CapModOptions, CapModReport, EscapeUpperSource};
pub use fem::{capacity, CapacityOptions, CapacityReport, PotentialField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CondenserError {
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error("invalid condenser: {0}")]
    Invalid(String),
    #[error("degenerate condenser: {0}")]
    Degenerate(String),
}

/// Role of a grid node in the Dirichlet problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeLabel {
    /// Not in the closure of `A`, or on the outer grid boundary.
    Outside,
    /// On `∂A`: `u = 0`.
    Boundary,
    /// On `C`: `u = 1`.
    Plate,
    Free,
}

/// How a condenser was described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CondenserShape {
    /// `A = B(x0, r2)`, `C = closed B(x0, r1)`, snapped to nodes.
    Round { x0: Vec<f64>, r1: f64, r2: f64 },
    /// Axis-aligned boxes, snapped to cells by their centers.
    Box { a_lo: Vec<f64>, a_hi: Vec<f64>, c_lo: Vec<f64>, c_hi: Vec<f64> },
    Cells,
}

/// Pair `(A, C)` of cell sets with `C ⊂ A`, together with node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Condenser {
    grid: ChartGrid,
    a: CellRegion,
    c: CellRegion,
    labels: Vec<NodeLabel>,
    shape: CondenserShape,
}

impl Condenser {
    /// Condenser from explicit cell sets. Plate nodes are the corners of `C`
    /// cells; boundary nodes are corners shared with cells outside `A`.
    pub fn from_cells(grid: ChartGrid, a: CellRegion, c: CellRegion) -> Result<Self, CondenserError> {
        Self::check_regions(&grid, &a, &c)?;
        let mut labels = vec![NodeLabel::Outside; grid.num_nodes()];
        let mut in_a = vec![false; grid.num_nodes()];
        let mut touches_out = vec![false; grid.num_nodes()];
        for cell in 0..grid.num_cells() {
            let inside = a.contains(cell);
            for node in grid.cell_corners(cell) {
                if inside {
                    in_a[node] = true;
                } else {
                    touches_out[node] = true;
                }
            }
        }
        for node in 0..grid.num_nodes() {
            if in_a[node] {
                labels[node] = if touches_out[node] || grid.is_boundary_node(node) { NodeLabel::Boundary } else { NodeLabel::Free };
            }
        }
        for cell in c.cells() {
            for node in grid.cell_corners(cell) {
                if labels[node] == NodeLabel::Boundary {
                    return Err(CondenserError::Degenerate(format!(
                        "C touches the boundary of A at {:?}",
                        grid.node_position(node)
                    )));
                }
                labels[node] = NodeLabel::Plate;
            }
        }
        Ok(Self { grid, a, c, labels, shape: CondenserShape::Cells })
    }

    /// Round condenser `(B(x0, r2), closed B(x0, r1))`, snapped to the nearest
    /// nodes: `u = 1` where `|x - x0| ≤ r1 + h/2`, `u = 0` where `|x - x0| ≥ r2 - h/2`.
    /// Gaps thinner than a cell meet halfway.
    pub fn round(grid: ChartGrid, x0: Vec<f64>, r1: f64, r2: f64) -> Result<Self, CondenserError> {
        if x0.len() != grid.dim() {
            return Err(CondenserError::Invalid("center dimension does not match the grid".into()));
        }
        if !(r1 > 0.0 && r1 < r2 && r2.is_finite()) {
            return Err(CondenserError::Invalid(format!("need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")));
        }
        crate::manifold::check_ball_in_grid(&grid, &x0, r2)?;
        let shift = (0.5 * grid.max_spacing()).min(0.5 * (r2 - r1));
        let (s1, s2) = (r1 + shift, r2 - shift);
        let dist: Vec<f64> = (0..grid.num_nodes()).map(|i| euclid(&grid.node_position(i), &x0)).collect();
        let mut labels: Vec<NodeLabel> = dist
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d <= s1 {
                    NodeLabel::Plate
                } else if d >= s2 || grid.is_boundary_node(i) {
                    NodeLabel::Outside
                } else {
                    NodeLabel::Free
                }
            })
            .collect();
        let mut a = CellRegion::empty(&grid);
        let mut c = CellRegion::empty(&grid);
        for cell in 0..grid.num_cells() {
            let corners = grid.cell_corners(cell);
            if corners.iter().any(|&n| labels[n] != NodeLabel::Outside) {
                a.insert(cell);
            }
            if corners.iter().all(|&n| labels[n] == NodeLabel::Plate) {
                c.insert(cell);
            }
        }
        if c.is_empty() {
            return Err(CondenserError::Degenerate(format!("r1 = {r1} contains no full grid cell")));
        }
        for cell in a.cells() {
            for n in grid.cell_corners(cell) {
                if labels[n] == NodeLabel::Outside {
                    labels[n] = NodeLabel::Boundary;
                }
            }
        }
        Ok(Self { grid, a, c, labels, shape: CondenserShape::Round { x0, r1, r2 } })
    }

    /// Box condenser: cells whose centers lie in the open box `A` and in the closed box `C`.
    pub fn boxed(grid: ChartGrid, a_lo: &[f64], a_hi: &[f64], c_lo: &[f64], c_hi: &[f64]) -> Result<Self, CondenserError> {
        let dim = grid.dim();
        if [a_lo, a_hi, c_lo, c_hi].iter().any(|v| v.len() != dim) {
            return Err(CondenserError::Invalid("box corners must match the grid dimension".into()));
        }
        let a = CellRegion::from_centers(&grid, |p| (0..dim).all(|k| p[k] > a_lo[k] && p[k] < a_hi[k]));
        let c = CellRegion::from_centers(&grid, |p| (0..dim).all(|k| p[k] >= c_lo[k] && p[k] <= c_hi[k]));
        let mut out = Self::from_cells(grid, a, c)?;
        out.shape = CondenserShape::Box { a_lo: a_lo.to_vec(), a_hi: a_hi.to_vec(), c_lo: c_lo.to_vec(), c_hi: c_hi.to_vec() };
        Ok(out)
    }

    fn check_regions(grid: &ChartGrid, a: &CellRegion, c: &CellRegion) -> Result<(), CondenserError> {
        if a.num_grid_cells() != grid.num_cells() || c.num_grid_cells() != grid.num_cells() {
            return Err(CondenserError::Invalid("regions belong to a different grid".into()));
        }
        if c.is_empty() {
            return Err(CondenserError::Invalid("C must be nonempty".into()));
        }
        if !c.is_subset_of(a) {
            return Err(CondenserError::Invalid("C must lie in A".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn a(&self) -> &CellRegion {
        &self.a
    }

    pub fn c(&self) -> &CellRegion {
        &self.c
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn shape(&self) -> &CondenserShape {
        &self.shape
    }

    pub fn free_nodes(&self) -> usize {
        self.labels.iter().filter(|l| **l == NodeLabel::Free).count()
    }

    /// Analytic n-capacity `ω_{n-1} (log(r2/r1))^{1-n}` of a Euclidean round condenser.
    pub fn round_capacity(&self) -> Option<f64> {
        match &self.shape {
            CondenserShape::Round { x0, r1, r2 } => {
                let n = x0.len();
                Some(crate::quad::unit_sphere_area(n) * (r2 / r1).ln().powi(1 - n as i32))
            }
            _ => None,
        }
    }
}
