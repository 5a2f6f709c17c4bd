//! Single-chart regular grids: node and cell indexing, point location, cell regions.

use serde::{Deserialize, Serialize};

use crate::manifold::ManifoldError;

/// Regular axis-aligned grid covering one chart.
///
/// `extents[k]` is the number of cells along axis `k`; there are `extents[k] + 1`
/// nodes along that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartGrid {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    extents: Vec<usize>,
}

impl ChartGrid {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, extents: Vec<usize>) -> Result<Self, ManifoldError> {
        let dim = origin.len();
        if dim < 2 {
            return Err(ManifoldError::InvalidGrid(format!("dimension must be at least 2, got {dim}")));
        }
        if spacing.len() != dim || extents.len() != dim {
            return Err(ManifoldError::InvalidGrid(
                "origin, spacing and extents must have the same length".into(),
            ));
        }
        if let Some(h) = spacing.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(ManifoldError::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if let Some(e) = extents.iter().find(|e| **e < 2) {
            return Err(ManifoldError::InvalidGrid(format!("extents must be at least 2 cells, got {e}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(ManifoldError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { origin, spacing, extents })
    }

    /// Grid with `cells` cells per axis covering the cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, cells: usize) -> Result<Self, ManifoldError> {
        let h = (hi - lo) / cells as f64;
        Self::new(vec![lo; dim], vec![h; dim], vec![cells; dim])
    }

    /// Grid with `cells` cells per axis covering `[lo, hi]` box given per axis.
    pub fn bounding(lo: &[f64], hi: &[f64], cells: usize) -> Result<Self, ManifoldError> {
        let spacing = lo.iter().zip(hi).map(|(a, b)| (b - a) / cells as f64).collect();
        Self::new(lo.to_vec(), spacing, vec![cells; lo.len()])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Euclidean volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.origin[k] + self.spacing[k] * self.extents[k] as f64).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn num_nodes(&self) -> usize {
        self.extents.iter().map(|e| e + 1).product()
    }

    /// Nodes per axis.
    pub fn node_counts(&self) -> Vec<usize> {
        self.extents.iter().map(|e| e + 1).collect()
    }

    /// Whether `p` lies in the closed grid box (with a relative slack of 1e-12).
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && (0..self.dim()).all(|k| {
                let lo = self.origin[k];
                let hi = lo + self.spacing[k] * self.extents[k] as f64;
                let slack = 1e-12 * (hi - lo).abs().max(1.0);
                p[k] >= lo - slack && p[k] <= hi + slack
            })
    }

    pub fn check_inside(&self, p: &[f64]) -> Result<(), ManifoldError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(ManifoldError::OutsideGrid { point: p.to_vec() })
        }
    }

    /// Distance from `p` to the nearest face of the grid box (negative outside).
    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        let upper = self.upper();
        (0..self.dim())
            .map(|k| (p[k] - self.origin[k]).min(upper[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cell_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for (k, e) in self.extents.iter().enumerate() {
            m[k] = idx % e;
            idx /= e;
        }
        m
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * self.extents[k] + multi[k];
        }
        idx
    }

    pub fn node_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for (k, e) in self.extents.iter().enumerate() {
            m[k] = idx % (e + 1);
            idx /= e + 1;
        }
        m
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * (self.extents[k] + 1) + multi[k];
        }
        idx
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let m = self.cell_multi(idx);
        (0..self.dim())
            .map(|k| self.origin[k] + (m[k] as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    pub fn node_position(&self, idx: usize) -> Vec<f64> {
        let m = self.node_multi(idx);
        (0..self.dim()).map(|k| self.origin[k] + m[k] as f64 * self.spacing[k]).collect()
    }

    /// Cell containing `p`; points on the upper faces belong to the last cell.
    pub fn locate_cell(&self, p: &[f64]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let multi: Vec<usize> = (0..self.dim())
            .map(|k| {
                let f = ((p[k] - self.origin[k]) / self.spacing[k]).floor();
                (f.max(0.0) as usize).min(self.extents[k] - 1)
            })
            .collect();
        Some(self.cell_index(&multi))
    }

    /// Node nearest to `p` (clamped to the grid).
    pub fn nearest_node(&self, p: &[f64]) -> usize {
        let multi: Vec<usize> = (0..self.dim())
            .map(|k| {
                let f = ((p[k] - self.origin[k]) / self.spacing[k]).round();
                (f.max(0.0) as usize).min(self.extents[k])
            })
            .collect();
        self.node_index(&multi)
    }

    /// Whether a node lies on the outer boundary of the grid.
    pub fn is_boundary_node(&self, idx: usize) -> bool {
        self.node_multi(idx)
            .iter()
            .zip(&self.extents)
            .any(|(m, e)| *m == 0 || *m == *e)
    }

    /// Corner node indices of a cell in lexicographic (bit) order: corner `b` takes
    /// the upper node along axis `k` iff bit `k` of `b` is set.
    pub fn cell_corners(&self, cell: usize) -> Vec<usize> {
        let m = self.cell_multi(cell);
        let dim = self.dim();
        (0..1usize << dim)
            .map(|b| {
                let nm: Vec<usize> = (0..dim).map(|k| m[k] + ((b >> k) & 1)).collect();
                self.node_index(&nm)
            })
            .collect()
    }

    /// Same box, spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            origin: self.origin.clone(),
            spacing: self.spacing.iter().map(|h| h / 2.0).collect(),
            extents: self.extents.iter().map(|e| e * 2).collect(),
        }
    }
}

/// A set of grid cells, stored as a mask over all cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRegion {
    mask: Vec<bool>,
}

impl CellRegion {
    pub fn empty(grid: &ChartGrid) -> Self {
        Self { mask: vec![false; grid.num_cells()] }
    }

    /// Cells whose centers satisfy `pred`.
    pub fn from_centers(grid: &ChartGrid, pred: impl Fn(&[f64]) -> bool) -> Self {
        let mask = (0..grid.num_cells()).map(|c| pred(&grid.cell_center(c))).collect();
        Self { mask }
    }

    pub fn from_cells(grid: &ChartGrid, cells: &[usize]) -> Result<Self, ManifoldError> {
        let mut region = Self::empty(grid);
        for &c in cells {
            if c >= region.mask.len() {
                return Err(ManifoldError::InvalidGrid(format!("cell index {c} out of range")));
            }
            region.mask[c] = true;
        }
        Ok(region)
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.mask.get(cell).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, cell: usize) {
        self.mask[cell] = true;
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|m| *m)
    }

    pub fn num_grid_cells(&self) -> usize {
        self.mask.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
    }

    pub fn is_subset_of(&self, other: &CellRegion) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    pub fn union(&self, other: &CellRegion) -> CellRegion {
        CellRegion { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect() }
    }

    pub fn is_disjoint(&self, other: &CellRegion) -> bool {
        !self.mask.iter().zip(&other.mask).any(|(a, b)| *a && *b)
    }
}
