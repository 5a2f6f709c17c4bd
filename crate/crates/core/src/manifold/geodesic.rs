use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{segment_length, ManifoldError, MetricField};
use crate::grid::ChartGrid;

/// Worst-case ratio between the full-diagonal stencil path length and the true
/// Euclidean distance in dimension `n`: `sqrt(Σ_k (√k − √(k−1))²)`.
/// 1.0824 in 2-D, 1.1281 in 3-D.
pub fn stencil_overestimate_factor(n: usize) -> f64 {
    (1..=n).map(|k| ((k as f64).sqrt() - ((k - 1) as f64).sqrt()).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties broken by node index.
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn stencil(dim: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        let off: Vec<i64> = (0..dim)
            .map(|_| {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                d
            })
            .collect();
        if off.iter().any(|d| *d != 0) {
            out.push(off);
        }
    }
    out
}

fn neighbor(grid: &ChartGrid, multi: &[usize], off: &[i64]) -> Option<Vec<usize>> {
    let mut m = Vec::with_capacity(multi.len());
    for k in 0..multi.len() {
        let v = multi[k] as i64 + off[k];
        if v < 0 || v > grid.extents()[k] as i64 {
            return None;
        }
        m.push(v as usize);
    }
    Some(m)
}

/// Single-source shortest-path distances on the grid graph (all nodes, full
/// diagonal stencil, edge weight = metric length of the straight edge).
#[derive(Debug, Clone)]
pub struct DistanceField {
    grid: ChartGrid,
    dist: Vec<f64>,
    source: usize,
}

impl DistanceField {
    pub fn from_point(field: &MetricField, p: &[f64]) -> Result<Self, ManifoldError> {
        field.grid().check_inside(p)?;
        let source = field.grid().nearest_node(p);
        let dist = dijkstra(field, source, None);
        Ok(Self { grid: field.grid().clone(), dist, source })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn at_node(&self, node: usize) -> f64 {
        self.dist[node]
    }

    /// Mean of the corner distances.
    pub fn at_cell_center(&self, cell: usize) -> f64 {
        let corners = self.grid.cell_corners(cell);
        corners.iter().map(|&c| self.dist[c]).sum::<f64>() / corners.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }
}

fn dijkstra(field: &MetricField, source: usize, target: Option<usize>) -> Vec<f64> {
    let grid = field.grid();
    let offsets = stencil(grid.dim());
    let mut dist = vec![f64::INFINITY; grid.num_nodes()];
    let mut done = vec![false; grid.num_nodes()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry { dist: 0.0, node: source });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if Some(node) == target {
            break;
        }
        let multi = grid.node_multi(node);
        let p = grid.node_position(node);
        for off in &offsets {
            let Some(m) = neighbor(grid, &multi, off) else { continue };
            let nb = grid.node_index(&m);
            if done[nb] {
                continue;
            }
            let q = grid.node_position(nb);
            let nd = d + segment_length(field, &p, &q);
            if nd < dist[nb] {
                dist[nb] = nd;
                heap.push(Entry { dist: nd, node: nb });
            }
        }
    }
    dist
}

/// Shortest-path distance between the grid nodes nearest to `p` and `q`.
///
/// Overestimates the true geodesic distance by at most
/// [`stencil_overestimate_factor`] (plus the metric variation along edges).
/// Returns `f64::INFINITY` when `q` is unreachable.
pub fn geodesic_distance(field: &MetricField, p: &[f64], q: &[f64]) -> Result<f64, ManifoldError> {
    let grid = field.grid();
    grid.check_inside(p)?;
    grid.check_inside(q)?;
    let (s, t) = (grid.nearest_node(p), grid.nearest_node(q));
    if s == t {
        return Ok(0.0);
    }
    Ok(dijkstra(field, s, Some(t))[t])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicEstimate {
    pub distance: f64,
    /// Estimates at each refinement level, coarsest first.
    pub history: Vec<f64>,
    pub converged: bool,
    pub overestimate_factor: f64,
}

/// Halves the grid spacing until two successive estimates agree within 2%
/// (or `max_levels` refinements were made).
pub fn geodesic_distance_refined(field: &MetricField, p: &[f64], q: &[f64], max_levels: usize) -> Result<GeodesicEstimate, ManifoldError> {
    let mut current = field.clone();
    let mut history = vec![geodesic_distance(&current, p, q)?];
    let mut converged = false;
    for _ in 0..max_levels {
        current = current.with_grid(current.grid().refined())?;
        let d = geodesic_distance(&current, p, q)?;
        let prev = history[history.len() - 1];
        history.push(d);
        if (d - prev).abs() <= 0.02 * d.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(GeodesicEstimate {
        distance: history[history.len() - 1],
        history,
        converged,
        overestimate_factor: stencil_overestimate_factor(field.dim()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn overestimate_factors() {
        assert_relative_eq!(stencil_overestimate_factor(2), (4.0 - 2.0 * 2f64.sqrt()).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(stencil_overestimate_factor(3), (1.0 + (2f64.sqrt() - 1.0).powi(2) + (3f64.sqrt() - 2f64.sqrt()).powi(2)).sqrt(), epsilon = 1e-14);
        assert!((stencil_overestimate_factor(3) - 1.1281).abs() < 1e-4);
    }

    #[test]
    fn stencil_sizes() {
        assert_eq!(stencil(2).len(), 8);
        assert_eq!(stencil(3).len(), 26);
    }

    #[test]
    fn axis_distances() {
        let grid = ChartGrid::cube(2, -2.0, 2.0, 40).unwrap();
        let euclid = MetricField::euclidean(grid.clone());
        assert_relative_eq!(geodesic_distance(&euclid, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0, max_relative = 1e-12);
        assert_eq!(geodesic_distance(&euclid, &[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.0);
        let nine = MetricField::scaled(grid, 9.0).unwrap();
        assert_relative_eq!(geodesic_distance(&nine, &[0.0, 0.0], &[0.0, 1.0]).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn off_axis_within_stencil_bound() {
        let grid = ChartGrid::cube(2, 0.0, 1.0, 50).unwrap();
        let euclid = MetricField::euclidean(grid);
        let d = geodesic_distance(&euclid, &[0.0, 0.0], &[1.0, 0.4]).unwrap();
        let exact = (1.0f64 + 0.16).sqrt();
        assert!(d >= exact - 1e-12 && d <= exact * stencil_overestimate_factor(2) + 1e-12);
    }

    #[test]
    fn refinement_converges_on_axis() {
        let grid = ChartGrid::cube(2, -1.0, 1.0, 8).unwrap();
        let euclid = MetricField::euclidean(grid);
        let est = geodesic_distance_refined(&euclid, &[0.0, 0.0], &[0.5, 0.0], 3).unwrap();
        assert!(est.converged);
        assert_relative_eq!(est.distance, 0.5, max_relative = 1e-12);
    }
}
