//! Riemannian metrics on a single chart: lengths, volumes, sphere areas and
//! grid geodesic distances.

mod geodesic;
mod measure;
mod metric;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geodesic::{
    geodesic_distance, geodesic_distance_refined, stencil_overestimate_factor, DistanceField, GeodesicEstimate,
};
pub use measure::{
    ahlfors_probe, curve_length, polar_integral, segment_length, surface_measure, surface_measure_with_rule,
    volume_measure, AhlforsReport, CurveLength, PolarQuadrature,
};
pub use metric::{metric_at, LocalMetric, MetricField, ScalarFn, Smoothness, TensorFn};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("point {point:?} lies outside the chart grid")]
    OutsideGrid { point: Vec<f64> },
    #[error("metric integrity violated at {point:?}: {reason}")]
    MetricIntegrity { point: Vec<f64>, reason: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid sphere: {0}")]
    InvalidSphere(String),
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// How distances to a center are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Euclidean distance in chart coordinates (exact in normal coordinates).
    #[default]
    ChartEuclidean,
    /// Grid geodesic distance, spheres realized as level sets of a distance field.
    Geodesic,
}

/// Polyline in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePolyline {
    vertices: Vec<Vec<f64>>,
    closed: bool,
}

impl CurvePolyline {
    pub fn new(vertices: Vec<Vec<f64>>, closed: bool) -> Result<Self, ManifoldError> {
        if vertices.len() < 2 {
            return Err(ManifoldError::InvalidCurve(format!("need at least 2 vertices, got {}", vertices.len())));
        }
        let dim = vertices[0].len();
        if vertices.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(ManifoldError::InvalidCurve("vertices must be finite points of equal dimension".into()));
        }
        if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(ManifoldError::InvalidCurve(format!("vertices {i} and {} coincide", i + 1)));
        }
        Ok(Self { vertices, closed })
    }

    pub fn segment(a: Vec<f64>, b: Vec<f64>) -> Result<Self, ManifoldError> {
        Self::new(vec![a, b], false)
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.vertices[0]
    }

    pub fn end(&self) -> &[f64] {
        if self.closed {
            &self.vertices[0]
        } else {
            &self.vertices[self.vertices.len() - 1]
        }
    }

    /// Consecutive vertex pairs, including the closing segment of closed curves.
    pub fn segments(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        let n = self.vertices.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(move |i| (self.vertices[i].as_slice(), self.vertices[(i + 1) % n].as_slice()))
    }

    /// Splits every segment into `parts` equal pieces.
    pub fn subdivided(&self, parts: usize) -> Self {
        let parts = parts.max(1);
        let mut out = Vec::with_capacity(self.vertices.len() * parts);
        for (a, b) in self.segments() {
            for k in 0..parts {
                let s = k as f64 / parts as f64;
                out.push(a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect());
            }
        }
        if !self.closed {
            out.push(self.vertices[self.vertices.len() - 1].clone());
        }
        Self { vertices: out, closed: self.closed }
    }

    /// Splits segments so no piece is longer than `max_len` in chart coordinates.
    pub fn densified(&self, max_len: f64) -> Self {
        let mut out = Vec::new();
        for (a, b) in self.segments() {
            let len = euclid(a, b);
            let parts = ((len / max_len).ceil() as usize).max(1);
            for k in 0..parts {
                let s = k as f64 / parts as f64;
                out.push(a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect());
            }
        }
        if !self.closed {
            out.push(self.vertices[self.vertices.len() - 1].clone());
        }
        Self { vertices: out, closed: self.closed }
    }

    /// Euclidean chart length.
    pub fn chart_length(&self) -> f64 {
        self.segments().map(|(a, b)| euclid(a, b)).sum()
    }

    /// Applies `f` to every vertex; drops consecutive duplicates of the image.
    pub fn map_vertices(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self, ManifoldError> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            let w = f(v);
            if out.last() != Some(&w) {
                out.push(w);
            }
        }
        Self::new(out, self.closed)
    }
}

/// Sphere `S(x0, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub mode: DistanceMode,
}

impl SphereSpec {
    pub fn new(center: Vec<f64>, radius: f64, mode: DistanceMode) -> Result<Self, ManifoldError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(ManifoldError::InvalidSphere(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius, mode })
    }

    pub fn chart(center: Vec<f64>, radius: f64) -> Result<Self, ManifoldError> {
        Self::new(center, radius, DistanceMode::ChartEuclidean)
    }
}

pub(crate) use measure::linear_fit;

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Checks that the closed chart ball `B(center, radius)` fits in the grid box.
pub(crate) fn check_ball_in_grid(grid: &crate::grid::ChartGrid, center: &[f64], radius: f64) -> Result<(), ManifoldError> {
    if center.len() != grid.dim() {
        return Err(ManifoldError::InvalidSphere("center dimension does not match the grid".into()));
    }
    if grid.distance_to_boundary(center) + 1e-12 * radius.max(1.0) < radius {
        return Err(ManifoldError::InvalidSphere(format!(
            "ball of radius {radius} around {center:?} leaves the grid"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_invariants() {
        assert!(CurvePolyline::new(vec![vec![0.0, 0.0]], false).is_err());
        assert!(CurvePolyline::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], false).is_err());
        let c = CurvePolyline::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]], true).unwrap();
        assert_eq!(c.segments().count(), 3);
        assert_eq!(c.end(), c.start());
        let s = c.subdivided(3);
        assert_eq!(s.vertices().len(), 9);
        assert!((s.chart_length() - c.chart_length()).abs() < 1e-12);
    }
}
