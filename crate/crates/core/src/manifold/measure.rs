use serde::{Deserialize, Serialize};

use super::{check_ball_in_grid, CurvePolyline, DistanceField, DistanceMode, ManifoldError, MetricField, SphereSpec};
use crate::analysis::QField;
use crate::grid::CellRegion;
use crate::quad::{log_radial_rule, GaussLegendre, SphereRule};

/// Gauss–Legendre order used for the length of one straight segment.
const SEGMENT_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveLength {
    pub length: f64,
    /// Set when the curve has zero metric length.
    pub degenerate: bool,
}

/// Metric length of the straight chart segment `a → b`.
pub fn segment_length(field: &MetricField, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if field.is_euclidean() {
        return d.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    thread_local! {
        static GL: GaussLegendre = GaussLegendre::new(SEGMENT_ORDER);
    }
    GL.with(|gl| {
        let mut p = vec![0.0; a.len()];
        gl.integrate(0.0, 1.0, |s| {
            for k in 0..a.len() {
                p[k] = a[k] + s * d[k];
            }
            field.local(&p).quad(&d).max(0.0).sqrt()
        })
    })
}

/// Metric length `l(γ)` of a polyline.
pub fn curve_length(field: &MetricField, curve: &CurvePolyline) -> Result<CurveLength, ManifoldError> {
    if curve.dim() != field.dim() {
        return Err(ManifoldError::InvalidCurve("curve dimension does not match the metric".into()));
    }
    for v in curve.vertices() {
        field.grid().check_inside(v)?;
    }
    let length: f64 = curve.segments().map(|(a, b)| segment_length(field, a, b)).sum();
    Ok(CurveLength { length, degenerate: length <= 0.0 })
}

/// `v(A) = Σ_cells √det g(center) · cell volume`.
pub fn volume_measure(field: &MetricField, region: &CellRegion) -> Result<f64, ManifoldError> {
    let grid = field.grid();
    if region.num_grid_cells() != grid.num_cells() {
        return Err(ManifoldError::InvalidGrid("region belongs to a different grid".into()));
    }
    let vol = grid.cell_volume();
    Ok(region.cells().map(|c| field.sqrt_det(&grid.cell_center(c)) * vol).sum())
}

/// Resolution of polar (radial × angular) volume quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarQuadrature {
    pub panels_per_decade: usize,
    pub order: usize,
    /// Azimuthal points of the sphere rule; polar angles use half as many.
    pub angular_points: usize,
    /// Inner cutoff as a fraction of the outer radius when integrating a full ball.
    pub core_fraction: f64,
}

impl Default for PolarQuadrature {
    fn default() -> Self {
        Self { panels_per_decade: 4, order: 8, angular_points: 64, core_fraction: 1e-12 }
    }
}

/// `∫_{r_in < |x - x0| < r_out} f(x) dv(x)` in polar coordinates about `x0`,
/// with `dv = √det g · t^{n-1} dt dΩ`. `f` receives the point and its radius.
pub fn polar_integral(
    field: &MetricField,
    x0: &[f64],
    r_in: f64,
    r_out: f64,
    quad: &PolarQuadrature,
    mut f: impl FnMut(&[f64], f64) -> f64,
) -> f64 {
    let n = field.dim();
    let rule = SphereRule::new(n, quad.angular_points);
    let lo = if r_in > 0.0 { r_in } else { r_out * quad.core_fraction };
    if r_out <= lo {
        return 0.0;
    }
    let mut p = vec![0.0; n];
    let mut total = 0.0;
    for (t, wt) in log_radial_rule(lo, r_out, quad.panels_per_decade, quad.order) {
        let mut shell = 0.0;
        for (dir, wd) in rule.directions.iter().zip(&rule.weights) {
            for k in 0..n {
                p[k] = x0[k] + t * dir[k];
            }
            let v = f(&p, t);
            if v != 0.0 {
                shell += wd * v * field.sqrt_det(&p);
            }
        }
        total += wt * t.powi(n as i32 - 1) * shell;
    }
    total
}

/// Euclidean-orthonormal basis of the tangent space of the unit sphere at `w`.
fn tangent_frame(w: &[f64]) -> Vec<Vec<f64>> {
    let n = w.len();
    let skip = (0..n).max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = vec![w.to_vec()];
    for e in (0..n).filter(|&e| e != skip) {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for k in 0..n {
                v[k] -= dot * b[k];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    basis.remove(0);
    basis
}

/// Surface integral over a chart sphere with a fixed angular rule.
///
/// The area element is the one induced by `g` on the sphere: with `E` an
/// orthonormal frame of the sphere's tangent space, `dA = √det(Eᵀ g E) t^{n-1} dΩ`,
/// which equals `√det g*_{αβ} du` for any parametrization.
pub fn surface_measure_with_rule(field: &MetricField, center: &[f64], radius: f64, q: Option<&QField>, rule: &SphereRule) -> f64 {
    let n = field.dim();
    let mut p = vec![0.0; n];
    let mut total = 0.0;
    for (dir, w) in rule.directions.iter().zip(&rule.weights) {
        for k in 0..n {
            p[k] = center[k] + radius * dir[k];
        }
        let qv = q.map_or(1.0, |q| q.eval(&p));
        if qv == 0.0 {
            continue;
        }
        let local = field.local(&p);
        let gram = match &local {
            super::LocalMetric::Scalar { factor, .. } => factor.powi(n as i32 - 1),
            super::LocalMetric::Matrix(_) => local.gram_det(&tangent_frame(dir)),
        };
        total += w * qv * gram.max(0.0).sqrt();
    }
    total * radius.powi(n as i32 - 1)
}

/// `∫_{S(x0, r)} Q dA` (Q ≡ 1 when absent).
///
/// Chart-Euclidean spheres use angular product rules with `2^k` azimuthal points,
/// doubling `k` until two successive values agree within 0.5%. Geodesic spheres
/// are level sets of the grid distance field; their area is the smeared coarea
/// quotient `∫_{|d - r| < Δ} Q dv / (2Δ)` with `Δ` one grid spacing.
pub fn surface_measure(field: &MetricField, sphere: &SphereSpec, q: Option<&QField>) -> Result<f64, ManifoldError> {
    let grid = field.grid();
    match sphere.mode {
        DistanceMode::ChartEuclidean => {
            check_ball_in_grid(grid, &sphere.center, sphere.radius)?;
            let mut prev = f64::NAN;
            let mut k = 5;
            loop {
                let rule = SphereRule::new(field.dim(), 1 << k);
                let cur = surface_measure_with_rule(field, &sphere.center, sphere.radius, q, &rule);
                let max_k = if field.dim() <= 2 { 14 } else if field.dim() == 3 { 9 } else { 6 };
                if (cur - prev).abs() <= 0.005 * cur.abs() || k >= max_k {
                    return Ok(cur);
                }
                prev = cur;
                k += 1;
            }
        }
        DistanceMode::Geodesic => {
            grid.check_inside(&sphere.center)?;
            let dist = DistanceField::from_point(field, &sphere.center)?;
            let delta = grid.max_spacing();
            let vol = grid.cell_volume();
            let mut total = 0.0;
            for c in 0..grid.num_cells() {
                let d = dist.at_cell_center(c);
                if (d - sphere.radius).abs() < delta {
                    let x = grid.cell_center(c);
                    let qv = q.map_or(1.0, |q| q.eval(&x));
                    total += qv * field.sqrt_det(&x) * vol;
                }
            }
            // Shells cut by the grid boundary would be undercounted.
            let far = (0..grid.num_nodes())
                .filter(|&i| grid.is_boundary_node(i))
                .map(|i| dist.at_node(i))
                .fold(f64::INFINITY, f64::min);
            if far < sphere.radius + delta {
                return Err(ManifoldError::InvalidSphere("geodesic sphere reaches the grid boundary".into()));
            }
            Ok(total / (2.0 * delta))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhlforsReport {
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    /// Fitted exponent `Q̃` in `μ(B(x0, R)) ≈ c R^Q̃`.
    pub exponent_fit: f64,
    /// Fitted `c`.
    pub prefactor_fit: f64,
    /// Smallest `C ≥ 1` with `R^n / C ≤ μ(B) ≤ C R^n` over the probed radii.
    pub regularity_constant: f64,
    /// RMS residual of the log–log fit.
    pub residual: f64,
    /// Whether the fitted exponent is within 5% of the dimension.
    pub consistent_with_dimension: bool,
    /// Metric eigenvalue range near `x0`.
    pub eigen_range: (f64, f64),
}

/// Least-squares fit of `log μ(B(x0, R))` against `log R`.
pub fn ahlfors_probe(field: &MetricField, x0: &[f64], radii: &[f64]) -> Result<AhlforsReport, ManifoldError> {
    if radii.len() < 3 {
        return Err(ManifoldError::InsufficientData { needed: 3, got: radii.len() });
    }
    let quad = PolarQuadrature::default();
    let mut volumes = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(r > 0.0) {
            return Err(ManifoldError::InvalidSphere(format!("radius must be positive, got {r}")));
        }
        check_ball_in_grid(field.grid(), x0, r)?;
        volumes.push(polar_integral(field, x0, 0.0, r, &quad, |_, _| 1.0));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    let n = field.dim() as f64;
    let regularity_constant = radii
        .iter()
        .zip(&volumes)
        .map(|(r, v)| {
            let ratio = v / r.powf(n);
            ratio.max(1.0 / ratio)
        })
        .fold(1.0, f64::max);
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    Ok(AhlforsReport {
        radii: radii.to_vec(),
        volumes,
        exponent_fit: slope,
        prefactor_fit: intercept.exp(),
        regularity_constant,
        residual,
        consistent_with_dimension: (slope - n).abs() <= 0.05 * n,
        eigen_range: field.eigen_range_near(x0, rmax),
    })
}

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, rms residual)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    (a, b, (rss / m).sqrt())
}
