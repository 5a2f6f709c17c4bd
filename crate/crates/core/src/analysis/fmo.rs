use serde::{Deserialize, Serialize};

use super::{AnalysisError, QField};
use crate::manifold::{check_ball_in_grid, linear_fit, polar_integral, MetricField, PolarQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FmoVerdict {
    Fmo,
    NotFmo,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmoReport {
    /// Radii, largest first.
    pub eps: Vec<f64>,
    pub ball_volumes: Vec<f64>,
    pub means: Vec<f64>,
    /// Mean oscillation `⨍_B |Q − Q_B| dμ`.
    pub oscillations: Vec<f64>,
    /// Log–log slope of oscillation against radius.
    pub slope: f64,
    pub residual: f64,
    /// `max / median` of the oscillations over the two smallest decades.
    pub tail_ratio: f64,
    pub verdict: FmoVerdict,
}

fn fmo_quadrature(dim: usize) -> PolarQuadrature {
    PolarQuadrature { panels_per_decade: 8, order: 8, angular_points: if dim <= 2 { 64 } else { 32 }, core_fraction: 1e-12 }
}

fn ball_average(
    field: &MetricField,
    q: &QField,
    x0: &[f64],
    eps: f64,
    quad: &PolarQuadrature,
) -> Result<(f64, f64, f64), AnalysisError> {
    let mut err = None;
    let vol = polar_integral(field, x0, 0.0, eps, quad, |_, _| 1.0);
    let total = polar_integral(field, x0, 0.0, eps, quad, |p, _| match q.eval_checked(p) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mean = total / vol;
    let osc = polar_integral(field, x0, 0.0, eps, quad, |p, _| (q.eval(p) - mean).abs()) / vol;
    Ok((vol, mean, osc))
}

/// Mean oscillation of `Q` over balls `B(x0, ε)`, classified by its trend as `ε → 0`.
///
/// Needs at least four radii spanning two decades.
pub fn fmo_indicator(q: &QField, x0: &[f64], eps_list: &[f64], field: &MetricField) -> Result<FmoReport, AnalysisError> {
    if q.dim() != field.dim() {
        return Err(AnalysisError::DimensionMismatch { q: q.dim(), chart: field.dim() });
    }
    if eps_list.len() < 4 {
        return Err(AnalysisError::InsufficientData(format!("need at least 4 radii, got {}", eps_list.len())));
    }
    let mut eps = eps_list.to_vec();
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(AnalysisError::InsufficientData("radii must be positive and finite".into()));
    }
    eps.sort_by(|a, b| b.total_cmp(a));
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(AnalysisError::InsufficientData("radii must be distinct".into()));
    }
    let (big, small) = (eps[0], eps[eps.len() - 1]);
    if big / small < 100.0 * (1.0 - 1e-12) {
        return Err(AnalysisError::InsufficientData(format!(
            "radii must span at least two decades, got {big:e}..{small:e}"
        )));
    }
    check_ball_in_grid(field.grid(), x0, big)?;
    q.check_singularities(x0, big)?;

    let quad = fmo_quadrature(field.dim());
    let mut ball_volumes = Vec::with_capacity(eps.len());
    let mut means = Vec::with_capacity(eps.len());
    let mut oscillations = Vec::with_capacity(eps.len());
    for &e in &eps {
        let (v, m, o) = ball_average(field, q, x0, e, &quad)?;
        ball_volumes.push(v);
        means.push(m);
        oscillations.push(o);
    }

    let zero = oscillations.iter().zip(&means).all(|(o, m)| *o <= 1e-10 * m.abs().max(1.0));
    let (slope, residual) = if zero {
        (0.0, 0.0)
    } else {
        let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = oscillations.iter().map(|o| o.max(f64::MIN_POSITIVE).ln()).collect();
        let (a, _, r) = linear_fit(&xs, &ys);
        (a, r)
    };
    let mut tail: Vec<f64> = eps.iter().zip(&oscillations).filter(|(e, _)| **e <= small * 100.0 * (1.0 + 1e-9)).map(|(_, o)| *o).collect();
    tail.sort_by(f64::total_cmp);
    let median = tail[tail.len() / 2];
    let max = tail[tail.len() - 1];
    let tail_ratio = if median > 0.0 { max / median } else if max > 0.0 { f64::INFINITY } else { 1.0 };

    let verdict = if zero {
        FmoVerdict::Fmo
    } else if slope <= -0.5 && residual < 0.1 {
        FmoVerdict::NotFmo
    } else if tail_ratio < 10.0 {
        FmoVerdict::Fmo
    } else {
        FmoVerdict::Inconclusive
    };
    Ok(FmoReport { eps, ball_volumes, means, oscillations, slope, residual, tail_ratio, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::grid::ChartGrid;
    use approx::assert_relative_eq;

    fn eps() -> Vec<f64> {
        vec![0.1, 0.01, 0.001, 0.0001]
    }

    #[test]
    fn constant_is_fmo() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 4).unwrap());
        let r = fmo_indicator(&QField::constant(2, 3.0), &[0.0, 0.0], &eps(), &field).unwrap();
        assert_eq!(r.verdict, FmoVerdict::Fmo);
        assert_relative_eq!(r.means[0], 3.0, max_relative = 1e-10);
        assert_relative_eq!(r.ball_volumes[0], std::f64::consts::PI * 0.01, max_relative = 1e-8);
    }

    #[test]
    fn inverse_radius_is_not_fmo() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 4).unwrap());
        let q = QField::from_expr(2, Expr::parse("1/sqrt(x1^2+x2^2)").unwrap()).unwrap();
        let r = fmo_indicator(&q, &[0.0, 0.0], &eps(), &field).unwrap();
        assert_eq!(r.verdict, FmoVerdict::NotFmo);
        assert_relative_eq!(r.slope, -1.0, epsilon = 0.01);
        assert_relative_eq!(r.means[1], 200.0, max_relative = 1e-6);
    }

    #[test]
    fn log_is_fmo() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 4).unwrap());
        let q = QField::from_expr(2, Expr::parse("log(1/sqrt(x1^2+x2^2))").unwrap()).unwrap();
        let r = fmo_indicator(&q, &[0.0, 0.0], &eps(), &field).unwrap();
        assert_eq!(r.verdict, FmoVerdict::Fmo);
        // Exact oscillation of log(1/|x|) on planar balls is 1/e.
        assert_relative_eq!(r.oscillations[2], 1.0 / std::f64::consts::E, max_relative = 1e-3);
    }

    #[test]
    fn rejects_short_schedules() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 4).unwrap());
        let q = QField::constant(2, 1.0);
        assert!(fmo_indicator(&q, &[0.0, 0.0], &[0.1, 0.05, 0.02], &field).is_err());
        assert!(fmo_indicator(&q, &[0.0, 0.0], &[0.1, 0.05, 0.02, 0.01], &field).is_err());
    }
}
