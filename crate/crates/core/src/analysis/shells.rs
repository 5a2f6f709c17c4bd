use serde::{Deserialize, Serialize};

use super::psi::{power_piece_integral, LogLogTable};
use super::{AnalysisError, PsiFunction, QField};
use crate::manifold::{check_ball_in_grid, euclid, linear_fit, surface_measure_with_rule, ManifoldError, MetricField};
use crate::quad::SphereRule;

/// Weighted sphere areas `a(t) = ∫_{S(x0,t)} Q dA` on a log-spaced radius table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellTable {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub areas: Vec<f64>,
    /// Azimuthal points of the angular rule that was used.
    pub angular_points: usize,
}

fn max_angular_exponent(dim: usize) -> u32 {
    match dim {
        2 => 14,
        3 => 9,
        _ => 6,
    }
}

/// Smallest `2^k` azimuthal resolution at which the area at `t` is stable to 0.5%.
fn angular_resolution(field: &MetricField, q: &QField, x0: &[f64], t: f64) -> usize {
    let mut prev = f64::NAN;
    let mut k = 5;
    loop {
        let rule = SphereRule::new(field.dim(), 1 << k);
        let cur = surface_measure_with_rule(field, x0, t, Some(q), &rule);
        if (cur - prev).abs() <= 0.005 * cur.abs() || k >= max_angular_exponent(field.dim()) {
            return rule.points;
        }
        prev = cur;
        k += 1;
    }
}

impl ShellTable {
    pub fn build(
        field: &MetricField,
        q: &QField,
        x0: &[f64],
        t_lo: f64,
        t_hi: f64,
        per_decade: usize,
    ) -> Result<Self, AnalysisError> {
        let n = field.dim();
        if q.dim() != n {
            return Err(AnalysisError::DimensionMismatch { q: q.dim(), chart: n });
        }
        if !(t_lo > 0.0 && t_lo < t_hi) {
            return Err(AnalysisError::InvalidInterval { eps: t_lo, eps0: t_hi });
        }
        check_ball_in_grid(field.grid(), x0, t_hi)?;
        if !q.is_integrable() {
            if let Some(p) = q.singular_points().iter().find(|p| {
                let d = euclid(p, x0);
                d >= t_lo && d <= t_hi
            }) {
                return Err(AnalysisError::NonIntegrableSingularity { point: p.clone() });
            }
        }
        let decades = (t_hi / t_lo).log10();
        let count = ((decades * per_decade as f64).ceil() as usize).max(2);
        let radii: Vec<f64> = (0..=count).map(|i| t_lo * (t_hi / t_lo).powf(i as f64 / count as f64)).collect();

        let mid = (t_lo * t_hi).sqrt();
        let points = [t_lo, mid, t_hi].iter().map(|&t| angular_resolution(field, q, x0, t)).max().unwrap_or(32);
        let rule = SphereRule::new(n, points);

        let mut p = vec![0.0; n];
        let mut areas = Vec::with_capacity(radii.len());
        for &t in &radii {
            for dir in &rule.directions {
                for k in 0..n {
                    p[k] = x0[k] + t * dir[k];
                }
                q.eval_checked(&p)?;
            }
            areas.push(surface_measure_with_rule(field, x0, t, Some(q), &rule));
        }
        Ok(Self { center: x0.to_vec(), radii, areas, angular_points: points })
    }
}

/// Smallest radius that still resolves a displacement from `x0` in floating point.
fn resolvable_radius(x0: &[f64]) -> f64 {
    let scale = x0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    1e3 * f64::EPSILON * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition3Options {
    /// Smallest radius of the table as a fraction of `δ`.
    pub t_min_ratio: f64,
    pub points_per_decade: usize,
}

impl Default for Condition3Options {
    fn default() -> Self {
        Self { t_min_ratio: 1e-12, points_per_decade: 10 }
    }
}

/// `ψ(t) = a(t)^{1/(1-n)}` from a weighted shell table on `[t_min, δ]`,
/// log–log interpolated, power-law extrapolated below the table, zero beyond `δ`.
pub fn psi_from_q(
    q: &QField,
    x0: &[f64],
    delta: f64,
    field: &MetricField,
    opts: &Condition3Options,
) -> Result<PsiFunction, AnalysisError> {
    let t_lo = (delta * opts.t_min_ratio).max(resolvable_radius(x0));
    let table = ShellTable::build(field, q, x0, t_lo, delta, opts.points_per_decade)?;
    let n = field.dim() as f64;
    let values = table.areas.iter().map(|&a| shell_integrand(a, n)).collect();
    Ok(PsiFunction::tabulated(
        LogLogTable { t: table.radii, values },
        format!("a_Q(t)^(1/(1-n)), Q = {}", q.description()),
    ))
}

fn shell_integrand(a: f64, n: f64) -> f64 {
    if a > 0.0 {
        a.powf(1.0 / (1.0 - n))
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition3Verdict {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition3Report {
    pub delta: f64,
    pub radii: Vec<f64>,
    pub areas: Vec<f64>,
    /// `a(t)^{1/(1-n)}`.
    pub integrand: Vec<f64>,
    /// `∫_{t_i}^{δ} a^{1/(1-n)} dt`.
    pub partial_integrals: Vec<f64>,
    /// Log–log slope of the integrand over the two smallest decades.
    pub tail_slope: f64,
    pub fit_residual: f64,
    /// Increment over the smallest decade divided by the increment over the next one.
    pub decade_increment_ratio: f64,
    /// Power-law estimate of `∫_0^{t_min}`; infinite when the slope is `≤ -1`.
    pub tail_estimate: f64,
    pub angular_points: usize,
    pub verdict: Condition3Verdict,
    pub warnings: Vec<String>,
}

/// Tests divergence of `∫_0^δ dt / a_Q(t)^{1/(n-1)}`.
///
/// `δ` defaults to half the chart distance from `x0` to the grid boundary.
pub fn condition3_test(
    q: &QField,
    x0: &[f64],
    delta: Option<f64>,
    field: &MetricField,
    opts: &Condition3Options,
) -> Result<Condition3Report, AnalysisError> {
    let n = field.dim() as f64;
    field.grid().check_inside(x0).map_err(AnalysisError::from)?;
    let delta = match delta {
        Some(d) => d,
        None => 0.5 * field.grid().distance_to_boundary(x0),
    };
    if !(delta > 0.0) {
        return Err(ManifoldError::InvalidSphere(format!("delta must be positive, got {delta}")).into());
    }
    let t_lo = (delta * opts.t_min_ratio).max(resolvable_radius(x0));
    let table = ShellTable::build(field, q, x0, t_lo, delta, opts.points_per_decade)?;
    let integrand: Vec<f64> = table.areas.iter().map(|&a| shell_integrand(a, n)).collect();
    let loglog = LogLogTable { t: table.radii.clone(), values: integrand.clone() };

    let m = table.radii.len();
    let mut partial = vec![0.0; m];
    for i in (0..m - 1).rev() {
        partial[i] = partial[i + 1] + loglog.integral(table.radii[i], table.radii[i + 1]);
    }

    let mut warnings = Vec::new();
    if let Some(i) = table.areas.iter().position(|&a| !(a > 0.0)) {
        warnings.push(format!("degenerate shell: a(t) = 0 at t = {:e}", table.radii[i]));
        return Ok(Condition3Report {
            delta,
            radii: table.radii,
            areas: table.areas,
            integrand,
            partial_integrals: partial,
            tail_slope: f64::NAN,
            fit_residual: f64::NAN,
            decade_increment_ratio: f64::NAN,
            tail_estimate: f64::INFINITY,
            angular_points: table.angular_points,
            verdict: Condition3Verdict::Divergent,
            warnings,
        });
    }

    let t_min = table.radii[0];
    let fit_idx: Vec<usize> = (0..m).filter(|&i| table.radii[i] <= t_min * 100.0 * (1.0 + 1e-9)).collect();
    let xs: Vec<f64> = fit_idx.iter().map(|&i| table.radii[i].ln()).collect();
    let ys: Vec<f64> = fit_idx.iter().map(|&i| integrand[i].ln()).collect();
    let (slope, _, residual) = linear_fit(&xs, &ys);

    let inc_small = loglog.integral(t_min, (t_min * 10.0).min(delta));
    let inc_next = loglog.integral((t_min * 10.0).min(delta), (t_min * 100.0).min(delta));
    let ratio = if inc_next > 0.0 { inc_small / inc_next } else { f64::INFINITY };
    let total = partial[0];
    let tail = if slope > -1.0 {
        let c = integrand[0] / t_min.powf(slope);
        power_piece_integral(c, slope, 0.0, t_min)
    } else {
        f64::INFINITY
    };

    let verdict = if slope <= -1.0 + 0.05 && ratio >= 0.9 {
        Condition3Verdict::Divergent
    } else if slope > -1.0 + 0.05 && tail < 0.01 * total {
        Condition3Verdict::Convergent
    } else {
        Condition3Verdict::Inconclusive
    };
    if t_lo > delta * opts.t_min_ratio {
        warnings.push(format!("table truncated at t = {t_lo:e} by floating-point resolution around x0"));
    }
    Ok(Condition3Report {
        delta,
        radii: table.radii,
        areas: table.areas,
        integrand,
        partial_integrals: partial,
        tail_slope: slope,
        fit_residual: residual,
        decade_increment_ratio: ratio,
        tail_estimate: tail,
        angular_points: table.angular_points,
        verdict,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::grid::ChartGrid;
    use approx::assert_relative_eq;

    fn plane() -> MetricField {
        MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 8).unwrap())
    }

    fn q_expr(dim: usize, text: &str) -> QField {
        QField::from_expr(dim, Expr::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn constant_q_diverges() {
        let r = condition3_test(&QField::constant(2, 1.0), &[0.0, 0.0], Some(0.5), &plane(), &Default::default()).unwrap();
        assert_eq!(r.verdict, Condition3Verdict::Divergent);
        assert_relative_eq!(r.tail_slope, -1.0, epsilon = 1e-6);
        assert_relative_eq!(r.areas[r.areas.len() - 1], std::f64::consts::PI, max_relative = 1e-6);
    }

    #[test]
    fn log_weight_diverges() {
        let r = condition3_test(&q_expr(2, "log(1/sqrt(x1^2+x2^2))"), &[0.0, 0.0], Some(0.5), &plane(), &Default::default()).unwrap();
        assert_eq!(r.verdict, Condition3Verdict::Divergent, "{r:?}");
    }

    #[test]
    fn power_weight_converges() {
        let r = condition3_test(&q_expr(2, "(x1^2+x2^2)^(-0.125)"), &[0.0, 0.0], Some(0.5), &plane(), &Default::default()).unwrap();
        assert_eq!(r.verdict, Condition3Verdict::Convergent);
        assert_relative_eq!(r.tail_slope, -0.75, epsilon = 1e-6);
    }

    #[test]
    fn zero_shell_is_flagged() {
        let r = condition3_test(&QField::constant(2, 0.0), &[0.0, 0.0], Some(0.5), &plane(), &Default::default()).unwrap();
        assert_eq!(r.verdict, Condition3Verdict::Divergent);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn psi_from_constant_q() {
        let psi = psi_from_q(&QField::constant(2, 1.0), &[0.0, 0.0], 0.5, &plane(), &Default::default()).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert_relative_eq!(psi.eval(0.1).unwrap(), 1.0 / (two_pi * 0.1), max_relative = 1e-6);
        assert_relative_eq!(psi.eval(1e-14).unwrap(), 1.0 / (two_pi * 1e-14), max_relative = 1e-5);
        assert_eq!(psi.eval(0.6).unwrap(), 0.0);
        assert_relative_eq!(psi.exact_integral(0.01, 0.1).unwrap(), 10f64.ln() / two_pi, max_relative = 1e-6);
    }
}
