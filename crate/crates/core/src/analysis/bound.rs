use serde::{Deserialize, Serialize};

use super::{AnalysisError, PsiFunction, QField};
use crate::manifold::{check_ball_in_grid, euclid, polar_integral, MetricField, PolarQuadrature};
use crate::quad::log_radial_rule;

fn check_interval(eps: f64, eps0: f64) -> Result<(), AnalysisError> {
    if !(eps > 0.0 && eps < eps0 && eps0.is_finite()) {
        return Err(AnalysisError::InvalidInterval { eps, eps0 });
    }
    Ok(())
}

fn quadrature_integral(psi: &PsiFunction, a: f64, b: f64) -> Result<f64, AnalysisError> {
    let mut panels = 8;
    let mut prev = f64::NAN;
    loop {
        let mut total = 0.0;
        for (t, w) in log_radial_rule(a, b, panels, 8) {
            total += w * psi.eval(t)?;
        }
        if (total - prev).abs() <= 1e-6 * total.abs() || panels >= 512 {
            return Ok(total);
        }
        prev = total;
        panels *= 2;
    }
}

fn psi_integral(psi: &PsiFunction, a: f64, b: f64) -> Result<f64, AnalysisError> {
    if !(a < b) {
        return Ok(0.0);
    }
    // Checks the domain at the endpoints.
    psi.eval(a)?;
    if b > psi.upper() {
        psi.eval(b)?;
    }
    match psi.exact_integral(a, b) {
        Some(v) => Ok(v),
        None => quadrature_integral(psi, a, b.min(psi.upper())),
    }
}

/// `I(ε, ε0) = ∫_ε^{ε0} ψ(t) dt`, required to lie in `(0, ∞)`.
pub fn i_integral(psi: &PsiFunction, eps: f64, eps0: f64) -> Result<f64, AnalysisError> {
    check_interval(eps, eps0)?;
    let value = psi_integral(psi, eps, eps0)?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(AnalysisError::IntegralViolation { value });
    }
    Ok(value)
}

fn bound_quadrature(dim: usize) -> PolarQuadrature {
    PolarQuadrature { panels_per_decade: 4, order: 8, angular_points: if dim <= 2 { 64 } else { 32 }, core_fraction: 1e-12 }
}

fn check_annulus(q: &QField, x0: &[f64], eps: f64, eps0: f64, field: &MetricField) -> Result<(), AnalysisError> {
    if q.dim() != field.dim() {
        return Err(AnalysisError::DimensionMismatch { q: q.dim(), chart: field.dim() });
    }
    check_ball_in_grid(field.grid(), x0, eps0)?;
    if !q.is_integrable() {
        if let Some(p) = q.singular_points().iter().find(|p| {
            let d = euclid(p, x0);
            d >= eps && d <= eps0
        }) {
            return Err(AnalysisError::NonIntegrableSingularity { point: p.clone() });
        }
    }
    Ok(())
}

fn annulus_f(
    q: &QField,
    psi: &PsiFunction,
    x0: &[f64],
    r_in: f64,
    r_out: f64,
    field: &MetricField,
) -> Result<f64, AnalysisError> {
    let n = field.dim() as i32;
    let quad = bound_quadrature(field.dim());
    let mut err = None;
    let mut cached = (f64::NAN, 0.0);
    let value = polar_integral(field, x0, r_in, r_out, &quad, |p, t| {
        if t != cached.0 {
            let v = match psi.eval(t) {
                Ok(v) => v.powi(n),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
            cached = (t, v);
        }
        if cached.1 == 0.0 {
            return 0.0;
        }
        match q.eval_checked(p) {
            Ok(qv) => qv * cached.1,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `F = ∫_{ε < |x - x0| < ε0} Q(x) ψⁿ(|x - x0|) dv(x)`.
pub fn f_integral(
    q: &QField,
    psi: &PsiFunction,
    x0: &[f64],
    eps: f64,
    eps0: f64,
    field: &MetricField,
) -> Result<f64, AnalysisError> {
    check_interval(eps, eps0)?;
    check_annulus(q, x0, eps, eps0, field)?;
    annulus_f(q, psi, x0, eps, eps0, field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub eps: f64,
    pub f: f64,
    pub i: f64,
    /// `F / Iⁿ`.
    pub bound: f64,
}

/// Accumulates `F(ε, ε0)` and `I(ε, ε0)` along a decreasing sequence of `ε`.
#[derive(Debug, Clone)]
pub struct BoundProfile<'a> {
    q: &'a QField,
    psi: &'a PsiFunction,
    field: &'a MetricField,
    x0: Vec<f64>,
    eps0: f64,
    inner: f64,
    f: f64,
    i: f64,
}

impl<'a> BoundProfile<'a> {
    pub fn new(q: &'a QField, psi: &'a PsiFunction, x0: &[f64], eps0: f64, field: &'a MetricField) -> Result<Self, AnalysisError> {
        if !(eps0 > 0.0 && eps0.is_finite()) {
            return Err(AnalysisError::InvalidInterval { eps: 0.0, eps0 });
        }
        check_annulus(q, x0, 0.0, eps0, field)?;
        Ok(Self { q, psi, field, x0: x0.to_vec(), eps0, inner: eps0, f: 0.0, i: 0.0 })
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Moves the inner radius down to `eps` and returns the row there.
    pub fn extend_to(&mut self, eps: f64) -> Result<BoundRow, AnalysisError> {
        if !(eps > 0.0 && eps <= self.inner) {
            return Err(AnalysisError::InvalidInterval { eps, eps0: self.inner });
        }
        if eps < self.inner {
            self.f += annulus_f(self.q, self.psi, &self.x0, eps, self.inner, self.field)?;
            self.i += psi_integral(self.psi, eps, self.inner)?;
            self.inner = eps;
        }
        if !(self.i > 0.0 && self.i.is_finite()) {
            return Err(AnalysisError::IntegralViolation { value: self.i });
        }
        let n = self.field.dim() as i32;
        Ok(BoundRow { eps, f: self.f, i: self.i, bound: self.f / self.i.powi(n) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eps: f64,
    pub eps0: f64,
    pub f: f64,
    pub i: f64,
    /// Upper bound `F / Iⁿ` for the capacity of the image ring.
    pub bound: f64,
    /// The bound at `ε, ε/10, ε/100, ε/1000`.
    pub trend: Vec<BoundRow>,
    pub trend_nonincreasing: bool,
}

/// `cap(f(A)) ≤ F / Iⁿ` for a ring Q-mapping, with a short trend as `ε` shrinks.
pub fn capacity_upper_bound(
    q: &QField,
    x0: &[f64],
    eps: f64,
    eps0: f64,
    psi: &PsiFunction,
    field: &MetricField,
) -> Result<BoundReport, AnalysisError> {
    check_interval(eps, eps0)?;
    let mut profile = BoundProfile::new(q, psi, x0, eps0, field)?;
    let trend = (0..4).map(|k| profile.extend_to(eps * 10f64.powi(-k))).collect::<Result<Vec<_>, _>>()?;
    let first = trend[0];
    let trend_nonincreasing = trend.windows(2).all(|w| w[1].bound <= w[0].bound * (1.0 + 1e-9));
    Ok(BoundReport { eps, eps0, f: first.f, i: first.i, bound: first.bound, trend, trend_nonincreasing })
}
