//! Weight functions `Q`: the finite-mean-oscillation indicator, the sphere-integral
//! divergence test, and the capacity bound `F / Iⁿ` for ring Q-mappings.

mod bound;
mod fmo;
mod psi;
mod shells;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::Expr;
use crate::manifold::{ManifoldError, ScalarFn};

pub use bound::{capacity_upper_bound, f_integral, i_integral, BoundProfile, BoundReport, BoundRow};
pub use fmo::{fmo_indicator, FmoReport, FmoVerdict};
pub use psi::{psi_fmo, PsiFunction};
pub use shells::{condition3_test, psi_from_q, Condition3Options, Condition3Report, Condition3Verdict, ShellTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("Q must be nonnegative, got {value} at {point:?}")]
    NegativeQ { point: Vec<f64>, value: f64 },
    #[error("singular point {point:?} of Q lies in the integration domain and Q is not tagged integrable")]
    NonIntegrableSingularity { point: Vec<f64> },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("hypothesis 0 < I(eps, eps0) < inf violated: I = {value}")]
    IntegralViolation { value: f64 },
    #[error("psi is defined on (0, 1/e) only, evaluated at t = {t}")]
    PsiDomain { t: f64 },
    #[error("invalid interval: need 0 < eps < eps0, got eps = {eps}, eps0 = {eps0}")]
    InvalidInterval { eps: f64, eps0: f64 },
    #[error("dimension mismatch: Q is {q}-dimensional, chart is {chart}-dimensional")]
    DimensionMismatch { q: usize, chart: usize },
}

#[derive(Clone)]
enum QEval {
    Constant(f64),
    Expr(Expr),
    Func(ScalarFn),
}

/// Nonnegative measurable weight `Q` on the chart.
#[derive(Clone)]
pub struct QField {
    dim: usize,
    eval: QEval,
    scale: f64,
    singular_points: Vec<Vec<f64>>,
    integrable: bool,
    description: String,
}

impl fmt::Debug for QField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QField")
            .field("description", &self.description)
            .field("singular_points", &self.singular_points)
            .field("integrable", &self.integrable)
            .finish()
    }
}

impl QField {
    pub fn constant(dim: usize, value: f64) -> Self {
        Self {
            dim,
            eval: QEval::Constant(value),
            scale: 1.0,
            singular_points: Vec::new(),
            integrable: true,
            description: format!("{value}"),
        }
    }

    pub fn from_expr(dim: usize, expr: Expr) -> Result<Self, AnalysisError> {
        if expr.max_variable() > dim {
            return Err(AnalysisError::DimensionMismatch { q: expr.max_variable(), chart: dim });
        }
        let description = expr.text().to_string();
        Ok(Self { dim, eval: QEval::Expr(expr), scale: 1.0, singular_points: Vec::new(), integrable: true, description })
    }

    pub fn from_fn(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, description: impl Into<String>) -> Self {
        Self {
            dim,
            eval: QEval::Func(Arc::new(f)),
            scale: 1.0,
            singular_points: Vec::new(),
            integrable: true,
            description: description.into(),
        }
    }

    /// Marks a point where `Q` may be infinite.
    pub fn with_singularity(mut self, point: Vec<f64>) -> Self {
        self.singular_points.push(point);
        self
    }

    pub fn with_integrable(mut self, integrable: bool) -> Self {
        self.integrable = integrable;
        self
    }

    /// `c · Q`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale *= factor;
        out.description = format!("{factor}*({})", self.description);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn singular_points(&self) -> &[Vec<f64>] {
        &self.singular_points
    }

    pub fn is_integrable(&self) -> bool {
        self.integrable
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.eval {
            QEval::Constant(c) => Some(c * self.scale),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = match &self.eval {
            QEval::Constant(c) => *c,
            QEval::Expr(e) => e.eval(x),
            QEval::Func(f) => f(x),
        };
        v * self.scale
    }

    /// Evaluates and rejects negative or NaN values.
    pub fn eval_checked(&self, x: &[f64]) -> Result<f64, AnalysisError> {
        let v = self.eval(x);
        if v.is_nan() || v < 0.0 {
            return Err(AnalysisError::NegativeQ { point: x.to_vec(), value: v });
        }
        Ok(v)
    }

    /// Errors when a marked non-integrable singularity lies within `radius` of `center`.
    pub(crate) fn check_singularities(&self, center: &[f64], radius: f64) -> Result<(), AnalysisError> {
        if self.integrable {
            return Ok(());
        }
        for p in &self.singular_points {
            let d = crate::manifold::euclid(p, center);
            if d <= radius {
                return Err(AnalysisError::NonIntegrableSingularity { point: p.clone() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_and_checked_evaluation() {
        let q = QField::from_expr(2, Expr::parse("1/sqrt(x1^2+x2^2)").unwrap()).unwrap();
        let q2 = q.scaled(2.0);
        assert_eq!(q2.eval(&[3.0, 4.0]), 0.4);
        let neg = QField::constant(2, -1.0);
        assert!(matches!(neg.eval_checked(&[0.0, 0.0]), Err(AnalysisError::NegativeQ { .. })));
        assert!(QField::from_expr(2, Expr::parse("x3").unwrap()).is_err());
    }

    #[test]
    fn non_integrable_singularity_is_reported() {
        let q = QField::constant(2, 1.0).with_singularity(vec![0.0, 0.0]).with_integrable(false);
        assert!(q.check_singularities(&[0.1, 0.0], 0.2).is_err());
        assert!(q.check_singularities(&[1.0, 0.0], 0.2).is_ok());
    }
}
