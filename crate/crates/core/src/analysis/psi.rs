use std::fmt;
use std::sync::Arc;

use super::AnalysisError;

/// `∫_a^b c t^β dt`.
pub(crate) fn power_piece_integral(c: f64, beta: f64, a: f64, b: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let p = beta + 1.0;
    if p.abs() < 1e-12 {
        c * (b / a).ln()
    } else if p.abs() < 1e-6 {
        // Series in p avoids cancellation near β = -1.
        let l = (b / a).ln();
        let la = a.ln();
        c * l * (1.0 + 0.5 * p * (l + 2.0 * la))
    } else {
        c * (b.powf(p) - a.powf(p)) / p
    }
}

/// Log–log piecewise-linear table: `ln ψ` is linear in `ln t` between knots.
#[derive(Debug, Clone)]
pub(crate) struct LogLogTable {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl LogLogTable {
    fn slope(&self, i: usize) -> f64 {
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        if v0 <= 0.0 || v1 <= 0.0 || !v0.is_finite() || !v1.is_finite() {
            return 0.0;
        }
        (v1 / v0).ln() / (self.t[i + 1] / self.t[i]).ln()
    }

    /// Piece containing `t` (clamped to the first/last piece).
    fn piece(&self, t: f64) -> usize {
        let m = self.t.len();
        match self.t.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(m - 2),
            Err(i) => i.saturating_sub(1).min(m - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.t[self.t.len() - 1];
        if !(t > 0.0) || t > last {
            return 0.0;
        }
        let i = self.piece(t);
        let v0 = self.values[i];
        if !v0.is_finite() || v0 <= 0.0 {
            return v0;
        }
        v0 * (t / self.t[i]).powf(self.slope(i))
    }

    /// Exact integral of the interpolant over `[a, b]`, extrapolating the first
    /// piece below the table.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let last = self.t[self.t.len() - 1];
        let b = b.min(last);
        if !(a < b) {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        while lo < b {
            let i = self.piece(lo);
            let hi = if i + 1 < self.t.len() && self.t[i + 1] > lo { self.t[i + 1].min(b) } else { b };
            let (v0, beta) = (self.values[i], self.slope(i));
            if !v0.is_finite() {
                return f64::INFINITY;
            }
            let c = v0 / self.t[i].powf(beta);
            total += power_piece_integral(c, beta, lo, hi);
            if hi <= lo {
                break;
            }
            lo = hi;
        }
        total
    }
}

#[derive(Clone)]
enum PsiKind {
    Fmo,
    PowerLaw { coef: f64, exponent: f64 },
    Tabulated(LogLogTable),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Nonnegative measurable `ψ` on `(0, upper)`, zero beyond.
#[derive(Clone)]
pub struct PsiFunction {
    kind: PsiKind,
    upper: f64,
    description: String,
}

impl fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiFunction").field("description", &self.description).field("upper", &self.upper).finish()
    }
}

/// `ψ(t) = 1 / (t log(1/t))` on `(0, 1/e)`.
pub fn psi_fmo() -> PsiFunction {
    PsiFunction { kind: PsiKind::Fmo, upper: (-1.0f64).exp(), description: "1/(t*log(1/t))".into() }
}

impl PsiFunction {
    /// `coef · t^exponent` on `(0, upper)`.
    pub fn power_law(coef: f64, exponent: f64, upper: f64) -> Self {
        Self {
            kind: PsiKind::PowerLaw { coef, exponent },
            upper,
            description: format!("{coef}*t^({exponent})"),
        }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, upper: f64, description: impl Into<String>) -> Self {
        Self { kind: PsiKind::Custom(Arc::new(f)), upper, description: description.into() }
    }

    pub(crate) fn tabulated(table: LogLogTable, description: impl Into<String>) -> Self {
        let upper = table.t[table.t.len() - 1];
        Self { kind: PsiKind::Tabulated(table), upper, description: description.into() }
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn has_exact_integral(&self) -> bool {
        !matches!(self.kind, PsiKind::Custom(_))
    }

    pub fn eval(&self, t: f64) -> Result<f64, AnalysisError> {
        match &self.kind {
            PsiKind::Fmo => {
                if !(t > 0.0 && t < self.upper) {
                    return Err(AnalysisError::PsiDomain { t });
                }
                Ok(1.0 / (t * (1.0 / t).ln()))
            }
            _ if !(t > 0.0 && t <= self.upper) => Ok(0.0),
            PsiKind::PowerLaw { coef, exponent } => Ok(coef * t.powf(*exponent)),
            PsiKind::Tabulated(tab) => Ok(tab.eval(t)),
            PsiKind::Custom(f) => Ok(f(t)),
        }
    }

    /// Exact `∫_a^b ψ` when a closed form is known.
    pub fn exact_integral(&self, a: f64, b: f64) -> Option<f64> {
        let b = b.min(self.upper);
        if !(a < b) {
            return Some(0.0);
        }
        match &self.kind {
            PsiKind::Fmo => Some((1.0 / a).ln().ln() - (1.0 / b).ln().ln()),
            PsiKind::PowerLaw { coef, exponent } => Some(power_piece_integral(*coef, *exponent, a, b)),
            PsiKind::Tabulated(tab) => Some(tab.integral(a, b)),
            PsiKind::Custom(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fmo_values_and_domain() {
        let psi = psi_fmo();
        assert_relative_eq!(psi.eval(0.1).unwrap(), 1.0 / (0.1 * 10f64.ln()), max_relative = 1e-14);
        assert!(psi.eval(0.5).is_err());
        assert!(psi.eval(0.0).is_err());
        let exact = psi.exact_integral(1e-3, 0.1).unwrap();
        assert_relative_eq!(exact, (1000f64.ln() / 10f64.ln()).ln(), max_relative = 1e-14);
    }

    #[test]
    fn power_pieces() {
        assert_relative_eq!(power_piece_integral(2.0, 1.0, 0.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(power_piece_integral(1.0, -1.0, 1.0, std::f64::consts::E), 1.0, epsilon = 1e-15);
        let near = power_piece_integral(1.0, -1.0 + 1e-8, 0.5, 2.0);
        assert_relative_eq!(near, 4f64.ln(), max_relative = 1e-7);
    }

    #[test]
    fn loglog_table_reproduces_power_law() {
        let t: Vec<f64> = (0..20).map(|k| 10f64.powf(-3.0 + 0.1 * k as f64)).collect();
        let values = t.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        let tab = LogLogTable { t, values };
        assert_relative_eq!(tab.eval(2e-3), 3.0 * 2e-3f64.powf(-0.5), max_relative = 1e-12);
        assert_relative_eq!(tab.eval(1e-5), 3.0 * 1e-5f64.powf(-0.5), max_relative = 1e-10);
        let hi = 10f64.powf(-1.1);
        let exact = 6.0 * (hi.sqrt() - 1e-5f64.sqrt());
        assert_relative_eq!(tab.integral(1e-5, hi), exact, max_relative = 1e-10);
        assert_eq!(tab.eval(1.0), 0.0);
    }
}
