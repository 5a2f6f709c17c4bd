use serde::{Deserialize, Serialize};

use super::{diameter_bound, EquicontinuityError, TargetGeometry};
use crate::analysis::{
    condition3_test, f_integral, fmo_indicator, i_integral, psi_fmo, psi_from_q, AnalysisError, BoundProfile, Condition3Options,
    Condition3Verdict, FmoVerdict, PsiFunction, QField,
};
use crate::manifold::MetricField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionChoice {
    /// Sphere-integral divergence first, then FMO.
    Auto,
    Fmo,
    Condition3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionBranch {
    Fmo,
    Condition3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateVerdict {
    Certified,
    Conditional,
    NotCertified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateOptions {
    pub criterion: CriterionChoice,
    /// Schedule points per decade of `ε`.
    pub per_decade: usize,
    /// The schedule always covers this many decades below `ε0`.
    pub min_decades: usize,
    /// It is extended up to this many decades while some `σ` is unresolved.
    pub max_decades: usize,
    /// Log-`ε` bisection steps between schedule points.
    pub bisection_steps: usize,
    /// Radii of the FMO indicator; empty uses `δ0 · 10^{-k}`, `k = 0..4`.
    pub fmo_eps: Vec<f64>,
    pub condition3: Condition3Options,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            criterion: CriterionChoice::Auto,
            per_decade: 4,
            min_decades: 8,
            max_decades: 60,
            bisection_steps: 40,
            fmo_eps: Vec::new(),
            condition3: Condition3Options::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub eps: f64,
    pub f: f64,
    pub i: f64,
    /// `F / Iⁿ`.
    pub bound: f64,
    pub diam_bound: f64,
    pub min_attained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaDelta {
    pub sigma: f64,
    /// Largest `ε` found with a guaranteed `diam f(B(x0, ε)) ≤ σ`.
    pub delta: Option<f64>,
    /// `F`, `I` and `F / Iⁿ` at `δ`.
    pub f: Option<f64>,
    pub i: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub x0: Vec<f64>,
    pub delta0: f64,
    pub eps0: f64,
    pub geometry: TargetGeometry,
    pub branch: CriterionBranch,
    pub fmo_verdict: Option<FmoVerdict>,
    pub condition3_verdict: Option<Condition3Verdict>,
    pub psi: String,
    pub rows: Vec<CertificateRow>,
    /// `diam_bound` is nonincreasing along the schedule.
    pub trend_nonincreasing: bool,
    pub table: Vec<SigmaDelta>,
    pub verdict: CertificateVerdict,
    pub notes: Vec<String>,
}

struct Criterion {
    branch: CriterionBranch,
    positive: bool,
    inconclusive: bool,
    fmo: Option<FmoVerdict>,
    cond3: Option<Condition3Verdict>,
}

fn choose_criterion(
    q: &QField,
    x0: &[f64],
    delta0: f64,
    field: &MetricField,
    opts: &CertificateOptions,
) -> Result<Criterion, EquicontinuityError> {
    let fmo = || -> Result<FmoVerdict, EquicontinuityError> {
        let eps = if opts.fmo_eps.is_empty() { (0..5).map(|k| delta0 * 10f64.powi(-k)).collect() } else { opts.fmo_eps.clone() };
        Ok(fmo_indicator(q, x0, &eps, field)?.verdict)
    };
    let cond3 = || -> Result<Condition3Verdict, EquicontinuityError> {
        Ok(condition3_test(q, x0, Some(delta0), field, &opts.condition3)?.verdict)
    };
    let from_fmo = |v: FmoVerdict, c: Option<Condition3Verdict>| Criterion {
        branch: CriterionBranch::Fmo,
        positive: v == FmoVerdict::Fmo,
        inconclusive: v == FmoVerdict::Inconclusive,
        fmo: Some(v),
        cond3: c,
    };
    let from_cond3 = |v: Condition3Verdict, f: Option<FmoVerdict>| Criterion {
        branch: CriterionBranch::Condition3,
        positive: v == Condition3Verdict::Divergent,
        inconclusive: v == Condition3Verdict::Inconclusive,
        fmo: f,
        cond3: Some(v),
    };
    Ok(match opts.criterion {
        CriterionChoice::Fmo => from_fmo(fmo()?, None),
        CriterionChoice::Condition3 => from_cond3(cond3()?, None),
        CriterionChoice::Auto => {
            let c = cond3()?;
            if c == Condition3Verdict::Divergent {
                from_cond3(c, None)
            } else {
                let f = fmo()?;
                if f == FmoVerdict::Fmo || (f == FmoVerdict::Inconclusive && c != Condition3Verdict::Inconclusive) {
                    from_fmo(f, Some(c))
                } else {
                    from_cond3(c, Some(f))
                }
            }
        }
    })
}

struct Chain<'a> {
    q: &'a QField,
    psi: &'a PsiFunction,
    x0: &'a [f64],
    field: &'a MetricField,
    geom: &'a TargetGeometry,
    n: i32,
}

impl Chain<'_> {
    fn row(&self, eps: f64, f: f64, i: f64) -> Result<CertificateRow, EquicontinuityError> {
        let bound = f / i.powi(self.n);
        let d = diameter_bound(bound, self.geom)?;
        Ok(CertificateRow { eps, f, i, bound, diam_bound: d.bound, min_attained: d.min_attained })
    }

    /// Row at `eps` inside `(below.eps, above.eps)`, from the increments over `(eps, above.eps)`.
    fn between(&self, above: &CertificateRow, eps: f64) -> Result<CertificateRow, EquicontinuityError> {
        let df = f_integral(self.q, self.psi, self.x0, eps, above.eps, self.field)?;
        let di = i_integral(self.psi, eps, above.eps).or_else(|e| match e {
            // ψ may vanish on a short stretch; the accumulated `I` is what must be positive.
            AnalysisError::IntegralViolation { value } if value == 0.0 => Ok(0.0),
            e => Err(e),
        })?;
        let i = above.i + di;
        if !(i > 0.0 && i.is_finite()) {
            return Err(AnalysisError::IntegralViolation { value: i }.into());
        }
        self.row(eps, above.f + df, i)
    }
}

fn good(row: &CertificateRow, sigma: f64) -> bool {
    row.min_attained && row.diam_bound <= sigma
}

/// σ ↦ δ(σ) table for every ring Q-mapping at `x0` into the target geometry.
///
/// `δ0` defaults to half the chart distance from `x0` to the grid boundary.
pub fn equicontinuity_certificate(
    q: &QField,
    x0: &[f64],
    delta0: Option<f64>,
    geom: &TargetGeometry,
    sigmas: &[f64],
    field: &MetricField,
    opts: &CertificateOptions,
) -> Result<CertificateReport, EquicontinuityError> {
    geom.validate()?;
    if geom.dim != field.dim() {
        return Err(EquicontinuityError::InvalidGeometry(format!(
            "target dimension {} differs from the chart dimension {}",
            geom.dim,
            field.dim()
        )));
    }
    if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(EquicontinuityError::Invalid("every σ must be positive".into()));
    }
    if opts.per_decade == 0 || opts.min_decades == 0 || opts.max_decades < opts.min_decades {
        return Err(EquicontinuityError::Invalid("need per_decade, min_decades ≥ 1 and max_decades ≥ min_decades".into()));
    }
    field.grid().check_inside(x0)?;
    let delta0 = delta0.unwrap_or_else(|| 0.5 * field.grid().distance_to_boundary(x0));
    if !(delta0 > 0.0) {
        return Err(EquicontinuityError::Invalid(format!("δ0 must be positive, got {delta0}")));
    }

    let crit = choose_criterion(q, x0, delta0, field, opts)?;
    let (psi, eps0) = match crit.branch {
        CriterionBranch::Condition3 => (psi_from_q(q, x0, delta0, field, &opts.condition3)?, delta0),
        CriterionBranch::Fmo => (psi_fmo(), delta0.min((-2.0f64).exp())),
    };
    let chain = Chain { q, psi: &psi, x0, field, geom, n: field.dim() as i32 };
    let mut profile = BoundProfile::new(q, &psi, x0, eps0, field)?;
    let step = 10f64.powf(-1.0 / opts.per_decade as f64);
    let floor = 1e-280f64.max(1e3 * f64::EPSILON * x0.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let mut rows: Vec<CertificateRow> = Vec::new();
    let mut k = 1;
    loop {
        let eps = eps0 * step.powi(k);
        if eps < floor {
            break;
        }
        let r = profile.extend_to(eps)?;
        rows.push(chain.row(r.eps, r.f, r.i)?);
        let decades = k / opts.per_decade as i32;
        let resolved = sigmas.iter().all(|&s| rows.iter().any(|row| good(row, s)));
        if decades as usize >= opts.max_decades || (decades as usize >= opts.min_decades && resolved) {
            break;
        }
        k += 1;
    }
    let trend_nonincreasing = rows.windows(2).all(|w| w[1].diam_bound <= w[0].diam_bound * (1.0 + 1e-9));

    let mut order: Vec<usize> = (0..sigmas.len()).collect();
    order.sort_by(|&a, &b| sigmas[a].total_cmp(&sigmas[b]));
    let mut table = vec![SigmaDelta { sigma: 0.0, delta: None, f: None, i: None, bound: None }; sigmas.len()];
    let mut best: Option<CertificateRow> = None;
    for &idx in &order {
        let sigma = sigmas[idx];
        let mut found = rows.iter().position(|r| good(r, sigma)).map(|first| {
            if first == 0 {
                return Ok(rows[0]);
            }
            let (mut hi, mut lo) = (rows[first - 1], rows[first]);
            for _ in 0..opts.bisection_steps {
                let mid = (hi.eps.ln() + lo.eps.ln()) / 2.0;
                let row = chain.between(&hi, mid.exp())?;
                if good(&row, sigma) {
                    lo = row;
                } else {
                    hi = row;
                }
            }
            Ok::<_, EquicontinuityError>(lo)
        });
        if let Some(r) = found.take() {
            let r = r?;
            // A δ valid for a smaller σ is valid for this one too.
            if best.map_or(true, |b| r.eps > b.eps) {
                best = Some(r);
            }
        }
        table[idx] = SigmaDelta {
            sigma,
            delta: best.map(|b| b.eps),
            f: best.map(|b| b.f),
            i: best.map(|b| b.i),
            bound: best.map(|b| b.bound),
        };
    }

    let unresolved = table.iter().any(|s| s.delta.is_none());
    let verdict = if crit.positive && trend_nonincreasing && !unresolved {
        CertificateVerdict::Certified
    } else if crit.inconclusive || (crit.positive && trend_nonincreasing) {
        CertificateVerdict::Conditional
    } else {
        CertificateVerdict::NotCertified
    };
    let mut notes = vec!["the (1;n)-Poincaré inequality on the target is assumed, not verified".to_string()];
    notes.push(format!("certificate is parametric in the Loewner constant C = {}", geom.c_loewner));
    if rows.iter().any(|r| !r.min_attained) {
        notes.push("min{diam f(C), diam K} = diam f(C) not established at some schedule points".into());
    }
    for s in &table {
        if s.delta.is_none() {
            notes.push(format!("σ = {} not reached within {} decades below ε0", s.sigma, opts.max_decades));
        }
    }
    Ok(CertificateReport {
        x0: x0.to_vec(),
        delta0,
        eps0,
        geometry: *geom,
        branch: crit.branch,
        fmo_verdict: crit.fmo,
        condition3_verdict: crit.cond3,
        psi: psi.description().to_string(),
        rows,
        trend_nonincreasing,
        table,
        verdict,
        notes,
    })
}

impl EquicontinuityError {
    /// A hypothesis of the capacity chain fails, as opposed to bad input or numerics.
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(
            self,
            Self::Analysis(AnalysisError::IntegralViolation { .. } | AnalysisError::NonIntegrableSingularity { .. })
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::grid::ChartGrid;
    use std::f64::consts::PI;

    fn plane() -> MetricField {
        MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 8).unwrap())
    }

    fn unit_geom() -> TargetGeometry {
        TargetGeometry::new(2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_q_follows_logarithmic_chain() {
        let field = plane();
        let sigmas = [0.2, 0.1, 0.3];
        let rep = equicontinuity_certificate(
            &QField::constant(2, 1.0),
            &[0.0, 0.0],
            Some(0.5),
            &unit_geom(),
            &sigmas,
            &field,
            &CertificateOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.branch, CriterionBranch::Condition3);
        assert_eq!(rep.verdict, CertificateVerdict::Certified);
        for s in &rep.table {
            let expect = (0.5f64).ln() - 2.0 * PI / s.sigma;
            let got = s.delta.unwrap().ln();
            assert!((got - expect).abs() < 0.01 * expect.abs(), "σ = {}: {got} vs {expect}", s.sigma);
        }
        let mut sorted = rep.table.clone();
        sorted.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
        assert!(sorted.windows(2).all(|w| w[0].delta <= w[1].delta));
    }

    #[test]
    fn convergent_power_is_not_certified() {
        let field = plane();
        let q = QField::from_expr(2, Expr::parse("(x1^2+x2^2)^(-0.25)").unwrap()).unwrap().with_singularity(vec![0.0, 0.0]);
        let rep = equicontinuity_certificate(&q, &[0.0, 0.0], Some(0.5), &unit_geom(), &[0.5], &field, &CertificateOptions::default())
            .unwrap();
        assert_ne!(rep.verdict, CertificateVerdict::Certified);
        assert_eq!(rep.condition3_verdict, Some(Condition3Verdict::Convergent));
    }

    #[test]
    fn fmo_branch_for_constant() {
        let field = plane();
        let opts = CertificateOptions { criterion: CriterionChoice::Fmo, max_decades: 20, ..Default::default() };
        let rep = equicontinuity_certificate(&QField::constant(2, 2.0), &[0.0, 0.0], Some(0.5), &unit_geom(), &[0.9], &field, &opts)
            .unwrap();
        assert_eq!(rep.branch, CriterionBranch::Fmo);
        assert_eq!(rep.eps0, (-2.0f64).exp());
        assert_eq!(rep.verdict, CertificateVerdict::Certified);
        assert!(rep.trend_nonincreasing);
    }

    #[test]
    fn unreachable_sigma_leaves_min_flag_unset() {
        let field = plane();
        let geom = TargetGeometry::new(2, 1.0, 0.01, 1.0).unwrap();
        let opts = CertificateOptions { min_decades: 2, max_decades: 4, ..Default::default() };
        let rep = equicontinuity_certificate(&QField::constant(2, 1.0), &[0.0, 0.0], Some(0.5), &geom, &[5.0], &field, &opts).unwrap();
        assert!(rep.table[0].delta.is_none());
        assert_eq!(rep.verdict, CertificateVerdict::Conditional);
        assert!(rep.rows.iter().all(|r| !r.min_attained));
        assert!(rep.notes.iter().any(|n| n.contains("not established")));
    }
}
