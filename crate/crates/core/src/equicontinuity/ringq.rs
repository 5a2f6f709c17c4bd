use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EquicontinuityError, MappingKind, MappingSpec};
use crate::analysis::QField;
use crate::grid::ChartGrid;
use crate::manifold::{polar_integral, CurvePolyline, MetricField, PolarQuadrature};
use crate::modulus::{modulus_lower, sample_ring_curves, BracketPlan, CurveFamily, Perturbation, RingSpec, SolverOptions};
use crate::quad::GaussLegendre;

/// Radial weight `η` on `(r1, r2)`.
#[derive(Clone)]
pub enum RadialWeight {
    /// `1 / (r2 - r1)`.
    Uniform,
    /// `1 / (t log(r2/r1))`.
    Extremal,
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, label: String },
}

impl fmt::Debug for RadialWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl RadialWeight {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, label: impl Into<String>) -> Self {
        Self::Custom { f: Arc::new(f), label: label.into() }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Uniform => "uniform".into(),
            Self::Extremal => "extremal".into(),
            Self::Custom { label, .. } => label.clone(),
        }
    }

    fn eval(&self, t: f64, r1: f64, r2: f64) -> f64 {
        match self {
            Self::Uniform => 1.0 / (r2 - r1),
            Self::Extremal => 1.0 / (t * (r2 / r1).ln()),
            Self::Custom { f, .. } => f(t),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingQOptions {
    /// Ring curves; 0 uses the modulus bracket default for the dimension.
    pub curves: usize,
    pub seed: u64,
    /// Target grid cells per axis; 0 gives 256 in the plane, 64 in space.
    pub target_cells: usize,
    /// Margin around the bounding box of the image curves, relative to its size.
    pub margin: f64,
    /// Relative slack of the inequality.
    pub tol: f64,
    /// `η` passes normalization when `∫ η ≥ 1 - norm_tol`.
    pub norm_tol: f64,
    pub solver: SolverOptions,
}

impl Default for RingQOptions {
    fn default() -> Self {
        Self { curves: 0, seed: 0, target_cells: 0, margin: 0.1, tol: 0.03, norm_tol: 1e-3, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaCheck {
    pub eta: String,
    /// `∫_{r1}^{r2} η(t) dt`.
    pub normalization: f64,
    pub accepted: bool,
    /// `∫_A Q ηⁿ dv`; absent for rejected weights.
    pub right: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingQReport {
    pub mapping: MappingKind,
    pub q: String,
    pub ring: RingSpec,
    pub curves: usize,
    pub target_lo: Vec<f64>,
    pub target_hi: Vec<f64>,
    pub target_cells: usize,
    /// Lower bound for the modulus of the image family.
    pub left_lower: f64,
    /// Energy of an admissible density for the sampled image family.
    pub left_primal: f64,
    pub etas: Vec<EtaCheck>,
    pub tol: f64,
    /// Every accepted `η` passes, and at least one was accepted.
    pub pass: bool,
}

fn normalization(eta: &RadialWeight, r1: f64, r2: f64) -> f64 {
    let gl = GaussLegendre::new(16);
    let panels = 64;
    let ratio = (r2 / r1).powf(1.0 / panels as f64);
    (0..panels)
        .map(|k| {
            let (a, b) = (r1 * ratio.powi(k), r1 * ratio.powi(k + 1));
            gl.integrate(a, b.min(r2), |t| eta.eval(t, r1, r2))
        })
        .sum()
}

fn image_family(f: &MappingSpec, ring: &RingSpec, field: &MetricField, count: usize, seed: u64) -> Result<Vec<CurvePolyline>, EquicontinuityError> {
    let family = sample_ring_curves(ring, field.grid(), count, Perturbation::NONE, seed)?;
    let step = field.grid().min_spacing() / 4.0;
    let mut out = Vec::with_capacity(family.len());
    for c in family.curves() {
        let image = c.densified(step).map_vertices(|x| f.apply(x))?;
        out.push(image);
    }
    Ok(out)
}

/// Spot check of `M(f(Γ(S1, S2, A))) ≤ ∫_A Q ηⁿ dv` for each weight `η`.
///
/// The image family is the forward image of sampled ring curves; its modulus
/// is bracketed on a Euclidean target grid covering the images.
pub fn ring_q_verify(
    f: &MappingSpec,
    ring: &RingSpec,
    q: &QField,
    etas: &[RadialWeight],
    field: &MetricField,
    opts: &RingQOptions,
) -> Result<RingQReport, EquicontinuityError> {
    let n = field.dim();
    if f.dim() != n || ring.dim() != n || q.dim() != n {
        return Err(EquicontinuityError::Invalid("mapping, ring, Q and chart dimensions differ".into()));
    }
    if etas.is_empty() {
        return Err(EquicontinuityError::Invalid("need at least one radial weight".into()));
    }
    ring.check_in_grid(field.grid())?;
    let count = if opts.curves == 0 { BracketPlan::for_dim(n).curves } else { opts.curves };
    let images = image_family(f, ring, field, count, opts.seed)?;

    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for c in &images {
        for v in c.vertices() {
            for k in 0..n {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
    }
    let size = (0..n).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    if !(size > 0.0 && size.is_finite()) {
        return Err(EquicontinuityError::InvalidMapping("image curves collapse to a point".into()));
    }
    for k in 0..n {
        lo[k] -= opts.margin * size;
        hi[k] += opts.margin * size;
    }
    let cells = if opts.target_cells > 0 {
        opts.target_cells
    } else if n <= 2 {
        256
    } else {
        64
    };
    let target = MetricField::euclidean(ChartGrid::bounding(&lo, &hi, cells)?);
    let left = modulus_lower(&CurveFamily::user(images)?, &target, &opts.solver)?;

    let quad = PolarQuadrature { panels_per_decade: 16, order: 8, angular_points: if n <= 2 { 128 } else { 48 }, core_fraction: 1e-12 };
    let mut checks = Vec::with_capacity(etas.len());
    for eta in etas {
        let norm = normalization(eta, ring.r1, ring.r2);
        if !(norm >= 1.0 - opts.norm_tol) {
            checks.push(EtaCheck { eta: eta.label(), normalization: norm, accepted: false, right: None, pass: None });
            continue;
        }
        let mut bad = None;
        let right = polar_integral(field, &ring.x0, ring.r1, ring.r2, &quad, |p, t| match q.eval_checked(p) {
            Ok(v) => v * eta.eval(t, ring.r1, ring.r2).powi(n as i32),
            Err(e) => {
                bad.get_or_insert(e);
                0.0
            }
        });
        if let Some(e) = bad {
            return Err(e.into());
        }
        let pass = left.lower <= right * (1.0 + opts.tol);
        checks.push(EtaCheck { eta: eta.label(), normalization: norm, accepted: true, right: Some(right), pass: Some(pass) });
    }
    let accepted = checks.iter().filter(|c| c.accepted).count();
    let pass = accepted > 0 && checks.iter().all(|c| c.pass != Some(false));
    Ok(RingQReport {
        mapping: f.kind().clone(),
        q: q.description().to_string(),
        ring: ring.clone(),
        curves: count,
        target_lo: lo,
        target_hi: hi,
        target_cells: cells,
        left_lower: left.lower,
        left_primal: left.primal,
        etas: checks,
        tol: opts.tol,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equicontinuity::dilatation_field;
    use std::f64::consts::{E, PI};

    fn plane() -> MetricField {
        MetricField::euclidean(ChartGrid::cube(2, -3.0, 3.0, 64).unwrap())
    }

    fn small() -> RingQOptions {
        RingQOptions { curves: 256, target_cells: 96, ..Default::default() }
    }

    #[test]
    fn normalization_of_shipped_weights() {
        assert!((normalization(&RadialWeight::Uniform, 1.0, E) - 1.0).abs() < 1e-12);
        assert!((normalization(&RadialWeight::Extremal, 1.0, E) - 1.0).abs() < 1e-12);
        let half = RadialWeight::custom(|_| 0.25, "quarter");
        assert!((normalization(&half, 1.0, 3.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejected_weight_is_reported() {
        let field = plane();
        let ring = RingSpec::chart(vec![0.0, 0.0], 1.0, E).unwrap();
        let etas = [RadialWeight::custom(|_| 0.1, "too small"), RadialWeight::Extremal];
        let rep = ring_q_verify(&MappingSpec::identity(2), &ring, &QField::constant(2, 1.0), &etas, &field, &small()).unwrap();
        assert!(!rep.etas[0].accepted);
        assert!(rep.etas[1].accepted);
        assert!(rep.pass);
    }

    #[test]
    fn identity_uniform_weight() {
        let field = plane();
        let ring = RingSpec::chart(vec![0.0, 0.0], 1.0, E).unwrap();
        let rep =
            ring_q_verify(&MappingSpec::identity(2), &ring, &QField::constant(2, 1.0), &[RadialWeight::Uniform], &field, &small())
                .unwrap();
        let closed = PI * (E + 1.0) / (E - 1.0);
        assert!((rep.etas[0].right.unwrap() / closed - 1.0).abs() < 1e-8);
        assert!(rep.pass);
        assert!(rep.left_lower <= 2.0 * PI * 1.03);
    }

    #[test]
    fn stretch_needs_its_dilatation() {
        let field = plane();
        let ring = RingSpec::chart(vec![0.0, 0.0], 1.0, E).unwrap();
        let f = MappingSpec::radial_stretch(vec![0.0, 0.0], 0.5).unwrap();
        let q = dilatation_field(&f, &field).unwrap();
        let eta = [RadialWeight::Extremal];
        let good = ring_q_verify(&f, &ring, &q, &eta, &field, &small()).unwrap();
        assert!(good.pass, "{good:?}");
        assert!((good.etas[0].right.unwrap() / (4.0 * PI) - 1.0).abs() < 1e-6);
        let bad = ring_q_verify(&f, &ring, &q.scaled(0.5), &eta, &field, &small()).unwrap();
        assert!(!bad.pass, "{bad:?}");
    }
}
