//! Equicontinuity certificates for ring Q-mappings: Loewner-type lower
//! bounds, capacity-to-diameter inversion, and spot checks of the ring
//! inequality on concrete mappings.

mod certificate;
mod mapping;
mod ringq;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::manifold::{CurvePolyline, ManifoldError, MetricField};
use crate::modulus::{modulus_lower, CurveFamily, ModulusError, SolverOptions};

pub use certificate::{
    equicontinuity_certificate, CertificateOptions, CertificateReport, CertificateRow, CertificateVerdict, CriterionBranch,
    CriterionChoice, SigmaDelta,
};
pub use mapping::{dilatation_field, MappingKind, MappingSpec};
pub use ringq::{ring_q_verify, EtaCheck, RadialWeight, RingQOptions, RingQReport};

/// Shipped Loewner constant; see [`loewner_calibration`].
pub const DEFAULT_LOEWNER_C: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquicontinuityError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("invalid target geometry: {0}")]
    InvalidGeometry(String),
    #[error("degenerate continuum: diameters must be positive, got {diam_e} and {diam_f}")]
    DegenerateContinuum { diam_e: f64, diam_f: f64 },
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Target ball `B_R`, excluded continuum `K` and Loewner data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetGeometry {
    pub dim: usize,
    pub r: f64,
    pub diam_k: f64,
    /// Ahlfors regularity exponent `Q̃`; equals `n` on Riemannian targets.
    pub q_tilde: f64,
    pub c_loewner: f64,
}

impl TargetGeometry {
    pub fn new(dim: usize, r: f64, diam_k: f64, c_loewner: f64) -> Result<Self, EquicontinuityError> {
        let geom = Self { dim, r, diam_k, q_tilde: dim as f64, c_loewner };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), EquicontinuityError> {
        if self.dim < 2 {
            return Err(EquicontinuityError::InvalidGeometry(format!("dimension must be at least 2, got {}", self.dim)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(EquicontinuityError::InvalidGeometry(format!("R must be positive, got {}", self.r)));
        }
        if !(self.diam_k > 0.0 && self.diam_k <= 2.0 * self.r) {
            return Err(EquicontinuityError::InvalidGeometry(format!("need 0 < diam K <= 2R, got {}", self.diam_k)));
        }
        if !(self.c_loewner >= 1.0 && self.c_loewner.is_finite()) {
            return Err(EquicontinuityError::InvalidGeometry(format!("C must be at least 1, got {}", self.c_loewner)));
        }
        if !(self.q_tilde > 0.0) {
            return Err(EquicontinuityError::InvalidGeometry(format!("Q̃ must be positive, got {}", self.q_tilde)));
        }
        Ok(())
    }

    /// `R^{1 + n - Q̃}`.
    fn radius_factor(&self) -> f64 {
        self.r.powf(1.0 + self.dim as f64 - self.q_tilde)
    }
}

/// `(1/C) min{diam E, diam F} / R^{1+n-Q̃}`.
pub fn loewner_lower_bound(diam_e: f64, diam_f: f64, r: f64, geom: &TargetGeometry) -> Result<f64, EquicontinuityError> {
    geom.validate()?;
    if !(diam_e > 0.0 && diam_f > 0.0) {
        return Err(EquicontinuityError::DegenerateContinuum { diam_e, diam_f });
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(EquicontinuityError::InvalidGeometry(format!("R must be positive, got {r}")));
    }
    let geom = TargetGeometry { r, ..*geom };
    Ok(diam_e.min(diam_f) / (geom.c_loewner * geom.radius_factor()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterBound {
    /// `C R^{1+n-Q̃} · cap_bound`.
    pub bound: f64,
    /// `cap_bound < diam K / (C R^{1+n-Q̃})`: the minimum with `diam K` is attained by `diam f(C)`.
    pub min_attained: bool,
}

/// Diameter of `f(C)` allowed by a capacity bound through the Loewner inequality.
pub fn diameter_bound(cap_bound: f64, geom: &TargetGeometry) -> Result<DiameterBound, EquicontinuityError> {
    geom.validate()?;
    if !(cap_bound >= 0.0) {
        return Err(EquicontinuityError::Invalid(format!("capacity bound must be nonnegative, got {cap_bound}")));
    }
    let scale = geom.c_loewner * geom.radius_factor();
    Ok(DiameterBound { bound: scale * cap_bound, min_attained: cap_bound < geom.diam_k / scale })
}

/// Straight segments joining `count` points of `e` to `count` points of `f`.
pub fn connecting_family(e: &CurvePolyline, f: &CurvePolyline, count: usize) -> Result<CurveFamily, EquicontinuityError> {
    if count == 0 {
        return Err(EquicontinuityError::Invalid("count must be at least 1".into()));
    }
    let points = |c: &CurvePolyline| -> Vec<Vec<f64>> {
        let dense = c.subdivided(count);
        let v = dense.vertices();
        (0..count).map(|i| v[(i * (v.len() - 1)) / (count - 1).max(1)].clone()).collect()
    };
    let (pe, pf) = (points(e), points(f));
    let mut curves = Vec::with_capacity(count * count);
    for a in &pe {
        for b in &pf {
            if a != b {
                curves.push(CurvePolyline::segment(a.clone(), b.clone())?);
            }
        }
    }
    Ok(CurveFamily::user(curves)?)
}

/// A pair of continua in a ball of radius `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoewnerFixture {
    pub e: CurvePolyline,
    pub f: CurvePolyline,
    pub r: f64,
}

impl LoewnerFixture {
    fn diam(c: &CurvePolyline) -> f64 {
        let v = c.vertices();
        let mut d = 0.0f64;
        for a in v {
            for b in v {
                d = d.max(crate::manifold::euclid(a, b));
            }
        }
        d
    }
}

/// Segment pairs inside the unit ball centered at the origin.
pub fn euclidean_loewner_fixtures(dim: usize) -> Vec<LoewnerFixture> {
    let pt = |x: f64, y: f64| -> Vec<f64> {
        let mut p = vec![0.0; dim];
        p[0] = x;
        p[1] = y;
        p
    };
    let seg = |a: Vec<f64>, b: Vec<f64>| CurvePolyline::segment(a, b).expect("distinct endpoints");
    vec![
        LoewnerFixture { e: seg(pt(-0.5, -0.25), pt(-0.5, 0.25)), f: seg(pt(0.5, -0.25), pt(0.5, 0.25)), r: 1.0 },
        LoewnerFixture { e: seg(pt(-0.8, 0.0), pt(-0.3, 0.0)), f: seg(pt(0.3, 0.0), pt(0.8, 0.0)), r: 1.0 },
        LoewnerFixture { e: seg(pt(-0.45, -0.45), pt(0.45, -0.45)), f: seg(pt(-0.1, 0.4), pt(0.1, 0.4)), r: 1.0 },
        LoewnerFixture { e: seg(pt(-0.1, -0.6), pt(-0.1, 0.6)), f: seg(pt(0.05, -0.2), pt(0.05, 0.2)), r: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoewnerCheck {
    pub min_diam: f64,
    pub modulus_lower: f64,
    /// Smallest `C` for which the Loewner inequality holds on this fixture.
    pub needed_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoewnerCalibration {
    pub fixtures: Vec<LoewnerCheck>,
    /// `max(1, max needed_c)`.
    pub calibrated_c: f64,
    /// Whether `DEFAULT_LOEWNER_C` satisfies every fixture.
    pub default_holds: bool,
}

/// Smallest `C` with `M(Γ(E, F)) ≥ (1/C) min diam / R^{1+n-Q̃}` on every fixture, using
/// the lower modulus of the straight connecting family (a subfamily, so its
/// lower bound also bounds the full family from below).
pub fn loewner_calibration(field: &MetricField, fixtures: &[LoewnerFixture], count: usize) -> Result<LoewnerCalibration, EquicontinuityError> {
    let mut checks = Vec::with_capacity(fixtures.len());
    let opts = SolverOptions { gap_tol: 1e-4, ..Default::default() };
    for fx in fixtures {
        let fam = connecting_family(&fx.e, &fx.f, count)?;
        let m = modulus_lower(&fam, field, &opts)?.lower;
        let min_diam = LoewnerFixture::diam(&fx.e).min(LoewnerFixture::diam(&fx.f));
        let needed_c = min_diam / (m * fx.r);
        checks.push(LoewnerCheck { min_diam, modulus_lower: m, needed_c });
    }
    let calibrated_c = checks.iter().map(|c| c.needed_c).fold(1.0, f64::max);
    Ok(LoewnerCalibration { default_holds: calibrated_c <= DEFAULT_LOEWNER_C, fixtures: checks, calibrated_c })
}
