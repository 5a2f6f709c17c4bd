use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::EquicontinuityError;
use crate::analysis::QField;
use crate::manifold::{euclid, MetricField};

type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianMap = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MappingKind {
    Identity,
    /// `x0 + (x - x0) |x - x0|^{α - 1}`.
    RadialStretch { x0: Vec<f64>, alpha: f64 },
    /// `(r, θ) ↦ (r, kθ)` about `x0` in the plane.
    Winding { x0: Vec<f64>, k: u32 },
    Linear { matrix: Vec<Vec<f64>> },
    User { description: String },
}

/// A mapping between charts of equal dimension.
#[derive(Clone)]
pub struct MappingSpec {
    dim: usize,
    kind: MappingKind,
    eval: PointMap,
    jacobian: Option<JacobianMap>,
}

impl fmt::Debug for MappingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MappingSpec").field("dim", &self.dim).field("kind", &self.kind).finish()
    }
}

impl MappingSpec {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kind: MappingKind::Identity,
            eval: Arc::new(|x| x.to_vec()),
            jacobian: Some(Arc::new(move |_| DMatrix::identity(dim, dim))),
        }
    }

    pub fn radial_stretch(x0: Vec<f64>, alpha: f64) -> Result<Self, EquicontinuityError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(EquicontinuityError::InvalidMapping(format!("stretch exponent must be positive, got {alpha}")));
        }
        let dim = x0.len();
        let c = x0.clone();
        let eval: PointMap = Arc::new(move |x| {
            let r = euclid(x, &c);
            if r == 0.0 {
                return c.clone();
            }
            let s = r.powf(alpha - 1.0);
            x.iter().zip(&c).map(|(xi, ci)| ci + (xi - ci) * s).collect()
        });
        let c = x0.clone();
        let jacobian: JacobianMap = Arc::new(move |x| {
            let y: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            let r = euclid(x, &c);
            let s = r.powf(alpha - 1.0);
            DMatrix::from_fn(dim, dim, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                s * (id + (alpha - 1.0) * y[i] * y[j] / (r * r))
            })
        });
        Ok(Self { dim, kind: MappingKind::RadialStretch { x0, alpha }, eval, jacobian: Some(jacobian) })
    }

    pub fn winding(x0: Vec<f64>, k: u32) -> Result<Self, EquicontinuityError> {
        if x0.len() != 2 {
            return Err(EquicontinuityError::InvalidMapping("winding maps are planar".into()));
        }
        if k == 0 {
            return Err(EquicontinuityError::InvalidMapping("winding number must be at least 1".into()));
        }
        let kf = k as f64;
        let c = x0.clone();
        let eval: PointMap = Arc::new(move |x| {
            let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
            let r = dx.hypot(dy);
            let t = kf * dy.atan2(dx);
            vec![c[0] + r * t.cos(), c[1] + r * t.sin()]
        });
        let c = x0.clone();
        let jacobian: JacobianMap = Arc::new(move |x| {
            let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
            let r = dx.hypot(dy);
            let th = dy.atan2(dx);
            let (ct, st) = (th.cos(), th.sin());
            let (ck, sk) = ((kf * th).cos(), (kf * th).sin());
            // ∂/∂r and (1/r) ∂/∂θ of the image, mapped back to x, y.
            let dr = [ck, sk];
            let dth = [-kf * sk, kf * ck];
            DMatrix::from_fn(2, 2, |i, j| {
                let (rx, tx) = if j == 0 { (ct, -st) } else { (st, ct) };
                if r == 0.0 {
                    f64::NAN
                } else {
                    dr[i] * rx + dth[i] * tx
                }
            })
        });
        Ok(Self { dim: 2, kind: MappingKind::Winding { x0, k }, eval, jacobian: Some(jacobian) })
    }

    pub fn linear(matrix: Vec<Vec<f64>>) -> Result<Self, EquicontinuityError> {
        let dim = matrix.len();
        if dim == 0 || matrix.iter().any(|row| row.len() != dim) {
            return Err(EquicontinuityError::InvalidMapping("linear map needs a square matrix".into()));
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]);
        if m.determinant() == 0.0 {
            return Err(EquicontinuityError::InvalidMapping("linear map is singular".into()));
        }
        let mv = m.clone();
        let eval: PointMap = Arc::new(move |x| (0..dim).map(|i| (0..dim).map(|j| mv[(i, j)] * x[j]).sum()).collect());
        Ok(Self { dim, kind: MappingKind::Linear { matrix }, eval, jacobian: Some(Arc::new(move |_| m.clone())) })
    }

    /// A user mapping; its differential is taken by central differences.
    pub fn user(dim: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static, description: impl Into<String>) -> Self {
        Self { dim, kind: MappingKind::User { description: description.into() }, eval: Arc::new(f), jacobian: None }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &MappingKind {
        &self.kind
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => self.fd_jacobian(x),
        }
    }

    fn fd_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut out = DMatrix::zeros(n, n);
        let mut p = x.to_vec();
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            p[j] = x[j] + h;
            let fp = self.apply(&p);
            p[j] = x[j] - h;
            let fm = self.apply(&p);
            p[j] = x[j];
            for i in 0..n {
                out[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        out
    }
}

/// `K_O = |Df|ⁿ / |det Df|` with norms taken in the source metric and a Euclidean target.
/// Infinite where the differential is degenerate or undefined.
fn outer_dilatation(f: &MappingSpec, field: &MetricField, x: &[f64]) -> f64 {
    let n = f.dim();
    let df = f.jacobian(x);
    if df.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let a = if field.is_euclidean() {
        df
    } else {
        let g = field.local(x).matrix();
        let eig = g.symmetric_eigen();
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        df * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose())
    };
    let det = a.determinant().abs();
    let norm = a.singular_values().max();
    if !(det > 0.0) {
        return f64::INFINITY;
    }
    norm.powi(n as i32) / det
}

/// `Q = K_O^{n-1}(x, f)`. Grid nodes where `Df` is degenerate are tagged as
/// singular points of the returned field.
pub fn dilatation_field(f: &MappingSpec, field: &MetricField) -> Result<QField, EquicontinuityError> {
    let n = field.dim();
    if f.dim() != n {
        return Err(EquicontinuityError::InvalidMapping(format!("mapping is {}-dimensional, chart is {n}-dimensional", f.dim())));
    }
    let grid = field.grid();
    let mut singular = Vec::new();
    for node in 0..grid.num_nodes() {
        let p = grid.node_position(node);
        if outer_dilatation(f, field, &p).is_infinite() {
            singular.push(p);
        }
    }
    match f.kind() {
        MappingKind::RadialStretch { x0, .. } | MappingKind::Winding { x0, .. } => {
            if !singular.iter().any(|p| p == x0) {
                singular.push(x0.clone());
            }
        }
        _ => {}
    }
    let (fc, fieldc) = (f.clone(), field.clone());
    let description = format!("K_O^(n-1) of {:?}", f.kind());
    let mut q = QField::from_fn(n, move |x| outer_dilatation(&fc, &fieldc, x).powi(n as i32 - 1), description);
    for p in singular {
        q = q.with_singularity(p);
    }
    Ok(q)
}
