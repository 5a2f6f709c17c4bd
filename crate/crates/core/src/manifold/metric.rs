use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ManifoldError;
use crate::expr::Expr;
use crate::grid::ChartGrid;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    Analytic,
    Sampled,
}

#[derive(Clone)]
enum MetricKind {
    Euclidean,
    Conformal(ScalarFn),
    Tensor(TensorFn),
    Sampled(Arc<Vec<DMatrix<f64>>>),
}

/// Metric tensor `g_ij` at one point. Conformal metrics stay scalar so the hot
/// paths avoid matrix algebra.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalMetric {
    Scalar { dim: usize, factor: f64 },
    Matrix(DMatrix<f64>),
}

impl LocalMetric {
    pub fn dim(&self) -> usize {
        match self {
            LocalMetric::Scalar { dim, .. } => *dim,
            LocalMetric::Matrix(m) => m.nrows(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            LocalMetric::Scalar { dim, factor } => DMatrix::identity(*dim, *dim) * *factor,
            LocalMetric::Matrix(m) => m.clone(),
        }
    }

    pub fn sqrt_det(&self) -> f64 {
        match self {
            LocalMetric::Scalar { dim, factor } => factor.powf(*dim as f64 / 2.0),
            LocalMetric::Matrix(m) => m.determinant().max(0.0).sqrt(),
        }
    }

    /// `vᵀ g v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        match self {
            LocalMetric::Scalar { factor, .. } => factor * v.iter().map(|x| x * x).sum::<f64>(),
            LocalMetric::Matrix(m) => {
                let n = m.nrows();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += v[i] * m[(i, j)] * v[j];
                    }
                }
                s
            }
        }
    }

    /// `g^{-1}` as a dense matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        match self {
            LocalMetric::Scalar { dim, factor } => DMatrix::identity(*dim, *dim) / *factor,
            LocalMetric::Matrix(m) => m.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(m.nrows(), m.ncols(), f64::NAN)),
        }
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        match self {
            LocalMetric::Scalar { factor, .. } => (*factor, *factor),
            LocalMetric::Matrix(m) => {
                let eig = m.clone().symmetric_eigen();
                let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    /// `det(Eᵀ g E)` for a Euclidean-orthonormal frame `E` given as column vectors.
    pub fn gram_det(&self, frame: &[Vec<f64>]) -> f64 {
        match self {
            LocalMetric::Scalar { factor, .. } => factor.powi(frame.len() as i32),
            LocalMetric::Matrix(m) => {
                let k = frame.len();
                let n = m.nrows();
                let mut gram = DMatrix::zeros(k, k);
                for a in 0..k {
                    let ga = m * DVector::from_column_slice(&frame[a]);
                    for b in a..k {
                        let v: f64 = (0..n).map(|i| frame[b][i] * ga[i]).sum();
                        gram[(a, b)] = v;
                        gram[(b, a)] = v;
                    }
                }
                gram.determinant()
            }
        }
    }

    fn check(&self, p: &[f64]) -> Result<(), ManifoldError> {
        let bad = |reason: String| Err(ManifoldError::MetricIntegrity { point: p.to_vec(), reason });
        match self {
            LocalMetric::Scalar { factor, .. } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return bad(format!("conformal factor {factor} is not positive"));
                }
            }
            LocalMetric::Matrix(m) => {
                if m.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite entry".into());
                }
                let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
                for i in 0..m.nrows() {
                    for j in 0..i {
                        if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                            return bad(format!("not symmetric at ({i},{j})"));
                        }
                    }
                }
                if m.clone().cholesky().is_none() {
                    let (lo, _) = self.eigen_range();
                    return bad(format!("not positive definite (smallest eigenvalue {lo:.3e})"));
                }
            }
        }
        Ok(())
    }
}

/// Riemannian metric on a single chart grid.
#[derive(Clone)]
pub struct MetricField {
    grid: ChartGrid,
    kind: MetricKind,
    smoothness: Smoothness,
    description: String,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("description", &self.description)
            .field("smoothness", &self.smoothness)
            .field("grid", &self.grid)
            .finish()
    }
}

impl MetricField {
    pub fn euclidean(grid: ChartGrid) -> Self {
        Self { grid, kind: MetricKind::Euclidean, smoothness: Smoothness::Analytic, description: "euclidean".into() }
    }

    /// `g_ij = λ(x) δ_ij`.
    pub fn conformal(grid: ChartGrid, factor: ScalarFn, description: impl Into<String>) -> Result<Self, ManifoldError> {
        let field = Self {
            grid,
            kind: MetricKind::Conformal(factor),
            smoothness: Smoothness::Analytic,
            description: description.into(),
        };
        field.validate_nodes()?;
        Ok(field)
    }

    pub fn conformal_expr(grid: ChartGrid, expr: Expr) -> Result<Self, ManifoldError> {
        check_vars(&grid, &expr)?;
        let description = format!("conformal:{expr}");
        Self::conformal(grid, Arc::new(move |x: &[f64]| expr.eval(x)), description)
    }

    /// Constant multiple of the identity.
    pub fn scaled(grid: ChartGrid, factor: f64) -> Result<Self, ManifoldError> {
        Self::conformal(grid, Arc::new(move |_: &[f64]| factor), format!("conformal:{factor}"))
    }

    pub fn tensor(grid: ChartGrid, tensor: TensorFn, description: impl Into<String>) -> Result<Self, ManifoldError> {
        let field = Self { grid, kind: MetricKind::Tensor(tensor), smoothness: Smoothness::Analytic, description: description.into() };
        field.validate_nodes()?;
        Ok(field)
    }

    /// Row-major table of component expressions.
    pub fn tensor_exprs(grid: ChartGrid, table: Vec<Vec<Expr>>) -> Result<Self, ManifoldError> {
        let n = grid.dim();
        if table.len() != n || table.iter().any(|row| row.len() != n) {
            return Err(ManifoldError::InvalidMetric(format!("matrix table must be {n}x{n}")));
        }
        for e in table.iter().flatten() {
            check_vars(&grid, e)?;
        }
        let description = format!(
            "matrix:{}",
            table.iter().map(|r| r.iter().map(|e| e.text().to_string()).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join(";")
        );
        let f: TensorFn = Arc::new(move |x: &[f64]| DMatrix::from_fn(n, n, |i, j| table[i][j].eval(x)));
        Self::tensor(grid, f, description)
    }

    /// Metric given by samples at every grid node, interpolated multilinearly.
    pub fn sampled(grid: ChartGrid, node_values: Vec<DMatrix<f64>>) -> Result<Self, ManifoldError> {
        if node_values.len() != grid.num_nodes() {
            return Err(ManifoldError::InvalidMetric(format!(
                "expected {} node samples, got {}",
                grid.num_nodes(),
                node_values.len()
            )));
        }
        let n = grid.dim();
        for (i, m) in node_values.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(ManifoldError::InvalidMetric(format!("sample {i} is not {n}x{n}")));
            }
        }
        let field = Self {
            grid,
            kind: MetricKind::Sampled(Arc::new(node_values)),
            smoothness: Smoothness::Sampled,
            description: "sampled".into(),
        };
        field.validate_nodes()?;
        Ok(field)
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, MetricKind::Euclidean)
    }

    /// Same metric on another grid (the evaluator is grid independent except for
    /// sampled metrics, which cannot be moved).
    pub fn with_grid(&self, grid: ChartGrid) -> Result<Self, ManifoldError> {
        if matches!(self.kind, MetricKind::Sampled(_)) {
            return Err(ManifoldError::InvalidMetric("sampled metrics are tied to their grid".into()));
        }
        if grid.dim() != self.dim() {
            return Err(ManifoldError::InvalidGrid("dimension mismatch".into()));
        }
        let field = Self { grid, ..self.clone() };
        field.validate_nodes()?;
        Ok(field)
    }

    /// Evaluates without domain or integrity checks. Points slightly outside the
    /// grid are accepted (sampled metrics clamp).
    pub fn local(&self, p: &[f64]) -> LocalMetric {
        let dim = self.dim();
        match &self.kind {
            MetricKind::Euclidean => LocalMetric::Scalar { dim, factor: 1.0 },
            MetricKind::Conformal(f) => LocalMetric::Scalar { dim, factor: f(p) },
            MetricKind::Tensor(f) => LocalMetric::Matrix(f(p)),
            MetricKind::Sampled(values) => LocalMetric::Matrix(self.interpolate(values, p)),
        }
    }

    pub fn sqrt_det(&self, p: &[f64]) -> f64 {
        self.local(p).sqrt_det()
    }

    fn interpolate(&self, values: &[DMatrix<f64>], p: &[f64]) -> DMatrix<f64> {
        let g = &self.grid;
        let dim = g.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for k in 0..dim {
            let u = ((p[k] - g.origin()[k]) / g.spacing()[k]).clamp(0.0, g.extents()[k] as f64);
            let i = (u.floor() as usize).min(g.extents()[k] - 1);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut out = DMatrix::zeros(dim, dim);
        for b in 0..1usize << dim {
            let mut w = 1.0;
            let mut m = base.clone();
            for k in 0..dim {
                if (b >> k) & 1 == 1 {
                    w *= frac[k];
                    m[k] += 1;
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                out += &values[g.node_index(&m)] * w;
            }
        }
        out
    }

    fn validate_nodes(&self) -> Result<(), ManifoldError> {
        if let MetricKind::Euclidean = self.kind {
            return Ok(());
        }
        for i in 0..self.grid.num_nodes() {
            let p = self.grid.node_position(i);
            self.local(&p).check(&p)?;
        }
        Ok(())
    }

    /// Smallest and largest metric eigenvalue over the grid nodes within
    /// `radius` of `center`.
    pub fn eigen_range_near(&self, center: &[f64], radius: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.grid.num_nodes() {
            let p = self.grid.node_position(i);
            let d2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= radius * radius {
                let (a, b) = self.local(&p).eigen_range();
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        if lo > hi {
            let (a, b) = self.local(center).eigen_range();
            (a, b)
        } else {
            (lo, hi)
        }
    }
}

fn check_vars(grid: &ChartGrid, expr: &Expr) -> Result<(), ManifoldError> {
    if expr.max_variable() > grid.dim() {
        return Err(ManifoldError::InvalidMetric(format!(
            "expression `{expr}` uses x{} but the chart has dimension {}",
            expr.max_variable(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Metric tensor at `p` as a dense symmetric positive-definite matrix.
pub fn metric_at(field: &MetricField, p: &[f64]) -> Result<DMatrix<f64>, ManifoldError> {
    if p.len() != field.dim() {
        return Err(ManifoldError::OutsideGrid { point: p.to_vec() });
    }
    field.grid().check_inside(p)?;
    let local = field.local(p);
    local.check(p)?;
    Ok(local.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid2() -> ChartGrid {
        ChartGrid::cube(2, -1.0, 1.0, 8).unwrap()
    }

    #[test]
    fn euclidean_is_identity() {
        let f = MetricField::euclidean(grid2());
        assert_eq!(metric_at(&f, &[0.3, -0.2]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn conformal_at_origin() {
        let f = MetricField::conformal_expr(grid2(), Expr::parse("4/(1+x1^2+x2^2)^2").unwrap()).unwrap();
        let m = metric_at(&f, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(m, DMatrix::identity(2, 2) * 4.0, epsilon = 1e-15);
        assert_relative_eq!(f.sqrt_det(&[0.0, 0.0]), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn outside_grid_is_domain_error() {
        let f = MetricField::euclidean(grid2());
        assert!(matches!(metric_at(&f, &[2.0, 0.0]), Err(ManifoldError::OutsideGrid { .. })));
    }

    #[test]
    fn negative_eigenvalue_is_integrity_error() {
        let g = grid2();
        let mut values = vec![DMatrix::<f64>::identity(2, 2); g.num_nodes()];
        values[17] = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(MetricField::sampled(g, values), Err(ManifoldError::MetricIntegrity { .. })));
    }

    #[test]
    fn asymmetric_tensor_is_rejected() {
        let g = grid2();
        let f: TensorFn = Arc::new(|_: &[f64]| DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert!(MetricField::tensor(g, f, "bad").is_err());
    }

    #[test]
    fn sampled_interpolation_reproduces_nodes() {
        let g = grid2();
        let values: Vec<_> = (0..g.num_nodes())
            .map(|i| {
                let p = g.node_position(i);
                DMatrix::from_row_slice(2, 2, &[2.0 + p[0], 0.1, 0.1, 3.0 + p[1]])
            })
            .collect();
        let f = MetricField::sampled(g.clone(), values.clone()).unwrap();
        for i in [0, 5, 40, 80] {
            assert_relative_eq!(f.local(&g.node_position(i)).matrix(), values[i], epsilon = 1e-12);
        }
        // Linear data is reproduced exactly between nodes.
        let m = f.local(&[0.1, -0.37]).matrix();
        assert_relative_eq!(m[(0, 0)], 2.1, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], 2.63, epsilon = 1e-12);
    }
}
