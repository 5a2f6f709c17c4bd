use super::ModulusError;
use crate::manifold::{segment_length, CurvePolyline, MetricField};

/// Metric length of a curve inside each grid cell it crosses, sorted by cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Incidence {
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl Incidence {
    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// `∫_γ ρ ds` for a cell-constant `ρ`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.cells.iter().zip(&self.lengths).map(|(&c, &l)| values[c] * l).sum()
    }
}

/// Splits every segment at the grid planes it crosses and measures each piece.
pub fn curve_incidence(field: &MetricField, curve: &CurvePolyline) -> Result<Incidence, ModulusError> {
    let grid = field.grid();
    if curve.dim() != grid.dim() {
        return Err(ModulusError::InvalidFamily("curve dimension does not match the grid".into()));
    }
    for v in curve.vertices() {
        grid.check_inside(v)?;
    }
    let dim = grid.dim();
    let mut pieces: Vec<(usize, f64)> = Vec::new();
    let mut cuts: Vec<f64> = Vec::new();
    let mut p0 = vec![0.0; dim];
    let mut p1 = vec![0.0; dim];
    let mut mid = vec![0.0; dim];
    for (a, b) in curve.segments() {
        cuts.clear();
        cuts.push(0.0);
        cuts.push(1.0);
        for k in 0..dim {
            let d = b[k] - a[k];
            if d == 0.0 {
                continue;
            }
            let (o, h) = (grid.origin()[k], grid.spacing()[k]);
            let (lo, hi) = if d > 0.0 { (a[k], b[k]) } else { (b[k], a[k]) };
            let j_lo = ((lo - o) / h).ceil() as i64;
            let j_hi = ((hi - o) / h).floor() as i64;
            for j in j_lo..=j_hi {
                let s = (o + j as f64 * h - a[k]) / d;
                if s > 0.0 && s < 1.0 {
                    cuts.push(s);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let seg_len = if field.is_euclidean() { crate::manifold::euclid(a, b) } else { 0.0 };
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 - s0 <= 1e-14 {
                continue;
            }
            for k in 0..dim {
                let d = b[k] - a[k];
                p0[k] = a[k] + s0 * d;
                p1[k] = a[k] + s1 * d;
                mid[k] = 0.5 * (p0[k] + p1[k]);
            }
            let Some(cell) = grid.locate_cell(&mid) else {
                return Err(ModulusError::Manifold(crate::manifold::ManifoldError::OutsideGrid { point: mid.clone() }));
            };
            let len = if field.is_euclidean() { (s1 - s0) * seg_len } else { segment_length(field, &p0, &p1) };
            pieces.push((cell, len));
        }
    }
    pieces.sort_by_key(|p| p.0);
    let mut out = Incidence::default();
    for (c, l) in pieces {
        if out.cells.last() == Some(&c) {
            *out.lengths.last_mut().unwrap() += l;
        } else {
            out.cells.push(c);
            out.lengths.push(l);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;
    use approx::assert_relative_eq;

    #[test]
    fn axis_segment_splits_evenly() {
        let field = MetricField::euclidean(ChartGrid::cube(2, 0.0, 4.0, 4).unwrap());
        let c = CurvePolyline::segment(vec![0.5, 0.5], vec![3.5, 0.5]).unwrap();
        let inc = curve_incidence(&field, &c).unwrap();
        assert_eq!(inc.cells, vec![0, 1, 2, 3]);
        for (l, e) in inc.lengths.iter().zip([0.5, 1.0, 1.0, 0.5]) {
            assert_relative_eq!(*l, e, epsilon = 1e-14);
        }
    }

    #[test]
    fn diagonal_lengths_sum_to_metric_length() {
        let grid = ChartGrid::cube(2, 0.0, 1.0, 7).unwrap();
        let c = CurvePolyline::new(vec![vec![0.05, 0.1], vec![0.93, 0.71], vec![0.2, 0.9]], false).unwrap();
        let inc = curve_incidence(&MetricField::euclidean(grid.clone()), &c).unwrap();
        assert_relative_eq!(inc.total_length(), c.chart_length(), max_relative = 1e-13);
        let scaled = MetricField::scaled(grid, 4.0).unwrap();
        let inc2 = curve_incidence(&scaled, &c).unwrap();
        assert_relative_eq!(inc2.total_length(), 2.0 * c.chart_length(), max_relative = 1e-12);
        assert!(inc.cells.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn outside_vertex_is_rejected() {
        let field = MetricField::euclidean(ChartGrid::cube(2, 0.0, 1.0, 4).unwrap());
        let c = CurvePolyline::segment(vec![0.5, 0.5], vec![1.5, 0.5]).unwrap();
        assert!(curve_incidence(&field, &c).is_err());
    }
}
