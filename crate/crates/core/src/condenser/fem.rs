use serde::{Deserialize, Serialize};

use super::{Condenser, CondenserError, NodeLabel};
use crate::grid::ChartGrid;
use crate::manifold::{LocalMetric, MetricField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityOptions {
    /// Relative residual target of each conjugate-gradient solve.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// `ε_reg` in the IRLS weights `(|∇u|² + ε_reg)^{(n-2)/2}`.
    pub regularization: f64,
    pub damping: f64,
    pub max_outer: usize,
    /// Stop IRLS when the relative energy change and the largest nodal update
    /// both fall below this.
    pub outer_tol: f64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self { cg_tol: 1e-10, cg_max_iter: 50_000, regularization: 1e-8, damping: 0.5, max_outer: 500, outer_tol: 1e-6 }
    }
}

/// Nodal values of a Q1 potential.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub grid: ChartGrid,
    pub u: Vec<f64>,
}

impl PotentialField {
    /// Bilinear (multilinear) interpolation at `p`.
    pub fn eval(&self, p: &[f64]) -> f64 {
        let g = &self.grid;
        let dim = g.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for k in 0..dim {
            let s = ((p[k] - g.origin()[k]) / g.spacing()[k]).clamp(0.0, g.extents()[k] as f64);
            let i = (s.floor() as usize).min(g.extents()[k] - 1);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        let cell = g.cell_index(&base);
        g.cell_corners(cell)
            .iter()
            .enumerate()
            .map(|(b, &node)| {
                let w: f64 = (0..dim).map(|k| if (b >> k) & 1 == 1 { frac[k] } else { 1.0 - frac[k] }).product();
                w * self.u[node]
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub cap: f64,
    /// Outer iterations (1 for n = 2).
    pub iterations: usize,
    pub cg_iterations: usize,
    pub converged: bool,
    /// Energy fell below 1e-9.
    pub degenerate: bool,
    pub free_nodes: usize,
    #[serde(skip)]
    pub potential: Option<PotentialField>,
}

/// Per-cell data of the discrete energy `Σ_cells Σ_q w_q (∇uᵀ M ∇u / s)^{n/2} s`
/// with `M = √det g · g^{-1}` and `s = √det g` at the cell center.
pub(crate) struct Energy {
    dim: usize,
    n: f64,
    cells: Vec<usize>,
    corners: Vec<usize>,
    metric: Vec<f64>,
    sqrt_det: Vec<f64>,
    /// `grads[q][a * dim + k]`: derivative along axis `k` of corner basis `a` at node `q`.
    grads: Vec<Vec<f64>>,
    qweight: f64,
    spacing: Vec<f64>,
}

impl Energy {
    pub(crate) fn new(e: &Condenser, field: &MetricField) -> Self {
        let grid = e.grid();
        let dim = grid.dim();
        let nc = 1usize << dim;
        let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let h = grid.spacing();
        let grads: Vec<Vec<f64>> = (0..nc)
            .map(|q| {
                let xi: Vec<f64> = (0..dim).map(|k| gauss[(q >> k) & 1]).collect();
                let mut g = vec![0.0; nc * dim];
                for a in 0..nc {
                    for k in 0..dim {
                        let mut v = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 } / h[k];
                        for j in (0..dim).filter(|&j| j != k) {
                            v *= if (a >> j) & 1 == 1 { xi[j] } else { 1.0 - xi[j] };
                        }
                        g[a * dim + k] = v;
                    }
                }
                g
            })
            .collect();
        let cells: Vec<usize> = e.a().cells().collect();
        let mut corners = Vec::with_capacity(cells.len() * nc);
        let mut metric = Vec::with_capacity(cells.len() * dim * dim);
        let mut sqrt_det = Vec::with_capacity(cells.len());
        for &cell in &cells {
            corners.extend(grid.cell_corners(cell));
            let local = field.local(&grid.cell_center(cell));
            let s = local.sqrt_det();
            sqrt_det.push(s);
            match &local {
                LocalMetric::Scalar { factor, .. } => {
                    for i in 0..dim {
                        for j in 0..dim {
                            metric.push(if i == j { s / factor } else { 0.0 });
                        }
                    }
                }
                LocalMetric::Matrix(_) => {
                    let inv = local.inverse();
                    for i in 0..dim {
                        for j in 0..dim {
                            metric.push(s * inv[(i, j)]);
                        }
                    }
                }
            }
        }
        Self { dim, n: dim as f64, cells, corners, metric, sqrt_det, grads, qweight: grid.cell_volume() / nc as f64, spacing: h.to_vec() }
    }

    fn nc(&self) -> usize {
        1 << self.dim
    }

    /// `∇uᵀ M ∇u` at every quadrature node of local cell `c`.
    fn quad_forms(&self, c: usize, u: &[f64], out: &mut [f64]) {
        let (dim, nc) = (self.dim, self.nc());
        let corners = &self.corners[c * nc..(c + 1) * nc];
        let m = &self.metric[c * dim * dim..(c + 1) * dim * dim];
        let mut grad = [0.0f64; 8];
        for (q, g) in self.grads.iter().enumerate() {
            grad[..dim].iter_mut().for_each(|x| *x = 0.0);
            for (a, &node) in corners.iter().enumerate() {
                let ua = u[node];
                for k in 0..dim {
                    grad[k] += ua * g[a * dim + k];
                }
            }
            let mut s = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    s += grad[i] * m[i * dim + j] * grad[j];
                }
            }
            out[q] = s;
        }
    }

    pub(crate) fn energy(&self, u: &[f64]) -> f64 {
        let mut forms = vec![0.0; self.nc()];
        let mut total = 0.0;
        for c in 0..self.cells.len() {
            self.quad_forms(c, u, &mut forms);
            let s = self.sqrt_det[c];
            total += forms.iter().map(|f| (f / s).max(0.0).powf(self.n / 2.0) * s).sum::<f64>() * self.qweight;
        }
        total
    }

    /// Per cell, the largest metric gradient norm `|∇u|_g` over the cell corners.
    /// `|∇u|_g²` is convex along axis-parallel lines of a cell, so this bounds it
    /// everywhere inside.
    pub(crate) fn corner_max_gradient(&self, u: &[f64]) -> Vec<(usize, f64)> {
        let (dim, nc) = (self.dim, self.nc());
        let mut out = Vec::with_capacity(self.cells.len());
        for (c, &cell) in self.cells.iter().enumerate() {
            let corners = &self.corners[c * nc..(c + 1) * nc];
            let m = &self.metric[c * dim * dim..(c + 1) * dim * dim];
            let s = self.sqrt_det[c];
            let mut best = 0.0f64;
            for corner in 0..nc {
                let mut grad = [0.0f64; 8];
                for k in 0..dim {
                    let lo = corner & !(1 << k);
                    let hi = corner | (1 << k);
                    grad[k] = (u[corners[hi]] - u[corners[lo]]) / self.spacing[k];
                }
                let mut q = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        q += grad[i] * m[i * dim + j] * grad[j];
                    }
                }
                best = best.max(q / s);
            }
            out.push((cell, best.sqrt()));
        }
        out
    }

    /// Stencil matrix of `Σ_q w_q a_q ∇uᵀ M ∇u`, stored per node over the `3^dim` neighbours.
    fn assemble(&self, weights: Option<&[f64]>, stencil: &Stencil, matrix: &mut [f64]) {
        let (dim, nc) = (self.dim, self.nc());
        let ns = stencil.size;
        matrix.iter_mut().for_each(|x| *x = 0.0);
        let mut mg = vec![0.0; nc * dim];
        let mut ke = vec![0.0; nc * nc];
        for c in 0..self.cells.len() {
            let corners = &self.corners[c * nc..(c + 1) * nc];
            let m = &self.metric[c * dim * dim..(c + 1) * dim * dim];
            ke.iter_mut().for_each(|x| *x = 0.0);
            for (q, g) in self.grads.iter().enumerate() {
                let w = self.qweight * weights.map_or(1.0, |a| a[c * nc + q]);
                for a in 0..nc {
                    for i in 0..dim {
                        mg[a * dim + i] = (0..dim).map(|j| m[i * dim + j] * g[a * dim + j]).sum();
                    }
                }
                for a in 0..nc {
                    for b in a..nc {
                        let v: f64 = (0..dim).map(|k| g[b * dim + k] * mg[a * dim + k]).sum();
                        ke[a * nc + b] += w * v;
                    }
                }
            }
            for a in 0..nc {
                for b in 0..nc {
                    let v = if b >= a { ke[a * nc + b] } else { ke[b * nc + a] };
                    matrix[corners[a] * ns + stencil.corner_offset[a * nc + b]] += v;
                }
            }
        }
    }

    fn irls_weights(&self, u: &[f64], reg: f64, out: &mut [f64]) {
        let nc = self.nc();
        let mut forms = vec![0.0; nc];
        let p = (self.n - 2.0) / 2.0;
        for c in 0..self.cells.len() {
            self.quad_forms(c, u, &mut forms);
            let s = self.sqrt_det[c];
            for q in 0..nc {
                out[c * nc + q] = ((forms[q] / s).max(0.0) + reg).powf(p);
            }
        }
    }
}

/// Node-neighbourhood layout of the `3^dim` stencil.
struct Stencil {
    size: usize,
    /// Linear node offset of each stencil entry.
    offsets: Vec<isize>,
    /// Stencil index linking corner `a` to corner `b` of a cell.
    corner_offset: Vec<usize>,
}

impl Stencil {
    fn new(grid: &ChartGrid) -> Self {
        let dim = grid.dim();
        let size = 3usize.pow(dim as u32);
        let mut strides = vec![1isize; dim];
        for k in 1..dim {
            strides[k] = strides[k - 1] * (grid.extents()[k - 1] + 1) as isize;
        }
        let offsets = (0..size)
            .map(|s| {
                let mut s = s;
                let mut off = 0;
                for stride in &strides {
                    off += ((s % 3) as isize - 1) * stride;
                    s /= 3;
                }
                off
            })
            .collect();
        let nc = 1usize << dim;
        let mut corner_offset = vec![0; nc * nc];
        for a in 0..nc {
            for b in 0..nc {
                let mut idx = 0;
                for k in (0..dim).rev() {
                    let d = ((b >> k) & 1) as isize - ((a >> k) & 1) as isize;
                    idx = idx * 3 + (d + 1) as usize;
                }
                corner_offset[a * nc + b] = idx;
            }
        }
        Self { size, offsets, corner_offset }
    }
}

struct System<'a> {
    stencil: &'a Stencil,
    matrix: &'a [f64],
    free: &'a [usize],
}

impl System<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.stencil.size;
        for &i in self.free {
            let row = &self.matrix[i * ns..(i + 1) * ns];
            let mut s = 0.0;
            for (v, off) in row.iter().zip(&self.stencil.offsets) {
                s += v * x[(i as isize + off) as usize];
            }
            y[i] = s;
        }
    }

    fn diag(&self, i: usize) -> f64 {
        self.matrix[i * self.stencil.size + self.stencil.size / 2]
    }

    /// Solves the free rows of `K u = 0` with the fixed entries of `u` as data,
    /// starting from the current free entries. Returns (iterations, converged).
    fn solve(&self, u: &mut [f64], tol: f64, max_iter: usize) -> (usize, bool) {
        let len = u.len();
        let mut fixed = u.to_vec();
        for &i in self.free {
            fixed[i] = 0.0;
        }
        let mut b = vec![0.0; len];
        self.apply(&fixed, &mut b);
        let mut x = vec![0.0; len];
        for &i in self.free {
            x[i] = u[i];
            b[i] = -b[i];
        }
        let mut ax = vec![0.0; len];
        self.apply(&x, &mut ax);
        let mut r = vec![0.0; len];
        let mut z = vec![0.0; len];
        let mut p = vec![0.0; len];
        let mut bnorm = 0.0;
        let mut rz = 0.0;
        for &i in self.free {
            r[i] = b[i] - ax[i];
            z[i] = r[i] / self.diag(i);
            p[i] = z[i];
            rz += r[i] * z[i];
            bnorm += b[i] * b[i];
        }
        let target = tol * bnorm.sqrt().max(f64::MIN_POSITIVE);
        let mut iters = 0;
        let mut converged = false;
        let mut ap = vec![0.0; len];
        while iters < max_iter {
            let rnorm = self.free.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt();
            if rnorm <= target {
                converged = true;
                break;
            }
            self.apply(&p, &mut ap);
            let pap: f64 = self.free.iter().map(|&i| p[i] * ap[i]).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            let mut rz_new = 0.0;
            for &i in self.free {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
                z[i] = r[i] / self.diag(i);
                rz_new += r[i] * z[i];
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for &i in self.free {
                p[i] = z[i] + beta * p[i];
            }
            iters += 1;
        }
        for &i in self.free {
            u[i] = x[i];
        }
        (iters, converged)
    }
}

fn initial_potential(e: &Condenser) -> Vec<f64> {
    e.labels().iter().map(|l| if *l == NodeLabel::Plate { 1.0 } else { 0.0 }).collect()
}

fn truncate(u: &mut [f64], free: &[usize]) {
    for &i in free {
        u[i] = u[i].clamp(0.0, 1.0);
    }
}

/// n-capacity `inf ∫_A |∇u|_g^n dv` over Q1 potentials with `u = 1` on `C` and
/// `u = 0` on `∂A`.
///
/// For n = 2 the Euler–Lagrange system is linear and solved once by Jacobi-
/// preconditioned conjugate gradients. For n > 2 the harmonic solution seeds
/// damped IRLS iterations with weights `(|∇u|_g² + ε_reg)^{(n-2)/2}`; each
/// iterate is truncated to `[0, 1]`.
pub fn capacity(e: &Condenser, field: &MetricField, opts: &CapacityOptions) -> Result<CapacityReport, CondenserError> {
    if field.grid() != e.grid() {
        return Err(CondenserError::Invalid("metric and condenser live on different grids".into()));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(CondenserError::Invalid(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let grid = e.grid();
    let energy = Energy::new(e, field);
    let stencil = Stencil::new(grid);
    let free: Vec<usize> = (0..grid.num_nodes()).filter(|&i| e.labels()[i] == NodeLabel::Free).collect();
    let mut matrix = vec![0.0; grid.num_nodes() * stencil.size];
    let mut u = initial_potential(e);
    energy.assemble(None, &stencil, &mut matrix);
    let system = System { stencil: &stencil, matrix: &matrix, free: &free };
    let (mut cg_iterations, mut converged) = system.solve(&mut u, opts.cg_tol, opts.cg_max_iter);
    truncate(&mut u, &free);
    let mut cap = energy.energy(&u);
    let mut iterations = 1;

    if grid.dim() > 2 {
        let nc = 1usize << grid.dim();
        let mut weights = vec![0.0; energy.cells.len() * nc];
        let mut best = (cap, u.clone());
        converged = false;
        while iterations < opts.max_outer {
            energy.irls_weights(&u, opts.regularization, &mut weights);
            energy.assemble(Some(&weights), &stencil, &mut matrix);
            let system = System { stencil: &stencil, matrix: &matrix, free: &free };
            let mut target = u.clone();
            let (it, _) = system.solve(&mut target, opts.cg_tol, opts.cg_max_iter);
            cg_iterations += it;
            let mut step = 0.0f64;
            for &i in &free {
                let v = (u[i] + opts.damping * (target[i] - u[i])).clamp(0.0, 1.0);
                step = step.max((v - u[i]).abs());
                u[i] = v;
            }
            iterations += 1;
            let next = energy.energy(&u);
            let change = (cap - next).abs() / next.max(f64::MIN_POSITIVE);
            cap = next;
            if cap < best.0 {
                best = (cap, u.clone());
            }
            if change < opts.outer_tol && step < opts.outer_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            cap = best.0;
            u = best.1;
        }
    }
    Ok(CapacityReport {
        cap,
        iterations,
        cg_iterations,
        converged,
        degenerate: cap < 1e-9,
        free_nodes: free.len(),
        potential: Some(PotentialField { grid: grid.clone(), u }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellRegion;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, PI};

    #[test]
    fn annulus_matches_log_formula() {
        let grid = ChartGrid::cube(2, -3.0, 3.0, 128).unwrap();
        let e = Condenser::round(grid.clone(), vec![0.0, 0.0], 1.0, E).unwrap();
        let rep = capacity(&e, &MetricField::euclidean(grid), &CapacityOptions::default()).unwrap();
        assert!(rep.converged);
        assert_relative_eq!(rep.cap, 2.0 * PI, max_relative = 0.05);
    }

    #[test]
    fn thick_plate_blows_up() {
        let grid = ChartGrid::cube(2, -3.0, 3.0, 512).unwrap();
        let e = Condenser::round(grid.clone(), vec![0.0, 0.0], 0.999 * E, E).unwrap();
        let rep = capacity(&e, &MetricField::euclidean(grid), &CapacityOptions::default()).unwrap();
        assert!(rep.cap > 100.0, "{}", rep.cap);
    }

    #[test]
    fn conformal_invariance_in_the_plane() {
        let grid = ChartGrid::cube(2, -3.0, 3.0, 64).unwrap();
        let e = Condenser::round(grid.clone(), vec![0.0, 0.0], 1.0, 2.0).unwrap();
        let flat = capacity(&e, &MetricField::euclidean(grid.clone()), &CapacityOptions::default()).unwrap();
        let bumpy = MetricField::conformal(grid, std::sync::Arc::new(|p: &[f64]| 1.0 + p[0] * p[0]), "1+x^2").unwrap();
        let curved = capacity(&e, &bumpy, &CapacityOptions::default()).unwrap();
        assert_relative_eq!(flat.cap, curved.cap, max_relative = 1e-10);
    }

    #[test]
    fn scaling_metric_in_three_dimensions_is_invisible() {
        let grid = ChartGrid::cube(3, -3.0, 3.0, 16).unwrap();
        let e = Condenser::round(grid.clone(), vec![0.0, 0.0, 0.0], 1.0, 2.5).unwrap();
        let opts = CapacityOptions { outer_tol: 1e-5, ..Default::default() };
        let a = capacity(&e, &MetricField::euclidean(grid.clone()), &opts).unwrap();
        let b = capacity(&e, &MetricField::scaled(grid, 9.0).unwrap(), &opts).unwrap();
        assert!(a.converged && b.converged);
        assert_relative_eq!(a.cap, b.cap, max_relative = 1e-6);
    }

    #[test]
    fn potential_stays_in_unit_interval() {
        let grid = ChartGrid::cube(2, 0.0, 1.0, 20).unwrap();
        let e = Condenser::boxed(grid.clone(), &[0.1, 0.1], &[0.9, 0.9], &[0.4, 0.4], &[0.6, 0.6]).unwrap();
        let rep = capacity(&e, &MetricField::euclidean(grid), &CapacityOptions::default()).unwrap();
        let u = rep.potential.unwrap().u;
        assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(rep.cap > 0.0 && !rep.degenerate);
    }

    #[test]
    fn single_cell_plate_shrinks_under_refinement() {
        let mut caps = Vec::new();
        for cells in [16, 32] {
            let grid = ChartGrid::cube(2, -1.0, 1.0, cells).unwrap();
            let a = CellRegion::from_centers(&grid, |p| p[0].abs() < 0.9 && p[1].abs() < 0.9);
            let mid = grid.locate_cell(&[1e-9, 1e-9]).unwrap();
            let c = CellRegion::from_cells(&grid, &[mid]).unwrap();
            let e = Condenser::from_cells(grid.clone(), a, c).unwrap();
            caps.push(capacity(&e, &MetricField::euclidean(grid), &CapacityOptions::default()).unwrap().cap);
        }
        assert!(caps[1] < caps[0], "{caps:?}");
    }

    #[test]
    fn corner_gradient_bounds_quadrature_gradient() {
        let grid = ChartGrid::cube(2, -2.0, 2.0, 16).unwrap();
        let field = MetricField::euclidean(grid.clone());
        let e = Condenser::round(grid.clone(), vec![0.0, 0.0], 0.5, 1.5).unwrap();
        let rep = capacity(&e, &field, &CapacityOptions::default()).unwrap();
        let u = rep.potential.unwrap().u;
        let en = Energy::new(&e, &field);
        let rho = en.corner_max_gradient(&u);
        let bound: f64 = rho.iter().map(|(_, r)| r * r * grid.cell_volume()).sum();
        assert!(bound >= rep.cap);
    }
}
