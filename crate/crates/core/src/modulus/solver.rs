use serde::{Deserialize, Serialize};

use super::{curve_incidence, CurveFamily, DensityField, ModulusError, RingSpec};
use crate::grid::ChartGrid;
use crate::manifold::MetricField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Budget of full sweeps over the constraints.
    pub max_sweeps: usize,
    /// Stop when `(primal - dual) / primal` falls below this.
    pub gap_tol: f64,
    /// Stop when the dual value changed by less than `stall_tol` (relative)
    /// over the last `stall_window` sweeps.
    pub stall_window: usize,
    pub stall_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_sweeps: 10_000, gap_tol: 1e-3, stall_window: 100, stall_tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerEstimate {
    /// Dual objective: a lower bound for the modulus of the sampled family.
    pub lower: f64,
    /// Energy of the rescaled feasible density: an upper bound for the same program.
    pub primal: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub relative_gap: f64,
    pub curves: usize,
    pub cells: usize,
    #[serde(skip)]
    pub density: Option<DensityField>,
}

struct Program {
    /// Row pointers into `cols`/`vals`, one row per curve.
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Per compressed cell: `√det g · cell volume`.
    weights: Vec<f64>,
    /// Compressed index → grid cell.
    cell_ids: Vec<usize>,
}

fn build_program(family: &CurveFamily, field: &MetricField) -> Result<Program, ModulusError> {
    let grid = field.grid();
    let mut map = vec![u32::MAX; grid.num_cells()];
    let mut cell_ids = Vec::new();
    let mut rows = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for curve in family.curves() {
        let inc = curve_incidence(field, curve)?;
        for (&c, &l) in inc.cells.iter().zip(&inc.lengths) {
            if l <= 0.0 {
                continue;
            }
            if map[c] == u32::MAX {
                map[c] = cell_ids.len() as u32;
                cell_ids.push(c);
            }
            cols.push(map[c] as usize);
            vals.push(l);
        }
        rows.push(cols.len());
    }
    let vol = grid.cell_volume();
    let weights = cell_ids
        .iter()
        .map(|&c| {
            let frac = family.ring().map_or(1.0, |ring| ring_fraction(grid, c, ring));
            field.sqrt_det(&grid.cell_center(c)) * vol * frac
        })
        .collect();
    Ok(Program { rows, cols, vals, weights, cell_ids })
}

/// Fraction of a cell lying in the ring shell `r1 ≤ |x - x0| ≤ r2`.
fn ring_fraction(grid: &ChartGrid, cell: usize, ring: &RingSpec) -> f64 {
    let dim = grid.dim();
    let m = grid.cell_multi(cell);
    let lo: Vec<f64> = (0..dim).map(|k| grid.origin()[k] + m[k] as f64 * grid.spacing()[k]).collect();
    let (mut near, mut far) = (0.0, 0.0);
    for k in 0..dim {
        let (a, b) = (lo[k] - ring.x0[k], lo[k] + grid.spacing()[k] - ring.x0[k]);
        let n = if a > 0.0 { a } else if b < 0.0 { -b } else { 0.0 };
        let f = a.abs().max(b.abs());
        near += n * n;
        far += f * f;
    }
    let (near, far) = (near.sqrt(), far.sqrt());
    if near >= ring.r1 && far <= ring.r2 {
        return 1.0;
    }
    if far < ring.r1 || near > ring.r2 {
        return 0.0;
    }
    let per_axis: usize = if dim <= 2 { 16 } else { 6 };
    let total = per_axis.pow(dim as u32);
    let mut inside = 0usize;
    let mut p = vec![0.0; dim];
    for code in 0..total {
        let mut c = code;
        for k in 0..dim {
            let i = c % per_axis;
            c /= per_axis;
            p[k] = lo[k] + (i as f64 + 0.5) / per_axis as f64 * grid.spacing()[k];
        }
        let r = crate::manifold::euclid(&p, &ring.x0);
        if r >= ring.r1 && r <= ring.r2 {
            inside += 1;
        }
    }
    // Slivers missed by every sample still carry curves; charge half a sample.
    inside.max(1) as f64 / total as f64 * if inside == 0 { 0.5 } else { 1.0 }
}

/// `ρ_c(s) = (s / (n w_c))^{1/(n-1)}`.
#[inline]
fn density(s: f64, w: f64, n: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if n == 2.0 {
        s / (2.0 * w)
    } else {
        (s / (n * w)).powf(1.0 / (n - 1.0))
    }
}

/// Solves `Σ_c a_c ρ_c(s_c + λ a_c) = 1` for `λ ≥ 0` (0 if already satisfied at 0).
fn solve_multiplier(base: &[f64], a: &[f64], w: &[f64], n: f64) -> f64 {
    let phi = |lam: f64| -> f64 { base.iter().zip(a).zip(w).map(|((s, a), w)| a * density(s + lam * a, *w, n)).sum::<f64>() - 1.0 };
    if phi(0.0) >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while phi(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    let mut lo = 0.0;
    let mut x = hi;
    for _ in 0..100 {
        let f = phi(x);
        if f.abs() <= 1e-13 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let df: f64 = base
            .iter()
            .zip(a)
            .zip(w)
            .map(|((s, a), w)| {
                let t = s + x * a;
                if t <= 0.0 {
                    0.0
                } else {
                    a * a * density(t, *w, n) / ((n - 1.0) * t)
                }
            })
            .sum();
        let newton = x - f / df;
        x = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x
}

/// Lower bound for `M(Γ)` from the finite sampled family.
///
/// Minimizes `Σ_c w_c ρ_cⁿ` subject to `∫_γ ρ ds ≥ 1` for every sampled curve
/// over cell-constant `ρ ≥ 0`, by exact coordinate ascent on the dual. Every dual
/// iterate is a valid lower bound; the rescaled primal iterate gives the gap.
pub fn modulus_lower(family: &CurveFamily, field: &MetricField, opts: &SolverOptions) -> Result<LowerEstimate, ModulusError> {
    let n = field.dim() as f64;
    if family.is_empty() {
        return Ok(LowerEstimate {
            lower: 0.0,
            primal: 0.0,
            sweeps: 0,
            converged: true,
            relative_gap: 0.0,
            curves: 0,
            cells: 0,
            density: Some(DensityField::zeros(field.grid().clone())),
        });
    }
    let prog = build_program(family, field)?;
    let m = prog.rows.len() - 1;
    if let Some(i) = (0..m).find(|&i| prog.rows[i] == prog.rows[i + 1]) {
        return Err(ModulusError::InvalidFamily(format!("curve {i} has zero metric length")));
    }
    let cells = prog.weights.len();
    let mut lambda = vec![0.0; m];
    let mut s = vec![0.0; cells];
    let mut base = Vec::new();
    let mut wloc = Vec::new();

    let mut history: Vec<f64> = Vec::new();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for i in 0..m {
            let (r0, r1) = (prog.rows[i], prog.rows[i + 1]);
            let cols = &prog.cols[r0..r1];
            let a = &prog.vals[r0..r1];
            let li = lambda[i];
            if n == 2.0 {
                let mut len = 0.0;
                let mut curv = 0.0;
                for (&c, &av) in cols.iter().zip(a) {
                    let w = prog.weights[c];
                    len += av * density(s[c], w, n);
                    curv += av * av / (2.0 * w);
                }
                let new = (li + (1.0 - len) / curv).max(0.0);
                let d = new - li;
                if d != 0.0 {
                    for (&c, &av) in cols.iter().zip(a) {
                        s[c] += d * av;
                    }
                    lambda[i] = new;
                }
            } else {
                base.clear();
                wloc.clear();
                for (&c, &av) in cols.iter().zip(a) {
                    base.push((s[c] - li * av).max(0.0));
                    wloc.push(prog.weights[c]);
                }
                let new = solve_multiplier(&base, a, &wloc, n);
                for ((&c, &av), b) in cols.iter().zip(a).zip(&base) {
                    s[c] = b + new * av;
                }
                lambda[i] = new;
            }
        }

        let rho: Vec<f64> = s.iter().zip(&prog.weights).map(|(s, w)| density(*s, *w, n)).collect();
        let energy: f64 = rho.iter().zip(&prog.weights).map(|(r, w)| w * r.powf(n)).sum();
        let dual = lambda.iter().sum::<f64>() - (n - 1.0) * energy;
        let min_len = (0..m)
            .map(|i| (prog.rows[i]..prog.rows[i + 1]).map(|k| prog.vals[k] * rho[prog.cols[k]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let primal = if min_len > 0.0 { energy / min_len.powf(n) } else { f64::INFINITY };
        best = (best.0.max(dual), best.1.min(primal));
        history.push(best.0);
        let gap = (best.1 - best.0) / best.1;
        if gap <= opts.gap_tol {
            converged = true;
            break;
        }
        if history.len() > opts.stall_window {
            let old = history[history.len() - 1 - opts.stall_window];
            if (best.0 - old).abs() <= opts.stall_tol * best.0.abs() {
                converged = true;
                break;
            }
        }
    }

    let mut values = vec![0.0; field.grid().num_cells()];
    for (k, &c) in prog.cell_ids.iter().enumerate() {
        values[c] = density(s[k], prog.weights[k], n);
    }
    let density = DensityField::new(field.grid().clone(), values).ok();
    Ok(LowerEstimate {
        lower: best.0.max(0.0),
        primal: best.1,
        sweeps,
        converged,
        relative_gap: if best.1.is_finite() { (best.1 - best.0) / best.1 } else { f64::INFINITY },
        curves: m,
        cells,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;
    use crate::manifold::CurvePolyline;
    use approx::assert_relative_eq;

    #[test]
    fn empty_family_is_zero() {
        let field = MetricField::euclidean(ChartGrid::cube(2, 0.0, 1.0, 4).unwrap());
        let r = modulus_lower(&CurveFamily::empty(), &field, &SolverOptions::default()).unwrap();
        assert_eq!(r.lower, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn single_segment_matches_closed_form() {
        // One axis segment of length L through k full cells of width h:
        // optimum ρ = 1/L on its cells, energy = k h² / L² = h / L.
        let field = MetricField::euclidean(ChartGrid::cube(2, 0.0, 1.0, 10).unwrap());
        let c = CurvePolyline::segment(vec![0.2, 0.55], vec![0.8, 0.55]).unwrap();
        let fam = CurveFamily::user(vec![c]).unwrap();
        let opts = SolverOptions { gap_tol: 1e-12, ..Default::default() };
        let r = modulus_lower(&fam, &field, &opts).unwrap();
        assert_relative_eq!(r.lower, 0.1 / 0.6, max_relative = 1e-9);
        assert_relative_eq!(r.primal, 0.1 / 0.6, max_relative = 1e-9);
    }

    #[test]
    fn single_segment_three_dimensions() {
        // k cells of volume h³ with ρ = 1/L: energy = k h³ / L³ = h² / L².
        let field = MetricField::euclidean(ChartGrid::cube(3, 0.0, 1.0, 5).unwrap());
        let c = CurvePolyline::segment(vec![0.1, 0.5, 0.5], vec![0.9, 0.5, 0.5]).unwrap();
        let fam = CurveFamily::user(vec![c]).unwrap();
        let opts = SolverOptions { gap_tol: 1e-10, ..Default::default() };
        let r = modulus_lower(&fam, &field, &opts).unwrap();
        // Pieces: 0.1 in the first cell, 0.2 in three cells, 0.1 in the last.
        let lens = [0.1, 0.2, 0.2, 0.2, 0.1];
        let s4: f64 = lens.iter().map(|l: &f64| l.powf(1.5)).sum();
        let expected = 0.2f64.powi(3) / s4.powi(2);
        assert_relative_eq!(r.lower, expected, max_relative = 1e-7);
    }

    #[test]
    fn parallel_disjoint_curves_add() {
        let field = MetricField::euclidean(ChartGrid::cube(2, 0.0, 1.0, 10).unwrap());
        let a = CurvePolyline::segment(vec![0.0, 0.15], vec![1.0, 0.15]).unwrap();
        let b = CurvePolyline::segment(vec![0.0, 0.55], vec![1.0, 0.55]).unwrap();
        let opts = SolverOptions { gap_tol: 1e-12, ..Default::default() };
        let one = modulus_lower(&CurveFamily::user(vec![a.clone()]).unwrap(), &field, &opts).unwrap();
        let two = modulus_lower(&CurveFamily::user(vec![a, b]).unwrap(), &field, &opts).unwrap();
        assert_relative_eq!(two.lower, 2.0 * one.lower, max_relative = 1e-9);
    }

    #[test]
    fn bit_identical_reruns() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -3.0, 3.0, 32).unwrap());
        let ring = super::super::RingSpec::chart(vec![0.0, 0.0], 1.0, 2.5).unwrap();
        let fam = super::super::sample_ring_curves(&ring, field.grid(), 40, super::super::Perturbation::new(1).unwrap(), 5).unwrap();
        let a = modulus_lower(&fam, &field, &SolverOptions::default()).unwrap();
        let b = modulus_lower(&fam, &field, &SolverOptions::default()).unwrap();
        assert_eq!(a.lower.to_bits(), b.lower.to_bits());
        assert_eq!(a.sweeps, b.sweeps);
        assert!(a.lower <= a.primal);
    }
}
