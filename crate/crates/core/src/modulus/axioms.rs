use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{modulus_lower, sample_ring_curves, CurveFamily, ModulusError, Perturbation, RingSpec, SolverOptions};
use crate::manifold::{euclid, CurvePolyline, MetricField};

/// Whether `sub` traces a piece of `sup`: every vertex of `sub` lies on `sup`
/// (within `tol`), in order, and each segment of `sub` covers a straight stretch
/// of `sup` of the same length.
pub fn is_subcurve(sub: &CurvePolyline, sup: &CurvePolyline, tol: f64) -> bool {
    if sub.dim() != sup.dim() || sub.is_closed() {
        return false;
    }
    let verts = sup.vertices();
    let mut arc = vec![0.0];
    for w in verts.windows(2) {
        arc.push(arc[arc.len() - 1] + euclid(&w[0], &w[1]));
    }
    let locate = |p: &[f64]| -> Option<f64> {
        for (i, w) in verts.windows(2).enumerate() {
            let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect();
            let len2: f64 = d.iter().map(|x| x * x).sum();
            let t = (p.iter().zip(&w[0]).zip(&d).map(|((p, a), d)| (p - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0);
            let q: Vec<f64> = w[0].iter().zip(&d).map(|(a, d)| a + t * d).collect();
            if euclid(&q, p) <= tol {
                return Some(arc[i] + t * len2.sqrt());
            }
        }
        None
    };
    let mut params = Vec::with_capacity(sub.vertices().len());
    for v in sub.vertices() {
        match locate(v) {
            Some(s) => params.push(s),
            None => return false,
        }
    }
    let increasing = params.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = params.windows(2).all(|w| w[1] <= w[0]);
    if !(increasing || decreasing) {
        return false;
    }
    sub.vertices()
        .windows(2)
        .zip(params.windows(2))
        .all(|(v, s)| (euclid(&v[0], &v[1]) - (s[1] - s[0]).abs()).abs() <= tol)
}

fn minorizes(fine: &CurveFamily, coarse: &CurveFamily) -> bool {
    !fine.is_empty() && fine.curves().iter().all(|g| coarse.curves().iter().any(|d| is_subcurve(d, g, 1e-9)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: String,
    /// Families involved, by index in the input list.
    pub families: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub moduli: Vec<f64>,
    pub empty_family: AxiomCheck,
    pub monotonicity: Vec<AxiomCheck>,
    pub subadditivity: Vec<AxiomCheck>,
    pub minorization: Vec<AxiomCheck>,
    pub tol: f64,
    pub all_pass: bool,
}

impl AxiomReport {
    pub fn failures(&self) -> Vec<&AxiomCheck> {
        std::iter::once(&self.empty_family)
            .chain(&self.monotonicity)
            .chain(&self.subadditivity)
            .chain(&self.minorization)
            .filter(|c| !c.pass)
            .collect()
    }

    pub fn checks(&self) -> usize {
        1 + self.monotonicity.len() + self.subadditivity.len() + self.minorization.len()
    }
}

fn suite_solver() -> SolverOptions {
    SolverOptions { max_sweeps: 20_000, gap_tol: 1e-7, stall_window: 200, stall_tol: 1e-10 }
}

/// Checks `M(∅) = 0`, monotonicity, subadditivity and minorization on the
/// sampled families, with relations detected from the curves themselves.
pub fn modulus_axiom_suite(families: &[CurveFamily], field: &MetricField, tol: f64) -> Result<AxiomReport, ModulusError> {
    let opts = suite_solver();
    // Ring families clip cell weights to the shell; compare all families under full cells.
    let solve = |f: &CurveFamily| {
        let plain = if f.is_empty() { CurveFamily::empty() } else { CurveFamily::user(f.curves().to_vec())? };
        modulus_lower(&plain, field, &opts).map(|r| r.lower)
    };
    let empty = solve(&CurveFamily::empty())?;
    let empty_family = AxiomCheck { axiom: "empty".into(), families: vec![], lhs: empty, rhs: 0.0, pass: empty == 0.0 };
    let moduli = families.iter().map(solve).collect::<Result<Vec<_>, _>>()?;

    let mut monotonicity = Vec::new();
    let mut minorization = Vec::new();
    let mut subadditivity = Vec::new();
    for i in 0..families.len() {
        for j in 0..families.len() {
            if i == j || families[i] == families[j] {
                continue;
            }
            if families[i].is_subfamily_of(&families[j]) {
                monotonicity.push(AxiomCheck {
                    axiom: "monotonicity".into(),
                    families: vec![i, j],
                    lhs: moduli[i],
                    rhs: moduli[j],
                    pass: moduli[i] <= moduli[j] + tol,
                });
            } else if minorizes(&families[i], &families[j]) {
                minorization.push(AxiomCheck {
                    axiom: "minorization".into(),
                    families: vec![i, j],
                    lhs: moduli[i],
                    rhs: moduli[j],
                    pass: moduli[i] <= moduli[j] + tol,
                });
            }
        }
    }
    for i in 0..families.len() {
        for j in i + 1..families.len() {
            let union = families[i].union(&families[j]);
            let m = solve(&union)?;
            let rhs = moduli[i] + moduli[j];
            subadditivity.push(AxiomCheck { axiom: "subadditivity".into(), families: vec![i, j], lhs: m, rhs, pass: m <= rhs + tol });
        }
    }
    if families.len() > 2 {
        let all = families.iter().fold(CurveFamily::empty(), |acc, f| acc.union(f));
        let m = solve(&all)?;
        let rhs: f64 = moduli.iter().sum();
        subadditivity.push(AxiomCheck {
            axiom: "subadditivity".into(),
            families: (0..families.len()).collect(),
            lhs: m,
            rhs,
            pass: m <= rhs + tol,
        });
    }
    let mut report = AxiomReport { moduli, empty_family, monotonicity, subadditivity, minorization, tol, all_pass: false };
    report.all_pass = report.failures().is_empty();
    Ok(report)
}

/// Randomized families with known relations for the axiom suite.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomFamilies {
    pub ring: RingSpec,
    /// Subfamily of `larger`.
    pub smaller: CurveFamily,
    pub larger: CurveFamily,
    /// Disjoint split of `larger`.
    pub split_a: CurveFamily,
    pub split_b: CurveFamily,
    /// Curves of `truncated` continued radially beyond the outer sphere.
    pub extended: CurveFamily,
    pub truncated: CurveFamily,
}

impl AxiomFamilies {
    pub fn as_list(&self) -> Vec<CurveFamily> {
        vec![
            self.smaller.clone(),
            self.larger.clone(),
            self.split_a.clone(),
            self.split_b.clone(),
            self.extended.clone(),
            self.truncated.clone(),
        ]
    }
}

/// Draws a random ring inside the grid and builds related families from it.
pub fn random_axiom_families(field: &MetricField, seed: u64) -> Result<AxiomFamilies, ModulusError> {
    let grid = field.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let center: Vec<f64> = (0..dim).map(|k| grid.origin()[k] + 0.5 * grid.spacing()[k] * grid.extents()[k] as f64).collect();
    let room = grid.distance_to_boundary(&center);
    let x0: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-0.05..0.05) * room).collect();
    let room = grid.distance_to_boundary(&x0);
    let r2 = room * rng.gen_range(0.5..0.7);
    let r1 = r2 * rng.gen_range(0.2..0.5);
    let ring = RingSpec::chart(x0.clone(), r1, r2)?;
    let count = rng.gen_range(12..=24);
    let level = Perturbation::new(rng.gen_range(0..=2))?;
    let larger = sample_ring_curves(&ring, grid, count, level, rng.gen())?;

    let small_count = rng.gen_range(3..count);
    let mut idx: Vec<usize> = (0..count).collect();
    for i in (1..count).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut smaller_idx = idx[..small_count].to_vec();
    smaller_idx.sort_unstable();
    let smaller = larger.subset(&smaller_idx);
    let cut = rng.gen_range(1..count);
    let mut a_idx = idx[..cut].to_vec();
    let mut b_idx = idx[cut..].to_vec();
    a_idx.sort_unstable();
    b_idx.sort_unstable();
    let split_a = larger.subset(&a_idx);
    let split_b = larger.subset(&b_idx);

    let truncated_src = sample_ring_curves(&ring, grid, rng.gen_range(6..=16), level, rng.gen())?;
    let extra = (room - r2) * 0.8;
    let mut ext_curves = Vec::with_capacity(truncated_src.len());
    for c in truncated_src.curves() {
        let end = c.end();
        let r = euclid(end, &x0);
        let tip: Vec<f64> = end.iter().zip(&x0).map(|(e, x)| x + (e - x) * (r + extra) / r).collect();
        let mut verts = c.vertices().to_vec();
        verts.push(tip);
        ext_curves.push(CurvePolyline::new(verts, false)?);
    }
    let extended = CurveFamily::user(ext_curves)?;
    let truncated = truncated_src.subset(&(0..truncated_src.len()).collect::<Vec<_>>());
    Ok(AxiomFamilies { ring, smaller, larger, split_a, split_b, extended, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;

    #[test]
    fn subcurve_detection() {
        let sup = CurvePolyline::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![2.0, 2.0]], false).unwrap();
        let piece = CurvePolyline::new(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![2.0, 1.0]], false).unwrap();
        let chord = CurvePolyline::segment(vec![1.0, 0.0], vec![2.0, 1.0]).unwrap();
        let off = CurvePolyline::segment(vec![1.0, 0.5], vec![2.0, 0.5]).unwrap();
        assert!(is_subcurve(&piece, &sup, 1e-12));
        assert!(is_subcurve(&sup, &sup, 1e-12));
        assert!(!is_subcurve(&chord, &sup, 1e-12));
        assert!(!is_subcurve(&off, &sup, 1e-12));
    }

    #[test]
    fn random_families_have_expected_relations() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 32).unwrap());
        let fams = random_axiom_families(&field, 3).unwrap();
        assert!(fams.smaller.is_subfamily_of(&fams.larger));
        assert_eq!(fams.split_a.len() + fams.split_b.len(), fams.larger.len());
        assert!(minorizes(&fams.extended, &fams.truncated));
        assert!(!minorizes(&fams.truncated, &fams.extended));
    }

    #[test]
    fn suite_passes_on_random_case() {
        let field = MetricField::euclidean(ChartGrid::cube(2, -1.0, 1.0, 32).unwrap());
        let fams = random_axiom_families(&field, 11).unwrap();
        let report = modulus_axiom_suite(&fams.as_list(), &field, 1e-3).unwrap();
        assert!(report.all_pass, "{:?}", report.failures());
        assert!(!report.monotonicity.is_empty());
        assert!(!report.minorization.is_empty());
        assert_eq!(report.empty_family.lhs, 0.0);
    }
}
