use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CurveFamily, FamilyKind, ModulusError, RingSpec};
use crate::grid::ChartGrid;
use crate::manifold::CurvePolyline;

/// Vertices per sampled ring curve.
const VERTICES: usize = 32;

/// Deflection level of sampled ring curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation(u8);

impl Perturbation {
    pub const NONE: Perturbation = Perturbation(0);

    pub fn new(level: u8) -> Result<Self, ModulusError> {
        if level > 2 {
            return Err(ModulusError::InvalidFamily(format!("perturbation level must be 0, 1 or 2, got {level}")));
        }
        Ok(Self(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

/// Stratified unit directions: equal angles in 2-D, a Fibonacci lattice in 3-D,
/// seeded Gaussian directions beyond.
pub(crate) fn stratified_directions(dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    match dim {
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => (0..count)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Unit vector orthogonal to `dir`, random in dimensions ≥ 3.
fn tangent(dir: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    if dir.len() == 2 {
        return vec![-dir[1], dir[0]];
    }
    loop {
        let mut v: Vec<f64> = (0..dir.len()).map(|_| gaussian(rng)).collect();
        let dot: f64 = v.iter().zip(dir).map(|(a, b)| a * b).sum();
        for (x, d) in v.iter_mut().zip(dir) {
            *x -= dot * d;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Curves joining `S(x0, r1)` to `S(x0, r2)` inside the ring.
///
/// Level 0 gives radial segments. At level `L > 0` every curve whose index is not
/// a multiple of `L + 1` is deflected tangentially along a piecewise-linear profile
/// with `2L + 1` random interior knots of amplitude at most `(r2 - r1) / 4`.
pub fn sample_ring_curves(
    ring: &RingSpec,
    grid: &ChartGrid,
    count: usize,
    perturbation: Perturbation,
    seed: u64,
) -> Result<CurveFamily, ModulusError> {
    if count == 0 {
        return Err(ModulusError::InvalidFamily("count must be at least 1".into()));
    }
    if ring.dim() != grid.dim() {
        return Err(ModulusError::InvalidRing("ring dimension does not match the grid".into()));
    }
    ring.require_chart_mode()?;
    ring.check_in_grid(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = stratified_directions(ring.dim(), count, &mut rng);
    let level = perturbation.level() as usize;
    let amplitude = (ring.r2 - ring.r1) / 4.0;
    let mut curves = Vec::with_capacity(count);
    for (k, dir) in dirs.iter().enumerate() {
        let deflect = level > 0 && k % (level + 1) != 0;
        let curve = if deflect {
            let knots = 2 * level + 1;
            let mut profile = vec![0.0; knots + 2];
            for v in profile.iter_mut().take(knots + 1).skip(1) {
                *v = rng.gen_range(-amplitude..=amplitude);
            }
            let e = tangent(dir, &mut rng);
            let vertices = (0..VERTICES)
                .map(|i| {
                    let s = i as f64 / (VERTICES - 1) as f64;
                    let r = ring.r1 + s * (ring.r2 - ring.r1);
                    let u = s * (knots + 1) as f64;
                    let j = (u.floor() as usize).min(knots);
                    let d = profile[j] + (u - j as f64) * (profile[j + 1] - profile[j]);
                    let phi = d / r;
                    let (sn, cs) = phi.sin_cos();
                    (0..dir.len()).map(|m| ring.x0[m] + r * (cs * dir[m] + sn * e[m])).collect()
                })
                .collect();
            CurvePolyline::new(vertices, false)?
        } else {
            let a = dir.iter().zip(&ring.x0).map(|(d, x)| x + ring.r1 * d).collect();
            let b = dir.iter().zip(&ring.x0).map(|(d, x)| x + ring.r2 * d).collect();
            CurvePolyline::segment(a, b)?
        };
        curves.push(curve);
    }
    CurveFamily::new(curves, FamilyKind::RingRadial { ring: ring.clone(), perturbation: perturbation.level(), seed })
}
