//! Quadrature rules: Gauss–Legendre panels, log-spaced radial integration and
//! product rules on the unit sphere.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_order.
            let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Radial quadrature on `[t_lo, t_hi]` using the substitution `t = exp(s)` and
/// Gauss–Legendre panels uniform in `s`. Returns `(t, weight)` pairs so that
/// `∫ f(t) dt ≈ Σ weight·f(t)`.
pub fn log_radial_rule(t_lo: f64, t_hi: f64, panels_per_decade: usize, order: usize) -> Vec<(f64, f64)> {
    assert!(t_lo > 0.0 && t_hi > t_lo);
    let gl = GaussLegendre::new(order);
    let (s_lo, s_hi) = (t_lo.ln(), t_hi.ln());
    let decades = (s_hi - s_lo) / std::f64::consts::LN_10;
    let panels = ((decades * panels_per_decade as f64).ceil() as usize).max(1);
    let ds = (s_hi - s_lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = s_lo + p as f64 * ds;
        let mid = a + 0.5 * ds;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let s = mid + 0.5 * ds * x;
            let t = s.exp();
            out.push((t, w * 0.5 * ds * t));
        }
    }
    out
}

/// `∫_{t_lo}^{t_hi} f(t) dt` on a log-spaced Gauss–Legendre rule.
pub fn integrate_log(t_lo: f64, t_hi: f64, panels_per_decade: usize, order: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    log_radial_rule(t_lo, t_hi, panels_per_decade, order).into_iter().map(|(t, w)| w * f(t)).sum()
}

/// Product rule on the unit sphere `S^{n-1}` in hyperspherical coordinates.
///
/// The azimuth runs over `(-π, π]` with `points` midpoints; each polar angle runs
/// over `[0, π]` with `points / 2` midpoints. Directions come with weights that
/// already include the sphere Jacobian, so `Σ w = ω_{n-1}` up to quadrature error.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub points: usize,
}

impl SphereRule {
    pub fn new(dim: usize, points: usize) -> Self {
        assert!(dim >= 2 && points >= 2);
        let n_az = points;
        let n_pol = (points / 2).max(1);
        let d_az = 2.0 * PI / n_az as f64;
        let d_pol = PI / n_pol as f64;
        // Start from the circle, then lift one polar angle at a time.
        let mut dirs: Vec<(Vec<f64>, f64)> = (0..n_az)
            .map(|j| {
                let phi = -PI + (j as f64 + 0.5) * d_az;
                (vec![phi.cos(), phi.sin()], d_az)
            })
            .collect();
        for k in 3..=dim {
            let mut next = Vec::with_capacity(dirs.len() * n_pol);
            for (d, w) in &dirs {
                for i in 0..n_pol {
                    let theta = (i as f64 + 0.5) * d_pol;
                    let (s, c) = theta.sin_cos();
                    let mut v: Vec<f64> = d.iter().map(|x| x * s).collect();
                    v.push(c);
                    next.push((v, w * s.powi(k as i32 - 2) * d_pol));
                }
            }
            dirs = next;
        }
        let (directions, weights) = dirs.into_iter().unzip();
        Self { dim, directions, weights, points }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Surface area `ω_{n-1}` of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    // ω_{n-1} = 2 π^{n/2} / Γ(n/2)
    let half = n as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_half_integer(n)
}

/// Γ(n/2) for positive integer n.
fn gamma_half_integer(n: usize) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x + 1.0 <= n as f64 / 2.0 + 1e-12 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(5);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(9));
        assert_relative_eq!(v, 2f64.powi(10) / 10.0, max_relative = 1e-13);
    }

    #[test]
    fn log_rule_integrates_power_laws() {
        let v = integrate_log(1e-6, 1.0, 2, 8, |t| 1.0 / t);
        assert_relative_eq!(v, 1e6f64.ln(), max_relative = 1e-12);
        let v = integrate_log(1e-3, 2.0, 2, 8, |t| t.sqrt());
        assert_relative_eq!(v, (2f64.powf(1.5) - 1e-3f64.powf(1.5)) / 1.5, max_relative = 1e-10);
    }

    #[test]
    fn sphere_rule_total_weight() {
        for n in 2..=4 {
            let rule = SphereRule::new(n, 64);
            let total: f64 = rule.weights.iter().sum();
            assert_relative_eq!(total, unit_sphere_area(n), max_relative = 1e-3);
            for d in &rule.directions {
                assert_relative_eq!(d.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, epsilon = 1e-13);
    }
}
