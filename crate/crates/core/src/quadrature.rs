//! Quadrature on balls `B_r(x0)` and spheres `∂B_r(x0)`.
//!
//! Polar product rules: composite Gauss–Legendre in the radius and, per
//! radial ring, a trapezoid rule in angle (`n = 1`) or a latitude–longitude
//! product rule with Gauss–Legendre in `cos θ` about the `x_1` axis (`n = 2`).
//! Angular resolution tracks the grid spacing so that interpolated grid fields
//! are sampled at least twice per cell.

use std::f64::consts::PI;

use crate::exec::Parallelism;
use crate::grid::Point;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    assert!(m >= 1);
    let mut out = Vec::with_capacity(m);
    for i in 1..=m {
        let mut x = (PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_m(x), p0 = P_{m-1}(x)
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.reverse();
    out
}

/// Unit directions and weights of an angular rule on `S^n`.
#[derive(Debug, Clone)]
pub struct AngularRule {
    pub directions: Vec<Point>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    /// Rule whose angular spacing at radius `rho` is at most `h/2`.
    pub fn for_radius(n: usize, rho: f64, h: f64) -> Self {
        let ring = (4.0 * (PI * rho / h).ceil()) as usize;
        match n {
            1 => Self::circle(ring.max(16)),
            _ => {
                let lon = ring.max(16);
                Self::sphere((lon / 2).max(8), lon)
            }
        }
    }

    pub fn circle(m: usize) -> Self {
        let w = 2.0 * PI / m as f64;
        let directions = (0..m)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / m as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect();
        Self {
            directions,
            weights: vec![w; m],
        }
    }

    /// Latitude–longitude rule with polar axis `x_1`; longitude `φ` is measured
    /// in the `(x_2, x_3)` plane so the thin plane is hit at `φ ∈ {0, π}`.
    pub fn sphere(lat: usize, lon: usize) -> Self {
        let gl = gauss_legendre(lat);
        let dphi = 2.0 * PI / lon as f64;
        let mut directions = Vec::with_capacity(lat * lon);
        let mut weights = Vec::with_capacity(lat * lon);
        for &(t, wt) in &gl {
            let s = (1.0 - t * t).max(0.0).sqrt();
            for j in 0..lon {
                let phi = dphi * j as f64;
                directions.push([t, s * phi.cos(), s * phi.sin()]);
                weights.push(wt * dphi);
            }
        }
        Self { directions, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Ring {
    rho: f64,
    /// Radial weight including the `rho^n` Jacobian.
    weight: f64,
    rule: AngularRule,
}

/// Quadrature for `∫_{B_r(x0)}` and `∫_{∂B_r(x0)}`.
#[derive(Debug, Clone)]
pub struct BallQuadrature {
    n: usize,
    center: Point,
    radius: f64,
    rings: Vec<Ring>,
    surface: AngularRule,
}

impl BallQuadrature {
    /// Build the rule for a field with grid spacing `h`.
    pub fn new(n: usize, center: Point, radius: f64, h: f64) -> Self {
        assert!(radius > 0.0 && h > 0.0);
        let panels = ((radius / h).ceil() as usize).max(4);
        let gl = gauss_legendre(3);
        let width = radius / panels as f64;
        let mut rings = Vec::with_capacity(panels * gl.len());
        for p in 0..panels {
            let a = p as f64 * width;
            for &(t, w) in &gl {
                let rho = a + 0.5 * width * (t + 1.0);
                rings.push(Ring {
                    rho,
                    weight: 0.5 * width * w * rho.powi(n as i32),
                    rule: AngularRule::for_radius(n, rho, h),
                });
            }
        }
        let surface = AngularRule::for_radius(n, radius, h);
        Self {
            n,
            center,
            radius,
            rings,
            surface,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Exact `|B_r|`.
    pub fn ball_measure(&self) -> f64 {
        unit_ball_measure(self.n) * self.radius.powi(self.n as i32 + 1)
    }

    /// Exact `|∂B_r|`.
    pub fn sphere_measure(&self) -> f64 {
        unit_sphere_measure(self.n) * self.radius.powi(self.n as i32)
    }

    pub fn interior_len(&self) -> usize {
        self.rings.iter().map(|r| r.rule.len()).sum()
    }

    pub fn surface_len(&self) -> usize {
        self.surface.len()
    }

    /// All interior nodes and weights (materialised; prefer the integrators).
    pub fn interior_nodes(&self) -> Vec<(Point, f64)> {
        let c = self.center;
        self.rings
            .iter()
            .flat_map(|ring| {
                ring.rule
                    .directions
                    .iter()
                    .zip(&ring.rule.weights)
                    .map(move |(d, w)| (offset(&c, d, ring.rho), ring.weight * w))
            })
            .collect()
    }

    pub fn surface_nodes(&self) -> Vec<(Point, f64)> {
        let c = self.center;
        let rn = self.radius.powi(self.n as i32);
        self.surface
            .directions
            .iter()
            .zip(&self.surface.weights)
            .map(|(d, w)| (offset(&c, d, self.radius), rn * w))
            .collect()
    }

    /// `∫_{B_r} f` for a vector of `K` integrands at once.
    pub fn integrate_interior<const K: usize, F>(&self, par: Parallelism, f: F) -> [f64; K]
    where
        F: Fn(&Point) -> [f64; K] + Sync + Send,
    {
        let c = self.center;
        let partial = par.map_slice(&self.rings, |ring| {
            let mut acc = [0.0; K];
            for (d, w) in ring.rule.directions.iter().zip(&ring.rule.weights) {
                let v = f(&offset(&c, d, ring.rho));
                for k in 0..K {
                    acc[k] += w * v[k];
                }
            }
            for a in acc.iter_mut() {
                *a *= ring.weight;
            }
            acc
        });
        let mut total = [0.0; K];
        for acc in partial {
            for k in 0..K {
                total[k] += acc[k];
            }
        }
        total
    }

    /// `∫_{∂B_r} f` for a vector of `K` integrands.
    pub fn integrate_surface<const K: usize, F>(&self, f: F) -> [f64; K]
    where
        F: Fn(&Point) -> [f64; K],
    {
        let c = self.center;
        let rn = self.radius.powi(self.n as i32);
        let mut total = [0.0; K];
        for (d, w) in self.surface.directions.iter().zip(&self.surface.weights) {
            let v = f(&offset(&c, d, self.radius));
            for k in 0..K {
                total[k] += w * v[k];
            }
        }
        for t in total.iter_mut() {
            *t *= rn;
        }
        total
    }
}

#[inline]
fn offset(c: &Point, d: &Point, rho: f64) -> Point {
    [c[0] + rho * d[0], c[1] + rho * d[1], c[2] + rho * d[2]]
}

/// `|B_1|` in `R^{n+1}`.
pub fn unit_ball_measure(n: usize) -> f64 {
    match n {
        1 => PI,
        2 => 4.0 * PI / 3.0,
        _ => unreachable!("n is 1 or 2"),
    }
}

/// `|∂B_1|` in `R^{n+1}`.
pub fn unit_sphere_measure(n: usize) -> f64 {
    match n {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        _ => unreachable!("n is 1 or 2"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let gl = gauss_legendre(5);
        let s: f64 = gl.iter().map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(s, 2.0 / 9.0, epsilon = 1e-14);
        let s: f64 = gl.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(s, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn weights_sum_to_measures() {
        for n in 1..=2 {
            for &(r, h) in &[(0.5, 2f64.powi(-6)), (0.0625, 2f64.powi(-7)), (1.0, 2f64.powi(-5))] {
                let q = BallQuadrature::new(n, [0.1, 0.0, 0.0], r, h);
                let vol: f64 = q.integrate_interior(Parallelism::Sequential, |_| [1.0])[0];
                let area: f64 = q.integrate_surface(|_| [1.0])[0];
                assert!((vol / q.ball_measure() - 1.0).abs() <= 1e-10);
                assert!((area / q.sphere_measure() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn quadratic_polynomials_exact() {
        let h = 2f64.powi(-6);
        let r = 16.0 * h;
        // n = 1: ∫_{B_r(c)} (x - c)_1^2 = π r^4 / 4
        let c = [0.2, -0.1, 0.0];
        let q = BallQuadrature::new(1, c, r, h);
        let [a, b, m] = q.integrate_interior(Parallelism::Sequential, |p| {
            [(p[0] - c[0]).powi(2), (p[0] - c[0]) * (p[1] - c[1]), p[0] * p[1]]
        });
        assert_relative_eq!(a, PI * r.powi(4) / 4.0, max_relative = 1e-6);
        assert!(b.abs() < 1e-12);
        assert_relative_eq!(m, c[0] * c[1] * PI * r * r, max_relative = 1e-6);
        // n = 2: ∫_{B_r} x_3^2 = 4π r^5 / 15
        let q = BallQuadrature::new(2, [0.0; 3], r, h);
        let [z2] = q.integrate_interior(Parallelism::Sequential, |p| [p[2] * p[2]]);
        assert_relative_eq!(z2, 4.0 * PI * r.powi(5) / 15.0, max_relative = 1e-6);
    }

    #[test]
    fn nodes_inside_ball() {
        let c = [0.0, 0.0, 0.0];
        let q = BallQuadrature::new(2, c, 1.0, 0.25);
        for (p, _) in q.interior_nodes().iter().chain(q.surface_nodes().iter()) {
            let d = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!(d <= 1.0 + 1e-12);
        }
    }
}
