//! Closed-form profiles: the linear family `a₀ x_{n+1}`, the cone
//! `c Re(x'·ξ + i|x_{n+1}|)^{3/2}`, the slit-plane eigenfunctions of
//! homogeneity `k/2` and the logarithmic borderline example.
//!
//! Half-integer powers use the polar angle `φ ∈ [0, π]` of
//! `(x'·ξ, |x_{n+1}|)`, so cone-type profiles are even in `x_{n+1}` and vanish
//! on the half-plane `{x'·ξ ≤ 0, x_{n+1} = 0}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::{point, Grid, GridField, Parity, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearProfile {
    pub a0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProfile {
    pub c: f64,
    pub xi: Vec<f64>,
}

impl ConeProfile {
    pub fn new(c: f64, xi: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&xi.len()) {
            return Err(Error::Parameter(format!("xi must have 1 or 2 components, got {}", xi.len())));
        }
        let norm = xi.iter().map(|t| t * t).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("|xi| must be 1, got {norm}")));
        }
        if !(c >= 0.0) {
            return Err(Error::Parameter(format!("cone coefficient must be >= 0, got {c}")));
        }
        Ok(Self { c, xi })
    }

    /// `h_{3/2}`: `c = 1`, `ξ = e_n`.
    pub fn h32(n: usize) -> Self {
        let mut xi = vec![0.0; n];
        xi[n - 1] = 1.0;
        Self { c: 1.0, xi }
    }

    /// `n = 2` cone with `ξ = (cos ψ, sin ψ)`.
    pub fn from_angle(c: f64, psi: f64) -> Self {
        Self {
            c,
            xi: vec![psi.cos(), psi.sin()],
        }
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    /// Value of the unit-coefficient cone `Re(x'·ξ + i|x_{n+1}|)^{3/2}`.
    #[inline]
    pub fn unit_value(xi: &[f64], p: &Point) -> f64 {
        let n = xi.len();
        let s: f64 = xi.iter().zip(p).map(|(a, b)| a * b).sum();
        half_power(s, p[n].abs(), 3)
    }
}

/// Kind of a slit-plane eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenKind {
    /// `Re(x_n + i|x_{n+1}|)^{k/2}`, `k` odd: even in `x_{n+1}`.
    ConeTrace,
    /// `Im(x_n + i x_{n+1})^{k/2}`, `k` even: a harmonic polynomial, odd in `x_{n+1}`.
    InteriorHarmonic,
    /// `x_1 Re(x_2 + i|x_3|)^{1/2}` (`n = 2`, `k = 3`).
    Tangential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenProfile {
    pub k: u32,
    pub kind: EigenKind,
}

impl EigenProfile {
    /// The natural member for index `k`: cone-trace for odd `k`, harmonic for even.
    pub fn new(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("eigen index must be positive".into()));
        }
        let kind = if k % 2 == 1 {
            EigenKind::ConeTrace
        } else {
            EigenKind::InteriorHarmonic
        };
        Ok(Self { k, kind })
    }

    pub fn tangential() -> Self {
        Self {
            k: 3,
            kind: EigenKind::Tangential,
        }
    }

    pub fn homogeneity(&self) -> f64 {
        self.k as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "parameters", rename_all = "snake_case")]
pub enum Profile {
    Linear(LinearProfile),
    Cone(ConeProfile),
    Eigen(EigenProfile),
    /// `-ln ρ · ρ^{3/2} cos(3θ/2)` in the `(x_n, |x_{n+1}|)` plane.
    Log,
}

impl Profile {
    pub fn h32(n: usize) -> Self {
        Profile::Cone(ConeProfile::h32(n))
    }

    pub fn linear(a0: f64) -> Self {
        Profile::Linear(LinearProfile { a0 })
    }

    /// Evaluate at a point with `n+1` coordinates.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if !(2..=3).contains(&x.len()) {
            return Err(Error::Parameter(format!("points have 2 or 3 coordinates, got {}", x.len())));
        }
        let n = x.len() - 1;
        if let Profile::Cone(c) = self {
            if c.n() != n {
                return Err(Error::Parameter(format!(
                    "cone with {}-dimensional xi evaluated in R^{}",
                    c.n(),
                    n + 1
                )));
            }
        }
        let p = point(x);
        if matches!(self, Profile::Log) && p[n - 1] == 0.0 && p[n] == 0.0 {
            return Err(Error::Singular("log profile at the origin".into()));
        }
        Ok(self.eval(n, &p))
    }

    /// Evaluate without checks; the log profile returns 0 at its singular point.
    pub fn eval(&self, n: usize, p: &Point) -> f64 {
        match self {
            Profile::Linear(l) => l.a0 * p[n],
            Profile::Cone(c) => c.c * ConeProfile::unit_value(&c.xi, p),
            Profile::Eigen(e) => match e.kind {
                EigenKind::ConeTrace => half_power(p[n - 1], p[n].abs(), e.k),
                EigenKind::InteriorHarmonic => {
                    let m = (e.k / 2) as i32;
                    let (s, t) = (p[n - 1], p[n]);
                    s.hypot(t).powi(m) * (m as f64 * t.atan2(s)).sin()
                }
                EigenKind::Tangential => p[0] * half_power(p[n - 1], p[n].abs(), 1),
            },
            Profile::Log => {
                let (s, t) = (p[n - 1], p[n].abs());
                let rho = s.hypot(t);
                if rho == 0.0 {
                    0.0
                } else {
                    -rho.ln() * rho.powf(1.5) * (1.5 * t.atan2(s)).cos()
                }
            }
        }
    }

    /// Reflection parity in `x_{n+1}`.
    pub fn parity(&self) -> Parity {
        match self {
            Profile::Linear(_) => Parity::Odd,
            Profile::Eigen(EigenProfile {
                kind: EigenKind::InteriorHarmonic,
                ..
            }) => Parity::Odd,
            _ => Parity::Even,
        }
    }

    /// Homogeneity degree, if the profile is homogeneous.
    pub fn homogeneity(&self) -> Option<f64> {
        match self {
            Profile::Linear(_) => Some(1.0),
            Profile::Cone(_) => Some(1.5),
            Profile::Eigen(e) => Some(e.homogeneity()),
            Profile::Log => None,
        }
    }

    pub fn sample(&self, grid: &Grid) -> GridField {
        self.sample_with(grid, Parallelism::default())
    }

    pub fn sample_with(&self, grid: &Grid, par: Parallelism) -> GridField {
        let n = grid.n();
        GridField::from_fn_with(*grid, par, |p| self.eval(n, p)).with_parity(self.parity())
    }
}

/// `Re(s + i t)^{k/2}` for `t ≥ 0`, using the polar angle in `[0, π]`.
#[inline]
pub fn half_power(s: f64, t: f64, k: u32) -> f64 {
    let rho = s.hypot(t);
    if rho == 0.0 {
        return 0.0;
    }
    let half = 0.5 * k as f64;
    let radial = if k % 2 == 0 {
        rho.powi((k / 2) as i32)
    } else {
        rho.powi((k / 2) as i32) * rho.sqrt()
    };
    radial * (half * t.atan2(s)).cos()
}

/// Exact Laplacian `-3 ρ^{-1/2} cos(3θ/2)` of the log profile (`n = 1`).
pub fn laplacian_log_example(x: &[f64]) -> Result<f64> {
    if x.len() != 2 {
        return Err(Error::Parameter("the log example lives in R^2".into()));
    }
    let (s, t) = (x[0], x[1]);
    let rho = s.hypot(t);
    if rho == 0.0 {
        return Err(Error::Singular("origin".into()));
    }
    if t == 0.0 && s < 0.0 {
        return Err(Error::Singular(format!("({s}, 0) lies on the slit")));
    }
    Ok(-3.0 / rho.sqrt() * (1.5 * t.abs().atan2(s)).cos())
}

/// Angular finite-difference nodes used by [`eigen_slit_spectrum`].
pub const SLIT_NODES: usize = 4096;

/// Homogeneities of the first `m` slit-plane eigenfunctions for `n = 1`.
///
/// On the unit circle cut along the negative `x_1` axis (`θ ∈ (-π, π)`), a
/// `κ`-homogeneous harmonic function vanishing on the slit has an angular part
/// solving `-u'' = λ u` with `u(±π) = 0`; its homogeneity solves
/// `κ(κ + n - 1) = λ`. The eigenvalues of the tridiagonal finite-difference
/// operator are isolated by Sturm-sequence bisection.
pub fn eigen_slit_spectrum(m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > 20 {
        return Err(Error::Parameter(format!("mode count must be in 1..=20, got {m}")));
    }
    let nodes = SLIT_NODES;
    let step = 2.0 * PI / (nodes + 1) as f64;
    let diag = 2.0 / (step * step);
    let off = -1.0 / (step * step);
    // Number of eigenvalues strictly below x.
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = diag - x;
        if q < 0.0 {
            count += 1;
        }
        for _ in 1..nodes {
            let prev = if q == 0.0 { f64::EPSILON } else { q };
            q = diag - x - off * off / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let upper = 2.0 * diag.abs() + 2.0 * off.abs();
    let n = 1.0;
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let (mut lo, mut hi) = (0.0, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        let lambda = 0.5 * (lo + hi);
        // positive root of κ² + (n-1)κ - λ = 0
        let b = n - 1.0;
        out.push(0.5 * (-b + (b * b + 4.0 * lambda).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_point_values() {
        let h = Profile::h32(1);
        assert_eq!(h.evaluate(&[1.0, 0.0]).unwrap(), 1.0);
        assert!(h.evaluate(&[-1.0, 0.0]).unwrap().abs() < 1e-15);
        let v = h.evaluate(&[0.0, 1.0]).unwrap();
        assert!((v + 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cone_validation() {
        assert!(ConeProfile::new(1.0, vec![0.6, 0.8]).is_ok());
        assert!(ConeProfile::new(1.0, vec![0.6, 0.6]).is_err());
        assert!(ConeProfile::new(-1.0, vec![1.0]).is_err());
        let c = Profile::Cone(ConeProfile::h32(2));
        assert!(c.evaluate(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn eigen_three_is_h32() {
        let g = Grid::new(2, 0.125).unwrap();
        let e = Profile::Eigen(EigenProfile::new(3).unwrap()).sample(&g);
        let c = Profile::h32(2).sample(&g);
        assert_eq!(e.values(), c.values());
    }

    #[test]
    fn sample_parities() {
        let g = Grid::new(1, 0.125).unwrap();
        for p in [
            Profile::linear(0.7),
            Profile::h32(1),
            Profile::Log,
            Profile::Eigen(EigenProfile::new(4).unwrap()),
            Profile::Eigen(EigenProfile::new(5).unwrap()),
        ] {
            let f = p.sample(&g);
            assert!(f.parity_defect() < 1e-14, "{p:?}");
        }
        let lin = Profile::linear(1.0).sample(&g);
        for i in 0..g.len() {
            assert_eq!(lin.values()[i], g.node_point(i)[1]);
        }
    }

    #[test]
    fn log_profile_origin() {
        assert!(matches!(Profile::Log.evaluate(&[0.0, 0.0]), Err(Error::Singular(_))));
        let g = Grid::new(1, 0.25).unwrap();
        let f = Profile::Log.sample(&g);
        assert_eq!(f.at([g.mid(), g.mid(), 0]), 0.0);
    }

    #[test]
    fn log_laplacian_values() {
        assert!((laplacian_log_example(&[1.0, 0.0]).unwrap() + 3.0).abs() < 1e-14);
        assert!((laplacian_log_example(&[0.25, 0.0]).unwrap() + 6.0).abs() < 1e-14);
        assert!(laplacian_log_example(&[-0.5, 0.0]).is_err());
        assert!(laplacian_log_example(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn log_laplacian_matches_stencil() {
        let h = 2f64.powi(-10);
        let f = |x: f64, y: f64| Profile::Log.eval(1, &[x, y, 0.0]);
        let (x, y) = (0.5, 0.3);
        let lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
        assert!((lap - laplacian_log_example(&[x, y]).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn cone_is_three_halves_homogeneous() {
        let c = Profile::Cone(ConeProfile::from_angle(1.3, 0.7));
        let x = [0.2, -0.35, 0.11];
        for lam in [0.1, 0.5, 2.0, 7.0] {
            let y = [lam * x[0], lam * x[1], lam * x[2]];
            let a = c.evaluate(&y).unwrap();
            let b = lam.powf(1.5) * c.evaluate(&x).unwrap();
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
        }
    }

    #[test]
    fn spectrum_is_half_integer_ladder() {
        let s = eigen_slit_spectrum(6).unwrap();
        for (j, k) in s.iter().enumerate() {
            assert!((k - 0.5 * (j + 1) as f64).abs() < 1e-3, "{j}: {k}");
        }
        assert!(eigen_slit_spectrum(21).is_err());
    }

    #[test]
    fn profile_json_shape() {
        let v = serde_json::to_value(Profile::linear(2.0)).unwrap();
        assert_eq!(v["type"], "linear");
        assert_eq!(v["parameters"]["a0"], 2.0);
        let back: Profile = serde_json::from_value(v).unwrap();
        assert_eq!(back, Profile::linear(2.0));
    }
}
