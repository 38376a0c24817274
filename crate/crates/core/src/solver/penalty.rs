//! Penalized problem `a(w, η) + ⟨β_ε(w), η⟩_plane = -(g, ∇η)` solved by
//! damped Newton on its convex energy, with Jacobi-preconditioned CG for the
//! linear steps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{finish, DiscreteProblem, LevelStats, SolutionField, SolverStats};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::GridField;

/// `β_ε`: zero on `[0, ∞)`, `ε + t/ε` below `-2ε²`, and on `[-2ε², 0]` the
/// cubic Hermite interpolant of the end values `(-ε, 0)` and slopes `(1/ε, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFunction {
    pub eps: f64,
}

impl PenaltyFunction {
    pub fn new(eps: f64) -> Self {
        Self { eps }
    }

    fn width(&self) -> f64 {
        2.0 * self.eps * self.eps
    }

    pub fn beta(&self, t: f64) -> f64 {
        let (e, l) = (self.eps, self.width());
        if t >= 0.0 {
            0.0
        } else if t <= -l {
            e + t / e
        } else {
            // Hermite form collapses to -ε (t/L)²
            -e * (t / l) * (t / l)
        }
    }

    pub fn beta_prime(&self, t: f64) -> f64 {
        let (e, l) = (self.eps, self.width());
        if t >= 0.0 {
            0.0
        } else if t <= -l {
            1.0 / e
        } else {
            -2.0 * e * t / (l * l)
        }
    }

    /// `B(t) = ∫_0^t β_ε`, convex and nonnegative.
    pub fn primitive(&self, t: f64) -> f64 {
        let (e, l) = (self.eps, self.width());
        if t >= 0.0 {
            0.0
        } else if t <= -l {
            e * l / 3.0 + e * (t + l) + (t * t - l * l) / (2.0 * e)
        } else {
            -e * t * t * t / (3.0 * l * l)
        }
    }

    /// Fritsch–Carlson parameters `(α, β) = (m₀/Δ, m₁/Δ)` of the middle piece
    /// and whether they lie in the monotonicity region `α² + β² ≤ 9`.
    pub fn fritsch_carlson(&self) -> (f64, f64, bool) {
        let delta = self.eps / self.width();
        let a = (1.0 / self.eps) / delta;
        let b = 0.0 / delta;
        (a, b, a >= 0.0 && b >= 0.0 && a * a + b * b <= 9.0)
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    pub eps: f64,
    /// Relative tolerance on the nonlinear residual.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Relative tolerance of each CG solve.
    pub cg_tol: f64,
    pub max_cg: usize,
    pub parallelism: Parallelism,
    /// Initial iterate, e.g. the solution for a larger `ε`.
    pub initial: Option<GridField>,
}

impl PenaltyConfig {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            newton_tol: 1e-10,
            max_newton: 200,
            cg_tol: 1e-12,
            max_cg: 20_000,
            parallelism: Parallelism::default(),
            initial: None,
        }
    }
}

struct Penalized<'a> {
    p: &'a DiscreteProblem,
    beta: PenaltyFunction,
    hn: f64,
    free: Vec<bool>,
    plane: Vec<Option<usize>>,
    par: Parallelism,
}

impl Penalized<'_> {
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.par.map(u.len(), |i| {
            if !self.free[i] {
                return 0.0;
            }
            let mut r = self.p.apply_row(u, i) - self.p.load[i];
            if self.plane[i].is_some() {
                r += self.hn * self.beta.beta(u[i]);
            }
            r
        })
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let pen: f64 = (0..u.len())
            .filter(|&i| self.free[i] && self.plane[i].is_some())
            .map(|i| self.beta.primitive(u[i]))
            .sum();
        self.p.energy(u) + self.hn * pen
    }

    fn jacobian_apply(&self, u: &[f64], x: &[f64]) -> Vec<f64> {
        self.par.map(x.len(), |i| {
            if !self.free[i] {
                return 0.0;
            }
            let mut r = self.p.apply_row(x, i);
            if self.plane[i].is_some() {
                r += self.hn * self.beta.beta_prime(u[i]) * x[i];
            }
            r
        })
    }

    /// Solve `J x = b` on the free nodes by Jacobi-PCG.
    fn linear_solve(&self, u: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = b.len();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                if !self.free[i] {
                    1.0
                } else {
                    let mut d = self.p.diagonal(i);
                    if self.plane[i].is_some() {
                        d += self.hn * self.beta.beta_prime(u[i]);
                    }
                    d
                }
            })
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..max_iter {
            let q = self.jacobian_apply(u, &d);
            let alpha = rz / dot(&d, &q);
            for i in 0..n {
                x[i] += alpha * d[i];
                r[i] -= alpha * q[i];
            }
            if dot(&r, &r).sqrt() <= tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                d[i] = z[i] + beta * d[i];
            }
        }
        Err(Error::NonConvergence {
            method: "pcg",
            iterations: max_iter,
            residual: dot(&r, &r).sqrt() / bnorm,
            history: vec![],
            last_iterate: None,
        })
    }
}

/// Solve the penalized problem for obstacle `φ = 0`.
pub fn solve_penalized(p: &DiscreteProblem, cfg: &PenaltyConfig) -> Result<SolutionField> {
    let start = Instant::now();
    if !(1e-6..=1e-1).contains(&cfg.eps) {
        return Err(Error::Parameter(format!("eps must lie in [1e-6, 1e-1], got {}", cfg.eps)));
    }
    match p.obstacle() {
        Some(phi) if phi.iter().all(|v| *v == 0.0) => {}
        _ => {
            return Err(Error::Parameter(
                "the penalized problem is defined for the zero obstacle only".into(),
            ))
        }
    }
    let g = *p.grid();
    let free: Vec<bool> = (0..g.len()).map(|i| !p.is_fixed(i)).collect();
    let plane: Vec<Option<usize>> = (0..g.len()).map(|i| g.plane_index(i)).collect();
    let sys = Penalized {
        p,
        beta: PenaltyFunction::new(cfg.eps),
        hn: g.h().powi(g.n() as i32),
        free,
        plane,
        par: cfg.parallelism,
    };
    let data = p.dirichlet().values();
    let mut u: Vec<f64> = match &cfg.initial {
        Some(init) if init.grid() == &g => init.values().to_vec(),
        Some(_) => return Err(Error::Grid("initial iterate lives on a different grid".into())),
        None => vec![0.0; g.len()],
    };
    for i in 0..g.len() {
        if !sys.free[i] {
            u[i] = data[i];
        }
    }
    let norm = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cold: Vec<f64> = (0..g.len()).map(|i| if sys.free[i] { 0.0 } else { data[i] }).collect();
    let f0 = norm(&sys.gradient(&cold)).max(f64::MIN_POSITIVE);
    let target = cfg.newton_tol * f0;
    let mut energy = sys.energy(&u);
    let mut residual_history = Vec::new();
    let mut energy_history = Vec::new();
    for it in 1..=cfg.max_newton {
        let grad = sys.gradient(&u);
        let res = norm(&grad);
        residual_history.push(res);
        energy_history.push(energy);
        if res <= target {
            let stats = SolverStats {
                method: "penalized-newton".into(),
                converged: true,
                iterations: it - 1,
                final_residual: res,
                tolerance: target,
                energy: p.energy(&u),
                seconds: start.elapsed().as_secs_f64(),
                levels: vec![LevelStats {
                    intervals: g.intervals(),
                    iterations: it - 1,
                    omega: 1.0,
                    final_change: res,
                }],
                residual_history,
                energy_history,
            };
            return Ok(finish(p, u, stats));
        }
        let rhs: Vec<f64> = grad.iter().map(|v| -v).collect();
        let step = sys.linear_solve(&u, &rhs, cfg.cg_tol, cfg.max_cg)?;
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let e = sys.energy(&trial);
            if e <= energy + 1e-4 * t * slope || (e - energy).abs() <= 1e-15 * energy.abs().max(1.0) {
                u = trial;
                energy = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let last = norm(&sys.gradient(&u));
    Err(Error::NonConvergence {
        method: "penalized-newton",
        iterations: residual_history.len(),
        residual: last,
        history: residual_history,
        last_iterate: Some(Box::new(GridField::new(g, u)?)),
    })
}
