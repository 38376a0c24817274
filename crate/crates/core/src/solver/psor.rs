//! Projected successive over-relaxation.
//!
//! Nodes are swept in `2^d` parity colours; nodes of one colour never share
//! a stencil, so each colour is updated row by row in parallel without
//! changing the fixed point. Plane updates are clipped at the obstacle.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{finish, DiscreteProblem, LevelStats, SolutionField, SolverStats, Stencils};
use crate::error::{Error, Result};
use crate::exec::{Parallelism, SharedSlice};
use crate::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relaxation {
    /// `ω = 2 / (1 + sin(π h / 2))` on each level.
    Auto,
    Fixed(f64),
}

impl Relaxation {
    pub fn omega(self, intervals: usize) -> f64 {
        match self {
            Relaxation::Auto => 2.0 / (1.0 + (std::f64::consts::PI / intervals as f64).sin()),
            Relaxation::Fixed(w) => w,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PsorConfig {
    /// Stop when the largest nodal update of a sweep is at most `tol` times
    /// the largest projected Gauss–Seidel correction of the cold start, and
    /// the energy decrement is at most `tol` times the energy scale.
    pub tol: f64,
    /// Sweep cap on the finest level; defaults to `10^5` (`n = 1`) or `10^4` (`n = 2`).
    pub max_iters: Option<usize>,
    pub relaxation: Relaxation,
    /// Start from prolongated solutions of successively coarser problems.
    pub nested: bool,
    /// Relative tolerance on the coarse levels.
    pub coarse_tol: f64,
    pub parallelism: Parallelism,
    /// Initial iterate (fixed nodes are reset to the Dirichlet data).
    pub initial: Option<GridField>,
}

impl Default for PsorConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: None,
            relaxation: Relaxation::Auto,
            nested: true,
            coarse_tol: 1e-6,
            parallelism: Parallelism::default(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Row {
    /// Index of the row's `x_1 = -1` node.
    base: usize,
    /// Plane index of the same node, for rows on the plane.
    plane: Option<usize>,
}

fn rows_by_colour(p: &DiscreteProblem) -> Vec<Vec<Row>> {
    let g = p.grid();
    let d = g.dim();
    let last = g.intervals();
    let m = g.nodes_per_axis();
    let mut out = vec![Vec::new(); 1 << d];
    let (jr, kr) = match d {
        2 => (1..last, 0..1),
        _ => (1..last, 1..last),
    };
    for k in kr {
        for j in jr.clone() {
            let base = g.index([0, j, k]);
            let plane = match d {
                2 if j == g.mid() => Some(0),
                3 if k == g.mid() => Some(m * j),
                _ => None,
            };
            for c0 in 0..2 {
                let colour = c0 | ((j & 1) << 1) | ((k & 1) << 2);
                out[colour].push(Row { base, plane });
            }
        }
    }
    out
}

struct Sweeper<'a, const S: usize> {
    p: &'a DiscreteProblem,
    offsets: [isize; S],
    uniform: Option<[f64; S]>,
    stored: &'a [f64],
    omega: f64,
}

impl<'a, const S: usize> Sweeper<'a, S> {
    fn new(p: &'a DiscreteProblem, omega: f64) -> Self {
        let mut offsets = [0isize; S];
        offsets.copy_from_slice(&p.offsets);
        let (uniform, stored) = match &p.stencils {
            Stencils::Uniform(v) => {
                let mut a = [0.0; S];
                a.copy_from_slice(v);
                (Some(a), &[][..])
            }
            Stencils::Stored(v) => (None, &v[..]),
        };
        Self {
            p,
            offsets,
            uniform,
            stored,
            omega,
        }
    }

    /// Update the nodes of one row that carry colour bit `c0`; returns the
    /// largest update and the energy change.
    #[inline]
    fn row(&self, u: SharedSlice<'_>, row: Row, c0: usize) -> (f64, f64) {
        let p = self.p;
        let last = p.grid.intervals();
        let load = &p.load;
        let phi = p.obstacle.as_deref();
        let fixed = p.fixed.as_deref();
        let centre = S / 2;
        let start = if c0 == 1 { 1 } else { 2 };
        let mut max_change = 0.0_f64;
        let mut de = 0.0;
        let mut i = start;
        while i < last {
            let idx = row.base + i;
            if fixed.is_some_and(|m| m[idx]) {
                i += 2;
                continue;
            }
            let st: &[f64; S] = match &self.uniform {
                Some(a) => a,
                None => self.stored[idx * S..(idx + 1) * S].try_into().expect("stencil width"),
            };
            let mut acc = 0.0;
            for s in 0..S {
                // SAFETY: neighbours have other colours and are not written in this phase.
                acc += st[s] * unsafe { u.get((idx as isize + self.offsets[s]) as usize) };
            }
            let kpp = st[centre];
            let old = unsafe { u.get(idx) };
            let grad = acc - load[idx];
            let mut new = old - self.omega * grad / kpp;
            if let (Some(plane), Some(phi)) = (row.plane, phi) {
                new = new.max(phi[plane + i]);
            }
            let delta = new - old;
            if delta != 0.0 {
                de += delta * grad + 0.5 * kpp * delta * delta;
                max_change = max_change.max(delta.abs());
                // SAFETY: `idx` belongs to this row and colour.
                unsafe { u.set(idx, new) };
            }
            i += 2;
        }
        (max_change, de)
    }

    fn sweep(&self, u: &mut [f64], colours: &[Vec<Row>], par: Parallelism) -> (f64, f64) {
        let shared = SharedSlice::new(u);
        let mut max_change = 0.0_f64;
        let mut de = 0.0;
        for (colour, rows) in colours.iter().enumerate() {
            let c0 = colour & 1;
            let parts = par.map_slice(rows, |r| self.row(shared, *r, c0));
            for (m, e) in parts {
                max_change = max_change.max(m);
                de += e;
            }
        }
        (max_change, de)
    }
}

/// Dirichlet values on fixed nodes, zero elsewhere, lifted onto the obstacle.
fn cold_start(p: &DiscreteProblem) -> Vec<f64> {
    let g = p.grid();
    let data = p.dirichlet.values();
    let mut u: Vec<f64> = (0..g.len())
        .map(|i| if p.is_fixed(i) { data[i] } else { 0.0 })
        .collect();
    project(p, &mut u);
    u
}

fn project(p: &DiscreteProblem, u: &mut [f64]) {
    if let Some(phi) = &p.obstacle {
        let g = p.grid();
        for (k, f) in phi.iter().enumerate() {
            let idx = g.plane_node(k);
            if !p.is_fixed(idx) && u[idx] < *f {
                u[idx] = *f;
            }
        }
    }
}

/// Largest projected Gauss–Seidel correction over the free nodes.
fn projected_correction(p: &DiscreteProblem, u: &[f64]) -> f64 {
    let g = p.grid();
    let parts = Parallelism::default().map(g.len(), |i| {
        if p.is_fixed(i) {
            return 0.0;
        }
        let grad = p.apply_row(u, i) - p.load[i];
        let mut new = u[i] - grad / p.diagonal(i);
        if let (Some(phi), Some(k)) = (&p.obstacle, g.plane_index(i)) {
            new = new.max(phi[k]);
        }
        (new - u[i]).abs()
    });
    parts.into_iter().fold(0.0, f64::max)
}

struct LevelOutcome {
    iterations: usize,
    final_change: f64,
    converged: bool,
    residual_history: Vec<f64>,
    energy_history: Vec<f64>,
}

fn run_level(
    p: &DiscreteProblem,
    u: &mut [f64],
    omega: f64,
    threshold: f64,
    tol: f64,
    max_iters: usize,
    par: Parallelism,
    record: bool,
) -> LevelOutcome {
    let colours = rows_by_colour(p);
    let mut energy = if record { p.energy(u) } else { 0.0 };
    let mut residual_history = Vec::new();
    let mut energy_history = Vec::new();
    let mut final_change = f64::INFINITY;
    for it in 1..=max_iters {
        let (change, de) = match p.offsets.len() {
            9 => Sweeper::<9>::new(p, omega).sweep(u, &colours, par),
            _ => Sweeper::<27>::new(p, omega).sweep(u, &colours, par),
        };
        final_change = change;
        if record {
            energy += de;
            residual_history.push(change);
            energy_history.push(energy);
        }
        let energy_scale = if record { energy.abs() } else { 0.0 };
        if change <= threshold && (-de <= tol * energy_scale || de.abs() < f64::MIN_POSITIVE || !record) {
            return LevelOutcome {
                iterations: it,
                final_change,
                converged: true,
                residual_history,
                energy_history,
            };
        }
    }
    LevelOutcome {
        iterations: max_iters,
        final_change,
        converged: false,
        residual_history,
        energy_history,
    }
}

fn reset_fixed(p: &DiscreteProblem, u: &mut [f64]) {
    let data = p.dirichlet.values();
    for (i, v) in u.iter_mut().enumerate() {
        if p.is_fixed(i) {
            *v = data[i];
        }
    }
    project(p, u);
}

/// Solve the discrete complementarity problem by PSOR.
pub fn solve_psor(p: &DiscreteProblem, cfg: &PsorConfig) -> Result<SolutionField> {
    let start = Instant::now();
    let g = *p.grid();
    let max_iters = cfg.max_iters.unwrap_or(if g.n() == 1 { 100_000 } else { 10_000 });
    if !(cfg.tol > 0.0) || max_iters == 0 {
        return Err(Error::Parameter("PSOR needs tol > 0 and max_iters > 0".into()));
    }
    if let Relaxation::Fixed(w) = cfg.relaxation {
        if !(w > 0.0 && w < 2.0) {
            return Err(Error::Parameter(format!("relaxation factor must lie in (0, 2), got {w}")));
        }
    }
    let cold = cold_start(p);
    let r0 = projected_correction(p, &cold);
    let mut levels = Vec::new();

    let mut u = match &cfg.initial {
        Some(init) => {
            if init.grid() != &g {
                return Err(Error::Grid("initial iterate lives on a different grid".into()));
            }
            let mut u = init.values().to_vec();
            reset_fixed(p, &mut u);
            u
        }
        None if cfg.nested => {
            let mut chain = vec![];
            let mut q = p.coarsen();
            while let Some(c) = q {
                if c.grid().intervals() < 16 {
                    break;
                }
                q = c.coarsen();
                chain.push(c);
            }
            let mut guess: Option<GridField> = None;
            for c in chain.iter().rev() {
                let mut u = match &guess {
                    Some(prev) => {
                        let mut u = prev.prolong_to(c.grid())?.into_values();
                        reset_fixed(c, &mut u);
                        u
                    }
                    None => cold_start(c),
                };
                let rc = projected_correction(c, &cold_start(c));
                let omega = cfg.relaxation.omega(c.grid().intervals());
                let out = run_level(
                    c,
                    &mut u,
                    omega,
                    cfg.coarse_tol * rc,
                    cfg.coarse_tol,
                    max_iters,
                    cfg.parallelism,
                    false,
                );
                levels.push(LevelStats {
                    intervals: c.grid().intervals(),
                    iterations: out.iterations,
                    omega,
                    final_change: out.final_change,
                });
                guess = Some(GridField::new(*c.grid(), u)?);
            }
            match guess {
                Some(gf) => {
                    let mut u = gf.prolong_to(&g)?.into_values();
                    reset_fixed(p, &mut u);
                    u
                }
                None => cold.clone(),
            }
        }
        None => cold.clone(),
    };

    let omega = cfg.relaxation.omega(g.intervals());
    let out = if r0 == 0.0 {
        LevelOutcome {
            iterations: 0,
            final_change: 0.0,
            converged: true,
            residual_history: vec![],
            energy_history: vec![],
        }
    } else {
        run_level(p, &mut u, omega, cfg.tol * r0, cfg.tol, max_iters, cfg.parallelism, true)
    };
    levels.push(LevelStats {
        intervals: g.intervals(),
        iterations: out.iterations,
        omega,
        final_change: out.final_change,
    });
    if !out.converged {
        return Err(Error::NonConvergence {
            method: "psor",
            iterations: out.iterations,
            residual: out.final_change,
            history: out.residual_history,
            last_iterate: Some(Box::new(GridField::new(g, u)?)),
        });
    }
    let stats = SolverStats {
        method: "psor".into(),
        converged: true,
        iterations: out.iterations,
        final_residual: out.final_change,
        tolerance: cfg.tol * r0,
        energy: p.energy(&u),
        seconds: start.elapsed().as_secs_f64(),
        levels,
        residual_history: out.residual_history,
        energy_history: out.energy_history,
    };
    Ok(finish(p, u, stats))
}
