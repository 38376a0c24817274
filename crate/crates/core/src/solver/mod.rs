//! Discretization of the thin obstacle variational inequality
//!
//! ```text
//! ∫ a^{ij} ∂_i w ∂_j (v - w) + ∫ g^j ∂_j (v - w) ≥ 0   for all v ≥ φ on the plane
//! ```
//!
//! with conforming multilinear (Q1) elements on the node grid. Coefficients are
//! sampled once per cell at its midpoint. The discrete energy is
//! `E(u) = ½ uᵀKu - fᵀu` with `f_p = -∫ g·∇φ_p`.

mod penalty;
mod psor;

pub use penalty::{solve_penalized, PenaltyConfig, PenaltyFunction};
pub use psor::{solve_psor, PsorConfig, Relaxation};

use serde::{Deserialize, Serialize};

use crate::coefficients::{check_condition_n, CoefficientField, Mat};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::{Grid, GridField, Parity};
use crate::norms::FieldProbe;

/// Constraint on the thin plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    /// `w ≥ 0`.
    Zero,
    /// `w ≥ φ` with `φ` given per plane node.
    Plane(Vec<f64>),
    /// No constraint: the plain Dirichlet problem.
    Unconstrained,
}

#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    /// Accept coefficients that fail condition (N).
    pub waive_condition_n: bool,
    /// Extra nodes held at their Dirichlet value.
    pub fixed: Option<Vec<bool>>,
}

#[derive(Debug, Clone)]
enum CellCoeffs {
    Uniform { a: Mat, g: [f64; 3] },
    PerCell { a: Vec<Mat>, g: Vec<[f64; 3]> },
}

#[derive(Debug, Clone)]
enum Stencils {
    /// One stencil shared by all interior nodes.
    Uniform(Vec<f64>),
    /// `3^d` entries per node.
    Stored(Vec<f64>),
}

/// Assembled discrete problem.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    grid: Grid,
    cells: CellCoeffs,
    stencils: Stencils,
    /// Flattened index offsets of the `3^d` stencil neighbours.
    offsets: Vec<isize>,
    load: Vec<f64>,
    dirichlet: GridField,
    obstacle: Option<Vec<f64>>,
    fixed: Option<Vec<bool>>,
}

/// Per-plane-node classification and the complementarity residual.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub w: GridField,
    /// Obstacle values on the plane (zeros when unconstrained).
    pub obstacle: Vec<f64>,
    pub contact: Vec<bool>,
    pub noncontact: Vec<bool>,
    /// Discrete flux jump `(Ku - f)_p / h^n` at plane nodes (zero on the cube boundary).
    pub complementarity_residual: Vec<f64>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub intervals: usize,
    pub iterations: usize,
    pub omega: f64,
    pub final_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub tolerance: f64,
    pub energy: f64,
    pub seconds: f64,
    pub levels: Vec<LevelStats>,
    /// Per-sweep (or per-Newton-step) convergence measure on the finest level.
    pub residual_history: Vec<f64>,
    /// Energy after each sweep / step on the finest level.
    pub energy_history: Vec<f64>,
}

fn sign(bit: usize) -> f64 {
    if bit == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `∫_{[0,1]^d} ∂_k φ_i ∂_l φ_j` for the Q1 corner functions, indexed `[k*d + l][i*2^d + j]`.
fn reference_tables(d: usize) -> Vec<Vec<f64>> {
    let corners = 1 << d;
    let mut out = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            let mut t = vec![0.0; corners * corners];
            for i in 0..corners {
                for j in 0..corners {
                    let mut prod = 1.0;
                    for m in 0..d {
                        let (bi, bj) = ((i >> m) & 1, (j >> m) & 1);
                        prod *= if m == k && m == l {
                            sign(bi) * sign(bj)
                        } else if m == k {
                            0.5 * sign(bi)
                        } else if m == l {
                            0.5 * sign(bj)
                        } else if bi == bj {
                            1.0 / 3.0
                        } else {
                            1.0 / 6.0
                        };
                    }
                    t[i * corners + j] = prod;
                }
            }
            out.push(t);
        }
    }
    out
}

/// Element stiffness `K_e` (row-major `2^d × 2^d`) and load `-∫ g·∇φ_i`.
fn element(tables: &[Vec<f64>], d: usize, h: f64, a: &Mat, g: &[f64; 3]) -> (Vec<f64>, Vec<f64>) {
    let corners = 1 << d;
    let scale = h.powi(d as i32 - 2);
    let mut k_e = vec![0.0; corners * corners];
    for k in 0..d {
        for l in 0..d {
            let akl = a[k][l];
            if akl == 0.0 {
                continue;
            }
            for (e, t) in k_e.iter_mut().zip(&tables[k * d + l]) {
                *e += scale * akl * t;
            }
        }
    }
    let lscale = h.powi(d as i32 - 1) * 0.5f64.powi(d as i32 - 1);
    let f_e = (0..corners)
        .map(|i| -lscale * (0..d).map(|k| g[k] * sign((i >> k) & 1)).sum::<f64>())
        .collect();
    (k_e, f_e)
}

/// Stencil slot of neighbour offset `o ∈ {-1,0,1}^d`.
fn slot(o: &[isize]) -> usize {
    o.iter().rev().fold(0, |acc, &x| acc * 3 + (x + 1) as usize)
}

fn stencil_offsets(grid: &Grid) -> Vec<isize> {
    let d = grid.dim();
    let count = 3usize.pow(d as u32);
    (0..count)
        .map(|s| {
            let mut rest = s;
            let mut off = 0isize;
            for k in 0..d {
                let o = (rest % 3) as isize - 1;
                rest /= 3;
                off += o * grid.stride(k) as isize;
            }
            off
        })
        .collect()
}

impl DiscreteProblem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dirichlet(&self) -> &GridField {
        &self.dirichlet
    }

    pub fn obstacle(&self) -> Option<&[f64]> {
        self.obstacle.as_deref()
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn is_fixed(&self, idx: usize) -> bool {
        self.grid.is_boundary_node(idx) || self.fixed.as_ref().is_some_and(|m| m[idx])
    }

    fn cell_coeffs(&self, cell: usize) -> (Mat, [f64; 3]) {
        match &self.cells {
            CellCoeffs::Uniform { a, g } => (*a, *g),
            CellCoeffs::PerCell { a, g } => (a[cell], g[cell]),
        }
    }

    fn cell_index(&self, c: [usize; 3]) -> usize {
        let m = self.grid.intervals();
        match self.grid.dim() {
            2 => c[0] + m * c[1],
            _ => c[0] + m * (c[1] + m * c[2]),
        }
    }

    /// Row `p` of `K` assembled from the incident cells, as `3^d` entries.
    fn row_from_cells(&self, tables: &[Vec<f64>], idx: usize) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim();
        let corners = 1usize << d;
        let ijk = g.multi_index(idx);
        let last = g.intervals();
        let mut row = vec![0.0; 3usize.pow(d as u32)];
        for c in 0..corners {
            // cell whose local corner `c` is this node
            let mut cell = [0usize; 3];
            let mut ok = true;
            for k in 0..d {
                let b = (c >> k) & 1;
                if ijk[k] < b || ijk[k] - b >= last {
                    ok = false;
                    break;
                }
                cell[k] = ijk[k] - b;
            }
            if !ok {
                continue;
            }
            let (a, gv) = self.cell_coeffs(self.cell_index(cell));
            let (k_e, _) = element(tables, d, g.h(), &a, &gv);
            for j in 0..corners {
                let mut o = [0isize; 3];
                for k in 0..d {
                    o[k] = ((j >> k) & 1) as isize - ((c >> k) & 1) as isize;
                }
                row[slot(&o[..d])] += k_e[c * corners + j];
            }
        }
        row
    }

    /// Entries of row `idx`; interior rows come from the stencil store.
    fn row(&self, idx: usize) -> std::borrow::Cow<'_, [f64]> {
        let s = self.offsets.len();
        match &self.stencils {
            Stencils::Stored(v) => std::borrow::Cow::Borrowed(&v[idx * s..(idx + 1) * s]),
            Stencils::Uniform(v) if !self.grid.is_boundary_node(idx) => std::borrow::Cow::Borrowed(v),
            Stencils::Uniform(_) => {
                let tables = reference_tables(self.grid.dim());
                std::borrow::Cow::Owned(self.row_from_cells(&tables, idx))
            }
        }
    }

    /// `(K u)_p`, skipping neighbours outside the grid.
    pub fn apply_row(&self, u: &[f64], idx: usize) -> f64 {
        let g = &self.grid;
        let row = self.row(idx);
        if !g.is_boundary_node(idx) {
            return row
                .iter()
                .zip(&self.offsets)
                .map(|(k, o)| k * u[(idx as isize + o) as usize])
                .sum();
        }
        let d = g.dim();
        let ijk = g.multi_index(idx);
        let mut acc = 0.0;
        for (s, k) in row.iter().enumerate() {
            if *k == 0.0 {
                continue;
            }
            let mut rest = s;
            let mut nb = [0usize; 3];
            let mut ok = true;
            for m in 0..d {
                let o = (rest % 3) as isize - 1;
                rest /= 3;
                let v = ijk[m] as isize + o;
                if v < 0 || v > g.intervals() as isize {
                    ok = false;
                    break;
                }
                nb[m] = v as usize;
            }
            if ok {
                acc += k * u[g.index(nb)];
            }
        }
        acc
    }

    /// Diagonal entry `K_pp`.
    pub fn diagonal(&self, idx: usize) -> f64 {
        let centre = (self.offsets.len() - 1) / 2;
        self.row(idx)[centre]
    }

    /// `E(u) = ½ uᵀKu - fᵀu` over all nodes.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let parts = Parallelism::default().map(self.grid.len(), |i| {
            u[i] * (0.5 * self.apply_row(u, i) - self.load[i])
        });
        parts.iter().sum()
    }

    /// `Ku - f` at every node.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        Parallelism::default().map(self.grid.len(), |i| self.apply_row(u, i) - self.load[i])
    }

    /// Problem on the grid with half the intervals: cell coefficients are
    /// averaged over the `2^d` fine cells, data and masks are injected.
    pub fn coarsen(&self) -> Option<DiscreteProblem> {
        let coarse = self.grid.coarsen()?;
        let d = coarse.dim();
        let m = coarse.intervals();
        let cells = match &self.cells {
            CellCoeffs::Uniform { a, g } => CellCoeffs::Uniform { a: *a, g: *g },
            CellCoeffs::PerCell { a, g } => {
                let count = m.pow(d as u32);
                let mut ca = vec![[[0.0; 3]; 3]; count];
                let mut cg = vec![[0.0; 3]; count];
                let w = 1.0 / (1 << d) as f64;
                for (ci, (am, gm)) in ca.iter_mut().zip(cg.iter_mut()).enumerate() {
                    let cc = [ci % m, (ci / m) % m, ci / (m * m)];
                    for sub in 0..(1usize << d) {
                        let mut f = [0usize; 3];
                        for k in 0..d {
                            f[k] = 2 * cc[k] + ((sub >> k) & 1);
                        }
                        let fi = self.cell_index(f);
                        for i in 0..3 {
                            for j in 0..3 {
                                am[i][j] += w * a[fi][i][j];
                            }
                            gm[i] += w * g[fi][i];
                        }
                    }
                }
                CellCoeffs::PerCell { a: ca, g: cg }
            }
        };
        let dirichlet = self.dirichlet.restrict_to(&coarse).ok()?;
        let obstacle = self.obstacle.as_ref().map(|phi| {
            let mc = coarse.nodes_per_axis();
            (0..coarse.plane_len())
                .map(|k| {
                    let fine_k = match d {
                        2 => 2 * k,
                        _ => 2 * (k % mc) + self.grid.nodes_per_axis() * 2 * (k / mc),
                    };
                    phi[fine_k]
                })
                .collect()
        });
        let fixed = self.fixed.as_ref().map(|mask| {
            (0..coarse.len())
                .map(|i| {
                    let c = coarse.multi_index(i);
                    mask[self.grid.index([2 * c[0], 2 * c[1], 2 * c[2]])]
                })
                .collect()
        });
        Some(build(coarse, cells, dirichlet, obstacle, fixed))
    }
}

fn build(
    grid: Grid,
    cells: CellCoeffs,
    dirichlet: GridField,
    obstacle: Option<Vec<f64>>,
    fixed: Option<Vec<bool>>,
) -> DiscreteProblem {
    let d = grid.dim();
    let offsets = stencil_offsets(&grid);
    let mut p = DiscreteProblem {
        grid,
        cells,
        stencils: Stencils::Uniform(Vec::new()),
        offsets,
        load: Vec::new(),
        dirichlet,
        obstacle,
        fixed,
    };
    let tables = reference_tables(d);
    let par = Parallelism::default();
    p.stencils = match &p.cells {
        CellCoeffs::Uniform { .. } => {
            let mid = grid.mid();
            let centre = grid.index([mid, mid, if d == 3 { mid } else { 0 }]);
            Stencils::Uniform(p.row_from_cells(&tables, centre))
        }
        CellCoeffs::PerCell { .. } => {
            let rows = par.map(grid.len(), |i| p.row_from_cells(&tables, i));
            Stencils::Stored(rows.into_iter().flatten().collect())
        }
    };
    // load: -∫ g·∇φ_p summed over incident cells
    let zero_g = matches!(&p.cells, CellCoeffs::Uniform { g, .. } if *g == [0.0; 3]);
    p.load = if zero_g {
        vec![0.0; grid.len()]
    } else {
        par.map(grid.len(), |idx| {
            let ijk = grid.multi_index(idx);
            let last = grid.intervals();
            let mut acc = 0.0;
            for c in 0..(1usize << d) {
                let mut cell = [0usize; 3];
                let mut ok = true;
                for k in 0..d {
                    let b = (c >> k) & 1;
                    if ijk[k] < b || ijk[k] - b >= last {
                        ok = false;
                        break;
                    }
                    cell[k] = ijk[k] - b;
                }
                if ok {
                    let (a, gv) = p.cell_coeffs(p.cell_index(cell));
                    acc += element(&tables, d, grid.h(), &a, &gv).1[c];
                }
            }
            acc
        })
    };
    p
}

/// Assemble with default options (condition (N) enforced, cube boundary fixed).
pub fn assemble(
    grid: &Grid,
    coefficients: &CoefficientField,
    dirichlet: &GridField,
    obstacle: Obstacle,
) -> Result<DiscreteProblem> {
    assemble_with(grid, coefficients, dirichlet, obstacle, AssembleOptions::default())
}

pub fn assemble_with(
    grid: &Grid,
    coefficients: &CoefficientField,
    dirichlet: &GridField,
    obstacle: Obstacle,
    options: AssembleOptions,
) -> Result<DiscreteProblem> {
    if dirichlet.grid() != grid {
        return Err(Error::Grid("Dirichlet data lives on a different grid".into()));
    }
    if coefficients.grid().n() != grid.n() {
        return Err(Error::Grid("coefficients have a different dimension".into()));
    }
    let (lambda, _) = coefficients.ellipticity();
    if !(lambda > 0.0) {
        return Err(Error::Ellipticity(format!("smallest eigenvalue {lambda}")));
    }
    if !options.waive_condition_n {
        let report = check_condition_n(coefficients);
        if !report.pass {
            let worst = report
                .violations()
                .iter()
                .map(|v| format!("{} ({:e})", v.clause, v.magnitude))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::ConditionN(format!(
                "{worst}; normalize the coefficients or waive the check explicitly"
            )));
        }
    }
    if let Some(mask) = &options.fixed {
        if mask.len() != grid.len() {
            return Err(Error::Grid("fixed mask has the wrong length".into()));
        }
    }
    let obstacle = match obstacle {
        Obstacle::Zero => Some(vec![0.0; grid.plane_len()]),
        Obstacle::Plane(phi) => {
            if phi.len() != grid.plane_len() {
                return Err(Error::Grid("obstacle needs one value per plane node".into()));
            }
            Some(phi)
        }
        Obstacle::Unconstrained => None,
    };
    let d = grid.dim();
    let cells = match coefficients.as_constant() {
        Some((a, g)) => CellCoeffs::Uniform { a, g },
        None => {
            let m = grid.intervals();
            let count = m.pow(d as u32);
            let h = grid.h();
            let centres = Parallelism::default().map(count, |ci| {
                let cc = [ci % m, (ci / m) % m, ci / (m * m)];
                let mut p = [0.0; 3];
                for k in 0..d {
                    p[k] = -1.0 + (cc[k] as f64 + 0.5) * h;
                }
                (
                    coefficients.a_at(&p).expect("cell centre inside cube"),
                    coefficients.g_at(&p).expect("cell centre inside cube"),
                )
            });
            let (a, g) = centres.into_iter().unzip();
            CellCoeffs::PerCell { a, g }
        }
    };
    let dirichlet = dirichlet.clone().with_kink_layer(Some(grid.mid()));
    Ok(build(*grid, cells, dirichlet, obstacle, options.fixed))
}

/// Classify plane nodes and compute the flux jump for a converged iterate.
pub(crate) fn finish(problem: &DiscreteProblem, u: Vec<f64>, stats: SolverStats) -> SolutionField {
    let g = problem.grid;
    let hn = g.h().powi(g.n() as i32);
    let obstacle = problem
        .obstacle
        .clone()
        .unwrap_or_else(|| vec![0.0; g.plane_len()]);
    let scale = u.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let mut contact = Vec::with_capacity(g.plane_len());
    let mut residual = Vec::with_capacity(g.plane_len());
    for (k, phi) in obstacle.iter().enumerate() {
        let idx = g.plane_node(k);
        let touching = problem.obstacle.is_some() && u[idx] - phi <= tol;
        contact.push(touching);
        residual.push(if g.is_boundary_node(idx) {
            0.0
        } else {
            (problem.apply_row(&u, idx) - problem.load[idx]) / hn
        });
    }
    let noncontact = contact.iter().map(|c| !c).collect();
    let w = GridField::new(g, u)
        .expect("finite iterate")
        .with_kink_layer(Some(g.mid()))
        .with_parity(Parity::None);
    SolutionField {
        w,
        obstacle,
        contact,
        noncontact,
        complementarity_residual: residual,
        stats,
    }
}

impl SolutionField {
    /// `max_p |min(w - φ, residual)|` over interior plane nodes.
    pub fn complementarity_defect(&self) -> f64 {
        let g = self.w.grid();
        (0..g.plane_len())
            .filter(|&k| !g.is_boundary_node(g.plane_node(k)))
            .map(|k| {
                let gap = self.w.values()[g.plane_node(k)] - self.obstacle[k];
                gap.min(self.complementarity_residual[k]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Stats as JSON.
    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.stats).expect("stats serialize")
    }
}

/// Reduced divergence-form right-hand side
/// `G^i = Σ_j (δ^{ij} - a^{ij}) ∂_j w̃ + g^i + a₀ (δ^{i,n+1} - a^{i,n+1})`,
/// `w̃ = w - a₀ x_{n+1}`, with upper one-sided gradients on the plane.
pub fn derive_g(w: &GridField, coefficients: &CoefficientField, a0: f64) -> Result<Vec<GridField>> {
    let grid = *w.grid();
    if coefficients.grid().n() != grid.n() {
        return Err(Error::Grid("coefficients have a different dimension".into()));
    }
    let d = grid.dim();
    let nrm = grid.n();
    let probe = FieldProbe::new(w);
    let same_grid = coefficients.grid() == &grid;
    let comps = Parallelism::default().map(grid.len(), |idx| {
        let p = grid.node_point(idx);
        let (a, gv) = if same_grid {
            (coefficients.a_node(idx), coefficients.g_node(idx))
        } else {
            (
                coefficients.a_at(&p).expect("node inside cube"),
                coefficients.g_at(&p).expect("node inside cube"),
            )
        };
        let mut grad = probe.nodal_gradient(idx);
        grad[nrm] -= a0;
        let mut out = [0.0; 3];
        for i in 0..d {
            let mut s = gv[i];
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                s += (delta - a[i][j]) * grad[j];
            }
            let delta = if i == nrm { 1.0 } else { 0.0 };
            s += a0 * (delta - a[i][nrm]);
            out[i] = s;
        }
        out
    });
    (0..d)
        .map(|i| GridField::new(grid, comps.iter().map(|c| c[i]).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Profile;

    #[test]
    fn reference_tables_match_laplacian() {
        // 2D identity: 8/3 centre, -1/3 neighbours
        let g = Grid::new(1, 0.25).unwrap();
        let c = CoefficientField::identity(g);
        let p = assemble(&g, &c, &GridField::zeros(g), Obstacle::Zero).unwrap();
        let row = p.row(g.index([4, 4, 0]));
        assert!((row[4] - 8.0 / 3.0).abs() < 1e-14);
        for (s, v) in row.iter().enumerate() {
            if s != 4 {
                assert!((v + 1.0 / 3.0).abs() < 1e-14);
            }
        }
        // 3D identity: centre 8h/3, face -0, edge -h/6, corner -h/12
        let g = Grid::new(2, 0.25).unwrap();
        let c = CoefficientField::identity(g);
        let p = assemble(&g, &c, &GridField::zeros(g), Obstacle::Zero).unwrap();
        let row = p.row(g.index([4, 4, 4]));
        let h = 0.25;
        assert!((row[13] - 8.0 * h / 3.0).abs() < 1e-14);
        assert!(row[12].abs() < 1e-14);
        assert!((row[0] + h / 12.0).abs() < 1e-14);
        assert!((row.iter().sum::<f64>()).abs() < 1e-14);
    }

    #[test]
    fn linear_functions_have_zero_interior_residual() {
        let g = Grid::new(1, 2f64.powi(-4)).unwrap();
        let c = CoefficientField::identity(g);
        let lin = Profile::linear(1.0).sample(&g);
        let p = assemble(&g, &c, &lin, Obstacle::Zero).unwrap();
        let r = p.residual(lin.values());
        for i in 0..g.len() {
            if !g.is_boundary_node(i) {
                assert!(r[i].abs() < 1e-13);
            }
        }
        let a = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let c = CoefficientField::constant(g, a, [0.0; 3]).unwrap();
        let x1 = GridField::from_fn(g, |p| p[0]);
        let opts = AssembleOptions {
            waive_condition_n: true,
            ..Default::default()
        };
        assert!(assemble(&g, &c, &x1, Obstacle::Zero).is_err());
        let p = assemble_with(&g, &c, &x1, Obstacle::Zero, opts).unwrap();
        let r = p.residual(x1.values());
        for i in 0..g.len() {
            if !g.is_boundary_node(i) {
                assert!(r[i].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cone_residual_concentrates_at_slit() {
        let g = Grid::new(1, 2f64.powi(-6)).unwrap();
        let c = CoefficientField::identity(g);
        let w = Profile::h32(1).sample(&g);
        let p = assemble(&g, &c, &w, Obstacle::Zero).unwrap();
        let r = p.residual(w.values());
        let h = g.h();
        let mut far = 0.0_f64;
        let mut near = 0.0_f64;
        for i in 0..g.len() {
            if g.is_boundary_node(i) {
                continue;
            }
            let x = g.node_point(i);
            if x[1].abs() <= h * 1.01 && x[0] <= h {
                near = near.max(r[i].abs());
            } else if x[0].hypot(x[1]) > 3.0 * h {
                far = far.max(r[i].abs());
            }
        }
        assert!(far < 0.05 * near, "far {far} near {near}");
    }

    #[test]
    fn derive_g_trivial_cases() {
        let g = Grid::new(1, 0.125).unwrap();
        let w = Profile::h32(1).sample(&g);
        let id = CoefficientField::identity(g);
        for comp in derive_g(&w, &id, 0.3).unwrap() {
            assert_eq!(comp.max_abs(), 0.0);
        }
        let gfn = |p: &crate::grid::Point| [0.2 * p[0], p[1] * p[0], 0.0];
        let c = CoefficientField::from_fns(g, 0.5, |_| crate::coefficients::IDENTITY, gfn).unwrap();
        let out = derive_g(&w, &c, 0.0).unwrap();
        for i in 0..g.len() {
            let p = g.node_point(i);
            assert!((out[0].values()[i] - gfn(&p)[0]).abs() < 1e-15);
            assert!((out[1].values()[i] - gfn(&p)[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn coarsen_keeps_structure() {
        let g = Grid::new(1, 2f64.powi(-4)).unwrap();
        let c = crate::coefficients::generate_field(0.6, 0.05, 1, &g).unwrap();
        let w = Profile::h32(1).sample(&g);
        let p = assemble(&g, &c, &w, Obstacle::Zero).unwrap();
        let q = p.coarsen().unwrap();
        assert_eq!(q.grid().intervals(), 16);
        assert_eq!(q.obstacle().unwrap().len(), 17);
        assert_eq!(q.dirichlet().values()[0], w.values()[0]);
    }
}
