//! Contact set, non-coincidence set and free boundary of a discrete solution,
//! classification of regular points and the normal regularity of `Γ`.
//!
//! Plane nodes are classified with two thresholds: contact needs a small gap
//! `w - φ ≤ tol_w` and a flux jump `≥ tol_flux`; non-contact needs
//! `w - φ ≥ tol_w`. Everything else is the ambiguous band. `Γ` is the zero
//! set of the signed indicator
//!
//! `s = (gap/tol_w)^{2/3} - (flux/tol_flux)^2`,
//!
//! which is linear in the distance to `Γ` on both sides of a `3/2`-homogeneous
//! profile, located by linear interpolation along grid lines (marching squares
//! for `n = 2`).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::fit_growth_exponent;
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::fit::DecayFit;
use crate::grid::{Grid, GridField, Point};
use crate::norms::{norm_l2_tilde, Region};
use crate::solver::SolutionField;

/// Default number of chain points in a normal fit.
pub const NORMAL_WINDOW: usize = 9;

/// Variation below which a boundary counts as flat.
pub const FLAT_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_w: f64,
    pub tol_flux: f64,
}

impl Tolerances {
    /// `tol_w = 10 h^{3/2} ‖w‖`, `tol_flux = 10 h^{1/2} ‖w‖` with
    /// `‖w‖ = ‖w‖_{L̃²(B_1)}`.
    pub fn default_for(solution: &SolutionField) -> Result<Self> {
        let g = solution.w.grid();
        let norm = norm_l2_tilde(&solution.w, Region::ball([0.0; 3], 1.0))?;
        let h = g.h();
        Ok(Self {
            tol_w: 10.0 * h.powf(1.5) * norm,
            tol_flux: 10.0 * h.sqrt() * norm,
        })
    }

    pub fn scaled(self, f: f64) -> Self {
        Self {
            tol_w: f * self.tol_w,
            tol_flux: f * self.tol_flux,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Contact,
    NonContact,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundary {
    pub n: usize,
    pub intervals: usize,
    pub tolerances: Option<Tolerances>,
    /// Per plane node, in plane order.
    #[serde(skip)]
    pub classes: Vec<NodeClass>,
    /// Signed indicator per plane node (0 on the cube boundary).
    #[serde(skip)]
    pub indicator: Vec<f64>,
    pub contact_count: usize,
    pub noncontact_count: usize,
    pub ambiguous_count: usize,
    /// Points of `Γ` (with `x_{n+1} = 0`).
    pub points: Vec<Point>,
    /// Index chains into `points`: polylines for `n = 2`, singletons for `n = 1`.
    pub chains: Vec<Vec<usize>>,
    /// Unit normals in the plane pointing from `Λ` into `Ω`, one per point.
    pub normals: Vec<Vec<f64>>,
}

impl FreeBoundary {
    pub fn grid(&self) -> Result<Grid> {
        Grid::with_intervals(self.n, self.intervals)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A boundary given directly as one polyline in the `n = 2` plane, for
    /// synthetic tests of [`normal_regularity`].
    pub fn from_polyline(points: &[[f64; 2]], window: usize) -> Self {
        let pts: Vec<Point> = points.iter().map(|p| [p[0], p[1], 0.0]).collect();
        let chain: Vec<usize> = (0..pts.len()).collect();
        let normals = chain_normals(&pts, &chain, window)
            .into_iter()
            .map(|v| v.to_vec())
            .collect();
        Self {
            n: 2,
            intervals: 0,
            tolerances: None,
            classes: vec![],
            indicator: vec![],
            contact_count: 0,
            noncontact_count: 0,
            ambiguous_count: 0,
            points: pts,
            chains: vec![chain],
            normals,
        }
    }

    /// Normals recomputed with a different fit window; orientation is kept.
    pub fn normals_with_window(&self, window: usize) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.points.len()];
        for chain in &self.chains {
            for (k, v) in chain.iter().zip(chain_normals(&self.points, chain, window)) {
                let old = &self.normals[*k];
                let flip = old.len() == 2 && old[0] * v[0] + old[1] * v[1] < 0.0;
                out[*k] = if flip { [-v[0], -v[1]] } else { v };
            }
        }
        out
    }

    /// Plane coordinates of the nodes in a class.
    pub fn class_points(&self, class: NodeClass) -> Vec<Point> {
        let Ok(g) = self.grid() else { return vec![] };
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == class)
            .map(|(k, _)| g.node_point(g.plane_node(k)))
            .collect()
    }
}

/// Classify plane nodes and locate `Γ`.
pub fn extract(solution: &SolutionField, tol: Tolerances) -> Result<FreeBoundary> {
    if !solution.stats.converged {
        return Err(Error::Parameter("free boundary needs a converged solution".into()));
    }
    if !(tol.tol_w > 0.0 && tol.tol_flux > 0.0) {
        return Err(Error::Parameter("tolerances must be positive".into()));
    }
    let g = *solution.w.grid();
    let n = g.n();
    let m = g.nodes_per_axis();
    let plane = g.plane_len();
    let mut classes = Vec::with_capacity(plane);
    let mut indicator = Vec::with_capacity(plane);
    for k in 0..plane {
        let idx = g.plane_node(k);
        let gap = (solution.w.values()[idx] - solution.obstacle[k]).max(0.0);
        let boundary = g.is_boundary_node(idx);
        let flux = if boundary {
            0.0
        } else {
            solution.complementarity_residual[k].max(0.0)
        };
        let class = if gap >= tol.tol_w {
            NodeClass::NonContact
        } else if !boundary && flux >= tol.tol_flux {
            NodeClass::Contact
        } else {
            NodeClass::Ambiguous
        };
        classes.push(class);
        indicator.push(if boundary {
            0.0
        } else {
            (gap / tol.tol_w).powf(2.0 / 3.0) - (flux / tol.tol_flux).powi(2)
        });
    }
    let count = |c: NodeClass| classes.iter().filter(|x| **x == c).count();
    let (nc, no, na) = (
        count(NodeClass::Contact),
        count(NodeClass::NonContact),
        count(NodeClass::Ambiguous),
    );
    if nc + no == 0 {
        return Err(Error::Degenerate("every plane node is in the ambiguous band".into()));
    }
    let h = g.h();
    let (points, chains, normals) = match n {
        1 => {
            let mut pts = Vec::new();
            let mut nus = Vec::new();
            for i in 1..m - 2 {
                let (a, b) = (indicator[i], indicator[i + 1]);
                if (a >= 0.0) != (b >= 0.0) {
                    let t = a / (a - b);
                    pts.push([g.coord(i) + t * h, 0.0, 0.0]);
                    nus.push(vec![if b > a { 1.0 } else { -1.0 }]);
                }
            }
            let chains = (0..pts.len()).map(|k| vec![k]).collect();
            (pts, chains, nus)
        }
        _ => {
            let (pts, chains) = marching_squares(&g, &indicator);
            let mut nus = vec![Vec::new(); pts.len()];
            for chain in &chains {
                for (k, v) in chain.iter().zip(chain_normals(&pts, chain, NORMAL_WINDOW)) {
                    let grad = indicator_gradient(&g, &indicator, &pts[*k]);
                    let s = if v[0] * grad[0] + v[1] * grad[1] < 0.0 { -1.0 } else { 1.0 };
                    nus[*k] = vec![s * v[0], s * v[1]];
                }
            }
            (pts, chains, nus)
        }
    };
    Ok(FreeBoundary {
        n,
        intervals: g.intervals(),
        tolerances: Some(tol),
        classes,
        indicator,
        contact_count: nc,
        noncontact_count: no,
        ambiguous_count: na,
        points,
        chains,
        normals,
    })
}

/// Zero set of the nodal indicator over interior cells, chained into polylines.
fn marching_squares(g: &Grid, s: &[f64]) -> (Vec<Point>, Vec<Vec<usize>>) {
    let m = g.nodes_per_axis();
    let h = g.h();
    let at = |i: usize, j: usize| s[i + m * j];
    let pos = |v: f64| v >= 0.0;
    let mut ids: HashMap<(u8, usize, usize), usize> = HashMap::new();
    let mut pts: Vec<Point> = Vec::new();
    let mut crossing = |e: (u8, usize, usize)| -> Option<usize> {
        let (dir, i, j) = e;
        let (i2, j2) = if dir == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (at(i, j), at(i2, j2));
        if pos(a) == pos(b) {
            return None;
        }
        if let Some(k) = ids.get(&e) {
            return Some(*k);
        }
        let t = a / (a - b);
        let mut p = [g.coord(i), g.coord(j), 0.0];
        p[dir as usize] += t * h;
        pts.push(p);
        ids.insert(e, pts.len() - 1);
        Some(pts.len() - 1)
    };
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let link = |adj: &mut Vec<Vec<usize>>, a: usize, b: usize| {
        let need = a.max(b) + 1;
        if adj.len() < need {
            adj.resize(need, Vec::new());
        }
        adj[a].push(b);
        adj[b].push(a);
    };
    for j in 1..m - 2 {
        for i in 1..m - 2 {
            let bottom = crossing((0, i, j));
            let right = crossing((1, i + 1, j));
            let top = crossing((0, i, j + 1));
            let left = crossing((1, i, j));
            let found: Vec<usize> = [bottom, right, top, left].into_iter().flatten().collect();
            match found.len() {
                2 => link(&mut adj, found[0], found[1]),
                4 => {
                    let centre = 0.25 * (at(i, j) + at(i + 1, j) + at(i + 1, j + 1) + at(i, j + 1));
                    let (b, r, t, l) = (found[0], found[1], found[2], found[3]);
                    if pos(centre) == pos(at(i, j)) {
                        link(&mut adj, b, r);
                        link(&mut adj, l, t);
                    } else {
                        link(&mut adj, b, l);
                        link(&mut adj, r, t);
                    }
                }
                _ => {}
            }
        }
    }
    adj.resize(pts.len(), Vec::new());
    let chains = walk_chains(&adj);
    (pts, chains)
}

/// Split a graph of maximum degree 2 into open chains and closed loops.
fn walk_chains(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    let mut chains = Vec::new();
    let starts: Vec<usize> = (0..adj.len())
        .filter(|k| adj[*k].len() != 2)
        .chain(0..adj.len())
        .collect();
    for s in starts {
        if seen[s] {
            continue;
        }
        let mut chain = vec![s];
        seen[s] = true;
        let mut cur = s;
        while let Some(&next) = adj[cur].iter().find(|k| !seen[**k]) {
            seen[next] = true;
            chain.push(next);
            cur = next;
        }
        chains.push(chain);
    }
    chains
}

/// Unit normals from principal-axis line fits over `window` chain neighbours.
fn chain_normals(pts: &[Point], chain: &[usize], window: usize) -> Vec<[f64; 2]> {
    let len = chain.len();
    let half = window.max(2) / 2;
    (0..len)
        .map(|k| {
            if len < 2 {
                return [1.0, 0.0];
            }
            let lo = k.saturating_sub(half).min(len.saturating_sub(2 * half + 1));
            let hi = (lo + 2 * half + 1).min(len);
            let sel = &chain[lo..hi];
            let c = sel.len() as f64;
            let mx = sel.iter().map(|i| pts[*i][0]).sum::<f64>() / c;
            let my = sel.iter().map(|i| pts[*i][1]).sum::<f64>() / c;
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for i in sel {
                let (dx, dy) = (pts[*i][0] - mx, pts[*i][1] - my);
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            // tangent angle of the principal axis
            let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            [-theta.sin(), theta.cos()]
        })
        .collect()
}

/// Gradient of the bilinear interpolant of the indicator at a plane point.
fn indicator_gradient(g: &Grid, s: &[f64], p: &Point) -> [f64; 2] {
    let m = g.nodes_per_axis();
    let h = g.h();
    let cell = |x: f64| (((x + 1.0) / h).floor() as usize).min(m - 2);
    let (i, j) = (cell(p[0]), cell(p[1]));
    let tx = (p[0] - g.coord(i)) / h;
    let ty = (p[1] - g.coord(j)) / h;
    let v = |a: usize, b: usize| s[a + m * b];
    let dx = ((1.0 - ty) * (v(i + 1, j) - v(i, j)) + ty * (v(i + 1, j + 1) - v(i, j + 1))) / h;
    let dy = ((1.0 - tx) * (v(i, j + 1) - v(i, j)) + tx * (v(i + 1, j + 1) - v(i + 1, j))) / h;
    [dx, dy]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRegularity {
    pub point: Point,
    pub kappa_hat: Option<f64>,
    pub stderr: Option<f64>,
    pub regular: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub alpha: f64,
    pub window: (f64, f64),
    pub points: Vec<PointRegularity>,
    /// `γ̂` fit (`n = 2` only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_fit: Option<DecayFit>,
}

impl RegularityReport {
    pub fn classified(&self) -> impl Iterator<Item = &PointRegularity> {
        self.points.iter().filter(|p| p.regular.is_some())
    }

    pub fn all_regular(&self) -> bool {
        let mut any = false;
        for p in self.classified() {
            any = true;
            if p.regular != Some(true) {
                return false;
            }
        }
        any
    }
}

/// Options for [`classify_regular`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub window: (f64, f64),
    /// Classify at most this many points, evenly spaced along `Γ`.
    pub max_points: Option<usize>,
    pub parallelism: Parallelism,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            window: (0.0, 0.25),
            max_points: None,
            parallelism: Parallelism::default(),
        }
    }
}

/// Regular iff `κ̂ + 2·stderr < 1 + α` at each `Γ` point.
pub fn classify_regular(
    w: &GridField,
    fb: &FreeBoundary,
    alpha: f64,
    opts: ClassifyOptions,
) -> Result<RegularityReport> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::Parameter(format!(
            "regularity classification needs alpha in (1/2, 1), got {alpha}"
        )));
    }
    let total = fb.points.len();
    let picks: Vec<usize> = match opts.max_points {
        Some(k) if k < total && k > 0 => (0..k).map(|i| i * total / k).collect(),
        _ => (0..total).collect(),
    };
    let points = opts.parallelism.map_slice(&picks, |&k| {
        let point = fb.points[k];
        match fit_growth_exponent(w, &point, opts.window) {
            Ok(fit) if fit.is_applicable() && fit.samples.len() >= 3 => {
                let kappa = fit.rate.unwrap_or(f64::NAN);
                let se = fit.slope_stderr.unwrap_or(0.0);
                PointRegularity {
                    point,
                    kappa_hat: Some(kappa),
                    stderr: Some(se),
                    regular: Some(kappa + 2.0 * se < 1.0 + alpha),
                    skipped: None,
                }
            }
            Ok(fit) => PointRegularity {
                point,
                kappa_hat: None,
                stderr: None,
                regular: None,
                skipped: Some(fit.note.unwrap_or_else(|| "too few radii".into())),
            },
            Err(e) => PointRegularity {
                point,
                kappa_hat: None,
                stderr: None,
                regular: None,
                skipped: Some(e.to_string()),
            },
        }
    });
    let normal_fit = (fb.n == 2 && total >= 20).then(|| normal_regularity(fb, NORMAL_WINDOW)).transpose()?;
    Ok(RegularityReport {
        alpha,
        window: opts.window,
        points,
        normal_fit,
    })
}

/// Hölder exponent of the normal along `Γ`: log-log slope of
/// `S(δ) = sup_{|x-y| ≤ δ} |ν(x) - ν(y)|` over pairs on the same chain.
pub fn normal_regularity(fb: &FreeBoundary, window: usize) -> Result<DecayFit> {
    if fb.n != 2 {
        return Err(Error::Parameter("normal regularity needs n = 2".into()));
    }
    if !(5..=15).contains(&window) {
        return Err(Error::Parameter(format!("window must be 5..=15 points, got {window}")));
    }
    if fb.points.len() < 20 {
        return Ok(DecayFit::not_applicable(
            vec![],
            format!("insufficient points: {} < 20", fb.points.len()),
        ));
    }
    let normals = fb.normals_with_window(window);
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut spacing = Vec::new();
    let mut extent: f64 = 0.0;
    for chain in fb.chains.iter().filter(|c| c.len() >= window) {
        for w in chain.windows(2) {
            spacing.push(dist(&fb.points[w[0]], &fb.points[w[1]]));
        }
        for (a, &i) in chain.iter().enumerate() {
            for &j in &chain[a + 1..] {
                let d = dist(&fb.points[i], &fb.points[j]);
                let dn = (normals[i][0] - normals[j][0]).hypot(normals[i][1] - normals[j][1]);
                extent = extent.max(d);
                pairs.push((d, dn));
            }
        }
    }
    if pairs.is_empty() {
        return Ok(DecayFit::not_applicable(vec![], "no chain long enough for the window"));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut running = 0.0_f64;
    let sup: Vec<(f64, f64)> = pairs
        .iter()
        .map(|(d, v)| {
            running = running.max(*v);
            (*d, running)
        })
        .collect();
    let step = spacing.iter().sum::<f64>() / spacing.len().max(1) as f64;
    let lo = step * window as f64;
    let hi = 0.5 * extent;
    if !(hi > lo) {
        return Ok(DecayFit::not_applicable(vec![], "chain too short for the window"));
    }
    let count = 12;
    let samples: Vec<(f64, f64)> = (0..count)
        .map(|k| {
            let delta = lo * (hi / lo).powf(k as f64 / (count - 1) as f64);
            let pos = sup.partition_point(|p| p.0 <= delta);
            (delta, if pos == 0 { 0.0 } else { sup[pos - 1].1 })
        })
        .collect();
    if samples.iter().all(|s| s.1 <= FLAT_TOL) {
        return Ok(DecayFit::not_applicable(samples, "flat: normal variation below 1e-2"));
    }
    Ok(DecayFit::from_samples(samples))
}

fn dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `Γ` as CSV: coordinates, `κ̂`, regular flag and normal components.
pub fn gamma_csv(fb: &FreeBoundary, report: Option<&RegularityReport>) -> String {
    let n = fb.n;
    let mut out = String::new();
    let coords: Vec<String> = (1..=n + 1).map(|k| format!("x{k}")).collect();
    let nus: Vec<String> = (1..=n).map(|k| format!("nu{k}")).collect();
    let _ = writeln!(out, "{},kappa_hat,regular,{}", coords.join(","), nus.join(","));
    let lookup: HashMap<u64, &PointRegularity> = report
        .map(|r| r.points.iter().map(|p| (key(&p.point), p)).collect())
        .unwrap_or_default();
    for (k, p) in fb.points.iter().enumerate() {
        let mut row: Vec<String> = p[..=n].iter().map(|v| format!("{v:.16e}")).collect();
        match lookup.get(&key(p)) {
            Some(pr) => {
                row.push(pr.kappa_hat.map_or(String::new(), |v| format!("{v:.16e}")));
                row.push(pr.regular.map_or(String::new(), |v| v.to_string()));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        for c in 0..n {
            row.push(fb.normals[k].get(c).map_or(String::new(), |v| format!("{v:.16e}")));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn key(p: &Point) -> u64 {
    let mut h = 0u64;
    for v in p {
        h = h.rotate_left(21) ^ v.to_bits();
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::profiles::{ConeProfile, Profile};
    use crate::solver::{assemble, solve_psor, Obstacle, PsorConfig};

    fn solve(grid: Grid, data: &GridField) -> SolutionField {
        let c = CoefficientField::identity(grid);
        let p = assemble(&grid, &c, data, Obstacle::Zero).unwrap();
        solve_psor(&p, &PsorConfig::default()).unwrap()
    }

    #[test]
    fn model_problem_boundary_is_origin() {
        let g = Grid::new(1, 1.0 / 256.0).unwrap();
        let sol = solve(g, &Profile::h32(1).sample(&g));
        let tol = Tolerances::default_for(&sol).unwrap();
        let fb = extract(&sol, tol).unwrap();
        assert_eq!(fb.points.len(), 1, "{:?}", fb.points);
        assert!(fb.points[0][0].abs() <= g.h());
        assert_eq!(fb.normals[0], vec![1.0]);
        // the contact set is a half-line and Ω the other one
        assert!(fb.class_points(NodeClass::Contact).iter().all(|p| p[0] < g.h()));
        assert!(fb.class_points(NodeClass::NonContact).iter().all(|p| p[0] > -g.h()));
        let half = extract(&sol, tol.scaled(0.5)).unwrap();
        assert!((half.points[0][0] - fb.points[0][0]).abs() <= 2.0 * g.h());
    }

    #[test]
    fn gamma_points_sit_next_to_both_sets() {
        let g = Grid::new(1, 1.0 / 256.0).unwrap();
        let sol = solve(g, &Profile::h32(1).sample(&g));
        let tol = Tolerances::default_for(&sol).unwrap();
        let cells = |fb: &FreeBoundary, class| {
            let set = fb.class_points(class);
            fb.points
                .iter()
                .map(|q| set.iter().map(|p| (p[0] - q[0]).abs()).fold(f64::INFINITY, f64::min) / g.h())
                .fold(0.0, f64::max)
        };
        let fb = extract(&sol, tol).unwrap();
        assert!(cells(&fb, NodeClass::Contact) <= 2.0);
        assert!(cells(&fb, NodeClass::NonContact) <= 2.0);
        let tight = extract(&sol, tol.scaled(0.1)).unwrap();
        assert!(cells(&tight, NodeClass::Contact) <= 1.0);
        assert!(cells(&tight, NodeClass::NonContact) <= 1.0);
    }

    #[test]
    fn full_contact_has_no_boundary() {
        let g = Grid::new(1, 1.0 / 64.0).unwrap();
        let data = GridField::from_fn(g, |p| -p[1].abs());
        let sol = solve(g, &data);
        let fb = extract(&sol, Tolerances::default_for(&sol).unwrap()).unwrap();
        assert!(fb.is_empty());
        assert_eq!(fb.noncontact_count, 0);
        assert_eq!(fb.contact_count, g.plane_len() - 2);
    }

    #[test]
    fn tilted_model_in_3d_gives_straight_line() {
        let g = Grid::new(2, 1.0 / 32.0).unwrap();
        let data = Profile::Cone(ConeProfile::new(1.0, vec![0.0, 1.0]).unwrap()).sample(&g);
        let sol = solve(g, &data);
        let fb = extract(&sol, Tolerances::default_for(&sol).unwrap()).unwrap();
        assert_eq!(fb.chains.len(), 1);
        for (p, nu) in fb.points.iter().zip(&fb.normals) {
            assert!(p[1].abs() <= g.h(), "{p:?}");
            assert!((nu[1] - 1.0).abs() < 1e-2, "{nu:?}");
        }
        let fit = normal_regularity(&fb, NORMAL_WINDOW).unwrap();
        assert!(!fit.is_applicable());
        assert!(fit.note.unwrap().starts_with("flat"));
    }

    #[test]
    fn synthetic_graph_has_half_exponent() {
        let pts: Vec<[f64; 2]> = (0..=800)
            .map(|k| {
                let t = -1.0 + k as f64 / 400.0;
                [t, 0.1 * t.abs().powf(1.5)]
            })
            .collect();
        let fb = FreeBoundary::from_polyline(&pts, NORMAL_WINDOW);
        let fit = normal_regularity(&fb, NORMAL_WINDOW).unwrap();
        let g = fit.rate.unwrap();
        assert!((g - 0.5).abs() <= 0.1, "{g} {:?}", fit.samples);
    }

    #[test]
    fn classification_of_model_and_refusal() {
        let g = Grid::new(1, 1.0 / 256.0).unwrap();
        let sol = solve(g, &Profile::h32(1).sample(&g));
        let fb = extract(&sol, Tolerances::default_for(&sol).unwrap()).unwrap();
        let rep = classify_regular(&sol.w, &fb, 0.75, ClassifyOptions::default()).unwrap();
        assert!(rep.all_regular(), "{rep:?}");
        assert!(classify_regular(&sol.w, &fb, 0.4, ClassifyOptions::default()).is_err());
        let csv = gamma_csv(&fb, Some(&rep));
        assert!(csv.starts_with("x1,x2,kappa_hat,regular,nu1\n"));
        assert!(csv.lines().nth(1).unwrap().contains(",true,"));
    }

    #[test]
    fn q5_dominated_point_is_not_regular() {
        use crate::profiles::EigenProfile;
        let g = Grid::new(1, 1.0 / 256.0).unwrap();
        let q5 = Profile::Eigen(EigenProfile::new(5).unwrap());
        let w = GridField::from_fn(g, |p| q5.eval(1, p) + 0.01 * Profile::h32(1).eval(1, p).powi(3));
        let fb = FreeBoundary {
            n: 1,
            intervals: g.intervals(),
            points: vec![[0.0; 3]],
            chains: vec![vec![0]],
            normals: vec![vec![1.0]],
            ..FreeBoundary::from_polyline(&[], NORMAL_WINDOW)
        };
        let rep = classify_regular(&w, &fb, 0.75, ClassifyOptions::default()).unwrap();
        assert_eq!(rep.points[0].regular, Some(false), "{rep:?}");
        assert!((rep.points[0].kappa_hat.unwrap() - 2.5).abs() < 0.1);
    }
}
