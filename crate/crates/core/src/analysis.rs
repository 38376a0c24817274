//! Measurements on solutions: Weiss energies, frequency, projections onto the
//! linear and cone families, blow-ups, growth and decay fits, and the
//! epiperimetric gap of a boundary trace.
//!
//! Radius-dependent quantities use the root-mean-square convention
//! [`NormConvention::Mean`], which makes the fitted exponents equal to the
//! homogeneity of the measured profile.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::fit::DecayFit;
use crate::grid::{Grid, GridField, Parity, Point};
use crate::norms::{check_resolvable, FieldProbe, NormConvention, Region, MIN_RADIUS_CELLS};
use crate::profiles::{ConeProfile, LinearProfile, Profile};
use crate::quadrature::{AngularRule, BallQuadrature};
use crate::solver::{assemble_with, solve_psor, AssembleOptions, Obstacle, PsorConfig};

pub const DEFAULT_KAPPA: f64 = 1.5;

/// Coarse azimuthal samples for the `n = 2` cone search.
pub const CONE_SCAN: usize = 720;
/// Golden-section tolerance for the cone direction, in radians.
pub const CONE_ANGLE_TOL: f64 = 1e-4;

/// `r_j = 2^{-j/2}` for `j` from `ceil(2 log2(1/(8h)))` down to 2, increasing.
pub fn radius_ladder(h: f64) -> Vec<f64> {
    ladder_in_window(h, MIN_RADIUS_CELLS * h, 0.5)
}

/// Ladder radii `2^{-j/2}` inside `[lo, hi]` that are at least `8h`.
pub fn ladder_in_window(h: f64, lo: f64, hi: f64) -> Vec<f64> {
    let lo = lo.max(MIN_RADIUS_CELLS * h);
    let slack = 1e-12;
    let jmax = (2.0 * (1.0 / lo).log2() + slack).floor() as i32;
    let mut out: Vec<f64> = (0..=jmax.max(0))
        .rev()
        .map(|j| 2f64.powf(-0.5 * j as f64))
        .filter(|r| *r >= lo * (1.0 - slack) && *r <= hi * (1.0 + slack))
        .collect();
    out.dedup();
    out
}

/// Keep the radii whose ball around `x0` fits in the cube.
fn admissible_radii(grid: &Grid, x0: &Point, radii: &[f64]) -> Vec<f64> {
    radii
        .iter()
        .copied()
        .filter(|r| check_resolvable(grid, x0, *r).is_ok())
        .collect()
}

/// `w - a₀ (x - x0)_{n+1}`.
pub fn subtract_linear(w: &GridField, x0: &Point, a0: f64) -> GridField {
    let n = w.grid().n();
    let c = x0[n];
    let out = w.minus_fn(move |p| a0 * (p[n] - c));
    out.with_parity(Parity::None)
}

/// The two terms of `W_κ(r, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeissValue {
    pub r: f64,
    /// `W_κ = dirichlet - boundary`.
    pub value: f64,
    /// `r^{-(n-1+2κ)} ∫_{B_r} |∇w|²`.
    pub dirichlet: f64,
    /// `κ r^{-(n+2κ)} ∫_{∂B_r} w²`.
    pub boundary: f64,
}

fn weiss_from_probe(probe: &FieldProbe, x0: &Point, r: f64, kappa: f64) -> Result<WeissValue> {
    let n = probe.grid().n() as f64;
    let (e, m) = probe.ball_energy_and_mass(x0, r)?;
    let dirichlet = r.powf(-(n - 1.0 + 2.0 * kappa)) * e;
    let boundary = kappa * r.powf(-(n + 2.0 * kappa)) * m;
    Ok(WeissValue {
        r,
        value: dirichlet - boundary,
        dirichlet,
        boundary,
    })
}

/// `W_κ(r, w)` with both terms.
pub fn weiss_parts(w: &GridField, x0: &Point, r: f64, kappa: f64) -> Result<WeissValue> {
    check_resolvable(w.grid(), x0, r)?;
    weiss_from_probe(&FieldProbe::new(w), x0, r, kappa)
}

/// `W_κ(r, w) = r^{-(n-1+2κ)} ∫_{B_r}|∇w|² - κ r^{-(n+2κ)} ∫_{∂B_r} w²`.
pub fn weiss(w: &GridField, x0: &Point, r: f64, kappa: f64) -> Result<f64> {
    Ok(weiss_parts(w, x0, r, kappa)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeissProfile {
    pub center: Point,
    pub kappa: f64,
    /// Increasing in `r`.
    pub samples: Vec<WeissValue>,
}

impl WeissProfile {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.r, s.value)).collect()
    }
}

/// Weiss energies over a set of radii, evaluated in parallel over radii.
pub fn weiss_profile(
    w: &GridField,
    x0: &Point,
    kappa: f64,
    radii: &[f64],
    par: Parallelism,
) -> Result<WeissProfile> {
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    for r in &radii {
        check_resolvable(w.grid(), x0, *r)?;
    }
    let probe = FieldProbe::with_parallelism(w, par);
    let samples = par
        .map_slice(&radii, |r| weiss_from_probe(&probe, x0, *r, kappa))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(WeissProfile {
        center: *x0,
        kappa,
        samples,
    })
}

/// Both sides of `W(r, w) = W(1, w_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalingCheck {
    pub r: f64,
    pub original: f64,
    pub rescaled: f64,
    pub defect: f64,
}

/// Compare `W(r, w)` with `W(1, w_r)` computed on the blow-up grid.
pub fn weiss_rescaling_check(w: &GridField, x0: &Point, r: f64) -> Result<RescalingCheck> {
    let original = weiss(w, x0, r, DEFAULT_KAPPA)?;
    let wr = blowup(w, x0, r, BlowupMode::Homogeneous)?;
    let rescaled = weiss(&wr, &[0.0; 3], 1.0, DEFAULT_KAPPA)?;
    Ok(RescalingCheck {
        r,
        original,
        rescaled,
        defect: (original - rescaled).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupMode {
    /// `w(x0 + r x) / r^{3/2}`.
    Homogeneous,
    /// `(w - ℓ_{x0})(x0 + r x) / ‖w - ℓ_{x0}‖_{L̃²(B_r(x0))}`.
    NormNormalized,
}

/// Rescaled field on `[-1,1]^{n+1}` with spacing `h/r` (rounded so that the
/// blow-up grid has an even number of intervals).
pub fn blowup(w: &GridField, x0: &Point, r: f64, mode: BlowupMode) -> Result<GridField> {
    let grid = *w.grid();
    let n = grid.n();
    check_resolvable(&grid, x0, r)?;
    let half = (r / grid.h() - 1e-9).ceil() as usize;
    let bgrid = Grid::with_intervals(n, 2 * half.max(2))?;
    let (shift, scale) = match mode {
        BlowupMode::Homogeneous => (0.0, r.powf(-1.5)),
        BlowupMode::NormNormalized => {
            let a0 = project_linear(w, x0, MIN_RADIUS_CELLS * grid.h())?.a0;
            let wt = subtract_linear(w, x0, a0);
            let norm = FieldProbe::values_only(&wt).norm(Region::ball(*x0, r), NormConvention::Mean)?;
            if !(norm > 1e-14 * w.max_abs().max(f64::MIN_POSITIVE)) {
                return Err(Error::Degenerate(format!(
                    "w - ℓ vanishes on B_{r}({:?})",
                    &x0[..grid.dim()]
                )));
            }
            (a0, 1.0 / norm)
        }
    };
    let c = x0[n];
    let values = bgrid_map(&bgrid, |y| {
        let mut x = [0.0; 3];
        for k in 0..grid.dim() {
            x[k] = (x0[k] + r * y[k]).clamp(-1.0, 1.0);
        }
        let v = w.interpolate_point(&x).expect("blow-up point inside cube");
        scale * (v - shift * (x[n] - c))
    });
    let layer = {
        let y = -c / r;
        let s = (y + 1.0) * bgrid.intervals() as f64 / 2.0;
        let k = s.round();
        ((s - k).abs() < 1e-9 && k > 0.0 && k < bgrid.intervals() as f64).then_some(k as usize)
    };
    let parity = if c == 0.0 && mode == BlowupMode::Homogeneous {
        w.parity()
    } else {
        Parity::None
    };
    Ok(GridField::new(bgrid, values)?
        .with_kink_layer(layer)
        .with_parity(parity))
}

fn bgrid_map(g: &Grid, f: impl Fn(&Point) -> f64 + Sync + Send) -> Vec<f64> {
    Parallelism::default().map(g.len(), |i| f(&g.node_point(i)))
}

/// `N(r, w) = r ∫_{B_r}|∇w|² / ∫_{∂B_r} w²`.
pub fn frequency(w: &GridField, x0: &Point, r: f64) -> Result<f64> {
    check_resolvable(w.grid(), x0, r)?;
    let (e, m) = FieldProbe::new(w).ball_energy_and_mass(x0, r)?;
    if !(m > 1e-30 * (1.0 + r * e)) {
        return Err(Error::Degenerate(format!("∫_(∂B_{r}) w² = {m:e}")));
    }
    Ok(r * e / m)
}

/// `L²(B_r(x0))` projection onto `a₀ (x - x0)_{n+1}`.
pub fn project_linear(w: &GridField, x0: &Point, r: f64) -> Result<LinearProfile> {
    let grid = w.grid();
    check_resolvable(grid, x0, r)?;
    let n = grid.n();
    let q = BallQuadrature::new(n, *x0, r, grid.h());
    let [num, den] = q.integrate_interior(Parallelism::default(), |p| {
        let t = p[n] - x0[n];
        let v = w.interpolate_point(p).expect("quadrature node inside cube");
        [v * t, t * t]
    });
    Ok(LinearProfile { a0: num / den })
}

/// Result of projecting onto the cone family on `∂B_r(x0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProjection {
    pub r: f64,
    pub profile: ConeProfile,
    /// `‖w‖_{L̃²(∂B_r)}`.
    pub w_norm: f64,
    /// `‖P̄r‖_{L̃²(∂B_r)}`.
    pub projection_norm: f64,
    /// `‖w - P̄r‖_{L̃²(∂B_r)}`.
    pub distance: f64,
    /// `⟨w - P̄r, P̄r⟩` normalized by `|∂B_r|`.
    pub cross_term: f64,
}

impl ConeProjection {
    /// The projected profile evaluated in coordinates centered at `x0`.
    pub fn eval_centered(&self, x0: &Point, p: &Point) -> f64 {
        let y = [p[0] - x0[0], p[1] - x0[1], p[2] - x0[2]];
        self.profile.c * ConeProfile::unit_value(&self.profile.xi, &y)
    }
}

struct SphereSamples {
    offsets: Vec<Point>,
    weights: Vec<f64>,
    values: Vec<f64>,
    measure: f64,
}

impl SphereSamples {
    fn new(w: &GridField, x0: &Point, r: f64) -> Self {
        let grid = w.grid();
        let q = BallQuadrature::new(grid.n(), *x0, r, grid.h());
        let nodes = q.surface_nodes();
        let values = Parallelism::default().map_slice(&nodes, |(p, _)| {
            w.interpolate_point(p).expect("quadrature node inside cube")
        });
        let offsets = nodes
            .iter()
            .map(|(p, _)| [p[0] - x0[0], p[1] - x0[1], p[2] - x0[2]])
            .collect();
        let weights = nodes.iter().map(|(_, wt)| *wt).collect();
        Self {
            offsets,
            weights,
            values,
            measure: q.sphere_measure(),
        }
    }

    /// `(⟨w, p_ξ⟩, ⟨p_ξ, p_ξ⟩)`.
    fn moments(&self, xi: &[f64]) -> (f64, f64) {
        let mut wp = 0.0;
        let mut pp = 0.0;
        for ((y, wt), v) in self.offsets.iter().zip(&self.weights).zip(&self.values) {
            let p = ConeProfile::unit_value(xi, y);
            wp += wt * v * p;
            pp += wt * p * p;
        }
        (wp, pp)
    }

    fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.values).map(|(wt, v)| wt * v * v).sum()
    }
}

/// Gain `⟨w,p⟩²/⟨p,p⟩` of the best nonnegative multiple of `p_ξ`.
fn cone_gain(s: &SphereSamples, xi: &[f64]) -> f64 {
    let (wp, pp) = s.moments(xi);
    if wp > 0.0 && pp > 0.0 {
        wp * wp / pp
    } else {
        0.0
    }
}

/// Minimize `∫_{∂B_r(x0)} |w - c p_ξ|²` over `c ≥ 0`, `|ξ| = 1`.
pub fn project_cone(w: &GridField, x0: &Point, r: f64) -> Result<ConeProjection> {
    let grid = w.grid();
    check_resolvable(grid, x0, r)?;
    let s = SphereSamples::new(w, x0, r);
    let xi: Vec<f64> = match grid.n() {
        1 => {
            let plus = cone_gain(&s, &[1.0]);
            let minus = cone_gain(&s, &[-1.0]);
            vec![if minus > plus { -1.0 } else { 1.0 }]
        }
        _ => {
            let dir = |psi: f64| [psi.cos(), psi.sin()];
            let step = 2.0 * PI / CONE_SCAN as f64;
            let gains = Parallelism::default().map(CONE_SCAN, |k| cone_gain(&s, &dir(step * k as f64)));
            let mut best = 0;
            for (k, g) in gains.iter().enumerate() {
                if *g > gains[best] {
                    best = k;
                }
            }
            let mut psi = step * best as f64;
            if gains[best] > 0.0 {
                let f = |t: f64| cone_gain(&s, &dir(t));
                let refined = golden_max(f, psi - step, psi + step, CONE_ANGLE_TOL);
                if f(refined) > gains[best] {
                    psi = refined.rem_euclid(2.0 * PI);
                }
            }
            dir(psi).to_vec()
        }
    };
    let (wp, pp) = s.moments(&xi);
    let c = if pp > 0.0 { (wp / pp).max(0.0) } else { 0.0 };
    let ww = s.mass();
    let m = s.measure;
    let proj_sq = c * c * pp;
    let cross = c * wp - proj_sq;
    let dist_sq = ww - 2.0 * c * wp + proj_sq;
    Ok(ConeProjection {
        r,
        profile: ConeProfile { c, xi },
        w_norm: (ww.max(0.0) / m).sqrt(),
        projection_norm: (proj_sq / m).sqrt(),
        distance: (dist_sq.max(0.0) / m).sqrt(),
        cross_term: cross / m,
    })
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Slope of `log W` against `log r`; needs six radii with `W > 0`.
pub fn fit_weiss_decay(profile: &WeissProfile) -> DecayFit {
    let samples = profile.pairs();
    if samples.len() < 6 {
        return DecayFit::not_applicable(samples, "fewer than 6 radii");
    }
    if let Some((r, v)) = samples.iter().find(|s| !(s.1 > 0.0)) {
        let note = format!("W = {v:e} <= 0 at r = {r}");
        return DecayFit::not_applicable(samples, note);
    }
    DecayFit::from_samples(samples)
}

/// Vanishing order at a plane point: the linear part is removed with the
/// projection at the smallest radius, then `‖w - ℓ‖_{L̃²(B_r)}` is fitted
/// against `r` on the ladder radii inside `window`.
pub fn fit_growth_exponent(w: &GridField, x0: &Point, window: (f64, f64)) -> Result<DecayFit> {
    let grid = w.grid();
    let n = grid.n();
    if x0[n] != 0.0 {
        return Err(Error::Parameter(format!("x0 must lie on the plane, got x_(n+1) = {}", x0[n])));
    }
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Parameter(format!("bad window [{lo}, {hi}]")));
    }
    let radii = admissible_radii(grid, x0, &ladder_in_window(grid.h(), lo, hi.min(0.25)));
    if radii.len() < 3 {
        return Ok(DecayFit::not_applicable(
            radii.iter().map(|r| (*r, f64::NAN)).collect(),
            format!("fewer than 3 resolvable radii in [{lo}, {hi}]"),
        ));
    }
    let a0 = project_linear(w, x0, radii[0])?.a0;
    let wt = subtract_linear(w, x0, a0);
    let probe = FieldProbe::values_only(&wt);
    let values = Parallelism::default().map_slice(&radii, |r| {
        probe.norm(Region::ball(*x0, *r), NormConvention::Mean)
    });
    let samples = radii
        .iter()
        .zip(values)
        .map(|(r, v)| Ok((*r, v?)))
        .collect::<Result<Vec<_>>>()?;
    let mut fit = DecayFit::from_samples(samples);
    if (radii[0] - lo).abs() > 1e-12 * lo || (radii[radii.len() - 1] - hi).abs() > 1e-12 * hi {
        let note = format!("window clipped to resolvable ladder radii; a0 = {a0:e}");
        fit.note = Some(match fit.note {
            Some(prev) => format!("{prev}; {note}"),
            None => note,
        });
    }
    Ok(fit)
}

/// Output of [`cone_decay_ladder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeDecayReport {
    pub center: Point,
    /// Linear coefficient removed before projecting.
    pub a0: f64,
    /// Fit of `d(r) ≈ C r^{ε₀}`.
    pub fit: DecayFit,
    /// Fit of `‖w - P̄r‖_{L̃²(B_r)} / r^{3/2} ≈ C r^{ε₀/2}`.
    pub solid: DecayFit,
    pub projections: Vec<ConeProjection>,
    /// `‖w - P̄r‖_{L̃²(B_r)} / ‖P̄r‖_{L̃²(B_r)}` at the smallest radius.
    pub nondegeneracy: f64,
}

impl ConeDecayReport {
    /// Largest ratio `d(r_{j+1}) / d(r_j)` walking from large to small radii.
    pub fn worst_increase(&self) -> f64 {
        let d: Vec<f64> = self.fit.samples.iter().rev().map(|s| s.1).collect();
        d.windows(2)
            .map(|p| if p[0] > 0.0 { p[1] / p[0] } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Cone-decay ladder on the default radius ladder.
pub fn cone_decay_ladder(w: &GridField, x0: &Point) -> Result<ConeDecayReport> {
    let radii = radius_ladder(w.grid().h());
    cone_decay_ladder_on(w, x0, &radii)
}

/// `d(r) = ‖w - P̄r‖_{L̃²(∂B_r)} / max(‖w‖_{L̃²(∂B_r)}, r^{3/2})` after removing
/// the linear part.
pub fn cone_decay_ladder_on(w: &GridField, x0: &Point, radii: &[f64]) -> Result<ConeDecayReport> {
    let grid = w.grid();
    let mut radii = admissible_radii(grid, x0, radii);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    if radii.len() < 3 {
        return Err(Error::Resolution {
            radius: radii.first().copied().unwrap_or(0.0),
            spacing: grid.h(),
            min_radius: MIN_RADIUS_CELLS * grid.h(),
        });
    }
    let a0 = project_linear(w, x0, radii[0])?.a0;
    let wt = subtract_linear(w, x0, a0);
    let projections = radii
        .iter()
        .map(|r| project_cone(&wt, x0, *r))
        .collect::<Result<Vec<_>>>()?;
    let solid_vals = Parallelism::default()
        .map_slice(&projections, |pr| solid_distance(&wt, x0, pr))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut d = Vec::with_capacity(radii.len());
    let mut solid = Vec::with_capacity(radii.len());
    for (pr, (dist, _)) in projections.iter().zip(&solid_vals) {
        let denom = pr.w_norm.max(pr.r.powf(1.5));
        d.push((pr.r, pr.distance / denom));
        solid.push((pr.r, dist / pr.r.powf(1.5)));
    }
    let (dist0, proj0) = solid_vals[0];
    let nondegeneracy = if proj0 > 0.0 { dist0 / proj0 } else { f64::INFINITY };
    Ok(ConeDecayReport {
        center: *x0,
        a0,
        fit: DecayFit::from_samples(d),
        solid: DecayFit::from_samples(solid),
        projections,
        nondegeneracy,
    })
}

/// Sub-cell estimate of a free boundary point near `x0`: moves `x0` along
/// the in-plane unit direction `dir` by at most `span` to minimise the
/// relative cone distance on `∂B_r(x0)` (linear part removed).
pub fn localize_on_cone(w: &GridField, x0: &Point, dir: &[f64], span: f64, r: f64) -> Result<Point> {
    let n = w.grid().n();
    if dir.len() != n {
        return Err(Error::Parameter(format!("direction needs {n} components, got {}", dir.len())));
    }
    let norm = dir.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(norm > 0.0) || !(span > 0.0) {
        return Err(Error::Parameter("direction and span must be nonzero".into()));
    }
    let at = |t: f64| {
        let mut p = *x0;
        for (k, d) in dir.iter().enumerate() {
            p[k] += t * d / norm;
        }
        p
    };
    for t in [-span, span] {
        check_resolvable(w.grid(), &at(t), r)?;
    }
    let dist = |t: f64| {
        let p = at(t);
        let rel = project_linear(w, &p, r).and_then(|l| {
            let pr = project_cone(&subtract_linear(w, &p, l.a0), &p, r)?;
            Ok(if pr.w_norm > 0.0 { pr.distance / pr.w_norm } else { 0.0 })
        });
        -rel.unwrap_or(f64::INFINITY)
    };
    Ok(at(golden_max(dist, -span, span, 1e-3 * w.grid().h())))
}

/// `(‖w - P‖_{L̃²(B_r)}, ‖P‖_{L̃²(B_r)})`.
fn solid_distance(w: &GridField, x0: &Point, pr: &ConeProjection) -> Result<(f64, f64)> {
    let grid = w.grid();
    let q = BallQuadrature::new(grid.n(), *x0, pr.r, grid.h());
    let [dd, pp] = q.integrate_interior(Parallelism::Sequential, |p| {
        let v = w.interpolate_point(p).expect("quadrature node inside cube");
        let c = pr.eval_centered(x0, p);
        [(v - c) * (v - c), c * c]
    });
    let m = q.ball_measure();
    Ok(((dd / m).sqrt(), (pp / m).sqrt()))
}

/// A trace on `∂B_1` used as epiperimetric boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trace {
    /// Restriction of a closed-form profile.
    Profile { profile: Profile },
    /// `h_{3/2} + amplitude · cos²(π ϑ / (2 width))`, `ϑ` the angle to `center`,
    /// zero for `ϑ ≥ width`.
    PerturbedCone {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl Trace {
    /// Value at a unit vector.
    pub fn eval(&self, n: usize, dir: &Point) -> f64 {
        match self {
            Trace::Profile { profile } => profile.eval(n, dir),
            Trace::PerturbedCone {
                amplitude,
                center,
                width,
            } => {
                let base = ConeProfile::unit_value(&ConeProfile::h32(n).xi, dir);
                let dot: f64 = center.iter().zip(dir).map(|(a, b)| a * b).sum();
                let ang = dot.clamp(-1.0, 1.0).acos();
                let bump = if ang < *width {
                    (0.5 * PI * ang / width).cos().powi(2)
                } else {
                    0.0
                };
                base + amplitude * bump
            }
        }
    }

    /// `|x|^{3/2} c(x / |x|)`.
    pub fn extension(&self, n: usize, x: &Point) -> f64 {
        let rho = x[..=n].iter().map(|t| t * t).sum::<f64>().sqrt();
        if rho == 0.0 {
            return 0.0;
        }
        let mut dir = [0.0; 3];
        for k in 0..=n {
            dir[k] = x[k] / rho;
        }
        rho.powf(1.5) * self.eval(n, &dir)
    }
}

/// Ten or so perturbed cones with bumps supported away from the slit.
pub fn perturbed_cone_family(n: usize, count: usize) -> Vec<Trace> {
    (0..count)
        .map(|j| {
            let t = if count > 1 { j as f64 / (count - 1) as f64 } else { 0.5 };
            let width = 0.45 + 0.1 * ((j % 3) as f64);
            let amplitude = 0.15 + 0.05 * ((j % 2) as f64 + (j % 3 == 0) as u8 as f64);
            let center = match n {
                1 => {
                    let theta = -1.8 + 3.6 * t;
                    vec![theta.cos(), theta.sin()]
                }
                _ => {
                    // Directions with x_2 ≥ 0.6, so the bump cap misses the
                    // slit half-circle {x_2 ≤ 0, x_3 = 0}.
                    let az = 2.0 * PI * t * 0.9;
                    let z = 0.6 + 0.35 * ((j * 7 % 5) as f64 / 4.0);
                    let s = (1.0 - z * z).sqrt();
                    vec![s * az.cos(), z, s * az.sin()]
                }
            };
            Trace::PerturbedCone {
                amplitude,
                center,
                width,
            }
        })
        .collect()
}

/// Tangential FD step on the unit sphere.
const TANGENT_STEP: f64 = 1e-4;

/// `(1/(n+2)) (∫_{∂B_1} |∇_θ c|² - ((6n+3)/4) ∫_{∂B_1} c²)`.
///
/// Tangential derivatives are taken along great circles, averaging the
/// squared forward and backward differences so that kinks of `c` cost only
/// `O(δ)` of measure.
pub fn homogeneous_extension_energy(n: usize, c: impl Fn(&Point) -> f64 + Sync) -> f64 {
    let rule = match n {
        1 => AngularRule::circle(8192),
        _ => AngularRule::sphere(256, 512),
    };
    let d = TANGENT_STEP;
    let rotate = |x: &Point, e: &Point, s: f64| -> Point {
        let (cs, sn) = (s.cos(), s.sin());
        [cs * x[0] + sn * e[0], cs * x[1] + sn * e[1], cs * x[2] + sn * e[2]]
    };
    let parts = Parallelism::default().map(rule.len(), |i| {
        let x = rule.directions[i];
        let v = c(&x);
        let tangents: Vec<Point> = match n {
            1 => vec![[-x[1], x[0], 0.0]],
            _ => {
                let s = (1.0 - x[0] * x[0]).max(0.0).sqrt();
                let (cp, sp) = if s > 0.0 { (x[1] / s, x[2] / s) } else { (1.0, 0.0) };
                vec![[-s, x[0] * cp, x[0] * sp], [0.0, -sp, cp]]
            }
        };
        let mut g2 = 0.0;
        for e in &tangents {
            let fwd = (c(&rotate(&x, e, d)) - v) / d;
            let bwd = (v - c(&rotate(&x, e, -d))) / d;
            g2 += 0.5 * (fwd * fwd + bwd * bwd);
        }
        (rule.weights[i] * g2, rule.weights[i] * v * v)
    });
    let (grad, mass) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    (grad - (6.0 * nf + 3.0) / 4.0 * mass) / (nf + 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpiReport {
    pub descriptor: Trace,
    pub n: usize,
    pub h: f64,
    /// `W(1, c̃)` from the closed-form trace energy.
    pub w_extension: f64,
    /// `W(1, c̃)` by ball quadrature of the sampled extension.
    pub w_extension_quadrature: f64,
    /// `W(1, c̃) + 2 (E_h(u*) - E_h(c̃))`.
    pub w_minimized: f64,
    /// `W(1, u*)` by ball quadrature.
    pub w_minimized_quadrature: f64,
    /// `2 (E_h(u*) - E_h(c̃))`, never positive.
    pub energy_gap: f64,
    /// `1 - W(1,u*)/W(1,c̃)` when `W(1,c̃) > 0`.
    pub kappa_hat: Option<f64>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Minimize the Weiss energy on `B_1` over fields with trace `c` and the
/// unilateral constraint on the plane.
///
/// The extension `c̃` is imposed on every node with `|x| ≥ 1` and the
/// constrained Dirichlet problem is solved inside. The energy drop is the
/// difference of the discrete energies of the minimizer and of the sampled
/// extension, which agree outside the ball.
pub fn epiperimetric_check(trace: &Trace, grid: &Grid, par: Parallelism) -> Result<EpiReport> {
    let n = grid.n();
    check_admissible(trace, n)?;
    let ext = GridField::from_fn_with(*grid, par, |p| trace.extension(n, p));
    let fixed: Vec<bool> = (0..grid.len())
        .map(|i| {
            let p = grid.node_point(i);
            p[..=n].iter().map(|t| t * t).sum::<f64>() >= 1.0 - 1e-12
        })
        .collect();
    let coeffs = CoefficientField::identity(*grid);
    let problem = assemble_with(
        grid,
        &coeffs,
        &ext,
        Obstacle::Zero,
        AssembleOptions {
            waive_condition_n: false,
            fixed: Some(fixed),
        },
    )?;
    let mut start = ext.clone();
    for k in 0..grid.plane_len() {
        let idx = grid.plane_node(k);
        start.values_mut()[idx] = start.values()[idx].max(0.0);
    }
    let cfg = PsorConfig {
        initial: Some(start),
        parallelism: par,
        ..PsorConfig::default()
    };
    let sol = solve_psor(&problem, &cfg)?;
    let gap = 2.0 * (problem.energy(sol.w.values()) - problem.energy(ext.values()));
    let w_extension = homogeneous_extension_energy(n, |x| trace.eval(n, x));
    let origin = [0.0; 3];
    let ext = ext.with_kink_layer(Some(grid.mid()));
    let w_extension_quadrature = weiss_from_probe(&FieldProbe::with_parallelism(&ext, par), &origin, 1.0, DEFAULT_KAPPA)?.value;
    let w_minimized_quadrature =
        weiss_from_probe(&FieldProbe::with_parallelism(&sol.w, par), &origin, 1.0, DEFAULT_KAPPA)?.value;
    let w_minimized = w_extension + gap.min(0.0);
    let (kappa_hat, note) = if w_extension > 0.0 {
        (Some(1.0 - w_minimized / w_extension), None)
    } else {
        (None, Some(format!("W(1, c~) = {w_extension:e} <= 0; kappa_hat undefined")))
    };
    Ok(EpiReport {
        descriptor: trace.clone(),
        n,
        h: grid.h(),
        w_extension,
        w_extension_quadrature,
        w_minimized,
        w_minimized_quadrature,
        energy_gap: gap,
        kappa_hat,
        iterations: sol.stats.iterations,
        note,
    })
}

/// The trace must be nonnegative where `∂B_1` meets the plane.
fn check_admissible(trace: &Trace, n: usize) -> Result<()> {
    let pts: Vec<Point> = match n {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        _ => (0..720)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 720.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
    };
    for p in pts {
        let v = trace.eval(n, &p);
        if v < -1e-12 {
            return Err(Error::Parameter(format!(
                "trace is negative ({v:e}) at plane point {:?}",
                &p[..=n]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::EigenProfile;
    use crate::solver::assemble;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, h: f64) -> Grid {
        Grid::new(n, h).unwrap()
    }

    #[test]
    fn ladder_spans_eight_cells_to_half() {
        let r = radius_ladder(1.0 / 512.0);
        assert_abs_diff_eq!(r[0], 1.0 / 64.0, epsilon = 1e-15);
        assert_abs_diff_eq!(*r.last().unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(r.len(), 11);
        assert!(r.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn weiss_of_cone_vanishes() {
        let g = grid(1, 1.0 / 256.0);
        let w = Profile::h32(1).sample(&g);
        for r in radius_ladder(g.h()) {
            let v = weiss_parts(&w, &[0.0; 3], r, 1.5).unwrap();
            assert!(v.value.abs() <= 1e-3 * v.dirichlet, "r={r} {v:?}");
        }
    }

    #[test]
    fn weiss_of_cone_at_unit_radius() {
        let g = grid(1, 1.0 / 256.0);
        let w = Profile::h32(1).sample(&g);
        let v = weiss_parts(&w, &[0.0; 3], 1.0, 1.5).unwrap();
        assert_abs_diff_eq!(v.dirichlet, 1.5 * PI, epsilon = 5e-3 * PI);
        assert_abs_diff_eq!(v.boundary, 1.5 * PI, epsilon = 1e-6);
    }

    #[test]
    fn weiss_of_quadratic_scales_linearly() {
        let g = grid(1, 1.0 / 256.0);
        let w = GridField::from_fn(g, |p| p[0] * p[1]);
        let w1 = weiss(&w, &[0.0; 3], 0.5, 1.5).unwrap();
        let w2 = weiss(&w, &[0.0; 3], 0.25, 1.5).unwrap();
        // W(1, x1 x2) = ∫|∇|² - 1.5∫ = π/2 - 1.5·π/4 = π/8
        assert_abs_diff_eq!(w1, 0.5 * PI / 8.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w2, 0.25 * PI / 8.0, epsilon = 1e-3);
    }

    #[test]
    fn rescaling_check_is_tight() {
        let g = grid(1, 1.0 / 128.0);
        let cone = Profile::h32(1).sample(&g);
        let lin = Profile::linear(0.7).sample(&g);
        for x0 in [[0.0; 3], [0.25, 0.0, 0.0], [-0.125, 0.25, 0.0]] {
            assert!(weiss_rescaling_check(&cone, &x0, 0.25).unwrap().defect <= 1e-3);
            let d = weiss_rescaling_check(&lin, &x0, 0.25).unwrap();
            assert!(d.defect <= 1e-6, "{d:?}");
        }
        let d = weiss_rescaling_check(&cone, &[0.0; 3], 0.25).unwrap();
        assert!(d.defect <= 1e-5, "{d:?}");
    }

    #[test]
    fn blowup_of_homogeneous_profiles() {
        let g = grid(1, 1.0 / 128.0);
        let cone = Profile::h32(1).sample(&g);
        let b = blowup(&cone, &[0.0; 3], 0.25, BlowupMode::Homogeneous).unwrap();
        let exact = Profile::h32(1).sample(b.grid());
        let err = b.zip_map(&exact, |a, c| a - c).unwrap().max_abs();
        assert!(err < 1e-12, "{err}");
        let lin = Profile::linear(1.0).sample(&g);
        let b = blowup(&lin, &[0.0; 3], 0.25, BlowupMode::Homogeneous).unwrap();
        let exact = GridField::from_fn(*b.grid(), |p| 2.0 * p[1]);
        assert!(b.zip_map(&exact, |a, c| a - c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn norm_normalized_blowup_removes_linear_part() {
        let g = grid(1, 1.0 / 256.0);
        let w = GridField::from_fn(g, |p| Profile::h32(1).eval(1, p) + p[1]);
        let b = blowup(&w, &[0.0; 3], 0.125, BlowupMode::NormNormalized).unwrap();
        let h = Profile::h32(1).sample(b.grid());
        let hn = FieldProbe::values_only(&h)
            .norm(Region::ball([0.0; 3], 1.0), NormConvention::Mean)
            .unwrap();
        let err = b.zip_map(&h, |a, c| a - c / hn).unwrap().max_abs();
        assert!(err < 1e-2, "{err}");
        let zero = GridField::zeros(g);
        assert!(matches!(
            blowup(&zero, &[0.0; 3], 0.125, BlowupMode::NormNormalized),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn frequency_matches_homogeneity() {
        let g = grid(1, 1.0 / 256.0);
        let x0 = [0.0; 3];
        let cases = [
            (Profile::h32(1), 1.5),
            (Profile::linear(1.0), 1.0),
            (Profile::Eigen(EigenProfile::new(5).unwrap()), 2.5),
        ];
        for (p, k) in cases {
            let f = frequency(&p.sample(&g), &x0, 0.5).unwrap();
            assert!((f - k).abs() <= 0.01 * k, "{p:?}: {f}");
        }
        assert!(frequency(&GridField::zeros(g), &x0, 0.5).is_err());
    }

    #[test]
    fn linear_projection_cases() {
        let g = grid(1, 1.0 / 128.0);
        let x0 = [0.0; 3];
        let a = project_linear(&Profile::linear(1.0).sample(&g), &x0, 0.5).unwrap();
        assert_abs_diff_eq!(a.a0, 1.0, epsilon = 1e-12);
        let abs = GridField::from_fn(g, |p| p[1].abs());
        assert_abs_diff_eq!(project_linear(&abs, &x0, 0.5).unwrap().a0, 0.0, epsilon = 1e-12);
        let (pa, pb) = (3.0, 1.0);
        let split = GridField::from_fn(g, |p| if p[1] > 0.0 { pa * p[1] } else { pb * p[1] });
        assert_abs_diff_eq!(
            project_linear(&split, &x0, 0.5).unwrap().a0,
            0.5 * (pa + pb),
            epsilon = 1e-10
        );
    }

    #[test]
    fn cone_projection_cases() {
        let g = grid(1, 1.0 / 256.0);
        let x0 = [0.0; 3];
        let w = GridField::from_fn(g, |p| 2.0 * Profile::h32(1).eval(1, p));
        let pr = project_cone(&w, &x0, 0.5).unwrap();
        assert_abs_diff_eq!(pr.profile.c, 2.0, epsilon = 1e-3);
        assert_eq!(pr.profile.xi, vec![1.0]);
        assert!(pr.cross_term.abs() <= 1e-6);
        // -h_{3/2} still correlates with the mirrored cone: ⟨-h, p_{-1}⟩ = 2/3 on ∂B_1.
        let neg = GridField::from_fn(g, |p| -Profile::h32(1).eval(1, p));
        let pr = project_cone(&neg, &x0, 1.0).unwrap();
        assert_eq!(pr.profile.xi, vec![-1.0]);
        assert_abs_diff_eq!(pr.profile.c, 2.0 / (3.0 * PI), epsilon = 1e-4);
        let both = GridField::from_fn(g, |p| {
            let q = [-p[0], p[1], 0.0];
            -Profile::h32(1).eval(1, p) - Profile::h32(1).eval(1, &q)
        });
        assert_eq!(project_cone(&both, &x0, 0.5).unwrap().profile.c, 0.0);
        let q5 = Profile::Eigen(EigenProfile::new(5).unwrap());
        let mix = GridField::from_fn(g, |p| Profile::h32(1).eval(1, p) + 0.05 * q5.eval(1, p));
        let pr = project_cone(&mix, &x0, 0.5).unwrap();
        assert!((pr.profile.c - 1.0).abs() <= 5e-2);
        assert_eq!(pr.profile.xi, vec![1.0]);
    }

    #[test]
    fn cone_projection_finds_tilted_direction() {
        let g = grid(2, 1.0 / 32.0);
        let psi = 1.1;
        let p = Profile::Cone(ConeProfile::from_angle(1.3, psi));
        let w = p.sample(&g);
        let pr = project_cone(&w, &[0.0; 3], 0.5).unwrap();
        let got = pr.profile.xi[1].atan2(pr.profile.xi[0]);
        assert!((got - psi).abs() < 1e-3, "{got}");
        assert!((pr.profile.c - 1.3).abs() < 1e-3, "{}", pr.profile.c);
    }

    #[test]
    fn growth_exponents() {
        let g = grid(1, 1.0 / 512.0);
        let x0 = [0.0; 3];
        let window = (1.0 / 64.0, 0.25);
        let h = Profile::h32(1).sample(&g);
        let k = fit_growth_exponent(&h, &x0, window).unwrap().rate.unwrap();
        assert!((k - 1.5).abs() <= 0.05, "{k}");
        let hl = GridField::from_fn(g, |p| Profile::h32(1).eval(1, p) + 0.3 * p[1]);
        let k = fit_growth_exponent(&hl, &x0, window).unwrap().rate.unwrap();
        assert!((k - 1.5).abs() <= 0.05, "{k}");
        let q5 = Profile::Eigen(EigenProfile::new(5).unwrap()).sample(&g);
        let k = fit_growth_exponent(&q5, &x0, window).unwrap().rate.unwrap();
        assert!((k - 2.5).abs() <= 0.1, "{k}");
    }

    #[test]
    fn weiss_decay_fit() {
        let samples = (0..8)
            .map(|j| {
                let r = 2f64.powf(-0.5 * j as f64 - 1.0);
                WeissValue {
                    r,
                    value: 2.0 * r.powf(0.3),
                    dirichlet: 0.0,
                    boundary: 0.0,
                }
            })
            .rev()
            .collect();
        let prof = WeissProfile {
            center: [0.0; 3],
            kappa: 1.5,
            samples,
        };
        assert_abs_diff_eq!(fit_weiss_decay(&prof).rate.unwrap(), 0.3, epsilon = 1e-6);
        let mut zero = prof.clone();
        zero.samples.iter_mut().for_each(|s| s.value = 0.0);
        assert!(!fit_weiss_decay(&zero).is_applicable());
    }

    #[test]
    fn cone_decay_of_exact_cone_and_perturbation() {
        let g = grid(1, 1.0 / 256.0);
        let x0 = [0.0; 3];
        let rep = cone_decay_ladder(&Profile::h32(1).sample(&g), &x0).unwrap();
        assert!(rep.fit.samples.iter().all(|s| s.1 <= 1e-3), "{:?}", rep.fit.samples);
        let q5 = Profile::Eigen(EigenProfile::new(5).unwrap());
        let w = GridField::from_fn(g, |p| Profile::h32(1).eval(1, p) + 0.2 * q5.eval(1, p));
        let rep = cone_decay_ladder(&w, &x0).unwrap();
        let rate = rep.fit.rate.unwrap();
        assert!((rate - 1.0).abs() < 0.1, "{rate}");
        assert!(rep.nondegeneracy < 0.1);
    }

    #[test]
    fn trace_energies() {
        let h = Trace::Profile {
            profile: Profile::h32(1),
        };
        assert_abs_diff_eq!(homogeneous_extension_energy(1, |x| h.eval(1, x)), 0.0, epsilon = 1e-5);
        assert_abs_diff_eq!(homogeneous_extension_energy(1, |_| 1.0), -1.5 * PI, epsilon = 1e-9);
        let q5 = Profile::Eigen(EigenProfile::new(5).unwrap());
        // λ = 25/4, ∫ c² = π: (1/3)(25/4 - 9/4)π
        let e = homogeneous_extension_energy(1, |x| q5.eval(1, x));
        assert_abs_diff_eq!(e, 4.0 * PI / 3.0, epsilon = 1e-4);
        let h2 = Trace::Profile {
            profile: Profile::h32(2),
        };
        assert_abs_diff_eq!(homogeneous_extension_energy(2, |x| h2.eval(2, x)), 0.0, epsilon = 1e-3);
    }

    #[test]
    fn epi_of_cone_has_no_kappa() {
        let g = grid(1, 1.0 / 64.0);
        let t = Trace::Profile {
            profile: Profile::h32(1),
        };
        let rep = epiperimetric_check(&t, &g, Parallelism::default()).unwrap();
        assert!(rep.kappa_hat.is_none());
        assert!(rep.w_minimized <= 1e-9);
    }

    #[test]
    fn epi_of_perturbed_cone_has_positive_gap() {
        let g = grid(1, 1.0 / 64.0);
        for t in perturbed_cone_family(1, 3) {
            let rep = epiperimetric_check(&t, &g, Parallelism::default()).unwrap();
            assert!(rep.w_extension > 0.0, "{rep:?}");
            assert!(rep.kappa_hat.unwrap() > 0.0, "{rep:?}");
            assert!(rep.w_minimized <= rep.w_extension);
        }
    }

    #[test]
    fn epi_rejects_negative_trace_on_plane() {
        let g = grid(1, 1.0 / 32.0);
        let t = Trace::Profile {
            profile: Profile::Linear(LinearProfile { a0: 0.0 }),
        };
        assert!(epiperimetric_check(&t, &g, Parallelism::default()).is_ok());
        let neg = Trace::PerturbedCone {
            amplitude: -2.0,
            center: vec![1.0, 0.0],
            width: 0.5,
        };
        assert!(epiperimetric_check(&neg, &g, Parallelism::default()).is_err());
    }

    #[test]
    fn projection_dominance_for_solution() {
        let g = grid(1, 1.0 / 128.0);
        let data = GridField::from_fn(g, |p| Profile::h32(1).eval(1, p) + 0.3 * p[0] * p[0]);
        let c = CoefficientField::identity(g);
        let prob = assemble(&g, &c, &data, Obstacle::Zero).unwrap();
        let sol = solve_psor(&prob, &PsorConfig::default()).unwrap();
        let r = 0.25;
        let x0 = [0.0; 3];
        let base = weiss(&sol.w, &x0, r, 1.5).unwrap();
        for psi in [0.3, 1.0, 2.0] {
            let p = Profile::Cone(ConeProfile::new(psi, vec![1.0]).unwrap());
            let diff = sol.w.minus_fn(|x| p.eval(1, x));
            let v = weiss(&diff, &x0, r, 1.5).unwrap();
            assert!(v <= base + 1e-3, "{v} > {base}");
        }
    }
}
