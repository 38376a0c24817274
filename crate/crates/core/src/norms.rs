//! Normalized `L²` norms and Dirichlet energies over balls and spheres.
//!
//! Gradients are nodal finite differences: centered in the interior, second
//! order one-sided on the cube faces and on the kink layer `x_{n+1} = 0`,
//! where the upper and lower one-sided values are kept separately. Off-node
//! gradients interpolate the nodal ones from the side the point lies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::{Grid, GridField, Point};
use crate::quadrature::BallQuadrature;

/// Smallest resolvable radius in units of the grid spacing.
pub const MIN_RADIUS_CELLS: f64 = 8.0;

/// Prefactor used for `‖·‖_{L̃²(Ω)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormConvention {
    /// `(1/|Ω|) ‖f‖_{L²(Ω)}`.
    #[default]
    Literal,
    /// `|Ω|^{-1/2} ‖f‖_{L²(Ω)}`, the root mean square.
    Mean,
}

impl NormConvention {
    /// Normalize `∫_Ω f²` given `|Ω|`.
    pub fn apply(self, integral_sq: f64, measure: f64) -> f64 {
        match self {
            NormConvention::Literal => integral_sq.max(0.0).sqrt() / measure,
            NormConvention::Mean => (integral_sq.max(0.0) / measure).sqrt(),
        }
    }
}

/// Integration region: a solid ball or its boundary sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Ball { center: Point, radius: f64 },
    Sphere { center: Point, radius: f64 },
}

impl Region {
    pub fn ball(center: Point, radius: f64) -> Self {
        Region::Ball { center, radius }
    }

    pub fn sphere(center: Point, radius: f64) -> Self {
        Region::Sphere { center, radius }
    }

    pub fn center(&self) -> Point {
        match *self {
            Region::Ball { center, .. } | Region::Sphere { center, .. } => center,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Region::Ball { radius, .. } | Region::Sphere { radius, .. } => radius,
        }
    }
}

/// Check `r >= 8h` and `B_r(x0) ⊂ cube`.
pub fn check_resolvable(grid: &Grid, center: &Point, radius: f64) -> Result<()> {
    let min_radius = MIN_RADIUS_CELLS * grid.h();
    if radius < min_radius * (1.0 - 1e-12) {
        return Err(Error::Resolution {
            radius,
            spacing: grid.h(),
            min_radius,
        });
    }
    if !grid.contains_ball(center, radius) {
        return Err(Error::BallOutsideCube {
            center: center[..grid.dim()].to_vec(),
            radius,
        });
    }
    Ok(())
}

/// `‖f‖_{L̃²(region)}` with the literal `1/|Ω|` prefactor.
pub fn norm_l2_tilde(field: &GridField, region: Region) -> Result<f64> {
    norm_l2(field, region, NormConvention::Literal)
}

/// Normalized `L²` norm under an explicit convention.
pub fn norm_l2(field: &GridField, region: Region, convention: NormConvention) -> Result<f64> {
    FieldProbe::values_only(field).norm(region, convention)
}

/// `∫_{B_r(x0)} |∇f|²`.
pub fn dirichlet_energy(field: &GridField, region: Region) -> Result<f64> {
    let (center, radius) = match region {
        Region::Ball { center, radius } => (center, radius),
        Region::Sphere { .. } => {
            return Err(Error::Parameter("Dirichlet energy needs a ball".into()));
        }
    };
    FieldProbe::new(field).dirichlet_energy(&center, radius)
}

/// Field wrapper with cached nodal gradients.
#[derive(Debug, Clone)]
pub struct FieldProbe<'a> {
    field: &'a GridField,
    grad: Vec<Point>,
    /// Lower one-sided gradients on the kink layer, in plane order.
    grad_lower: Vec<Point>,
    par: Parallelism,
}

impl<'a> FieldProbe<'a> {
    pub fn new(field: &'a GridField) -> Self {
        Self::with_parallelism(field, Parallelism::default())
    }

    pub fn with_parallelism(field: &'a GridField, par: Parallelism) -> Self {
        let g = *field.grid();
        let grad = par.map(g.len(), |i| nodal_gradient(field, i, Side::Upper));
        let grad_lower = match field.kink_layer() {
            Some(layer) => par.map(layer_len(&g), |k| {
                nodal_gradient(field, layer_node(&g, layer, k), Side::Lower)
            }),
            None => Vec::new(),
        };
        Self {
            field,
            grad,
            grad_lower,
            par,
        }
    }

    /// Probe without gradients, for norm evaluations only.
    pub fn values_only(field: &'a GridField) -> Self {
        Self {
            field,
            grad: Vec::new(),
            grad_lower: Vec::new(),
            par: Parallelism::default(),
        }
    }

    pub fn field(&self) -> &GridField {
        self.field
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn parallelism(&self) -> Parallelism {
        self.par
    }

    /// Nodal gradient (upper one-sided on the kink layer).
    pub fn nodal_gradient(&self, idx: usize) -> Point {
        self.grad[idx]
    }

    pub fn value(&self, p: &Point) -> Result<f64> {
        self.field.interpolate_point(p)
    }

    /// Interpolated value and gradient at `p`.
    pub fn value_grad(&self, p: &Point) -> Result<(f64, Point)> {
        assert!(!self.grad.is_empty(), "probe built without gradients");
        let g = self.field.grid();
        let (cell, t) = g.locate(p)?;
        let v = self.field.interp_cell(cell, t);
        let dim = g.dim();
        let nrm = g.n();
        // Which corner layer (0 or 1 along the normal axis) sits on the kink
        // and must use lower-side gradients.
        let lower_corner = match self.field.kink_layer() {
            Some(layer) if cell[nrm] + 1 == layer => Some(1),
            _ => None,
        };
        let mut grad = [0.0; 3];
        let corners = 1usize << dim;
        for c in 0..corners {
            let mut ijk = cell;
            let mut w = 1.0;
            for k in 0..dim {
                let bit = (c >> k) & 1;
                ijk[k] += bit;
                w *= if bit == 1 { t[k] } else { 1.0 - t[k] };
            }
            if w == 0.0 {
                continue;
            }
            let idx = g.index(ijk);
            let gv = match lower_corner {
                Some(b) if (c >> nrm) & 1 == b => {
                    let layer = ijk[nrm];
                    &self.grad_lower[layer_pos(g, layer, ijk)]
                }
                _ => &self.grad[idx],
            };
            for k in 0..dim {
                grad[k] += w * gv[k];
            }
        }
        Ok((v, grad))
    }

    /// `∫_{B_r} |∇f|²`.
    pub fn dirichlet_energy(&self, center: &Point, radius: f64) -> Result<f64> {
        Ok(self.ball_energy_and_mass(center, radius)?.0)
    }

    /// `(∫_{B_r} |∇f|², ∫_{∂B_r} f²)`.
    pub fn ball_energy_and_mass(&self, center: &Point, radius: f64) -> Result<(f64, f64)> {
        let g = self.field.grid();
        check_resolvable(g, center, radius)?;
        let q = BallQuadrature::new(g.n(), *center, radius, g.h());
        let [e] = q.integrate_interior(self.par, |p| {
            let (_, d) = self.value_grad(p).expect("quadrature node inside cube");
            [d[0] * d[0] + d[1] * d[1] + d[2] * d[2]]
        });
        let [m] = q.integrate_surface(|p| {
            let v = self.value(p).expect("quadrature node inside cube");
            [v * v]
        });
        Ok((e, m))
    }

    /// `∫_Ω f²` and `|Ω|`.
    pub fn mass(&self, region: Region) -> Result<(f64, f64)> {
        let g = self.field.grid();
        let center = region.center();
        let radius = region.radius();
        check_resolvable(g, &center, radius)?;
        let q = BallQuadrature::new(g.n(), center, radius, g.h());
        let f = |p: &Point| {
            let v = self.field.interpolate_point(p).expect("quadrature node inside cube");
            [v * v]
        };
        Ok(match region {
            Region::Ball { .. } => (q.integrate_interior(self.par, f)[0], q.ball_measure()),
            Region::Sphere { .. } => (q.integrate_surface(f)[0], q.sphere_measure()),
        })
    }

    pub fn norm(&self, region: Region, convention: NormConvention) -> Result<f64> {
        let (m, measure) = self.mass(region)?;
        Ok(convention.apply(m, measure))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Upper,
    Lower,
}

fn layer_len(g: &Grid) -> usize {
    g.plane_len()
}

/// Node `k` (tangential enumeration) of the normal-axis layer `layer`.
fn layer_node(g: &Grid, layer: usize, k: usize) -> usize {
    let m = g.nodes_per_axis();
    match g.n() {
        1 => g.index([k, layer, 0]),
        _ => g.index([k % m, k / m, layer]),
    }
}

fn layer_pos(g: &Grid, _layer: usize, ijk: [usize; 3]) -> usize {
    match g.n() {
        1 => ijk[0],
        _ => ijk[0] + g.nodes_per_axis() * ijk[1],
    }
}

/// Finite-difference gradient at a node; on the kink layer the normal
/// derivative is one-sided from `side`.
fn nodal_gradient(field: &GridField, idx: usize, side: Side) -> Point {
    let g = field.grid();
    let v = field.values();
    let ijk = g.multi_index(idx);
    let last = g.intervals();
    let inv2h = 0.5 / g.h();
    let mut grad = [0.0; 3];
    for k in 0..g.dim() {
        let s = g.stride(k);
        let i = ijk[k];
        let on_kink = k == g.n() && field.kink_layer() == Some(i);
        let forward = i == 0 || (on_kink && side == Side::Upper && i + 2 <= last);
        let backward = i == last || (on_kink && side == Side::Lower && i >= 2);
        grad[k] = if forward && i + 2 <= last {
            (-3.0 * v[idx] + 4.0 * v[idx + s] - v[idx + 2 * s]) * inv2h
        } else if backward && i >= 2 {
            (3.0 * v[idx] - 4.0 * v[idx - s] + v[idx - 2 * s]) * inv2h
        } else {
            (v[idx + s] - v[idx - s]) * inv2h
        };
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn h32(p: &Point) -> f64 {
        let (s, t) = (p[0], p[1].abs());
        s.hypot(t).powf(1.5) * (1.5 * t.atan2(s)).cos()
    }

    #[test]
    fn zero_and_constant_norms() {
        let g = Grid::new(1, 2f64.powi(-6)).unwrap();
        let z = GridField::zeros(g);
        assert_eq!(norm_l2_tilde(&z, Region::sphere([0.0; 3], 1.0)).unwrap(), 0.0);
        let one = GridField::constant(g, 1.0);
        let v = norm_l2_tilde(&one, Region::sphere([0.0; 3], 1.0)).unwrap();
        assert!((v - (2.0 * PI).powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn cone_sphere_norm() {
        let g = Grid::new(1, 2f64.powi(-8)).unwrap();
        let f = GridField::from_fn(g, h32);
        let v = norm_l2_tilde(&f, Region::sphere([0.0; 3], 1.0)).unwrap();
        let exact = PI.sqrt() / (2.0 * PI);
        assert!((v / exact - 1.0).abs() < 1e-3, "{v} vs {exact}");
    }

    #[test]
    fn resolution_and_containment_errors() {
        let g = Grid::new(1, 2f64.powi(-5)).unwrap();
        let f = GridField::zeros(g);
        let small = 4.0 * g.h();
        assert!(matches!(
            norm_l2_tilde(&f, Region::ball([0.0; 3], small)),
            Err(Error::Resolution { .. })
        ));
        assert!(matches!(
            dirichlet_energy(&f, Region::ball([0.8, 0.0, 0.0], 0.5)),
            Err(Error::BallOutsideCube { .. })
        ));
    }

    #[test]
    fn linear_energy() {
        let g = Grid::new(2, 2f64.powi(-4)).unwrap();
        let f = GridField::from_fn(g, |p| 2.0 * p[0] - p[1] + 0.5 * p[2]);
        let e = dirichlet_energy(&f, Region::ball([0.0; 3], 1.0)).unwrap();
        let exact = 5.25 * 4.0 * PI / 3.0;
        assert!((e / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kinked_fields() {
        let g = Grid::new(1, 2f64.powi(-7)).unwrap();
        let abs = GridField::from_fn(g, |p| p[1].abs());
        let e = dirichlet_energy(&abs, Region::ball([0.0; 3], 1.0)).unwrap();
        assert!((e / PI - 1.0).abs() < 0.02, "{e}");
        let cone = GridField::from_fn(g, h32);
        let e = dirichlet_energy(&cone, Region::ball([0.0; 3], 1.0)).unwrap();
        assert!((e / (1.5 * PI) - 1.0).abs() < 0.02, "{e}");
    }

    #[test]
    fn one_sided_gradients_at_plane() {
        let g = Grid::new(1, 0.125).unwrap();
        let f = GridField::from_fn(g, |p| 3.0 * p[1].max(0.0) - 2.0 * p[1].min(0.0));
        let probe = FieldProbe::new(&f);
        let (_, up) = probe.value_grad(&[0.1, 0.05, 0.0]).unwrap();
        let (_, down) = probe.value_grad(&[0.1, -0.05, 0.0]).unwrap();
        assert!((up[1] - 3.0).abs() < 1e-12);
        assert!((down[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn mean_convention_scales_homogeneously() {
        let g = Grid::new(1, 2f64.powi(-8)).unwrap();
        let f = GridField::from_fn(g, h32);
        let probe = FieldProbe::values_only(&f);
        let base = probe.norm(Region::sphere([0.0; 3], 0.5), NormConvention::Mean).unwrap();
        for j in 1..5 {
            let r = 0.5 * 2f64.powi(-j);
            let v = probe.norm(Region::sphere([0.0; 3], r), NormConvention::Mean).unwrap();
            let ratio = v / (base * (r / 0.5).powf(1.5));
            assert!((ratio - 1.0).abs() < 0.01, "r={r} ratio={ratio}");
        }
    }
}
