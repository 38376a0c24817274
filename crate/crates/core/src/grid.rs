//! Uniform node grids over the cube `[-1,1]^{n+1}` and fields sampled on them.
//!
//! Axis `k` of a point is `x_{k+1}`; the last axis (`n`) is the normal
//! direction `x_{n+1}` and the thin plane is the node layer where it vanishes.
//! Nodes are stored with `x_1` varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Parallelism;

/// Fixed-size point type; components past `n+1` are ignored and kept at zero.
pub type Point = [f64; 3];

const CUBE_TOL: f64 = 1e-12;

/// Build a [`Point`] from a slice of length `n+1`.
pub fn point(coords: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..coords.len()].copy_from_slice(coords);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    intervals: usize,
}

impl Grid {
    /// Grid with spacing `h`; `2/h` must be an even integer so that the origin
    /// and the thin plane are node sets.
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Grid(format!("spacing must be positive, got {h}")));
        }
        let m = 2.0 / h;
        let intervals = m.round();
        if (m - intervals).abs() > 1e-9 * m {
            return Err(Error::Grid(format!("2/h must be an integer, got {m}")));
        }
        Self::with_intervals(n, intervals as usize)
    }

    pub fn with_intervals(n: usize, intervals: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::Grid(format!("tangential dimension must be 1 or 2, got {n}")));
        }
        if intervals < 4 || intervals % 2 != 0 {
            return Err(Error::Grid(format!(
                "interval count per axis must be even and >= 4, got {intervals}"
            )));
        }
        Ok(Self { n, intervals })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Space dimension `n+1`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 / self.intervals as f64
    }

    #[inline]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    #[inline]
    pub fn nodes_per_axis(&self) -> usize {
        self.intervals + 1
    }

    /// Index of the layer `x_{n+1} = 0` (and of the origin along each axis).
    #[inline]
    pub fn mid(&self) -> usize {
        self.intervals / 2
    }

    pub fn len(&self) -> usize {
        self.nodes_per_axis().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h()
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.nodes_per_axis().pow(axis as u32)
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        let m = self.nodes_per_axis();
        match self.dim() {
            2 => ijk[0] + m * ijk[1],
            _ => ijk[0] + m * (ijk[1] + m * ijk[2]),
        }
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let m = self.nodes_per_axis();
        match self.dim() {
            2 => [idx % m, idx / m, 0],
            _ => [idx % m, (idx / m) % m, idx / (m * m)],
        }
    }

    #[inline]
    pub fn node_point(&self, idx: usize) -> Point {
        let ijk = self.multi_index(idx);
        let mut p = [0.0; 3];
        for (k, pk) in p.iter_mut().enumerate().take(self.dim()) {
            *pk = self.coord(ijk[k]);
        }
        p
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let ijk = self.multi_index(idx);
        (0..self.dim()).any(|k| ijk[k] == 0 || ijk[k] == self.intervals)
    }

    /// Number of nodes on the thin plane.
    pub fn plane_len(&self) -> usize {
        self.nodes_per_axis().pow(self.n as u32)
    }

    /// Global node index of the `k`-th plane node (plane nodes enumerate with
    /// `x_1` fastest).
    #[inline]
    pub fn plane_node(&self, k: usize) -> usize {
        let m = self.nodes_per_axis();
        match self.n {
            1 => self.index([k, self.mid(), 0]),
            _ => self.index([k % m, k / m, self.mid()]),
        }
    }

    /// Inverse of [`Grid::plane_node`] for nodes on the plane.
    pub fn plane_index(&self, idx: usize) -> Option<usize> {
        let ijk = self.multi_index(idx);
        if ijk[self.n] != self.mid() {
            return None;
        }
        let m = self.nodes_per_axis();
        Some(match self.n {
            1 => ijk[0],
            _ => ijk[0] + m * ijk[1],
        })
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim()).all(|k| p[k].abs() <= 1.0 + CUBE_TOL)
    }

    /// Whether the closed ball `B_r(x0)` lies inside the cube.
    pub fn contains_ball(&self, x0: &Point, r: f64) -> bool {
        (0..self.dim()).all(|k| x0[k].abs() + r <= 1.0 + CUBE_TOL)
    }

    /// Locate the cell containing `p` and the local coordinates in `[0,1]`.
    #[inline]
    pub(crate) fn locate(&self, p: &Point) -> Result<([usize; 3], [f64; 3])> {
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        let inv_h = self.intervals as f64 / 2.0;
        for k in 0..self.dim() {
            let x = p[k];
            if !(x.abs() <= 1.0 + CUBE_TOL) {
                return Err(Error::Domain {
                    point: p[..self.dim()].to_vec(),
                });
            }
            let s = ((x + 1.0) * inv_h).clamp(0.0, self.intervals as f64);
            let mut c = s.floor() as usize;
            if c >= self.intervals {
                c = self.intervals - 1;
            }
            cell[k] = c;
            t[k] = s - c as f64;
        }
        Ok((cell, t))
    }

    /// Coarser grid with half the intervals, if it still has an even count.
    pub fn coarsen(&self) -> Option<Grid> {
        let m = self.intervals / 2;
        if self.intervals % 2 == 0 && m >= 4 && m % 2 == 0 {
            Some(Grid { n: self.n, intervals: m })
        } else {
            None
        }
    }
}

/// Reflection behaviour in `x_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    #[default]
    None,
    Even,
    Odd,
}

/// Scalar field sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
    parity: Parity,
    /// Node layer (index along the normal axis) across which the field is only
    /// piecewise smooth; gradients there are one-sided.
    kink_layer: Option<usize>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite value at node {i}")));
        }
        Ok(Self {
            grid,
            values,
            parity: Parity::None,
            kink_layer: Some(grid.mid()),
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            parity: Parity::None,
            kink_layer: Some(grid.mid()),
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            ..Self::zeros(grid)
        }
    }

    /// Sample `f` at every node.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        Self::from_fn_with(grid, Parallelism::default(), f)
    }

    pub fn from_fn_with<F>(grid: Grid, par: Parallelism, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        let values = par.map(grid.len(), |i| f(&grid.node_point(i)));
        Self {
            grid,
            values,
            parity: Parity::None,
            kink_layer: Some(grid.mid()),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    pub fn kink_layer(&self) -> Option<usize> {
        self.kink_layer
    }

    pub fn with_kink_layer(mut self, layer: Option<usize>) -> Self {
        self.kink_layer = layer;
        self
    }

    #[inline]
    pub fn at(&self, ijk: [usize; 3]) -> f64 {
        self.values[self.grid.index(ijk)]
    }

    /// Multilinear interpolation of the nodal values.
    pub fn interpolate(&self, p: &[f64]) -> Result<f64> {
        self.interpolate_point(&point(p))
    }

    pub fn interpolate_point(&self, p: &Point) -> Result<f64> {
        let (cell, t) = self.grid.locate(p)?;
        Ok(self.interp_cell(cell, t))
    }

    #[inline]
    pub(crate) fn interp_cell(&self, cell: [usize; 3], t: [f64; 3]) -> f64 {
        let g = &self.grid;
        let base = g.index(cell);
        match g.dim() {
            2 => {
                let m = g.nodes_per_axis();
                let v = &self.values;
                let (tx, ty) = (t[0], t[1]);
                let a = v[base] * (1.0 - tx) + v[base + 1] * tx;
                let b = v[base + m] * (1.0 - tx) + v[base + m + 1] * tx;
                a * (1.0 - ty) + b * ty
            }
            _ => {
                let m = g.nodes_per_axis();
                let mm = m * m;
                let v = &self.values;
                let (tx, ty, tz) = (t[0], t[1], t[2]);
                let lerp = |i: usize| v[i] * (1.0 - tx) + v[i + 1] * tx;
                let a = lerp(base) * (1.0 - ty) + lerp(base + m) * ty;
                let b = lerp(base + mm) * (1.0 - ty) + lerp(base + mm + m) * ty;
                a * (1.0 - tz) + b * tz
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        if self.grid != other.grid {
            return Err(Error::Grid("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(GridField {
            grid: self.grid,
            values,
            parity: Parity::None,
            kink_layer: self.kink_layer,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
            parity: Parity::None,
            kink_layer: self.kink_layer,
        }
    }

    /// Subtract `f` evaluated at the nodes.
    pub fn minus_fn(&self, f: impl Fn(&Point) -> f64 + Sync + Send) -> GridField {
        let g = self.grid;
        let values = Parallelism::default().map(g.len(), |i| self.values[i] - f(&g.node_point(i)));
        GridField {
            grid: g,
            values,
            parity: Parity::None,
            kink_layer: self.kink_layer,
        }
    }

    /// Largest deviation from the declared reflection parity.
    pub fn parity_defect(&self) -> f64 {
        let sign = match self.parity {
            Parity::None => return 0.0,
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        };
        let g = &self.grid;
        let nrm = g.n();
        let last = g.intervals();
        let mut worst = 0.0_f64;
        for idx in 0..g.len() {
            let mut ijk = g.multi_index(idx);
            let v = self.values[idx];
            ijk[nrm] = last - ijk[nrm];
            let w = self.values[g.index(ijk)];
            worst = worst.max((v - sign * w).abs());
        }
        worst
    }

    /// Mirror the field in `x_{n+1}`.
    pub fn reflect(&self) -> GridField {
        let g = &self.grid;
        let nrm = g.n();
        let last = g.intervals();
        let values = (0..g.len())
            .map(|idx| {
                let mut ijk = g.multi_index(idx);
                ijk[nrm] = last - ijk[nrm];
                self.values[g.index(ijk)]
            })
            .collect();
        GridField {
            grid: *g,
            values,
            parity: self.parity,
            kink_layer: self.kink_layer.map(|k| last - k),
        }
    }

    /// Restriction to the nodes of a coarser grid obtained by [`Grid::coarsen`].
    pub fn restrict_to(&self, coarse: &Grid) -> Result<GridField> {
        let ratio = self.grid.intervals() / coarse.intervals();
        if coarse.n() != self.grid.n() || ratio * coarse.intervals() != self.grid.intervals() {
            return Err(Error::Grid("coarse grid is not nested".into()));
        }
        let values = (0..coarse.len())
            .map(|i| {
                let c = coarse.multi_index(i);
                self.values[self.grid.index([c[0] * ratio, c[1] * ratio, c[2] * ratio])]
            })
            .collect();
        Ok(GridField {
            grid: *coarse,
            values,
            parity: self.parity,
            kink_layer: self.kink_layer.map(|k| k / ratio),
        })
    }

    /// Multilinear prolongation onto a finer grid.
    pub fn prolong_to(&self, fine: &Grid) -> Result<GridField> {
        if fine.n() != self.grid.n() || fine.intervals() % self.grid.intervals() != 0 {
            return Err(Error::Grid("fine grid is not nested".into()));
        }
        let values = Parallelism::default().map(fine.len(), |i| {
            let p = fine.node_point(i);
            self.interpolate_point(&p).expect("fine node inside cube")
        });
        Ok(GridField {
            grid: *fine,
            values,
            parity: self.parity,
            kink_layer: Some(fine.mid()),
        })
    }

    /// Values on the thin plane, enumerated like [`Grid::plane_node`].
    pub fn plane_values(&self) -> Vec<f64> {
        (0..self.grid.plane_len())
            .map(|k| self.values[self.grid.plane_node(k)])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_spacing() {
        assert!(Grid::new(1, 0.3).is_err());
        assert!(Grid::new(1, 2.0 / 6.0 * 1.0).is_ok());
        assert!(Grid::new(1, 2.0 / 5.0).is_err());
        assert!(Grid::new(3, 0.25).is_err());
    }

    #[test]
    fn odd_node_count_and_origin_node() {
        let g = Grid::new(2, 0.125).unwrap();
        assert_eq!(g.nodes_per_axis() % 2, 1);
        let o = g.index([g.mid(), g.mid(), g.mid()]);
        assert_eq!(g.node_point(o), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(2, 0.25).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(g.multi_index(i)), i);
        }
        for k in 0..g.plane_len() {
            assert_eq!(g.plane_index(g.plane_node(k)), Some(k));
        }
    }

    #[test]
    fn interpolate_constant_and_linear() {
        let g = Grid::new(1, 2.0f64.powi(-4)).unwrap();
        let one = GridField::constant(g, 1.0);
        assert_eq!(one.interpolate(&[0.123, -0.77]).unwrap(), 1.0);
        let lin = GridField::from_fn(g, |p| p[1]);
        assert!((lin.interpolate(&[0.3, 0.25]).unwrap() - 0.25).abs() < 1e-14);
        let bil = GridField::from_fn(g, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]);
        let x = [0.31, -0.47];
        let exact = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        assert!((bil.interpolate(&x).unwrap() - exact).abs() < 1e-13);
    }

    #[test]
    fn interpolate_trilinear_exact() {
        let g = Grid::new(2, 0.25).unwrap();
        let f = |p: &Point| 0.5 - p[0] + 3.0 * p[1] * p[2] + p[0] * p[1] * p[2];
        let field = GridField::from_fn(g, f);
        let x = [0.13, -0.61, 0.94];
        assert!((field.interpolate(&x).unwrap() - f(&x)).abs() < 1e-13);
    }

    #[test]
    fn interpolate_outside_is_domain_error() {
        let g = Grid::new(1, 0.25).unwrap();
        let f = GridField::zeros(g);
        assert!(matches!(f.interpolate(&[1.5, 0.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn cone_interpolation_accuracy() {
        let g = Grid::new(1, 2.0f64.powi(-8)).unwrap();
        let f = GridField::from_fn(g, |p| {
            let (s, t) = (p[0], p[1].abs());
            let rho = s.hypot(t);
            rho.powf(1.5) * (1.5 * t.atan2(s)).cos()
        });
        // Re(0.5 + 0.5i)^{3/2}
        let rho: f64 = 0.5f64.hypot(0.5);
        let exact = rho.powf(1.5) * (1.5 * std::f64::consts::FRAC_PI_4).cos();
        assert!((f.interpolate(&[0.5, 0.5]).unwrap() - exact).abs() < 5e-4);
    }

    #[test]
    fn restrict_and_prolong() {
        let fine = Grid::new(1, 0.125).unwrap();
        let coarse = fine.coarsen().unwrap();
        let f = GridField::from_fn(fine, |p| p[0] - 2.0 * p[1]);
        let c = f.restrict_to(&coarse).unwrap();
        let back = c.prolong_to(&fine).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
