//! Hölder coefficient fields `a^{ij}`, `g^i` and the normalization (N):
//! `a(0) = I`, `g(0) = 0`, `a^{i,n+1}(x', 0) = 0` for `i ≤ n`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::{Grid, GridField, Point};
use crate::snapshot;

pub type Mat = [[f64; 3]; 3];

pub const IDENTITY: Mat = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Tolerance for the clauses of condition (N).
pub const CONDITION_N_TOL: f64 = 1e-12;

/// Default number of node pairs sampled by [`estimate_seminorm`].
pub const DEFAULT_PAIRS: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Constant { a: Mat, g: [f64; 3] },
    /// Upper-triangular entries of `a` (row-major) and components of `g`.
    Sampled { a: Vec<GridField>, g: Vec<GridField> },
}

/// Symmetric elliptic matrix field `a` and vector field `g` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid: Grid,
    storage: Storage,
    alpha: f64,
    delta0: f64,
    seed: Option<u64>,
    lambda: f64,
    big_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub n: usize,
    pub h: f64,
    pub alpha: f64,
    pub delta0: f64,
    pub seed: Option<u64>,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub entries: Vec<String>,
}

fn sym_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            v.push((i, j));
        }
    }
    v
}

fn sym_slot(i: usize, j: usize, dim: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    sym_pairs(dim).iter().position(|&p| p == (i, j)).expect("valid entry")
}

/// Eigenvalue range of the leading `dim × dim` block.
fn eig_range(m: &Mat, dim: usize) -> (f64, f64) {
    match dim {
        2 => {
            let e = SymmetricEigen::new(Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])).eigenvalues;
            (e.min(), e.max())
        }
        _ => {
            let mm = Matrix3::from_fn(|i, j| m[i][j]);
            let e = SymmetricEigen::new(mm).eigenvalues;
            (e.min(), e.max())
        }
    }
}

fn check_symmetric(m: &Mat, dim: usize) -> Result<()> {
    let mut worst = 0.0_f64;
    for i in 0..dim {
        for j in 0..dim {
            worst = worst.max((m[i][j] - m[j][i]).abs());
        }
    }
    if worst > 1e-12 {
        return Err(Error::Asymmetric(worst));
    }
    Ok(())
}

impl CoefficientField {
    /// `a = I`, `g = 0`.
    pub fn identity(grid: Grid) -> Self {
        Self {
            grid,
            storage: Storage::Constant {
                a: IDENTITY,
                g: [0.0; 3],
            },
            alpha: 1.0,
            delta0: 0.0,
            seed: None,
            lambda: 1.0,
            big_lambda: 1.0,
        }
    }

    /// Spatially constant coefficients.
    pub fn constant(grid: Grid, a: Mat, g: [f64; 3]) -> Result<Self> {
        let dim = grid.dim();
        check_symmetric(&a, dim)?;
        let (lambda, big_lambda) = eig_range(&a, dim);
        if !(lambda > 0.0) {
            return Err(Error::Ellipticity(format!("smallest eigenvalue {lambda}")));
        }
        Ok(Self {
            grid,
            storage: Storage::Constant { a, g },
            alpha: 1.0,
            delta0: 0.0,
            seed: None,
            lambda,
            big_lambda,
        })
    }

    /// Sample `a` and `g` from closed forms; `a` must be symmetric and elliptic.
    pub fn from_fns<A, G>(grid: Grid, alpha: f64, a: A, g: G) -> Result<Self>
    where
        A: Fn(&Point) -> Mat + Sync + Send,
        G: Fn(&Point) -> [f64; 3] + Sync + Send,
    {
        let dim = grid.dim();
        let par = Parallelism::default();
        let mats = par.map(grid.len(), |i| a(&grid.node_point(i)));
        for m in &mats {
            check_symmetric(m, dim)?;
        }
        let a_fields = sym_pairs(dim)
            .into_iter()
            .map(|(i, j)| GridField::new(grid, mats.iter().map(|m| m[i][j]).collect()))
            .collect::<Result<Vec<_>>>()?;
        drop(mats);
        let g_fields = (0..dim)
            .map(|k| GridField::new(grid, par.map(grid.len(), |i| g(&grid.node_point(i))[k])))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(grid, alpha, a_fields, g_fields)
    }

    /// Build from entry fields: upper-triangular `a` entries row-major, then `g`.
    pub fn from_entries(grid: Grid, alpha: f64, a: Vec<GridField>, g: Vec<GridField>) -> Result<Self> {
        let dim = grid.dim();
        if a.len() != dim * (dim + 1) / 2 || g.len() != dim {
            return Err(Error::Parameter("wrong number of coefficient entries".into()));
        }
        if a.iter().chain(&g).any(|f| *f.grid() != grid) {
            return Err(Error::Grid("coefficient entries live on different grids".into()));
        }
        let mut c = Self {
            grid,
            storage: Storage::Sampled { a, g },
            alpha,
            delta0: 0.0,
            seed: None,
            lambda: 1.0,
            big_lambda: 1.0,
        };
        let (lambda, big_lambda) = c.ellipticity_range();
        if !(lambda > 0.0) {
            return Err(Error::Ellipticity(format!("smallest eigenvalue {lambda}")));
        }
        c.lambda = lambda;
        c.big_lambda = big_lambda;
        Ok(c)
    }

    fn ellipticity_range(&self) -> (f64, f64) {
        let dim = self.grid.dim();
        let ranges = Parallelism::default().map(self.grid.len(), |i| eig_range(&self.a_node(i), dim));
        ranges
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Ellipticity bounds `(λ, Λ)` over the nodes.
    pub fn ellipticity(&self) -> (f64, f64) {
        (self.lambda, self.big_lambda)
    }

    /// Constant coefficients, if the field is spatially constant.
    pub fn as_constant(&self) -> Option<(Mat, [f64; 3])> {
        match &self.storage {
            Storage::Constant { a, g } => Some((*a, *g)),
            Storage::Sampled { .. } => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(&self.storage, Storage::Constant { a, g } if *a == IDENTITY && *g == [0.0; 3])
    }

    pub fn a_node(&self, idx: usize) -> Mat {
        match &self.storage {
            Storage::Constant { a, .. } => *a,
            Storage::Sampled { a, .. } => {
                let dim = self.grid.dim();
                let mut m = IDENTITY;
                for (s, (i, j)) in sym_pairs(dim).into_iter().enumerate() {
                    m[i][j] = a[s].values()[idx];
                    m[j][i] = m[i][j];
                }
                m
            }
        }
    }

    pub fn g_node(&self, idx: usize) -> [f64; 3] {
        match &self.storage {
            Storage::Constant { g, .. } => *g,
            Storage::Sampled { g, .. } => {
                let mut v = [0.0; 3];
                for (k, f) in g.iter().enumerate() {
                    v[k] = f.values()[idx];
                }
                v
            }
        }
    }

    /// Interpolated `a(p)`.
    pub fn a_at(&self, p: &Point) -> Result<Mat> {
        match &self.storage {
            Storage::Constant { a, .. } => Ok(*a),
            Storage::Sampled { a, .. } => {
                let dim = self.grid.dim();
                let (cell, t) = self.grid.locate(p)?;
                let mut m = IDENTITY;
                for (s, (i, j)) in sym_pairs(dim).into_iter().enumerate() {
                    m[i][j] = a[s].interp_cell(cell, t);
                    m[j][i] = m[i][j];
                }
                Ok(m)
            }
        }
    }

    /// Interpolated `g(p)`.
    pub fn g_at(&self, p: &Point) -> Result<[f64; 3]> {
        match &self.storage {
            Storage::Constant { g, .. } => Ok(*g),
            Storage::Sampled { g, .. } => {
                let (cell, t) = self.grid.locate(p)?;
                let mut v = [0.0; 3];
                for (k, f) in g.iter().enumerate() {
                    v[k] = f.interp_cell(cell, t);
                }
                Ok(v)
            }
        }
    }

    /// Entry `a^{ij}` (0-based) as a field.
    pub fn a_entry(&self, i: usize, j: usize) -> GridField {
        match &self.storage {
            Storage::Constant { a, .. } => GridField::constant(self.grid, a[i][j]),
            Storage::Sampled { a, .. } => a[sym_slot(i, j, self.grid.dim())].clone(),
        }
    }

    pub fn g_entry(&self, k: usize) -> GridField {
        match &self.storage {
            Storage::Constant { g, .. } => GridField::constant(self.grid, g[k]),
            Storage::Sampled { g, .. } => g[k].clone(),
        }
    }

    /// `[a] + [g]`: largest entry seminorm of each part, estimated on the
    /// default pair sample.
    pub fn seminorm_estimate(&self) -> f64 {
        if self.as_constant().is_some() {
            return 0.0;
        }
        let dim = self.grid.dim();
        let pairs = sample_pairs(&self.grid, DEFAULT_PAIRS);
        let sa = sym_pairs(dim)
            .into_iter()
            .map(|(i, j)| seminorm_over_pairs(&self.a_entry(i, j), self.alpha, &pairs))
            .fold(0.0, f64::max);
        let sg = (0..dim)
            .map(|k| seminorm_over_pairs(&self.g_entry(k), self.alpha, &pairs))
            .fold(0.0, f64::max);
        sa + sg
    }

    fn entry_names(&self) -> Vec<String> {
        let dim = self.grid.dim();
        sym_pairs(dim)
            .into_iter()
            .map(|(i, j)| format!("a{}{}", i + 1, j + 1))
            .chain((0..dim).map(|k| format!("g{}", k + 1)))
            .collect()
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            n: self.grid.n(),
            h: self.grid.h(),
            alpha: self.alpha,
            delta0: self.delta0,
            seed: self.seed,
            lambda: self.lambda,
            big_lambda: self.big_lambda,
            entries: self.entry_names(),
        }
    }

    /// Write one snapshot per entry plus `manifest.json` into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let dim = self.grid.dim();
        let fields: Vec<GridField> = sym_pairs(dim)
            .into_iter()
            .map(|(i, j)| self.a_entry(i, j))
            .chain((0..dim).map(|k| self.g_entry(k)))
            .collect();
        for (name, f) in self.entry_names().iter().zip(&fields) {
            snapshot::write(f, &dir.join(name), &format!("coefficient entry {name}"))?;
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }

    pub fn read_bundle(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let grid = Grid::new(manifest.n, manifest.h)?;
        let dim = grid.dim();
        let mut fields = Vec::new();
        for name in &manifest.entries {
            let (f, _) = snapshot::read(&dir.join(name))?;
            if *f.grid() != grid {
                return Err(Error::Grid(format!("entry {name} has a different grid")));
            }
            fields.push(f);
        }
        let g = fields.split_off(dim * (dim + 1) / 2);
        let mut c = Self::from_entries(grid, manifest.alpha, fields, g)?;
        c.delta0 = manifest.delta0;
        c.seed = manifest.seed;
        Ok(c)
    }
}

/// One clause of condition (N) and its largest violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub clause: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionNReport {
    pub pass: bool,
    /// Every clause with its measured magnitude.
    pub clauses: Vec<Violation>,
}

impl ConditionNReport {
    pub fn violations(&self) -> Vec<&Violation> {
        self.clauses.iter().filter(|v| v.magnitude > CONDITION_N_TOL).collect()
    }
}

pub fn check_condition_n(c: &CoefficientField) -> ConditionNReport {
    let g = c.grid();
    let dim = g.dim();
    let nrm = g.n();
    let origin = g.index([g.mid(), g.mid(), if dim == 3 { g.mid() } else { 0 }]);
    let a0 = c.a_node(origin);
    let mut a_origin = 0.0_f64;
    for i in 0..dim {
        for j in 0..dim {
            let target = if i == j { 1.0 } else { 0.0 };
            a_origin = a_origin.max((a0[i][j] - target).abs());
        }
    }
    let g_origin = c.g_node(origin)[..dim].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut plane = 0.0_f64;
    for k in 0..g.plane_len() {
        let m = c.a_node(g.plane_node(k));
        for row in m.iter().take(nrm) {
            plane = plane.max(row[nrm].abs());
        }
    }
    let clauses = vec![
        Violation {
            clause: "a(0) = identity".into(),
            magnitude: a_origin,
        },
        Violation {
            clause: "g(0) = 0".into(),
            magnitude: g_origin,
        },
        Violation {
            clause: "off-diagonal on plane".into(),
            magnitude: plane,
        },
    ];
    let pass = clauses.iter().all(|v| v.magnitude <= CONDITION_N_TOL);
    ConditionNReport { pass, clauses }
}

/// Affine normalization `x = A(0)^{1/2} y`, `ã = A(0)^{-1/2} a A(0)^{-1/2}`,
/// `g̃ = A(0)^{-1/2}(g - g(0))`. Points mapped outside the cube are clamped.
pub fn normalize_at_origin(c: &CoefficientField) -> Result<CoefficientField> {
    let grid = *c.grid();
    let dim = grid.dim();
    let origin = grid.index([grid.mid(), grid.mid(), if dim == 3 { grid.mid() } else { 0 }]);
    let a0 = c.a_node(origin);
    let g0 = c.g_node(origin);
    check_symmetric(&a0, dim)?;
    let m3 = Matrix3::from_fn(|i, j| if i < dim && j < dim { a0[i][j] } else if i == j { 1.0 } else { 0.0 });
    let eig = SymmetricEigen::new(m3);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Ellipticity(format!(
            "a(0) is not positive definite (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    let sqrt = &eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let inv_sqrt =
        &eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * eig.eigenvectors.transpose();
    let is_identity = (0..dim).all(|i| (0..dim).all(|j| (a0[i][j] - if i == j { 1.0 } else { 0.0 }).abs() == 0.0));

    if let Some((a, _)) = c.as_constant() {
        let am = Matrix3::from_fn(|i, j| a[i][j]);
        let t = inv_sqrt * am * inv_sqrt;
        let mut out = IDENTITY;
        for i in 0..dim {
            for j in 0..dim {
                out[i][j] = if i == j { t[(i, j)] } else { 0.5 * (t[(i, j)] + t[(j, i)]) };
            }
        }
        let mut c2 = CoefficientField::constant(grid, out, [0.0; 3])?;
        c2.alpha = c.alpha;
        return Ok(c2);
    }

    let map = |y: &Point| -> Point {
        if is_identity {
            return *y;
        }
        let v = sqrt * nalgebra::Vector3::new(y[0], y[1], y[2]);
        let mut x = [0.0; 3];
        for k in 0..dim {
            x[k] = v[k].clamp(-1.0, 1.0);
        }
        x
    };
    let a_fn = |y: &Point| -> Mat {
        let x = map(y);
        let a = c.a_at(&x).expect("clamped point inside cube");
        let am = Matrix3::from_fn(|i, j| if i < dim && j < dim { a[i][j] } else if i == j { 1.0 } else { 0.0 });
        let t = inv_sqrt * am * inv_sqrt;
        let mut out = IDENTITY;
        for i in 0..dim {
            for j in 0..dim {
                out[i][j] = 0.5 * (t[(i, j)] + t[(j, i)]);
            }
        }
        out
    };
    let g_fn = |y: &Point| -> [f64; 3] {
        let x = map(y);
        let g = c.g_at(&x).expect("clamped point inside cube");
        let d = nalgebra::Vector3::new(g[0] - g0[0], g[1] - g0[1], g[2] - g0[2]);
        let v = inv_sqrt * d;
        let mut out = [0.0; 3];
        out[..dim].copy_from_slice(&v.as_slice()[..dim]);
        out
    };
    let mut out = if is_identity {
        // exact nodal copy
        let a_fields = sym_pairs(dim).into_iter().map(|(i, j)| c.a_entry(i, j)).collect();
        let g_fields = (0..dim)
            .map(|k| c.g_entry(k).map(|v| v - g0[k]))
            .collect();
        CoefficientField::from_entries(grid, c.alpha, a_fields, g_fields)?
    } else {
        CoefficientField::from_fns(grid, c.alpha, a_fn, g_fn)?
    };
    out.delta0 = c.delta0;
    out.seed = c.seed;
    // pin the origin exactly
    if let Storage::Sampled { a, g } = &mut out.storage {
        for (s, (i, j)) in sym_pairs(dim).into_iter().enumerate() {
            a[s].values_mut()[origin] = if i == j { 1.0 } else { 0.0 };
        }
        for f in g.iter_mut() {
            f.values_mut()[origin] = 0.0;
        }
    }
    Ok(out)
}

/// Hölder seminorm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoelderEstimate {
    pub exponent: f64,
    pub seminorm: f64,
    pub pairs: usize,
}

/// Deterministic node-pair sample. Shorter samples are prefixes of longer
/// ones, so estimates over them are monotone in `count`.
pub fn sample_pairs(grid: &Grid, count: usize) -> Vec<(usize, usize)> {
    let dim = grid.dim();
    let last = grid.intervals();
    let mid = grid.mid();
    let mut out = Vec::with_capacity(count);
    // origin against dyadic axis offsets
    let origin = [mid, mid, if dim == 3 { mid } else { 0 }];
    let o = grid.index(origin);
    let mut step = 1;
    while step <= mid && out.len() < count {
        for k in 0..dim {
            for sign in [-1i64, 1] {
                let mut ijk = origin;
                ijk[k] = (mid as i64 + sign * step as i64) as usize;
                if out.len() < count {
                    out.push((o, grid.index(ijk)));
                }
            }
        }
        step *= 2;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7468_696e_6662);
    let levels = (last as f64).log2().ceil() as u32;
    while out.len() < count {
        let mut a = [0usize; 3];
        for ak in a.iter_mut().take(dim) {
            *ak = rng.random_range(0..=last);
        }
        let scale = 1i64 << rng.random_range(0..=levels);
        let axis_aligned: bool = rng.random();
        let mut b = a;
        if axis_aligned {
            let k = rng.random_range(0..dim);
            let d = rng.random_range(1..=scale);
            let d = if rng.random() { d } else { -d };
            b[k] = (a[k] as i64 + d).clamp(0, last as i64) as usize;
        } else {
            for k in 0..dim {
                let d = rng.random_range(-scale..=scale);
                b[k] = (a[k] as i64 + d).clamp(0, last as i64) as usize;
            }
        }
        out.push((grid.index(a), grid.index(b)));
    }
    out
}

/// `max |f(x) - f(y)| / |x - y|^α` over the given pairs.
pub fn seminorm_over_pairs(f: &GridField, alpha: f64, pairs: &[(usize, usize)]) -> f64 {
    let g = f.grid();
    let v = f.values();
    let dim = g.dim();
    pairs.iter().fold(0.0_f64, |m, &(i, j)| {
        if i == j {
            return m;
        }
        let (p, q) = (g.node_point(i), g.node_point(j));
        let d2: f64 = (0..dim).map(|k| (p[k] - q[k]).powi(2)).sum();
        m.max((v[i] - v[j]).abs() / d2.powf(0.5 * alpha))
    })
}

pub fn estimate_seminorm(f: &GridField, alpha: f64) -> HoelderEstimate {
    let pairs = sample_pairs(f.grid(), DEFAULT_PAIRS);
    HoelderEstimate {
        exponent: alpha,
        seminorm: seminorm_over_pairs(f, alpha, &pairs),
        pairs: pairs.len(),
    }
}

/// Periodic spectral synthesis on the node lattice: Gaussian Fourier
/// coefficients with magnitude `|k|^{-(α + (n+1)/2 + 0.01)}`, real part of the
/// inverse transform.
fn synthesize(grid: &Grid, alpha: f64, rng: &mut ChaCha8Rng, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let dim = grid.dim();
    let m = grid.intervals();
    let total = m.pow(dim as u32);
    let decay = alpha + 0.5 * dim as f64 + 0.01;
    let wave = |j: usize| if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
    let mut buf: Vec<Complex<f64>> = (0..total)
        .map(|idx| {
            let mut k2 = 0.0;
            let mut rest = idx;
            for _ in 0..dim {
                k2 += wave(rest % m).powi(2);
                rest /= m;
            }
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if k2 == 0.0 {
                Complex::new(0.0, 0.0)
            } else {
                let amp = k2.powf(-0.5 * decay);
                Complex::new(amp * re, amp * im)
            }
        })
        .collect();
    let fft = planner.plan_fft_inverse(m);
    for axis in 0..dim {
        let stride = m.pow(axis as u32);
        let mut line = vec![Complex::new(0.0, 0.0); m];
        for start in 0..total {
            if (start / stride) % m != 0 {
                continue;
            }
            for (t, l) in line.iter_mut().enumerate() {
                *l = buf[start + t * stride];
            }
            fft.process(&mut line);
            for (t, l) in line.iter().enumerate() {
                buf[start + t * stride] = *l;
            }
        }
    }
    // periodic lattice → node grid (node m wraps to node 0)
    let mut out = vec![0.0; grid.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let ijk = grid.multi_index(idx);
        let mut flat = 0;
        for k in (0..dim).rev() {
            flat = flat * m + ijk[k] % m;
        }
        *o = buf[flat].re;
    }
    out
}

/// Seeded random coefficients satisfying (N) exactly, with `[a] + [g] = δ₀`
/// as measured by [`CoefficientField::seminorm_estimate`].
pub fn generate_field(alpha: f64, delta0: f64, seed: u64, grid: &Grid) -> Result<CoefficientField> {
    if !(delta0 >= 0.0 && delta0 < 0.25) {
        return Err(Error::Parameter(format!("delta0 must lie in [0, 1/4), got {delta0}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if delta0 == 0.0 {
        let mut c = CoefficientField::identity(*grid);
        c.alpha = alpha;
        c.seed = Some(seed);
        return Ok(c);
    }
    let dim = grid.dim();
    let nrm = grid.n();
    let origin = grid.index([grid.mid(), grid.mid(), if dim == 3 { grid.mid() } else { 0 }]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planner = FftPlanner::new();
    let mut raw = |envelope: bool| -> Vec<f64> {
        let mut v = synthesize(grid, alpha, &mut rng, &mut planner);
        let v0 = v[origin];
        for (i, x) in v.iter_mut().enumerate() {
            *x -= v0;
            if envelope {
                *x *= grid.node_point(i)[nrm].abs().powf(alpha);
            }
        }
        v
    };
    let a_raw: Vec<Vec<f64>> = sym_pairs(dim)
        .into_iter()
        .map(|(i, j)| raw(i != j && j == nrm))
        .collect();
    let g_raw: Vec<Vec<f64>> = (0..dim).map(|_| raw(false)).collect();

    let pairs = sample_pairs(grid, DEFAULT_PAIRS);
    let semi = |v: &Vec<f64>| {
        let f = GridField::new(*grid, v.clone()).expect("finite synthesis");
        seminorm_over_pairs(&f, alpha, &pairs)
    };
    let sa = a_raw.iter().map(semi).fold(0.0, f64::max);
    let sg = g_raw.iter().map(semi).fold(0.0, f64::max);
    let scale = delta0 / (sa + sg);

    let a_fields = sym_pairs(dim)
        .into_iter()
        .zip(a_raw)
        .map(|((i, j), v)| {
            let base = if i == j { 1.0 } else { 0.0 };
            GridField::new(*grid, v.into_iter().map(|x| base + scale * x).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let g_fields = g_raw
        .into_iter()
        .map(|v| GridField::new(*grid, v.into_iter().map(|x| scale * x).collect()))
        .collect::<Result<Vec<_>>>()?;
    let mut c = CoefficientField::from_entries(*grid, alpha, a_fields, g_fields)?;
    c.delta0 = delta0;
    c.seed = Some(seed);
    Ok(c)
}
