//! Numerical laboratory for the variable-coefficient thin obstacle problem.
//!
//! The crate solves the Signorini variational inequality on uniform grids over
//! `[-1,1]^{n+1}` (`n = 1, 2`) and measures the solutions: Weiss energies,
//! projections onto linear and 3/2-homogeneous profiles, growth exponents,
//! the epiperimetric gap and the regularity of the free boundary.
//!
//! ```
//! use thinfb::grid::Grid;
//! use thinfb::profiles::{ConeProfile, Profile};
//! use thinfb::norms::{dirichlet_energy, Region};
//!
//! let grid = Grid::new(1, 1.0 / 64.0).unwrap();
//! let w = Profile::Cone(ConeProfile::h32(1)).sample(&grid);
//! let e = dirichlet_energy(&w, Region::ball([0.0; 3], 0.5)).unwrap();
//! assert!((e - 1.5 * std::f64::consts::PI * 0.5f64.powi(3)).abs() < 0.05 * e);
//! ```

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod exec;
pub mod fit;
pub mod freeboundary;
pub mod grid;
pub mod norms;
pub mod profiles;
pub mod quadrature;
pub mod snapshot;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use grid::{Grid, GridField, Parity, Point};
