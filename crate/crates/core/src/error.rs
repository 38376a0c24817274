use thiserror::Error;

/// Errors raised by grid construction, analysis and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("point {point:?} lies outside the computational cube")]
    Domain { point: Vec<f64> },

    #[error("radius {radius} is not resolvable on spacing {spacing} (need r >= {min_radius})")]
    Resolution {
        radius: f64,
        spacing: f64,
        min_radius: f64,
    },

    #[error("ball of radius {radius} around {center:?} leaves the cube")]
    BallOutsideCube { center: Vec<f64>, radius: f64 },

    #[error("coefficient matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("condition (N) violated: {0}")]
    ConditionN(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
        last_iterate: Option<Box<crate::grid::GridField>>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Grid(_) => "grid",
            Error::Domain { .. } => "domain",
            Error::Resolution { .. } => "resolution",
            Error::BallOutsideCube { .. } => "ball_outside_cube",
            Error::Asymmetric(_) => "asymmetric",
            Error::Ellipticity(_) => "ellipticity",
            Error::ConditionN(_) => "condition_n",
            Error::Parameter(_) => "parameter",
            Error::Singular(_) => "singular",
            Error::Degenerate(_) => "degenerate",
            Error::NonConvergence { .. } => "nonconvergence",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
