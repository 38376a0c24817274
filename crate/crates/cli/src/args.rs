//! Command-line flags and their TOML equivalents.
//!
//! Every flag `--some-flag` has the config key `some_flag`. Keys may sit at
//! the top level of the file (shared by all commands) or in a table named
//! after the command (`[solve]`, `[analyze]`, `[gen_coeffs]`, ...), which
//! takes precedence. Flags given on the command line win over both.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "thinfb", version, about = "Thin obstacle laboratory: solve, measure, verify")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a coefficient bundle satisfying condition (N).
    GenCoeffs(GenCoeffsArgs),
    /// Solve the thin obstacle problem and write the solution snapshot.
    Solve(SolveArgs),
    /// Measure a solution at a point.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Epiperimetric check over a family of traces.
    Epi(EpiArgs),
    /// Free boundary extraction and regularity.
    Fb {
        #[command(subcommand)]
        what: FbCommand,
    },
    /// Run the built-in acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy)]
pub enum AnalyzeKind {
    Weiss,
    Growth,
    Cone,
    Blowup,
    Frequency,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Weiss energy ladder and its decay fit.
    Weiss(AnalyzeArgs),
    /// Growth exponent of the L̃² norm.
    Growth(AnalyzeArgs),
    /// Distance to the 3/2-cones along the radius ladder.
    Cone(AnalyzeArgs),
    /// Rescaled field at one radius.
    Blowup(AnalyzeArgs),
    /// Almgren frequency along the radius ladder.
    Frequency(AnalyzeArgs),
}

impl AnalyzeCommand {
    pub fn split(&self) -> (AnalyzeKind, &AnalyzeArgs) {
        match self {
            AnalyzeCommand::Weiss(a) => (AnalyzeKind::Weiss, a),
            AnalyzeCommand::Growth(a) => (AnalyzeKind::Growth, a),
            AnalyzeCommand::Cone(a) => (AnalyzeKind::Cone, a),
            AnalyzeCommand::Blowup(a) => (AnalyzeKind::Blowup, a),
            AnalyzeCommand::Frequency(a) => (AnalyzeKind::Frequency, a),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FbKind {
    Extract,
    Classify,
    Normals,
}

#[derive(Debug, Subcommand)]
pub enum FbCommand {
    /// Contact set, non-contact set and Γ.
    Extract(FbArgs),
    /// Per-point regularity from growth exponents.
    Classify(FbArgs),
    /// Hölder exponent of the normal along Γ (n = 2).
    Normals(FbArgs),
}

impl FbCommand {
    pub fn split(&self) -> (FbKind, &FbArgs) {
        match self {
            FbCommand::Extract(a) => (FbKind::Extract, a),
            FbCommand::Classify(a) => (FbKind::Classify, a),
            FbCommand::Normals(a) => (FbKind::Normals, a),
        }
    }
}

// ---- value types ----

/// A number written as a decimal, `2^-7` or `1/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl FromStr for Num {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("cannot read '{s}' as a number");
        let v = if let Some((b, e)) = s.split_once('^') {
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let e: f64 = e.trim().parse().map_err(|_| bad())?;
            b.powf(e)
        } else if let Some((a, b)) = s.split_once('/') {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        } else {
            s.parse().map_err(|_| bad())?
        };
        if v.is_finite() {
            Ok(Num(v))
        } else {
            Err(bad())
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumRepr {
    Number(f64),
    Text(String),
}

impl NumRepr {
    fn value<E: serde::de::Error>(self) -> Result<f64, E> {
        match self {
            NumRepr::Number(v) => Ok(v),
            NumRepr::Text(s) => s.parse::<Num>().map(|n| n.0).map_err(E::custom),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        NumRepr::deserialize(d)?.value().map(Num)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

/// Comma-separated numbers, e.g. `0,0` or `0.6,0.8`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumList(pub Vec<f64>);

impl FromStr for NumList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.parse::<Num>().map(|n| n.0))
            .collect::<Result<Vec<_>, _>>()
            .map(NumList)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ListRepr {
    List(Vec<NumRepr>),
    Text(String),
}

impl<'de> Deserialize<'de> for NumList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ListRepr::deserialize(d)? {
            ListRepr::List(v) => v.into_iter().map(|x| x.value()).collect::<Result<_, _>>().map(NumList),
            ListRepr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for NumList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Radius window `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window(pub f64, pub f64);

impl FromStr for Window {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("window '{s}' must look like lo:hi"))?;
        Window::checked(a.parse::<Num>()?.0, b.parse::<Num>()?.0)
    }
}

impl Window {
    fn checked(lo: f64, hi: f64) -> Result<Self, String> {
        if lo >= 0.0 && hi > lo {
            Ok(Window(lo, hi))
        } else {
            Err(format!("window {lo}:{hi} needs 0 <= lo < hi"))
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match ListRepr::deserialize(d)? {
            ListRepr::Text(s) => s.parse().map_err(D::Error::custom),
            ListRepr::List(v) if v.len() == 2 => {
                let mut it = v.into_iter();
                let lo = it.next().expect("two entries").value()?;
                let hi = it.next().expect("two entries").value()?;
                Window::checked(lo, hi).map_err(D::Error::custom)
            }
            ListRepr::List(_) => Err(D::Error::custom("window needs two entries")),
        }
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.0, self.1].serialize(s)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffKind {
    Identity,
    Generated,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    H32,
    Cone,
    Linear,
    Log,
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Psor,
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Homogeneous,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    PerturbedCone,
}

// ---- argument groups ----

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run every stage single-threaded.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub sequential: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Tangential dimension (1 or 2).
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid spacing, e.g. 2^-7.
    #[arg(long)]
    pub h: Option<Num>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CoeffArgs {
    /// Coefficient source.
    #[arg(long, value_enum)]
    pub coeffs: Option<CoeffKind>,
    /// Hölder exponent of the coefficients (also the threshold in `fb classify`).
    #[arg(long)]
    pub alpha: Option<Num>,
    /// Size of the coefficient perturbation.
    #[arg(long)]
    pub delta0: Option<Num>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bundle directory for `--coeffs file`.
    #[arg(long)]
    pub coeffs_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dirichlet data profile.
    #[arg(long, value_enum)]
    pub profile: Option<ProfileKind>,
    /// Cone coefficient.
    #[arg(long)]
    pub c: Option<Num>,
    /// Cone direction, comma separated.
    #[arg(long)]
    pub xi: Option<NumList>,
    /// Cone direction angle (n = 2).
    #[arg(long)]
    pub psi: Option<Num>,
    /// Linear profile slope.
    #[arg(long)]
    pub a0: Option<Num>,
    /// Eigenprofile index.
    #[arg(long)]
    pub k: Option<u32>,
    /// Snapshot stem holding the Dirichlet data instead of a profile.
    #[arg(long)]
    pub data_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Relative stopping tolerance (PSOR).
    #[arg(long)]
    pub tol: Option<Num>,
    /// Fixed relaxation factor; automatic when absent.
    #[arg(long)]
    pub omega: Option<Num>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Penalty parameter.
    #[arg(long)]
    pub eps: Option<Num>,
    /// Start from the given grid only, without coarse-grid initial guesses.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub no_nested: Option<bool>,
    /// Solution snapshot stem: the field to analyze, or the initial iterate for `fb`.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ProblemArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub coeffs: CoeffArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GenCoeffsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub alpha: Option<Num>,
    #[arg(long)]
    pub delta0: Option<Num>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    /// Center, n or n+1 comma-separated coordinates.
    #[arg(long)]
    pub at: Option<NumList>,
    /// Radius window lo:hi.
    #[arg(long)]
    pub window: Option<Window>,
    /// Radius for `blowup`.
    #[arg(long)]
    pub r: Option<Num>,
    /// Homogeneity in the Weiss energy.
    #[arg(long)]
    pub kappa: Option<Num>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EpiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FbArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    /// Multiplier on the default classification tolerances.
    #[arg(long)]
    pub tol_scale: Option<Num>,
    /// Growth-fit window lo:hi for `classify`.
    #[arg(long)]
    pub window: Option<Window>,
    /// Classify at most this many points.
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Points per local normal fit.
    #[arg(long)]
    pub normal_window: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    /// Criteria to run, comma separated; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Option<Vec<u8>>,
}

/// Overlay the flags on the config and read the result back.
///
/// Returns the merged settings and their JSON form (used for the config hash).
pub fn resolve<T>(flags: &T, config: Option<&toml::Table>, section: &str) -> Result<(T, Value), CliError>
where
    T: Serialize + DeserializeOwned,
{
    let Value::Object(flag_map) = serde_json::to_value(flags).map_err(CliError::internal)? else {
        return Err(CliError::internal("flags do not form a table"));
    };
    let mut merged = Map::new();
    if let Some(cfg) = config {
        for (k, v) in cfg {
            if !v.is_table() && flag_map.contains_key(k) {
                merged.insert(k.clone(), serde_json::to_value(v).map_err(CliError::internal)?);
            }
        }
        if let Some(table) = cfg.get(section) {
            let table = table
                .as_table()
                .ok_or_else(|| CliError::usage(format!("config entry '{section}' must be a table")))?;
            for (k, v) in table {
                if !flag_map.contains_key(k) {
                    return Err(CliError::usage(format!("unknown key '{k}' in config table [{section}]")));
                }
                merged.insert(k.clone(), serde_json::to_value(v).map_err(CliError::internal)?);
            }
        }
    }
    for (k, v) in flag_map {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    let value = Value::Object(merged);
    let settings: T =
        serde_json::from_value(value.clone()).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))?;
    // Round-trip so defaults and normalised values show in the hash input.
    let value = serde_json::to_value(&settings).map_err(CliError::internal)?;
    Ok((settings, value))
}
