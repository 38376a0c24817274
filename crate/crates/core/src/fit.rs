//! Least-squares line fits and the fitted-rate report shared by the analysis
//! and free-boundary modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let m = x.len();
    if m != y.len() || m < 2 {
        return Err(Error::Degenerate(format!("line fit needs >= 2 points, got {m}")));
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let slope_stderr = if m > 2 {
        (sse / (mf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        residual: (sse / mf).sqrt(),
        slope_stderr,
    })
}

/// Fit `v ≈ C r^s` by a line in log-log coordinates.
pub fn loglog_fit(r: &[f64], v: &[f64]) -> Result<LineFit> {
    if let Some(bad) = r.iter().chain(v).find(|t| !(**t > 0.0)) {
        return Err(Error::Degenerate(format!("log-log fit needs positive data, got {bad}")));
    }
    let lx: Vec<f64> = r.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = v.iter().map(|t| t.ln()).collect();
    linear_fit(&lx, &ly)
}

/// A rate fitted on a radius window: `β`, `ε₀`, `κ_{x0}` or `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted rate; `None` when the fit was not applicable.
    pub rate: Option<f64>,
    pub intercept: Option<f64>,
    pub residual: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub window: (f64, f64),
    /// The `(r, value)` samples the fit was computed from.
    pub samples: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl DecayFit {
    /// Log-log fit of the samples; non-positive values make the fit
    /// non-applicable instead of failing.
    pub fn from_samples(samples: Vec<(f64, f64)>) -> Self {
        let window = window_of(&samples);
        let r: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let v: Vec<f64> = samples.iter().map(|s| s.1).collect();
        match loglog_fit(&r, &v) {
            Ok(f) => DecayFit {
                rate: Some(f.slope),
                intercept: Some(f.intercept),
                residual: Some(f.residual),
                slope_stderr: Some(f.slope_stderr),
                window,
                samples,
                note: None,
            },
            Err(e) => Self::not_applicable(samples, e.to_string()),
        }
    }

    pub fn not_applicable(samples: Vec<(f64, f64)>, note: impl Into<String>) -> Self {
        DecayFit {
            rate: None,
            intercept: None,
            residual: None,
            slope_stderr: None,
            window: window_of(&samples),
            samples,
            note: Some(note.into()),
        }
    }

    pub fn is_applicable(&self) -> bool {
        self.rate.is_some()
    }
}

fn window_of(samples: &[(f64, f64)]) -> (f64, f64) {
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (0..8)
            .map(|j| {
                let r = 2f64.powf(-0.5 * j as f64 - 1.0);
                (r, 3.0 * r.powf(0.3))
            })
            .collect();
        let f = DecayFit::from_samples(s);
        assert!((f.rate.unwrap() - 0.3).abs() < 1e-12);
        assert!(f.residual.unwrap() < 1e-12);
    }

    #[test]
    fn nonpositive_is_not_applicable() {
        let f = DecayFit::from_samples(vec![(0.1, 0.0), (0.2, 0.0), (0.3, 0.0)]);
        assert!(!f.is_applicable());
        assert!(f.note.is_some());
    }
}
