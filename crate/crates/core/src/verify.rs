//! Built-in acceptance suite: twelve property checks with their tolerances and
//! time budgets, shared by the `acceptance` test target and `thinfb verify`.
//!
//! Expensive solves are cached for the lifetime of the process so criteria
//! that measure the same solution do not recompute it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    cone_decay_ladder_on, epiperimetric_check, localize_on_cone, fit_growth_exponent, fit_weiss_decay, perturbed_cone_family,
    radius_ladder, subtract_linear, weiss_parts, weiss_profile, weiss_rescaling_check, DEFAULT_KAPPA,
};
use crate::coefficients::{generate_field, CoefficientField};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::fit::{linear_fit, loglog_fit};
use crate::freeboundary::{classify_regular, extract, normal_regularity, ClassifyOptions, Tolerances, NORMAL_WINDOW};
use crate::grid::{Grid, GridField, Point};
use crate::norms::{FieldProbe, NormConvention, Region, MIN_RADIUS_CELLS};
use crate::profiles::{eigen_slit_spectrum, ConeProfile, Profile};
use crate::solver::{assemble, solve_penalized, solve_psor, Obstacle, PenaltyConfig, PsorConfig, SolutionField};

/// `(id, short name, time budget in seconds)`.
pub const CRITERIA: [(u8, &str, f64); 12] = [
    (1, "model solution reproduction", 60.0),
    (2, "optimal growth exponent", 300.0),
    (3, "sub-half Hölder regime", 300.0),
    (4, "logarithmic borderline", 10.0),
    (5, "Weiss rescaling identity and sign", 30.0),
    (6, "projection dominance", 120.0),
    (7, "Weiss decay", 600.0),
    (8, "epiperimetric constant", 300.0),
    (9, "slit spectrum", 10.0),
    (10, "cone decay ladder", 300.0),
    (11, "free boundary regularity (n=2)", 1200.0),
    (12, "penalization convergence", 180.0),
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub metrics: serde_json::Value,
    pub seconds: f64,
    pub budget: f64,
}

impl CriterionResult {
    /// One line for the pass/fail table.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1} s / {:.0} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds,
            self.budget
        )
    }
}

/// Run one criterion by number.
pub fn run(id: u8) -> CriterionResult {
    let (_, name, budget) = CRITERIA
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .unwrap_or((id, "unknown", 0.0));
    let start = Instant::now();
    let outcome = match id {
        1 => c1_model(),
        2 => c2_growth(),
        3 => c3_sub_half(),
        4 => c4_log(),
        5 => c5_weiss_identity(),
        6 => c6_dominance(),
        7 => c7_weiss_decay(),
        8 => c8_epi(),
        9 => c9_spectrum(),
        10 => c10_cone_decay(),
        11 => c11_free_boundary(),
        12 => c12_penalty(),
        _ => Err(Error::Parameter(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (pass, detail, metrics) = match outcome {
        Ok(o) => (o.pass && seconds <= budget, o.detail, o.metrics),
        Err(e) => (false, format!("error: {e}"), json!({ "error": e.kind() })),
    };
    let detail = if pass || seconds <= budget {
        detail
    } else {
        format!("{detail}; over time budget")
    };
    CriterionResult {
        id,
        name: name.to_string(),
        pass,
        detail,
        metrics,
        seconds,
        budget,
    }
}

/// Run the given criteria (all when empty) in order.
pub fn run_all(ids: &[u8]) -> Vec<CriterionResult> {
    let all: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
    let ids = if ids.is_empty() { &all[..] } else { ids };
    ids.iter().map(|&i| run(i)).collect()
}

struct Outcome {
    pass: bool,
    detail: String,
    metrics: serde_json::Value,
}

// ---- fixtures ----

type Fixture = Arc<(CoefficientField, SolutionField)>;

fn cache() -> &'static Mutex<HashMap<String, Fixture>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Fixture>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: String, make: impl FnOnce() -> Result<(CoefficientField, SolutionField)>) -> Result<Fixture> {
    let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(f) = map.get(&key) {
        return Ok(f.clone());
    }
    let f = Arc::new(make()?);
    map.insert(key, f.clone());
    Ok(f)
}

/// PSOR solution of the Dirichlet problem with trace `data`.
fn solve_fixture(grid: Grid, coeffs: CoefficientField, data: &Profile, par: Parallelism) -> Result<(CoefficientField, SolutionField)> {
    let d = data.sample_with(&grid, par);
    let p = assemble(&grid, &coeffs, &d, Obstacle::Zero)?;
    let cfg = PsorConfig {
        parallelism: par,
        ..PsorConfig::default()
    };
    let s = solve_psor(&p, &cfg)?;
    Ok((coeffs, s))
}

const MODEL_H: f64 = 1.0 / 512.0;

fn model_fixture() -> Result<Fixture> {
    cached("model".into(), || {
        let g = Grid::new(1, MODEL_H)?;
        solve_fixture(g, CoefficientField::identity(g), &Profile::h32(1), Parallelism::Sequential)
    })
}

fn generated_fixture(n: usize, h: f64, alpha: f64, delta0: f64, seed: u64, data: &Profile) -> Result<Fixture> {
    let key = format!("gen n{n} h{h} a{alpha} d{delta0} s{seed} {data:?}");
    cached(key, || {
        let g = Grid::new(n, h)?;
        let c = generate_field(alpha, delta0, seed, &g)?;
        solve_fixture(g, c, data, Parallelism::auto())
    })
}

/// The `Γ` point closest to the origin, moved to the sub-cell position that
/// best matches a cone (only for `n = 1`).
fn central_gamma_point(s: &SolutionField) -> Result<Point> {
    let fb = extract(s, Tolerances::default_for(s)?)?;
    let x0 = fb
        .points
        .iter()
        .copied()
        .min_by(|a, b| norm(a).total_cmp(&norm(b)))
        .ok_or_else(|| Error::Degenerate("no free boundary point".into()))?;
    let h = s.w.grid().h();
    if s.w.grid().n() == 1 {
        localize_on_cone(&s.w, &x0, &[1.0], 2.0 * h, MIN_RADIUS_CELLS * h)
    } else {
        Ok(x0)
    }
}

fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

// ---- criteria ----

fn c1_model() -> Result<Outcome> {
    let start = Instant::now();
    let f = model_fixture()?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let g = *f.1.w.grid();
    let exact = Profile::h32(1).sample(&g);
    let err = f.1.w.zip_map(&exact, |a, b| a - b)?.max_abs();
    let rel = err / exact.max_abs();
    Ok(Outcome {
        pass: rel <= 0.02,
        detail: format!(
            "max error {:.3e} = {:.4} of sup|h32| (limit 0.02), solved single-threaded in {:.1} s",
            err, rel, solve_seconds
        ),
        metrics: json!({ "max_error": err, "relative": rel, "iterations": f.1.stats.iterations, "solve_seconds": solve_seconds }),
    })
}

const GROWTH_WINDOW: (f64, f64) = (1.0 / 64.0, 0.25);

fn c2_growth() -> Result<Outcome> {
    let model = model_fixture()?;
    let gen = generated_fixture(1, MODEL_H, 0.75, 0.05, 1, &Profile::h32(1))?;
    let mut rates = Vec::new();
    for f in [&model, &gen] {
        let x0 = central_gamma_point(&f.1)?;
        let fit = fit_growth_exponent(&f.1.w, &x0, GROWTH_WINDOW)?;
        rates.push((x0[0], fit.rate.unwrap_or(f64::NAN)));
    }
    let pass = rates.iter().all(|r| (1.40..=1.65).contains(&r.1));
    Ok(Outcome {
        pass,
        detail: format!(
            "kappa_hat model {:.4} at x1={:.2e}, generated {:.4} at x1={:.2e} (need [1.40, 1.65])",
            rates[0].1, rates[0].0, rates[1].1, rates[1].0
        ),
        metrics: json!({ "model": rates[0].1, "generated": rates[1].1 }),
    })
}

fn c3_sub_half() -> Result<Outcome> {
    let alpha = 0.3;
    let f = generated_fixture(1, MODEL_H, alpha, 0.2, 3, &Profile::h32(1))?;
    let x0 = central_gamma_point(&f.1)?;
    let fit = fit_growth_exponent(&f.1.w, &x0, GROWTH_WINDOW)?;
    let k = fit.rate.unwrap_or(f64::NAN);
    Ok(Outcome {
        pass: k >= 1.0 + alpha - 0.1,
        detail: format!("kappa_hat {:.4} at x1={:.2e} (need >= {:.2})", k, x0[0], 1.0 + alpha - 0.1),
        metrics: json!({ "kappa_hat": k, "x0": x0[0] }),
    })
}

fn c4_log() -> Result<Outcome> {
    let g = Grid::new(1, 1.0 / 1024.0)?;
    let w = Profile::Log.sample(&g);
    let probe = FieldProbe::values_only(&w);
    let radii = crate::analysis::ladder_in_window(g.h(), 1.0 / 128.0, 0.25);
    let norms = radii
        .iter()
        .map(|r| probe.norm(Region::sphere([0.0; 3], *r), NormConvention::Mean))
        .collect::<Result<Vec<_>>>()?;
    let lr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ln: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    // Residuals of the one-parameter models log N = log C + log(model(r)).
    let rms_const = |y: Vec<f64>| {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
    };
    let power = rms_const(ln.iter().zip(&lr).map(|(a, b)| a - 1.5 * b).collect());
    let log = rms_const(
        ln.iter()
            .zip(&lr)
            .map(|(a, b)| a - 1.5 * b - b.abs().ln())
            .collect(),
    );
    let slope = linear_fit(&lr, &ln)?.slope;
    let ratio = power / log.max(f64::MIN_POSITIVE);
    Ok(Outcome {
        pass: ratio >= 3.0 && slope < 1.45,
        detail: format!(
            "residual ratio power/log {:.3e} (need >= 3), free power slope {:.4} (need < 1.45)",
            ratio, slope
        ),
        metrics: json!({ "residual_power": power, "residual_log": log, "ratio": ratio, "slope": slope }),
    })
}

fn c5_weiss_identity() -> Result<Outcome> {
    let g = Grid::new(1, 1.0 / 256.0)?;
    let c = CoefficientField::identity(g);
    let f = solve_fixture(g, c, &Profile::h32(1), Parallelism::auto())?;
    let w = &f.1.w;
    let h = g.h();
    let centers: [Point; 5] = [
        [0.0; 3],
        [0.125, 0.0, 0.0],
        [-0.25, 0.0, 0.0],
        [0.0, 0.125, 0.0],
        [0.25, -0.125, 0.0],
    ];
    let radii = [16.0 * h, 32.0 * h, 64.0 * h, 0.25 + 16.0 * h];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for x0 in &centers {
        for r in radii {
            let d = weiss_rescaling_check(w, x0, r)?;
            worst = worst.max(d.defect / (1.0 + d.original.abs()));
            count += 1;
        }
    }
    let cone = Profile::h32(1).sample(&g);
    let mut cone_ratio: f64 = 0.0;
    for r in radius_ladder(h) {
        let v = weiss_parts(&cone, &[0.0; 3], r, DEFAULT_KAPPA)?;
        cone_ratio = cone_ratio.max(v.value.abs() / v.dirichlet);
    }
    Ok(Outcome {
        pass: worst <= 1e-3 && cone_ratio <= 1e-3 && count == 20,
        detail: format!(
            "worst rescaling defect {:.2e} over {} pairs, worst |W(cone)|/Dirichlet {:.2e} (limits 1e-3)",
            worst, count, cone_ratio
        ),
        metrics: json!({ "rescaling_defect": worst, "pairs": count, "cone_ratio": cone_ratio }),
    })
}

fn c6_dominance() -> Result<Outcome> {
    let g = Grid::new(1, 1.0 / 128.0)?;
    let x0 = [0.0; 3];
    let r = 0.25;
    let mut worst = f64::NEG_INFINITY;
    for j in 0..10 {
        let t = j as f64 / 9.0;
        let data = GridField::from_fn(g, |p| {
            let side = if j % 2 == 0 { 1.0 } else { -1.0 };
            (0.5 + t) * ConeProfile::unit_value(&[side], p) + 0.3 * (t - 0.5) * p[0]
                - 0.2 * t * p[1].abs()
                + 0.1 * (p[0] * p[0] - p[1] * p[1])
                + 0.05 * j as f64
        });
        let p = assemble(&g, &CoefficientField::identity(g), &data, Obstacle::Zero)?;
        let s = solve_psor(&p, &PsorConfig::default())?;
        let base = weiss_parts(&s.w, &x0, r, DEFAULT_KAPPA)?.value;
        for k in 0..10 {
            let c = 0.25 + 0.25 * k as f64;
            let xi = if k % 2 == 0 { 1.0 } else { -1.0 };
            let diff = s.w.minus_fn(|q| c * ConeProfile::unit_value(&[xi], q));
            let v = weiss_parts(&diff, &x0, r, DEFAULT_KAPPA)?.value;
            worst = worst.max(v - base);
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-3,
        detail: format!("max W(r, w-p) - W(r, w) = {:.3e} over 100 pairs (limit 1e-3)", worst),
        metrics: json!({ "worst_excess": worst }),
    })
}

fn c7_weiss_decay() -> Result<Outcome> {
    let delta0 = 0.05;
    let mut per_seed = Vec::new();
    let mut pass = true;
    let mut fitted = 0;
    let mut worst_rel: f64 = 0.0;
    for seed in 1..=5u64 {
        let f = generated_fixture(1, MODEL_H, 0.75, delta0, seed, &Profile::h32(1))?;
        let x0 = central_gamma_point(&f.1)?;
        let w = &f.1.w;
        let radii: Vec<f64> = radius_ladder(w.grid().h())
            .into_iter()
            .filter(|r| w.grid().contains_ball(&x0, *r))
            .collect();
        let a0 = crate::analysis::project_linear(w, &x0, radii[0])?.a0;
        let wt = subtract_linear(w, &x0, a0);
        let prof = weiss_profile(&wt, &x0, DEFAULT_KAPPA, &radii, Parallelism::auto())?;
        let pairs = prof.pairs();
        worst_rel = prof
            .samples
            .iter()
            .map(|v| v.value.abs() / v.dirichlet)
            .fold(worst_rel, f64::max);
        let fit = fit_weiss_decay(&prof);
        let (r1, w1) = *pairs.last().expect("nonempty ladder");
        // Without a fitted rate the bound is checked for every rate in [0, 2].
        let betas: Vec<f64> = match fit.rate {
            Some(b) => vec![b],
            None => (0..=20).map(|k| 0.1 * k as f64).collect(),
        };
        let slack = betas
            .iter()
            .flat_map(|b| {
                pairs
                    .iter()
                    .map(move |(r, v)| (r / r1).powf(b / 2.0) * w1 + 10.0 * delta0 * r.powf(b / 2.0) - v)
            })
            .fold(f64::INFINITY, f64::min);
        let ok = fit.rate.is_none_or(|b| b > 0.0) && slack >= 0.0;
        pass &= ok;
        fitted += usize::from(fit.rate.is_some());
        per_seed.push(json!({ "seed": seed, "beta": fit.rate, "residual": fit.residual, "note": fit.note, "min_slack": slack, "weiss": pairs, "ok": ok }));
    }
    let betas: Vec<String> = per_seed
        .iter()
        .map(|e| e["beta"].as_f64().map_or("n/a".into(), |b| format!("{b:.3}")))
        .collect();
    Ok(Outcome {
        pass,
        detail: format!(
            "beta_hat per seed [{}]; {} of 5 seeds have W > 0 on the whole ladder (max |W|/Dirichlet {:.1e}); pointwise bound holds: {}",
            betas.join(", "),
            fitted,
            worst_rel,
            per_seed.iter().all(|e| e["min_slack"].as_f64().is_some_and(|s| s >= 0.0))
        ),
        metrics: json!({ "seeds": per_seed, "max_relative_weiss": worst_rel }),
    })
}

fn c8_epi() -> Result<Outcome> {
    let g = Grid::new(1, 1.0 / 128.0)?;
    let mut kappas = Vec::new();
    let mut never_exceeds = true;
    for t in perturbed_cone_family(1, 10) {
        let rep = epiperimetric_check(&t, &g, Parallelism::auto())?;
        never_exceeds &= rep.w_minimized <= rep.w_extension;
        kappas.push(rep.kappa_hat.unwrap_or(f64::NAN));
    }
    let min = kappas.iter().copied().fold(f64::INFINITY, f64::min);
    let all_pos = kappas.iter().all(|k| *k > 0.0);
    Ok(Outcome {
        pass: all_pos && min >= 0.01 && never_exceeds,
        detail: format!(
            "min kappa_hat {:.4} over 10 traces (need >= 0.01), W(1,u*) <= W(1,c~) always: {}",
            min, never_exceeds
        ),
        metrics: json!({ "kappa_hat": kappas, "min": min }),
    })
}

fn c9_spectrum() -> Result<Outcome> {
    let k = eigen_slit_spectrum(6)?;
    let expected = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let err = k
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: err <= 1e-3,
        detail: format!("max deviation {:.2e} from (0.5, 1, ..., 3) (limit 1e-3)", err),
        metrics: json!({ "homogeneities": k, "max_error": err }),
    })
}

/// Smallest radius (in cells) of the cone-decay ladder. Below it the
/// discretization floor of `d(r)`, about `0.03 (h/r)^2` on the model problem,
/// is comparable to the coefficient-induced deviation.
const CONE_LADDER_CELLS: f64 = 32.0;

fn c10_cone_decay() -> Result<Outcome> {
    let mut pass = true;
    let mut seeds = Vec::new();
    let mut summary = Vec::new();
    for seed in 1..=5u64 {
        let f = generated_fixture(1, MODEL_H, 0.75, 0.05, seed, &Profile::h32(1))?;
        let x0 = central_gamma_point(&f.1)?;
        let h = f.1.w.grid().h();
        let radii: Vec<f64> = radius_ladder(h)
            .into_iter()
            .filter(|r| *r >= CONE_LADDER_CELLS * h * (1.0 - 1e-12))
            .collect();
        let rep = cone_decay_ladder_on(&f.1.w, &x0, &radii)?;
        let eps0 = rep.fit.rate.unwrap_or(f64::NAN);
        let worst = rep.worst_increase();
        let ok = eps0 > 0.0 && worst <= 1.1 && rep.nondegeneracy < 0.1;
        // The criterion is stated for the growth setup (seed 1); the other
        // seeds are reported alongside.
        if seed == 1 {
            pass = ok;
        }
        summary.push(format!("seed {seed}: eps0 {eps0:.3}, step {worst:.3}, nd {:.1e}", rep.nondegeneracy));
        seeds.push(json!({ "seed": seed, "x0": x0[0], "eps0": eps0, "worst_increase": worst, "nondegeneracy": rep.nondegeneracy, "d": rep.fit.samples, "ok": ok }));
    }
    Ok(Outcome {
        pass,
        detail: format!(
            "{} (need eps0 > 0, step ratio <= 1.1, nd < 0.1 on seed 1; {}/5 seeds meet it)",
            summary.join("; "),
            seeds.iter().filter(|s| s["ok"] == true).count()
        ),
        metrics: json!({ "seeds": seeds }),
    })
}

fn c11_free_boundary() -> Result<Outcome> {
    let psi: f64 = 0.3;
    let data = Profile::Cone(ConeProfile::from_angle(1.0, psi));
    let f = generated_fixture(2, 1.0 / 64.0, 0.75, 0.02, 11, &data)?;
    let s = &f.1;
    let fb = extract(s, Tolerances::default_for(s)?)?;
    let opts = ClassifyOptions {
        window: (0.0, 0.25),
        max_points: Some(24),
        parallelism: Parallelism::auto(),
    };
    let rep = classify_regular(&s.w, &fb, 0.75, opts)?;
    let classified = rep.classified().count();
    let regular = rep.classified().filter(|p| p.regular == Some(true)).count();
    let fit = normal_regularity(&fb, NORMAL_WINDOW)?;
    let gamma = fit.rate.unwrap_or(f64::NAN);
    let resid = fit.residual.unwrap_or(f64::NAN);
    let single = fb.chains.len() == 1;
    Ok(Outcome {
        pass: single && classified > 0 && regular == classified && gamma > 0.0 && resid <= 0.2,
        detail: format!(
            "{} polyline(s) with {} points, {}/{} sampled points regular, gamma_hat {:.3} residual {:.3}{}",
            fb.chains.len(),
            fb.points.len(),
            regular,
            classified,
            gamma,
            resid,
            fit.note.map(|n| format!(" ({n})")).unwrap_or_default()
        ),
        metrics: json!({ "chains": fb.chains.len(), "points": fb.points.len(), "classified": classified, "regular": regular, "gamma": gamma, "residual": resid, "solver_iterations": s.stats.iterations }),
    })
}

fn c12_penalty() -> Result<Outcome> {
    let g = Grid::new(1, 1.0 / 128.0)?;
    let data = Profile::h32(1).sample(&g);
    let p = assemble(&g, &CoefficientField::identity(g), &data, Obstacle::Zero)?;
    let reference = solve_psor(&p, &PsorConfig::default())?.w;
    let mut errs = Vec::new();
    let mut init: Option<GridField> = None;
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let mut cfg = PenaltyConfig::new(eps);
        cfg.initial = init.take();
        let s = solve_penalized(&p, &cfg)?;
        let err = (0..g.plane_len())
            .map(|k| {
                let i = g.plane_node(k);
                (s.w.values()[i] - reference.values()[i]).abs()
            })
            .fold(0.0, f64::max);
        errs.push((eps, err));
        init = Some(s.w);
    }
    let monotone = errs.windows(2).all(|p| p[1].1 < p[0].1);
    let (eps, last) = errs[errs.len() - 1];
    Ok(Outcome {
        pass: monotone && last <= 10.0 * eps,
        detail: format!(
            "plane errors [{}], monotone {}, last/eps {:.3} (need <= 10)",
            errs.iter().map(|e| format!("{:.2e}", e.1)).collect::<Vec<_>>().join(", "),
            monotone,
            last / eps
        ),
        metrics: json!({ "errors": errs }),
    })
}

/// Slope of a power law through `(r, v)` samples; used by callers that need
/// a quick check outside the fits.
pub fn power_slope(samples: &[(f64, f64)]) -> Result<f64> {
    let r: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let v: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(loglog_fit(&r, &v)?.slope)
}
