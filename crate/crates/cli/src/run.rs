//! The subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thinfb::analysis::{
    blowup, cone_decay_ladder_on, epiperimetric_check, fit_growth_exponent, fit_weiss_decay, frequency,
    ladder_in_window, perturbed_cone_family, project_linear, radius_ladder, subtract_linear, weiss_profile,
    BlowupMode, DEFAULT_KAPPA,
};
use thinfb::coefficients::{check_condition_n, generate_field, CoefficientField};
use thinfb::freeboundary::{
    classify_regular, extract, gamma_csv, normal_regularity, ClassifyOptions, FreeBoundary, Tolerances, NORMAL_WINDOW,
};
use thinfb::profiles::{ConeProfile, EigenProfile, Profile};
use thinfb::solver::{
    assemble, solve_penalized, solve_psor, Obstacle, PenaltyConfig, PsorConfig, Relaxation, SolutionField,
};
use thinfb::{snapshot, verify, Grid, GridField, Parallelism, Point};

use crate::args::*;
use crate::output::Output;
use crate::CliError;

const DEFAULT_OUT: &str = "thinfb-out";
const DEFAULT_H: f64 = 1.0 / 128.0;

pub fn dispatch(cli: &Cli, out_dir: &mut Option<PathBuf>) -> Result<u8, CliError> {
    let config = match &cli.config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    let cfg = config.as_ref();
    match &cli.command {
        Command::GenCoeffs(a) => {
            let (a, v) = resolve(a, cfg, "gen_coeffs")?;
            let mut out = open(&a.output, out_dir)?;
            gen_coeffs(&a, &mut out)?;
            finish(out, "gen-coeffs", v)
        }
        Command::Solve(a) => {
            let (a, v) = resolve(a, cfg, "solve")?;
            let mut out = open(&a.output, out_dir)?;
            solve_cmd(&a, &mut out)?;
            finish(out, "solve", v)
        }
        Command::Analyze { what } => {
            let (kind, a) = what.split();
            let (a, v) = resolve(a, cfg, "analyze")?;
            let mut out = open(&a.output, out_dir)?;
            analyze(kind, &a, &mut out)?;
            finish(out, &format!("analyze {}", analyze_name(kind)), v)
        }
        Command::Epi(a) => {
            let (a, v) = resolve(a, cfg, "epi")?;
            let mut out = open(&a.output, out_dir)?;
            epi(&a, &mut out)?;
            finish(out, "epi", v)
        }
        Command::Fb { what } => {
            let (kind, a) = what.split();
            let (a, v) = resolve(a, cfg, "fb")?;
            let mut out = open(&a.output, out_dir)?;
            fb(kind, &a, &mut out)?;
            finish(out, &format!("fb {}", fb_name(kind)), v)
        }
        Command::Verify(a) => {
            let (a, v) = resolve(a, cfg, "verify")?;
            let mut out = open(&a.output, out_dir)?;
            let failed = verify_cmd(&a, &mut out)?;
            finish(out, "verify", v)?;
            if failed > 0 {
                return Err(CliError::numerical("acceptance", format!("{failed} criteria failed")));
            }
            Ok(0)
        }
    }
}

fn load_config(path: &Path) -> Result<toml::Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn open(o: &OutputArgs, out_dir: &mut Option<PathBuf>) -> Result<Output, CliError> {
    let dir = o.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    *out_dir = Some(dir.clone());
    Output::create(&dir)
}

fn finish(out: Output, command: &str, config: Value) -> Result<u8, CliError> {
    let p = out.finish(command, &config)?;
    println!("manifest: {}", p.display());
    Ok(0)
}

fn analyze_name(k: AnalyzeKind) -> &'static str {
    match k {
        AnalyzeKind::Weiss => "weiss",
        AnalyzeKind::Growth => "growth",
        AnalyzeKind::Cone => "cone",
        AnalyzeKind::Blowup => "blowup",
        AnalyzeKind::Frequency => "frequency",
    }
}

fn fb_name(k: FbKind) -> &'static str {
    match k {
        FbKind::Extract => "extract",
        FbKind::Classify => "classify",
        FbKind::Normals => "normals",
    }
}

fn parallelism(o: &OutputArgs) -> Parallelism {
    if o.sequential.unwrap_or(false) {
        Parallelism::Sequential
    } else {
        Parallelism::auto()
    }
}

// ---- problem setup ----

fn grid(g: &GridArgs) -> Result<Grid, CliError> {
    Ok(Grid::new(g.n.unwrap_or(1), g.h.map_or(DEFAULT_H, |h| h.0))?)
}

fn coefficients(a: &CoeffArgs, grid: Grid) -> Result<CoefficientField, CliError> {
    let kind = a.coeffs.unwrap_or(if a.coeffs_path.is_some() {
        CoeffKind::File
    } else {
        CoeffKind::Identity
    });
    match kind {
        CoeffKind::Identity => Ok(CoefficientField::identity(grid)),
        CoeffKind::Generated => Ok(generate_field(
            a.alpha.map_or(0.75, |x| x.0),
            a.delta0.map_or(0.05, |x| x.0),
            a.seed.unwrap_or(0),
            &grid,
        )?),
        CoeffKind::File => {
            let path = a
                .coeffs_path
                .as_ref()
                .ok_or_else(|| CliError::usage("--coeffs file needs --coeffs-path"))?;
            let c = CoefficientField::read_bundle(path)?;
            if *c.grid() != grid {
                return Err(CliError::precondition(
                    "grid",
                    format!("bundle {} was generated on a different grid", path.display()),
                ));
            }
            Ok(c)
        }
    }
}

fn profile(d: &DataArgs, n: usize) -> Result<Profile, CliError> {
    let c = d.c.map_or(1.0, |x| x.0);
    Ok(match d.profile.unwrap_or(ProfileKind::H32) {
        ProfileKind::H32 => Profile::h32(n),
        ProfileKind::Cone => {
            let cone = match (&d.xi, d.psi) {
                (Some(xi), _) => ConeProfile::new(c, xi.0.clone())?,
                (None, Some(psi)) if n == 2 => ConeProfile::from_angle(c, psi.0),
                (None, Some(_)) => return Err(CliError::usage("--psi needs --n 2")),
                (None, None) => ConeProfile::new(c, ConeProfile::h32(n).xi)?,
            };
            if cone.n() != n {
                return Err(CliError::usage(format!("cone direction must have {n} components")));
            }
            Profile::Cone(cone)
        }
        ProfileKind::Linear => Profile::linear(d.a0.map_or(1.0, |x| x.0)),
        ProfileKind::Log => Profile::Log,
        ProfileKind::Eigen => Profile::Eigen(EigenProfile::new(d.k.unwrap_or(3))?),
    })
}

fn read_field(stem: &Path, grid: Grid) -> Result<GridField, CliError> {
    let (f, _) = snapshot::read(stem)?;
    if *f.grid() != grid {
        return Err(CliError::precondition(
            "grid",
            format!("snapshot {} is on a different grid", stem.display()),
        ));
    }
    Ok(f)
}

fn boundary_data(d: &DataArgs, grid: Grid, par: Parallelism) -> Result<GridField, CliError> {
    match &d.data_file {
        Some(stem) => read_field(stem, grid),
        None => Ok(profile(d, grid.n())?.sample_with(&grid, par)),
    }
}

fn solve_problem(p: &ProblemArgs, par: Parallelism, initial: Option<GridField>) -> Result<SolutionField, CliError> {
    let g = grid(&p.grid)?;
    let coeffs = coefficients(&p.coeffs, g)?;
    let data = boundary_data(&p.data, g, par)?;
    let problem = assemble(&g, &coeffs, &data, Obstacle::Zero)?;
    let s = &p.solver;
    let solution = match s.method.unwrap_or(Method::Psor) {
        Method::Psor => {
            let mut cfg = PsorConfig {
                nested: !s.no_nested.unwrap_or(false),
                max_iters: s.max_iters,
                parallelism: par,
                initial,
                ..PsorConfig::default()
            };
            if let Some(t) = s.tol {
                cfg.tol = t.0;
            }
            if let Some(w) = s.omega {
                cfg.relaxation = Relaxation::Fixed(w.0);
            }
            solve_psor(&problem, &cfg)?
        }
        Method::Penalty => {
            let mut cfg = PenaltyConfig::new(s.eps.map_or(1e-3, |e| e.0));
            cfg.parallelism = par;
            cfg.initial = initial;
            if let Some(m) = s.max_iters {
                cfg.max_newton = m;
            }
            solve_penalized(&problem, &cfg)?
        }
    };
    Ok(solution)
}

/// The field to analyze: a stored solution or a fresh solve.
fn solution_field(p: &ProblemArgs, par: Parallelism) -> Result<GridField, CliError> {
    match &p.solver.solution {
        Some(stem) => Ok(snapshot::read(stem)?.0),
        None => Ok(solve_problem(p, par, None)?.w),
    }
}

fn center(at: &Option<NumList>, n: usize) -> Result<Point, CliError> {
    let Some(at) = at else {
        return Ok([0.0; 3]);
    };
    if at.0.len() != n && at.0.len() != n + 1 {
        return Err(CliError::usage(format!(
            "--at needs {n} or {} coordinates, got {}",
            n + 1,
            at.0.len()
        )));
    }
    let mut p = [0.0; 3];
    p[..at.0.len()].copy_from_slice(&at.0);
    Ok(p)
}

fn radii(w: &GridField, x0: &Point, window: Option<Window>) -> Vec<f64> {
    let h = w.grid().h();
    let all = match window {
        Some(Window(lo, hi)) => ladder_in_window(h, lo, hi),
        None => radius_ladder(h),
    };
    all.into_iter().filter(|r| w.grid().contains_ball(x0, *r)).collect()
}

// ---- commands ----

fn gen_coeffs(a: &GenCoeffsArgs, out: &mut Output) -> Result<(), CliError> {
    let g = grid(&a.grid)?;
    let c = generate_field(
        a.alpha.map_or(0.75, |x| x.0),
        a.delta0.map_or(0.05, |x| x.0),
        a.seed.unwrap_or(0),
        &g,
    )?;
    c.write_bundle(&out.path("coefficients"))?;
    out.record_dir("coefficients")?;
    let report = json!({
        "bundle": c.manifest(),
        "seminorm_estimate": c.seminorm_estimate(),
        "condition_n": check_condition_n(&c),
    });
    out.json("coefficients.json", &report)?;
    let (lambda, big) = c.ellipticity();
    println!(
        "coefficients: alpha {} delta0 {} seed {} ellipticity [{lambda:.6}, {big:.6}] -> {}",
        c.alpha(),
        c.delta0(),
        c.seed().unwrap_or(0),
        out.path("coefficients").display()
    );
    Ok(())
}

fn solve_cmd(a: &SolveArgs, out: &mut Output) -> Result<(), CliError> {
    let par = parallelism(&a.output);
    let g = grid(&a.problem.grid)?;
    let initial = match &a.problem.solver.solution {
        Some(stem) => Some(read_field(stem, g)?),
        None => None,
    };
    let s = solve_problem(&a.problem, par, initial)?;
    out.snapshot("solution", &s.w, "thin obstacle solution")?;
    let stats = json!({
        "stats": s.stats,
        "contact_nodes": s.contact.iter().filter(|c| **c).count(),
        "noncontact_nodes": s.noncontact.iter().filter(|c| **c).count(),
        "complementarity_defect": s.complementarity_defect(),
    });
    out.json("stats.json", &stats)?;
    println!(
        "solved: {} iterations, converged {}, {:.2} s",
        s.stats.iterations, s.stats.converged, s.stats.seconds
    );
    Ok(())
}

fn analyze(kind: AnalyzeKind, a: &AnalyzeArgs, out: &mut Output) -> Result<(), CliError> {
    let par = parallelism(&a.output);
    let w = solution_field(&a.problem, par)?;
    let n = w.grid().n();
    let x0 = center(&a.at, n)?;
    let on_plane = x0[n] == 0.0;
    match kind {
        AnalyzeKind::Weiss => {
            let kappa = a.kappa.map_or(DEFAULT_KAPPA, |k| k.0);
            let rs = radii(&w, &x0, a.window);
            let first = *rs.first().ok_or_else(|| no_radii(&w))?;
            let a0 = if on_plane { project_linear(&w, &x0, first)?.a0 } else { 0.0 };
            let profile = weiss_profile(&subtract_linear(&w, &x0, a0), &x0, kappa, &rs, par)?;
            let fit = fit_weiss_decay(&profile);
            out.ladder("weiss.csv", "value", &profile.pairs())?;
            out.json("weiss.json", &json!({ "a0": a0, "profile": profile, "fit": fit }))?;
            println!("beta_hat: {}", show(fit.rate));
        }
        AnalyzeKind::Growth => {
            let w0 = a.window.unwrap_or(Window(0.0, 0.25));
            let fit = fit_growth_exponent(&w, &x0, (w0.0, w0.1))?;
            out.ladder("growth.csv", "value", &fit.samples)?;
            out.json("growth.json", &fit)?;
            println!("kappa_hat: {}", show(fit.rate));
        }
        AnalyzeKind::Cone => {
            let rs = radii(&w, &x0, a.window);
            let rep = cone_decay_ladder_on(&w, &x0, &rs)?;
            out.ladder("cone.csv", "value", &rep.fit.samples)?;
            out.json("cone.json", &rep)?;
            println!(
                "eps0_hat: {}, worst step ratio {:.4}, nondegeneracy {:.4e}",
                show(rep.fit.rate),
                rep.worst_increase(),
                rep.nondegeneracy
            );
        }
        AnalyzeKind::Blowup => {
            let r = a.r.map_or(0.25, |r| r.0);
            let mode = match a.mode.unwrap_or(Mode::Homogeneous) {
                Mode::Homogeneous => BlowupMode::Homogeneous,
                Mode::Normalized => BlowupMode::NormNormalized,
            };
            let b = blowup(&w, &x0, r, mode)?;
            out.snapshot("blowup", &b, &format!("blow-up at {:?} with r = {r}", &x0[..=n]))?;
            let report = json!({
                "center": x0,
                "r": r,
                "mode": mode,
                "h": b.grid().h(),
                "max_abs": b.max_abs(),
            });
            out.json("blowup.json", &report)?;
            println!("blow-up: spacing {:.4e}, max |value| {:.6e}", b.grid().h(), b.max_abs());
        }
        AnalyzeKind::Frequency => {
            let rs = radii(&w, &x0, a.window);
            let rows = rs
                .iter()
                .map(|r| frequency(&w, &x0, *r).map(|v| (*r, v)))
                .collect::<Result<Vec<_>, _>>()?;
            out.ladder("frequency.csv", "value", &rows)?;
            out.json("frequency.json", &json!({ "center": x0, "samples": rows }))?;
            if let Some((r, v)) = rows.first() {
                println!("frequency at r = {r:.4e}: {v:.6}");
            }
        }
    }
    Ok(())
}

fn no_radii(w: &GridField) -> CliError {
    let h = w.grid().h();
    CliError::precondition("resolution", format!("no admissible radius on spacing {h}"))
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "not applicable".to_string(), |x| format!("{x:.6}"))
}

fn epi(a: &EpiArgs, out: &mut Output) -> Result<(), CliError> {
    let par = parallelism(&a.output);
    let g = grid(&a.grid)?;
    let count = a.count.unwrap_or(10);
    let Family::PerturbedCone = a.family.unwrap_or(Family::PerturbedCone);
    let reports = perturbed_cone_family(g.n(), count)
        .iter()
        .map(|t| epiperimetric_check(t, &g, par))
        .collect::<Result<Vec<_>, _>>()?;
    let min = reports
        .iter()
        .filter_map(|r| r.kappa_hat)
        .fold(None, |m: Option<f64>, k| Some(m.map_or(k, |m| m.min(k))));
    out.json(
        "epi.json",
        &json!({ "family": "perturbed-cone", "count": count, "min_kappa_hat": min, "reports": reports }),
    )?;
    println!("min kappa_hat: {}", show(min));
    Ok(())
}

fn fb(kind: FbKind, a: &FbArgs, out: &mut Output) -> Result<(), CliError> {
    let par = parallelism(&a.output);
    let g = grid(&a.problem.grid)?;
    let initial = match &a.problem.solver.solution {
        Some(stem) => Some(read_field(stem, g)?),
        None => None,
    };
    let s = solve_problem(&a.problem, par, initial)?;
    let tol = Tolerances::default_for(&s)?.scaled(a.tol_scale.map_or(1.0, |t| t.0));
    let boundary = extract(&s, tol)?;
    match kind {
        FbKind::Extract => {
            out.text("gamma.csv", &gamma_csv(&boundary, None))?;
            out.json("fb.json", &json!({ "solver": s.stats, "free_boundary": boundary }))?;
            summary(&boundary);
        }
        FbKind::Classify => {
            let alpha = a.problem.coeffs.alpha.map_or(0.75, |x| x.0);
            let window = a.window.unwrap_or(Window(0.0, 0.25));
            let opts = ClassifyOptions {
                window: (window.0, window.1),
                max_points: a.max_points,
                parallelism: par,
            };
            let rep = classify_regular(&s.w, &boundary, alpha, opts)?;
            out.text("regularity.csv", &gamma_csv(&boundary, Some(&rep)))?;
            out.json("regularity.json", &rep)?;
            summary(&boundary);
            let classified = rep.classified().count();
            let regular = rep.classified().filter(|p| p.regular == Some(true)).count();
            println!("regular points: {regular}/{classified}");
        }
        FbKind::Normals => {
            let fit = normal_regularity(&boundary, a.normal_window.unwrap_or(NORMAL_WINDOW))?;
            out.text("gamma.csv", &gamma_csv(&boundary, None))?;
            out.ladder("normals.csv", "value", &fit.samples)?;
            out.json("normals.json", &fit)?;
            summary(&boundary);
            println!("gamma_hat: {}", show(fit.rate));
        }
    }
    Ok(())
}

fn summary(fb: &FreeBoundary) {
    println!(
        "free boundary: {} points in {} chain(s); contact {}, non-contact {}, ambiguous {}",
        fb.points.len(),
        fb.chains.len(),
        fb.contact_count,
        fb.noncontact_count,
        fb.ambiguous_count
    );
}

/// Returns the number of failed criteria.
fn verify_cmd(a: &VerifyArgs, out: &mut Output) -> Result<usize, CliError> {
    if a.output.sequential.unwrap_or(false) && crate::thread_count() > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|_| CliError::usage("--sequential conflicts with THINFB_THREADS"))?;
    }
    let ids = a.criteria.clone().unwrap_or_default();
    if let Some(bad) = ids.iter().find(|i| !(1..=verify::CRITERIA.len() as u8).contains(i)) {
        return Err(CliError::usage(format!("no criterion {bad}")));
    }
    let mut results = Vec::new();
    for id in if ids.is_empty() {
        verify::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        ids
    } {
        let r = verify::run(id);
        println!("{}", r.line());
        results.push(r);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    out.json("verify.json", &results)?;
    Ok(failed)
}
