//! The twelve acceptance criteria, one test each. Every test writes its
//! pass/fail line to stderr, past the harness's output capture.

use std::io::Write;

use thinfb::verify;

fn check(id: u8) {
    let r = verify::run(id);
    let _ = writeln!(std::io::stderr(), "{}", r.line());
    assert!(r.pass, "{}", r.line());
}

#[test]
fn c01_model_solution_reproduction() {
    check(1);
}

#[test]
fn c02_optimal_growth_exponent() {
    check(2);
}

#[test]
fn c03_sub_half_holder_regime() {
    check(3);
}

#[test]
fn c04_logarithmic_borderline() {
    check(4);
}

#[test]
fn c05_weiss_rescaling_and_sign() {
    check(5);
}

#[test]
fn c06_projection_dominance() {
    check(6);
}

#[test]
fn c07_weiss_decay() {
    check(7);
}

#[test]
fn c08_epiperimetric_constant() {
    check(8);
}

#[test]
fn c09_slit_spectrum() {
    check(9);
}

#[test]
fn c10_cone_decay_ladder() {
    check(10);
}

#[test]
fn c11_free_boundary_regularity() {
    check(11);
}

#[test]
fn c12_penalization_convergence() {
    check(12);
}
