//! One test per acceptance criterion; each prints a PASS/FAIL line.
//! For ordered output run `cargo test -p evoshift --test acceptance -- --nocapture --test-threads 1`.

use std::io::Write;

use evoshift::acceptance::criterion;

// Written to the raw stderr handle so the line shows up even with output capture on.
fn check(id: usize) {
    let o = criterion(id);
    let _ = writeln!(std::io::stderr(), "{}", o.line());
    assert!(o.passed, "{}", o.line());
}

#[test]
fn ac01_harmonic_eigenvalue() {
    check(1);
}

#[test]
fn ac02_shift_identity() {
    check(2);
}

#[test]
fn ac03_periodic_total_population() {
    check(3);
}

#[test]
fn ac04_extinction_above_critical_speed() {
    check(4);
}

#[test]
fn ac05_concentration_at_lag_trait() {
    check(5);
}

#[test]
fn ac06_rho_bar_expansion() {
    check(6);
}

#[test]
fn ac07_rho_bar_equals_minus_lambda() {
    check(7);
}

#[test]
fn ac08_variance_and_mean_oscillation() {
    check(8);
}

#[test]
fn ac09_case_orderings() {
    check(9);
}

#[test]
fn ac10_explicit_psi_residual() {
    check(10);
}

#[test]
fn ac11_discretization_order() {
    check(11);
}
