//! Built-in acceptance criteria, shared by `evoshift check` and the `acceptance` test target.
//!
//! Unless stated otherwise the reference model is `a(t, x) = 2 - (x - sin 2 pi t)^2`
//! on `[-6, 6]` with 2049 nodes and 512 steps per period.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use evoshift_core::asymptotics::{
    case_comparison, explicit_psi, limit_objects, measure_moments, solve_xbar, taylor_coefficients, CaseComparison,
    HJProfile, XM_WINDOW,
};
use evoshift_core::discretization::{build_grid, Grid1D};
use evoshift_core::floquet::{critical_speed, periodic_quantities, principal_eigenpair_with, FloquetOptions};
use evoshift_core::model::{averaged_rate, quadratic_model, GrowthRateModel, PeriodicSignal, QuadraticRateParams};
use evoshift_core::numerics::diff1;
use evoshift_core::pde_engine::{gaussian_state, simulate, DriftForm, LinearPropagator, SolverConfig, Trajectory, Verdict};

use crate::error::RunError;
use crate::run::{last_increase, solver_case_values};

pub const CRITERIA: usize = 11;

const TITLES: [&str; CRITERIA] = [
    "harmonic eigenvalue oracle",
    "drift shift identity",
    "periodic total population",
    "extinction above critical speed",
    "concentration at the lag trait",
    "first-order expansion of rho_bar",
    "rho_bar equals -lambda",
    "variance and mean oscillation",
    "case orderings",
    "explicit psi residual",
    "discretization order",
];

/// Wall-clock limits in seconds, where a criterion has one.
const TIME_LIMITS: [Option<f64>; CRITERIA] =
    [Some(10.0), Some(60.0), Some(120.0), None, None, None, None, None, None, None, None];

const RADIUS: f64 = 6.0;
const NODES: usize = 2049;
const EPSILONS: [f64; 3] = [0.2, 0.1, 0.05];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "AC{:02} {} {:<34} {} [{:.1} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

/// Runs criterion `id` (1-based).
pub fn criterion(id: usize) -> Outcome {
    assert!((1..=CRITERIA).contains(&id), "criteria are numbered 1..={CRITERIA}");
    let start = Instant::now();
    let result = match id {
        1 => ac01(),
        2 => ac02(),
        3 => ac03(),
        4 => ac04(),
        5 => ac05(),
        6 => ac06(),
        7 => ac07(),
        8 => ac08(),
        9 => ac09(),
        10 => ac10(),
        _ => ac11(),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = TIME_LIMITS[id - 1] {
        if seconds > limit {
            passed = false;
            detail.push_str(&format!("; runtime {seconds:.1} s over {limit} s"));
        }
    }
    Outcome { id, title: TITLES[id - 1], passed, detail, seconds }
}

pub fn run_all() -> Vec<Outcome> {
    (1..=CRITERIA).map(criterion).collect()
}

type Check = Result<(bool, String), RunError>;

fn sine_params() -> QuadraticRateParams {
    QuadraticRateParams::new(
        2.0,
        PeriodicSignal::Constant(1.0),
        PeriodicSignal::expression("sin(2*pi*t)").expect("valid expression"),
        1.0,
    )
    .expect("valid parameters")
}

fn sine_model() -> GrowthRateModel {
    quadratic_model(sine_params()).expect("positive pressure")
}

fn grid() -> Grid1D {
    build_grid(RADIUS, NODES).expect("valid grid")
}

fn ac01() -> Check {
    let p = QuadraticRateParams::new(1.0, PeriodicSignal::Constant(1.0), PeriodicSignal::Constant(0.0), 1.0)?;
    let model = quadratic_model(p)?;
    let eig = principal_eigenpair_with(&model, 0.01, 0.0, &grid(), &FloquetOptions::default(), None)?;
    // Ground state of -0.01 d_xx + x^2 - 1 is -1 + 0.1.
    let err = (eig.lambda + 0.9).abs();
    Ok((err <= 2e-3, format!("lambda = {:.8}, |lambda + 0.9| = {err:.2e} (tol 2e-3)", eig.lambda)))
}

fn ac02() -> Check {
    let model = sine_model();
    let fine = build_grid(RADIUS, 4097)?;
    let opts = FloquetOptions { drift_form: Some(DriftForm::Direct), ..Default::default() };
    let sigma = 0.01;
    let l0 = principal_eigenpair_with(&model, sigma, 0.0, &fine, &opts, None)?.lambda;
    let mut ok = true;
    let mut parts = vec![format!("lambda_0 = {l0:.6}")];
    for ct in [0.1, 0.2] {
        let lc = principal_eigenpair_with(&model, sigma, ct, &fine, &opts, None)?.lambda;
        let gap = (lc - l0 - ct * ct / (4.0 * sigma)).abs();
        ok &= gap <= 1e-3;
        parts.push(format!("c~={ct}: gap {gap:.2e}"));
    }
    parts.push("tol 1e-3, drift kept in the operator".into());
    Ok((ok, parts.join(", ")))
}

fn ac03() -> Check {
    let model = sine_model();
    let g = grid();
    let (sigma, ct) = (0.01, 0.1);
    let config = SolverConfig { max_periods: 100, ..Default::default() };
    let n0 = gaussian_state(&g, 0.0, 0.5, 1.0)?;
    let traj = simulate(&n0, &model, sigma, ct, &g, &config)?;
    let eig = principal_eigenpair_with(&model, sigma, ct, &g, &FloquetOptions::default(), None)?;
    let pq = periodic_quantities(&eig, &model, &g)?;
    let cycle = traj.final_period_rho(config.steps_per_period);
    let gap = cycle.iter().map(|&(t, rho)| (rho - pq.rho_hat_at(t)).abs()).fold(0.0, f64::max);
    let top = cycle.iter().map(|&(t, _)| pq.rho_hat_at(t)).fold(0.0, f64::max);
    Ok((
        gap <= 1e-2 * top,
        format!("{} periods, max |rho - rho_hat| = {gap:.2e} vs 1e-2 max rho_hat = {:.2e}", traj.periods, 1e-2 * top),
    ))
}

fn ac04() -> Check {
    let model = sine_model();
    let g = grid();
    let sigma = 0.01;
    let cs = critical_speed(&model, sigma, &g, &FloquetOptions::default())?;
    let ct = 1.05 * cs.speed;
    let config = SolverConfig { max_periods: 200, ..Default::default() };
    let traj = simulate(&gaussian_state(&g, 0.0, 0.5, 1.0)?, &model, sigma, ct, &g, &config)?;
    let half = traj.boundary_rho.len() / 2;
    let monotone = last_increase(&traj.boundary_rho).is_none_or(|i| i < half);
    Ok((
        traj.verdict == Verdict::Extinct && monotone,
        format!(
            "c~* = {:.6}, c~ = {ct:.6}: {:?} after {} periods, rho decreasing from period {}",
            cs.speed,
            traj.verdict,
            traj.periods,
            last_increase(&traj.boundary_rho).unwrap_or(0)
        ),
    ))
}

/// Converged simulations of the reference model at `sigma = eps^2`, `c_tilde = eps`, shared
/// by several criteria.
struct SineRun {
    grid: Grid1D,
    traj: Trajectory,
}

fn sine_run(k: usize) -> Result<Arc<SineRun>, RunError> {
    static RUNS: [OnceLock<Result<Arc<SineRun>, String>>; 3] = [const { OnceLock::new() }; 3];
    RUNS[k]
        .get_or_init(|| {
            let eps = EPSILONS[k];
            let g = grid();
            let n0 = gaussian_state(&g, 0.0, 0.5, 1.0).map_err(|e| e.to_string())?;
            let traj =
                simulate(&n0, &sine_model(), eps * eps, eps, &g, &SolverConfig::default()).map_err(|e| e.to_string())?;
            Ok(Arc::new(SineRun { grid: g, traj }))
        })
        .clone()
        .map_err(RunError::Scenario)
}

fn ac05() -> Check {
    let model = sine_model();
    let (_, prof, corr) = limit_objects(&model, 1.0, 512, (-RADIUS, RADIUS))?;
    let taylor = taylor_coefficients(&prof)?;
    // Gaussian moment equations give x_bar = theta_bar - c / (2 sqrt(gbar)) = -1/2.
    let x_bar = -0.5;
    let mut errs = Vec::new();
    for k in 0..EPSILONS.len() {
        let run = sine_run(k)?;
        if run.traj.verdict != Verdict::Periodic {
            return Ok((false, format!("eps = {}: no periodic state ({:?})", EPSILONS[k], run.traj.verdict)));
        }
        let rep = measure_moments(&run.traj, &run.grid, EPSILONS[k], &corr, &taylor)?;
        errs.push((rep.mean_average - x_bar).abs());
    }
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let bound = 0.3 * 0.05 / sine_params().gbar.sqrt() + 0.05;
    let within = errs[2] <= bound;
    Ok((
        decreasing && within && (prof.x_bar - x_bar).abs() < 1e-10,
        format!(
            "|<mu> - x_bar| at eps 0.2/0.1/0.05 = {:.2e}/{:.2e}/{:.2e} (must shrink with eps: {}), bound {bound:.3} ({})",
            errs[0],
            errs[1],
            errs[2],
            if decreasing { "yes" } else { "no" },
            if within { "met" } else { "missed" }
        ),
    ))
}

fn ac06() -> Check {
    let model = sine_model();
    let g = grid();
    let avg = averaged_rate(&model, 512, (-RADIUS, RADIUS))?;
    let c = 1.0;
    let lambda2 = (-0.5 * avg.abar_dxx_at_xm).sqrt();
    let mut scaled = Vec::new();
    for eps in [0.1, 0.05] {
        let eig = principal_eigenpair_with(&model, eps * eps, c * eps, &g, &FloquetOptions::default(), None)?;
        let residual = (-eig.lambda - (avg.abar_max - 0.25 * c * c - eps * lambda2)).abs();
        scaled.push(residual / eps);
    }
    let rhs = 0.5 * scaled[0] + 1e-3;
    Ok((
        scaled[1] <= rhs,
        format!("residual/eps = {:.3e} (eps 0.1), {:.3e} (eps 0.05); need <= {rhs:.3e}", scaled[0], scaled[1]),
    ))
}

fn ac07() -> Check {
    let run = sine_run(1)?;
    let eig = principal_eigenpair_with(&sine_model(), 0.01, 0.1, &run.grid, &FloquetOptions::default(), None)?;
    let rho_bar = run
        .traj
        .final_period_average(SolverConfig::default().steps_per_period)
        .ok_or_else(|| RunError::Scenario("simulation too short".into()))?;
    let rel = (rho_bar + eig.lambda).abs() / eig.lambda.abs();
    Ok((rel <= 1e-2, format!("rho_bar = {rho_bar:.8}, -lambda = {:.8}, relative gap {rel:.2e} (tol 1e-2)", -eig.lambda)))
}

fn ac08() -> Check {
    let eps = 0.05;
    let run = sine_run(2)?;
    if run.traj.verdict != Verdict::Periodic {
        return Ok((false, format!("no periodic state ({:?})", run.traj.verdict)));
    }
    let model = sine_model();
    let (_, prof, corr) = limit_objects(&model, 1.0, 512, (-RADIUS, RADIUS))?;
    let target = eps / sine_params().gbar.sqrt();
    let mut var_gap: f64 = 0.0;
    let mut mu_gap: f64 = 0.0;
    for s in &run.traj.final_cycle {
        let (mu, var) = s.moments(&run.grid);
        var_gap = var_gap.max((var - target).abs());
        mu_gap = mu_gap.max((mu - (prof.x_bar + eps * corr.d(s.time))).abs());
    }
    Ok((
        var_gap <= 0.2 * target && mu_gap <= 0.3 * eps,
        format!(
            "max |var - eps/sqrt(gbar)| = {var_gap:.2e} (tol {:.2e}), max |mu - x_bar - eps D| = {mu_gap:.2e} (tol {:.2e})",
            0.2 * target,
            0.3 * eps
        ),
    ))
}

fn case_params(g: &str, theta: &str) -> Result<QuadraticRateParams, RunError> {
    Ok(QuadraticRateParams::new(2.0, PeriodicSignal::expression(g)?, PeriodicSignal::expression(theta)?, 1.0)?)
}

fn ac09() -> Check {
    use std::cmp::Ordering::{Greater, Less};
    let (eps, c) = (0.1, 1.0);
    let g = grid();
    let opts = FloquetOptions::default();
    // Case 1: oscillating optimum against a fixed one. Case 2: oscillating selection
    // strength with concave g(e) = 2 - 1.5 e^2, so gbar = 1.25 < g(ebar) = 2.
    let cases = [
        (case_params("1", "sin(2*pi*t)")?, case_params("1", "0")?, Less),
        (case_params("2 - 1.5*sin(2*pi*t)*sin(2*pi*t)", "0")?, case_params("2", "0")?, Greater),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (periodic, constant, want)) in cases.iter().enumerate() {
        let formula = case_comparison(periodic, constant, c, eps)?;
        let solver = CaseComparison::from_values(
            eps,
            c,
            solver_case_values(&quadratic_model(periodic.clone())?, &g, &opts, eps, c)?,
            solver_case_values(&quadratic_model(constant.clone())?, &g, &opts, eps, c)?,
        );
        for (name, cmp) in [("formula", &formula), ("solver", &solver)] {
            let good = cmp.rho_bar_order == *want && cmp.c_star_order == *want;
            ok &= good;
            parts.push(format!(
                "case {} {name}: rho_bar {:.5} vs {:.5}, c* {:.5} vs {:.5}{}",
                i + 1,
                cmp.periodic.rho_bar,
                cmp.constant.rho_bar,
                cmp.periodic.c_star,
                cmp.constant.c_star,
                if good { "" } else { " (wrong order)" }
            ));
        }
    }
    Ok((ok, parts.join("; ")))
}

/// Max residual of the limiting equation outside the `x_m` window, using the branch
/// formula for `psi_x` and, separately, finite differences of the quadrature `psi`.
fn psi_residuals(prof: &HJProfile, lo: f64, hi: f64) -> (f64, f64) {
    let (mut branch, mut fd): (f64, f64) = (0.0, 0.0);
    let n = 300;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let dist = (x - prof.x_m).abs();
        if dist <= XM_WINDOW {
            continue;
        }
        branch = branch.max(prof.hj_residual(x).abs());
        let h = (1e-4f64).min(dist / 3.0);
        let slope = diff1(&|y| prof.psi(y), x, h);
        fd = fd.max(prof.hj_residual_with(x, slope).abs());
    }
    (branch, fd)
}

fn ac10() -> Check {
    let quadratic = sine_model();
    let quartic = GrowthRateModel::from_fn(1.0, |t, x| {
        1.0 - x * x - 0.3 * x.powi(4) + 0.4 * (2.0 * std::f64::consts::PI * t).sin() * x
    })?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, model) in [("quadratic", quadratic), ("quartic", quartic)] {
        let avg = averaged_rate(&model, 512, (-4.0, 4.0))?;
        let c = 1.0;
        let prof = explicit_psi(&avg, solve_xbar(&avg, c)?, c)?;
        let (branch, fd) = psi_residuals(&prof, avg.x_m - 2.5, avg.x_m + 2.5);
        ok &= branch <= 1e-8 && fd <= 1e-8;
        parts.push(format!("{name}: {branch:.1e} (branch), {fd:.1e} (differenced)"));
    }
    Ok((ok, format!("max residual {} (tol 1e-8)", parts.join(", "))))
}

/// Relative max-norm error after one period against
/// `m = exp(s(t) - k x - x^2 / (2 v))`, which solves the linear problem for a
/// matching `a(t, x)`.
fn manufactured_error(n: usize, steps: usize, form: DriftForm) -> Result<f64, RunError> {
    use std::f64::consts::PI;
    let (sigma, ct, v, radius) = (0.1, 0.1, 0.25, 4.0);
    let k = ct / (2.0 * sigma);
    let shift = ct * ct / (4.0 * sigma);
    let model = GrowthRateModel::from_fn(1.0, move |t, x| {
        shift + 0.6 * PI * (2.0 * PI * t).cos() - sigma * (x * x / (v * v) - 1.0 / v)
    })?;
    let exact = |t: f64, x: f64| (0.3 * (2.0 * PI * t).sin() - k * x - x * x / (2.0 * v)).exp();
    let g = build_grid(radius, n)?;
    let prop = LinearPropagator::new(&model, sigma, ct, &g, steps, form)?;
    let mut u: Vec<f64> = g.nodes().iter().map(|&x| exact(0.0, x)).collect();
    let mut scratch = vec![0.0; n];
    prop.to_frame(&mut u);
    prop.period(&mut u, &mut scratch);
    prop.from_frame(&mut u);
    let reference: Vec<f64> = g.nodes().iter().map(|&x| exact(1.0, x)).collect();
    let top = reference.iter().copied().fold(0.0, f64::max);
    Ok(u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / top)
}

fn ac11() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for form in [DriftForm::Liouville, DriftForm::Direct] {
        let dx_ratio = manufactured_error(65, 8192, form)? / manufactured_error(129, 8192, form)?;
        let dt_ratio = manufactured_error(1025, 64, form)? / manufactured_error(1025, 128, form)?;
        ok &= dx_ratio >= 3.5 && dt_ratio >= 1.8;
        parts.push(format!("{form:?}: dx halved {dx_ratio:.2}x, dt halved {dt_ratio:.2}x"));
    }
    Ok((ok, format!("{} (need 3.5x and 1.8x)", parts.join("; "))))
}
