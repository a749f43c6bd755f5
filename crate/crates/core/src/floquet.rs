//! Principal time-periodic eigenpair of the linear operator
//!
//! ```text
//! p_t - c p_x - sigma p_xx - a(t, x) p = lambda p,   p(t + T) = p(t) > 0
//! ```
//!
//! by power iteration on the one-period map. The dominant multiplier is
//! `mu = e^{-lambda T}`, so survival corresponds to `lambda < 0`.

use serde::Serialize;

use crate::discretization::{advection_diffusion_operator, integrate, Grid1D};
use crate::error::{Error, Result};
use crate::model::{GrowthRateModel, TailHypothesis};
use crate::numerics::{simpson_weights, PeriodicSamples};
use crate::pde_engine::{preferred_drift_form, DriftForm, LinearPropagator};

/// Default relative tolerance on the log multiplier.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Max-norm change of the normalised iterate that counts as converged.
pub const VECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetOptions {
    pub steps_per_period: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// `None` picks [`preferred_drift_form`].
    pub drift_form: Option<DriftForm>,
    /// Keep every `snapshot_stride`-th step of the final sweep.
    pub snapshot_stride: usize,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self { steps_per_period: 512, tol: DEFAULT_TOL, max_iters: 5000, drift_form: None, snapshot_stride: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct FloquetEigenpair {
    pub lambda: f64,
    /// Dominant multiplier of the period map, `e^{-lambda T}`.
    pub mu: f64,
    pub period: f64,
    pub sigma: f64,
    pub c_tilde: f64,
    pub grid: Grid1D,
    pub drift_form: DriftForm,
    /// Snapshot times over `[0, T]`, both ends included.
    pub times: Vec<f64>,
    /// `p_c(t_k, .)`, normalised so that `max p_c(0, .) = 1`.
    pub snapshots: Vec<Vec<f64>>,
    /// Growth `Q(t_k) = int a p / int p` at every step of the final sweep.
    pub step_times: Vec<f64>,
    pub step_q: Vec<f64>,
    pub step_mass: Vec<f64>,
    /// Max-norm residual of the discrete eigen-equation, relative to `max p`.
    pub residual: f64,
    /// `max |p(T) - p(0)|`.
    pub periodicity_defect: f64,
    pub iterations: usize,
}

impl FloquetEigenpair {
    pub fn p0(&self) -> &[f64] {
        &self.snapshots[0]
    }

    pub fn is_viable(&self) -> bool {
        self.lambda < 0.0
    }
}

/// Applies the one-period solution operator to physical values.
pub fn monodromy_apply(
    v: &[f64],
    model: &GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    grid: &Grid1D,
    steps_per_period: usize,
) -> Result<Vec<f64>> {
    if v.len() != grid.n_points() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("monodromy input must be finite grid samples".into()));
    }
    let prop = LinearPropagator::auto(model, sigma, c_tilde, grid, steps_per_period)?;
    let mut w = v.to_vec();
    let mut scratch = vec![0.0; v.len()];
    prop.to_frame(&mut w);
    prop.period(&mut w, &mut scratch);
    prop.from_frame(&mut w);
    Ok(w)
}

/// Principal eigenpair with default options apart from those given.
pub fn principal_eigenpair(
    model: &GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    grid: &Grid1D,
    steps_per_period: usize,
    tol: f64,
    max_iters: usize,
) -> Result<FloquetEigenpair> {
    let opts = FloquetOptions { steps_per_period, tol, max_iters, ..Default::default() };
    principal_eigenpair_with(model, sigma, c_tilde, grid, &opts, None)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

fn check_sign(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(*x >= 0.0)) {
        Some(node) => Err(Error::DegenerateMode { node }),
        None => Ok(()),
    }
}

/// Power iteration on the period map, optionally from a supplied positive guess.
pub fn principal_eigenpair_with(
    model: &GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    grid: &Grid1D,
    opts: &FloquetOptions,
    initial: Option<&[f64]>,
) -> Result<FloquetEigenpair> {
    if !(opts.tol > 0.0) || opts.max_iters == 0 || opts.snapshot_stride == 0 {
        return Err(Error::InvalidInput("need tol > 0, max_iters > 0 and snapshot_stride > 0".into()));
    }
    let form = opts.drift_form.unwrap_or_else(|| preferred_drift_form(sigma, c_tilde, grid));
    let prop = LinearPropagator::new(model, sigma, c_tilde, grid, opts.steps_per_period, form)?;
    eigenpair_from_propagator(&prop, opts.tol, opts.max_iters, opts.snapshot_stride, initial)
}

/// Power iteration with a prebuilt propagator.
pub fn eigenpair_from_propagator(
    prop: &LinearPropagator,
    tol: f64,
    max_iters: usize,
    snapshot_stride: usize,
    initial: Option<&[f64]>,
) -> Result<FloquetEigenpair> {
    let grid = prop.grid();
    let n = grid.n_points();
    let period = prop.model().period();
    let radius = grid.radius();
    let mut v: Vec<f64> = match initial {
        Some(g) if g.len() == n => g.to_vec(),
        Some(_) => return Err(Error::InvalidInput("initial guess does not match the grid".into())),
        None => grid.sample(|x| (std::f64::consts::FRAC_PI_2 * x / radius).cos().max(0.0)),
    };
    v[0] = 0.0;
    v[n - 1] = 0.0;
    check_sign(&v)?;
    if !(sup(&v) > 0.0) {
        return Err(Error::InvalidInput("initial guess is identically zero".into()));
    }
    let s = sup(&v);
    v.iter_mut().for_each(|x| *x /= s);

    let mut scratch = vec![0.0; n];
    let mut framed = v.clone();
    prop.to_frame(&mut framed);
    let mut log_mu_old = f64::NAN;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let before: f64 = framed.iter().sum();
        prop.period(&mut framed, &mut scratch);
        check_sign(&framed)?;
        let after: f64 = framed.iter().sum();
        if !(after > 0.0 && after.is_finite()) {
            return Err(Error::NoConvergence { iterations, change: f64::NAN });
        }
        let log_mu = (after / before).ln();
        let mut phys = framed.clone();
        prop.from_frame(&mut phys);
        let s = sup(&phys);
        phys.iter_mut().for_each(|x| *x /= s);
        let vec_change = phys.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scalar_change = (log_mu - log_mu_old).abs();
        last_change = scalar_change.max(vec_change);
        v = phys;
        framed.iter_mut().for_each(|x| *x /= s);
        log_mu_old = log_mu;
        if scalar_change < tol * log_mu.abs().max(1.0) && vec_change < VECTOR_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations, change: last_change });
    }

    // Final sweep from the normalised iterate, recording p(t) = m(t) e^{lambda t}.
    let lambda = -log_mu_old / period;
    let steps = prop.steps_per_period();
    let dt = prop.dt();
    let weights = grid.weights();
    let xs = grid.nodes();
    let mut rates = vec![0.0; n];
    let mut times = vec![0.0];
    let mut snapshots = vec![v.clone()];
    let mut step_times = Vec::with_capacity(steps + 1);
    let mut step_q = Vec::with_capacity(steps + 1);
    let mut step_mass = Vec::with_capacity(steps + 1);
    let mut record = |t: f64, p: &[f64], rates: &mut [f64]| {
        prop.model().fill_rates(t, xs, rates);
        let mass: f64 = p.iter().zip(&weights).map(|(a, b)| a * b).sum();
        let growth: f64 = p.iter().zip(&weights).zip(rates.iter()).map(|((a, b), r)| a * b * r).sum();
        step_times.push(t);
        step_q.push(growth / mass);
        step_mass.push(mass);
    };
    record(0.0, &v, &mut rates);
    let mut framed = v.clone();
    prop.to_frame(&mut framed);
    let mut p = vec![0.0; n];
    let mut residual: f64 = 0.0;
    let mut prev = v.clone();
    for j in 0..steps {
        prop.step(&mut framed, j, &mut scratch);
        let t = (j + 1) as f64 * dt;
        let growth = (lambda * t).exp();
        for i in 0..n {
            p[i] = framed[i] * prop.from_frame_weights()[i] * growth;
        }
        check_sign(&p)?;
        residual = residual.max(step_residual(prop, &prev, &p, j as f64 * dt, dt, lambda, &mut rates));
        record(t, &p, &mut rates);
        if (j + 1) % snapshot_stride == 0 || j + 1 == steps {
            times.push(t);
            snapshots.push(p.clone());
        }
        prev.copy_from_slice(&p);
    }
    let periodicity_defect = p.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    Ok(FloquetEigenpair {
        lambda,
        mu: log_mu_old.exp(),
        period,
        sigma: prop.sigma(),
        c_tilde: prop.c_tilde(),
        grid: grid.clone(),
        drift_form: prop.form(),
        times,
        snapshots,
        step_times,
        step_q,
        step_mass,
        residual,
        periodicity_defect,
        iterations,
    })
}

/// Crank-Nicolson style residual of `p_t = L(t) p + lambda p` over one step,
/// using the direct physical-frame stencil, relative to `max p`.
fn step_residual(
    prop: &LinearPropagator,
    p0: &[f64],
    p1: &[f64],
    t: f64,
    dt: f64,
    lambda: f64,
    rates: &mut [f64],
) -> f64 {
    let grid = prop.grid();
    let n = grid.n_points();
    let mid: Vec<f64> = p0.iter().zip(p1).map(|(a, b)| 0.5 * (a + b)).collect();
    prop.model().fill_rates(t + 0.5 * dt, grid.nodes(), rates);
    let op = advection_diffusion_operator(grid, prop.c_tilde(), prop.sigma(), rates);
    let lp = op.apply(&mid);
    let scale = sup(&mid).max(f64::MIN_POSITIVE);
    (1..n - 1)
        .map(|i| ((p1[i] - p0[i]) / dt - lp[i] - lambda * mid[i]).abs())
        .fold(0.0, f64::max)
        / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalSpeed {
    pub lambda0: f64,
    pub speed: f64,
}

/// `2 sqrt(-sigma lambda0)` when `lambda0 < 0`, otherwise 0.
pub fn critical_speed_from_lambda(sigma: f64, lambda0: f64) -> f64 {
    if lambda0 < 0.0 {
        2.0 * (-sigma * lambda0).sqrt()
    } else {
        0.0
    }
}

/// Critical shift speed from the drift-free eigenvalue.
pub fn critical_speed(model: &GrowthRateModel, sigma: f64, grid: &Grid1D, opts: &FloquetOptions) -> Result<CriticalSpeed> {
    let eig = principal_eigenpair_with(model, sigma, 0.0, grid, opts, None)?;
    Ok(CriticalSpeed { lambda0: eig.lambda, speed: critical_speed_from_lambda(sigma, eig.lambda) })
}

/// Periodic solution of `r' = r (g(t) - r)`, evaluated from its closed form.
#[derive(Debug, Clone)]
pub struct PeriodicLogistic {
    period: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    growth_integral: f64,
}

const LOGISTIC_INTERVALS: usize = 4096;

impl PeriodicLogistic {
    pub fn period(&self) -> f64 {
        self.period
    }

    /// `int_0^T g`.
    pub fn growth_integral(&self) -> f64 {
        self.growth_integral
    }

    pub fn eval(&self, t: f64) -> f64 {
        let m = self.values.len() - 1;
        let h = self.period / m as f64;
        let s = t.rem_euclid(self.period) / h;
        let k = (s.floor() as usize).min(m - 1);
        let u = s - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * d1
    }

    /// Period average.
    pub fn mean(&self) -> f64 {
        let m = self.values.len() - 1;
        let w = simpson_weights(m, self.period / m as f64);
        self.values.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / self.period
    }
}

/// The unique positive periodic solution of `r' = r (growth(t) - r)`.
pub fn periodic_logistic(growth: &dyn Fn(f64) -> f64, period: f64) -> Result<PeriodicLogistic> {
    if !(period > 0.0) {
        return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
    }
    let m = LOGISTIC_INTERVALS;
    let h = period / m as f64;
    let half = 0.5 * h;
    // F on the half-step lattice s_j = j h / 2, by Simpson on each half step.
    let mut f = vec![0.0; 2 * m + 1];
    let mut g_prev = growth(0.0);
    for j in 0..2 * m {
        let s = j as f64 * half;
        let g_mid = growth(s + 0.5 * half);
        let g_next = growth(s + half);
        f[j + 1] = f[j] + half / 6.0 * (g_prev + 4.0 * g_mid + g_next);
        g_prev = g_next;
    }
    let total = f[2 * m];
    if !total.is_finite() {
        return Err(Error::InvalidInput("growth integral is not finite".into()));
    }
    if total <= 0.0 {
        return Err(Error::NonviablePopulation { integral: total });
    }
    // Scale exponentials by e^{-fmax} to stay in range.
    let fmax = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e = vec![0.0; m + 1];
    for k in 0..m {
        let (a, b, c) = ((f[2 * k] - fmax).exp(), (f[2 * k + 1] - fmax).exp(), (f[2 * k + 2] - fmax).exp());
        e[k + 1] = e[k] + h / 6.0 * (a + 4.0 * b + c);
    }
    let e_total = e[m];
    let decay = (-total).exp();
    let mut values = vec![0.0; m + 1];
    let mut slopes = vec![0.0; m + 1];
    for k in 0..=m {
        let fk = f[2 * k];
        // int_t^{t+T} e^{F(s) - F(t)} ds = e^{-F(t)} [E(T) - E(t) + e^{G} E(t)]
        let window = ((e_total - e[k]) + total.exp() * e[k]) * (fmax - fk).exp();
        let r = (1.0 - decay) / (decay * window);
        values[k] = r;
        slopes[k] = r * (growth(k as f64 * h) - r);
    }
    values[m] = values[0];
    slopes[m] = slopes[0];
    Ok(PeriodicLogistic { period, values, slopes, growth_integral: total })
}

#[derive(Debug, Clone)]
pub struct PeriodicQuantities {
    pub period: f64,
    /// Times of the final sweep steps.
    pub times: Vec<f64>,
    /// `Q_c` at `times`.
    pub qc: Vec<f64>,
    /// `int_0^T Q_c dt` by Simpson.
    pub qc_integral: f64,
    /// Normalised profiles `P_c = p_c / int p_c` at the eigenpair snapshot times.
    pub pc_times: Vec<f64>,
    pub pc: Vec<Vec<f64>>,
    pub rho_hat: PeriodicLogistic,
    qc_interp: PeriodicSamples,
}

impl PeriodicQuantities {
    pub fn qc_at(&self, t: f64) -> f64 {
        self.qc_interp.eval(t)
    }

    pub fn rho_hat_at(&self, t: f64) -> f64 {
        self.rho_hat.eval(t)
    }
}

/// `Q_c`, `P_c` and `rho_hat` from a converged eigenpair.
pub fn periodic_quantities(eig: &FloquetEigenpair, model: &GrowthRateModel, grid: &Grid1D) -> Result<PeriodicQuantities> {
    if grid != &eig.grid {
        return Err(Error::InvalidInput("grid differs from the eigenpair's grid".into()));
    }
    let steps = eig.step_q.len() - 1;
    let period = model.period();
    let qc_integral = if steps % 2 == 0 {
        let w = simpson_weights(steps, period / steps as f64);
        eig.step_q.iter().zip(&w).map(|(a, b)| a * b).sum()
    } else {
        crate::numerics::trapezoid(&eig.step_q, period / steps as f64)
    };
    if qc_integral <= 0.0 {
        return Err(Error::NonviablePopulation { integral: qc_integral });
    }
    let qc_interp = PeriodicSamples::new(period, eig.step_q[..steps].to_vec());
    let rho_hat = periodic_logistic(&|t| qc_interp.eval(t), period)?;
    let pc = eig
        .snapshots
        .iter()
        .map(|p| {
            let mass = integrate(grid, p);
            p.iter().map(|v| v / mass).collect()
        })
        .collect();
    Ok(PeriodicQuantities {
        period,
        times: eig.step_times.clone(),
        qc: eig.step_q.clone(),
        qc_integral,
        pc_times: eig.times.clone(),
        pc,
        rho_hat,
        qc_interp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub nu: f64,
    /// Fitted decay rates `-d log p / d|x|` on the right and left tails.
    pub right_rate: Option<f64>,
    pub left_rate: Option<f64>,
    pub margin: f64,
    pub passed: bool,
    pub detail: String,
}

/// `nu = -c/(2 sigma) + sqrt(delta/sigma + (c/sigma)^2 / 2)`.
pub fn tail_exponent(delta: f64, sigma: f64, c_tilde: f64) -> f64 {
    -c_tilde / (2.0 * sigma) + (delta / sigma + 0.5 * (c_tilde / sigma).powi(2)).sqrt()
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Checks that `p_c(0, .)` decays at least like `e^{-nu |x|}` on `R0 <= |x| <= R - 1`.
pub fn decay_tail_check(eig: &FloquetEigenpair, tail: &TailHypothesis, margin: f64) -> TailReport {
    let nu = tail_exponent(tail.delta, eig.sigma, eig.c_tilde);
    let xs = eig.grid.nodes();
    let outer = eig.grid.radius() - 1.0;
    let p = eig.p0();
    let collect = |sign: f64| -> Vec<(f64, f64)> {
        xs.iter()
            .zip(p)
            .filter(|(x, v)| {
                let d = sign * **x;
                d >= tail.r0 && d <= outer && **v > 1e-300
            })
            .map(|(x, v)| (sign * x, v.ln()))
            .collect()
    };
    let right_rate = fit_slope(&collect(1.0)).map(|s| -s);
    let left_rate = fit_slope(&collect(-1.0)).map(|s| -s);
    let ok = |r: Option<f64>| r.is_none_or(|r| r >= nu - margin);
    let passed = ok(right_rate) && ok(left_rate);
    let detail = match (right_rate, left_rate) {
        (None, None) => format!("no tail samples on {} <= |x| <= {outer}", tail.r0),
        _ => format!("fitted decay rates right {right_rate:?}, left {left_rate:?} against nu = {nu}"),
    };
    TailReport { nu, right_rate, left_rate, margin, passed, detail }
}
