//! Time stepping for the shifted-frame equations
//!
//! ```text
//! n_t = c n_x + sigma n_xx + n (a(t, x) - rho(t)),   rho = int n dx
//! m_t = c m_x + sigma m_xx + a(t, x) m
//! ```
//!
//! Each linear step is Strang split: half a step of exact pointwise growth,
//! a backward-Euler advection-diffusion solve, and another half step of
//! growth. The nonlocal term is a scalar logistic factor `1 / (1 + h rho)`
//! applied symmetrically around the linear step.
//!
//! When the drift is moderate the solver works on the Liouville transform
//! `M = m e^{k x}`, `k = c / (2 sigma)`, which removes the drift at the cost
//! of a constant rate `c^2 / (4 sigma)`.

use serde::{Deserialize, Serialize};

use crate::discretization::{advection_diffusion_operator, integrate, Grid1D, TridiagonalFactor};
use crate::error::{Error, Result};
use crate::model::GrowthRateModel;

/// Largest `k R` for which the drift-free form is used by default.
pub const LIOUVILLE_MAX_EXPONENT: f64 = 300.0;
/// Beyond this `k R` the weights `e^{k x}` are not safely representable.
pub const OVERFLOW_EXPONENT: f64 = 600.0;
/// Largest `steps * nodes` for which per-period growth factors are cached.
const TABLE_LIMIT: usize = 1 << 22;

const CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub time: f64,
    pub density: Vec<f64>,
    pub mass_rho: f64,
}

impl PdeState {
    pub fn new(grid: &Grid1D, time: f64, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.n_points() {
            return Err(Error::InvalidInput(format!(
                "density has {} samples for a grid of {}",
                density.len(),
                grid.n_points()
            )));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("density must be finite and nonnegative".into()));
        }
        let mass_rho = integrate(grid, &density);
        Ok(Self { time, density, mass_rho })
    }

    pub fn zero(grid: &Grid1D, time: f64) -> Self {
        Self { time, density: vec![0.0; grid.n_points()], mass_rho: 0.0 }
    }

    /// Trait mean and variance of the density.
    pub fn moments(&self, grid: &Grid1D) -> (f64, f64) {
        let xs = grid.nodes();
        let mean = integrate_weighted(grid, &self.density, |i| xs[i]) / self.mass_rho;
        let var = integrate_weighted(grid, &self.density, |i| (xs[i] - mean).powi(2)) / self.mass_rho;
        (mean, var)
    }
}

fn integrate_weighted(grid: &Grid1D, values: &[f64], w: impl Fn(usize) -> f64) -> f64 {
    let tmp: Vec<f64> = values.iter().enumerate().map(|(i, v)| v * w(i)).collect();
    integrate(grid, &tmp)
}

/// Gaussian with the given mass, normalised on the grid, zero on the boundary.
pub fn gaussian_state(grid: &Grid1D, center: f64, std: f64, mass: f64) -> Result<PdeState> {
    if !(std > 0.0 && mass >= 0.0) {
        return Err(Error::InvalidInput(format!("gaussian needs std > 0 and mass >= 0 (got {std}, {mass})")));
    }
    let mut d = grid.sample(|x| (-0.5 * ((x - center) / std).powi(2)).exp());
    let n = d.len();
    d[0] = 0.0;
    d[n - 1] = 0.0;
    let total = integrate(grid, &d);
    if !(total > 0.0) {
        return Err(Error::InvalidInput("gaussian initial condition vanishes on the grid".into()));
    }
    d.iter_mut().for_each(|v| *v *= mass / total);
    PdeState::new(grid, 0.0, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearState {
    pub time: f64,
    pub values: Vec<f64>,
    /// True when `values` hold the Liouville transform `M`.
    pub liouville: bool,
}

impl LinearState {
    pub fn new(time: f64, values: Vec<f64>) -> Self {
        Self { time, values, liouville: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    /// Discretise `c d/dx` directly (upwinded at high cell Peclet number).
    Direct,
    /// Step the drift-free transform `M = m e^{k x}`.
    Liouville,
}

/// `k = c / (2 sigma)`.
pub fn liouville_rate(c_tilde: f64, sigma: f64) -> f64 {
    c_tilde / (2.0 * sigma)
}

/// The drift form used when none is requested.
pub fn preferred_drift_form(sigma: f64, c_tilde: f64, grid: &Grid1D) -> DriftForm {
    if liouville_rate(c_tilde, sigma).abs() * grid.radius() <= LIOUVILLE_MAX_EXPONENT {
        DriftForm::Liouville
    } else {
        DriftForm::Direct
    }
}

fn liouville_weights(c_tilde: f64, sigma: f64, grid: &Grid1D, sign: f64) -> Result<Vec<f64>> {
    let k = liouville_rate(c_tilde, sigma);
    let exponent = k.abs() * grid.radius();
    if !(exponent <= OVERFLOW_EXPONENT) {
        return Err(Error::OverflowRisk { exponent });
    }
    Ok(grid.sample(|x| (sign * k * x).exp()))
}

/// `M = m e^{k x}`.
pub fn liouville_forward(state: &LinearState, c_tilde: f64, sigma: f64, grid: &Grid1D) -> Result<LinearState> {
    if state.liouville {
        return Err(Error::InvalidInput("state is already in the Liouville frame".into()));
    }
    let w = liouville_weights(c_tilde, sigma, grid, 1.0)?;
    let values = state.values.iter().zip(&w).map(|(v, w)| v * w).collect();
    Ok(LinearState { time: state.time, values, liouville: true })
}

/// `m = M e^{-k x}`.
pub fn liouville_backward(state: &LinearState, c_tilde: f64, sigma: f64, grid: &Grid1D) -> Result<LinearState> {
    if !state.liouville {
        return Err(Error::InvalidInput("state is not in the Liouville frame".into()));
    }
    let w = liouville_weights(c_tilde, sigma, grid, -1.0)?;
    let values = state.values.iter().zip(&w).map(|(v, w)| v * w).collect();
    Ok(LinearState { time: state.time, values, liouville: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub steps_per_period: usize,
    pub max_periods: usize,
    pub extinction_threshold: f64,
    /// Max-norm change of the density over one period that counts as periodic.
    pub periodic_tolerance: f64,
    /// States stored per period over the final cycle.
    pub cycle_samples: usize,
    /// `None` picks [`preferred_drift_form`].
    pub drift_form: Option<DriftForm>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 512,
            max_periods: 400,
            extinction_threshold: 1e-8,
            periodic_tolerance: 1e-9,
            cycle_samples: 64,
            drift_form: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 64 {
            return Err(Error::InvalidInput(format!("steps_per_period must be >= 64, got {}", self.steps_per_period)));
        }
        if !(self.extinction_threshold >= 0.0 && self.periodic_tolerance > 0.0) {
            return Err(Error::InvalidInput("thresholds must be nonnegative and the periodic tolerance positive".into()));
        }
        if self.cycle_samples == 0 || self.max_periods == 0 {
            return Err(Error::InvalidInput("cycle_samples and max_periods must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self, period: f64) -> f64 {
        period / self.steps_per_period as f64
    }
}

/// Growth factors `exp((a(t, x) - shift) h)` at every node.
fn growth_factors(model: &GrowthRateModel, grid: &Grid1D, t: f64, h: f64, shift: f64, out: &mut [f64]) {
    model.fill_rates(t, grid.nodes(), out);
    for o in out.iter_mut() {
        *o = ((*o - shift) * h).exp();
    }
}

fn implicit_factor(grid: &Grid1D, drift: f64, sigma: f64, dt: f64) -> Result<TridiagonalFactor> {
    let zero = vec![0.0; grid.n_points()];
    advection_diffusion_operator(grid, drift, sigma, &zero).implicit_matrix(dt).factor()
}

fn diffusion_solve(factor: &TridiagonalFactor, v: &mut [f64]) {
    let n = v.len();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    factor.solve_in_place(v);
    v[0] = 0.0;
    v[n - 1] = 0.0;
}

fn multiply(v: &mut [f64], f: &[f64]) {
    for (a, b) in v.iter_mut().zip(f) {
        *a *= b;
    }
}

/// One-period linear solution operator on a fixed step grid, with the
/// implicit factorisation and (when small enough) the growth factors cached.
#[derive(Debug, Clone)]
pub struct LinearPropagator {
    grid: Grid1D,
    model: GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    form: DriftForm,
    dt: f64,
    steps: usize,
    shift: f64,
    factor: TridiagonalFactor,
    tables: Option<Vec<f64>>,
    to_frame: Vec<f64>,
    from_frame: Vec<f64>,
}

impl LinearPropagator {
    pub fn new(
        model: &GrowthRateModel,
        sigma: f64,
        c_tilde: f64,
        grid: &Grid1D,
        steps_per_period: usize,
        form: DriftForm,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !c_tilde.is_finite() || steps_per_period == 0 {
            return Err(Error::InvalidInput(format!(
                "need sigma > 0, finite drift and steps > 0 (got {sigma}, {c_tilde}, {steps_per_period})"
            )));
        }
        let dt = model.period() / steps_per_period as f64;
        let n = grid.n_points();
        let (drift, shift, to_frame, from_frame) = match form {
            DriftForm::Direct => (c_tilde, 0.0, vec![1.0; n], vec![1.0; n]),
            DriftForm::Liouville => (
                0.0,
                c_tilde * c_tilde / (4.0 * sigma),
                liouville_weights(c_tilde, sigma, grid, 1.0)?,
                liouville_weights(c_tilde, sigma, grid, -1.0)?,
            ),
        };
        let factor = implicit_factor(grid, drift, sigma, dt)?;
        let mut prop = Self {
            grid: grid.clone(),
            model: model.clone(),
            sigma,
            c_tilde,
            form,
            dt,
            steps: steps_per_period,
            shift,
            factor,
            tables: None,
            to_frame,
            from_frame,
        };
        if steps_per_period * n <= TABLE_LIMIT {
            let mut tables = vec![0.0; 2 * steps_per_period * n];
            for (j, chunk) in tables.chunks_mut(2 * n).enumerate() {
                let t = j as f64 * dt;
                let (first, second) = chunk.split_at_mut(n);
                growth_factors(model, grid, t + 0.25 * dt, 0.5 * dt, shift, first);
                growth_factors(model, grid, t + 0.75 * dt, 0.5 * dt, shift, second);
            }
            prop.tables = Some(tables);
        }
        Ok(prop)
    }

    /// Propagator with the default drift form for these parameters.
    pub fn auto(model: &GrowthRateModel, sigma: f64, c_tilde: f64, grid: &Grid1D, steps_per_period: usize) -> Result<Self> {
        Self::new(model, sigma, c_tilde, grid, steps_per_period, preferred_drift_form(sigma, c_tilde, grid))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps
    }

    pub fn form(&self) -> DriftForm {
        self.form
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn model(&self) -> &GrowthRateModel {
        &self.model
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c_tilde(&self) -> f64 {
        self.c_tilde
    }

    /// Multipliers taking physical values into the stepping frame.
    pub fn to_frame_weights(&self) -> &[f64] {
        &self.to_frame
    }

    /// Multipliers taking stepping-frame values back to physical ones.
    pub fn from_frame_weights(&self) -> &[f64] {
        &self.from_frame
    }

    pub fn to_frame(&self, physical: &mut [f64]) {
        multiply(physical, &self.to_frame);
    }

    pub fn from_frame(&self, framed: &mut [f64]) {
        multiply(framed, &self.from_frame);
    }

    /// Advances frame values from `t_j = j dt` to `t_{j+1}`; `scratch` has grid length.
    pub fn step(&self, v: &mut [f64], j: usize, scratch: &mut [f64]) {
        let n = self.grid.n_points();
        let j = j % self.steps;
        match &self.tables {
            Some(tables) => {
                let chunk = &tables[2 * n * j..2 * n * (j + 1)];
                multiply(v, &chunk[..n]);
                diffusion_solve(&self.factor, v);
                multiply(v, &chunk[n..]);
            }
            None => {
                let t = j as f64 * self.dt;
                growth_factors(&self.model, &self.grid, t + 0.25 * self.dt, 0.5 * self.dt, self.shift, scratch);
                multiply(v, scratch);
                diffusion_solve(&self.factor, v);
                growth_factors(&self.model, &self.grid, t + 0.75 * self.dt, 0.5 * self.dt, self.shift, scratch);
                multiply(v, scratch);
            }
        }
    }

    /// Advances frame values through one full period starting at phase 0.
    pub fn period(&self, v: &mut [f64], scratch: &mut [f64]) {
        for j in 0..self.steps {
            self.step(v, j, scratch);
        }
    }
}

fn clamp_negative(v: &mut [f64], weights: &[f64], mass_scale: f64) -> Result<()> {
    let mut moved = 0.0;
    for (x, w) in v.iter_mut().zip(weights) {
        if *x < 0.0 || x.is_nan() {
            moved += x.abs() * w;
            *x = 0.0;
        }
    }
    if moved > CLAMP_TOLERANCE * mass_scale.max(f64::MIN_POSITIVE) {
        return Err(Error::PositivityLoss { moved });
    }
    Ok(())
}

fn check_mass_change(before: f64, after: f64) -> Result<()> {
    if !after.is_finite() || (before > 0.0 && !(after >= 0.5 * before && after <= 1.5 * before)) {
        return Err(Error::StepRejected { before, after });
    }
    Ok(())
}

fn validate_step(sigma: f64, c_tilde: f64, dt: f64) -> Result<()> {
    if !(sigma > 0.0 && dt > 0.0 && c_tilde.is_finite()) {
        return Err(Error::InvalidInput(format!("need sigma > 0, dt > 0, finite drift (got {sigma}, {dt}, {c_tilde})")));
    }
    Ok(())
}

/// One Strang step of the linear equation from `t` to `t + dt`, in place.
fn linear_substep(v: &mut [f64], model: &GrowthRateModel, grid: &Grid1D, t: f64, dt: f64, factor: &TridiagonalFactor, shift: f64) {
    let mut g = vec![0.0; v.len()];
    growth_factors(model, grid, t + 0.25 * dt, 0.5 * dt, shift, &mut g);
    multiply(v, &g);
    diffusion_solve(factor, v);
    growth_factors(model, grid, t + 0.75 * dt, 0.5 * dt, shift, &mut g);
    multiply(v, &g);
}

/// One step of the linear equation. With `use_liouville` (or a state already in
/// the Liouville frame) the drift-free form is stepped.
pub fn step_linear(
    state: &LinearState,
    model: &GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    grid: &Grid1D,
    dt: f64,
    use_liouville: bool,
) -> Result<LinearState> {
    validate_step(sigma, c_tilde, dt)?;
    if state.values.len() != grid.n_points() {
        return Err(Error::InvalidInput("state does not match the grid".into()));
    }
    let liouville = use_liouville || state.liouville;
    let mut work = if liouville && !state.liouville {
        liouville_forward(state, c_tilde, sigma, grid)?
    } else {
        state.clone()
    };
    let (drift, shift) = if liouville { (0.0, c_tilde * c_tilde / (4.0 * sigma)) } else { (c_tilde, 0.0) };
    let factor = implicit_factor(grid, drift, sigma, dt)?;
    let weights = grid.weights();
    let before = integrate(grid, &work.values);
    linear_substep(&mut work.values, model, grid, state.time, dt, &factor, shift);
    clamp_negative(&mut work.values, &weights, before)?;
    work.time = state.time + dt;
    if liouville && !state.liouville {
        work = liouville_backward(&work, c_tilde, sigma, grid)?;
    }
    Ok(work)
}

/// `v <- v / (1 + h rho)` with `rho = sum w_i v_i`; the exact flow of `rho' = -rho^2`.
fn compress(v: &mut [f64], mass_weights: &[f64], h: f64) -> f64 {
    let rho: f64 = v.iter().zip(mass_weights).map(|(a, b)| a * b).sum();
    let f = 1.0 / (1.0 + h * rho);
    v.iter_mut().for_each(|x| *x *= f);
    rho * f
}

/// One step of the nonlocal equation from `state.time` to `state.time + dt`.
pub fn step_nonlocal(
    state: &PdeState,
    model: &GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    grid: &Grid1D,
    dt: f64,
) -> Result<PdeState> {
    validate_step(sigma, c_tilde, dt)?;
    if state.density.len() != grid.n_points() {
        return Err(Error::InvalidInput("state does not match the grid".into()));
    }
    let factor = implicit_factor(grid, c_tilde, sigma, dt)?;
    let weights = grid.weights();
    let mut v = state.density.clone();
    compress(&mut v, &weights, 0.5 * dt);
    linear_substep(&mut v, model, grid, state.time, dt, &factor, 0.0);
    clamp_negative(&mut v, &weights, state.mass_rho)?;
    let mass = compress(&mut v, &weights, 0.5 * dt);
    check_mass_change(state.mass_rho, mass)?;
    Ok(PdeState { time: state.time + dt, mass_rho: integrate(grid, &v), density: v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Extinct,
    Periodic,
    Undecided,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub verdict: Verdict,
    /// Whole periods completed.
    pub periods: usize,
    /// `rho` at every period boundary, starting with the initial state.
    pub boundary_rho: Vec<f64>,
    /// Dense `(t, rho(t))` samples, one per time step.
    pub rho_samples: Vec<(f64, f64)>,
    /// States over the last completed period, `cycle_samples + 1` of them
    /// including both ends; empty on extinction.
    pub final_cycle: Vec<PdeState>,
    pub final_state: PdeState,
    pub drift_form: DriftForm,
}

impl Trajectory {
    /// Mean of `rho` over the last completed period.
    pub fn final_period_average(&self, steps_per_period: usize) -> Option<f64> {
        let n = self.rho_samples.len();
        if n < steps_per_period + 1 {
            return None;
        }
        let cycle = &self.rho_samples[n - steps_per_period - 1..];
        let vals: Vec<f64> = cycle.iter().map(|s| s.1).collect();
        let span = cycle[steps_per_period].0 - cycle[0].0;
        Some(crate::numerics::trapezoid(&vals, span / steps_per_period as f64) / span)
    }

    /// Samples over the last completed period.
    pub fn final_period_rho(&self, steps_per_period: usize) -> &[(f64, f64)] {
        let n = self.rho_samples.len();
        &self.rho_samples[n.saturating_sub(steps_per_period + 1)..]
    }
}

/// Runs the nonlocal equation until extinction, a periodic regime or the period cap.
pub fn simulate(
    n0: &PdeState,
    model: &GrowthRateModel,
    sigma: f64,
    c_tilde: f64,
    grid: &Grid1D,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let form = config.drift_form.unwrap_or_else(|| preferred_drift_form(sigma, c_tilde, grid));
    let prop = LinearPropagator::new(model, sigma, c_tilde, grid, config.steps_per_period, form)?;
    simulate_with(n0, &prop, config)
}

/// [`simulate`] with a prebuilt propagator; the start time must be a whole period.
pub fn simulate_with(n0: &PdeState, prop: &LinearPropagator, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let grid = prop.grid();
    let n = grid.n_points();
    let steps = prop.steps_per_period();
    let period = prop.model().period();
    let dt = prop.dt();
    if prop.steps_per_period() != config.steps_per_period {
        return Err(Error::InvalidInput("propagator and config disagree on steps_per_period".into()));
    }
    let cycles = n0.time / period;
    if (cycles - cycles.round()).abs() > 1e-9 {
        return Err(Error::InvalidInput("simulation must start at a period boundary".into()));
    }
    let t0 = n0.time;

    let trap = grid.weights();
    // Mass weights in the stepping frame: int n = sum w_i e^{-k x_i} M_i.
    let mass_w: Vec<f64> = trap.iter().zip(prop.from_frame_weights()).map(|(a, b)| a * b).collect();
    let mut v = n0.density.clone();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    prop.to_frame(&mut v);
    let mut scratch = vec![0.0; n];
    let stride = (steps / config.cycle_samples.min(steps)).max(1);

    let physical = |v: &[f64], t: f64| -> PdeState {
        let mut d = v.to_vec();
        prop.from_frame(&mut d);
        let mass_rho = integrate(grid, &d);
        PdeState { time: t, density: d, mass_rho }
    };

    let mut rho = n0.mass_rho;
    let mut boundary_rho = vec![rho];
    let mut rho_samples = Vec::with_capacity(steps * config.max_periods.min(1000) + 1);
    rho_samples.push((t0, rho));
    let mut last_boundary = physical(&v, t0).density;
    let mut cycle = Vec::new();

    if !(rho >= config.extinction_threshold) || rho == 0.0 {
        return Ok(Trajectory {
            verdict: Verdict::Extinct,
            periods: 0,
            boundary_rho,
            rho_samples,
            final_cycle: Vec::new(),
            final_state: physical(&v, t0),
            drift_form: prop.form(),
        });
    }

    for p in 0..config.max_periods {
        cycle.clear();
        cycle.push(physical(&v, t0 + p as f64 * period));
        for j in 0..steps {
            let t = t0 + (p * steps + j + 1) as f64 * dt;
            compress(&mut v, &mass_w, 0.5 * dt);
            prop.step(&mut v, j, &mut scratch);
            clamp_negative(&mut v, &mass_w, rho)?;
            let after = compress(&mut v, &mass_w, 0.5 * dt);
            check_mass_change(rho, after)?;
            rho = after;
            rho_samples.push((t, rho));
            if rho < config.extinction_threshold {
                return Ok(Trajectory {
                    verdict: Verdict::Extinct,
                    periods: p,
                    boundary_rho,
                    rho_samples,
                    final_cycle: Vec::new(),
                    final_state: physical(&v, t),
                    drift_form: prop.form(),
                });
            }
            if (j + 1) % stride == 0 {
                cycle.push(physical(&v, t));
            }
        }
        let end = physical(&v, t0 + (p + 1) as f64 * period);
        if cycle.last().map(|s| s.time) != Some(end.time) {
            cycle.push(end.clone());
        }
        boundary_rho.push(end.mass_rho);
        let change = end
            .density
            .iter()
            .zip(&last_boundary)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        last_boundary = end.density.clone();
        if change < config.periodic_tolerance {
            return Ok(Trajectory {
                verdict: Verdict::Periodic,
                periods: p + 1,
                boundary_rho,
                rho_samples,
                final_cycle: std::mem::take(&mut cycle),
                final_state: end,
                drift_form: prop.form(),
            });
        }
    }
    let final_state = cycle.last().cloned().unwrap_or_else(|| physical(&v, t0));
    Ok(Trajectory {
        verdict: Verdict::Undecided,
        periods: config.max_periods,
        boundary_rho,
        rho_samples,
        final_cycle: cycle,
        final_state,
        drift_form: prop.form(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use crate::model::{quadratic_model, PeriodicSignal, QuadraticRateParams};
    use proptest::prelude::*;

    fn constant_model(r: f64) -> GrowthRateModel {
        GrowthRateModel::from_fn(1.0, move |_, _| r).unwrap()
    }

    fn sine_model() -> GrowthRateModel {
        let p = QuadraticRateParams::new(
            2.0,
            PeriodicSignal::Constant(1.0),
            PeriodicSignal::expression("sin(2*pi*t)").unwrap(),
            1.0,
        )
        .unwrap();
        quadratic_model(p).unwrap()
    }

    fn logistic(r: f64, rho0: f64, t: f64) -> f64 {
        r * rho0 / (rho0 + (r - rho0) * (-r * t).exp())
    }

    #[test]
    fn logistic_mass_law_second_order() {
        let grid = build_grid(8.0, 513).unwrap();
        let model = constant_model(1.0);
        let err = |dt: f64| {
            let mut s = gaussian_state(&grid, 0.0, 0.5, 0.2).unwrap();
            let rho0 = s.mass_rho;
            let steps = (0.5 / dt).round() as usize;
            for _ in 0..steps {
                s = step_nonlocal(&s, &model, 0.01, 0.0, &grid, dt).unwrap();
            }
            (s.mass_rho - logistic(1.0, rho0, 0.5)).abs()
        };
        let (e1, e2) = (err(0.05), err(0.025));
        assert!(e1 < 1e-3, "{e1}");
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn one_step_matches_logistic_map() {
        let grid = build_grid(8.0, 513).unwrap();
        let s = gaussian_state(&grid, 0.0, 0.5, 0.3).unwrap();
        let dt = 0.01;
        let next = step_nonlocal(&s, &constant_model(1.5), 0.02, 0.0, &grid, dt).unwrap();
        assert!((next.mass_rho - logistic(1.5, s.mass_rho, dt)).abs() < dt * dt * 1e-2);
    }

    #[test]
    fn zero_stays_zero() {
        let grid = build_grid(4.0, 129).unwrap();
        let s = PdeState::zero(&grid, 0.0);
        let next = step_nonlocal(&s, &sine_model(), 0.01, 0.1, &grid, 0.01).unwrap();
        assert!(next.density.iter().all(|&v| v == 0.0));
        let traj = simulate(&s, &sine_model(), 0.01, 0.0, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(traj.verdict, Verdict::Extinct);
        assert_eq!(traj.periods, 0);
    }

    #[test]
    fn even_data_stays_even() {
        let grid = build_grid(4.0, 257).unwrap();
        let model = GrowthRateModel::from_fn(1.0, |t, x| 1.0 - (1.0 + 0.5 * (6.0 * t).sin()) * x * x).unwrap();
        let mut s = gaussian_state(&grid, 0.0, 0.4, 1.0).unwrap();
        for _ in 0..100 {
            s = step_nonlocal(&s, &model, 0.01, 0.0, &grid, 0.01).unwrap();
        }
        let n = grid.n_points();
        for i in 1..n - 1 {
            assert!((s.density[i] - s.density[n - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn heat_step_conserves_mass() {
        let grid = build_grid(6.0, 513).unwrap();
        let s = gaussian_state(&grid, 0.0, 0.3, 1.0).unwrap();
        let mut m = LinearState::new(0.0, s.density.clone());
        for _ in 0..20 {
            m = step_linear(&m, &constant_model(0.0), 0.05, 0.0, &grid, 0.01, false).unwrap();
        }
        assert!((integrate(&grid, &m.values) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_growth_multiplies_mass() {
        let grid = build_grid(6.0, 513).unwrap();
        let s = gaussian_state(&grid, 0.0, 0.3, 1.0).unwrap();
        let m = LinearState::new(0.0, s.density.clone());
        let dt = 0.01;
        let out = step_linear(&m, &constant_model(0.7), 0.05, 0.0, &grid, dt, false).unwrap();
        assert!((integrate(&grid, &out.values) - (0.7 * dt).exp()).abs() < dt * dt);
    }

    #[test]
    fn liouville_round_trip() {
        let grid = build_grid(6.0, 129).unwrap();
        let vals: Vec<f64> = (0..129).map(|i| 1.0 + ((i * 37) % 11) as f64).collect();
        let s = LinearState::new(0.0, vals.clone());
        let f = liouville_forward(&s, 0.0, 0.01, &grid).unwrap();
        assert_eq!(f.values, vals);
        let f = liouville_forward(&s, 0.3, 0.01, &grid).unwrap();
        let b = liouville_backward(&f, 0.3, 0.01, &grid).unwrap();
        for (a, e) in b.values.iter().zip(&vals) {
            assert!((a - e).abs() <= 1e-12 * e);
        }
        assert!(matches!(liouville_forward(&s, 2.0, 0.001, &grid), Err(Error::OverflowRisk { .. })));
    }

    #[test]
    fn drift_and_liouville_paths_agree() {
        let model = sine_model();
        let (sigma, c) = (0.04, 0.1);
        let run = |n: usize, dt: f64| {
            let grid = build_grid(4.0, n).unwrap();
            let s = gaussian_state(&grid, 0.0, 0.3, 1.0).unwrap();
            let (mut a, mut b) = (LinearState::new(0.0, s.density.clone()), LinearState::new(0.0, s.density));
            let steps = (0.25 / dt).round() as usize;
            for _ in 0..steps {
                a = step_linear(&a, &model, sigma, c, &grid, dt, false).unwrap();
                b = step_linear(&b, &model, sigma, c, &grid, dt, true).unwrap();
            }
            a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let coarse = run(257, 0.01);
        let fine = run(513, 0.005);
        assert!(coarse < 1e-3, "{coarse}");
        assert!(fine < coarse / 2.0, "{coarse} {fine}");
    }

    #[test]
    fn nonlinear_and_linear_evolutions_are_related() {
        let grid = build_grid(5.0, 257).unwrap();
        let model = sine_model();
        let s = gaussian_state(&grid, 0.0, 0.3, 0.5).unwrap();
        let dt = 0.005;
        let mut n = s.clone();
        let mut m = LinearState::new(0.0, s.density.clone());
        let mut int_rho = 0.0;
        for _ in 0..100 {
            let next = step_nonlocal(&n, &model, 0.01, 0.05, &grid, dt).unwrap();
            int_rho += 0.5 * dt * (n.mass_rho + next.mass_rho);
            n = next;
            m = step_linear(&m, &model, 0.01, 0.05, &grid, dt, false).unwrap();
        }
        let scale = n.density.iter().cloned().fold(0.0, f64::max);
        let gap = m
            .values
            .iter()
            .zip(&n.density)
            .map(|(a, b)| (a * (-int_rho).exp() - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-3 * scale, "{gap}");
    }

    #[test]
    fn propagator_matches_single_steps() {
        let grid = build_grid(4.0, 129).unwrap();
        let model = sine_model();
        let prop = LinearPropagator::new(&model, 0.02, 0.0, &grid, 64, DriftForm::Direct).unwrap();
        let s = gaussian_state(&grid, 0.0, 0.5, 1.0).unwrap();
        let mut v = s.density.clone();
        let mut scratch = vec![0.0; 129];
        let mut m = LinearState::new(0.0, s.density);
        for j in 0..10 {
            prop.step(&mut v, j, &mut scratch);
            m = step_linear(&m, &model, 0.02, 0.0, &grid, prop.dt(), false).unwrap();
        }
        for (a, b) in v.iter().zip(&m.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn gaussian_default_state() {
        let grid = build_grid(6.0, 2049).unwrap();
        let s = gaussian_state(&grid, 0.0, 0.1f64.sqrt(), 1.0).unwrap();
        assert!((s.mass_rho - 1.0).abs() < 1e-14);
        let (mean, var) = s.moments(&grid);
        assert!(mean.abs() < 1e-12);
        assert!((var - 0.1).abs() < 1e-6);
    }

    #[test]
    fn simulate_reaches_periodic_regime_without_drift() {
        let grid = build_grid(4.0, 257).unwrap();
        let model = GrowthRateModel::from_fn(1.0, |_, x| 1.0 - x * x).unwrap();
        let s = gaussian_state(&grid, 0.3, 0.5, 0.3).unwrap();
        let cfg = SolverConfig { steps_per_period: 64, max_periods: 300, ..Default::default() };
        let traj = simulate(&s, &model, 0.01, 0.0, &grid, &cfg).unwrap();
        assert_eq!(traj.verdict, Verdict::Periodic);
        // Harmonic ground level: rho tends to 1 - sqrt(sigma).
        assert!((traj.final_state.mass_rho - 0.9).abs() < 1e-3, "{}", traj.final_state.mass_rho);
        assert_eq!(traj.final_cycle.len(), 65);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SolverConfig { steps_per_period: 32, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn positivity_preserved(a in 0.0f64..2.0, b in -1.0f64..1.0, w in 0.1f64..1.0,
                                c in -0.5f64..0.5, logsig in -6.0f64..-1.0) {
            let grid = build_grid(3.0, 129).unwrap();
            let sigma = 10f64.powf(logsig);
            let d = grid.sample(|x| a * (-(x - b).powi(2) / w).exp() * (1.0 + 0.5 * (5.0 * x).sin()));
            let s = PdeState::new(&grid, 0.0, d).unwrap();
            let next = step_nonlocal(&s, &sine_model(), sigma, c, &grid, 0.01).unwrap();
            prop_assert!(next.density.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn comparison_principle(a in 0.1f64..2.0, extra in 0.0f64..1.0, b in -1.0f64..1.0, c in -0.3f64..0.3) {
            let grid = build_grid(3.0, 129).unwrap();
            let lo = grid.sample(|x| a * (-(x - b).powi(2)).exp());
            let hi: Vec<f64> = lo.iter().zip(grid.nodes()).map(|(v, x)| v + extra * (-(x * x)).exp()).collect();
            let (mut p, mut q) = (LinearState::new(0.0, lo), LinearState::new(0.0, hi));
            for _ in 0..20 {
                p = step_linear(&p, &sine_model(), 0.01, c, &grid, 0.01, false).unwrap();
                q = step_linear(&q, &sine_model(), 0.01, c, &grid, 0.01, false).unwrap();
            }
            prop_assert!(p.values.iter().zip(&q.values).all(|(x, y)| *x <= *y + 1e-10));
        }
    }
}
