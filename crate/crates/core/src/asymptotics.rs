//! Small-mutation limit `sigma = eps^2`, `c_tilde = c eps`.
//!
//! The density concentrates as `n ~ exp(psi(x)/eps + phi(t, x))` around the lag
//! trait `x_bar`, where `psi` solves `-|psi_x + c/2|^2 = abar(x) - rho_bar - c^2/4`
//! and is known in closed form. This module evaluates `psi`, its derivatives,
//! the corrector `phi_x`, the expansions of `rho_bar` and the critical speed,
//! and the mean/variance predictions compared against simulated densities.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discretization::Grid1D;
use crate::error::{Error, Result};
use crate::model::{averaged_rate, quadratic_model, AveragedRate, GrowthRateModel, QuadraticRateParams};
use crate::numerics::{diff1, gauss_legendre, gauss_legendre_rule, simpson, trapezoid};
use crate::pde_engine::{PdeState, Trajectory, Verdict};

/// Densities below this are floored before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Half-width of the window around `x_m` where removable singularities are filled in.
pub const XM_WINDOW: f64 = 1e-3;
const PSI_XX_WINDOW: f64 = 1e-4;
const QUAD_TOL: f64 = 1e-14;
const GL_ORDER: usize = 20;
const MAX_PANELS: usize = 1 << 12;
const TIME_INTERVALS: usize = 512;

/// `psi_eps = eps (ln n + ln(2 pi eps) / 2)` at every node.
pub fn hopf_cole(state: &PdeState, epsilon: f64) -> Vec<f64> {
    let shift = 0.5 * (2.0 * std::f64::consts::PI * epsilon).ln();
    state.density.iter().map(|&n| epsilon * (n.max(DENSITY_FLOOR).ln() + shift)).collect()
}

/// Inverse of [`hopf_cole`].
pub fn inverse_hopf_cole(psi: &[f64], epsilon: f64) -> Vec<f64> {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * epsilon).sqrt();
    psi.iter().map(|p| norm * (p / epsilon).exp()).collect()
}

/// Lag trait: the root of `abar(x) = abar(x_m) - c^2/4` closest to `x_m` on its left.
pub fn solve_xbar(avg: &AveragedRate, c: f64) -> Result<f64> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("rescaled speed must be nonnegative, got {c}")));
    }
    if c == 0.0 {
        return Ok(avg.x_m);
    }
    let target = avg.abar_max - 0.25 * c * c;
    let f = |x: f64| avg.abar(x) - target;
    let lo = avg.bracket.0;
    let samples = 4000;
    let h = (avg.x_m - lo) / samples as f64;
    let mut root = None;
    let mut prev = (avg.x_m, f(avg.x_m));
    for i in 1..=samples {
        let x = avg.x_m - i as f64 * h;
        let v = f(x);
        if (prev.1 > 0.0) != (v > 0.0) {
            match root {
                None => root = Some(bisect(&f, x, prev.0)),
                Some(first) => return Err(Error::AmbiguousRoot { first, second: x }),
            }
        }
        prev = (x, v);
    }
    root.ok_or(Error::NoRoot)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa_pos = f(a) > 0.0;
    while (b - a).abs() > 1e-13 * (1.0 + a.abs()) {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == fa_pos {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Explicit solution of the limiting Hamilton-Jacobi equation.
#[derive(Debug, Clone)]
pub struct HJProfile {
    avg: AveragedRate,
    pub c: f64,
    pub x_m: f64,
    pub x_bar: f64,
    pub rho_bar: f64,
    /// `int_{x_bar}^{x_m} sqrt(abar(x_m) - abar)`.
    offset: f64,
    rule: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub c: f64,
    pub x_m: f64,
    pub x_bar: f64,
    pub rho_bar: f64,
}

impl HJProfile {
    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary { c: self.c, x_m: self.x_m, x_bar: self.x_bar, rho_bar: self.rho_bar }
    }

    pub fn averaged(&self) -> &AveragedRate {
        &self.avg
    }

    fn root_deficit(&self, x: f64) -> f64 {
        self.avg.deficit(x).max(0.0).sqrt()
    }

    /// `int_a^b sqrt(abar(x_m) - abar)` for `a`, `b` on one side of `x_m`, where the
    /// integrand is smooth; panels double until two passes agree.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let f = |y: f64| self.root_deficit(y);
        let mut panels = ((b - a).abs() / 0.5).ceil().max(1.0) as usize;
        let mut coarse = gauss_legendre(&f, a, b, &self.rule, panels);
        while panels < MAX_PANELS {
            panels *= 2;
            let fine = gauss_legendre(&f, a, b, &self.rule, panels);
            let done = (fine - coarse).abs() <= QUAD_TOL * fine.abs().max(1.0);
            coarse = fine;
            if done {
                break;
            }
        }
        coarse
    }

    pub fn psi(&self, x: f64) -> f64 {
        0.5 * self.c * (self.x_bar - x) + self.offset - self.integral(self.x_m, x).abs()
    }

    /// `psi` at sorted points, integrating outward from `x_m` piece by piece.
    pub fn psi_on(&self, xs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; xs.len()];
        let split = xs.partition_point(|&x| x < self.x_m);
        let (mut acc, mut at) = (0.0, self.x_m);
        for i in split..xs.len() {
            acc += self.integral(at, xs[i]);
            at = xs[i];
            out[i] = 0.5 * self.c * (self.x_bar - xs[i]) + self.offset - acc;
        }
        let (mut acc, mut at) = (0.0, self.x_m);
        for i in (0..split).rev() {
            acc += self.integral(xs[i], at);
            at = xs[i];
            out[i] = 0.5 * self.c * (self.x_bar - xs[i]) + self.offset - acc;
        }
        out
    }

    /// Branch formula `-c/2 +- sqrt(abar(x_m) - abar(x))`.
    pub fn psi_x(&self, x: f64) -> f64 {
        let s = self.root_deficit(x);
        match x.partial_cmp(&self.x_m) {
            Some(Ordering::Less) => -0.5 * self.c + s,
            Some(Ordering::Greater) => -0.5 * self.c - s,
            _ => -0.5 * self.c,
        }
    }

    pub fn psi_xx(&self, x: f64) -> f64 {
        psi_second_derivative(&self.avg, x)
    }

    /// `-|psi_x + c/2|^2 - abar(x) + rho_bar + c^2/4` with `psi_x` supplied.
    pub fn hj_residual_with(&self, x: f64, psi_x: f64) -> f64 {
        let p = psi_x + 0.5 * self.c;
        -p * p - self.avg.abar(x) + self.rho_bar + 0.25 * self.c * self.c
    }

    pub fn hj_residual(&self, x: f64) -> f64 {
        self.hj_residual_with(x, self.psi_x(x))
    }

    /// Slope `c2 = -c/2 + sqrt(delta + c^2/2)` and the smallest `c1` with
    /// `psi <= c1 - c2 |x|` on the given points.
    pub fn linear_bound(&self, delta: f64, xs: &[f64]) -> (f64, f64) {
        let c2 = -0.5 * self.c + (delta + 0.5 * self.c * self.c).sqrt();
        let psi = self.psi_on(xs);
        let c1 = xs.iter().zip(&psi).map(|(x, p)| p + c2 * x.abs()).fold(f64::NEG_INFINITY, f64::max);
        (c1, c2)
    }
}

/// `psi` for the averaged rate, lag trait and rescaled speed.
pub fn explicit_psi(avg: &AveragedRate, x_bar: f64, c: f64) -> Result<HJProfile> {
    let (lo, hi) = avg.bracket;
    let samples = 4000;
    for i in 0..=samples {
        let x = lo + (hi - lo) * i as f64 / samples as f64;
        let value = avg.deficit(x);
        if value < -1e-12 {
            return Err(Error::NegativeRadicand { x, value });
        }
    }
    let mut profile = HJProfile {
        avg: avg.clone(),
        c,
        x_m: avg.x_m,
        x_bar,
        rho_bar: avg.abar_max - 0.25 * c * c,
        offset: 0.0,
        rule: gauss_legendre_rule(GL_ORDER),
    };
    profile.offset = profile.integral(x_bar, avg.x_m);
    Ok(profile)
}

/// Three-branch formula for `psi_xx`, with its limit `-sqrt(-abar_xx(x_m)/2)` at `x_m`.
pub fn psi_second_derivative(avg: &AveragedRate, x: f64) -> f64 {
    let alpha = (-0.5 * avg.abar_dxx_at_xm).max(0.0);
    let u = x - avg.x_m;
    if u.abs() < PSI_XX_WINDOW {
        // psi is C^3 at x_m with psi_xxx = (abar_xxx / 6) / sqrt(alpha).
        let slope = if alpha > 0.0 { -avg.abar_dxxx(avg.x_m) / 6.0 / alpha.sqrt() } else { 0.0 };
        return -alpha.sqrt() + slope * u;
    }
    let root = avg.deficit(x).max(0.0).sqrt();
    let ax = avg.abar_dx(x);
    if u < 0.0 {
        -ax / (2.0 * root)
    } else {
        ax / (2.0 * root)
    }
}

/// First-order corrector data.
#[derive(Debug, Clone)]
pub struct CorrectorData {
    model: GrowthRateModel,
    avg: AveragedRate,
    pub x_bar: f64,
    pub lambda2: f64,
    /// `phi_x(0, x_m)` from the closed-form limit.
    pub phi_x0_at_xm: f64,
    /// `phi_xx(0, x_m)` from the closed-form limit.
    pub phi_xx0_at_xm: f64,
    phi_x0_at_xbar: f64,
}

impl CorrectorData {
    /// `G(x) = -(1/T) int_0^T (T - tau) a_x(tau, x) dtau + (T/2) abar_x(x)`.
    pub fn g(&self, x: f64) -> f64 {
        let t = self.model.period();
        -simpson(|tau| (t - tau) * self.model.rate_dx(tau, x), 0.0, t, TIME_INTERVALS) / t
            + 0.5 * t * self.avg.abar_dx(x)
    }

    fn branch(&self, x: f64) -> f64 {
        let f = self.avg.deficit(x).max(0.0);
        let root = (-2.0 * self.avg.abar_dxx_at_xm * f).sqrt();
        let ax = self.avg.abar_dx(x);
        if x < self.avg.x_m {
            (ax - root) / (4.0 * f)
        } else {
            (ax + root) / (4.0 * f)
        }
    }

    fn phi_x0_raw(&self, x: f64) -> f64 {
        self.g(x) + self.branch(x)
    }

    /// `phi_x(0, x)`; inside `|x - x_m| < XM_WINDOW` a cubic through the limit
    /// value, limit slope and the formula values at the window edges.
    pub fn phi_x0(&self, x: f64) -> f64 {
        let xm = self.avg.x_m;
        let u = x - xm;
        if u.abs() >= XM_WINDOW {
            return self.phi_x0_raw(x);
        }
        let w = XM_WINDOW;
        let (left, right) = (self.phi_x0_raw(xm - w), self.phi_x0_raw(xm + w));
        let (v0, s0) = (self.phi_x0_at_xm, self.phi_xx0_at_xm);
        // p(u) = v0 + s0 u + q u^2 + r u^3 through both edge values.
        let even = 0.5 * (left + right) - v0;
        let odd = 0.5 * (right - left) - s0 * w;
        v0 + s0 * u + even / (w * w) * u * u + odd / (w * w * w) * u * u * u
    }

    /// `phi_x(t, x) = phi_x(0, x) + int_0^t a_x(s, x) ds - t abar_x(x)`.
    pub fn phi_x(&self, t: f64, x: f64) -> f64 {
        let base = if x == self.x_bar { self.phi_x0_at_xbar } else { self.phi_x0(x) };
        base + self.drift_part(t, x)
    }

    fn drift_part(&self, t: f64, x: f64) -> f64 {
        let period = self.model.period();
        let tau = t.rem_euclid(period);
        if tau == 0.0 {
            return 0.0;
        }
        let n = ((TIME_INTERVALS as f64 * tau / period).ceil() as usize).max(2);
        simpson(|s| self.model.rate_dx(s, x), 0.0, tau, n) - tau * self.avg.abar_dx(x)
    }

    /// `D(t) = phi_x(t, x_bar)`.
    pub fn d(&self, t: f64) -> f64 {
        self.phi_x0_at_xbar + self.drift_part(t, self.x_bar)
    }

    /// `max |phi_x|^2 + |phi_xx|` over `times x xs`, with `phi_xx` by central differences.
    pub fn k_bound(&self, xs: &[f64], n_times: usize) -> f64 {
        let period = self.model.period();
        let base: Vec<f64> = xs.iter().map(|&x| self.phi_x0(x)).collect();
        let mut k: f64 = 0.0;
        for j in 0..n_times.max(1) {
            let t = j as f64 * period / n_times.max(1) as f64;
            let px: Vec<f64> = xs.iter().zip(&base).map(|(&x, b)| b + self.drift_part(t, x)).collect();
            for i in 1..xs.len().saturating_sub(1) {
                let pxx = (px[i + 1] - px[i - 1]) / (xs[i + 1] - xs[i - 1]);
                k = k.max(px[i] * px[i] + pxx.abs());
            }
        }
        k
    }
}

/// Builds the corrector for a profile.
pub fn corrector(model: &GrowthRateModel, avg: &AveragedRate, profile: &HJProfile) -> Result<CorrectorData> {
    let a2 = avg.abar_dxx_at_xm;
    if a2 >= -1e-10 {
        return Err(Error::DegenerateCurvature { abar_xx: a2 });
    }
    let a3 = avg.abar_dxxx(avg.x_m);
    let mut data = CorrectorData {
        model: model.clone(),
        avg: avg.clone(),
        x_bar: profile.x_bar,
        lambda2: (-0.5 * a2).sqrt(),
        phi_x0_at_xm: 0.0,
        phi_xx0_at_xm: 0.0,
        phi_x0_at_xbar: 0.0,
    };
    let xm = avg.x_m;
    let a4 = avg.abar_dxxxx(xm);
    let g_slope = diff1(&|x| data.g(x), xm, 1e-3 * xm.abs().max(1.0));
    data.phi_x0_at_xm = data.g(xm) - a3 / (6.0 * a2);
    // Second-order expansion of the branch term around x_m.
    data.phi_xx0_at_xm = g_slope + 7.0 * a3 * a3 / (144.0 * a2 * a2) - a4 / (16.0 * a2);
    data.phi_x0_at_xbar = data.phi_x0(profile.x_bar);
    Ok(data)
}

/// Coefficients of `psi(x) = -A/2 y^2 + B y^3 + C y^4 + ...`, `y = x - x_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `A = -psi_xx(x_bar)`; `B`, `C` from a least-squares quartic on `|x - x_bar| <= 0.2`.
pub fn taylor_coefficients(profile: &HJProfile) -> Result<TaylorCoefficients> {
    let half = 0.2;
    let m = 201;
    let xs: Vec<f64> = (0..m).map(|i| profile.x_bar - half + 2.0 * half * i as f64 / (m - 1) as f64).collect();
    let psi = profile.psi_on(&xs);
    // Scale the abscissa to [-1, 1] for conditioning.
    let design = DMatrix::from_fn(m, 5, |i, j| ((xs[i] - profile.x_bar) / half).powi(j as i32));
    let rhs = DVector::from_vec(psi);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidInput(format!("quartic fit failed: {e}")))?;
    let a = -profile.psi_xx(profile.x_bar);
    Ok(TaylorCoefficients { a, b: coef[3] / half.powi(3), c: coef[4] / half.powi(4) })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSample {
    pub t: f64,
    pub d: f64,
    pub mu_measured: f64,
    pub mu_predicted: f64,
    pub var_measured: f64,
    pub var_predicted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub epsilon: f64,
    pub x_bar: f64,
    pub samples: Vec<MomentSample>,
    pub mean_average: f64,
    pub var_average: f64,
    pub max_mu_gap: f64,
    pub max_var_gap: f64,
}

/// Measured mean and variance over the final cycle of a periodic trajectory,
/// next to `x_bar + eps (3B/A^2 + D(t)/A)` and `eps / A`.
pub fn measure_moments(
    traj: &Trajectory,
    grid: &Grid1D,
    epsilon: f64,
    corrector: &CorrectorData,
    taylor: &TaylorCoefficients,
) -> Result<MomentReport> {
    if traj.verdict != Verdict::Periodic && traj.final_cycle.len() < 3 {
        return Err(Error::InvalidInput("moments need the final cycle of a surviving trajectory".into()));
    }
    let states = &traj.final_cycle;
    let (a, b) = (taylor.a, taylor.b);
    let samples: Vec<MomentSample> = states
        .iter()
        .map(|s| {
            let (mu, var) = s.moments(grid);
            let d = corrector.d(s.time);
            MomentSample {
                t: s.time,
                d,
                mu_measured: mu,
                mu_predicted: corrector.x_bar + epsilon * (3.0 * b / (a * a) + d / a),
                var_measured: var,
                var_predicted: epsilon / a,
            }
        })
        .collect();
    let span = states.last().unwrap().time - states[0].time;
    let h = span / (states.len() - 1) as f64;
    let avg = |f: &dyn Fn(&MomentSample) -> f64| trapezoid(&samples.iter().map(f).collect::<Vec<_>>(), h) / span;
    let mean_average = avg(&|s| s.mu_measured);
    let var_average = avg(&|s| s.var_measured);
    let max_mu_gap = samples.iter().map(|s| (s.mu_measured - s.mu_predicted).abs()).fold(0.0, f64::max);
    let max_var_gap = samples.iter().map(|s| (s.var_measured - s.var_predicted).abs()).fold(0.0, f64::max);
    Ok(MomentReport { epsilon, x_bar: corrector.x_bar, samples, mean_average, var_average, max_mu_gap, max_var_gap })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionEntry {
    pub epsilon: f64,
    pub rho_bar: f64,
    /// Rescaled critical speed `c*_eps`.
    pub c_star: f64,
    /// Unscaled critical speed `eps c*_eps`.
    pub c_tilde_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticReport {
    pub c: f64,
    pub x_m: f64,
    pub abar_max: f64,
    pub abar_xx: f64,
    pub lambda2: f64,
    pub rho_bar_limit: f64,
    pub c_star_limit: f64,
    pub entries: Vec<ExpansionEntry>,
}

/// First-order expansions of `rho_bar_eps` and `c*_eps`.
pub fn expansion_report(avg: &AveragedRate, c: f64, epsilons: &[f64]) -> Result<AsymptoticReport> {
    let a2 = avg.abar_dxx_at_xm;
    if a2 >= -1e-10 {
        return Err(Error::DegenerateCurvature { abar_xx: a2 });
    }
    let lambda2 = (-0.5 * a2).sqrt();
    let top = avg.abar_max;
    let entries = epsilons
        .iter()
        .map(|&eps| {
            let c_star = 2.0 * top.sqrt() - eps * (-a2 / (2.0 * top)).sqrt();
            ExpansionEntry { epsilon: eps, rho_bar: top - 0.25 * c * c - eps * lambda2, c_star, c_tilde_star: eps * c_star }
        })
        .collect();
    Ok(AsymptoticReport {
        c,
        x_m: avg.x_m,
        abar_max: top,
        abar_xx: a2,
        lambda2,
        rho_bar_limit: top - 0.25 * c * c,
        c_star_limit: 2.0 * top.sqrt(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseValues {
    pub rho_bar: f64,
    pub mean_trait: f64,
    pub c_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseComparison {
    pub epsilon: f64,
    pub c: f64,
    pub periodic: CaseValues,
    pub constant: CaseValues,
    /// `periodic` compared with `constant`.
    #[serde(serialize_with = "ser_ordering")]
    pub rho_bar_order: Ordering,
    #[serde(serialize_with = "ser_ordering")]
    pub c_star_order: Ordering,
}

fn ser_ordering<S: serde::Serializer>(o: &Ordering, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match o {
        Ordering::Less => "periodic < constant",
        Ordering::Equal => "periodic = constant",
        Ordering::Greater => "periodic > constant",
    })
}

fn order(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

impl CaseComparison {
    pub fn from_values(epsilon: f64, c: f64, periodic: CaseValues, constant: CaseValues) -> Self {
        Self {
            epsilon,
            c,
            periodic,
            constant,
            rho_bar_order: order(periodic.rho_bar, constant.rho_bar),
            c_star_order: order(periodic.c_star, constant.c_star),
        }
    }
}

/// Formula values for one quadratic scenario: `rho_bar_eps`, `<mu>` and `c*_eps`.
pub fn quadratic_case_values(params: &QuadraticRateParams, c: f64, epsilon: f64) -> CaseValues {
    let q = params.averages();
    let top = q.abar_max();
    let root_g = q.gbar.sqrt();
    CaseValues {
        rho_bar: top - 0.25 * c * c - epsilon * root_g,
        mean_trait: q.x_m() - c / (2.0 * root_g),
        c_star: 2.0 * top.sqrt() - epsilon * (q.gbar / top).sqrt(),
    }
}

/// Formula-based comparison of a periodic and a constant environment.
pub fn case_comparison(
    params_periodic: &QuadraticRateParams,
    params_constant: &QuadraticRateParams,
    c: f64,
    epsilon: f64,
) -> Result<CaseComparison> {
    for p in [params_periodic, params_constant] {
        quadratic_model(p.clone())?;
    }
    Ok(CaseComparison::from_values(
        epsilon,
        c,
        quadratic_case_values(params_periodic, c, epsilon),
        quadratic_case_values(params_constant, c, epsilon),
    ))
}

/// Averaged rate, lag trait, profile and corrector for a model in one call.
pub fn limit_objects(
    model: &GrowthRateModel,
    c: f64,
    quadrature_points: usize,
    bracket: (f64, f64),
) -> Result<(AveragedRate, HJProfile, CorrectorData)> {
    let avg = averaged_rate(model, quadrature_points, bracket)?;
    let x_bar = solve_xbar(&avg, c)?;
    let profile = explicit_psi(&avg, x_bar, c)?;
    let corr = corrector(model, &avg, &profile)?;
    Ok((avg, profile, corr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use crate::model::PeriodicSignal;
    use std::f64::consts::PI;

    fn sine_params() -> QuadraticRateParams {
        QuadraticRateParams::new(2.0, PeriodicSignal::Constant(1.0), PeriodicSignal::expression("sin(2*pi*t)").unwrap(), 1.0)
            .unwrap()
    }

    fn sine_objects(c: f64) -> (GrowthRateModel, AveragedRate, HJProfile, CorrectorData) {
        let model = quadratic_model(sine_params()).unwrap();
        let (avg, prof, corr) = limit_objects(&model, c, 512, (-6.0, 6.0)).unwrap();
        (model, avg, prof, corr)
    }

    fn quartic_model() -> GrowthRateModel {
        GrowthRateModel::from_fn_with_derivatives(
            1.0,
            |_, x| 1.0 - x * x - 0.3 * x.powi(4),
            |_, x| -2.0 * x - 1.2 * x.powi(3),
            |_, x| -2.0 - 3.6 * x * x,
            |_, x| -7.2 * x,
        )
        .unwrap()
    }

    #[test]
    fn hopf_cole_inverts_gaussian_ansatz() {
        let grid = build_grid(3.0, 129).unwrap();
        let eps: f64 = 0.1;
        let d = grid.sample(|x| (-x * x / (2.0 * eps)).exp() / (2.0 * PI * eps).sqrt());
        let s = PdeState::new(&grid, 0.0, d.clone()).unwrap();
        let psi = hopf_cole(&s, eps);
        for (p, x) in psi.iter().zip(grid.nodes()) {
            assert!((p + 0.5 * x * x).abs() < 1e-12);
        }
        for (a, b) in inverse_hopf_cole(&psi, eps).iter().zip(&d) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn lag_trait_values() {
        let (_, avg, _, _) = sine_objects(1.0);
        assert_eq!(solve_xbar(&avg, 0.0).unwrap(), avg.x_m);
        assert!((solve_xbar(&avg, 1.0).unwrap() + 0.5).abs() < 1e-12);
        let p = QuadraticRateParams::new(2.0, PeriodicSignal::Constant(1.25), PeriodicSignal::Constant(0.4), 1.0).unwrap();
        let avg = averaged_rate(&quadratic_model(p).unwrap(), 64, (-6.0, 6.0)).unwrap();
        let expected = 0.4 - 0.7 / (2.0 * 1.25f64.sqrt());
        assert!((solve_xbar(&avg, 0.7).unwrap() - expected).abs() < 1e-11);
        assert!(matches!(solve_xbar(&avg, 20.0), Err(Error::NoRoot)));
    }

    #[test]
    fn ambiguous_lag_is_reported() {
        // abar dips below the target level twice to the left of x_m.
        let m = GrowthRateModel::from_fn(1.0, |_, x| if x > -1.0 { 1.0 - x * x } else { 0.5 * (x + 2.0).powi(2) - 0.5 })
            .unwrap();
        let avg = averaged_rate(&m, 16, (-3.0, 3.0)).unwrap();
        assert!(matches!(solve_xbar(&avg, 2.28), Err(Error::AmbiguousRoot { .. })));
    }

    #[test]
    fn quadratic_profile_is_parabola() {
        let (_, _, prof, _) = sine_objects(1.0);
        assert!((prof.rho_bar - 1.25).abs() < 1e-12);
        for &x in &[-2.0, -0.5, 0.0, 0.3, 1.7] {
            let exact = -0.5 * (x + 0.5) * (x + 0.5);
            assert!((prof.psi(x) - exact).abs() < 1e-10, "{x}");
            assert!((prof.psi_xx(x) + 1.0).abs() < 1e-9);
        }
        assert!(prof.psi(-0.5).abs() < 1e-12);
        let xs: Vec<f64> = (0..101).map(|i| -3.0 + 0.06 * i as f64).collect();
        let batch = prof.psi_on(&xs);
        for (x, p) in xs.iter().zip(&batch) {
            assert!((p - prof.psi(*x)).abs() < 1e-11);
        }
    }

    #[test]
    fn profile_maximum_at_lag_trait() {
        let (_, avg, prof, _) = sine_objects(1.0);
        let h = 1e-4;
        assert!((prof.psi(prof.x_bar + h) - prof.psi(prof.x_bar - h)).abs() / (2.0 * h) < 1e-8);
        let x = prof.x_bar;
        assert!(prof.psi(x + h) - 2.0 * prof.psi(x) + prof.psi(x - h) <= 0.0);
        assert!(prof.psi_x(avg.x_m - 0.3) > -0.5 && prof.psi_x(avg.x_m + 0.3) < -0.5);
    }

    #[test]
    fn quartic_profile_checks() {
        let model = quartic_model();
        let (avg, prof, _) = limit_objects(&model, 0.8, 64, (-4.0, 4.0)).unwrap();
        let xs: Vec<f64> = (0..=800).map(|i| -3.0 + 6.0 * i as f64 / 800.0).collect();
        let psi = prof.psi_on(&xs);
        let (imax, _) = psi.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert!((xs[imax] - prof.x_bar).abs() <= 0.0075 + 1e-12);
        assert!(prof.psi(prof.x_bar).abs() < 1e-12);
        for &x in &xs {
            if (x - avg.x_m).abs() > XM_WINDOW {
                assert!(prof.hj_residual(x).abs() < 1e-12);
            }
        }
        // One-sided second derivatives at x_m agree (symmetric average).
        let l = psi_second_derivative(&avg, avg.x_m - 1e-4);
        let r = psi_second_derivative(&avg, avg.x_m + 1e-4);
        assert!((l - r).abs() < 1e-6);
        assert!((psi_second_derivative(&avg, avg.x_m) + 1.0).abs() < 1e-9);
        let (c1, c2) = prof.linear_bound(0.5, &xs);
        assert!(c2 > 0.0 && c1.is_finite());
    }

    #[test]
    fn quadratic_corrector_matches_closed_form() {
        let (_, _, _, corr) = sine_objects(1.0);
        assert!((corr.lambda2 - 1.0).abs() < 1e-12);
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let exact = -(2.0 * PI * t).cos() / PI;
            assert!((corr.d(t) - exact).abs() < 1e-9, "{t}: {} vs {exact}", corr.d(t));
        }
        let mean = simpson(|t| corr.d(t), 0.0, 1.0, 200);
        assert!(mean.abs() < 1e-9);
        assert!((corr.d(0.0) - corr.d(1.0)).abs() < 1e-12);
    }

    #[test]
    fn corrector_fills_removable_singularity() {
        let model = quartic_model();
        let (avg, prof, corr) = limit_objects(&model, 0.8, 64, (-4.0, 4.0)).unwrap();
        // Constant in time: G vanishes, phi_x(0, .) is the branch term alone.
        assert!(corr.g(0.7).abs() < 1e-10);
        assert!((corr.lambda2 - 1.0).abs() < 1e-9);
        assert!((corr.lambda2 + prof.psi_xx(avg.x_m)).abs() < 1e-10);
        // Smooth across the blending window.
        let xs: Vec<f64> = (-30..=30).map(|i| avg.x_m + i as f64 * 1e-4).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| corr.phi_x0(x)).collect();
        for w in vals.windows(3) {
            assert!((w[0] - 2.0 * w[1] + w[2]).abs() < 1e-6, "{w:?}");
        }
        assert!((corr.phi_x0(avg.x_m) - corr.phi_x0_at_xm).abs() < 1e-15);
        assert!((corr.phi_xx0_at_xm + 0.225).abs() < 1e-8);
        for &u in &[-0.2, -0.01, 0.01, 0.2] {
            let exact = -0.225 * u * (1.0 + 0.2 * u * u) / (1.0 + 0.3 * u * u);
            assert!((corr.phi_x0(avg.x_m + u) - exact).abs() < 2e-3 * u.abs(), "{u}");
        }
        let grid: Vec<f64> = (0..=200).map(|i| -2.0 + 0.02 * i as f64).collect();
        assert!(corr.k_bound(&grid, 4).is_finite());
    }

    #[test]
    fn constant_environment_has_constant_d() {
        let model = quartic_model();
        let (_, _, corr) = limit_objects(&model, 0.8, 64, (-4.0, 4.0)).unwrap();
        for &t in &[0.25, 0.6] {
            assert!((corr.d(t) - corr.d(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_curvature_is_rejected() {
        let model = GrowthRateModel::from_fn_with_derivatives(
            1.0,
            |_, x| 1.0 - x.powi(4),
            |_, x| -4.0 * x.powi(3),
            |_, x| -12.0 * x * x,
            |_, x| -24.0 * x,
        )
        .unwrap();
        let avg = averaged_rate(&model, 16, (-2.0, 2.0)).unwrap();
        let prof = explicit_psi(&avg, avg.x_m, 0.0).unwrap();
        assert!(matches!(corrector(&model, &avg, &prof), Err(Error::DegenerateCurvature { .. })));
    }

    #[test]
    fn taylor_coefficients_of_parabola() {
        let (_, _, prof, _) = sine_objects(1.0);
        let tc = taylor_coefficients(&prof).unwrap();
        assert!((tc.a - 1.0).abs() < 1e-9);
        assert!(tc.b.abs() < 1e-7 && tc.c.abs() < 1e-6);
    }

    #[test]
    fn expansion_values() {
        let (_, avg, _, _) = sine_objects(1.0);
        let rep = expansion_report(&avg, 1.0, &[0.1]).unwrap();
        assert!((rep.entries[0].rho_bar - 1.15).abs() < 1e-12);
        let expected = 2.0 * 1.5f64.sqrt() - 0.1 * (1.0f64 / 1.5).sqrt();
        assert!((rep.entries[0].c_star - expected).abs() < 1e-12);
        let rep0 = expansion_report(&avg, 0.0, &[0.0]).unwrap();
        assert!((rep0.entries[0].rho_bar - 1.5).abs() < 1e-12);
    }

    #[test]
    fn case_orderings_from_formulas() {
        let c1p = sine_params();
        let c1c = QuadraticRateParams::new(2.0, PeriodicSignal::Constant(1.0), PeriodicSignal::Constant(0.0), 1.0).unwrap();
        let cmp = case_comparison(&c1p, &c1c, 1.0, 0.1).unwrap();
        assert_eq!(cmp.rho_bar_order, Ordering::Less);
        assert_eq!(cmp.c_star_order, Ordering::Less);
        let c2p = QuadraticRateParams::new(
            2.0,
            PeriodicSignal::expression("2 - 1.5*sin(2*pi*t)*sin(2*pi*t)").unwrap(),
            PeriodicSignal::Constant(0.0),
            1.0,
        )
        .unwrap();
        assert!((c2p.gbar - 1.25).abs() < 1e-12);
        let c2c = QuadraticRateParams::new(2.0, PeriodicSignal::Constant(2.0), PeriodicSignal::Constant(0.0), 1.0).unwrap();
        let cmp = case_comparison(&c2p, &c2c, 1.0, 0.1).unwrap();
        assert_eq!(cmp.rho_bar_order, Ordering::Greater);
        assert_eq!(cmp.c_star_order, Ordering::Greater);
        let same = case_comparison(&c1c, &c1c, 1.0, 0.1).unwrap();
        assert_eq!(same.rho_bar_order, Ordering::Equal);
        assert_eq!(same.c_star_order, Ordering::Equal);
    }
}
