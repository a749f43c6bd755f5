//! Periodic environments and growth-rate landscapes.
//!
//! The environment state never appears explicitly: a landscape is the
//! composed rate `a(t, x) = a(e(t), x)`, periodic in `t` with period `T`.
//! [`averaged_rate`] computes the period average `abar(x)` and locates its
//! maximiser `x_m`; [`quadratic_model`] builds the family
//! `a(t, x) = r - g(t) (x - theta(t))^2` with closed-form averages.

use std::fmt;
use std::sync::Arc;

use evalexpr::error::EvalexprResultValue;
use evalexpr::{
    build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult,
    Node, Value,
};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{diff1, diff2, diff3, simpson, PeriodicSamples};

/// Minimum number of period subintervals for averaging.
pub const MIN_QUADRATURE_POINTS: usize = 16;

/// Subintervals used for the period averages of the quadratic family.
const SIGNAL_QUADRATURE: usize = 4096;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type RateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A scalar function of time, periodic by construction or by the caller's promise.
#[derive(Clone)]
pub enum PeriodicSignal {
    Constant(f64),
    /// Expression in `t` (with `pi` and the usual elementary functions).
    Expression { source: String, tree: Node<DefaultNumericTypes> },
    /// Uniform samples over one period, interpolated cubically.
    Tabulated(PeriodicSamples),
    Function(ScalarFn),
}

impl fmt::Debug for PeriodicSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => write!(f, "Constant({v})"),
            Self::Expression { source, .. } => write!(f, "Expression({source:?})"),
            Self::Tabulated(s) => write!(f, "Tabulated({} samples)", s.samples().len()),
            Self::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Evaluation context binding `t` and `pi`, plus unprefixed math functions.
struct TimeContext {
    t: Value<DefaultNumericTypes>,
    pi: Value<DefaultNumericTypes>,
}

impl Context for TimeContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value<DefaultNumericTypes>> {
        match identifier {
            "t" => Some(&self.t),
            "pi" => Some(&self.pi),
            _ => None,
        }
    }

    fn call_function(
        &self,
        identifier: &str,
        argument: &Value<DefaultNumericTypes>,
    ) -> EvalexprResultValue<DefaultNumericTypes> {
        let f: fn(f64) -> f64 = match identifier {
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            "exp" => f64::exp,
            "ln" => f64::ln,
            "sqrt" => f64::sqrt,
            "abs" => f64::abs,
            "tanh" => f64::tanh,
            _ => return Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string())),
        };
        Ok(Value::Float(f(argument.as_number()?)))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Ok(())
    }
}

impl PeriodicSignal {
    /// Parses an expression in `t`. Integer literals use integer arithmetic,
    /// so write `0.5` rather than `1/2`.
    pub fn expression(source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| Error::Expression {
            expr: source.to_string(),
            message: e.to_string(),
        })?;
        let signal = Self::Expression { source: source.to_string(), tree };
        signal.try_eval(0.0)?;
        Ok(signal)
    }

    pub fn tabulated(period: f64, samples: Vec<f64>) -> Result<Self> {
        if !(period > 0.0) || samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("tabulated signal needs a positive period and finite samples".into()));
        }
        Ok(Self::Tabulated(PeriodicSamples::new(period, samples)))
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    fn try_eval(&self, t: f64) -> Result<f64> {
        match self {
            Self::Expression { source, tree } => {
                let ctx = TimeContext { t: Value::Float(t), pi: Value::Float(std::f64::consts::PI) };
                tree.eval_number_with_context(&ctx).map_err(|e| Error::Expression {
                    expr: source.clone(),
                    message: e.to_string(),
                })
            }
            _ => Ok(self.eval(t)),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Expression { .. } => self.try_eval(t).unwrap_or(f64::NAN),
            Self::Tabulated(s) => s.eval(t),
            Self::Function(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    /// Period average by composite Simpson.
    pub fn average(&self, period: f64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            _ => simpson(|t| self.eval(t), 0.0, period, SIGNAL_QUADRATURE) / period,
        }
    }
}

/// A growth-rate landscape `a(t, x)`. Derivatives default to `None`, in which
/// case [`GrowthRateModel`] falls back to finite differences.
pub trait Landscape: Send + Sync + fmt::Debug {
    fn rate(&self, t: f64, x: f64) -> f64;

    fn rate_dx(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    fn rate_dxx(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    fn rate_dxxx(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    /// Rates at one time for many traits.
    fn fill_rates(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = self.rate(t, x);
        }
    }

    fn closed_form_average(&self) -> Option<QuadraticAverages> {
        None
    }
}

/// Closed-form period averages of the quadratic family:
/// `abar(x) = r - gbar x^2 + 2 g1 x - g2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticAverages {
    pub r: f64,
    pub gbar: f64,
    pub g1: f64,
    pub g2: f64,
}

impl QuadraticAverages {
    pub fn abar(&self, x: f64) -> f64 {
        self.r - x * x * self.gbar + 2.0 * x * self.g1 - self.g2
    }

    pub fn abar_dx(&self, x: f64) -> f64 {
        -2.0 * x * self.gbar + 2.0 * self.g1
    }

    pub fn abar_dxx(&self) -> f64 {
        -2.0 * self.gbar
    }

    pub fn x_m(&self) -> f64 {
        self.g1 / self.gbar
    }

    pub fn abar_max(&self) -> f64 {
        self.r + self.g1 * self.g1 / self.gbar - self.g2
    }
}

/// Parameters of `a(t, x) = r - g(t) (x - theta(t))^2`.
#[derive(Debug, Clone)]
pub struct QuadraticRateParams {
    pub r: f64,
    pub g: PeriodicSignal,
    pub theta: PeriodicSignal,
    pub period: f64,
    pub gbar: f64,
    pub g1: f64,
    pub g2: f64,
}

impl QuadraticRateParams {
    pub fn new(r: f64, g: PeriodicSignal, theta: PeriodicSignal, period: f64) -> Result<Self> {
        if !(period > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("quadratic model needs period > 0 and finite r (got T={period}, r={r})")));
        }
        let avg = |f: &dyn Fn(f64) -> f64| simpson(f, 0.0, period, SIGNAL_QUADRATURE) / period;
        let gbar = g.average(period);
        let (g1, g2) = if theta.is_constant() {
            let th = theta.eval(0.0);
            (gbar * th, gbar * th * th)
        } else {
            (
                avg(&|t| g.eval(t) * theta.eval(t)),
                avg(&|t| {
                    let th = theta.eval(t);
                    g.eval(t) * th * th
                }),
            )
        };
        if ![gbar, g1, g2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("quadratic model signals are not finite over the period".into()));
        }
        Ok(Self { r, g, theta, period, gbar, g1, g2 })
    }

    pub fn averages(&self) -> QuadraticAverages {
        QuadraticAverages { r: self.r, gbar: self.gbar, g1: self.g1, g2: self.g2 }
    }

    /// Smallest sampled value of `g` over one period.
    pub fn min_pressure(&self) -> f64 {
        (0..SIGNAL_QUADRATURE)
            .map(|k| self.g.eval(k as f64 * self.period / SIGNAL_QUADRATURE as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug)]
struct QuadraticLandscape(QuadraticRateParams);

impl Landscape for QuadraticLandscape {
    fn rate(&self, t: f64, x: f64) -> f64 {
        let d = x - self.0.theta.eval(t);
        self.0.r - self.0.g.eval(t) * d * d
    }

    fn rate_dx(&self, t: f64, x: f64) -> Option<f64> {
        Some(-2.0 * self.0.g.eval(t) * (x - self.0.theta.eval(t)))
    }

    fn rate_dxx(&self, t: f64, _x: f64) -> Option<f64> {
        Some(-2.0 * self.0.g.eval(t))
    }

    fn rate_dxxx(&self, _t: f64, _x: f64) -> Option<f64> {
        Some(0.0)
    }

    fn fill_rates(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        let (g, th, r) = (self.0.g.eval(t), self.0.theta.eval(t), self.0.r);
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = r - g * (x - th) * (x - th);
        }
    }

    fn closed_form_average(&self) -> Option<QuadraticAverages> {
        Some(self.0.averages())
    }
}

/// Rate values on a `(t, x)` grid, periodic in `t`, bilinear in between and
/// clamped in `x` outside the tabulated range.
#[derive(Debug, Clone)]
pub struct TabulatedLandscape {
    period: f64,
    traits: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TabulatedLandscape {
    /// `values[i][j]` is the rate at time `i * period / values.len()` and trait `traits[j]`.
    pub fn new(period: f64, traits: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(period > 0.0) || traits.len() < 2 || values.is_empty() {
            return Err(Error::InvalidInput("tabulated rate needs a positive period, >= 2 traits and >= 1 time row".into()));
        }
        if traits.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("tabulated traits must be strictly increasing".into()));
        }
        if values.iter().any(|row| row.len() != traits.len() || row.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("every tabulated row must hold one finite value per trait".into()));
        }
        Ok(Self { period, traits, values })
    }

    fn row_at(&self, row: &[f64], x: f64) -> f64 {
        let xs = &self.traits;
        if x <= xs[0] {
            return row[0];
        }
        if x >= xs[xs.len() - 1] {
            return row[xs.len() - 1];
        }
        let j = xs.partition_point(|&v| v <= x) - 1;
        let w = (x - xs[j]) / (xs[j + 1] - xs[j]);
        row[j] * (1.0 - w) + row[j + 1] * w
    }
}

impl Landscape for TabulatedLandscape {
    fn rate(&self, t: f64, x: f64) -> f64 {
        let n = self.values.len();
        let s = t.rem_euclid(self.period) / self.period * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let w = s - i as f64;
        let a0 = self.row_at(&self.values[i], x);
        let a1 = self.row_at(&self.values[(i + 1) % n], x);
        a0 * (1.0 - w) + a1 * w
    }
}

struct FnLandscape {
    rate: RateFn,
    dx: Option<RateFn>,
    dxx: Option<RateFn>,
    dxxx: Option<RateFn>,
}

impl fmt::Debug for FnLandscape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLandscape").field("analytic_dx", &self.dx.is_some()).finish()
    }
}

impl Landscape for FnLandscape {
    fn rate(&self, t: f64, x: f64) -> f64 {
        (self.rate)(t, x)
    }

    fn rate_dx(&self, t: f64, x: f64) -> Option<f64> {
        self.dx.as_ref().map(|f| f(t, x))
    }

    fn rate_dxx(&self, t: f64, x: f64) -> Option<f64> {
        self.dxx.as_ref().map(|f| f(t, x))
    }

    fn rate_dxxx(&self, t: f64, x: f64) -> Option<f64> {
        self.dxxx.as_ref().map(|f| f(t, x))
    }
}

#[derive(Debug)]
struct SumLandscape(Arc<dyn Landscape>, Arc<dyn Landscape>);

impl Landscape for SumLandscape {
    fn rate(&self, t: f64, x: f64) -> f64 {
        self.0.rate(t, x) + self.1.rate(t, x)
    }

    fn rate_dx(&self, t: f64, x: f64) -> Option<f64> {
        Some(self.0.rate_dx(t, x)? + self.1.rate_dx(t, x)?)
    }

    fn rate_dxx(&self, t: f64, x: f64) -> Option<f64> {
        Some(self.0.rate_dxx(t, x)? + self.1.rate_dxx(t, x)?)
    }

    fn rate_dxxx(&self, t: f64, x: f64) -> Option<f64> {
        Some(self.0.rate_dxxx(t, x)? + self.1.rate_dxxx(t, x)?)
    }

    fn closed_form_average(&self) -> Option<QuadraticAverages> {
        let (a, b) = (self.0.closed_form_average()?, self.1.closed_form_average()?);
        Some(QuadraticAverages { r: a.r + b.r, gbar: a.gbar + b.gbar, g1: a.g1 + b.g1, g2: a.g2 + b.g2 })
    }
}

/// A `period`-periodic growth-rate landscape. Cheap to clone and share.
#[derive(Clone, Debug)]
pub struct GrowthRateModel {
    period: f64,
    landscape: Arc<dyn Landscape>,
}

fn step(x: f64, scale: f64) -> f64 {
    scale.max(scale * x.abs())
}

impl GrowthRateModel {
    pub fn new(period: f64, landscape: Arc<dyn Landscape>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        Ok(Self { period, landscape })
    }

    pub fn from_fn(period: f64, rate: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::new(period, Arc::new(FnLandscape { rate: Arc::new(rate), dx: None, dxx: None, dxxx: None }))
    }

    /// Model with analytic x-derivatives up to third order.
    pub fn from_fn_with_derivatives(
        period: f64,
        rate: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dxx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dxxx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(
            period,
            Arc::new(FnLandscape {
                rate: Arc::new(rate),
                dx: Some(Arc::new(dx)),
                dxx: Some(Arc::new(dxx)),
                dxxx: Some(Arc::new(dxxx)),
            }),
        )
    }

    pub fn tabulated(landscape: TabulatedLandscape) -> Self {
        let period = landscape.period;
        Self { period, landscape: Arc::new(landscape) }
    }

    /// Pointwise sum of two landscapes sharing a period.
    pub fn sum(&self, other: &GrowthRateModel) -> Result<Self> {
        if (self.period - other.period).abs() > 1e-12 * self.period {
            return Err(Error::InvalidInput("summed models must share their period".into()));
        }
        Self::new(self.period, Arc::new(SumLandscape(self.landscape.clone(), other.landscape.clone())))
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn rate(&self, t: f64, x: f64) -> f64 {
        self.landscape.rate(t, x)
    }

    pub fn fill_rates(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        self.landscape.fill_rates(t, xs, out)
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.landscape.rate_dx(0.0, 0.0).is_some()
    }

    pub fn rate_dx(&self, t: f64, x: f64) -> f64 {
        self.landscape
            .rate_dx(t, x)
            .unwrap_or_else(|| diff1(&|y| self.rate(t, y), x, step(x, 1e-5)))
    }

    pub fn rate_dxx(&self, t: f64, x: f64) -> f64 {
        self.landscape
            .rate_dxx(t, x)
            .unwrap_or_else(|| diff2(&|y| self.rate(t, y), x, step(x, 1e-3)))
    }

    pub fn rate_dxxx(&self, t: f64, x: f64) -> f64 {
        self.landscape
            .rate_dxxx(t, x)
            .unwrap_or_else(|| diff3(&|y| self.rate(t, y), x, step(x, 1e-2)))
    }

    pub fn closed_form_average(&self) -> Option<QuadraticAverages> {
        self.landscape.closed_form_average()
    }

    /// `sup |a|` over one period and `[-radius, radius]` (the constant `d0`).
    pub fn sup_bound(&self, radius: f64) -> f64 {
        let (nt, nx) = (64, 513);
        let mut sup: f64 = 0.0;
        for i in 0..nt {
            let t = i as f64 * self.period / nt as f64;
            for j in 0..nx {
                let x = -radius + 2.0 * radius * j as f64 / (nx - 1) as f64;
                sup = sup.max(self.rate(t, x).abs());
            }
        }
        sup
    }

    /// Largest `|a(t, x) - a(t + T, x)|` on a sample lattice, with its witness.
    pub fn periodicity_defect(&self, radius: f64) -> (f64, (f64, f64)) {
        let (nt, nx) = (32, 129);
        let mut worst = (0.0, (0.0, 0.0));
        for i in 0..nt {
            let t = i as f64 * self.period / nt as f64 + 0.123 * self.period / nt as f64;
            for j in 0..nx {
                let x = -radius + 2.0 * radius * j as f64 / (nx - 1) as f64;
                let d = (self.rate(t, x) - self.rate(t + self.period, x)).abs();
                if d > worst.0 {
                    worst = (d, (t, x));
                }
            }
        }
        worst
    }
}

/// Builds `a(t, x) = r - g(t) (x - theta(t))^2`.
pub fn quadratic_model(params: QuadraticRateParams) -> Result<GrowthRateModel> {
    let min = params.min_pressure();
    if !(min > 0.0) {
        return Err(Error::NonPositivePressure { min });
    }
    GrowthRateModel::new(params.period, Arc::new(QuadraticLandscape(params)))
}

/// Period average `abar(x)` of a model, together with its maximiser.
#[derive(Clone, Debug)]
pub struct AveragedRate {
    model: GrowthRateModel,
    intervals: usize,
    closed_form: Option<QuadraticAverages>,
    pub bracket: (f64, f64),
    pub x_m: f64,
    pub abar_max: f64,
    pub abar_dxx_at_xm: f64,
}

impl AveragedRate {
    pub fn model(&self) -> &GrowthRateModel {
        &self.model
    }

    fn time_average(&self, f: impl Fn(f64) -> f64) -> f64 {
        let t = self.model.period;
        simpson(f, 0.0, t, self.intervals) / t
    }

    pub fn abar(&self, x: f64) -> f64 {
        match &self.closed_form {
            Some(q) => q.abar(x),
            None => self.time_average(|t| self.model.rate(t, x)),
        }
    }

    pub fn abar_dx(&self, x: f64) -> f64 {
        match &self.closed_form {
            Some(q) => q.abar_dx(x),
            None if self.model.has_analytic_derivatives() => self.time_average(|t| self.model.rate_dx(t, x)),
            None => diff1(&|y| self.abar(y), x, step(x, 1e-5)),
        }
    }

    pub fn abar_dxx(&self, x: f64) -> f64 {
        match &self.closed_form {
            Some(q) => q.abar_dxx(),
            None if self.model.has_analytic_derivatives() => self.time_average(|t| self.model.rate_dxx(t, x)),
            None => diff2(&|y| self.abar(y), x, step(x, 1e-3)),
        }
    }

    pub fn abar_dxxx(&self, x: f64) -> f64 {
        match &self.closed_form {
            Some(_) => 0.0,
            None if self.model.has_analytic_derivatives() => self.time_average(|t| self.model.rate_dxxx(t, x)),
            None => diff3(&|y| self.abar(y), x, step(x, 1e-2)),
        }
    }

    pub fn abar_dxxxx(&self, x: f64) -> f64 {
        match &self.closed_form {
            Some(_) => 0.0,
            None => diff1(&|y| self.abar_dxxx(y), x, step(x, 1e-2)),
        }
    }

    /// `abar(x_m) - abar(x)`, which is nonnegative when `x_m` is correct.
    pub fn deficit(&self, x: f64) -> f64 {
        self.abar_max - self.abar(x)
    }
}

const SCAN_POINTS: usize = 4000;

/// Averages `model` over one period with composite Simpson on
/// `quadrature_points` subintervals and locates the maximiser of the average
/// on `bracket`.
pub fn averaged_rate(model: &GrowthRateModel, quadrature_points: usize, bracket: (f64, f64)) -> Result<AveragedRate> {
    if quadrature_points < MIN_QUADRATURE_POINTS {
        return Err(Error::InvalidInput(format!(
            "averaging needs at least {MIN_QUADRATURE_POINTS} quadrature points, got {quadrature_points}"
        )));
    }
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("empty search bracket [{lo}, {hi}]")));
    }
    let mut avg = AveragedRate {
        model: model.clone(),
        intervals: quadrature_points + quadrature_points % 2,
        closed_form: model.closed_form_average(),
        bracket,
        x_m: f64::NAN,
        abar_max: f64::NAN,
        abar_dxx_at_xm: f64::NAN,
    };

    let h = (hi - lo) / SCAN_POINTS as f64;
    let xs: Vec<f64> = (0..=SCAN_POINTS).map(|i| lo + i as f64 * h).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| avg.abar(x)).collect();
    let best = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    if best == 0 || best == SCAN_POINTS {
        return Err(Error::NoInteriorMaximum { x: xs[best] });
    }
    for i in 1..SCAN_POINTS {
        let strict_peak = vals[i] > vals[i - 1] && vals[i] >= vals[i + 1];
        if strict_peak && i.abs_diff(best) > 2 && vals[i] > vals[best] - 1e-8 {
            return Err(Error::NonUniqueMaximum { first: xs[best], second: xs[i] });
        }
    }

    let x_m = refine_maximum(&avg, xs[best - 1], xs[best + 1]);
    if (x_m - lo).abs() < h * 1e-6 || (hi - x_m).abs() < h * 1e-6 {
        return Err(Error::NoInteriorMaximum { x: x_m });
    }
    avg.x_m = x_m;
    avg.abar_max = avg.abar(x_m);
    avg.abar_dxx_at_xm = avg.abar_dxx(x_m);
    if !(avg.abar_max > 0.0) {
        return Err(Error::NonPositiveMaximum { value: avg.abar_max });
    }
    Ok(avg)
}

/// Golden-section search, then bisection on the sign of `abar_dx`.
fn refine_maximum(avg: &AveragedRate, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (avg.abar(c), avg.abar(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-10 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = avg.abar(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = avg.abar(d);
        }
    }
    let golden = 0.5 * (a + b);

    // Flat maxima leave golden section far from the root of abar_dx; widen until it is bracketed.
    let mut width = 1e-6 * (1.0 + golden.abs());
    let (mut l, mut r) = (golden - width, golden + width);
    while !(avg.abar_dx(l) > 0.0 && avg.abar_dx(r) < 0.0) {
        width *= 2.0;
        if width > b - a + 1e-2 {
            return golden;
        }
        (l, r) = (golden - width, golden + width);
    }
    for _ in 0..100 {
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            break;
        }
        if avg.abar_dx(m) > 0.0 {
            l = m;
        } else {
            r = m;
        }
    }
    0.5 * (l + r)
}

/// Constants of the decay-at-infinity hypothesis: `a + lambda <= -delta` for `|x| >= r0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TailHypothesis {
    pub delta: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub witness: Option<(f64, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A-posteriori check of the standing hypotheses on `[-radius, radius]`.
pub fn check_hypotheses(
    model: &GrowthRateModel,
    avg: &AveragedRate,
    lambda: f64,
    tail: &TailHypothesis,
    radius: f64,
) -> HypothesisReport {
    let mut checks = Vec::new();
    let d0 = model.sup_bound(radius);
    let (defect, at) = model.periodicity_defect(radius);
    checks.push(HypothesisCheck {
        name: "H1-periodic".into(),
        passed: defect <= 1e-10 * d0.max(1.0),
        value: defect,
        witness: Some(at),
        detail: format!("max |a(t,x) - a(t+T,x)| = {defect:e}"),
    });
    checks.push(HypothesisCheck {
        name: "H1-bounded".into(),
        passed: d0.is_finite(),
        value: d0,
        witness: None,
        detail: format!("d0 = sup |a| on the domain = {d0}"),
    });
    checks.push(HypothesisCheck {
        name: "H2a".into(),
        passed: avg.abar_max > 0.0,
        value: avg.abar_max,
        witness: Some((0.0, avg.x_m)),
        detail: format!("max abar = {} at x_m = {}", avg.abar_max, avg.x_m),
    });
    checks.push(HypothesisCheck {
        name: "H2b".into(),
        passed: avg.abar_dxx_at_xm <= 0.0,
        value: avg.abar_dxx_at_xm,
        witness: Some((0.0, avg.x_m)),
        detail: "unique interior maximiser with nonpositive curvature".into(),
    });

    let (nt, nx) = (64, 1025);
    let mut worst = (f64::NEG_INFINITY, None);
    for i in 0..nt {
        let t = i as f64 * model.period() / nt as f64;
        for j in 0..nx {
            let x = -radius + 2.0 * radius * j as f64 / (nx - 1) as f64;
            if x.abs() < tail.r0 {
                continue;
            }
            let v = model.rate(t, x) + lambda;
            if v > worst.0 {
                worst = (v, Some((t, x)));
            }
        }
    }
    let passed = worst.1.is_none() || worst.0 <= -tail.delta;
    checks.push(HypothesisCheck {
        name: "Hc".into(),
        passed,
        value: worst.0,
        witness: worst.1,
        detail: match worst.1 {
            Some(_) => format!("max a + lambda over |x| >= {} is {} (need <= {})", tail.r0, worst.0, -tail.delta),
            None => format!("no samples with |x| >= {} inside the domain", tail.r0),
        },
    });
    HypothesisReport { checks }
}
