//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [model]
//! kind = "quadratic"          # or "tabulated"
//! r = 2.0
//! g = 1.0                     # number, expression in t, or { period, samples }
//! theta = "sin(2*pi*t)"
//! period = 1.0
//!
//! [grid]
//! radius = 6.0
//! n_points = 2049
//!
//! [solver]
//! steps_per_period = 512
//!
//! [scenario]
//! mode = "expansion-sweep"
//! epsilons = [0.2, 0.1, 0.05]
//! c = [1.0]
//! ```
//!
//! Every table except `[model]` and `scenario.mode` may be omitted.

use std::path::{Path, PathBuf};

use evoshift_core::model::{
    quadratic_model, GrowthRateModel, PeriodicSignal, QuadraticRateParams, TabulatedLandscape,
};
use evoshift_core::pde_engine::{DriftForm, SolverConfig};
use evoshift_core::floquet::FloquetOptions;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Eigen,
    CriticalSpeed,
    HjProfile,
    ExpansionSweep,
    Moments,
    CaseCompare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Eigen => "eigen",
            Mode::CriticalSpeed => "critical-speed",
            Mode::HjProfile => "hj-profile",
            Mode::ExpansionSweep => "expansion-sweep",
            Mode::Moments => "moments",
            Mode::CaseCompare => "case-compare",
        }
    }
}

/// A T-periodic scalar: a constant, an expression in `t`, or evenly spaced samples over one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Constant(f64),
    Expression(String),
    Samples { samples: Vec<f64> },
}

impl SignalSpec {
    fn build(&self, period: f64) -> evoshift_core::Result<PeriodicSignal> {
        match self {
            SignalSpec::Constant(v) => Ok(PeriodicSignal::Constant(*v)),
            SignalSpec::Expression(src) => PeriodicSignal::expression(src),
            SignalSpec::Samples { samples } => PeriodicSignal::tabulated(period, samples.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `a(t, x) = r - g(t) (x - theta(t))^2`.
    Quadratic {
        r: Option<f64>,
        g: Option<SignalSpec>,
        #[serde(default = "zero_signal")]
        theta: SignalSpec,
        #[serde(default = "one")]
        period: f64,
    },
    /// Values on a `times x traits` table; `file` is a CSV whose header is `t,x_0,x_1,...`
    /// and whose rows are `t_j,a(t_j,x_0),...`. Inline `traits`/`values` are used otherwise.
    Tabulated {
        #[serde(default = "one")]
        period: f64,
        #[serde(default)]
        file: Option<PathBuf>,
        #[serde(default)]
        traits: Vec<f64>,
        #[serde(default)]
        values: Vec<Vec<f64>>,
    },
}

fn zero_signal() -> SignalSpec {
    SignalSpec::Constant(0.0)
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn period(&self) -> f64 {
        match self {
            ModelSpec::Quadratic { period, .. } | ModelSpec::Tabulated { period, .. } => *period,
        }
    }

    fn problems(&self, at: &str, out: &mut Vec<String>) {
        if !(self.period() > 0.0 && self.period().is_finite()) {
            out.push(format!("{at}.period must be positive"));
        }
        match self {
            ModelSpec::Quadratic { r, g, .. } => {
                match r {
                    None => out.push(format!("{at}.r is required for a quadratic model")),
                    Some(v) if !v.is_finite() => out.push(format!("{at}.r must be finite")),
                    _ => {}
                }
                match g {
                    None => out.push(format!("{at}.g is required for a quadratic model")),
                    Some(SignalSpec::Constant(v)) if !(*v > 0.0) => out.push(format!("{at}.g must be positive")),
                    _ => {}
                }
            }
            ModelSpec::Tabulated { file, traits, values, .. } => {
                if file.is_none() && (traits.len() < 2 || values.is_empty()) {
                    out.push(format!("{at} needs `file` or inline `traits` (>= 2) and `values`"));
                }
                if file.is_none() && values.iter().any(|row| row.len() != traits.len()) {
                    out.push(format!("{at}.values rows must have one entry per trait"));
                }
            }
        }
    }

    /// Quadratic parameters, when the model is quadratic.
    pub fn quadratic_params(&self) -> Result<QuadraticRateParams, RunError> {
        match self {
            ModelSpec::Quadratic { r: Some(r), g: Some(g), theta, period } => {
                Ok(QuadraticRateParams::new(*r, g.build(*period)?, theta.build(*period)?, *period)?)
            }
            _ => Err(RunError::Scenario("a quadratic model is required".into())),
        }
    }

    /// Builds the growth-rate model; relative table paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<GrowthRateModel, RunError> {
        match self {
            ModelSpec::Quadratic { .. } => Ok(quadratic_model(self.quadratic_params()?)?),
            ModelSpec::Tabulated { period, file: Some(file), .. } => {
                let path = base.join(file);
                let (traits, values) = read_rate_table(&path)?;
                Ok(GrowthRateModel::tabulated(TabulatedLandscape::new(*period, traits, values)?))
            }
            ModelSpec::Tabulated { period, traits, values, .. } => {
                Ok(GrowthRateModel::tabulated(TabulatedLandscape::new(*period, traits.clone(), values.clone())?))
            }
        }
    }
}

fn read_rate_table(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>), RunError> {
    let io = |e: csv::Error| RunError::Io { path: path.to_path_buf(), message: e.to_string() };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(io)?;
    let parse = |s: &str| {
        s.parse::<f64>().map_err(|_| RunError::Parse { path: path.to_path_buf(), message: format!("not a number: {s:?}") })
    };
    let traits = reader.headers().map_err(io)?.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(io)?;
        values.push(record.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?);
    }
    Ok((traits, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub radius: f64,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { radius: 6.0, n_points: 2049 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub steps_per_period: usize,
    pub max_periods: usize,
    pub extinction_threshold: f64,
    pub periodic_tolerance: f64,
    pub cycle_samples: usize,
    /// "direct" or "liouville"; chosen per scenario when absent.
    pub drift_form: Option<DriftForm>,
    pub eigen_tolerance: f64,
    pub eigen_max_iterations: usize,
    /// Averaging quadrature points for the time-averaged rate.
    pub quadrature_points: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolverConfig::default();
        let f = FloquetOptions::default();
        Self {
            steps_per_period: s.steps_per_period,
            max_periods: s.max_periods,
            extinction_threshold: s.extinction_threshold,
            periodic_tolerance: s.periodic_tolerance,
            cycle_samples: s.cycle_samples,
            drift_form: None,
            eigen_tolerance: f.tol,
            eigen_max_iterations: f.max_iters,
            quadrature_points: 512,
        }
    }
}

impl SolverSpec {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            steps_per_period: self.steps_per_period,
            max_periods: self.max_periods,
            extinction_threshold: self.extinction_threshold,
            periodic_tolerance: self.periodic_tolerance,
            cycle_samples: self.cycle_samples,
            drift_form: self.drift_form,
        }
    }

    pub fn floquet_options(&self) -> FloquetOptions {
        FloquetOptions {
            steps_per_period: self.steps_per_period,
            tol: self.eigen_tolerance,
            max_iters: self.eigen_max_iterations,
            drift_form: self.drift_form,
            snapshot_stride: (self.steps_per_period / self.cycle_samples.max(1)).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    /// Defaults to the maximiser `x_m` of the averaged growth rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Defaults to `sqrt(eps)` with `eps = sqrt(sigma)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub mass: f64,
    /// Relative amplitude of seeded multiplicative noise, in `[0, 1)`.
    pub perturbation: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { center: None, std: None, mass: 1.0, perturbation: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mode: Mode,
    /// Small-mutation parameters; each gives `sigma = eps^2` and `c_tilde = c eps`.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Rescaled shift speeds, used with `epsilons`.
    #[serde(default)]
    pub c: Vec<f64>,
    /// Raw mutation rates, used with `c_tilde` or `speed_factor`.
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub c_tilde: Vec<f64>,
    /// Simulate at this multiple of the computed critical speed.
    #[serde(default)]
    pub speed_factor: Option<f64>,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Search interval for the maximiser of the averaged rate; the grid interval when absent.
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    /// Constant-environment model for `case-compare`.
    #[serde(default)]
    pub reference: Option<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory used to resolve relative table paths; not serialised.
    #[serde(skip)]
    pub base_dir: PathBuf,
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub scenario: ScenarioSpec,
}

/// Reads, fills defaults and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let mut config = parse_config(&text).map_err(|e| match e {
        RunError::Parse { message, .. } => RunError::Parse { path: path.to_path_buf(), message },
        other => other,
    })?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(config)
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<RunConfig, RunError> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| RunError::Parse { path: PathBuf::new(), message: e.to_string() })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<(), RunError> {
        let mut bad = Vec::new();
        self.model.problems("model", &mut bad);
        if !(self.grid.radius > 0.0 && self.grid.radius.is_finite()) {
            bad.push("grid.radius must be positive".into());
        }
        if self.grid.n_points < evoshift_core::discretization::MIN_GRID_POINTS {
            bad.push(format!("grid.n_points must be >= {}", evoshift_core::discretization::MIN_GRID_POINTS));
        }
        let s = &self.solver;
        if s.steps_per_period < 64 {
            bad.push("solver.steps_per_period must be >= 64".into());
        }
        if s.max_periods == 0 {
            bad.push("solver.max_periods must be positive".into());
        }
        if !(s.extinction_threshold >= 0.0) {
            bad.push("solver.extinction_threshold must be nonnegative".into());
        }
        for (name, v) in [("periodic_tolerance", s.periodic_tolerance), ("eigen_tolerance", s.eigen_tolerance)] {
            if !(v > 0.0) {
                bad.push(format!("solver.{name} must be positive"));
            }
        }
        if s.cycle_samples == 0 || s.eigen_max_iterations == 0 {
            bad.push("solver.cycle_samples and solver.eigen_max_iterations must be positive".into());
        }
        if s.quadrature_points < 16 {
            bad.push("solver.quadrature_points must be >= 16".into());
        }

        let sc = &self.scenario;
        let positive = |name: &str, xs: &[f64], bad: &mut Vec<String>| {
            if xs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                bad.push(format!("scenario.{name} entries must be positive"));
            }
        };
        positive("epsilons", &sc.epsilons, &mut bad);
        positive("sigma", &sc.sigma, &mut bad);
        if sc.c.iter().chain(&sc.c_tilde).any(|v| !(*v >= 0.0 && v.is_finite())) {
            bad.push("scenario.c and scenario.c_tilde entries must be nonnegative".into());
        }
        if let Some(f) = sc.speed_factor {
            if !(f > 0.0) {
                bad.push("scenario.speed_factor must be positive".into());
            }
        }
        let init = &sc.initial;
        if !(init.std.is_none_or(|v| v > 0.0) && init.mass > 0.0) {
            bad.push("scenario.initial.std and scenario.initial.mass must be positive".into());
        }
        if !(0.0..1.0).contains(&init.perturbation) {
            bad.push("scenario.initial.perturbation must lie in [0, 1)".into());
        }
        if let Some((lo, hi)) = sc.bracket {
            if !(lo < hi) {
                bad.push("scenario.bracket must be an increasing pair".into());
            }
        }

        let scaled = !sc.epsilons.is_empty() && !sc.c.is_empty();
        let raw = !sc.sigma.is_empty() && (!sc.c_tilde.is_empty() || sc.speed_factor.is_some());
        match sc.mode {
            Mode::Simulate | Mode::Eigen => {
                if !(scaled || raw) {
                    bad.push(format!(
                        "mode {} needs `epsilons` with `c`, or `sigma` with `c_tilde` (or `speed_factor`)",
                        sc.mode.name()
                    ));
                }
                if sc.mode == Mode::Eigen && sc.speed_factor.is_some() {
                    bad.push("scenario.speed_factor only applies to mode simulate".into());
                }
            }
            Mode::CriticalSpeed => {
                if sc.epsilons.is_empty() && sc.sigma.is_empty() {
                    bad.push("mode critical-speed needs `epsilons` or `sigma`".into());
                }
            }
            Mode::HjProfile => {
                if sc.c.is_empty() {
                    bad.push("mode hj-profile needs `c`".into());
                }
            }
            Mode::ExpansionSweep | Mode::Moments => {
                if !scaled {
                    bad.push(format!("mode {} needs `epsilons` and `c`", sc.mode.name()));
                }
            }
            Mode::CaseCompare => {
                if !scaled {
                    bad.push("mode case-compare needs `epsilons` and `c`".into());
                }
                match &sc.reference {
                    None => bad.push("mode case-compare needs a `scenario.reference` model".into()),
                    Some(m) => m.problems("scenario.reference", &mut bad),
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RunError::Validation(bad))
        }
    }

    /// Resolved configuration as TOML; parsing it gives back the same config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn bracket(&self) -> (f64, f64) {
        self.scenario.bracket.unwrap_or((-self.grid.radius, self.grid.radius))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "quadratic"
r = 2
g = 1
theta = "sin(2*pi*t)"

[scenario]
mode = "eigen"
epsilons = [0.1]
c = [1]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid, GridSpec { radius: 6.0, n_points: 2049 });
        assert_eq!(c.solver.steps_per_period, 512);
        assert_eq!(c.seed, 0);
        assert_eq!(c.model.period(), 1.0);
    }

    #[test]
    fn echo_round_trips() {
        let c = parse_config(MINIMAL).unwrap();
        let back = parse_config(&c.echo()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn missing_r_is_named() {
        let text = MINIMAL.replace("r = 2\n", "");
        match parse_config(&text) {
            Err(RunError::Validation(v)) => assert!(v.iter().any(|m| m.contains("model.r")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_reported_together() {
        let text = MINIMAL.replace("r = 2\n", "").replace("epsilons = [0.1]", "epsilons = [-0.1]")
            + "[grid]\nn_points = 10\n";
        match parse_config(&text) {
            Err(RunError::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_config("[model\nkind = 1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(matches!(parse_config(&(MINIMAL.to_string() + "[grid]\nradus = 3\n")), Err(RunError::Parse { .. })));
    }

    #[test]
    fn mode_requirements() {
        let text = MINIMAL.replace("mode = \"eigen\"", "mode = \"case-compare\"");
        match parse_config(&text) {
            Err(RunError::Validation(v)) => assert!(v.iter().any(|m| m.contains("reference")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn signal_forms() {
        let text = MINIMAL.replace("g = 1", "g = { samples = [1.0, 2.0, 1.0, 0.5] }");
        let c = parse_config(&text).unwrap();
        assert!(c.model.build(Path::new(".")).is_ok());
        let c = parse_config(&MINIMAL.replace("g = 1", "g = \"1 + 0.5*cos(2*pi*t)\"")).unwrap();
        let p = c.model.quadratic_params().unwrap();
        assert!((p.gbar - 1.0).abs() < 1e-10);
    }
}
