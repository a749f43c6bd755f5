use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("maximizer of the averaged rate sits on the search bracket boundary at x = {x}")]
    NoInteriorMaximum { x: f64 },

    #[error("averaged rate maximum {value} is not positive")]
    NonPositiveMaximum { value: f64 },

    #[error("averaged rate has two near-equal maxima at x = {first} and x = {second}")]
    NonUniqueMaximum { first: f64, second: f64 },

    #[error("selection pressure is not positive: min g = {min}")]
    NonPositivePressure { min: f64 },

    #[error("clamping negative densities moved mass {moved:e}")]
    PositivityLoss { moved: f64 },

    #[error("mass changed from {before:e} to {after:e} in a single step")]
    StepRejected { before: f64, after: f64 },

    #[error("Liouville exponent (c/2 sigma) R = {exponent} exceeds the representable range")]
    OverflowRisk { exponent: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("iterate changed sign at node {node}")]
    DegenerateMode { node: usize },

    #[error("population not viable: period integral of growth is {integral}")]
    NonviablePopulation { integral: f64 },

    #[error("no lag trait root on the search bracket")]
    NoRoot,

    #[error("lag trait is ambiguous: sign changes at x = {first} and x = {second}")]
    AmbiguousRoot { first: f64, second: f64 },

    #[error("radicand abar(x_m) - abar(x) = {value:e} is negative at x = {x}")]
    NegativeRadicand { x: f64, value: f64 },

    #[error("curvature of the averaged rate at x_m is degenerate: {abar_xx}")]
    DegenerateCurvature { abar_xx: f64 },

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },
}
