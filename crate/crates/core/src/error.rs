use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StopError {
    #[error("invalid boundary configuration: {0}")]
    InvalidBoundary(String),
    #[error("degenerate coefficient at x = {x}: sigma2 = {sigma2}")]
    DegenerateCoefficient { x: f64, sigma2: f64 },
    #[error("shooting did not converge: {0}")]
    NonConvergent(String),
    #[error("resolvent integral diverges: {0}")]
    DivergentIntegral(String),
    #[error("point x = {x} lies outside the grid [{lo}, {hi}]")]
    OutOfGrid { x: f64, lo: f64, hi: f64 },
    #[error("early reward is non-positive everywhere for theta = {theta}")]
    AllNonPositive { theta: f64 },
    #[error(
        "triangle property violated at theta = {theta}: max upper {upper} > min lower {lower}"
    )]
    TriangleViolation { theta: f64, upper: f64, lower: f64 },
    #[error("threshold set is empty for theta = {theta}")]
    EmptyThresholdSet { theta: f64 },
    #[error("threshold region is not an interval: gap at theta = {theta}")]
    NonIntervalRegion { theta: f64 },
    #[error("positivity mask is empty")]
    EmptyMask,
    #[error("u-subdifferential is empty at y = {y}")]
    EmptySubdifferential { y: f64 },
    #[error("index curve is not monotone: theta*({x0}) = {t0}, theta*({x1}) = {t1}")]
    NonMonotoneIndex { x0: f64, t0: f64, x1: f64, t1: f64 },
    #[error("zero derivative at x = {x}: {what} vanishes")]
    ZeroDerivative { x: f64, what: &'static str },
    #[error("singular coefficient system at x = {x}")]
    SingularSystem { x: f64 },
    #[error("negative variance on [{lo}, {hi}] (min sigma2 = {min}){}", condition.as_ref().map(|c| format!("; {c}")).unwrap_or_default())]
    NegativeVariance {
        lo: f64,
        hi: f64,
        min: f64,
        condition: Option<String>,
    },
    #[error("invalid stopping rule: {0}")]
    InvalidRule(String),
    #[error("speed-measure atoms cannot be simulated")]
    AtomUnsupported,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, StopError>;
