//! Shared problem instances for the solver benchmarks.

use stopdex::{fn1, fn2, DiffusionSpec, ForwardProblem, Numerics, Result, RewardFamily};

pub const SIGMA: f64 = 0.3;
pub const MU: f64 = 0.05;

pub fn gbm_spec() -> DiffusionSpec {
    DiffusionSpec::gbm(SIGMA, MU, 1.0).expect("valid GBM")
}

/// Stopping reward `θ`, running reward `x`.
pub fn gbm_reward() -> RewardFamily {
    RewardFamily::new(fn2(|_, t| t), fn2(|_, _| 1.0), 0.0, f64::INFINITY).with_running(fn1(|x| x))
}

pub fn gbm_problem(rho: f64) -> Result<ForwardProblem> {
    ForwardProblem::new(gbm_spec(), rho, gbm_reward(), Numerics::default())
}
