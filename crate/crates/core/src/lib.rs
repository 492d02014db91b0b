//! Optimal stopping of one-dimensional diffusions: forward value functions, stopping
//! indices and recovery of diffusion coefficients from value curves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod fixtures;
pub mod forward;
pub mod grid;
pub mod index;
pub mod inverse;
pub mod modularity;
pub mod montecarlo;
pub mod ode;

pub use diffusion::{
    fn1, fn2, hitting_laplace, solve_eigenfunctions, solve_resolvent, Atom, Boundary,
    DiffusionSpec, Domain, EigenPair, Fn1, Fn2, Numerics,
};
pub use error::{Result, StopError};
pub use forward::{
    Classification, EarlyReward, ForwardProblem, RewardFamily, Running, ThresholdReport,
};
pub use grid::{GridFunction, Side};
