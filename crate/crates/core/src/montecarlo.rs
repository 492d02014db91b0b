//! Euler–Maruyama simulation of discounted rewards under simple stopping rules.
//!
//! Each path `p` draws from its own ChaCha8 stream `p` of the configured seed, and path
//! values are reduced in path order, so estimates do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::diffusion::{Boundary, DiffusionSpec};
use crate::error::{Result, StopError};
use crate::forward::{RewardFamily, Running};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Pairs each path with its reflection `Z → -Z`.
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            t_max: 50.0,
            seed: 0,
            antithetic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Number of independent samples: paths, or antithetic pairs.
    pub n_effective: usize,
    /// `e^{-ρ t_max}` times the size of what surviving paths could still collect, estimated
    /// from their state at the horizon.
    pub truncation_bias_bound: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop at the first grid time the path reaches `z` from the start side.
    HitLevel(f64),
    StopNow,
    NeverStop,
}

/// What a single path reports.
#[derive(Clone, Copy)]
struct PathOut {
    value: f64,
    /// Size of the reward left on the table at the horizon, zero for finished paths.
    tail: f64,
}

struct Stepper<'a> {
    spec: &'a DiffusionSpec,
    dt: f64,
    sqrt_dt: f64,
    steps: usize,
}

enum Moved {
    Inside(f64),
    Ended,
}

impl Stepper<'_> {
    fn new<'a>(spec: &'a DiffusionSpec, cfg: &SimConfig) -> Result<Stepper<'a>> {
        if !spec.atoms.is_empty() {
            return Err(StopError::AtomUnsupported);
        }
        if cfg.n_paths == 0 || !(cfg.dt > 0.0) || !(cfg.t_max > 0.0) {
            return Err(StopError::InvalidInput(format!(
                "simulation needs n_paths > 0, dt > 0 and t_max > 0, got {}, {}, {}",
                cfg.n_paths, cfg.dt, cfg.t_max
            )));
        }
        Ok(Stepper {
            spec,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            steps: (cfg.t_max / cfg.dt).ceil() as usize,
        })
    }

    fn step(&self, x: f64, z: f64) -> Moved {
        let s2 = self.spec.sigma2_at(x).max(0.0);
        let y = x + self.spec.mu_at(x) * self.dt + s2.sqrt() * self.sqrt_dt * z;
        let d = &self.spec.domain;
        if y <= d.left {
            match d.left_behavior {
                Boundary::Killing | Boundary::Absorbing => Moved::Ended,
                Boundary::Reflecting | Boundary::Inaccessible => {
                    Moved::Inside(reflect(y, d.left, d.right))
                }
            }
        } else if y >= d.right {
            match d.right_behavior {
                Boundary::Killing | Boundary::Absorbing => Moved::Ended,
                Boundary::Reflecting | Boundary::Inaccessible => {
                    Moved::Inside(reflect(y, d.left, d.right))
                }
            }
        } else {
            Moved::Inside(y)
        }
    }
}

fn reflect(y: f64, left: f64, right: f64) -> f64 {
    let y = if y < left {
        2.0 * left - y
    } else if y > right {
        2.0 * right - y
    } else {
        y
    };
    // a reflected point may overshoot the other end on absurd steps
    y.clamp(left, right)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `path(rng, sign)` for every path and summarises the results.
fn estimate(
    cfg: &SimConfig,
    rho: f64,
    path: impl Fn(&mut ChaCha8Rng, f64) -> PathOut + Sync,
) -> SimEstimate {
    let samples: Vec<(f64, f64)> = if cfg.antithetic {
        let pairs = cfg.n_paths.div_ceil(2);
        (0..pairs)
            .into_par_iter()
            .map(|j| {
                let a = path(&mut rng_for(cfg.seed, j as u64), 1.0);
                let b = path(&mut rng_for(cfg.seed, j as u64), -1.0);
                (0.5 * (a.value + b.value), a.tail.max(b.tail))
            })
            .collect()
    } else {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|j| {
                let a = path(&mut rng_for(cfg.seed, j as u64), 1.0);
                (a.value, a.tail)
            })
            .collect()
    };
    let n = samples.len();
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let stderr = (var / n as f64).sqrt();
    let alive = samples.iter().filter(|s| s.1 > 0.0).count() as f64 / n as f64;
    let tail = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let bound = (-rho * cfg.t_max).exp() * alive * tail;
    let warning = (bound > stderr.max(1e-12 * (1.0 + mean.abs()))).then(|| {
        format!(
            "horizon truncation bias up to {bound:e} exceeds the standard error; increase t_max"
        )
    });
    SimEstimate {
        mean,
        stderr,
        n_effective: n,
        truncation_bias_bound: bound,
        warning,
    }
}

/// Discounted reward `∫₀^τ e^{-ρt} c(X_t) dt + e^{-ρτ} G(X_τ, θ)` averaged over paths.
///
/// The terminal reward of [`StopRule::HitLevel`] is taken at the level itself.
pub fn simulate_value(
    spec: &DiffusionSpec,
    reward: &RewardFamily,
    rho: f64,
    theta: f64,
    rule: StopRule,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    if !(rho > 0.0) {
        return Err(StopError::InvalidInput(format!(
            "discount rate must be positive, got {rho}"
        )));
    }
    let stepper = Stepper::new(spec, cfg)?;
    let x0 = spec.start;
    let g = |x: f64| (reward.g)(x, theta);
    let c = |x: f64| match &reward.running {
        Running::None => 0.0,
        Running::Fixed(c) => c(x),
        Running::Parametric { c, .. } => c(x, theta),
    };
    let level = match rule {
        StopRule::HitLevel(z) => {
            if !spec.domain.contains(z) {
                return Err(StopError::InvalidRule(format!(
                    "level {z} lies outside the domain"
                )));
            }
            Some(z)
        }
        StopRule::StopNow => {
            let value = g(x0);
            return Ok(SimEstimate {
                mean: value,
                stderr: 0.0,
                n_effective: cfg.n_paths,
                truncation_bias_bound: 0.0,
                warning: None,
            });
        }
        StopRule::NeverStop => None,
    };
    if let Some(z) = level {
        if z == x0 {
            return simulate_value(spec, reward, rho, theta, StopRule::StopNow, cfg);
        }
    }
    let from_above = level.is_some_and(|z| x0 > z);
    let decay = (-rho * stepper.dt).exp();
    let h = 0.5 * stepper.dt;
    let out = estimate(cfg, rho, |rng, sign| {
        let mut x = x0;
        let mut disc = 1.0;
        let mut acc = 0.0;
        let mut cx = c(x);
        for _ in 0..stepper.steps {
            let z: f64 = StandardNormal.sample(rng);
            let next_disc = disc * decay;
            match stepper.step(x, sign * z) {
                Moved::Ended => {
                    // killed or absorbed: only the running reward of the last half step
                    acc += h * disc * cx;
                    return PathOut {
                        value: acc,
                        tail: 0.0,
                    };
                }
                Moved::Inside(y) => {
                    let cy = c(y);
                    acc += h * (disc * cx + next_disc * cy);
                    x = y;
                    cx = cy;
                    disc = next_disc;
                }
            }
            if let Some(lvl) = level {
                if (from_above && x <= lvl) || (!from_above && x >= lvl) {
                    return PathOut {
                        value: acc + disc * g(lvl),
                        tail: 0.0,
                    };
                }
            }
        }
        let tail = match level {
            Some(_) => g(x).abs() + cx.abs() / rho,
            None => cx.abs() / rho,
        };
        PathOut {
            value: acc,
            tail: tail.max(f64::MIN_POSITIVE),
        }
    });
    Ok(out)
}

/// `E_x[e^{-ρ H_y}]`; paths still running at the horizon count as zero.
pub fn simulate_hitting_laplace(
    spec: &DiffusionSpec,
    rho: f64,
    x: f64,
    y: f64,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    if !(rho > 0.0) {
        return Err(StopError::InvalidInput(format!(
            "discount rate must be positive, got {rho}"
        )));
    }
    let stepper = Stepper::new(spec, cfg)?;
    for (name, v) in [("start", x), ("level", y)] {
        if !spec.domain.contains(v) {
            return Err(StopError::InvalidRule(format!(
                "{name} {v} lies outside the domain"
            )));
        }
    }
    if x == y {
        return Ok(SimEstimate {
            mean: 1.0,
            stderr: 0.0,
            n_effective: cfg.n_paths,
            truncation_bias_bound: 0.0,
            warning: None,
        });
    }
    let from_above = x > y;
    let decay = (-rho * stepper.dt).exp();
    Ok(estimate(cfg, rho, |rng, sign| {
        let mut pos = x;
        let mut disc = 1.0;
        for _ in 0..stepper.steps {
            let z: f64 = StandardNormal.sample(rng);
            disc *= decay;
            match stepper.step(pos, sign * z) {
                Moved::Ended => {
                    return PathOut {
                        value: 0.0,
                        tail: 0.0,
                    }
                }
                Moved::Inside(p) => pos = p,
            }
            if (from_above && pos <= y) || (!from_above && pos >= y) {
                return PathOut {
                    value: disc,
                    tail: 0.0,
                };
            }
        }
        PathOut {
            value: 0.0,
            tail: 1.0,
        }
    }))
}
