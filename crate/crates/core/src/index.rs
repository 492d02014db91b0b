//! u-convex duality on grids and indifference (generalised Gittins) indices.

use rayon::prelude::*;

use crate::diffusion::Fn2;
use crate::error::{Result, StopError};
use crate::forward::{refine_argmax, ForwardProblem};
use crate::grid::{golden_max, GridFunction};

/// `f^u(z) = max_y [u(y, z) - f(y)]` over the grid of `f`, for every `z` in `target`.
pub fn u_dual(
    f: &GridFunction,
    u: &(dyn Fn(f64, f64) -> f64 + Sync),
    target: &[f64],
) -> Result<GridFunction> {
    let values: Vec<f64> = target
        .par_iter()
        .map(|&z| {
            f.grid
                .iter()
                .zip(&f.values)
                .map(|(&y, &fy)| u(y, z) - fy)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    GridFunction::new(target.to_vec(), values)
}

/// Dual in the other slot: `g^u(y) = max_z [u(y, z) - g(z)]`.
pub fn u_dual_rev(
    g: &GridFunction,
    u: &(dyn Fn(f64, f64) -> f64 + Sync),
    target: &[f64],
) -> Result<GridFunction> {
    u_dual(g, &|z, y| u(y, z), target)
}

/// A function on `A`, its u-dual on `B`, and the coupling `u`.
#[derive(Clone)]
pub struct DualPair {
    pub f: GridFunction,
    pub f_u: GridFunction,
    pub u: Fn2,
}

impl DualPair {
    pub fn new(f: GridFunction, u: Fn2, b_grid: &[f64]) -> Result<Self> {
        let f_u = u_dual(&f, &*u, b_grid)?;
        Ok(Self { f, f_u, u })
    }

    /// `min over grid (y, z)` of `f(y) + f^u(z) - u(y, z)`; non-negative by construction.
    pub fn young_gap_min(&self) -> f64 {
        self.f
            .grid
            .par_iter()
            .zip(&self.f.values)
            .map(|(&y, &fy)| {
                self.f_u
                    .grid
                    .iter()
                    .zip(&self.f_u.values)
                    .map(|(&z, &gz)| fy + gz - (self.u)(y, z))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// `∂^u f(y)`: grid points `z` with `f(y) + f^u(z) = u(y, z)` within `tol·(1 + |u|)`.
    pub fn subdifferential(&self, y: f64, tol: f64) -> Result<Vec<f64>> {
        let fy = self.f.eval(y)?;
        let out: Vec<f64> = self
            .f_u
            .grid
            .iter()
            .zip(&self.f_u.values)
            .filter(|(&z, &gz)| {
                let u = (self.u)(y, z);
                (fy + gz - u).abs() <= tol * (1.0 + u.abs())
            })
            .map(|(&z, _)| z)
            .collect();
        if out.is_empty() {
            return Err(StopError::EmptySubdifferential { y });
        }
        Ok(out)
    }
}

/// `max |f^{uu} - f|` on the grid of `f`, with the intermediate dual on `b_grid`.
pub fn u_convexity_gap(
    f: &GridFunction,
    u: &(dyn Fn(f64, f64) -> f64 + Sync),
    b_grid: &[f64],
) -> Result<f64> {
    let fu = u_dual(f, u, b_grid)?;
    let fuu = u_dual_rev(&fu, u, &f.grid)?;
    Ok(fuu
        .values
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn check_u_convex(
    f: &GridFunction,
    u: &(dyn Fn(f64, f64) -> f64 + Sync),
    b_grid: &[f64],
    tol: f64,
) -> Result<bool> {
    Ok(u_convexity_gap(f, u, b_grid)? <= tol)
}

/// Which ratio defines the stopping problem: `U/φ` (upper thresholds) or `U/ϕ` (lower).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdSide {
    Upper,
    Lower,
}

impl ThresholdSide {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upper" => Some(Self::Upper),
            "lower" => Some(Self::Lower),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

/// `θ*(x)` sampled on an x-grid; set-valued points are stored as `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexCurve {
    pub xs: Vec<f64>,
    pub theta_lo: Vec<Option<f64>>,
    pub theta_hi: Vec<Option<f64>>,
    pub direction: Direction,
    /// Largest `|ψ'(x) - ∂ₓu(x, θ*(x))|` relative to `1 + |ψ'|` over checked points.
    pub stationarity_residual: f64,
}

impl IndexCurve {
    /// Midpoint selection of `Θ*(x_i)`.
    pub fn selection(&self, i: usize) -> Option<f64> {
        match (self.theta_lo[i], self.theta_hi[i]) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            _ => None,
        }
    }
}

/// Indifference maps and index curves of a forward problem.
pub struct IndexEngine<'a> {
    pub problem: &'a ForwardProblem,
    pub side: ThresholdSide,
    /// Acceptance tolerance for `u(x, θ) - η(θ) = ψ(x)`.
    pub tol: f64,
}

impl<'a> IndexEngine<'a> {
    pub fn new(problem: &'a ForwardProblem, side: ThresholdSide) -> Self {
        Self {
            problem,
            side,
            tol: 1e-7,
        }
    }

    fn eigen(&self) -> &GridFunction {
        match self.side {
            ThresholdSide::Upper => &self.problem.pair.phi_inc,
            ThresholdSide::Lower => &self.problem.pair.phi_dec,
        }
    }

    /// `ψ(x) = log φ(x)` (or `log ϕ`).
    pub fn psi(&self, x: f64) -> Result<f64> {
        Ok(self.eigen().eval(x)?.ln())
    }

    /// `η(θ) = sup_x [u(x, θ) - ψ(x)]`; `+∞` when the supremum escapes the working interval.
    pub fn eta(&self, theta: f64) -> Result<f64> {
        let p = self.problem;
        let early = p.early_reward(theta)?;
        let f = self.eigen();
        let n = f.len();
        let nodes: Vec<f64> = (0..n)
            .map(|i| {
                let (u, e) = (early.values[i], f.values[i]);
                if u > 0.0 && e > 0.0 {
                    u.ln() - e.ln()
                } else {
                    f64::NAN
                }
            })
            .collect();
        let obj = |x: f64| match (early.eval(x), f.eval(x)) {
            (Ok(u), Ok(e)) if u > 0.0 && e > 0.0 => u.ln() - e.ln(),
            _ => f64::NAN,
        };
        let esc_l = !p.spec.domain.left_behavior.is_accessible();
        let esc_r = !p.spec.domain.right_behavior.is_accessible();
        match refine_argmax(p.grid(), &nodes, &obj, (0, n - 1), esc_l, esc_r, p.tie_tol) {
            None => Ok(f64::NEG_INFINITY),
            Some(s) if s.escaped => Ok(f64::INFINITY),
            Some(s) => Ok(s.best),
        }
    }

    /// `u(x, θ) = log U(x, θ)`, `-∞` off the positivity mask.
    fn u_at(&self, x: f64, theta: f64) -> Result<f64> {
        Ok(self
            .problem
            .early_reward(theta)?
            .log_eval(x)?
            .unwrap_or(f64::NEG_INFINITY))
    }

    /// `Θ*(x)` as `[lo, hi]`, searched on `thetas` and polished between grid points.
    pub fn indifference_map(&self, x: f64, thetas: &[f64]) -> Result<Option<(f64, f64)>> {
        let etas: Vec<f64> = thetas.iter().map(|&t| self.eta(t)).collect::<Result<_>>()?;
        self.indifference_with(x, thetas, &etas)
    }

    fn indifference_with(
        &self,
        x: f64,
        thetas: &[f64],
        etas: &[f64],
    ) -> Result<Option<(f64, f64)>> {
        let psi = self.psi(x)?;
        let gaps: Vec<f64> = thetas
            .iter()
            .zip(etas)
            .map(|(&t, &e)| {
                let u = self.u_at(x, t)?;
                Ok(if e.is_finite() && u.is_finite() {
                    u - e - psi
                } else {
                    f64::NEG_INFINITY
                })
            })
            .collect::<Result<_>>()?;
        let tol = self.tol * (1.0 + psi.abs());
        let (jmax, gmax) = gaps
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (j, &g)| if g > acc.1 { (j, g) } else { acc },
            );
        if !gmax.is_finite() {
            return Ok(None);
        }
        let plateau: Vec<usize> = (0..gaps.len()).filter(|&j| gaps[j] >= -tol).collect();
        if plateau.len() > 1 {
            return Ok(Some((thetas[plateau[0]], thetas[*plateau.last().unwrap()])));
        }
        let a = thetas[jmax.saturating_sub(1)];
        let b = thetas[(jmax + 1).min(thetas.len() - 1)];
        let gap_at = |t: f64| -> f64 {
            match (self.u_at(x, t), self.eta(t)) {
                (Ok(u), Ok(e)) if u.is_finite() && e.is_finite() => u - e - psi,
                _ => f64::NEG_INFINITY,
            }
        };
        let (t, g) = if a < b {
            golden_max(gap_at, a, b, 80)
        } else {
            (thetas[jmax], gmax)
        };
        let (t, g) = if g >= gmax {
            (t, g)
        } else {
            (thetas[jmax], gmax)
        };
        if g >= -tol {
            Ok(Some((t, t)))
        } else {
            Ok(None)
        }
    }

    /// Index curve over `xs`, with monotonicity and stationarity checks.
    pub fn index_curve(&self, xs: &[f64], thetas: &[f64]) -> Result<IndexCurve> {
        let etas: Vec<f64> = thetas
            .par_iter()
            .map(|&t| self.eta(t))
            .collect::<Result<_>>()?;
        let sets: Vec<Option<(f64, f64)>> = xs
            .par_iter()
            .map(|&x| self.indifference_with(x, thetas, &etas))
            .collect::<Result<_>>()?;
        let pts: Vec<(f64, f64, f64)> = xs
            .iter()
            .zip(&sets)
            .filter_map(|(&x, s)| s.map(|(a, b)| (x, a, b)))
            .collect();
        let inc = pts
            .windows(2)
            .all(|w| w[1].1 >= w[0].2 - 1e-9 * (1.0 + w[0].2.abs()));
        let dec = pts
            .windows(2)
            .all(|w| w[1].2 <= w[0].1 + 1e-9 * (1.0 + w[0].1.abs()));
        let direction = if inc {
            Direction::NonDecreasing
        } else if dec {
            Direction::NonIncreasing
        } else {
            // report the first reversal against the dominant trend
            let first = pts.first().unwrap();
            let last = pts.last().unwrap();
            let trend_up = last.1 >= first.1;
            let w = pts
                .windows(2)
                .find(|w| {
                    if trend_up {
                        w[1].1 < w[0].2
                    } else {
                        w[1].2 > w[0].1
                    }
                })
                .unwrap_or(&pts[..2]);
            return Err(StopError::NonMonotoneIndex {
                x0: w[0].0,
                t0: w[0].1,
                x1: w[1].0,
                t1: w[1].1,
            });
        };
        let mut resid: f64 = 0.0;
        let f = self.eigen();
        for (i, &x) in xs.iter().enumerate() {
            let Some((a, b)) = sets[i] else { continue };
            if (b - a).abs() > 1e-12 * (1.0 + a.abs()) {
                continue;
            }
            let h = 1e-5 * (1.0 + x.abs());
            if !(f.contains(x - h) && f.contains(x + h)) {
                continue;
            }
            let dl = (f.eval(x)?.ln() - f.eval(x - h)?.ln()) / h;
            let dr = (f.eval(x + h)?.ln() - f.eval(x)?.ln()) / h;
            if (dl - dr).abs() > 1e-4 * (1.0 + dl.abs()) + h * 1e2 {
                continue;
            }
            let psi_d = (f.eval(x + h)?.ln() - f.eval(x - h)?.ln()) / (2.0 * h);
            let early = self.problem.early_reward(a)?;
            let (up, um) = (early.log_eval(x + h)?, early.log_eval(x - h)?);
            let (Some(up), Some(um)) = (up, um) else {
                continue;
            };
            let ux = (up - um) / (2.0 * h);
            resid = resid.max((psi_d - ux).abs() / (1.0 + psi_d.abs()));
        }
        Ok(IndexCurve {
            xs: xs.to_vec(),
            theta_lo: sets.iter().map(|s| s.map(|p| p.0)).collect(),
            theta_hi: sets.iter().map(|s| s.map(|p| p.1)).collect(),
            direction,
            stationarity_residual: resid,
        })
    }
}
