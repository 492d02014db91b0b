//! Recovery of diffusion coefficients from a value curve and an indifference index.
//!
//! On each piece of the index the increasing (or decreasing) eigenfunction and a
//! representative of the resolvent are read off pointwise:
//!
//! ```text
//! φ(x) = G_θ(x, θ*(x)) / V'(θ*(x)),     R̂(x) = G(x, θ*(x)) - φ(x) V(θ*(x))
//! ```
//!
//! and `(½σ², μ)` solve the linear system formed by the eigenfunction and resolvent
//! equations at every grid point. Pieces may instead be extended by integrating
//! `ψ' = ∂ₓu(x, θ*(x))` from a neighbouring piece, which is how sticky points arise.

use std::fmt;

use rayon::prelude::*;

use crate::diffusion::{fn1, Atom, DiffusionSpec, Domain, Fn1, Fn2, Numerics};
use crate::error::{Result, StopError};
use crate::forward::{ForwardProblem, RewardFamily};
use crate::grid::{self, GridFunction};
use crate::index::ThresholdSide;
use crate::modularity::{self, LatticeOptions, Verdict};

/// Value curve, rewards and start point of an inverse problem.
#[derive(Clone)]
pub struct InverseProblem {
    pub v: Fn1,
    pub v_prime: Fn1,
    pub g: Fn2,
    pub g_theta: Fn2,
    pub c: Option<Fn1>,
    pub start: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub rho: f64,
    pub side: ThresholdSide,
    /// Domain and boundary behaviour assigned to the recovered diffusion.
    pub domain: Domain,
    /// Human-readable parameter condition for feasibility, quoted in variance failures.
    pub feasibility_condition: Option<String>,
    /// Coefficients assumed outside the recovered grid.
    pub extension: Extension,
}

/// `(σ², μ)` below and above the recovered grid. Missing sides freeze `σ²/x²` and `μ/x`
/// (or `σ²` and `μ` on domains that are not positive) at the last node.
#[derive(Clone, Default)]
pub struct Extension {
    pub below: Option<(Fn1, Fn1)>,
    pub above: Option<(Fn1, Fn1)>,
}

impl fmt::Debug for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Extension")
            .field("below", &self.below.is_some())
            .field("above", &self.above.is_some())
            .finish()
    }
}

impl fmt::Debug for InverseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseProblem")
            .field("start", &self.start)
            .field("theta", &(self.theta_lo, self.theta_hi))
            .field("rho", &self.rho)
            .field("side", &self.side)
            .finish_non_exhaustive()
    }
}

impl InverseProblem {
    fn c_at(&self, x: f64) -> f64 {
        self.c.as_ref().map_or(0.0, |c| c(x))
    }

    pub fn reward_family(&self) -> RewardFamily {
        let fam = RewardFamily::new(
            self.g.clone(),
            self.g_theta.clone(),
            self.theta_lo,
            self.theta_hi,
        );
        match &self.c {
            Some(c) => fam.with_running(c.clone()),
            None => fam,
        }
    }
}

/// Monotone (Fritsch–Carlson) cubic interpolant of tabulated `V`, returned as `(V, V', bound)`.
///
/// `bound` estimates the derivative error as the largest gap between the interpolant's
/// slope and the three-point slope of the table at interior nodes.
pub fn tabulated_value(thetas: &[f64], values: &[f64]) -> Result<(Fn1, Fn1, f64)> {
    grid::check_grid(thetas)?;
    if thetas.len() != values.len() || thetas.len() < 3 {
        return Err(StopError::InvalidInput(
            "value table needs at least three matching rows".into(),
        ));
    }
    let n = thetas.len();
    let h: Vec<f64> = thetas.windows(2).map(|w| w[1] - w[0]).collect();
    let s: Vec<f64> = (0..n - 1)
        .map(|i| (values[i + 1] - values[i]) / h[i])
        .collect();
    let mut d = vec![0.0; n];
    d[0] = s[0];
    d[n - 1] = s[n - 2];
    for i in 1..n - 1 {
        if s[i - 1] * s[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
        }
    }
    let mut bound: f64 = 0.0;
    for i in 1..n - 1 {
        let three = (s[i - 1] * h[i] + s[i] * h[i - 1]) / (h[i] + h[i - 1]);
        bound = bound.max((three - d[i]).abs());
    }
    let t = thetas.to_vec();
    let v = values.to_vec();
    let gf = GridFunction::with_derivatives(t, v, d.clone(), d)?;
    let gf2 = gf.clone();
    let vf = fn1(move |x| gf.eval(x).unwrap_or(f64::NAN));
    let vp = fn1(move |x| gf2.eval_deriv(x, grid::Side::Right).unwrap_or(f64::NAN));
    Ok((vf, vp, bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceMode {
    /// `φ = G_θ/V'` at `θ*(x)`.
    ValueFormula,
    /// `ψ' = ∂ₓu(x, θ*(x))` integrated from the adjacent piece; needs `c ≡ 0`.
    Stationarity,
}

/// The index `θ*` on `[lo, hi]`.
#[derive(Clone)]
pub struct IndexPiece {
    pub lo: f64,
    pub hi: f64,
    pub theta_star: Fn1,
    pub mode: PieceMode,
    /// Outside the data range `X*(Θ)`.
    pub extended: bool,
}

impl fmt::Debug for IndexPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndexPiece")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("mode", &self.mode)
            .field("extended", &self.extended)
            .finish()
    }
}

impl IndexPiece {
    pub fn new(lo: f64, hi: f64, theta_star: Fn1) -> Self {
        Self {
            lo,
            hi,
            theta_star,
            mode: PieceMode::ValueFormula,
            extended: false,
        }
    }

    pub fn extension(lo: f64, hi: f64, theta_star: Fn1, mode: PieceMode) -> Self {
        Self {
            lo,
            hi,
            theta_star,
            mode,
            extended: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

impl Diagnostic {
    fn new(check: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            check: check.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.check,
            self.detail
        )
    }
}

#[derive(Debug, Clone)]
pub struct RecoveredDiffusion {
    /// Data range `X*(Θ)` (union of non-extended pieces).
    pub x_range: (f64, f64),
    pub extended: Vec<bool>,
    pub phi: GridFunction,
    pub r_hat: GridFunction,
    pub sigma2: GridFunction,
    pub mu: GridFunction,
    pub atoms: Vec<Atom>,
    pub feasible: bool,
    /// `μ ≡ 0` was imposed because `R̂` is a multiple of `φ`.
    pub natural_scale: bool,
    pub singular_points: Vec<f64>,
    /// Left limits `(x, σ²(x-), μ(x-))` at index junctions, where the coefficients may jump.
    pub junction_left: Vec<(f64, f64, f64)>,
    pub diagnostics: Vec<Diagnostic>,
    pub side: ThresholdSide,
}

/// Half-width of the central stencil; one-sided stencils span twice this.
const HALF: usize = 4;

#[derive(Debug, Clone, Copy)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

/// A nine-point stencil at `x` with step `h`, in `x` or in `ln x`.
#[derive(Debug, Clone, Copy)]
struct Probe {
    h: f64,
    st: Stencil,
    log: bool,
}

/// `(f, f', f'')` at `x`.
fn derivatives(f: &dyn Fn(f64) -> f64, x: f64, p: Probe) -> (f64, f64, f64) {
    let offsets: Vec<f64> = match p.st {
        Stencil::Central => (-(HALF as i32)..=HALF as i32).map(f64::from).collect(),
        Stencil::Forward => (0..=2 * HALF as i32).map(f64::from).collect(),
        Stencil::Backward => (0..=2 * HALF as i32).map(|k| -f64::from(k)).collect(),
    };
    let w = grid::fd_weights(0.0, &offsets, 2);
    let (mut d0, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (j, o) in offsets.iter().enumerate() {
        let y = if *o == 0.0 {
            x
        } else if p.log {
            x * (o * p.h).exp()
        } else {
            x + o * p.h
        };
        let v = f(y);
        d0 += w[0][j] * v;
        d1 += w[1][j] * v;
        d2 += w[2][j] * v;
    }
    let (d1, d2) = (d1 / p.h, d2 / (p.h * p.h));
    if p.log {
        (d0, d1 / x, (d2 - d1) / (x * x))
    } else {
        (d0, d1, d2)
    }
}

/// Linear steps scale with the distance to `origin`, bounded below by `floor`.
#[derive(Debug, Clone, Copy)]
struct StepRule {
    origin: f64,
    floor: f64,
}

/// Stencil for `x` inside `[lo, hi]`.
fn choose_probe(x: f64, lo: f64, hi: f64, rule: StepRule, log: bool) -> Probe {
    let log = log && lo > 0.0;
    let (t, tlo, thi, mut h) = if log {
        (x.ln(), lo.ln(), hi.ln(), 0.15)
    } else {
        (x, lo, hi, 3e-2 * (x - rule.origin).abs().max(rule.floor))
    };
    let span = HALF as f64;
    if 2.0 * span * h > 0.5 * (thi - tlo) {
        h = 0.5 * (thi - tlo) / (2.0 * span);
    }
    let (h, st) = if t - span * h < tlo {
        (h / 3.0, Stencil::Forward)
    } else if t + span * h > thi {
        (h / 3.0, Stencil::Backward)
    } else {
        (h, Stencil::Central)
    };
    Probe { h, st, log }
}

/// Shrinks a linear step so that `f` varies by a bounded factor across the stencil.
fn fit_probe(f: &dyn Fn(f64) -> f64, x: f64, p: Probe) -> Probe {
    if p.log {
        return p;
    }
    let (d0, d1, d2) = derivatives(f, x, p);
    let rate = (d1 / d0).abs().max((d2 / d0).abs().sqrt());
    let budget = if matches!(p.st, Stencil::Central) {
        0.3
    } else {
        0.1
    };
    if rate.is_finite() && rate * p.h > budget {
        Probe {
            h: budget / rate,
            ..p
        }
    } else {
        p
    }
}

/// Pointwise `φ` and `R̂` from the value formula.
pub fn recover_phi_at(
    problem: &InverseProblem,
    theta_star: &dyn Fn(f64) -> f64,
    x: f64,
) -> Result<f64> {
    let t = theta_star(x);
    let vp = (problem.v_prime)(t);
    if !(vp.abs() > 1e-14 * (1.0 + (problem.v)(t).abs())) {
        return Err(StopError::ZeroDerivative { x, what: "V'" });
    }
    let gt = (problem.g_theta)(x, t);
    if gt == 0.0 {
        return Err(StopError::ZeroDerivative { x, what: "G_theta" });
    }
    Ok(gt / vp)
}

pub fn recover_r_hat_at(
    problem: &InverseProblem,
    theta_star: &dyn Fn(f64) -> f64,
    phi: f64,
    x: f64,
) -> f64 {
    let t = theta_star(x);
    (problem.g)(x, t) - phi * (problem.v)(t)
}

/// `φ` on the grid from the value formula.
pub fn recover_phi(
    problem: &InverseProblem,
    theta_star: &dyn Fn(f64) -> f64,
    xs: &[f64],
) -> Result<GridFunction> {
    let v: Vec<f64> = xs
        .iter()
        .map(|&x| recover_phi_at(problem, theta_star, x))
        .collect::<Result<_>>()?;
    GridFunction::new(xs.to_vec(), v)
}

/// `R̂` on the grid.
pub fn recover_r_hat(
    problem: &InverseProblem,
    theta_star: &dyn Fn(f64) -> f64,
    phi: &GridFunction,
) -> Result<GridFunction> {
    let v = phi
        .grid
        .iter()
        .zip(&phi.values)
        .map(|(&x, &p)| recover_r_hat_at(problem, theta_star, p, x))
        .collect();
    GridFunction::new(phi.grid.clone(), v)
}

/// Solution of the pointwise 2×2 system; `None` when singular.
fn solve_pointwise(p: (f64, f64, f64), r: (f64, f64, f64), c: f64, rho: f64) -> Option<(f64, f64)> {
    let (pf, pd, pdd) = p;
    let (rf, rd, rdd) = r;
    let det = pdd * rd - rdd * pd;
    let scale = (pdd * rd).abs() + (rdd * pd).abs();
    if !(det.abs() > 1e-12 * scale) || !det.is_finite() {
        return None;
    }
    let rhs1 = rho * pf;
    let rhs2 = rho * rf - c;
    let a = (rhs1 * rd - rhs2 * pd) / det;
    let b = (pdd * rhs2 - rdd * rhs1) / det;
    Some((2.0 * a, b))
}

fn natural_scale_sigma2(p: (f64, f64, f64), rho: f64) -> Option<f64> {
    let (pf, _, pdd) = p;
    (pdd != 0.0 && pdd.is_finite()).then(|| 2.0 * rho * pf / pdd)
}

/// `(σ², μ)` on `xs` from pointwise `φ`, `R̂` and `c` via central stencils.
///
/// Singular points are filled by linear interpolation and returned in the third slot.
pub fn recover_coefficients(
    phi: &(dyn Fn(f64) -> f64 + Sync),
    r_hat: &(dyn Fn(f64) -> f64 + Sync),
    c: &(dyn Fn(f64) -> f64 + Sync),
    rho: f64,
    xs: &[f64],
) -> Result<(GridFunction, GridFunction, Vec<f64>)> {
    grid::check_grid(xs)?;
    let rule = StepRule {
        origin: 0.0,
        floor: 1e-2 * (xs[xs.len() - 1] - xs[0]),
    };
    let log = xs[0] > 0.0;
    let lo = if log {
        f64::MIN_POSITIVE
    } else {
        f64::NEG_INFINITY
    };
    let natural = xs.iter().all(|&x| c(x) == 0.0);
    let raw: Vec<Option<(f64, f64)>> = xs
        .par_iter()
        .map(|&x| {
            let probe = Probe {
                st: Stencil::Central,
                ..choose_probe(x, lo, f64::INFINITY, rule, log)
            };
            let probe = fit_probe(phi, x, probe);
            let p = derivatives(phi, x, probe);
            if natural {
                natural_scale_sigma2(p, rho).map(|s| (s, 0.0))
            } else {
                let r = derivatives(r_hat, x, probe);
                solve_pointwise(p, r, c(x), rho)
            }
        })
        .collect();
    fill_singular(xs, raw)
}

fn fill_singular(
    xs: &[f64],
    raw: Vec<Option<(f64, f64)>>,
) -> Result<(GridFunction, GridFunction, Vec<f64>)> {
    let good: Vec<usize> = (0..xs.len()).filter(|&i| raw[i].is_some()).collect();
    if good.is_empty() {
        return Err(StopError::SingularSystem { x: xs[0] });
    }
    let mut s2 = vec![0.0; xs.len()];
    let mut mu = vec![0.0; xs.len()];
    let mut singular = Vec::new();
    for i in 0..xs.len() {
        if let Some((a, b)) = raw[i] {
            s2[i] = a;
            mu[i] = b;
            continue;
        }
        singular.push(xs[i]);
        let k = good.partition_point(|&j| j < i);
        let (l, r) = (k.checked_sub(1).map(|k| good[k]), good.get(k).copied());
        let interp = |f: &dyn Fn(usize) -> f64| match (l, r) {
            (Some(l), Some(r)) => f(l) + (f(r) - f(l)) * (xs[i] - xs[l]) / (xs[r] - xs[l]),
            (Some(l), None) => f(l),
            (None, Some(r)) => f(r),
            (None, None) => unreachable!(),
        };
        s2[i] = interp(&|j| raw[j].unwrap().0);
        mu[i] = interp(&|j| raw[j].unwrap().1);
    }
    Ok((
        GridFunction::new(xs.to_vec(), s2)?,
        GridFunction::new(xs.to_vec(), mu)?,
        singular,
    ))
}

/// Speed-measure atoms from kinks of `φ`: `m = (φ'(x+) - φ'(x-)) / (2ρφ(x))`.
pub fn detect_atoms(phi: &GridFunction, rho: f64) -> Vec<Atom> {
    let (Some(l), Some(r)) = (&phi.left_deriv, &phi.right_deriv) else {
        return vec![];
    };
    let g = &phi.grid;
    let n = g.len();
    let mut out = Vec::new();
    for i in 0..n {
        let jump = r[i] - l[i];
        // local curvature from neighbouring slopes
        let left = if i > 0 {
            ((l[i] - r[i - 1]) / (g[i] - g[i - 1])).abs()
        } else {
            0.0
        };
        let right = if i + 1 < n {
            ((l[i + 1] - r[i]) / (g[i + 1] - g[i])).abs()
        } else {
            0.0
        };
        let curv = left.max(right);
        let h = if i + 1 < n {
            g[i + 1] - g[i]
        } else {
            g[i] - g[i - 1]
        };
        let threshold = 10.0 * h * curv + 1e-8 * (l[i].abs() + r[i].abs());
        if jump.abs() > threshold && phi.values[i] != 0.0 {
            out.push(Atom {
                x: g[i],
                mass: jump / (2.0 * rho * phi.values[i]),
            });
        }
    }
    out
}

struct PieceEval<'a> {
    problem: &'a InverseProblem,
    pieces: &'a [IndexPiece],
    /// `ψ` at both ends of each stationarity piece.
    anchors: Vec<Option<[(f64, f64); 2]>>,
    quadrature: (Vec<f64>, Vec<f64>),
    /// Constant subtracted from `V` in `R̂`; only moves `R̂` along `φ`.
    shift: f64,
}

impl<'a> PieceEval<'a> {
    fn new(problem: &'a InverseProblem, pieces: &'a [IndexPiece]) -> Result<Self> {
        let mut anchors = vec![None; pieces.len()];
        for (k, p) in pieces.iter().enumerate() {
            if p.mode != PieceMode::Stationarity {
                continue;
            }
            if problem.c.is_some() {
                return Err(StopError::InvalidInput(
                    "stationarity extensions need a zero running reward".into(),
                ));
            }
            let neighbour = [k.checked_sub(1), Some(k + 1)]
                .into_iter()
                .flatten()
                .filter(|&j| j < pieces.len() && pieces[j].mode == PieceMode::ValueFormula)
                .find(|&j| pieces[j].hi == p.lo || pieces[j].lo == p.hi)
                .ok_or_else(|| {
                    StopError::InvalidInput(
                        "stationarity piece has no value-formula neighbour".into(),
                    )
                })?;
            let at = if pieces[neighbour].hi == p.lo {
                p.lo
            } else {
                p.hi
            };
            let q = &pieces[neighbour];
            let phi = recover_phi_at(problem, &*q.theta_star, at)?;
            anchors[k] = Some([
                (at, phi.ln()),
                (if at == p.lo { p.hi } else { p.lo }, f64::NAN),
            ]);
        }
        let mut out = Self {
            problem,
            pieces,
            anchors,
            quadrature: grid::gauss_legendre(12),
            shift: 0.0,
        };
        for k in 0..pieces.len() {
            if let Some([(a, pa), (b, _)]) = out.anchors[k] {
                let pb = pa + out.integrate_u_x(k, a, b);
                out.anchors[k] = Some([(a, pa), (b, pb)]);
            }
        }
        Ok(out)
    }

    /// `∫ₐˣ ∂ₓu(y, θ*(y)) dy` on piece `k`.
    fn integrate_u_x(&self, k: usize, a: f64, x: f64) -> f64 {
        let p = &self.pieces[k];
        let (nodes, weights) = &self.quadrature;
        // y = a + (x - a)(3t² - 2t³) tames square-root behaviour at either end
        let panels = 16;
        let w = 1.0 / panels as f64;
        let d = x - a;
        let mut total = 0.0;
        for j in 0..panels {
            let mid = (j as f64 + 0.5) * w;
            for (z, q) in nodes.iter().zip(weights) {
                let t = mid + 0.5 * w * z;
                let y = a + d * t * t * (3.0 - 2.0 * t);
                let jac = 6.0 * d * t * (1.0 - t);
                total += 0.5 * w * q * jac * self.u_x(y, (p.theta_star)(y));
            }
        }
        total
    }

    fn u_x(&self, x: f64, theta: f64) -> f64 {
        let h = 1e-3 * (1.0 + x.abs());
        let l = |y: f64| (self.problem.g)(y, theta).ln();
        (l(x - 2.0 * h) - 8.0 * l(x - h) + 8.0 * l(x + h) - l(x + 2.0 * h)) / (12.0 * h)
    }

    fn phi(&self, k: usize, x: f64) -> f64 {
        let p = &self.pieces[k];
        match p.mode {
            PieceMode::ValueFormula => {
                recover_phi_at(self.problem, &*p.theta_star, x).unwrap_or(f64::NAN)
            }
            PieceMode::Stationarity => {
                let [(a, pa), (b, pb)] = self.anchors[k].expect("anchor");
                let (from, psi) = if (x - a).abs() <= (x - b).abs() {
                    (a, pa)
                } else {
                    (b, pb)
                };
                (psi + self.integrate_u_x(k, from, x)).exp()
            }
        }
    }

    /// `(φ, φ', φ'')` on piece `k`; stationarity pieces use `ψ' = ∂ₓu` directly.
    fn phi_derivatives(&self, k: usize, x: f64, probe: Probe) -> (f64, f64, f64) {
        let p = &self.pieces[k];
        match p.mode {
            PieceMode::ValueFormula => derivatives(&|y| self.phi(k, y), x, probe),
            PieceMode::Stationarity => {
                let phi = self.phi(k, x);
                let (s0, s1, _) = derivatives(&|y| self.u_x(y, (p.theta_star)(y)), x, probe);
                (phi, phi * s0, phi * (s1 + s0 * s0))
            }
        }
    }

    fn r_hat(&self, k: usize, x: f64) -> f64 {
        let p = &self.pieces[k];
        match p.mode {
            PieceMode::ValueFormula => {
                let phi = self.phi(k, x);
                recover_r_hat_at(self.problem, &*p.theta_star, phi, x) + self.shift * phi
            }
            PieceMode::Stationarity => 0.0,
        }
    }
}

/// Runs the full recovery on the pieces and grid.
pub fn recover(
    problem: &InverseProblem,
    pieces: &[IndexPiece],
    xs: &[f64],
) -> Result<RecoveredDiffusion> {
    if pieces.is_empty() {
        return Err(StopError::InvalidInput("no index pieces".into()));
    }
    let mut pieces = pieces.to_vec();
    pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if let Some(w) = pieces.windows(2).find(|w| w[0].hi != w[1].lo) {
        return Err(StopError::InvalidInput(format!(
            "index pieces must be contiguous: [{}, {}] then [{}, {}]",
            w[0].lo, w[0].hi, w[1].lo, w[1].hi
        )));
    }
    let lo = pieces[0].lo;
    let hi = pieces[pieces.len() - 1].hi;
    let mut g: Vec<f64> = xs.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    grid::check_grid(&g)?;
    let junctions: Vec<f64> = pieces.iter().skip(1).map(|p| p.lo).collect();
    grid::snap_nodes(&mut g, &junctions);
    for j in &junctions {
        if !g.contains(j) {
            return Err(StopError::InvalidInput(format!(
                "grid cannot resolve the index junction at {j}"
            )));
        }
    }
    let mut eval = PieceEval::new(problem, &pieces)?;
    let rho = problem.rho;
    // near an accessible end the coefficients may degenerate, so steps shrink towards it
    let d = &problem.domain;
    let rule = if d.left_behavior.is_accessible() && d.left == lo {
        StepRule {
            origin: lo,
            floor: 1e-6 * (hi - lo),
        }
    } else if d.right_behavior.is_accessible() && d.right == hi {
        StepRule {
            origin: hi,
            floor: 1e-6 * (hi - lo),
        }
    } else {
        StepRule {
            origin: 0.0,
            floor: 1e-2 * (hi - lo),
        }
    };
    // power-type eigenfunctions on the open half line are smooth in ln x
    let log =
        problem.domain.left == 0.0 && !problem.domain.left_behavior.is_accessible() && lo > 0.0;
    let n = g.len();
    let piece_of = |x: f64| -> usize {
        pieces
            .iter()
            .position(|p| x >= p.lo && x < p.hi)
            .unwrap_or(pieces.len() - 1)
    };

    // without a running reward the resolvent vanishes and R̂ is a multiple of φ
    let pv: Vec<f64> = g.iter().map(|&x| eval.phi(piece_of(x), x)).collect();
    let rv: Vec<f64> = g.iter().map(|&x| eval.r_hat(piece_of(x), x)).collect();
    if let Some(i) = pv.iter().position(|v| !v.is_finite()) {
        return Err(StopError::ZeroDerivative {
            x: g[i],
            what: "V'",
        });
    }
    let natural = problem.c.is_none();
    // cancellation in G - φV is worst where φ is largest, so V is measured from its value there
    if let Some((i, _)) = g
        .iter()
        .enumerate()
        .filter(|(_, &x)| pieces[piece_of(x)].mode == PieceMode::ValueFormula)
        .max_by(|a, b| pv[a.0].abs().total_cmp(&pv[b.0].abs()))
    {
        let p = &pieces[piece_of(g[i])];
        eval.shift = (problem.v)((p.theta_star)(g[i]));
    }
    let eval = eval;

    struct NodeOut {
        phi_l: f64,
        phi_r: f64,
        coef: Option<(f64, f64)>,
        left_coef: Option<(f64, f64)>,
    }
    let nodes: Vec<NodeOut> = g
        .par_iter()
        .map(|&x| {
            let k = piece_of(x);
            let p = &pieces[k];
            let fphi = |y: f64| eval.phi(k, y);
            let fr = |y: f64| eval.r_hat(k, y);
            let probe = fit_probe(&fphi, x, choose_probe(x, p.lo, p.hi, rule, log));
            let pd = eval.phi_derivatives(k, x, probe);
            let solve = |pd: (f64, f64, f64), fr: &dyn Fn(f64) -> f64, probe: Probe| {
                if natural {
                    natural_scale_sigma2(pd, rho).map(|s| (s, 0.0))
                } else {
                    solve_pointwise(pd, derivatives(fr, x, probe), problem.c_at(x), rho)
                }
            };
            let coef = solve(pd, &fr, probe);
            // at a junction the left limits come from the previous piece
            let (phi_l, left_coef) = if k > 0 && x == p.lo {
                let q = &pieces[k - 1];
                let fq = |y: f64| eval.phi(k - 1, y);
                let frq = |y: f64| eval.r_hat(k - 1, y);
                let probe = Probe {
                    st: Stencil::Backward,
                    ..choose_probe(x, q.lo, q.hi, rule, log)
                };
                let probe = fit_probe(&fq, x, probe);
                let pdl = eval.phi_derivatives(k - 1, x, probe);
                (pdl.1, solve(pdl, &frq, probe))
            } else {
                (pd.1, None)
            };
            NodeOut {
                phi_l,
                phi_r: pd.1,
                coef,
                left_coef,
            }
        })
        .collect();
    let (sigma2, mu, singular) = fill_singular(&g, nodes.iter().map(|o| o.coef).collect())?;
    let junction_left: Vec<(f64, f64, f64)> = g
        .iter()
        .zip(&nodes)
        .filter_map(|(&x, o)| o.left_coef.map(|(s, m)| (x, s, m)))
        .collect();
    let phi = GridFunction::with_derivatives(
        g.clone(),
        pv.clone(),
        nodes.iter().map(|o| o.phi_l).collect(),
        nodes.iter().map(|o| o.phi_r).collect(),
    )?;
    let r_hat = GridFunction::new(g.clone(), rv)?;
    let atoms = detect_atoms(&phi, rho);
    let extended: Vec<bool> = g.iter().map(|&x| pieces[piece_of(x)].extended).collect();
    let data: Vec<&IndexPiece> = pieces.iter().filter(|p| !p.extended).collect();
    let x_range = if data.is_empty() {
        (lo, hi)
    } else {
        (data[0].lo, data[data.len() - 1].hi)
    };

    let mut diagnostics = Vec::new();
    let scale = sigma2.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let neg: Vec<usize> = (0..n)
        .filter(|&i| sigma2.values[i] < -1e-10 * scale.max(1e-300))
        .collect();
    let bad_atoms: Vec<&Atom> = atoms.iter().filter(|a| a.mass < 0.0).collect();
    let feasible = neg.is_empty() && bad_atoms.is_empty();
    diagnostics.push(Diagnostic::new(
        "speed measure atoms nonnegative",
        bad_atoms.is_empty(),
        match bad_atoms.first() {
            None => format!("{} atoms", atoms.len()),
            Some(a) => format!("negative mass {} at x = {}", a.mass, a.x),
        },
    ));
    if neg.is_empty() {
        diagnostics.push(Diagnostic::new(
            "sigma2 >= 0",
            true,
            format!(
                "min sigma2 = {:e}",
                sigma2.values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
            ),
        ));
    } else {
        let err = StopError::NegativeVariance {
            lo: g[neg[0]],
            hi: g[*neg.last().unwrap()],
            min: neg
                .iter()
                .map(|&i| sigma2.values[i])
                .fold(f64::INFINITY, f64::min),
            condition: problem.feasibility_condition.clone(),
        };
        diagnostics.push(Diagnostic::new(
            "sigma2 >= 0",
            false,
            format!("NegativeVariance: {err}"),
        ));
    }
    let monotone = match problem.side {
        ThresholdSide::Upper => pv.windows(2).all(|w| w[1] > w[0]),
        ThresholdSide::Lower => pv.windows(2).all(|w| w[1] < w[0]),
    };
    diagnostics.push(Diagnostic::new(
        "phi positive and monotone",
        monotone && pv.iter().all(|&v| v > 0.0),
        format!("{:?} side", problem.side),
    ));
    if !singular.is_empty() {
        diagnostics.push(Diagnostic::new(
            "nonsingular coefficient system",
            false,
            format!(
                "{} singular points filled by interpolation, first at x = {}",
                singular.len(),
                singular[0]
            ),
        ));
    }
    Ok(RecoveredDiffusion {
        x_range,
        extended,
        phi,
        r_hat,
        sigma2,
        mu,
        atoms,
        feasible,
        natural_scale: natural,
        singular_points: singular,
        junction_left,
        diagnostics,
        side: problem.side,
    })
}

impl RecoveredDiffusion {
    pub fn negative_variance(&self) -> Option<&Diagnostic> {
        self.diagnostics
            .iter()
            .find(|d| d.check == "sigma2 >= 0" && !d.passed)
    }

    /// Diffusion on `domain` with the recovered coefficients, linearly interpolated on the
    /// grid and continued outside it by `ext`.
    pub fn to_spec(&self, domain: Domain, start: f64, ext: &Extension) -> Result<DiffusionSpec> {
        let positive = domain.left >= 0.0;
        let make = |f: GridFunction,
                    left: Vec<(f64, f64)>,
                    power: i32,
                    below: Option<Fn1>,
                    above: Option<Fn1>|
         -> Fn1 {
            let (lo, hi) = (f.lo(), f.hi());
            let (vlo, vhi) = (f.values[0], f.values[f.len() - 1]);
            fn1(move |x| {
                if x < lo {
                    match &below {
                        Some(g) => g(x),
                        None if positive && lo > 0.0 => vlo * (x / lo).powi(power),
                        None => vlo,
                    }
                } else if x > hi {
                    match &above {
                        Some(g) => g(x),
                        None if positive && hi > 0.0 => vhi * (x / hi).powi(power),
                        None => vhi,
                    }
                } else {
                    index_interpolate(&f.grid, &f.values, &left, x)
                }
            })
        };
        let s2 = make(
            self.sigma2.clone(),
            self.junction_left.iter().map(|j| (j.0, j.1)).collect(),
            2,
            ext.below.as_ref().map(|e| e.0.clone()),
            ext.above.as_ref().map(|e| e.0.clone()),
        );
        let mu = make(
            self.mu.clone(),
            self.junction_left.iter().map(|j| (j.0, j.2)).collect(),
            1,
            ext.below.as_ref().map(|e| e.1.clone()),
            ext.above.as_ref().map(|e| e.1.clone()),
        );
        DiffusionSpec::new(domain, s2, mu, self.atoms.clone(), start)
    }

    /// Largest residual of the eigenfunction equation with the recovered coefficients,
    /// relative to `ρ|φ|`, at interior non-junction nodes.
    pub fn eigen_residual(&self, rho: f64) -> f64 {
        let g = &self.phi.grid;
        let w = HALF;
        // derivatives in the grid index, which is a smooth coordinate on the usual grids
        let offsets: Vec<f64> = (-(w as i32)..=w as i32).map(f64::from).collect();
        let c = grid::fd_weights(0.0, &offsets, 2);
        let apply = |k: usize, v: &[f64]| -> f64 { c[k].iter().zip(v).map(|(a, b)| a * b).sum() };
        let mut worst: f64 = 0.0;
        for i in w..g.len().saturating_sub(w) {
            let xs = &g[i - w..=i + w];
            if self.atoms.iter().any(|a| a.x >= xs[0] && a.x <= xs[2 * w]) {
                continue;
            }
            let ys = &self.phi.values[i - w..=i + w];
            let (x1, x2) = (apply(1, xs), apply(2, xs));
            let d1 = apply(1, ys) / x1;
            let d2 = (apply(2, ys) - d1 * x2) / (x1 * x1);
            let res = 0.5 * self.sigma2.values[i] * d2 + self.mu.values[i] * d1
                - rho * self.phi.values[i];
            worst = worst.max(res.abs() / (rho * self.phi.values[i].abs()));
        }
        worst
    }
}

/// Linear interpolation in a local index coordinate, with `x(u)` quadratic through three
/// neighbouring nodes. Graded grids put square-root behaviour at an end on a straight line.
/// `left` holds left limits at nodes where the function jumps.
fn index_interpolate(g: &[f64], v: &[f64], left: &[(f64, f64)], x: f64) -> f64 {
    let n = g.len();
    if n < 3 {
        return GridFunction::new(g.to_vec(), v.to_vec())
            .and_then(|f| f.eval(x))
            .unwrap_or(f64::NAN);
    }
    let i = g.partition_point(|&y| y <= x).clamp(1, n - 1) - 1;
    let c = i.clamp(1, n - 2);
    let a = 0.5 * (g[c + 1] - 2.0 * g[c] + g[c - 1]);
    let b = 0.5 * (g[c + 1] - g[c - 1]);
    let d = x - g[c];
    let disc = b * b + 4.0 * a * d;
    let u = if disc >= 0.0 && b + disc.sqrt() > 0.0 {
        2.0 * d / (b + disc.sqrt())
    } else {
        d / b
    };
    let ui = i as f64 - c as f64;
    let vr = left
        .iter()
        .find(|l| l.0 == g[i + 1])
        .map_or(v[i + 1], |l| l.1);
    v[i] + (u - ui) * (vr - v[i])
}

/// Relative agreement required between values of a recovered diffusion and the data.
pub const CONSISTENCY_TOL: f64 = 1e-3;

/// Max relative gap between the forward value of the recovered diffusion and the data.
pub fn round_trip(
    problem: &InverseProblem,
    candidate: &RecoveredDiffusion,
    thetas: &[f64],
    numerics: &Numerics,
) -> Result<f64> {
    let spec = candidate.to_spec(problem.domain, problem.start, &problem.extension)?;
    let fwd = ForwardProblem::new(spec, problem.rho, problem.reward_family(), numerics.clone())?;
    let reports = fwd.value_curve(thetas)?;
    Ok(reports
        .iter()
        .map(|r| {
            let v = (problem.v)(r.theta);
            (r.value - v).abs() / (1.0 + v.abs())
        })
        .fold(0.0, f64::max))
}

/// Checklist for the candidate: supermodularity, stationarity, duality, variance and
/// one-sided optimality.
pub fn verify_candidate(
    problem: &InverseProblem,
    pieces: &[IndexPiece],
    candidate: &RecoveredDiffusion,
    thetas: &[f64],
    numerics: &Numerics,
) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = candidate.diagnostics.clone();
    let spec = match candidate.to_spec(problem.domain, problem.start, &problem.extension) {
        Ok(s) => s,
        Err(e) => {
            out.push(Diagnostic::new("recovered diffusion", false, e.to_string()));
            return out;
        }
    };
    let fwd =
        match ForwardProblem::new(spec, problem.rho, problem.reward_family(), numerics.clone()) {
            Ok(f) => f,
            Err(e) => {
                out.push(Diagnostic::new(
                    "forward solve of candidate",
                    false,
                    e.to_string(),
                ));
                return out;
            }
        };
    let (a, b) = candidate.x_range;
    let xs: Vec<f64> = grid::uniform(a, b, 41)
        .into_iter()
        .filter(|&x| fwd.pair.phi_inc.contains(x))
        .collect();
    let early: Vec<_> = thetas
        .iter()
        .filter_map(|&t| fwd.early_reward(t).ok())
        .collect();

    // (i) strict super- or submodularity of u on the data range
    let l: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            early
                .iter()
                .map(|e| e.log_eval(x).ok().flatten().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let ts: Vec<f64> = early.iter().map(|e| e.theta).collect();
    let verdict = modularity::check_grid_log(&l, &xs, &ts, &LatticeOptions::default());
    let index_increasing = {
        let p = pieces.iter().find(|p| !p.extended).unwrap_or(&pieces[0]);
        (p.theta_star)(p.hi) >= (p.theta_star)(p.lo)
    };
    match verdict {
        Ok(v) => {
            let ok = v.strict
                && ((v.verdict == Verdict::Supermodular && index_increasing)
                    || (v.verdict == Verdict::Submodular && !index_increasing));
            out.push(Diagnostic::new(
                "u strictly modular in the index direction",
                ok,
                format!(
                    "verdict {} (strict = {}), index {}",
                    v.verdict,
                    v.strict,
                    if index_increasing {
                        "increasing"
                    } else {
                        "decreasing"
                    }
                ),
            ));
        }
        Err(e) => out.push(Diagnostic::new(
            "u strictly modular in the index direction",
            false,
            e.to_string(),
        )),
    }

    // (ii) stationarity ψ' = ∂ₓu(x, θ*(x)) and threshold side
    let f = match problem.side {
        ThresholdSide::Upper => &fwd.pair.phi_inc,
        ThresholdSide::Lower => &fwd.pair.phi_dec,
    };
    let mut worst: f64 = 0.0;
    for &x in &xs {
        let Some(p) = pieces.iter().find(|p| x > p.lo && x < p.hi) else {
            continue;
        };
        let t = (p.theta_star)(x);
        let h = 1e-4 * (1.0 + x.abs());
        let Ok(e) = fwd.early_reward(t) else { continue };
        let (Ok(Some(up)), Ok(Some(um))) = (e.log_eval(x + h), e.log_eval(x - h)) else {
            continue;
        };
        let (Ok(fp), Ok(fm)) = (f.eval(x + h), f.eval(x - h)) else {
            continue;
        };
        let psi_d = (fp.ln() - fm.ln()) / (2.0 * h);
        worst = worst.max(((up - um) / (2.0 * h) - psi_d).abs() / (1.0 + psi_d.abs()));
    }
    let side_ok = match problem.side {
        ThresholdSide::Upper => a >= problem.start - 1e-12,
        ThresholdSide::Lower => b <= problem.start + 1e-12,
    };
    out.push(Diagnostic::new(
        "stationarity psi' = u_x(x, theta*(x))",
        worst < 1e-4 && side_ok,
        format!(
            "max relative residual {worst:.3e}; thresholds on the {:?} side of X0: {side_ok}",
            problem.side
        ),
    ));

    // (iii) η = ψ^u with η(θ) = log(V(θ) - R(X₀))
    let r0 = early
        .first()
        .and_then(|e| e.resolvent().map(|r| r.eval(problem.start).unwrap_or(0.0)))
        .unwrap_or(0.0);
    let mut gap: f64 = 0.0;
    for e in &early {
        let t = e.theta;
        let eta = ((problem.v)(t) - r0).ln();
        let obj = |x: f64| match (e.log_eval(x), f.eval(x)) {
            (Ok(Some(u)), Ok(p)) if p > 0.0 => u - p.ln(),
            _ => f64::NEG_INFINITY,
        };
        let dense = grid::uniform(f.lo(), f.hi(), 2001);
        let (i, _) = dense
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| {
                let v = obj(x);
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        let (_, best) = grid::golden_max(
            obj,
            dense[i.saturating_sub(1)],
            dense[(i + 1).min(dense.len() - 1)],
            200,
        );
        gap = gap.max((best - eta).abs() / (1.0 + eta.abs()));
    }
    out.push(Diagnostic::new(
        "eta = psi^u",
        gap < CONSISTENCY_TOL,
        format!("max relative gap {gap:.3e}"),
    ));

    // one-sided optimality: the optimal rule lies on the declared side of X₀
    let mut wrong = None;
    for &t in thetas {
        if let Ok(r) = fwd.classify(t) {
            let ok = matches!(
                (problem.side, r.classification),
                (_, crate::forward::Classification::StopNow)
                    | (
                        ThresholdSide::Upper,
                        crate::forward::Classification::UpperThreshold
                    )
                    | (
                        ThresholdSide::Lower,
                        crate::forward::Classification::LowerThreshold
                    )
            );
            if !ok && wrong.is_none() {
                wrong = Some((t, r.classification));
            }
        }
    }
    out.push(Diagnostic::new(
        "one-sided stopping is optimal",
        wrong.is_none(),
        match wrong {
            None => "all sampled parameters".to_string(),
            Some((t, c)) => format!("theta = {t}: {c}"),
        },
    ));
    out
}
