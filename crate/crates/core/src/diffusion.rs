//! One-dimensional diffusions: ρ-eigenfunctions, hitting-time Laplace transforms and
//! resolvents of running rewards.
//!
//! A diffusion is described by smooth coefficients `sigma2(x)`, `mu(x)` plus finitely many
//! speed-measure atoms. Between atoms the eigenfunctions solve
//!
//! ```text
//! ½σ²(x) f''(x) + μ(x) f'(x) = ρ f(x)
//! ```
//!
//! and at an atom `x` of mass `m` the derivative jumps by `f'(x+) - f'(x-) = 2ρ f(x) m`.
//!
//! Solutions are produced by adaptive Runge–Kutta sweeps across the grid, each one started
//! from the boundary where it is the small solution: a value condition at killing and
//! absorbing ends, a zero slope at a reflecting end, and a limit of Riccati shots from ever
//! deeper starting points at inaccessible (truncated) ends. The resolvent uses the Green
//! kernel `r(x,y) ∝ φ(x∧y)ϕ(x∨y)` with the two partial integrals carried along the same
//! sweeps, so it inherits the integrator's accuracy instead of a low-order quadrature.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, StopError};
use crate::grid::{self, GridFunction, Side};
use crate::ode::{self, Tolerance};

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn fn1(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Fn1 {
    Arc::new(f)
}

pub fn fn2(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Fn2 {
    Arc::new(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Absorbing,
    Killing,
    Reflecting,
    Inaccessible,
}

impl Boundary {
    pub fn is_accessible(self) -> bool {
        !matches!(self, Boundary::Inaccessible)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "absorbing" => Some(Self::Absorbing),
            "killing" => Some(Self::Killing),
            "reflecting" => Some(Self::Reflecting),
            "inaccessible" | "natural" | "entrance" => Some(Self::Inaccessible),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub left: f64,
    pub right: f64,
    pub left_behavior: Boundary,
    pub right_behavior: Boundary,
}

impl Domain {
    pub fn new(
        left: f64,
        right: f64,
        left_behavior: Boundary,
        right_behavior: Boundary,
    ) -> Result<Self> {
        if !(left < right) {
            return Err(StopError::InvalidBoundary(format!(
                "domain endpoints must satisfy a < b, got [{left}, {right}]"
            )));
        }
        for (end, b) in [(left, left_behavior), (right, right_behavior)] {
            if b.is_accessible() && !end.is_finite() {
                return Err(StopError::InvalidBoundary(format!(
                    "an infinite endpoint cannot be {b:?}"
                )));
            }
        }
        if left_behavior == Boundary::Reflecting && right_behavior == Boundary::Reflecting {
            return Err(StopError::InvalidBoundary(
                "at most one endpoint may be reflecting".into(),
            ));
        }
        Ok(Self {
            left,
            right,
            left_behavior,
            right_behavior,
        })
    }

    /// Half-line `(0, ∞)` with both ends inaccessible.
    pub fn positive_half_line() -> Self {
        Self {
            left: 0.0,
            right: f64::INFINITY,
            left_behavior: Boundary::Inaccessible,
            right_behavior: Boundary::Inaccessible,
        }
    }

    pub fn real_line() -> Self {
        Self {
            left: f64::NEG_INFINITY,
            right: f64::INFINITY,
            left_behavior: Boundary::Inaccessible,
            right_behavior: Boundary::Inaccessible,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let left_ok = x > self.left || (x == self.left && self.left_behavior.is_accessible());
        let right_ok = x < self.right || (x == self.right && self.right_behavior.is_accessible());
        left_ok && right_ok
    }
}

/// A point mass of the speed measure. The mass is expressed through the derivative jump it
/// causes: `f'(x+) - f'(x-) = 2ρ f(x) mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

#[derive(Clone)]
pub struct DiffusionSpec {
    pub domain: Domain,
    pub sigma2: Fn1,
    pub mu: Fn1,
    pub atoms: Vec<Atom>,
    pub start: f64,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("domain", &self.domain)
            .field("atoms", &self.atoms)
            .field("start", &self.start)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn new(
        domain: Domain,
        sigma2: Fn1,
        mu: Fn1,
        mut atoms: Vec<Atom>,
        start: f64,
    ) -> Result<Self> {
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        for a in &atoms {
            if !(a.x > domain.left && a.x < domain.right) {
                return Err(StopError::InvalidInput(format!(
                    "atom at {} is not strictly inside the domain",
                    a.x
                )));
            }
            if !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(StopError::InvalidInput(format!(
                    "atom at {} has non-positive mass {}",
                    a.x, a.mass
                )));
            }
        }
        if atoms.windows(2).any(|w| w[0].x >= w[1].x) {
            return Err(StopError::InvalidInput(
                "atom locations must be distinct".into(),
            ));
        }
        let on_reflecting = (start == domain.left && domain.left_behavior == Boundary::Reflecting)
            || (start == domain.right && domain.right_behavior == Boundary::Reflecting);
        if !(start > domain.left && start < domain.right) && !on_reflecting {
            return Err(StopError::InvalidBoundary(format!(
                "start {start} must lie in the interior or at a reflecting endpoint"
            )));
        }
        let reflecting_elsewhere = (domain.left_behavior == Boundary::Reflecting
            && start != domain.left)
            || (domain.right_behavior == Boundary::Reflecting && start != domain.right);
        if reflecting_elsewhere {
            return Err(StopError::InvalidBoundary(
                "a diffusion with a reflecting endpoint must be started there".into(),
            ));
        }
        Ok(Self {
            domain,
            sigma2,
            mu,
            atoms,
            start,
        })
    }

    /// Geometric Brownian motion `dX = μX dt + σX dB` on `(0, ∞)`.
    pub fn gbm(sigma: f64, mu: f64, start: f64) -> Result<Self> {
        let s2 = sigma * sigma;
        Self::new(
            Domain::positive_half_line(),
            fn1(move |x| s2 * x * x),
            fn1(move |x| mu * x),
            vec![],
            start,
        )
    }

    /// Brownian motion `dX = μ dt + σ dB` on the real line.
    pub fn brownian(sigma: f64, mu: f64, start: f64) -> Result<Self> {
        let s2 = sigma * sigma;
        Self::new(
            Domain::real_line(),
            fn1(move |_| s2),
            fn1(move |_| mu),
            vec![],
            start,
        )
    }

    pub fn sigma2_at(&self, x: f64) -> f64 {
        (self.sigma2)(x)
    }

    pub fn mu_at(&self, x: f64) -> f64 {
        (self.mu)(x)
    }

    fn is_positive_domain(&self) -> bool {
        self.domain.left >= 0.0 && self.start > 0.0
    }

    /// Working interval: accessible endpoints are kept, inaccessible ones truncated.
    pub fn working_interval(&self, numerics: &Numerics) -> (f64, f64) {
        let d = &self.domain;
        let x0 = self.start;
        let lo = if d.left_behavior.is_accessible() {
            d.left
        } else if let Some(c) = numerics.left_cutoff {
            c
        } else if self.is_positive_domain() {
            d.left + (x0 - d.left) / numerics.positive_factor
        } else if x0 - numerics.additive_width > d.left {
            x0 - numerics.additive_width
        } else {
            d.left + (x0 - d.left) / numerics.positive_factor
        };
        let hi = if d.right_behavior.is_accessible() {
            d.right
        } else if let Some(c) = numerics.right_cutoff {
            c
        } else if self.is_positive_domain() && d.right.is_infinite() {
            x0 * numerics.positive_factor
        } else if x0 + numerics.additive_width < d.right {
            x0 + numerics.additive_width
        } else {
            d.right - (d.right - x0) / numerics.positive_factor
        };
        (lo, hi)
    }

    /// Default grid on the working interval with the start and all atoms as nodes.
    pub fn default_grid(&self, numerics: &Numerics) -> Vec<f64> {
        let (lo, hi) = self.working_interval(numerics);
        let n = numerics.grid_points;
        let mut g = if lo > 0.0 && hi / lo > 20.0 {
            grid::geometric(lo, hi, n)
        } else {
            grid::clustered(
                lo,
                hi,
                n,
                self.domain.left_behavior.is_accessible(),
                self.domain.right_behavior.is_accessible(),
            )
        };
        let mut pts = vec![self.start];
        pts.extend(self.atoms.iter().map(|a| a.x));
        grid::snap_nodes(&mut g, &pts);
        g
    }
}

/// Numerical settings shared by the eigenfunction and resolvent solvers.
#[derive(Debug, Clone)]
pub struct Numerics {
    pub grid_points: usize,
    pub left_cutoff: Option<f64>,
    pub right_cutoff: Option<f64>,
    /// Truncation factor for positive domains: `[X₀/f, f·X₀]`.
    pub positive_factor: f64,
    /// Half-width of the truncation window otherwise: `[X₀-w, X₀+w]`.
    pub additive_width: f64,
    pub ode: Tolerance,
    /// Relative agreement required between successive boundary shots.
    pub shoot_tol: f64,
    pub max_shots: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            grid_points: 4001,
            left_cutoff: None,
            right_cutoff: None,
            positive_factor: 50.0,
            additive_width: 25.0,
            ode: Tolerance::default(),
            shoot_tol: 1e-11,
            max_shots: 60,
        }
    }
}

/// Increasing and decreasing ρ-eigenfunctions normalised to one at the start point.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub phi_inc: GridFunction,
    pub phi_dec: GridFunction,
    pub rho: f64,
    /// `(φ'ϕ - ϕ'φ)/s'` at every node; constant up to discretisation error.
    pub wronskian: Vec<f64>,
    /// `M(x) = ∫_{X₀}^x 2μ/σ²`, so that `s'(x) = exp(-M(x))`; derivative stored alongside.
    pub log_scale_density: GridFunction,
    pub start: f64,
    pub(crate) start_index: usize,
}

impl EigenPair {
    pub fn grid(&self) -> &[f64] {
        &self.phi_inc.grid
    }

    /// Wronskian value at the start point.
    pub fn wronskian_value(&self) -> f64 {
        self.wronskian[self.start_index]
    }

    /// `max |W_i - W(X₀)| / |W(X₀)|` over the grid.
    pub fn wronskian_spread(&self) -> f64 {
        let w0 = self.wronskian_value();
        self.wronskian
            .iter()
            .map(|w| (w - w0).abs() / w0.abs())
            .fold(0.0, f64::max)
    }

    pub fn phi(&self, x: f64) -> Result<f64> {
        self.phi_inc.eval(x)
    }

    pub fn phi_dec_at(&self, x: f64) -> Result<f64> {
        self.phi_dec.eval(x)
    }

    /// Scale density `s'(x)`.
    pub fn scale_density(&self, x: f64) -> Result<f64> {
        Ok((-self.log_scale_density.eval(x)?).exp())
    }
}

/// Sweep direction along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Right,
    Left,
}

/// Scaled state recorded at a node: true values are `stored * exp(log_scale)`.
#[derive(Debug, Clone, Copy)]
struct NodeRecord {
    log_scale: f64,
    f: f64,
    d_left: f64,
    d_right: f64,
    m: f64,
    acc: f64,
}

struct Sweep<'a> {
    spec: &'a DiffusionSpec,
    rho: f64,
    tol: Tolerance,
}

impl<'a> Sweep<'a> {
    fn rhs<'b>(
        &'b self,
        c: Option<&'b (dyn Fn(f64) -> f64 + Sync)>,
    ) -> impl Fn(f64, &[f64; 4]) -> [f64; 4] + 'b {
        let spec = self.spec;
        let rho = self.rho;
        move |x: f64, y: &[f64; 4]| {
            let s2 = spec.sigma2_at(x);
            let mu = spec.mu_at(x);
            let s2 = if s2 > 0.0 { s2 } else { f64::NAN };
            let fpp = 2.0 / s2 * (rho * y[0] - mu * y[1]);
            let dm = 2.0 * mu / s2;
            let da = match c {
                Some(c) => y[0] * c(x) * y[2].exp() / s2,
                None => 0.0,
            };
            [y[1], fpp, dm, da]
        }
    }

    fn advance(
        &self,
        rhs: &dyn Fn(f64, &[f64; 4]) -> [f64; 4],
        dir: Dir,
        from: f64,
        state: [f64; 4],
        to: f64,
        h: &mut f64,
    ) -> Result<[f64; 4]> {
        // the orientation of A: for leftward sweeps integrate -dA so it grows
        if dir == Dir::Right {
            ode::integrate(rhs, from, state, to, &self.tol, h)
        } else {
            let flipped = |x: f64, y: &[f64; 4]| {
                let mut d = rhs(x, y);
                d[3] = -d[3];
                d
            };
            ode::integrate(&flipped, from, state, to, &self.tol, h)
        }
    }

    /// Leading-order step from `from` to `to` across a short interval with `σ² = 0` at the
    /// endpoint `sing`.
    #[allow(clippy::too_many_arguments)]
    fn degenerate_step(
        &self,
        from: f64,
        to: f64,
        sing: f64,
        dir: Dir,
        state: [f64; 4],
        c: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    ) -> [f64; 4] {
        let other = if sing == from { to } else { from };
        let sign = if sing == from { 1.0 } else { -1.0 };
        let (nodes, weights) = grid::gauss_legendre(12);
        let panels = 8;
        let w = 1.0 / panels as f64;
        let [f0, d0, m0, acc0] = state;
        let (mut i1, mut i2, mut im, mut ia) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..panels {
            let mid = (j as f64 + 0.5) * w;
            for (z, q) in nodes.iter().zip(&weights) {
                // y = s + (o - s)t² makes square-root singularities at s smooth
                let t = mid + 0.5 * w * z;
                let y = sing + (other - sing) * t * t;
                let jac = sign * 0.5 * w * q * 2.0 * (other - sing) * t;
                let s2 = self.spec.sigma2_at(y);
                i1 += jac / s2;
                i2 += jac * (to - y) / s2;
                im += jac * 2.0 * self.spec.mu_at(y) / s2;
                if let Some(c) = c {
                    ia += jac * c(y) / s2;
                }
            }
        }
        let f1 = f0 + (to - from) * d0 + 2.0 * self.rho * f0 * i2;
        let d1 = d0 + 2.0 * self.rho * f0 * i1;
        let da = f0 * m0.exp() * ia;
        let a1 = if dir == Dir::Right {
            acc0 + da
        } else {
            acc0 - da
        };
        [f1, d1, m0 + im, a1]
    }

    /// Integrates `[f, f', M, A]` across the nodes in the given direction.
    ///
    /// `A` accumulates `∫ f c e^M / σ²` (plus atom terms), oriented so that it is increasing
    /// in the sweep direction for positive integrands.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        nodes: &[f64],
        dir: Dir,
        f0: f64,
        d0: f64,
        m0: f64,
        acc0: f64,
        c: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    ) -> Result<Vec<NodeRecord>> {
        let n = nodes.len();
        let order: Vec<usize> = match dir {
            Dir::Right => (0..n).collect(),
            Dir::Left => (0..n).rev().collect(),
        };
        let rhs = self.rhs(c);
        let mut out = vec![
            NodeRecord {
                log_scale: 0.0,
                f: 0.0,
                d_left: 0.0,
                d_right: 0.0,
                m: 0.0,
                acc: 0.0
            };
            n
        ];
        let mut log_scale = 0.0;
        let mut state = [f0, d0, m0, acc0];
        let mut h = (nodes[1] - nodes[0]).abs();
        for (step, &i) in order.iter().enumerate() {
            if step > 0 {
                let prev = nodes[order[step - 1]];
                let x = nodes[i];
                // a short expansion covers ends where σ² vanishes
                let near = |a: f64, b: f64| a + 1e-4 * (b - a);
                if step == 1 && !(self.spec.sigma2_at(prev) > 0.0) {
                    let x1 = near(prev, x);
                    state = self.degenerate_step(prev, x1, prev, dir, state, c);
                    h = (x - x1).abs();
                    state = self.advance(&rhs, dir, x1, state, x, &mut h)?;
                } else if step == n - 1 && !(self.spec.sigma2_at(x) > 0.0) {
                    let x1 = near(x, prev);
                    state = self.advance(&rhs, dir, prev, state, x1, &mut h)?;
                    state = self.degenerate_step(x1, x, x, dir, state, c);
                } else {
                    state = self.advance(&rhs, dir, prev, state, x, &mut h)?;
                }
            }
            let x = nodes[i];
            let atom = self
                .spec
                .atoms
                .iter()
                .find(|a| (a.x - x).abs() <= 1e-12 * (1.0 + x.abs()));
            let arrival = state[1];
            let mut rec = NodeRecord {
                log_scale,
                f: state[0],
                d_left: arrival,
                d_right: arrival,
                m: state[2],
                acc: state[3],
            };
            if let Some(a) = atom {
                let jump = 2.0 * self.rho * state[0] * a.mass;
                let atom_acc = c
                    .map(|c| state[0] * c(x) * a.mass * state[2].exp())
                    .unwrap_or(0.0);
                match dir {
                    Dir::Right => {
                        state[1] = arrival + jump;
                        rec.d_right = state[1];
                        state[3] += atom_acc;
                        rec.acc = state[3];
                    }
                    Dir::Left => {
                        state[1] = arrival - jump;
                        rec.d_left = state[1];
                        // recorded before the atom: the right-sweep accumulator owns it
                        state[3] += atom_acc;
                    }
                }
            }
            out[i] = rec;
            let s = state[0].abs() + state[1].abs();
            if !(s.is_finite()) || s == 0.0 {
                return Err(StopError::NonConvergent(format!(
                    "eigenfunction sweep degenerated at x = {x}"
                )));
            }
            state[0] /= s;
            state[1] /= s;
            state[3] /= s;
            log_scale += s.ln();
        }
        Ok(out)
    }

    /// Riccati shot `w = f'/f` (with tail accumulator) from `from` to `to`.
    fn riccati(
        &self,
        from: f64,
        to: f64,
        w0: f64,
        c: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    ) -> Result<(f64, f64)> {
        let spec = self.spec;
        let rho = self.rho;
        let sign = if to > from { 1.0 } else { -1.0 };
        let rhs = move |x: f64, y: &[f64; 2]| {
            let s2 = spec.sigma2_at(x);
            let mu = spec.mu_at(x);
            let s2 = if s2 > 0.0 { s2 } else { f64::NAN };
            let w = y[0];
            let dw = 2.0 / s2 * (rho - mu * w) - w * w;
            let dm = 2.0 * mu / s2;
            let cv = c.map(|c| c(x)).unwrap_or(0.0);
            // D(y) = ∫ (f(z)/f(y)) c(z) e^{M(z)-M(y)} / σ²(z) dz over the part already swept
            let dd = sign * cv / s2 - (w + dm) * y[1];
            [dw, dd]
        };
        let mut h = (to - from).abs() * 1e-3;
        let tol = Tolerance {
            max_steps: self.tol.max_steps * 4,
            ..self.tol
        };
        let y = ode::integrate(&rhs, from, [w0, 0.0], to, &tol, &mut h)?;
        Ok((y[0], y[1]))
    }

    /// Limit of shots from increasingly remote starts toward an inaccessible end.
    fn shoot(
        &self,
        end: f64,
        at: f64,
        positive: bool,
        max_shots: usize,
        shoot_tol: f64,
        c: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    ) -> Result<(f64, f64)> {
        let toward_left = end < at;
        let spread = (at - self.spec.start).abs().max(1.0);
        let start_k = |k: usize| -> f64 {
            let f = 2f64.powi(k as i32);
            if end.is_finite() {
                end + (at - end) / f
            } else if positive && !toward_left {
                at * f
            } else if toward_left {
                at - spread * (f - 1.0)
            } else {
                at + spread * (f - 1.0)
            }
        };
        let frozen_root = |x: f64| -> f64 {
            let s2 = self.spec.sigma2_at(x);
            let mu = self.spec.mu_at(x);
            if !(s2 > 0.0) {
                return 0.0;
            }
            let disc = (mu * mu + 2.0 * self.rho * s2).sqrt();
            if toward_left {
                (-mu + disc) / s2
            } else {
                (-mu - disc) / s2
            }
        };
        let mut ws: Vec<f64> = Vec::new();
        let mut ds: Vec<f64> = Vec::new();
        let mut estimates: Vec<f64> = Vec::new();
        let mut ratios: Vec<f64> = Vec::new();
        for k in 1..=max_shots {
            let s = start_k(k);
            if !s.is_finite() || s == at {
                break;
            }
            let (w, d) = self.riccati(s, at, frozen_root(s), c)?;
            if !w.is_finite() || !d.is_finite() {
                return Err(StopError::NonConvergent(format!(
                    "boundary shot from {s} produced a non-finite state"
                )));
            }
            ws.push(w);
            ds.push(d);
            let n = ds.len();
            if n < 2 {
                continue;
            }
            let w_ok = (w - ws[n - 2]).abs() <= shoot_tol * (w.abs() + 1.0 / spread);
            if c.is_none() {
                if w_ok {
                    return Ok((w, 0.0));
                }
                continue;
            }
            // tails often converge only geometrically in the cutoff doubling; accelerate with Aitken
            let step = d - ds[n - 2];
            if step == 0.0 {
                if w_ok {
                    return Ok((w, d));
                }
                continue;
            }
            if n < 3 {
                continue;
            }
            let prev_step = ds[n - 2] - ds[n - 3];
            let r = if prev_step != 0.0 {
                step / prev_step
            } else {
                0.0
            };
            ratios.push(r);
            let est = if (0.0..0.97).contains(&r) {
                d + step * r / (1.0 - r)
            } else {
                d
            };
            estimates.push(est);
            let m = estimates.len();
            if m >= 2 && w_ok {
                let tol = shoot_tol * (est.abs() + 1e-300);
                if (est - estimates[m - 2]).abs() <= tol && (r.abs() < 0.97) {
                    return Ok((w, est));
                }
            }
            let m = ratios.len();
            if m >= 6 && ratios[m - 5..].iter().all(|&r| r >= 0.97) {
                return Err(StopError::DivergentIntegral(format!(
                    "resolvent tail toward {end} keeps growing under cutoff doubling"
                )));
            }
        }
        let m = ratios.len();
        if c.is_some() && m >= 3 && ratios[m - 3..].iter().all(|&r| r >= 0.9) {
            return Err(StopError::DivergentIntegral(format!(
                "resolvent tail toward {end} keeps growing under cutoff doubling"
            )));
        }
        Err(StopError::NonConvergent(format!(
            "minimal-growth shot toward {end} did not settle"
        )))
    }
}

fn check_coefficients(spec: &DiffusionSpec, grid: &[f64]) -> Result<()> {
    for w in grid.windows(2) {
        for x in [w[0], 0.5 * (w[0] + w[1])] {
            let s2 = spec.sigma2_at(x);
            let interior_ok = s2 > 0.0 && s2.is_finite();
            let boundary = x == spec.domain.left || x == spec.domain.right;
            if !interior_ok && !boundary {
                return Err(StopError::DegenerateCoefficient { x, sigma2: s2 });
            }
            if !spec.mu_at(x).is_finite() && !boundary {
                return Err(StopError::DegenerateCoefficient { x, sigma2: s2 });
            }
        }
    }
    Ok(())
}

fn prepare_grid(spec: &DiffusionSpec, grid: &[f64]) -> Result<(Vec<f64>, usize)> {
    grid::check_grid(grid)?;
    let mut g = grid.to_vec();
    let (lo, hi) = (g[0], g[g.len() - 1]);
    if lo < spec.domain.left || hi > spec.domain.right {
        return Err(StopError::InvalidInput(format!(
            "grid [{lo}, {hi}] leaves the domain"
        )));
    }
    if !(spec.start >= lo && spec.start <= hi) {
        return Err(StopError::InvalidInput(format!(
            "grid [{lo}, {hi}] does not cover the start {}",
            spec.start
        )));
    }
    if let Some(a) = spec.atoms.iter().find(|a| !(a.x > lo && a.x < hi)) {
        return Err(StopError::InvalidInput(format!(
            "grid [{lo}, {hi}] does not span the atom at {}",
            a.x
        )));
    }
    let mut pts = vec![spec.start];
    pts.extend(spec.atoms.iter().map(|a| a.x));
    grid::snap_nodes(&mut g, &pts);
    for p in &pts {
        if !g.iter().any(|x| x == p) {
            return Err(StopError::InvalidInput(format!(
                "could not place a grid node at {p}; refine the grid"
            )));
        }
    }
    let start_index = g.iter().position(|&x| x == spec.start).expect("start node");
    Ok((g, start_index))
}

/// Boundary data for the increasing solution at the left end of the grid.
fn left_start(
    sweep: &Sweep,
    lo: f64,
    numerics: &Numerics,
    c: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<((f64, f64), f64)> {
    let spec = sweep.spec;
    let d = &spec.domain;
    if lo == d.left {
        return match d.left_behavior {
            Boundary::Killing | Boundary::Absorbing => Ok(((0.0, 1.0), 0.0)),
            Boundary::Reflecting => Ok(((1.0, 0.0), 0.0)),
            Boundary::Inaccessible => Err(StopError::InvalidBoundary(
                "the grid may not reach an inaccessible endpoint".into(),
            )),
        };
    }
    if d.left_behavior.is_accessible() {
        return Err(StopError::InvalidBoundary(
            "the grid must start at an accessible left endpoint".into(),
        ));
    }
    let (w, tail) = sweep.shoot(
        d.left,
        lo,
        spec.is_positive_domain(),
        numerics.max_shots,
        numerics.shoot_tol,
        c,
    )?;
    Ok(((1.0, w), tail))
}

fn right_start(
    sweep: &Sweep,
    hi: f64,
    numerics: &Numerics,
    c: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<((f64, f64), f64)> {
    let spec = sweep.spec;
    let d = &spec.domain;
    if hi == d.right {
        return match d.right_behavior {
            Boundary::Killing | Boundary::Absorbing => Ok(((0.0, -1.0), 0.0)),
            Boundary::Reflecting => Ok(((1.0, 0.0), 0.0)),
            Boundary::Inaccessible => Err(StopError::InvalidBoundary(
                "the grid may not reach an inaccessible endpoint".into(),
            )),
        };
    }
    if d.right_behavior.is_accessible() {
        return Err(StopError::InvalidBoundary(
            "the grid must end at an accessible right endpoint".into(),
        ));
    }
    let (w, tail) = sweep.shoot(
        d.right,
        hi,
        spec.is_positive_domain(),
        numerics.max_shots,
        numerics.shoot_tol,
        c,
    )?;
    Ok(((1.0, w), tail))
}

pub fn solve_eigenfunctions(spec: &DiffusionSpec, rho: f64, grid: &[f64]) -> Result<EigenPair> {
    solve_eigenfunctions_with(spec, rho, grid, &Numerics::default())
}

pub fn solve_eigenfunctions_with(
    spec: &DiffusionSpec,
    rho: f64,
    grid: &[f64],
    numerics: &Numerics,
) -> Result<EigenPair> {
    if !(rho > 0.0) {
        return Err(StopError::InvalidInput(format!(
            "discount rate must be positive, got {rho}"
        )));
    }
    let (g, k0) = prepare_grid(spec, grid)?;
    check_coefficients(spec, &g)?;
    let sweep = Sweep {
        spec,
        rho,
        tol: numerics.ode,
    };
    let n = g.len();
    let ((fl, dl), _) = left_start(&sweep, g[0], numerics, None)?;
    let ((fr, dr), _) = right_start(&sweep, g[n - 1], numerics, None)?;
    let inc = sweep.run(&g, Dir::Right, fl, dl, 0.0, 0.0, None)?;
    let m_shift = inc[k0].m;
    let dec = sweep.run(&g, Dir::Left, fr, dr, 0.0, 0.0, None)?;

    let normalise = |recs: &[NodeRecord]| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let r0 = recs[k0];
        let mut v = Vec::with_capacity(n);
        let mut dlv = Vec::with_capacity(n);
        let mut drv = Vec::with_capacity(n);
        for r in recs {
            let factor = (r.log_scale - r0.log_scale).exp() / r0.f;
            v.push(r.f * factor);
            dlv.push(r.d_left * factor);
            drv.push(r.d_right * factor);
        }
        if v.iter().chain(&dlv).chain(&drv).any(|x| !x.is_finite()) {
            return Err(StopError::NonConvergent(
                "eigenfunction overflowed on the working interval; shrink the truncation".into(),
            ));
        }
        Ok((v, dlv, drv))
    };
    let (pv, pl, pr) = normalise(&inc)?;
    let (qv, ql, qr) = normalise(&dec)?;
    let m: Vec<f64> = inc.iter().map(|r| r.m - m_shift).collect();
    let dm: Vec<f64> = g
        .iter()
        .map(|&x| {
            let s2 = spec.sigma2_at(x);
            if s2 > 0.0 {
                2.0 * spec.mu_at(x) / s2
            } else {
                0.0
            }
        })
        .collect();
    let wronskian: Vec<f64> = (0..n)
        .map(|i| (pr[i] * qv[i] - qr[i] * pv[i]) * m[i].exp())
        .collect();
    Ok(EigenPair {
        phi_inc: GridFunction::with_derivatives(g.clone(), pv, pl, pr)?,
        phi_dec: GridFunction::with_derivatives(g.clone(), qv, ql, qr)?,
        rho,
        wronskian,
        log_scale_density: GridFunction::with_derivatives(g, m, dm.clone(), dm)?,
        start: spec.start,
        start_index: k0,
    })
}

/// `E_x[exp(-ρ H_y)]`.
pub fn hitting_laplace(pair: &EigenPair, x: f64, y: f64) -> Result<f64> {
    if x <= y {
        Ok(pair.phi_inc.eval(x)? / pair.phi_inc.eval(y)?)
    } else {
        Ok(pair.phi_dec.eval(x)? / pair.phi_dec.eval(y)?)
    }
}

/// Expected discounted running reward `R(x) = E_x ∫₀^∞ e^{-ρt} c(X_t) dt` on the pair's grid,
/// with one-sided derivatives.
pub fn solve_resolvent(
    spec: &DiffusionSpec,
    pair: &EigenPair,
    c: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<GridFunction> {
    solve_resolvent_with(spec, pair, c, &Numerics::default())
}

pub fn solve_resolvent_with(
    spec: &DiffusionSpec,
    pair: &EigenPair,
    c: &(dyn Fn(f64) -> f64 + Sync),
    numerics: &Numerics,
) -> Result<GridFunction> {
    let g = pair.grid().to_vec();
    let n = g.len();
    let k0 = pair.start_index;
    let sweep = Sweep {
        spec,
        rho: pair.rho,
        tol: numerics.ode,
    };
    let m = &pair.log_scale_density.values;
    let (_, tail_l) = left_start(&sweep, g[0], numerics, Some(c))?;
    let (_, tail_r) = right_start(&sweep, g[n - 1], numerics, Some(c))?;
    // restart from the pair's own boundary states so both passes share its normalisation
    let p = &pair.phi_inc;
    let q = &pair.phi_dec;
    let pr0 = p.right_deriv.as_ref().unwrap()[0];
    let ql_n = q.left_deriv.as_ref().unwrap()[n - 1];
    // tails are relative to f at the truncation point and to e^{M} there
    let a0 = p.values[0] * tail_l * m[0].exp();
    let b0 = q.values[n - 1] * tail_r * m[n - 1].exp();
    let inc = sweep.run(&g, Dir::Right, p.values[0], pr0, m[0], a0, Some(c))?;
    let dec = sweep.run(&g, Dir::Left, q.values[n - 1], ql_n, m[n - 1], b0, Some(c))?;

    let unscale = |recs: &[NodeRecord], i: usize| -> f64 {
        // the sweep started from the normalised boundary state, so only the log scale matters
        recs[i].acc * recs[i].log_scale.exp()
    };
    let w = pair.wronskian_value();
    let pl = p.left_deriv.as_ref().unwrap();
    let prd = p.right_deriv.as_ref().unwrap();
    let ql = q.left_deriv.as_ref().unwrap();
    let qrd = q.right_deriv.as_ref().unwrap();
    let mut values = Vec::with_capacity(n);
    let mut dleft = Vec::with_capacity(n);
    let mut dright = Vec::with_capacity(n);
    for i in 0..n {
        let a = unscale(&inc, i);
        let b = unscale(&dec, i);
        let x = g[i];
        let atom_term = spec
            .atoms
            .iter()
            .find(|at| at.x == x)
            .map(|at| p.values[i] * c(x) * at.mass * m[i].exp())
            .unwrap_or(0.0);
        // a includes the atom at x; b excludes it
        values.push(2.0 / w * (q.values[i] * a + p.values[i] * b));
        dleft.push(
            2.0 / w
                * (ql[i] * (a - atom_term)
                    + pl[i] * (b + atom_term * q.values[i] / p.values[i].max(f64::MIN_POSITIVE))),
        );
        dright.push(2.0 / w * (qrd[i] * a + prd[i] * b));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StopError::DivergentIntegral(
            "resolvent is not finite on the working grid".into(),
        ));
    }
    let _ = k0;
    GridFunction::with_derivatives(g, values, dleft, dright)
}

/// Relative change of `φ` and `ϕ` at `X₀ ± 1` when the truncation is pushed twice as far.
pub fn truncation_check(spec: &DiffusionSpec, rho: f64, numerics: &Numerics) -> Result<f64> {
    let base = solve_eigenfunctions_with(spec, rho, &spec.default_grid(numerics), numerics)?;
    let mut wide = numerics.clone();
    wide.positive_factor *= 2.0;
    wide.additive_width *= 2.0;
    wide.left_cutoff = None;
    wide.right_cutoff = None;
    wide.grid_points = numerics.grid_points * 2;
    let doubled = solve_eigenfunctions_with(spec, rho, &spec.default_grid(&wide), &wide)?;
    let mut worst: f64 = 0.0;
    for x in [spec.start - 1.0, spec.start + 1.0] {
        if !(base.phi_inc.contains(x) && doubled.phi_inc.contains(x)) {
            continue;
        }
        for (a, b) in [
            (base.phi(x)?, doubled.phi(x)?),
            (base.phi_dec_at(x)?, doubled.phi_dec_at(x)?),
        ] {
            if a.abs() > 0.0 {
                worst = worst.max((a - b).abs() / a.abs());
            }
        }
    }
    Ok(worst)
}

/// ODE residual `|½σ²f'' + μf' - ρf + c| / (ρ|f| + |c| + |μ f'|)` at interior non-atom nodes,
/// with `f''` from a five-point differentiation of the stored derivative.
pub fn ode_residual(
    spec: &DiffusionSpec,
    rho: f64,
    f: &GridFunction,
    c: Option<&dyn Fn(f64) -> f64>,
) -> f64 {
    let g = &f.grid;
    let d = f.right_deriv.as_ref().expect("derivatives required");
    let mut worst: f64 = 0.0;
    for i in 2..g.len().saturating_sub(2) {
        let window = &g[i - 2..=i + 2];
        if spec
            .atoms
            .iter()
            .any(|a| a.x >= window[0] && a.x <= window[4])
        {
            continue;
        }
        let fpp = lagrange_derivative(window, &d[i - 2..=i + 2], g[i]);
        let x = g[i];
        let cv = c.map(|c| c(x)).unwrap_or(0.0);
        let lhs = 0.5 * spec.sigma2_at(x) * fpp + spec.mu_at(x) * d[i] - rho * f.values[i] + cv;
        let scale = rho * f.values[i].abs() + cv.abs() + (spec.mu_at(x) * d[i]).abs() + 1e-300;
        worst = worst.max(lhs.abs() / scale);
    }
    worst
}

/// Derivative at `x` of the interpolating polynomial through `(xs, ys)`.
pub(crate) fn lagrange_derivative(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut denom = 1.0;
        for m in 0..n {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        let mut num = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            let mut prod = 1.0;
            for (m, &xm) in xs.iter().enumerate().take(n) {
                if m != j && m != k {
                    prod *= x - xm;
                }
            }
            num += prod;
        }
        total += ys[j] * num / denom;
    }
    total
}

/// Convenience: eigenfunctions on the default grid.
pub fn default_pair(spec: &DiffusionSpec, rho: f64, numerics: &Numerics) -> Result<EigenPair> {
    solve_eigenfunctions_with(spec, rho, &spec.default_grid(numerics), numerics)
}

/// Derivative of `f` at node `x` from the requested side.
pub fn node_derivative(f: &GridFunction, x: f64, side: Side) -> Result<f64> {
    f.eval_deriv(x, side)
}
