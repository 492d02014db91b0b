//! Parametrised forward stopping problems: threshold sets, strategy classification, value
//! curves and their one-sided θ-derivatives.

use std::fmt;

use rayon::prelude::*;

use crate::diffusion::{self, Boundary, DiffusionSpec, EigenPair, Fn1, Fn2, Numerics};
use crate::error::{Result, StopError};
use crate::grid::{golden_max, GridFunction};

/// Running reward `c(x, θ)`.
#[derive(Clone)]
pub enum Running {
    None,
    /// Independent of θ.
    Fixed(Fn1),
    /// θ-dependent, with its analytic θ-partial.
    Parametric {
        c: Fn2,
        c_theta: Fn2,
    },
}

impl Running {
    pub fn depends_on_theta(&self) -> bool {
        matches!(self, Running::Parametric { .. })
    }
}

/// Terminal reward `G(x, θ)`, its θ-partial and the running reward, over `Θ = [theta_lo, theta_hi]`.
#[derive(Clone)]
pub struct RewardFamily {
    pub g: Fn2,
    pub g_theta: Fn2,
    pub running: Running,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl fmt::Debug for RewardFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardFamily")
            .field("theta_lo", &self.theta_lo)
            .field("theta_hi", &self.theta_hi)
            .field("running_depends_on_theta", &self.running.depends_on_theta())
            .finish_non_exhaustive()
    }
}

impl RewardFamily {
    pub fn new(g: Fn2, g_theta: Fn2, theta_lo: f64, theta_hi: f64) -> Self {
        Self {
            g,
            g_theta,
            running: Running::None,
            theta_lo,
            theta_hi,
        }
    }

    pub fn with_running(mut self, c: Fn1) -> Self {
        self.running = Running::Fixed(c);
        self
    }

    pub fn with_parametric_running(mut self, c: Fn2, c_theta: Fn2) -> Self {
        self.running = Running::Parametric { c, c_theta };
        self
    }

    /// Largest relative gap between `G_θ` and a central difference of `G` over the samples.
    pub fn g_theta_mismatch(&self, xs: &[f64], thetas: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in xs {
            for &t in thetas {
                let h = 1e-5 * (1.0 + t.abs());
                let fd = ((self.g)(x, t + h) - (self.g)(x, t - h)) / (2.0 * h);
                let an = (self.g_theta)(x, t);
                worst = worst.max((fd - an).abs() / (1.0 + an.abs()));
            }
        }
        worst
    }

    /// Uniform θ-grid on Θ, clipped to `[-clip, clip]` when Θ is unbounded.
    pub fn theta_grid(&self, n: usize, clip: f64) -> Vec<f64> {
        let lo = self.theta_lo.max(-clip);
        let hi = self.theta_hi.min(clip);
        crate::grid::uniform(lo, hi, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    StopNow,
    UpperThreshold,
    LowerThreshold,
    WaitForever,
    NoThreshold,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::StopNow => "stop_now",
            Self::UpperThreshold => "upper_threshold",
            Self::LowerThreshold => "lower_threshold",
            Self::WaitForever => "wait_forever",
            Self::NoThreshold => "no_threshold",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `U(·, θ) = G(·, θ) - R(·, θ)` for a single θ.
#[derive(Clone)]
pub struct EarlyReward {
    pub theta: f64,
    g: Fn2,
    resolvent: Option<GridFunction>,
    /// `U` at the grid nodes.
    pub values: Vec<f64>,
}

impl EarlyReward {
    pub fn eval(&self, x: f64) -> Result<f64> {
        let r = match &self.resolvent {
            Some(r) => r.eval(x)?,
            None => 0.0,
        };
        Ok((self.g)(x, self.theta) - r)
    }

    /// `u = log U`, defined on `{U > 0}`.
    pub fn log_eval(&self, x: f64) -> Result<Option<f64>> {
        let v = self.eval(x)?;
        Ok((v > 0.0).then(|| v.ln()))
    }

    pub fn resolvent(&self) -> Option<&GridFunction> {
        self.resolvent.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub theta: f64,
    /// Global maximisers of `U/φ`.
    pub upper_set: Vec<f64>,
    /// Global maximisers of `U/ϕ`.
    pub lower_set: Vec<f64>,
    pub classification: Classification,
    /// Optimal thresholds `X*(θ)`; empty when no threshold rule is optimal.
    pub thresholds: Vec<f64>,
    pub early_value: f64,
    pub value: f64,
    pub resolvent_at_start: f64,
    /// An optimal threshold sits on an accessible endpoint.
    pub boundary_argmax: bool,
}

impl ThresholdReport {
    /// Smallest optimal threshold.
    pub fn selection(&self) -> Option<f64> {
        self.thresholds.first().copied()
    }
}

/// Maximisers of an objective on a node range.
#[derive(Debug, Clone)]
pub struct ArgmaxSet {
    pub points: Vec<f64>,
    pub best: f64,
    /// Supremum approached at a truncated end rather than attained.
    pub escaped: bool,
}

const CANDIDATE_BAND: f64 = 1e-4;

/// Grid search plus golden-section polish of every near-maximal local peak.
///
/// Nodes whose objective is NaN are skipped. `escape_left`/`escape_right` mark truncated
/// ends where a still-increasing objective signals an unattained supremum.
pub fn refine_argmax(
    grid: &[f64],
    nodes: &[f64],
    objective: &dyn Fn(f64) -> f64,
    range: (usize, usize),
    escape_left: bool,
    escape_right: bool,
    tol: f64,
) -> Option<ArgmaxSet> {
    let (lo, hi) = range;
    let idx: Vec<usize> = (lo..=hi).filter(|&i| nodes[i].is_finite()).collect();
    let &first = idx.first()?;
    let &last = idx.last()?;
    let (mut imax, mut vmax) = (first, nodes[first]);
    for &i in &idx {
        if nodes[i] > vmax {
            imax = i;
            vmax = nodes[i];
        }
    }
    let near_left =
        escape_left && imax <= first + 2 && nodes[first] >= nodes[(first + 1).min(last)];
    let near_right =
        escape_right && imax + 2 >= last && nodes[last] >= nodes[last.saturating_sub(1).max(first)];
    if near_left || near_right {
        return Some(ArgmaxSet {
            points: vec![],
            best: vmax,
            escaped: true,
        });
    }
    let band = CANDIDATE_BAND * (1.0 + vmax.abs());
    let mut refined: Vec<(f64, f64)> = Vec::new();
    for (k, &i) in idx.iter().enumerate() {
        let v = nodes[i];
        if v < vmax - band {
            continue;
        }
        let left = if k > 0 { Some(idx[k - 1]) } else { None };
        let right = idx.get(k + 1).copied();
        let peak = left.is_none_or(|j| v >= nodes[j]) && right.is_none_or(|j| v >= nodes[j]);
        if !peak {
            continue;
        }
        let a = grid[left.unwrap_or(i)];
        let b = grid[right.unwrap_or(i)];
        let (x, fx) = if a < b {
            golden_max(
                |x| {
                    let y = objective(x);
                    if y.is_finite() {
                        y
                    } else {
                        f64::NEG_INFINITY
                    }
                },
                a,
                b,
                200,
            )
        } else {
            (grid[i], v)
        };
        let (x, fx) = if fx >= v { (x, fx) } else { (grid[i], v) };
        refined.push((x, fx));
    }
    let best = refined
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = best - tol * (1.0 + best.abs());
    let mut points: Vec<f64> = refined.iter().filter(|p| p.1 >= cut).map(|p| p.0).collect();
    points.sort_by(f64::total_cmp);
    // neighbouring nodes on one plateau polish to the same point
    let mut merged: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        let cell = cell_width(grid, p);
        if merged.last().is_none_or(|&q| p - q > cell) {
            merged.push(p);
        }
    }
    Some(ArgmaxSet {
        points: merged,
        best,
        escaped: false,
    })
}

fn cell_width(grid: &[f64], x: f64) -> f64 {
    let i = grid.partition_point(|&g| g < x).clamp(1, grid.len() - 1);
    grid[i] - grid[i - 1]
}

/// Value at `f0` of the least concave majorant of the points `(fs[i], ws[i])` (`fs` increasing).
pub fn concave_majorant_at(fs: &[f64], ws: &[f64], f0: f64) -> f64 {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(fs.len());
    for (&f, &w) in fs.iter().zip(ws) {
        while hull.len() >= 2 {
            let (f1, w1) = hull[hull.len() - 2];
            let (f2, w2) = hull[hull.len() - 1];
            // drop the middle point when it lies on or below the chord
            if (w2 - w1) * (f - f1) <= (w - w1) * (f2 - f1) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((f, w));
    }
    let k = hull.partition_point(|p| p.0 < f0);
    if k < hull.len() && hull[k].0 == f0 {
        return hull[k].1;
    }
    if k == 0 || k == hull.len() {
        return f64::NEG_INFINITY;
    }
    let (f1, w1) = hull[k - 1];
    let (f2, w2) = hull[k];
    w1 + (w2 - w1) * (f0 - f1) / (f2 - f1)
}

/// A forward problem: diffusion, discount rate and reward family with its eigenfunctions.
#[derive(Clone)]
pub struct ForwardProblem {
    pub spec: DiffusionSpec,
    pub rho: f64,
    pub reward: RewardFamily,
    pub numerics: Numerics,
    pub pair: EigenPair,
    /// Relative tolerance for ties among maximisers.
    pub tie_tol: f64,
    fixed_resolvent: Option<GridFunction>,
}

impl fmt::Debug for ForwardProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardProblem")
            .field("spec", &self.spec)
            .field("rho", &self.rho)
            .field("reward", &self.reward)
            .finish_non_exhaustive()
    }
}

impl ForwardProblem {
    pub fn new(
        spec: DiffusionSpec,
        rho: f64,
        reward: RewardFamily,
        numerics: Numerics,
    ) -> Result<Self> {
        let pair = diffusion::default_pair(&spec, rho, &numerics)?;
        Self::with_pair(spec, reward, numerics, pair)
    }

    pub fn with_pair(
        spec: DiffusionSpec,
        reward: RewardFamily,
        numerics: Numerics,
        pair: EigenPair,
    ) -> Result<Self> {
        let fixed_resolvent = match &reward.running {
            Running::Fixed(c) => {
                let c = c.clone();
                Some(diffusion::solve_resolvent_with(
                    &spec,
                    &pair,
                    &move |x| c(x),
                    &numerics,
                )?)
            }
            _ => None,
        };
        Ok(Self {
            rho: pair.rho,
            spec,
            reward,
            numerics,
            pair,
            tie_tol: 1e-9,
            fixed_resolvent,
        })
    }

    pub fn grid(&self) -> &[f64] {
        self.pair.grid()
    }

    pub fn early_reward(&self, theta: f64) -> Result<EarlyReward> {
        let resolvent = match &self.reward.running {
            Running::None => None,
            Running::Fixed(_) => self.fixed_resolvent.clone(),
            Running::Parametric { c, .. } => {
                let c = c.clone();
                Some(diffusion::solve_resolvent_with(
                    &self.spec,
                    &self.pair,
                    &move |x| c(x, theta),
                    &self.numerics,
                )?)
            }
        };
        let g = self.reward.g.clone();
        let values = self
            .grid()
            .iter()
            .enumerate()
            .map(|(i, &x)| g(x, theta) - resolvent.as_ref().map_or(0.0, |r| r.values[i]))
            .collect();
        Ok(EarlyReward {
            theta,
            g,
            resolvent,
            values,
        })
    }

    /// `U_θ = G_θ - R_{c_θ}` at the grid nodes and as an evaluator.
    fn early_reward_theta(&self, theta: f64) -> Result<EarlyReward> {
        let resolvent = match &self.reward.running {
            Running::Parametric { c_theta, .. } => {
                let ct = c_theta.clone();
                Some(diffusion::solve_resolvent_with(
                    &self.spec,
                    &self.pair,
                    &move |x| ct(x, theta),
                    &self.numerics,
                )?)
            }
            _ => None,
        };
        let g = self.reward.g_theta.clone();
        let values = self
            .grid()
            .iter()
            .enumerate()
            .map(|(i, &x)| g(x, theta) - resolvent.as_ref().map_or(0.0, |r| r.values[i]))
            .collect();
        Ok(EarlyReward {
            theta,
            g,
            resolvent,
            values,
        })
    }

    fn truncated_left(&self) -> bool {
        !self.spec.domain.left_behavior.is_accessible()
    }

    fn truncated_right(&self) -> bool {
        !self.spec.domain.right_behavior.is_accessible()
    }

    fn killed_left(&self) -> bool {
        self.spec.domain.left_behavior == Boundary::Killing
            && self.grid()[0] == self.spec.domain.left
    }

    fn killed_right(&self) -> bool {
        let g = self.grid();
        self.spec.domain.right_behavior == Boundary::Killing
            && g[g.len() - 1] == self.spec.domain.right
    }

    fn ratio_nodes(&self, early: &EarlyReward, upper: bool) -> Vec<f64> {
        let f = if upper {
            &self.pair.phi_inc
        } else {
            &self.pair.phi_dec
        };
        let n = f.len();
        (0..n)
            .map(|i| {
                let killed = (i == 0 && self.killed_left()) || (i == n - 1 && self.killed_right());
                if killed || !(f.values[i] > 0.0) {
                    f64::NAN
                } else {
                    early.values[i] / f.values[i]
                }
            })
            .collect()
    }

    fn ratio_eval<'a>(&'a self, early: &'a EarlyReward, upper: bool) -> impl Fn(f64) -> f64 + 'a {
        let f = if upper {
            &self.pair.phi_inc
        } else {
            &self.pair.phi_dec
        };
        move |x| match (early.eval(x), f.eval(x)) {
            (Ok(u), Ok(p)) if p > 0.0 => u / p,
            _ => f64::NAN,
        }
    }

    fn side_set(
        &self,
        early: &EarlyReward,
        upper: bool,
        range: (usize, usize),
    ) -> Result<ArgmaxSet> {
        if early.values.iter().all(|&u| u <= 0.0) {
            return Err(StopError::AllNonPositive { theta: early.theta });
        }
        let nodes = self.ratio_nodes(early, upper);
        let obj = self.ratio_eval(early, upper);
        let n = nodes.len();
        let esc_l = self.truncated_left() && range.0 == 0;
        let esc_r = self.truncated_right() && range.1 == n - 1;
        refine_argmax(self.grid(), &nodes, &obj, range, esc_l, esc_r, self.tie_tol)
            .ok_or(StopError::EmptyThresholdSet { theta: early.theta })
    }

    /// Global maximisers of `U/φ`; empty when the supremum escapes through a truncated end.
    pub fn upper_threshold_set(&self, early: &EarlyReward) -> Result<Vec<f64>> {
        let n = self.grid().len();
        Ok(self.side_set(early, true, (0, n - 1))?.points)
    }

    /// Global maximisers of `U/ϕ`.
    pub fn lower_threshold_set(&self, early: &EarlyReward) -> Result<Vec<f64>> {
        let n = self.grid().len();
        Ok(self.side_set(early, false, (0, n - 1))?.points)
    }

    /// Optimal value of `sup_τ E[e^{-ρτ} U(X_τ)]` from the start, over all stopping times,
    /// read off the concave majorant of `U/ϕ` in the coordinate `φ/ϕ`.
    fn majorant_value(&self, early: &EarlyReward) -> f64 {
        let p = &self.pair.phi_inc.values;
        let q = &self.pair.phi_dec.values;
        let n = p.len();
        let mut fs = Vec::with_capacity(n);
        let mut ws = Vec::with_capacity(n);
        for i in 0..n {
            if !(q[i] > 0.0) || p[i] < 0.0 {
                continue;
            }
            let killed = (i == 0 && self.killed_left()) || (i == n - 1 && self.killed_right());
            let u = if killed {
                0.0
            } else {
                early.values[i].max(0.0)
            };
            fs.push(p[i] / q[i]);
            ws.push(u / q[i]);
        }
        concave_majorant_at(&fs, &ws, 1.0)
    }

    pub fn classify(&self, theta: f64) -> Result<ThresholdReport> {
        let early = self.early_reward(theta)?;
        self.classify_early(&early)
    }

    pub fn classify_early(&self, early: &EarlyReward) -> Result<ThresholdReport> {
        let theta = early.theta;
        let n = self.grid().len();
        let k0 = self.pair.start_index;
        let x0 = self.spec.start;
        let r0 = early.resolvent().map_or(0.0, |r| r.values[k0]);
        let u0 = early.values[k0];
        let report = |class, thresholds: Vec<f64>, e: f64, up: Vec<f64>, low: Vec<f64>| {
            let boundary_argmax = thresholds.iter().any(|&x| {
                (x == self.spec.domain.left && !self.truncated_left())
                    || (x == self.spec.domain.right && !self.truncated_right())
            });
            ThresholdReport {
                theta,
                upper_set: up,
                lower_set: low,
                classification: class,
                thresholds,
                early_value: e,
                value: r0 + e,
                resolvent_at_start: r0,
                boundary_argmax,
            }
        };
        let global_up = match self.side_set(early, true, (0, n - 1)) {
            Ok(s) => s,
            Err(StopError::AllNonPositive { .. }) => {
                return Ok(report(
                    Classification::WaitForever,
                    vec![],
                    0.0,
                    vec![],
                    vec![],
                ));
            }
            Err(e) => return Err(e),
        };
        let global_low = self.side_set(early, false, (0, n - 1))?;
        if let (Some(&hi_up), Some(&lo_low)) = (global_up.points.last(), global_low.points.first())
        {
            let slack = cell_width(self.grid(), hi_up);
            if hi_up > lo_low + slack {
                return Err(StopError::TriangleViolation {
                    theta,
                    upper: hi_up,
                    lower: lo_low,
                });
            }
        }
        let up = global_up.points.clone();
        let low = global_low.points.clone();

        let side_up = self.side_set(early, true, (k0, n - 1))?;
        let side_low = self.side_set(early, false, (0, k0))?;
        let hull = self.majorant_value(early);
        let e_up = side_up.best;
        let e_low = side_low.best;
        let h = hull.max(e_up).max(e_low);
        if h <= 0.0 {
            return Ok(report(Classification::WaitForever, vec![], 0.0, up, low));
        }
        let tie = self.tie_tol * (1.0 + h.abs());
        if u0 >= h - tie {
            return Ok(report(Classification::StopNow, vec![x0], u0, up, low));
        }
        let near = 1e-7 * (1.0 + h.abs());
        if e_up >= h - near && e_up >= e_low {
            if side_up.escaped {
                return Ok(report(Classification::WaitForever, vec![], e_up, up, low));
            }
            return Ok(report(
                Classification::UpperThreshold,
                side_up.points,
                e_up,
                up,
                low,
            ));
        }
        if e_low >= h - near {
            if side_low.escaped {
                return Ok(report(Classification::WaitForever, vec![], e_low, up, low));
            }
            return Ok(report(
                Classification::LowerThreshold,
                side_low.points,
                e_low,
                up,
                low,
            ));
        }
        Ok(report(Classification::NoThreshold, vec![], hull, up, low))
    }

    /// Reports for every θ in the grid, computed in parallel.
    pub fn value_curve(&self, thetas: &[f64]) -> Result<Vec<ThresholdReport>> {
        thetas.par_iter().map(|&t| self.classify(t)).collect()
    }

    /// `(E'(θ-), E'(θ+))` from the envelope formula over the optimal thresholds.
    pub fn envelope_derivatives(&self, report: &ThresholdReport) -> Result<(f64, f64)> {
        if report.thresholds.is_empty() {
            return Err(StopError::EmptyThresholdSet {
                theta: report.theta,
            });
        }
        let ut = self.early_reward_theta(report.theta)?;
        let f = match report.classification {
            Classification::LowerThreshold => &self.pair.phi_dec,
            _ => &self.pair.phi_inc,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in &report.thresholds {
            let v = ut.eval(x)? / f.eval(x)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// `(V'(θ-), V'(θ+))`: the envelope derivatives plus `R_{c_θ}(X₀)`.
    pub fn value_derivatives(&self, report: &ThresholdReport) -> Result<(f64, f64)> {
        let (a, b) = self.envelope_derivatives(report)?;
        let shift = match &self.reward.running {
            Running::Parametric { c_theta, .. } => {
                let ct = c_theta.clone();
                let t = report.theta;
                let r = diffusion::solve_resolvent_with(
                    &self.spec,
                    &self.pair,
                    &move |x| ct(x, t),
                    &self.numerics,
                )?;
                r.values[self.pair.start_index]
            }
            _ => 0.0,
        };
        Ok((a + shift, b + shift))
    }

    /// Endpoints of the θ-interval on which `X*(θ)` is non-empty.
    pub fn threshold_region(&self, thetas: &[f64]) -> Result<(f64, f64)> {
        let reports = self.value_curve(thetas)?;
        region_from_reports(&reports, self.reward.theta_lo.max(thetas[0]))
    }
}

/// Interval of θ-grid points whose reports carry a non-empty optimal threshold set.
pub fn region_from_reports(reports: &[ThresholdReport], theta_minus: f64) -> Result<(f64, f64)> {
    let hits: Vec<usize> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.thresholds.is_empty())
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (hits.first(), hits.last()) else {
        return Ok((theta_minus, theta_minus));
    };
    if let Some(w) = hits.windows(2).find(|w| w[1] != w[0] + 1) {
        return Err(StopError::NonIntervalRegion {
            theta: reports[w[0] + 1].theta,
        });
    }
    Ok((reports[first].theta, reports[last].theta))
}

/// Diagnostics for integrability of the running reward and positivity of the early reward.
#[derive(Debug, Clone, Default)]
pub struct AssumptionReport {
    pub resolvent_integrable: bool,
    pub positive_somewhere: Vec<(f64, bool)>,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_assumptions(
    spec: &DiffusionSpec,
    rho: f64,
    reward: &RewardFamily,
    numerics: &Numerics,
    thetas: &[f64],
) -> AssumptionReport {
    let mut out = AssumptionReport {
        resolvent_integrable: true,
        ..Default::default()
    };
    let pair = match diffusion::default_pair(spec, rho, numerics) {
        Ok(p) => p,
        Err(e) => {
            out.resolvent_integrable = false;
            out.violations.push(format!("eigenfunctions: {e}"));
            return out;
        }
    };
    let abs_check = |c: &(dyn Fn(f64) -> f64 + Sync)| {
        diffusion::solve_resolvent_with(spec, &pair, &|x| c(x).abs(), numerics)
    };
    match &reward.running {
        Running::None => {}
        Running::Fixed(c) => {
            if let Err(e) = abs_check(&|x| c(x)) {
                out.resolvent_integrable = false;
                out.violations.push(format!("running reward: {e}"));
            }
        }
        Running::Parametric { c, .. } => {
            for &t in thetas {
                if let Err(e) = abs_check(&|x| c(x, t)) {
                    out.resolvent_integrable = false;
                    out.violations
                        .push(format!("running reward at theta = {t}: {e}"));
                    break;
                }
            }
        }
    }
    if !out.resolvent_integrable {
        return out;
    }
    let problem =
        match ForwardProblem::with_pair(spec.clone(), reward.clone(), numerics.clone(), pair) {
            Ok(p) => p,
            Err(e) => {
                out.violations.push(format!("{e}"));
                return out;
            }
        };
    for &t in thetas {
        let positive = problem
            .early_reward(t)
            .map(|e| e.values.iter().any(|&u| u > 0.0))
            .unwrap_or(false);
        if !positive {
            out.violations.push(format!(
                "early reward is non-positive everywhere at theta = {t}"
            ));
        }
        out.positive_somewhere.push((t, positive));
    }
    out
}
