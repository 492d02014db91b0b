//! Sampled functions on strictly increasing grids.

use crate::error::{Result, StopError};

/// A function sampled on a grid, optionally with one-sided derivatives.
///
/// `left_deriv[i]` is the derivative approached from the left of `grid[i]` and
/// `right_deriv[i]` from the right; they differ only at kinks (speed-measure atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub left_deriv: Option<Vec<f64>>,
    pub right_deriv: Option<Vec<f64>>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(StopError::InvalidInput(format!(
                "grid has {} points but {} values were supplied",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StopError::InvalidInput(format!(
                "non-finite value at x = {}",
                grid[i]
            )));
        }
        Ok(Self {
            grid,
            values,
            left_deriv: None,
            right_deriv: None,
        })
    }

    pub fn with_derivatives(
        grid: Vec<f64>,
        values: Vec<f64>,
        left_deriv: Vec<f64>,
        right_deriv: Vec<f64>,
    ) -> Result<Self> {
        let mut f = Self::new(grid, values)?;
        if left_deriv.len() != f.len() || right_deriv.len() != f.len() {
            return Err(StopError::InvalidInput(
                "derivative arrays must match the grid length".into(),
            ));
        }
        f.left_deriv = Some(left_deriv);
        f.right_deriv = Some(right_deriv);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    /// Index of the grid point equal to `x` (relative tolerance 1e-12), if any.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let i = self.grid.partition_point(|&g| g < x);
        let tol = 1e-12 * (1.0 + x.abs());
        [i.wrapping_sub(1), i]
            .into_iter()
            .filter(|&j| j < self.grid.len())
            .find(|&j| (self.grid[j] - x).abs() <= tol)
    }

    /// Cell index `i` such that `grid[i] <= x <= grid[i + 1]`.
    fn cell(&self, x: f64) -> Result<usize> {
        if !self.contains(x) {
            return Err(StopError::OutOfGrid {
                x,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        let i = self.grid.partition_point(|&g| g <= x);
        Ok(i.saturating_sub(1).min(self.grid.len() - 2))
    }

    /// Value at `x`: cubic Hermite interpolation when derivatives are stored, linear otherwise.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if let Some(j) = self.node_index(x) {
            return Ok(self.values[j]);
        }
        let i = self.cell(x)?;
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        match (&self.right_deriv, &self.left_deriv) {
            (Some(rd), Some(ld)) => {
                let (d0, d1) = (rd[i], ld[i + 1]);
                let t2 = t * t;
                let t3 = t2 * t;
                Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y0
                    + (t3 - 2.0 * t2 + t) * h * d0
                    + (-2.0 * t3 + 3.0 * t2) * y1
                    + (t3 - t2) * h * d1)
            }
            _ => Ok(y0 + t * (y1 - y0)),
        }
    }

    /// Derivative at `x`. At a node the one-sided derivative on `side` is returned.
    pub fn eval_deriv(&self, x: f64, side: Side) -> Result<f64> {
        let (Some(ld), Some(rd)) = (&self.left_deriv, &self.right_deriv) else {
            let i = self.cell(x)?;
            return Ok((self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i]));
        };
        if let Some(j) = self.node_index(x) {
            return Ok(match side {
                Side::Left => ld[j],
                Side::Right => rd[j],
            });
        }
        let i = self.cell(x)?;
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1, d0, d1) = (self.values[i], self.values[i + 1], rd[i], ld[i + 1]);
        let t2 = t * t;
        Ok(((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (3.0 * t2 - 2.0 * t) * d1)
    }

    /// Pointwise map of the values; derivatives are dropped.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        let values = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        GridFunction::new(self.grid.clone(), values)
    }

    /// Largest relative mismatch `|right - left| / (1 + |left|)` between one-sided derivatives.
    pub fn max_derivative_mismatch(&self) -> f64 {
        match (&self.left_deriv, &self.right_deriv) {
            (Some(l), Some(r)) => l
                .iter()
                .zip(r)
                .map(|(a, b)| (b - a).abs() / (1.0 + a.abs()))
                .fold(0.0, f64::max),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(StopError::InvalidInput(
            "grid needs at least two points".into(),
        ));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(StopError::InvalidInput(
            "grid contains non-finite points".into(),
        ));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(StopError::InvalidInput(format!(
            "grid not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = uniform(a, b, n).into_iter().map(f64::exp).collect();
    g[0] = lo;
    let last = g.len() - 1;
    g[last] = hi;
    g
}

/// Uniform grid in a stretched coordinate that refines cells next to the flagged ends.
pub fn clustered(lo: f64, hi: f64, n: usize, left: bool, right: bool) -> Vec<f64> {
    const STRENGTH: f64 = 0.5;
    let map = |t: f64| -> f64 {
        match (left, right) {
            (true, true) => {
                t - STRENGTH * (2.0 * std::f64::consts::PI * t).sin() / (2.0 * std::f64::consts::PI)
            }
            (true, false) => t + STRENGTH * (t * t - t),
            (false, true) => t - STRENGTH * (t * t - t),
            (false, false) => t,
        }
    };
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * map(i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Moves the nearest interior node onto each of `points` (points outside the grid are ignored).
pub fn snap_nodes(grid: &mut [f64], points: &[f64]) {
    let n = grid.len();
    for &p in points {
        if !(p > grid[0] && p < grid[n - 1]) {
            continue;
        }
        let i = grid.partition_point(|&g| g < p);
        let j = if i == 0 {
            0
        } else if i >= n || (p - grid[i - 1]) < (grid[i] - p) {
            i - 1
        } else {
            i
        };
        if j == 0 || j == n - 1 {
            continue;
        }
        if p > grid[j - 1] && p < grid[j + 1] {
            grid[j] = p;
        }
    }
}

/// Golden-section maximisation of a unimodal function on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
    // endpoints can beat the interior probes when the maximum sits on the bracket edge
    let (fa, fb) = (f(a), f(b));
    if fa > fx && fa >= fb {
        (a, fa)
    } else if fb > fx {
        (b, fb)
    } else {
        (x, fx)
    }
}

/// Finite-difference weights at `z` on the nodes `xs` for derivatives `0..=m`
/// (Fornberg's recursion). `w[k][j]` multiplies `f(xs[j])` in the `k`-th derivative.
pub fn fd_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[n - 1 - i] = ws[i];
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        let g = uniform(-1.0, 2.0, 7);
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let gf = GridFunction::with_derivatives(
            g.clone(),
            g.iter().map(|&x| f(x)).collect(),
            g.iter().map(|&x| df(x)).collect(),
            g.iter().map(|&x| df(x)).collect(),
        )
        .unwrap();
        for x in [-0.93, 0.1, 1.337, 1.999] {
            assert!((gf.eval(x).unwrap() - f(x)).abs() < 1e-12);
            assert!((gf.eval_deriv(x, Side::Left).unwrap() - df(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn out_of_grid_is_reported() {
        let gf = GridFunction::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(gf.eval(1.5), Err(StopError::OutOfGrid { .. })));
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(GridFunction::new(vec![0.0, 0.0, 1.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn snapping_keeps_order() {
        let mut g = uniform(0.0, 1.0, 11);
        snap_nodes(&mut g, &[0.33, 0.71]);
        check_grid(&g).unwrap();
        assert!(g.contains(&0.33) && g.contains(&0.71));
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, _) = golden_max(|x| -(x - 0.3).powi(2), -1.0, 2.0, 200);
        assert!((x - 0.3).abs() < 1e-7);
    }
}
