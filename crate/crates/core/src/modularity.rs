//! Lattice tests for log-supermodularity of surfaces `f(x, θ)` and monotonicity of
//! threshold maps.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StopError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Supermodular,
    Submodular,
    Modular,
    Neither,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Supermodular => "supermodular",
            Verdict::Submodular => "submodular",
            Verdict::Modular => "modular",
            Verdict::Neither => "neither",
        })
    }
}

/// Corners `(x, x', θ, θ')` of a rectangle with `x < x'`, `θ < θ'`.
pub type Witness = (f64, f64, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSummary {
    pub components: usize,
    pub positive_points: usize,
    pub total_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVerdict {
    pub verdict: Verdict,
    pub strict: bool,
    /// Rectangle violating the supermodular inequality, when the verdict is `Neither`.
    pub witness: Option<Witness>,
    pub tested_domain: MaskSummary,
}

impl LatticeVerdict {
    pub fn is_supermodular(&self) -> bool {
        matches!(self.verdict, Verdict::Supermodular | Verdict::Modular)
    }

    pub fn is_submodular(&self) -> bool {
        matches!(self.verdict, Verdict::Submodular | Verdict::Modular)
    }

    pub fn strictly_supermodular(&self) -> bool {
        self.verdict == Verdict::Supermodular && self.strict
    }
}

#[derive(Debug, Clone)]
pub struct LatticeOptions {
    /// Relative tolerance on mixed differences.
    pub tol: f64,
    /// Margin a mixed difference must exceed to count as strict.
    pub strict_margin: f64,
    pub audit_rectangles: usize,
    pub seed: u64,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            strict_margin: 1e-8,
            audit_rectangles: 10_000,
            seed: 0,
        }
    }
}

/// Connected components (4-neighbour) of the finite entries of `l`, as labels.
fn label_components(l: &[Vec<f64>]) -> (Vec<Vec<usize>>, usize) {
    let n = l.len();
    let m = if n > 0 { l[0].len() } else { 0 };
    let mut label = vec![vec![usize::MAX; m]; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if !l[i][j].is_finite() || label[i][j] != usize::MAX {
                continue;
            }
            label[i][j] = count;
            stack.push((i, j));
            while let Some((a, b)) = stack.pop() {
                let nbrs = [
                    (a.wrapping_sub(1), b),
                    (a + 1, b),
                    (a, b.wrapping_sub(1)),
                    (a, b + 1),
                ];
                for (p, q) in nbrs {
                    if p < n && q < m && l[p][q].is_finite() && label[p][q] == usize::MAX {
                        label[p][q] = count;
                        stack.push((p, q));
                    }
                }
            }
            count += 1;
        }
    }
    (label, count)
}

struct Tally {
    min: f64,
    max: f64,
    super_witness: Option<Witness>,
    super_ok: bool,
    sub_ok: bool,
    strict_super: bool,
    strict_sub: bool,
    tested: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            super_witness: None,
            super_ok: true,
            sub_ok: true,
            strict_super: true,
            strict_sub: true,
            tested: 0,
        }
    }

    fn add(&mut self, d: f64, scale: f64, opts: &LatticeOptions, w: Witness) {
        let tol = opts.tol * (1.0 + scale);
        self.tested += 1;
        self.min = self.min.min(d);
        self.max = self.max.max(d);
        if d < -tol {
            self.super_ok = false;
            self.super_witness.get_or_insert(w);
        }
        if d > tol {
            self.sub_ok = false;
        }
        if d <= opts.strict_margin {
            self.strict_super = false;
        }
        if d >= -opts.strict_margin {
            self.strict_sub = false;
        }
    }
}

/// Checks whether `log f` is supermodular on the positivity mask `{f > 0}` of the grid.
pub fn check_log_supermodular(
    f: &dyn Fn(f64, f64) -> f64,
    xs: &[f64],
    thetas: &[f64],
    opts: &LatticeOptions,
) -> Result<LatticeVerdict> {
    let l: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            thetas
                .iter()
                .map(|&t| {
                    let v = f(x, t);
                    if v > 0.0 && v.is_finite() {
                        v.ln()
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect();
    check_grid_log(&l, xs, thetas, opts)
}

/// Same as [`check_log_supermodular`] on precomputed values of `log f` (NaN off the mask).
pub fn check_grid_log(
    l: &[Vec<f64>],
    xs: &[f64],
    thetas: &[f64],
    opts: &LatticeOptions,
) -> Result<LatticeVerdict> {
    let (labels, components) = label_components(l);
    let positive = l.iter().flatten().filter(|v| v.is_finite()).count();
    if positive == 0 {
        return Err(StopError::EmptyMask);
    }
    let (n, m) = (xs.len(), thetas.len());
    let mut tally = Tally::new();
    let mixed = |i: usize, k: usize, j: usize, q: usize| -> Option<(f64, f64)> {
        let c = [l[i][j], l[k][q], l[k][j], l[i][q]];
        if c.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let lab = labels[i][j];
        if labels[k][q] != lab || labels[k][j] != lab || labels[i][q] != lab {
            return None;
        }
        let scale = c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        Some((c[1] + c[0] - c[2] - c[3], scale))
    };
    for i in 0..n.saturating_sub(1) {
        for j in 0..m.saturating_sub(1) {
            if let Some((d, s)) = mixed(i, i + 1, j, j + 1) {
                tally.add(d, s, opts, (xs[i], xs[i + 1], thetas[j], thetas[j + 1]));
            }
        }
    }
    if n >= 2 && m >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.audit_rectangles {
            let (mut i, mut k) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let (mut j, mut q) = (rng.gen_range(0..m), rng.gen_range(0..m));
            if i == k || j == q {
                continue;
            }
            if i > k {
                std::mem::swap(&mut i, &mut k);
            }
            if j > q {
                std::mem::swap(&mut j, &mut q);
            }
            if let Some((d, s)) = mixed(i, k, j, q) {
                tally.add(d, s, opts, (xs[i], xs[k], thetas[j], thetas[q]));
            }
        }
    }
    let summary = MaskSummary {
        components,
        positive_points: positive,
        total_points: n * m,
    };
    let tested = tally.tested > 0;
    let (verdict, strict, witness) = match (tally.super_ok, tally.sub_ok) {
        (true, true) => (Verdict::Modular, false, None),
        (true, false) => (Verdict::Supermodular, tested && tally.strict_super, None),
        (false, true) => (
            Verdict::Submodular,
            tested && tally.strict_sub,
            tally.super_witness,
        ),
        (false, false) => (Verdict::Neither, false, tally.super_witness),
    };
    // the witness refers to the supermodular direction and is only reported for `Neither`
    let witness = if verdict == Verdict::Neither {
        witness
    } else {
        None
    };
    Ok(LatticeVerdict {
        verdict,
        strict,
        witness,
        tested_domain: summary,
    })
}

/// Verdict for `Q(x, θ) = ρ G(θ) - c(x)`.
pub fn check_standard_q(
    g: &dyn Fn(f64) -> f64,
    c: &dyn Fn(f64) -> f64,
    rho: f64,
    xs: &[f64],
    thetas: &[f64],
    opts: &LatticeOptions,
) -> Result<LatticeVerdict> {
    check_log_supermodular(&|x, t| rho * g(t) - c(x), xs, thetas, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCheck {
    pub holds: bool,
    /// First violating pair `((θ, x), (θ', x'))` with `θ < θ'`.
    pub witness: Option<((f64, f64), (f64, f64))>,
}

/// Checks that every selection of a set-valued map `θ ↦ X*(θ)` is monotone.
///
/// Samples must be sorted by θ. Empty sets are skipped.
pub fn check_monotone_threshold_map(
    samples: &[(f64, Vec<f64>)],
    increasing: bool,
    tol: f64,
) -> MonotoneCheck {
    // running extreme over all earlier θ
    let mut extreme: Option<(f64, f64)> = None;
    for (t, set) in samples {
        if set.is_empty() {
            continue;
        }
        let lo = set.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = set.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if let Some((pt, px)) = extreme {
            let bad = if increasing {
                lo < px - tol
            } else {
                hi > px + tol
            };
            if bad {
                return MonotoneCheck {
                    holds: false,
                    witness: Some(((pt, px), (*t, if increasing { lo } else { hi }))),
                };
            }
        }
        let cand = if increasing { hi } else { lo };
        extreme = match extreme {
            Some((pt, px)) if (increasing && px >= cand) || (!increasing && px <= cand) => {
                Some((pt, px))
            }
            _ => Some((*t, cand)),
        };
    }
    MonotoneCheck {
        holds: true,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::uniform;

    #[test]
    fn components_are_counted() {
        let xs = uniform(-1.0, 1.0, 21);
        let ts = uniform(0.0, 1.0, 5);
        let v = check_log_supermodular(&|x, _| x.abs() - 0.5, &xs, &ts, &LatticeOptions::default())
            .unwrap();
        assert_eq!(v.tested_domain.components, 2);
        assert_eq!(v.verdict, Verdict::Modular);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let xs = uniform(0.0, 1.0, 5);
        assert_eq!(
            check_log_supermodular(&|_, _| -1.0, &xs, &xs, &LatticeOptions::default()),
            Err(StopError::EmptyMask)
        );
    }
}
