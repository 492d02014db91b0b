//! Closed-form inverse problems with known answers.

use crate::diffusion::{fn1, fn2, Boundary, Domain, Fn1, Numerics};
use crate::grid;
use crate::index::ThresholdSide;
use crate::inverse::{Extension, IndexPiece, InverseProblem, PieceMode};

/// An inverse problem together with its index, grids and expected coefficients.
#[derive(Clone)]
pub struct InverseFixture {
    pub name: String,
    pub problem: InverseProblem,
    pub pieces: Vec<IndexPiece>,
    pub xs: Vec<f64>,
    pub thetas: Vec<f64>,
    pub numerics: Numerics,
    pub sigma2: Fn1,
    pub mu: Fn1,
    /// Whether a nonnegative variance is expected on the grid.
    pub feasible: bool,
}

impl std::fmt::Debug for InverseFixture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InverseFixture")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// `G = θx`, `c = 1/x`, `θ*(x) = 3/x²` on `(1, √3)`; GBM with `μ = x/3`, `σ² = x²(ρ - 2/3)`.
pub fn theta_x(rho: f64) -> InverseFixture {
    let k = 2.0 / (3.0 * 3f64.sqrt());
    let problem = InverseProblem {
        v: fn1(move |t| 1.0 + k * t.powf(1.5)),
        v_prime: fn1(move |t| 1.5 * k * t.sqrt()),
        g: fn2(|x, t| t * x),
        g_theta: fn2(|x, _| x),
        c: Some(fn1(|x| 1.0 / x)),
        start: 1.0,
        theta_lo: 1.0,
        theta_hi: 3.0,
        rho,
        side: ThresholdSide::Upper,
        domain: Domain::positive_half_line(),
        feasibility_condition: Some("requires rho > 2/3".into()),
        extension: Extension::default(),
    };
    let hi = 3f64.sqrt();
    InverseFixture {
        name: format!("theta_x(rho={rho})"),
        problem,
        pieces: vec![IndexPiece::new(1.0, hi, fn1(|x| 3.0 / (x * x)))],
        xs: grid::geometric(1.0, hi, 401),
        thetas: grid::uniform(1.05, 2.95, 20),
        numerics: Numerics::default(),
        sigma2: fn1(move |x| x * x * (rho - 2.0 / 3.0)),
        mu: fn1(|x| x / 3.0),
        feasible: rho > 2.0 / 3.0,
    }
}

fn power_value(k: f64) -> (Fn1, Fn1) {
    (
        fn1(move |t| (k * t / (k + 1.0)).powf(k) * t / (k + 1.0) + 1.0),
        fn1(move |t| (k * t / (k + 1.0)).powf(k)),
    )
}

/// `G = θ`, `c = γx`, `θ*(x) = x^α (k+1)/k` on `[0.01, 1]` below `X₀ = 1`.
///
/// With `cubic_extension` the index continues as `x³(k+1)/k` on `[1, 5]`.
pub fn alpha_family(
    k: f64,
    gamma: f64,
    rho: f64,
    alpha: f64,
    cubic_extension: bool,
) -> InverseFixture {
    alpha_family_from(k, gamma, rho, alpha, cubic_extension, 0.01)
}

/// Smallest `x` with `φ(x)/x ≤ 10³` for `φ = x^{-αk}`. Below it `R̂` is dominated by its
/// `φ` component and double precision cannot resolve the remainder.
pub fn conditioned_left_end(k: f64, alpha: f64) -> f64 {
    1e-3f64.powf(1.0 / (alpha * k + 1.0))
}

/// [`alpha_family`] with the data range starting at `x_min`.
pub fn alpha_family_from(
    k: f64,
    gamma: f64,
    rho: f64,
    alpha: f64,
    cubic_extension: bool,
    x_min: f64,
) -> InverseFixture {
    let (v, v_prime) = power_value(k);
    let problem = InverseProblem {
        v,
        v_prime,
        g: fn2(|_, t| t),
        g_theta: fn2(|_, _| 1.0),
        c: Some(fn1(move |x| gamma * x)),
        start: 1.0,
        theta_lo: 0.0,
        theta_hi: (k + 1.0) / k,
        rho,
        side: ThresholdSide::Lower,
        domain: Domain::positive_half_line(),
        feasibility_condition: Some("requires rho + k(rho - gamma) >= 0 and alpha <= 1".into()),
        extension: Extension {
            below: None,
            above: gbm_continuation(k, gamma, rho, alpha),
        },
    };
    let mut pieces = vec![IndexPiece::new(
        x_min,
        1.0,
        fn1(move |x| x.powf(alpha) * (k + 1.0) / k),
    )];
    let mut xs = grid::geometric(x_min, 1.0, 601);
    if cubic_extension {
        pieces.push(IndexPiece::extension(
            1.0,
            5.0,
            fn1(move |x| x.powi(3) * (k + 1.0) / k),
            PieceMode::ValueFormula,
        ));
        xs.extend(grid::geometric(1.0, 5.0, 301).into_iter().skip(1));
    }
    let a2 = alpha * alpha;
    let kk = k * (1.0 + k);
    let t_lo = x_min.powf(alpha) * (k + 1.0) / k;
    let t_hi = (k + 1.0) / k;
    InverseFixture {
        name: format!("alpha_family(k={k}, gamma={gamma}, rho={rho}, alpha={alpha})"),
        problem,
        pieces,
        xs,
        thetas: grid::uniform(t_lo + 0.05 * (t_hi - t_lo), t_hi * 0.98, 20),
        numerics: Numerics::default(),
        sigma2: fn1(move |x| {
            2.0 * (rho * (1.0 + k) * x * x - k * gamma * x.powf(3.0 - alpha)) / (kk * a2)
        }),
        mu: fn1(move |x| {
            (1.0 + alpha * k) * (rho * x * (1.0 + k) - k * gamma * x.powf(2.0 - alpha)) / (kk * a2)
                - rho * x / (alpha * k)
        }),
        feasible: rho + k * (rho - gamma) >= 0.0 && alpha <= 1.0,
    }
}

/// GBM coefficients `(s x², m x)` above 1 under which both `x^{-αk}` and the resolvent
/// `x^α` continue with matching slopes; `None` when `s ≤ 0`.
pub fn gbm_continuation(k: f64, gamma: f64, rho: f64, alpha: f64) -> Option<(Fn1, Fn1)> {
    let beta = alpha * k;
    let m = rho - gamma * (1.0 + beta) / (alpha + beta);
    let s = 2.0 * (rho + m * beta) / (beta * (beta + 1.0));
    (s > 0.0).then(|| (fn1(move |x| s * x * x), fn1(move |x| m * x)))
}

/// The α-family with `γ = ρ`, `α = 1`: a driftless GBM with `σ² = 2ρ/(k(k+1))`.
pub fn martingale_gbm(k: f64, rho: f64) -> InverseFixture {
    let mut f = alpha_family_from(k, rho, rho, 1.0, false, conditioned_left_end(k, 1.0));
    f.name = format!("martingale_gbm(k={k}, rho={rho})");
    f
}

/// `G = e^{θx}`, `c = 0`, `E = e^{θ²/2}` from a reflecting origin, with the index `x` on
/// `[1, 8]` and the extension `(3/4)√x` on `[0, 1)`. The recovered diffusion is sticky at 1.
pub fn sticky(rho: f64) -> InverseFixture {
    let problem = InverseProblem {
        v: fn1(|t| (0.5 * t * t).exp()),
        v_prime: fn1(|t| t * (0.5 * t * t).exp()),
        g: fn2(|x, t| (t * x).exp()),
        g_theta: fn2(|x, t| x * (t * x).exp()),
        c: None,
        start: 0.0,
        theta_lo: 1.0,
        theta_hi: 8.0,
        rho,
        side: ThresholdSide::Upper,
        domain: Domain::new(
            0.0,
            f64::INFINITY,
            Boundary::Reflecting,
            Boundary::Inaccessible,
        )
        .expect("valid domain"),
        feasibility_condition: None,
        extension: Extension::default(),
    };
    // quadratic spacing resolves σ² ~ √x at the origin
    let mut xs: Vec<f64> = grid::uniform(0.0, 1.0, 401)
        .into_iter()
        .map(|t| t * t)
        .collect();
    xs.extend(grid::uniform(1.0, 8.0, 1401).into_iter().skip(1));
    InverseFixture {
        name: format!("sticky(rho={rho})"),
        problem,
        pieces: vec![
            IndexPiece::extension(0.0, 1.0, fn1(|x| 0.75 * x.sqrt()), PieceMode::Stationarity),
            IndexPiece::new(1.0, 8.0, fn1(|x| x)),
        ],
        xs,
        thetas: grid::uniform(1.1, 3.5, 13),
        numerics: Numerics {
            right_cutoff: Some(8.0),
            ..Numerics::default()
        },
        sigma2: fn1(move |x| {
            if x < 1.0 {
                32.0 * rho * x.sqrt() / (6.0 + 9.0 * x.powf(1.5))
            } else {
                2.0 * rho / (1.0 + x * x)
            }
        }),
        mu: fn1(|_| 0.0),
        feasible: true,
    }
}

/// Fixtures expected to be feasible, used for round trips.
pub fn feasible_fixtures() -> Vec<InverseFixture> {
    let mut out = vec![theta_x(1.0)];
    out.extend([1.0, 2.0, 5.0].map(|k| martingale_gbm(k, 0.1)));
    out.push(alpha_family_from(
        2.0,
        0.12,
        0.1,
        0.5,
        false,
        conditioned_left_end(2.0, 0.5),
    ));
    out.push(sticky(0.5));
    out
}
