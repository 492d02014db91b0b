use proptest::prelude::*;
use stopdex::grid::uniform;
use stopdex::index::*;
use stopdex::*;

fn legendre() -> (GridFunction, Fn2) {
    let ys = uniform(-5.0, 5.0, 201);
    let f = GridFunction::new(ys.clone(), ys.iter().map(|y| 0.5 * y * y).collect()).unwrap();
    (f, fn2(|y, z| y * z))
}

#[test]
fn legendre_pair_is_self_dual() {
    let (f, u) = legendre();
    let zs = uniform(-5.0, 5.0, 201);
    let fu = u_dual(&f, &*u, &zs).unwrap();
    for (z, v) in zs.iter().zip(&fu.values) {
        assert!((v - 0.5 * z * z).abs() < 1e-12);
    }
    assert!(check_u_convex(&f, &*u, &zs, 1e-12).unwrap());
    let pair = DualPair::new(f, u, &zs).unwrap();
    assert!(pair.young_gap_min() >= -1e-12);
    assert_eq!(pair.subdifferential(2.0, 1e-12).unwrap(), vec![2.0]);
}

#[test]
fn concave_function_is_not_u_convex() {
    let ys = uniform(-1.0, 1.0, 101);
    let f = GridFunction::new(ys.clone(), ys.iter().map(|y| -y * y).collect()).unwrap();
    let zs = uniform(-4.0, 4.0, 401);
    assert!(!check_u_convex(&f, &|y, z| y * z, &zs, 1e-6).unwrap());
    // the double dual is the convex minorant: the chord -1 at interior points
    let fu = u_dual(&f, &|y, z| y * z, &zs).unwrap();
    let fuu = u_dual_rev(&fu, &|y, z| y * z, &ys).unwrap();
    assert!((fuu.eval(0.0).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn flat_segment_gives_interval_subdifferential() {
    // f(y) = |y| has ∂f(0) = [-1, 1]
    let ys = uniform(-2.0, 2.0, 81);
    let f = GridFunction::new(ys.clone(), ys.iter().map(|y| y.abs()).collect()).unwrap();
    let zs = uniform(-1.5, 1.5, 31);
    let pair = DualPair::new(f, fn2(|y, z| y * z), &zs).unwrap();
    let sd = pair.subdifferential(0.0, 1e-12).unwrap();
    let brute: Vec<f64> = zs
        .iter()
        .copied()
        .filter(|z| z.abs() <= 1.0 + 1e-12)
        .collect();
    assert_eq!(sd, brute);
}

#[test]
fn quadratic_eta_has_quadratic_dual() {
    let ts = uniform(-3.0, 3.0, 601);
    let eta = GridFunction::new(ts.clone(), ts.iter().map(|t| 0.5 * t * t).collect()).unwrap();
    let xs = uniform(-2.0, 2.0, 41);
    let d = u_dual(&eta, &|t, x| t * x, &xs).unwrap();
    for (x, v) in xs.iter().zip(&d.values) {
        assert!((v - 0.5 * x * x).abs() < 1e-12);
    }
}

fn martingale_gbm(k: f64, rho: f64) -> ForwardProblem {
    let s2 = 2.0 * rho / (k * (k + 1.0));
    let spec = DiffusionSpec::gbm(s2.sqrt(), 0.0, 1.0).unwrap();
    let reward = RewardFamily::new(fn2(|_, t| t), fn2(|_, _| 1.0), 0.0, (k + 1.0) / k)
        .with_running(fn1(move |x| rho * x));
    ForwardProblem::new(spec, rho, reward, Numerics::default()).unwrap()
}

#[test]
fn martingale_gbm_index_and_value() {
    let k = 2.0;
    let p = martingale_gbm(k, 0.1);
    for theta in [0.5, 1.0, 1.4] {
        let r = p.classify(theta).unwrap();
        let want = (k * theta / (k + 1.0)).powf(k) * theta / (k + 1.0) + 1.0;
        assert!(
            (r.value - want).abs() < 1e-6 * want,
            "theta={theta}: {} vs {want}",
            r.value
        );
    }
    let eng = IndexEngine::new(&p, ThresholdSide::Lower);
    let ts = uniform(0.05, 1.5, 146);
    for x in [0.3, 0.6, 0.9] {
        let (a, b) = eng.indifference_map(x, &ts).unwrap().unwrap();
        assert!((a - x * (k + 1.0) / k).abs() < 1e-5, "x={x}: {a}");
        assert_eq!(a, b);
    }
    let curve = eng.index_curve(&uniform(0.2, 0.9, 8), &ts).unwrap();
    assert_eq!(curve.direction, Direction::NonDecreasing);
    assert!(
        curve.stationarity_residual < 1e-4,
        "{}",
        curve.stationarity_residual
    );
}

#[test]
fn quadratic_potential_index_is_identity() {
    let rho = 0.5;
    let dom = Domain::new(
        0.0,
        f64::INFINITY,
        Boundary::Reflecting,
        Boundary::Inaccessible,
    )
    .unwrap();
    let spec = DiffusionSpec::new(
        dom,
        fn1(move |x| 2.0 * rho / (1.0 + x * x)),
        fn1(|_| 0.0),
        vec![],
        0.0,
    )
    .unwrap();
    let reward = RewardFamily::new(
        fn2(|x, t| (t * x).exp()),
        fn2(|x, t| x * (t * x).exp()),
        0.0,
        4.0,
    );
    let p = ForwardProblem::new(spec, rho, reward, Numerics::default()).unwrap();
    for x in [0.5, 1.0, 2.0, 4.0] {
        assert!((p.pair.phi(x).unwrap() - (0.5 * x * x).exp()).abs() < 1e-6 * (0.5 * x * x).exp());
    }
    let eng = IndexEngine::new(&p, ThresholdSide::Upper);
    for t in [0.5, 1.5, 3.0] {
        assert!((eng.eta(t).unwrap() - 0.5 * t * t).abs() < 1e-7);
    }
    let ts = uniform(0.0, 4.0, 81);
    for x in [1.0, 2.3] {
        let (a, _) = eng.indifference_map(x, &ts).unwrap().unwrap();
        assert!((a - x).abs() < 1e-5);
        // mutual inverse with the threshold sets
        let e = p.early_reward(a).unwrap();
        let up = p.upper_threshold_set(&e).unwrap();
        assert!((up[0] - x).abs() < 1e-4);
    }
}

#[test]
fn gbm_standard_index_at_start() {
    let (s, m, rho) = (0.3f64, 0.05f64, 0.1f64);
    let spec = DiffusionSpec::gbm(s, m, 1.0).unwrap();
    let reward =
        RewardFamily::new(fn2(|_, t| t), fn2(|_, _| 1.0), 0.0, 60.0).with_running(fn1(|x| x));
    let p = ForwardProblem::new(spec, rho, reward, Numerics::default()).unwrap();
    let nu = m / (s * s) - 0.5;
    let cm = (nu * nu + 2.0 * rho / (s * s)).sqrt() + nu;
    let eng = IndexEngine::new(&p, ThresholdSide::Lower);
    let (a, _) = eng
        .indifference_map(1.0, &uniform(1.0, 60.0, 119))
        .unwrap()
        .unwrap();
    let want = (1.0 + cm) / (cm * (rho - m));
    assert!((a - want).abs() < 1e-5 * want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn triple_dual_equals_single_dual(coefs in proptest::collection::vec(-2.0f64..2.0, 4)) {
        let ys = uniform(-2.0, 2.0, 41);
        let vals: Vec<f64> = ys.iter().map(|&y| coefs[0] * y.sin() + coefs[1] * y * y + coefs[2] * (coefs[3] * y).cos()).collect();
        let f = GridFunction::new(ys.clone(), vals).unwrap();
        let zs = uniform(-3.0, 3.0, 37);
        let u = |y: f64, z: f64| y * z - 0.3 * (y - z).powi(2);
        let fu = u_dual(&f, &u, &zs).unwrap();
        let fuu = u_dual_rev(&fu, &u, &ys).unwrap();
        let fuuu = u_dual(&fuu, &u, &zs).unwrap();
        for (a, b) in fu.values.iter().zip(&fuuu.values) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let pair = DualPair::new(f, fn2(u), &zs).unwrap();
        prop_assert!(pair.young_gap_min() >= -1e-12);
    }
}
