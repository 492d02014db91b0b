use proptest::prelude::*;
use stopdex::grid::uniform;
use stopdex::modularity::*;
use stopdex::*;

fn opts() -> LatticeOptions {
    LatticeOptions::default()
}

#[test]
fn exponential_is_strictly_supermodular() {
    let xs = uniform(-2.0, 2.0, 41);
    let ts = uniform(-1.0, 1.0, 31);
    let v = check_log_supermodular(&|x, t| (t * x).exp(), &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Supermodular);
    assert!(v.strict);
    assert!(v.witness.is_none());
}

#[test]
fn difference_is_log_supermodular_on_its_mask() {
    let xs = uniform(0.0, 3.0, 61);
    let ts = uniform(0.0, 3.0, 61);
    let v = check_log_supermodular(&|x, t| t - x, &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Supermodular);
    // brute force over every rectangle inside the mask
    let l = |x: f64, t: f64| (t - x).ln();
    for i in 0..xs.len() {
        for k in i + 1..xs.len() {
            for j in 0..ts.len() {
                for q in j + 1..ts.len() {
                    let (x, x2, t, t2) = (xs[i], xs[k], ts[j], ts[q]);
                    if t - x2 > 0.0 {
                        assert!(l(x2, t2) + l(x, t) - l(x2, t) - l(x, t2) >= -1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn separable_is_modular_not_strict() {
    let xs = uniform(0.1, 3.0, 30);
    let ts = uniform(0.1, 2.0, 25);
    let v = check_log_supermodular(&|x, t| (1.0 + x * x) * t.exp(), &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Modular);
    assert!(!v.strict);
}

#[test]
fn cosine_running_reward_is_modular_per_component() {
    let xs = uniform(0.0, 10.0, 101);
    let ts = uniform(-1.0, 1.0, 21);
    let v = check_log_supermodular(&|x, t| t * x.cos(), &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Modular);
    assert!(v.tested_domain.components > 1);
}

#[test]
fn neither_reports_a_witness_in_the_mask() {
    let xs = uniform(-2.0, 2.0, 41);
    let ts = uniform(-2.0, 2.0, 41);
    let f = |x: f64, t: f64| (t * x * x * x - t * t * x).exp();
    let v = check_log_supermodular(&f, &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Neither);
    let (x, x2, t, t2) = v.witness.unwrap();
    let l = |a: f64, b: f64| f(a, b).ln();
    assert!(l(x2, t2) + l(x, t) - l(x2, t) - l(x, t2) < 0.0);
    for (a, b) in [(x, t), (x2, t2), (x, t2), (x2, t)] {
        assert!(f(a, b) > 0.0);
    }
}

#[test]
fn standard_q_verdicts() {
    let xs = uniform(0.0, 2.0, 41);
    let ts = uniform(0.0, 4.0, 41);
    let v = check_standard_q(&|t| t, &|x| x, 0.5, &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Supermodular);
    let v = check_standard_q(&|t| t, &|_| -1.0, 0.5, &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Modular);
    let v = check_standard_q(&|t| t, &|x| -x, 0.5, &xs, &ts, &opts()).unwrap();
    assert_eq!(v.verdict, Verdict::Submodular);
}

#[test]
fn q_verdict_matches_early_reward_verdict_for_gbm() {
    let (rho, mu) = (0.1, 0.05);
    let spec = DiffusionSpec::gbm(0.3, mu, 1.0).unwrap();
    let reward =
        RewardFamily::new(fn2(|_, t| t), fn2(|_, _| 1.0), 0.0, 40.0).with_running(fn1(|x| x));
    let p = ForwardProblem::new(spec, rho, reward, Numerics::default()).unwrap();
    let xs: Vec<f64> = uniform(0.1, 3.0, 30);
    let ts = uniform(0.5, 40.0, 30);
    let rows: Vec<EarlyReward> = ts.iter().map(|&t| p.early_reward(t).unwrap()).collect();
    let l: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            rows.iter()
                .map(|e| e.log_eval(x).unwrap().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let vu = check_grid_log(&l, &xs, &ts, &opts()).unwrap();
    let vq = check_standard_q(&|t| t, &|x| x, rho, &xs, &ts, &opts()).unwrap();
    assert_eq!(vu.verdict, vq.verdict);
    assert_eq!(vu.verdict, Verdict::Supermodular);
}

#[test]
fn monotone_maps() {
    let inc: Vec<(f64, Vec<f64>)> = (0..10).map(|i| (i as f64, vec![i as f64 * 0.3])).collect();
    assert!(check_monotone_threshold_map(&inc, true, 0.0).holds);
    assert!(!check_monotone_threshold_map(&inc, false, 0.0).holds);
    let constant: Vec<(f64, Vec<f64>)> = (0..5).map(|i| (i as f64, vec![1.0])).collect();
    assert!(check_monotone_threshold_map(&constant, true, 0.0).holds);
    assert!(check_monotone_threshold_map(&constant, false, 0.0).holds);
    let bad = vec![(0.0, vec![1.0, 2.0]), (1.0, vec![1.5])];
    let c = check_monotone_threshold_map(&bad, true, 0.0);
    assert_eq!(c.witness, Some(((0.0, 2.0), (1.0, 1.5))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn verdict_invariant_under_rescaling(a in 0.1f64..2.0, b in -1.0f64..1.0, lam in 0.01f64..100.0) {
        let xs = uniform(-1.0, 1.0, 15);
        let ts = uniform(-1.0, 1.0, 15);
        let f = move |x: f64, t: f64| (a * t * x + b * x * x).exp() + 0.5;
        let v1 = check_log_supermodular(&f, &xs, &ts, &opts()).unwrap();
        let v2 = check_log_supermodular(&move |x, t| lam * f(x, t), &xs, &ts, &opts()).unwrap();
        prop_assert_eq!(v1.verdict, v2.verdict);
    }

    #[test]
    fn separable_products_are_modular(p in 0.1f64..3.0, q in -2.0f64..2.0) {
        let xs = uniform(0.1, 2.0, 12);
        let ts = uniform(0.1, 2.0, 12);
        let v = check_log_supermodular(&move |x, t| x.powf(p) * (q * t).exp(), &xs, &ts, &opts()).unwrap();
        prop_assert_eq!(v.verdict, Verdict::Modular);
    }
}
