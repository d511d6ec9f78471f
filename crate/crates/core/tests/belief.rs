mod common;

use nsmdp::harness::{Environment, InventoryEnv};
use nsmdp::inventory::InventoryParams;
use nsmdp::mdp::{Kernel, TabularMdp};
use nsmdp::momdp::{
    belief_grid_solve, belief_grid_solve_finite, build_pomdp, BeliefGridOptions, BeliefPolicy,
    RegimePomdp,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_regimes_only_drift(seed in any::<u64>(), rho in 0.0f64..0.5, b0 in 0.0f64..1.0, steps in 1usize..40) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_mdp(&mut r, 3, 2, true);
        let pomdp = build_pomdp(m.clone(), m, rho).unwrap();
        let mut b = b0;
        for n in 1..=steps {
            b = pomdp.belief_update(b, n % 3, n % 2, (n * 7) % 3).unwrap();
            let expected = 1.0 - (1.0 - b0) * (1.0 - rho).powi(n as i32);
            prop_assert!((b - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn augmented_rows_are_stochastic(seed in any::<u64>(), n in 1usize..5, rho in 0.0f64..1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m0 = common::random_mdp(&mut r, n, 2, false);
        let m1 = common::perturbed(&mut r, &m0);
        let pomdp = build_pomdp(m0.clone(), m1, rho).unwrap();
        for x in 0..pomdp.n_hidden() {
            let (s, _) = pomdp.split(x);
            for &a in m0.kernel().feasible(s) {
                let total: f64 = (0..pomdp.n_hidden()).map(|y| pomdp.transition(x, a, y)).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}

fn toy() -> RegimePomdp {
    // Action 0 is cheap but uninformative; action 1 costs more and
    // separates the regimes.
    let feasible = vec![vec![0, 1], vec![0, 1]];
    let k0 = Kernel::new(2, 2, feasible.clone(), vec![0.5, 0.5, 0.8, 0.2, 0.5, 0.5, 0.8, 0.2]).unwrap();
    let k1 = Kernel::new(2, 2, feasible, vec![0.5, 0.5, 0.2, 0.8, 0.5, 0.5, 0.2, 0.8]).unwrap();
    let m0 = TabularMdp::new(k0, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let m1 = TabularMdp::new(k1, vec![2.0, 1.5, 10.0, 0.5]).unwrap();
    build_pomdp(m0, m1, 0.2).unwrap()
}

/// Exact expected cost of the best history-dependent policy, by expanding
/// every observation history. `act` fixes the decision instead when given.
fn tree(
    p: &RegimePomdp,
    beta: f64,
    s: usize,
    b: f64,
    left: usize,
    step: usize,
    act: Option<&dyn Fn(usize, usize, f64) -> usize>,
) -> f64 {
    if left == 0 {
        return 0.0;
    }
    let (m0, m1) = (p.model(0), p.model(1));
    let q = b + (1.0 - b) * p.rho();
    let value = |a: usize| {
        let mut total = (1.0 - b) * m0.cost(s, a) + b * m1.cost(s, a);
        for t in 0..p.n_states() {
            let (p1, p0) = (q * m1.kernel().prob(s, a, t), (1.0 - q) * m0.kernel().prob(s, a, t));
            if p1 + p0 > 0.0 {
                total += beta * (p1 + p0) * tree(p, beta, t, p1 / (p1 + p0), left - 1, step + 1, act);
            }
        }
        total
    };
    match act {
        Some(f) => value(f(step, s, b)),
        None => m0
            .kernel()
            .feasible(s)
            .iter()
            .map(|&a| value(a))
            .fold(f64::INFINITY, f64::min),
    }
}

#[test]
fn finite_horizon_grid_policy_is_near_optimal() {
    let p = toy();
    let (beta, horizon, g) = (0.9, 5, 101);
    let stages: Vec<BeliefPolicy> = (1..=horizon)
        .map(|h| belief_grid_solve_finite(&p, beta, g, h).unwrap())
        .collect();
    let greedy = |step: usize, s: usize, b: f64| stages[horizon - 1 - step].action(s, b);
    for s in 0..2 {
        for b in [0.0, 0.3, 0.7, 1.0] {
            let best = tree(&p, beta, s, b, horizon, 0, None);
            let ours = tree(&p, beta, s, b, horizon, 0, Some(&greedy));
            assert!(ours >= best - 1e-9);
            assert!(ours <= best * 1.02 + 1e-9, "s {s} b {b}: {ours} vs {best}");
            let approx = stages[horizon - 1].value(s, b);
            assert!((approx - best).abs() <= 0.02 * best.abs() + 1e-9, "{approx} vs {best}");
        }
    }
}

#[test]
fn refinement_shrinks_value_changes() {
    let p = toy();
    let solve = |g: usize| {
        belief_grid_solve(&p, 0.9, BeliefGridOptions { grid_points: g, tol: 1e-10 }).unwrap()
    };
    let probes: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let gap = |a: &BeliefPolicy, b: &BeliefPolicy| {
        (0..2)
            .flat_map(|s| probes.iter().map(move |&x| (s, x)))
            .map(|(s, x)| (a.value(s, x) - b.value(s, x)).abs())
            .fold(0.0, f64::max)
    };
    let grids: Vec<BeliefPolicy> = [11, 21, 41, 81, 161].into_iter().map(solve).collect();
    let gaps: Vec<f64> = grids.windows(2).map(|w| gap(&w[0], &w[1])).collect();
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{gaps:?}");
    }
}

#[test]
fn grid_endpoints_recover_regime_solutions() {
    let env = InventoryEnv::standard(&InventoryParams::standard(5, 50.0)).unwrap();
    let (m0, m1) = (env.model(false).clone(), env.model(true).clone());
    let beta = 0.9;
    let (v1, pi1) = nsmdp::mdp::value_iteration(&m1, beta, 1e-10).unwrap();
    let (v0, pi0) = nsmdp::mdp::value_iteration(&m0, beta, 1e-10).unwrap();
    let frozen = build_pomdp(m0.clone(), m1.clone(), 0.0).unwrap();
    let bp = belief_grid_solve(&frozen, beta, BeliefGridOptions { grid_points: 51, tol: 1e-10 }).unwrap();
    for s in 0..m0.n_states() {
        assert_eq!(bp.action(s, 0.0), pi0.action(s));
        assert_eq!(bp.action(s, 1.0), pi1.action(s));
        assert!((bp.value(s, 0.0) - v0.get(s)).abs() < 1e-7);
        assert!((bp.value(s, 1.0) - v1.get(s)).abs() < 1e-7);
    }
}
