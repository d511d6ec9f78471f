//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers under test.

#![allow(dead_code)]

use nsmdp::mdp::{Kernel, StationaryPolicy, TabularMdp};
use rand::Rng;

/// Dense random MDP. With `full` every action is feasible in every state;
/// otherwise each state gets a random nonempty subset.
pub fn random_mdp(rng: &mut impl Rng, n: usize, m: usize, full: bool) -> TabularMdp {
    let feasible: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            if full {
                return (0..m).collect();
            }
            let mut acts: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.6)).collect();
            if acts.is_empty() {
                acts.push(rng.gen_range(0..m));
            }
            acts
        })
        .collect();
    let mut probs = vec![0.0; n * m * n];
    let mut cost = vec![0.0; n * m];
    for s in 0..n {
        for &a in &feasible[s] {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = row.iter().sum();
            for (j, p) in row.iter().enumerate() {
                probs[(s * m + a) * n + j] = p / total;
            }
            cost[s * m + a] = rng.gen_range(0.0..10.0);
        }
    }
    let kernel = Kernel::new(n, m, feasible, probs).unwrap();
    TabularMdp::new(kernel, cost).unwrap()
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    x
}

/// Exact discounted value of a stationary policy: `(I - beta P) v = c`.
pub fn exact_value(mdp: &TabularMdp, policy: &[usize], beta: f64) -> Vec<f64> {
    let n = mdp.n_states();
    let k = mdp.kernel();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..n)
                .map(|j| f64::from(u8::from(s == j)) - beta * k.prob(s, policy[s], j))
                .collect()
        })
        .collect();
    let c = (0..n).map(|s| mdp.cost(s, policy[s])).collect();
    solve_dense(a, c)
}

/// Stationary law of an irreducible chain: `mu P = mu`, `sum mu = 1`.
pub fn stationary(kernel: &Kernel, policy: &[usize]) -> Vec<f64> {
    let n = kernel.n_states();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for j in 0..n - 1 {
        for i in 0..n {
            a[j][i] = kernel.prob(i, policy[i], j) - f64::from(u8::from(i == j));
        }
    }
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    solve_dense(a, b)
}

/// `KL(p || q)` by the definition, for strictly positive `q`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| x * (x / y).ln())
        .sum()
}

/// Long-run average KL of the post-change kernel against the pre-change
/// one along `policy`.
pub fn info_oracle(k0: &Kernel, k1: &Kernel, policy: &[usize]) -> f64 {
    let mu = stationary(k1, policy);
    (0..k1.n_states())
        .map(|s| mu[s] * kl(k1.row(s, policy[s]), k0.row(s, policy[s])))
        .sum()
}

/// Every deterministic stationary policy of `kernel`.
pub fn all_policies(kernel: &Kernel) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for s in 0..kernel.n_states() {
        out = out
            .into_iter()
            .flat_map(|p| {
                kernel.feasible(s).iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn policy(actions: &[usize]) -> StationaryPolicy {
    StationaryPolicy::new(actions.to_vec())
}

/// Copy of `mdp` with the same feasible sets and fresh random transitions.
pub fn perturbed(rng: &mut impl Rng, mdp: &TabularMdp) -> TabularMdp {
    let k = mdp.kernel();
    let (n, m) = (k.n_states(), k.n_actions());
    let mut probs = vec![0.0; n * m * n];
    let mut cost = vec![0.0; n * m];
    for s in 0..n {
        for &a in k.feasible(s) {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = row.iter().sum();
            for (j, p) in row.iter().enumerate() {
                probs[(s * m + a) * n + j] = p / total;
            }
            cost[s * m + a] = rng.gen_range(0.0..10.0);
        }
    }
    let kernel = Kernel::new(n, m, k.feasible_sets().to_vec(), probs).unwrap();
    TabularMdp::new(kernel, cost).unwrap()
}
