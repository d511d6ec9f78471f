//! Two-regime POMDP (mode-observable MDP) and a belief-grid solver.
//!
//! The hidden state is `x = (s, theta)` with `theta = 0` before the change
//! and `theta = 1` after. The physical state is observed exactly, so the
//! belief collapses to the scalar `b = P(theta = 1 | history)`.
//!
//! Regime dynamics: from `theta = 0` the regime jumps to `1` with
//! probability `rho` at every step; `theta = 1` is absorbing. The transition
//! into `(s', theta')` uses the kernel of the *next* regime:
//! `T~((s', theta') | (s, theta), a) = T_theta'(s, a, s') F(theta' | theta)`.
//! The stage cost is that of the current regime.

use std::sync::Arc;

use rayon::prelude::*;

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::mdp::{Kernel, TabularMdp, Transition};

pub const DEFAULT_GRID_POINTS: usize = 201;

const MAX_SWEEPS: usize = 1_000_000;

/// Augmented POMDP over `(s, theta)`.
#[derive(Debug, Clone)]
pub struct RegimePomdp {
    models: [TabularMdp; 2],
    rho: f64,
}

/// Builds the augmented POMDP from the pre- and post-change models.
pub fn build_pomdp(pre: TabularMdp, post: TabularMdp, rho: f64) -> Result<RegimePomdp> {
    RegimePomdp::new(pre, post, rho)
}

impl RegimePomdp {
    pub fn new(pre: TabularMdp, post: TabularMdp, rho: f64) -> Result<Self> {
        pre.kernel().check_same_shape(post.kernel())?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::argument(format!("rho = {rho} outside [0, 1]")));
        }
        Ok(Self {
            models: [pre, post],
            rho,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn model(&self, theta: usize) -> &TabularMdp {
        &self.models[theta]
    }

    pub fn n_states(&self) -> usize {
        self.models[0].n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.models[0].kernel().n_actions()
    }

    pub fn n_hidden(&self) -> usize {
        2 * self.n_states()
    }

    /// Index of `(s, theta)` in the augmented space.
    pub fn hidden_index(&self, s: usize, theta: usize) -> usize {
        theta * self.n_states() + s
    }

    /// `(s, theta)` of an augmented index.
    pub fn split(&self, x: usize) -> (usize, usize) {
        (x % self.n_states(), x / self.n_states())
    }

    /// Regime kernel `F(theta' | theta)`.
    pub fn regime_transition(&self, theta: usize, theta_next: usize) -> f64 {
        match (theta, theta_next) {
            (0, 0) => 1.0 - self.rho,
            (0, 1) => self.rho,
            (1, 1) => 1.0,
            _ => 0.0,
        }
    }

    /// `T~(x' | x, a)`.
    pub fn transition(&self, x: usize, a: usize, x_next: usize) -> f64 {
        let (s, theta) = self.split(x);
        let (t, theta_next) = self.split(x_next);
        self.models[theta_next].kernel().prob(s, a, t) * self.regime_transition(theta, theta_next)
    }

    /// `omega(o | x', a) = 1{o = s'}`.
    pub fn observation(&self, o: usize, x_next: usize, _a: usize) -> f64 {
        if self.split(x_next).0 == o {
            1.0
        } else {
            0.0
        }
    }

    /// `R~(x, a) = C_theta(s, a)`.
    pub fn cost(&self, x: usize, a: usize) -> f64 {
        let (s, theta) = self.split(x);
        self.models[theta].cost(s, a)
    }

    /// Generic Bayes filter over the augmented space, starting from the
    /// belief that puts mass `1 - b` on `(s, 0)` and `b` on `(s, 1)`.
    /// Returns the posterior mass on `theta = 1`.
    pub fn filter(&self, b: f64, s: usize, a: usize, s_next: usize) -> Result<f64> {
        check_belief(b)?;
        let prior = [(self.hidden_index(s, 0), 1.0 - b), (self.hidden_index(s, 1), b)];
        let mut post = vec![0.0; self.n_hidden()];
        for (x_next, slot) in post.iter_mut().enumerate() {
            let obs = self.observation(s_next, x_next, a);
            if obs == 0.0 {
                continue;
            }
            *slot = prior
                .iter()
                .map(|&(x, w)| w * self.transition(x, a, x_next))
                .sum::<f64>()
                * obs;
        }
        let total: f64 = post.iter().sum();
        if total <= 0.0 {
            return Err(Error::numerical(
                format!("transition ({s}, {a}, {s_next}) has zero probability under both regimes"),
                0.0,
            ));
        }
        let n = self.n_states();
        Ok(post[n..].iter().sum::<f64>() / total)
    }

    /// Closed-form belief update; see [`belief_update`].
    pub fn belief_update(&self, b: f64, s: usize, a: usize, s_next: usize) -> Result<f64> {
        belief_update(
            b,
            s,
            a,
            s_next,
            self.models[0].kernel(),
            self.models[1].kernel(),
            self.rho,
        )
    }

    /// Probability that the next transition is drawn from the post-change
    /// kernel: `b + (1 - b) rho`.
    pub fn predicted(&self, b: f64) -> f64 {
        b + (1.0 - b) * self.rho
    }
}

fn check_belief(b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::argument(format!("belief {b} outside [0, 1]")));
    }
    Ok(())
}

/// `b' = q T_1 / (q T_1 + (1 - q) T_0)` with `q = b + (1 - b) rho` and
/// `T_i = T_i(s, a, s')`.
///
/// When both likelihoods vanish the transition is impossible under the
/// model and a numerical error is returned. When only `T_0` vanishes the
/// update is exactly `1`.
pub fn belief_update(
    b: f64,
    s: usize,
    a: usize,
    s_next: usize,
    kernel0: &Kernel,
    kernel1: &Kernel,
    rho: f64,
) -> Result<f64> {
    check_belief(b)?;
    kernel0.check_transition(Transition::new(s, a, s_next))?;
    let q = b + (1.0 - b) * rho;
    let p1 = q * kernel1.prob(s, a, s_next);
    let p0 = (1.0 - q) * kernel0.prob(s, a, s_next);
    let total = p1 + p0;
    if total <= 0.0 {
        if kernel1.prob(s, a, s_next) > 0.0 {
            return Ok(1.0);
        }
        return Err(Error::numerical(
            format!("transition ({s}, {a}, {s_next}) has zero probability under the belief"),
            0.0,
        ));
    }
    Ok(p1 / total)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BeliefGridOptions {
    /// Number of equally spaced belief points on `[0, 1]`, at least 2.
    pub grid_points: usize,
    /// Sup-norm Bellman residual at which iteration stops.
    pub tol: f64,
}

impl Default for BeliefGridOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            tol: 1e-6,
        }
    }
}

/// Belief-grid value function and greedy actions, indexed `(s, grid point)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BeliefPolicy {
    n_states: usize,
    grid_points: usize,
    actions: Vec<usize>,
    values: Vec<f64>,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
    pub sweeps: usize,
}

impl BeliefPolicy {
    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn grid(&self) -> Vec<f64> {
        grid(self.grid_points)
    }

    fn nearest(&self, b: f64) -> usize {
        let g = self.grid_points - 1;
        ((b.clamp(0.0, 1.0) * g as f64).round() as usize).min(g)
    }

    /// Action at the grid point nearest to `b`.
    pub fn action(&self, s: usize, b: f64) -> usize {
        self.actions[s * self.grid_points + self.nearest(b)]
    }

    /// Value at `b` by linear interpolation between grid points.
    pub fn value(&self, s: usize, b: f64) -> f64 {
        let (lo, w) = locate(b, self.grid_points);
        let row = &self.values[s * self.grid_points..(s + 1) * self.grid_points];
        if w == 0.0 {
            row[lo]
        } else {
            (1.0 - w) * row[lo] + w * row[lo + 1]
        }
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn grid(points: usize) -> Vec<f64> {
    let g = (points - 1) as f64;
    (0..points).map(|i| i as f64 / g).collect()
}

/// Lower grid index and interpolation weight of `b`.
fn locate(b: f64, points: usize) -> (usize, f64) {
    let g = (points - 1) as f64;
    let pos = b.clamp(0.0, 1.0) * g;
    let lo = (pos.floor() as usize).min(points - 2);
    (lo, pos - lo as f64)
}

/// Successor `(s', probability, lower grid index, weight)`.
#[derive(Debug, Clone, Copy)]
struct Successor {
    next: usize,
    prob: f64,
    lo: usize,
    w: f64,
}

/// Precomputed Bellman backup for one `(s, b, a)`.
struct Backup {
    action: usize,
    cost: f64,
    start: usize,
    end: usize,
}

struct BackupTable {
    points: usize,
    /// Per cell `(s, g)`, a range into `backups`.
    cells: Vec<(usize, usize)>,
    backups: Vec<Backup>,
    successors: Vec<Successor>,
}

impl BackupTable {
    fn build(pomdp: &RegimePomdp, points: usize) -> Result<Self> {
        let n = pomdp.n_states();
        let (k0, k1) = (pomdp.model(0).kernel(), pomdp.model(1).kernel());
        let beliefs = grid(points);
        let mut cells = Vec::with_capacity(n * points);
        let mut backups = Vec::new();
        let mut successors = Vec::new();
        for s in 0..n {
            for &b in &beliefs {
                let first = backups.len();
                let q = pomdp.predicted(b);
                for &a in k0.feasible(s) {
                    let start = successors.len();
                    for t in 0..n {
                        let prob = q * k1.prob(s, a, t) + (1.0 - q) * k0.prob(s, a, t);
                        if prob <= 0.0 {
                            continue;
                        }
                        let b_next = belief_update(b, s, a, t, k0, k1, pomdp.rho)?;
                        let (lo, w) = locate(b_next, points);
                        successors.push(Successor {
                            next: t,
                            prob,
                            lo,
                            w,
                        });
                    }
                    backups.push(Backup {
                        action: a,
                        cost: b * pomdp.model(1).cost(s, a) + (1.0 - b) * pomdp.model(0).cost(s, a),
                        start,
                        end: successors.len(),
                    });
                }
                cells.push((first, backups.len()));
            }
        }
        Ok(Self {
            points,
            cells,
            backups,
            successors,
        })
    }

    /// One Bellman sweep from `v` into `out` and `actions`.
    fn sweep(&self, v: &[f64], beta: f64, out: &mut [f64], actions: &mut [usize]) {
        out.par_iter_mut()
            .zip(actions.par_iter_mut())
            .enumerate()
            .for_each(|(cell, (slot, act))| {
                let (first, last) = self.cells[cell];
                let mut best = (usize::MAX, f64::INFINITY);
                for bk in &self.backups[first..last] {
                    let mut future = 0.0;
                    for sc in &self.successors[bk.start..bk.end] {
                        let base = sc.next * self.points + sc.lo;
                        let val = if sc.w == 0.0 {
                            v[base]
                        } else {
                            (1.0 - sc.w) * v[base] + sc.w * v[base + 1]
                        };
                        future += sc.prob * val;
                    }
                    let q = bk.cost + beta * future;
                    if q < best.1 {
                        best = (bk.action, q);
                    }
                }
                *slot = best.1;
                *act = best.0;
            });
    }
}

fn check_solver_args(beta: f64, points: usize) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::argument(format!("discount {beta} outside [0, 1)")));
    }
    if points < 2 {
        return Err(Error::argument("belief grid needs at least 2 points"));
    }
    Ok(())
}

/// Infinite-horizon discounted value iteration on the belief grid, with
/// linear interpolation of the value at off-grid successor beliefs.
pub fn belief_grid_solve(
    pomdp: &RegimePomdp,
    beta: f64,
    options: BeliefGridOptions,
) -> Result<BeliefPolicy> {
    check_solver_args(beta, options.grid_points)?;
    if !(options.tol > 0.0) {
        return Err(Error::argument("tolerance must be positive"));
    }
    let table = BackupTable::build(pomdp, options.grid_points)?;
    let cells = table.cells.len();
    let mut v = vec![0.0; cells];
    let mut next = vec![0.0; cells];
    let mut actions = vec![0; cells];
    let mut sweeps = 0;
    loop {
        table.sweep(&v, beta, &mut next, &mut actions);
        sweeps += 1;
        let delta = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut v, &mut next);
        if delta <= options.tol {
            // greedy actions with respect to the returned values
            table.sweep(&v, beta, &mut next, &mut actions);
            return Ok(BeliefPolicy {
                n_states: pomdp.n_states(),
                grid_points: options.grid_points,
                actions,
                values: v,
                residual: delta,
                sweeps,
            });
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::numerical("belief value iteration did not converge", delta));
        }
    }
}

/// `horizon`-step discounted problem with zero terminal cost. The returned
/// actions are those of the first step.
pub fn belief_grid_solve_finite(
    pomdp: &RegimePomdp,
    beta: f64,
    grid_points: usize,
    horizon: usize,
) -> Result<BeliefPolicy> {
    check_solver_args(beta, grid_points)?;
    let table = BackupTable::build(pomdp, grid_points)?;
    let cells = table.cells.len();
    let mut v = vec![0.0; cells];
    let mut next = vec![0.0; cells];
    let mut actions = vec![0; cells];
    for _ in 0..horizon {
        table.sweep(&v, beta, &mut next, &mut actions);
        std::mem::swap(&mut v, &mut next);
    }
    Ok(BeliefPolicy {
        n_states: pomdp.n_states(),
        grid_points,
        actions,
        values: v,
        residual: 0.0,
        sweeps: horizon,
    })
}

/// Runtime controller that filters the belief and looks up the grid policy.
///
/// It has no absorbing switch; its switch time is reported as the first
/// time the belief exceeds one half.
#[derive(Debug, Clone)]
pub struct MomdpController {
    pomdp: Arc<RegimePomdp>,
    policy: Arc<BeliefPolicy>,
    belief: f64,
    crossed_at: Option<usize>,
}

impl MomdpController {
    pub fn new(pomdp: Arc<RegimePomdp>, policy: Arc<BeliefPolicy>) -> Self {
        Self {
            pomdp,
            policy,
            belief: 0.0,
            crossed_at: None,
        }
    }

    pub fn belief(&self) -> f64 {
        self.belief
    }
}

/// Updates the belief with the realised transition, then acts greedily on
/// the nearest grid point. A transition that is impossible under both
/// regimes leaves only the prior drift `b + (1 - b) rho`.
pub fn momdp_controller_step(
    ctrl: &mut MomdpController,
    s: usize,
    feedback: Option<Transition>,
    now: usize,
) -> Result<usize> {
    if let Some(t) = feedback {
        ctrl.belief = match ctrl.pomdp.belief_update(ctrl.belief, t.state, t.action, t.next) {
            Ok(b) => b,
            Err(Error::Numerical { .. }) => ctrl.pomdp.predicted(ctrl.belief),
            Err(e) => return Err(e),
        };
    }
    if ctrl.crossed_at.is_none() && ctrl.belief > 0.5 {
        ctrl.crossed_at = Some(now);
    }
    Ok(ctrl.policy.action(s, ctrl.belief))
}

impl Controller for MomdpController {
    fn act(&mut self, state: usize, feedback: Option<Transition>, now: usize) -> Result<usize> {
        momdp_controller_step(self, state, feedback, now)
    }

    fn switch_time(&self) -> Option<usize> {
        self.crossed_at
    }

    fn statistic(&self) -> Option<f64> {
        Some(self.belief)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::tests::random_mdp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(seed: u64, n: usize, m: usize) -> (TabularMdp, TabularMdp) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_mdp(&mut rng, n, m), random_mdp(&mut rng, n, m))
    }

    #[test]
    fn augmented_kernel_is_stochastic() {
        let (a, b) = pair(1, 3, 2);
        let p = build_pomdp(a, b, 0.2).unwrap();
        for x in 0..p.n_hidden() {
            for act in 0..2 {
                let total: f64 = (0..p.n_hidden()).map(|y| p.transition(x, act, y)).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(p.regime_transition(1, 0), 0.0);
        assert_eq!(p.regime_transition(1, 1), 1.0);
    }

    #[test]
    fn closed_form_matches_generic_filter() {
        let (a, b) = pair(2, 4, 3);
        let p = build_pomdp(a, b, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let bel: f64 = rng.gen();
            let (s, act, t) = (rng.gen_range(0..4), rng.gen_range(0..3), rng.gen_range(0..4));
            let closed = p.belief_update(bel, s, act, t).unwrap();
            let generic = p.filter(bel, s, act, t).unwrap();
            assert!((closed - generic).abs() < 1e-12);
        }
    }

    #[test]
    fn belief_update_edges() {
        let (a, b) = pair(5, 2, 2);
        let p = build_pomdp(a.clone(), b.clone(), 0.0).unwrap();
        // rho = 0 and b = 0: nothing can move the belief
        assert_eq!(p.belief_update(0.0, 0, 0, 1).unwrap(), 0.0);
        assert_eq!(p.belief_update(1.0, 0, 0, 1).unwrap(), 1.0);
        assert!(p.belief_update(1.5, 0, 0, 1).is_err());
        // a transition impossible before the change reveals it
        let k0 = Kernel::new(2, 1, vec![vec![0]; 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let k1 = Kernel::new(2, 1, vec![vec![0]; 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(belief_update(0.3, 0, 0, 1, &k0, &k1, 0.1).unwrap(), 1.0);
        assert_eq!(belief_update(0.0, 0, 0, 1, &k0, &k1, 0.0).unwrap(), 1.0);
        let k2 = k0.clone();
        assert!(matches!(
            belief_update(0.3, 0, 0, 1, &k0, &k2, 0.1),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn identical_regimes_reduce_to_plain_mdp() {
        let (a, _) = pair(7, 3, 2);
        let p = build_pomdp(a.clone(), a.clone(), 0.1).unwrap();
        let sol = belief_grid_solve(
            &p,
            0.9,
            BeliefGridOptions {
                grid_points: 11,
                tol: 1e-10,
            },
        )
        .unwrap();
        let (v, pi) = crate::mdp::value_iteration(&a, 0.9, 1e-10).unwrap();
        for s in 0..3 {
            for b in [0.0, 0.33, 1.0] {
                assert!((sol.value(s, b) - v.get(s)).abs() < 1e-7);
                assert_eq!(sol.action(s, b), pi.action(s));
            }
        }
    }

    #[test]
    fn certain_post_regime_matches_post_mdp() {
        let (a, b) = pair(8, 3, 2);
        let p = build_pomdp(a, b.clone(), 0.3).unwrap();
        let sol = belief_grid_solve(
            &p,
            0.8,
            BeliefGridOptions {
                grid_points: 21,
                tol: 1e-10,
            },
        )
        .unwrap();
        let (v, _) = crate::mdp::value_iteration(&b, 0.8, 1e-10).unwrap();
        for s in 0..3 {
            assert!((sol.value(s, 1.0) - v.get(s)).abs() < 1e-7);
        }
    }

    #[test]
    fn solver_argument_errors() {
        let (a, b) = pair(9, 2, 2);
        let p = build_pomdp(a, b, 0.1).unwrap();
        let bad = BeliefGridOptions {
            grid_points: 1,
            tol: 1e-6,
        };
        assert!(belief_grid_solve(&p, 0.9, bad).is_err());
        assert!(belief_grid_solve(&p, 1.0, BeliefGridOptions::default()).is_err());
    }

    #[test]
    fn controller_drifts_on_impossible_transition() {
        let k0 = Kernel::new(2, 1, vec![vec![0]; 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let m0 = TabularMdp::new(k0.clone(), vec![0.0, 0.0]).unwrap();
        let p = Arc::new(build_pomdp(m0.clone(), m0, 0.25).unwrap());
        let sol = Arc::new(
            belief_grid_solve(
                &p,
                0.5,
                BeliefGridOptions {
                    grid_points: 5,
                    tol: 1e-9,
                },
            )
            .unwrap(),
        );
        let mut c = MomdpController::new(p, sol);
        momdp_controller_step(&mut c, 1, Some(Transition::new(0, 0, 1)), 1).unwrap();
        assert!((c.belief() - 0.25).abs() < 1e-15);
    }
}
