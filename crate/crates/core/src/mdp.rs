//! Finite tabular MDPs with cost-minimising dynamic programming, plus the
//! Kullback-Leibler information numbers that govern detection delay.
//!
//! Costs are the canonical sign convention throughout: solvers minimise.
//! Reward formulations are expressed as negated costs by callers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const DEFAULT_EPS_PROB: f64 = 1e-12;

/// Row-sum tolerance for transition kernels.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Residual tolerance for stationary distributions.
pub const STATIONARY_TOL: f64 = 1e-9;

const MAX_SWEEPS: usize = 5_000_000;

/// One realised step `(s_{n-1}, a_{n-1}, s_n)` of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

impl Transition {
    pub fn new(state: usize, action: usize, next: usize) -> Self {
        Self {
            state,
            action,
            next,
        }
    }
}

/// Transition kernel `T(s, a, s')` over a finite state space with
/// per-state feasible action sets.
///
/// Probabilities are stored densely, indexed `(state, action, next)`.
/// Rows of infeasible actions are all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct Kernel {
    n_states: usize,
    n_actions: usize,
    feasible: Vec<Vec<usize>>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    n_states: usize,
    n_actions: usize,
    feasible: Vec<Vec<usize>>,
    probs: Vec<f64>,
}

impl TryFrom<KernelRepr> for Kernel {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        Kernel::new(r.n_states, r.n_actions, r.feasible, r.probs)
    }
}

impl From<Kernel> for KernelRepr {
    fn from(k: Kernel) -> Self {
        KernelRepr {
            n_states: k.n_states,
            n_actions: k.n_actions,
            feasible: k.feasible,
            probs: k.probs,
        }
    }
}

impl Kernel {
    /// Builds a kernel from a dense probability table, validating every
    /// feasible row.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        feasible: Vec<Vec<usize>>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::model("state and action sets must be nonempty"));
        }
        if feasible.len() != n_states {
            return Err(Error::model(format!(
                "feasible action lists cover {} states, expected {n_states}",
                feasible.len()
            )));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(Error::model(format!(
                "probability table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        for (s, acts) in feasible.iter().enumerate() {
            if acts.is_empty() {
                return Err(Error::model(format!("state {s} has no feasible action")));
            }
            if acts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::model(format!(
                    "feasible actions of state {s} must be strictly increasing"
                )));
            }
            if let Some(&a) = acts.iter().find(|&&a| a >= n_actions) {
                return Err(Error::model(format!(
                    "state {s} lists action {a} outside 0..{n_actions}"
                )));
            }
        }
        let kernel = Self {
            n_states,
            n_actions,
            feasible,
            probs,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    /// Builds a kernel by evaluating `f(s, a, s')` on every feasible triple.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        feasible: Vec<Vec<usize>>,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut probs = vec![0.0; n_states * n_actions * n_states];
        for (s, acts) in feasible.iter().enumerate().take(n_states) {
            for &a in acts.iter().filter(|&&a| a < n_actions) {
                for t in 0..n_states {
                    probs[(s * n_actions + a) * n_states + t] = f(s, a, t);
                }
            }
        }
        Self::new(n_states, n_actions, feasible, probs)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                if self.is_feasible(s, a) {
                    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                        return Err(Error::model(format!(
                            "T({s},{a},.) has invalid entry {p}"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > STOCHASTIC_TOL {
                        return Err(Error::model(format!(
                            "T({s},{a},.) sums to {total}, not 1"
                        )));
                    }
                } else if row.iter().any(|&p| p != 0.0) {
                    return Err(Error::model(format!(
                        "infeasible action {a} at state {s} has nonzero transition mass"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Size of the global action index space.
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn feasible(&self, s: usize) -> &[usize] {
        &self.feasible[s]
    }

    pub fn feasible_sets(&self) -> &[Vec<usize>] {
        &self.feasible
    }

    pub fn is_feasible(&self, s: usize, a: usize) -> bool {
        s < self.n_states && self.feasible[s].binary_search(&a).is_ok()
    }

    /// `T(s, a, .)` as a slice over next states.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.probs[(s * self.n_actions + a) * self.n_states + next]
    }

    /// Same state space, action index space and feasible sets.
    pub fn same_shape(&self, other: &Kernel) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.feasible == other.feasible
    }

    pub(crate) fn check_same_shape(&self, other: &Kernel) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::model(
                "kernels differ in state space, action space or feasible sets",
            ))
        }
    }

    /// Sup-norm distance over feasible entries; used as the separation
    /// between models in a parametric family.
    pub fn sup_distance(&self, other: &Kernel) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max))
    }

    /// Transition matrix of the chain induced by `policy`.
    pub fn induced_matrix(&self, policy: &StationaryPolicy) -> Result<DMatrix<f64>> {
        policy.check_feasible(self)?;
        let n = self.n_states;
        Ok(DMatrix::from_fn(n, n, |s, t| self.prob(s, policy.action(s), t)))
    }

    pub(crate) fn check_transition(&self, t: Transition) -> Result<()> {
        if !self.is_feasible(t.state, t.action) {
            return Err(Error::argument(format!(
                "action {} is not feasible at state {}",
                t.action, t.state
            )));
        }
        if t.next >= self.n_states {
            return Err(Error::argument(format!(
                "next state {} outside 0..{}",
                t.next, self.n_states
            )));
        }
        Ok(())
    }
}

/// Finite MDP: a transition kernel with an expected per-step cost `C(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpRepr", into = "MdpRepr")]
pub struct TabularMdp {
    kernel: Kernel,
    cost: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MdpRepr {
    kernel: Kernel,
    cost: Vec<f64>,
}

impl TryFrom<MdpRepr> for TabularMdp {
    type Error = Error;

    fn try_from(r: MdpRepr) -> Result<Self> {
        TabularMdp::new(r.kernel, r.cost)
    }
}

impl From<TabularMdp> for MdpRepr {
    fn from(m: TabularMdp) -> Self {
        MdpRepr {
            kernel: m.kernel,
            cost: m.cost,
        }
    }
}

impl TabularMdp {
    /// `cost` is indexed `(state, action)`; entries of infeasible actions
    /// are ignored and stored as zero.
    pub fn new(kernel: Kernel, mut cost: Vec<f64>) -> Result<Self> {
        let (n, m) = (kernel.n_states(), kernel.n_actions());
        if cost.len() != n * m {
            return Err(Error::model(format!(
                "cost table has {} entries, expected {}",
                cost.len(),
                n * m
            )));
        }
        for s in 0..n {
            for a in 0..m {
                if kernel.is_feasible(s, a) {
                    if !cost[s * m + a].is_finite() {
                        return Err(Error::model(format!("C({s},{a}) is not finite")));
                    }
                } else {
                    cost[s * m + a] = 0.0;
                }
            }
        }
        Ok(Self { kernel, cost })
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        feasible: Vec<Vec<usize>>,
        transition: impl Fn(usize, usize, usize) -> f64,
        cost: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let kernel = Kernel::from_fn(n_states, n_actions, feasible, transition)?;
        let mut table = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            for &a in kernel.feasible(s) {
                table[s * n_actions + a] = cost(s, a);
            }
        }
        Self::new(kernel, table)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    #[inline]
    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.kernel.n_actions() + a]
    }

    pub fn max_abs_cost(&self) -> f64 {
        self.cost.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `C(s, a) + beta * sum_s' T(s, a, s') v(s')`.
    #[inline]
    pub fn q_value(&self, v: &[f64], beta: f64, s: usize, a: usize) -> f64 {
        let future: f64 = self
            .kernel
            .row(s, a)
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum();
        self.cost(s, a) + beta * future
    }
}

/// Deterministic stationary policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationaryPolicy {
    actions: Vec<usize>,
}

impl StationaryPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    /// Policy that picks the lowest feasible action everywhere.
    pub fn first_feasible(kernel: &Kernel) -> Self {
        Self::new((0..kernel.n_states()).map(|s| kernel.feasible(s)[0]).collect())
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn check_feasible(&self, kernel: &Kernel) -> Result<()> {
        if self.actions.len() != kernel.n_states() {
            return Err(Error::argument(format!(
                "policy covers {} states, model has {}",
                self.actions.len(),
                kernel.n_states()
            )));
        }
        for (s, &a) in self.actions.iter().enumerate() {
            if !kernel.is_feasible(s, a) {
                return Err(Error::argument(format!(
                    "policy action {a} is infeasible at state {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Discounted expected cost-to-go per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    #[inline]
    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_diff(&self.values, &other.values)
    }
}

/// Result of [`value_iteration_traced`]: the value, its greedy policy and
/// the sup-norm difference between successive iterates.
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub value: ValueFunction,
    pub policy: StationaryPolicy,
    pub deltas: Vec<f64>,
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_discount(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::argument(format!("discount {beta} outside [0, 1)")));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::argument(format!("tolerance {tol} must be positive")));
    }
    Ok(())
}

/// Cost-minimising action and its Q-value; ties go to the lowest index.
#[inline]
fn best_action(mdp: &TabularMdp, v: &[f64], beta: f64, s: usize) -> (usize, f64) {
    let acts = mdp.kernel.feasible(s);
    let mut best = (acts[0], mdp.q_value(v, beta, s, acts[0]));
    for &a in &acts[1..] {
        let q = mdp.q_value(v, beta, s, a);
        if q < best.1 {
            best = (a, q);
        }
    }
    best
}

/// Greedy (cost-minimising) policy with respect to `v`.
pub fn greedy_policy(mdp: &TabularMdp, v: &ValueFunction, beta: f64) -> StationaryPolicy {
    StationaryPolicy::new(
        (0..mdp.n_states())
            .map(|s| best_action(mdp, &v.values, beta, s).0)
            .collect(),
    )
}

/// `max_s |V(s) - min_a [C(s,a) + beta * sum T V]|`.
pub fn bellman_residual(mdp: &TabularMdp, v: &ValueFunction, beta: f64) -> f64 {
    (0..mdp.n_states())
        .map(|s| (v.values[s] - best_action(mdp, &v.values, beta, s).1).abs())
        .fold(0.0, f64::max)
}

/// Discounted value iteration; see [`value_iteration_traced`].
pub fn value_iteration(
    mdp: &TabularMdp,
    beta: f64,
    tol: f64,
) -> Result<(ValueFunction, StationaryPolicy)> {
    let vi = value_iteration_traced(mdp, beta, tol)?;
    Ok((vi.value, vi.policy))
}

/// Discounted value iteration from `V = 0`, stopped once the Bellman
/// residual of the returned iterate is at most `tol`.
pub fn value_iteration_traced(mdp: &TabularMdp, beta: f64, tol: f64) -> Result<ValueIteration> {
    check_discount(beta)?;
    check_tol(tol)?;
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut deltas = Vec::new();
    loop {
        for (s, slot) in next.iter_mut().enumerate() {
            *slot = best_action(mdp, &v, beta, s).1;
        }
        let delta = sup_diff(&next, &v);
        deltas.push(delta);
        std::mem::swap(&mut v, &mut next);
        // residual(v_new) <= beta * |v_new - v_old|
        if beta * delta <= tol {
            break;
        }
        if deltas.len() >= MAX_SWEEPS {
            return Err(Error::numerical("value iteration did not converge", beta * delta));
        }
    }
    let value = ValueFunction::new(v);
    let policy = greedy_policy(mdp, &value, beta);
    Ok(ValueIteration {
        value,
        policy,
        deltas,
    })
}

/// Iterative evaluation of a stationary policy to a fixed point of its
/// Bellman operator within `tol`.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    beta: f64,
    tol: f64,
) -> Result<ValueFunction> {
    check_discount(beta)?;
    check_tol(tol)?;
    policy.check_feasible(mdp.kernel())?;
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut sweeps = 0usize;
    loop {
        for (s, slot) in next.iter_mut().enumerate() {
            *slot = mdp.q_value(&v, beta, s, policy.action(s));
        }
        let delta = sup_diff(&next, &v);
        std::mem::swap(&mut v, &mut next);
        sweeps += 1;
        if beta * delta <= tol {
            return Ok(ValueFunction::new(v));
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::numerical("policy evaluation did not converge", beta * delta));
        }
    }
}

/// Unique stationary distribution of the chain `kernel` induces under
/// `policy`.
///
/// The null space of `P^T - I` is computed by SVD; a second near-zero
/// singular value means the chain has more than one recurrent class.
pub fn stationary_distribution(kernel: &Kernel, policy: &StationaryPolicy) -> Result<Vec<f64>> {
    let p = kernel.induced_matrix(policy)?;
    let n = p.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let a = p.transpose() - DMatrix::identity(n, n);
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::numerical("SVD did not produce singular vectors", f64::NAN))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let second = svd.singular_values[order[1]];
    if second < 1e-10 {
        return Err(Error::numerical(
            "policy-induced chain has more than one recurrent class",
            second,
        ));
    }
    let row = v_t.row(order[0]);
    let total: f64 = row.iter().sum();
    if total.abs() < 1e-300 {
        return Err(Error::numerical("null vector has zero mass", total));
    }
    let mut mu: Vec<f64> = row.iter().map(|x| x / total).collect();
    if let Some(&neg) = mu.iter().find(|&&x| x < -STATIONARY_TOL) {
        return Err(Error::numerical("stationary vector has negative mass", neg));
    }
    for x in mu.iter_mut() {
        *x = x.max(0.0);
    }
    let norm: f64 = mu.iter().sum();
    for x in mu.iter_mut() {
        *x /= norm;
    }
    let residual = (0..n)
        .map(|t| ((0..n).map(|s| mu[s] * p[(s, t)]).sum::<f64>() - mu[t]).abs())
        .fold(0.0, f64::max);
    if residual > STATIONARY_TOL {
        return Err(Error::numerical(
            "stationary distribution residual above tolerance",
            residual,
        ));
    }
    Ok(mu)
}

/// `sum p ln(p / q)` with the default log floor.
pub fn kl_step(p: &[f64], q: &[f64]) -> Result<f64> {
    kl_divergence(p, q, DEFAULT_EPS_PROB)
}

/// `sum p ln(max(p, eps) / max(q, eps))` with `0 ln 0 = 0`.
///
/// Flooring applies only inside the logarithm; neither vector is
/// renormalised.
pub fn kl_divergence(p: &[f64], q: &[f64], eps_prob: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::argument(format!(
            "distributions have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if let Some(x) = p.iter().chain(q).find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::argument(format!("probability entry {x} is negative or not finite")));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.max(eps_prob).ln() - qi.max(eps_prob).ln()))
        .sum();
    Ok(kl.max(0.0))
}

/// Per-(state, action) one-step divergence `KL(T_1(s,a,.) || T_0(s,a,.))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlTable {
    n_actions: usize,
    values: Vec<f64>,
}

impl KlTable {
    pub fn new(kernel0: &Kernel, kernel1: &Kernel, eps_prob: f64) -> Result<Self> {
        kernel0.check_same_shape(kernel1)?;
        let (n, m) = (kernel0.n_states(), kernel0.n_actions());
        let mut values = vec![0.0; n * m];
        for s in 0..n {
            for &a in kernel0.feasible(s) {
                values[s * m + a] = kl_divergence(kernel1.row(s, a), kernel0.row(s, a), eps_prob)?;
            }
        }
        Ok(Self {
            n_actions: m,
            values,
        })
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }
}

/// Ergodic information number `I_pi`: the stationary average, under the
/// post-change kernel, of the one-step divergence along `policy`.
pub fn info_number(kernel0: &Kernel, kernel1: &Kernel, policy: &StationaryPolicy) -> Result<f64> {
    info_number_floored(kernel0, kernel1, policy, DEFAULT_EPS_PROB)
}

pub fn info_number_floored(
    kernel0: &Kernel,
    kernel1: &Kernel,
    policy: &StationaryPolicy,
    eps_prob: f64,
) -> Result<f64> {
    let table = KlTable::new(kernel0, kernel1, eps_prob)?;
    let mu = stationary_distribution(kernel1, policy)?;
    Ok(mu
        .iter()
        .enumerate()
        .map(|(s, m)| m * table.get(s, policy.action(s)))
        .sum())
}

/// Options for the relative value iteration behind [`max_info_number`].
#[derive(Debug, Clone, Copy)]
pub struct RviOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub eps_prob: f64,
    /// Aperiodicity transform weight in `(0, 1]`.
    pub aperiodicity: f64,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 1_000_000,
            eps_prob: DEFAULT_EPS_PROB,
            aperiodicity: 0.5,
        }
    }
}

/// `I_max = max_pi I_pi` over stationary deterministic policies, with a
/// maximising policy.
pub fn max_info_number(kernel0: &Kernel, kernel1: &Kernel) -> Result<(f64, StationaryPolicy)> {
    max_info_number_with(kernel0, kernel1, RviOptions::default())
}

/// Relative value iteration on the average-reward MDP with dynamics
/// `kernel1` and reward `KL(T_1(s,a,.) || T_0(s,a,.))`.
///
/// Iterates on the transformed chain `tau P + (1 - tau) I`, whose optimal
/// gain is `tau` times the original and whose optimal policies coincide.
pub fn max_info_number_with(
    kernel0: &Kernel,
    kernel1: &Kernel,
    opts: RviOptions,
) -> Result<(f64, StationaryPolicy)> {
    check_tol(opts.tol)?;
    let tau = opts.aperiodicity;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::argument(format!("aperiodicity weight {tau} outside (0, 1]")));
    }
    let reward = KlTable::new(kernel0, kernel1, opts.eps_prob)?;
    let n = kernel1.n_states();
    let greedy = |h: &[f64], s: usize| -> (usize, f64) {
        let mut best: Option<(usize, f64)> = None;
        for &a in kernel1.feasible(s) {
            let future: f64 = kernel1.row(s, a).iter().zip(h).map(|(p, x)| p * x).sum();
            let q = reward.get(s, a) + future;
            if best.map_or(true, |(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best.expect("feasible sets are nonempty")
    };
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut span = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let t = tau * greedy(&h, s).1 + (1.0 - tau) * h[s];
            let d = t - h[s];
            lo = lo.min(d);
            hi = hi.max(d);
            next[s] = t;
        }
        span = (hi - lo) / tau;
        if span <= opts.tol {
            let gain = 0.5 * (hi + lo) / tau;
            let policy = StationaryPolicy::new((0..n).map(|s| greedy(&h, s).0).collect());
            return Ok((gain.max(0.0), policy));
        }
        let anchor = next[0];
        for (dst, src) in h.iter_mut().zip(&next) {
            *dst = src - anchor;
        }
    }
    Err(Error::numerical(
        "relative value iteration did not converge",
        span,
    ))
}
