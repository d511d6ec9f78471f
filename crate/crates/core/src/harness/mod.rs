//! Monte Carlo evaluation of controllers on a two-regime environment.
//!
//! Every run draws its randomness from three independent streams derived
//! from `(master seed, run id)`: the change point, one uniform per step for
//! the environment, and the controller's own randomness. Two policies
//! evaluated with the same master seed therefore see the same change
//! points and the same demand uniforms (common random numbers).

mod report;

pub use report::{
    format_float, write_frontier_csv, write_runs_csv, write_summary_csv, FRONTIER_HEADER,
    RUNS_HEADER, SUMMARY_HEADER,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerTemplate, Thresholds};
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::inventory::{
    build_from_pmf, demand_pmf, sample_change_point, ChangePoint, ChangeSpec, DemandKind,
    DemandPmf, InventoryParams,
};
use crate::mdp::{TabularMdp, Transition};
use crate::momdp::{BeliefPolicy, MomdpController, RegimePomdp};

const STREAM_CHANGE: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_CONTROLLER: u64 = 2;

/// A two-regime simulator. Transitions are driven by one uniform draw per
/// step so that paired runs share their randomness.
pub trait Environment: Sync {
    /// Model of the pre-change (`post = false`) or post-change regime.
    fn model(&self, post: bool) -> &TabularMdp;

    fn initial_state(&self) -> usize {
        0
    }

    /// Next state from `s` under action `a`, given a uniform `u` in `[0, 1)`.
    fn sample_next(&self, post: bool, s: usize, a: usize, u: f64) -> usize;
}

/// Inventory with independent demand regimes before and after the change.
#[derive(Debug, Clone)]
pub struct InventoryEnv {
    models: [TabularMdp; 2],
    demand: [DemandPmf; 2],
    initial_state: usize,
}

impl InventoryEnv {
    pub fn new(
        params: &InventoryParams,
        pre: DemandKind,
        post: DemandKind,
        initial_state: usize,
    ) -> Result<Self> {
        params.validate()?;
        if initial_state > params.capacity {
            return Err(Error::argument(format!(
                "initial state {initial_state} exceeds capacity {}",
                params.capacity
            )));
        }
        let demand = [demand_pmf(pre)?, demand_pmf(post)?];
        let models = [
            build_from_pmf(params, &demand[0])?,
            build_from_pmf(params, &demand[1])?,
        ];
        Ok(Self {
            models,
            demand,
            initial_state,
        })
    }

    /// Poisson(`lambda`) demand before the change, Uniform on
    /// `{0, ..., uniform_max}` after; empty shelf at the start.
    pub fn standard(params: &InventoryParams) -> Result<Self> {
        Self::new(
            params,
            DemandKind::Poisson {
                lambda: params.lambda,
            },
            DemandKind::Uniform {
                max: params.uniform_max,
            },
            0,
        )
    }

    pub fn demand(&self, post: bool) -> &DemandPmf {
        &self.demand[post as usize]
    }
}

impl Environment for InventoryEnv {
    fn model(&self, post: bool) -> &TabularMdp {
        &self.models[post as usize]
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn sample_next(&self, post: bool, s: usize, a: usize, u: f64) -> usize {
        let w = self.demand[post as usize].quantile(u);
        (s + a).saturating_sub(w)
    }
}

/// Environment defined directly by two tabular models, sampled by inverse
/// CDF over each kernel row.
#[derive(Debug, Clone)]
pub struct KernelEnv {
    models: [TabularMdp; 2],
    cdf: [Vec<f64>; 2],
    initial_state: usize,
}

impl KernelEnv {
    pub fn new(pre: TabularMdp, post: TabularMdp, initial_state: usize) -> Result<Self> {
        pre.kernel().check_same_shape(post.kernel())?;
        if initial_state >= pre.n_states() {
            return Err(Error::argument(format!("initial state {initial_state} out of range")));
        }
        let cdf = [row_cdfs(&pre), row_cdfs(&post)];
        Ok(Self {
            models: [pre, post],
            cdf,
            initial_state,
        })
    }
}

fn row_cdfs(mdp: &TabularMdp) -> Vec<f64> {
    let k = mdp.kernel();
    let n = k.n_states();
    let mut out = vec![0.0; n * k.n_actions() * n];
    for s in 0..n {
        for &a in k.feasible(s) {
            let base = (s * k.n_actions() + a) * n;
            let mut acc = 0.0;
            for (t, p) in k.row(s, a).iter().enumerate() {
                acc += p;
                out[base + t] = acc;
            }
        }
    }
    out
}

impl Environment for KernelEnv {
    fn model(&self, post: bool) -> &TabularMdp {
        &self.models[post as usize]
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn sample_next(&self, post: bool, s: usize, a: usize, u: f64) -> usize {
        let k = self.models[0].kernel();
        let n = k.n_states();
        let base = (s * k.n_actions() + a) * n;
        let row = &self.cdf[post as usize][base..base + n];
        let idx = row.partition_point(|&c| c <= u);
        // guard against cumulative sums that stop just short of 1
        let idx = idx.min(n - 1);
        let probs = self.models[post as usize].kernel().row(s, a);
        if probs[idx] > 0.0 {
            idx
        } else {
            (0..=idx).rev().find(|&t| probs[t] > 0.0).unwrap_or(idx)
        }
    }
}

/// A controller family evaluated by the harness.
#[derive(Debug, Clone)]
pub enum Policy {
    Switch(ControllerTemplate),
    Momdp {
        pomdp: Arc<RegimePomdp>,
        policy: Arc<BeliefPolicy>,
    },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Switch(t) => t.kind().name(),
            Policy::Momdp { .. } => "momdp",
        }
    }

    pub fn thresholds(&self) -> Option<Thresholds> {
        match self {
            Policy::Switch(t) if t.kind().uses_detector() => Some(t.thresholds()),
            _ => None,
        }
    }

    fn n_states(&self) -> usize {
        match self {
            Policy::Switch(t) => t.family().model(0).n_states(),
            Policy::Momdp { pomdp, .. } => pomdp.n_states(),
        }
    }

    /// Fresh controller for one episode.
    pub fn build(&self, change: ChangePoint, seed: u64) -> Box<dyn Controller + Send> {
        match self {
            Policy::Switch(t) => Box::new(t.instantiate(change, seed)),
            Policy::Momdp { pomdp, policy } => {
                Box::new(MomdpController::new(Arc::clone(pomdp), Arc::clone(policy)))
            }
        }
    }
}

/// Episode length and discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    pub horizon: usize,
    pub beta: f64,
    pub record_trace: bool,
}

impl EpisodeOptions {
    pub fn new(horizon: usize, beta: f64) -> Self {
        Self {
            horizon,
            beta,
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::argument("horizon must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::argument(format!("discount {} outside [0, 1)", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub policy: String,
    pub gamma: ChangePoint,
    pub tau_switch: Option<usize>,
    pub horizon: usize,
    pub discounted_cost: f64,
    /// `max(0, tau - gamma)` when both are finite.
    pub detection_delay: Option<usize>,
    /// Switched before the change (or without any change).
    pub premature_switch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic_trace: Option<Vec<f64>>,
}

/// SplitMix64 finaliser; derives the per-run seed from the master seed.
pub fn run_seed(master: u64, run_id: usize) -> u64 {
    let mut z = master.wrapping_add((run_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn check_spaces(env: &dyn Environment, policy: &Policy) -> Result<()> {
    let n = env.model(false).n_states();
    if policy.n_states() != n || env.model(true).n_states() != n {
        return Err(Error::argument(format!(
            "controller has {} states, environment has {n}",
            policy.n_states()
        )));
    }
    Ok(())
}

/// Simulates one episode of `options.horizon` steps and accumulates
/// `sum_k beta^k C_k(s_k, a_k)` using the exact expected cost of the regime
/// active at step `k` (post-change iff `k >= gamma`).
pub fn run_episode(
    env: &dyn Environment,
    policy: &Policy,
    change: ChangeSpec,
    options: EpisodeOptions,
    seed: u64,
) -> Result<RunRecord> {
    options.validate()?;
    change.validate()?;
    check_spaces(env, policy)?;
    simulate(env, policy, change, options, seed, 0)
}

fn simulate(
    env: &dyn Environment,
    policy: &Policy,
    change: ChangeSpec,
    options: EpisodeOptions,
    seed: u64,
    run_id: usize,
) -> Result<RunRecord> {
    let gamma = sample_change_point(change, &mut stream(seed, STREAM_CHANGE));
    let mut env_rng = stream(seed, STREAM_ENV);
    let controller_seed: u64 = stream(seed, STREAM_CONTROLLER).gen();
    let mut ctrl = policy.build(gamma, controller_seed);
    let mut trace = options.record_trace.then(|| Vec::with_capacity(options.horizon));

    let mut s = env.initial_state();
    let mut feedback = None;
    let mut discount = 1.0;
    let mut cost = 0.0;
    for k in 0..options.horizon {
        let a = ctrl.act(s, feedback, k)?;
        let post = gamma.is_post(k);
        let mdp = env.model(post);
        if !mdp.kernel().is_feasible(s, a) {
            return Err(Error::state(format!("controller chose infeasible action {a} in state {s}")));
        }
        cost += discount * mdp.cost(s, a);
        if let Some(t) = trace.as_mut() {
            t.push(ctrl.statistic().unwrap_or(f64::NAN));
        }
        let next = env.sample_next(post, s, a, env_rng.gen());
        feedback = Some(Transition::new(s, a, next));
        s = next;
        discount *= options.beta;
    }

    let tau = ctrl.switch_time();
    let (detection_delay, premature_switch) = match (gamma.time(), tau) {
        (Some(g), Some(t)) => (Some(t.saturating_sub(g)), t < g),
        (None, Some(_)) => (None, true),
        _ => (None, false),
    };
    if !cost.is_finite() {
        return Err(Error::numerical("episode cost is not finite", cost));
    }
    Ok(RunRecord {
        run_id,
        policy: policy.name().to_string(),
        gamma,
        tau_switch: tau,
        horizon: options.horizon,
        discounted_cost: cost,
        detection_delay,
        premature_switch,
        statistic_trace: trace,
    })
}

/// Monte Carlo protocol shared by every policy in one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub change: ChangeSpec,
    pub episode: EpisodeOptions,
    pub n_runs: usize,
    pub seed: u64,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        self.change.validate()?;
        self.episode.validate()?;
        if self.n_runs == 0 {
            return Err(Error::argument("n_runs must be at least 1"));
        }
        Ok(())
    }

    pub fn with_change(&self, change: ChangeSpec) -> Self {
        Self { change, ..*self }
    }
}

/// Aggregate over the runs of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub n_runs: usize,
    pub mean_cost: f64,
    /// Sample standard deviation over `sqrt(n_runs)`; zero for one run.
    pub stderr: f64,
    /// Mean of the defined detection delays.
    pub mean_delay: Option<f64>,
    pub premature_rate: f64,
    pub thresholds: Option<Thresholds>,
    pub seed: u64,
}

impl PolicySummary {
    pub fn from_runs(runs: &[RunRecord], thresholds: Option<Thresholds>, seed: u64) -> Self {
        let n = runs.len();
        let (mean, stderr) = mean_stderr(runs.iter().map(|r| r.discounted_cost));
        let delays: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.detection_delay.map(|d| d as f64))
            .collect();
        let mean_delay = (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64);
        let premature = runs.iter().filter(|r| r.premature_switch).count();
        Self {
            policy: runs.first().map(|r| r.policy.clone()).unwrap_or_default(),
            n_runs: n,
            mean_cost: mean,
            stderr,
            mean_delay,
            premature_rate: if n > 0 { premature as f64 / n as f64 } else { 0.0 },
            thresholds,
            seed,
        }
    }

    /// Normal-approximation 95% confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean_cost - 1.96 * self.stderr, self.mean_cost + 1.96 * self.stderr)
    }
}

/// Mean and standard error, summed in iteration order.
pub fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `config.n_runs` episodes, in parallel, and returns them sorted by
/// run id. The result does not depend on the number of worker threads.
pub fn run_many(
    env: &dyn Environment,
    policy: &Policy,
    config: &MonteCarloConfig,
) -> Result<Vec<RunRecord>> {
    config.validate()?;
    check_spaces(env, policy)?;
    (0..config.n_runs)
        .into_par_iter()
        .map(|id| {
            simulate(
                env,
                policy,
                config.change,
                config.episode,
                run_seed(config.seed, id),
                id,
            )
        })
        .collect()
}

/// Runs and summary of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub summary: PolicySummary,
    pub runs: Vec<RunRecord>,
}

pub fn monte_carlo(
    env: &dyn Environment,
    policy: &Policy,
    config: &MonteCarloConfig,
) -> Result<EvaluationReport> {
    let runs = run_many(env, policy, config)?;
    let summary = PolicySummary::from_runs(&runs, policy.thresholds(), config.seed);
    Ok(EvaluationReport { summary, runs })
}

/// `n` points log-spaced on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Shape of the default threshold grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Number of upper thresholds.
    pub upper_points: usize,
    /// Smallest upper threshold, statistic domain.
    pub upper_min: f64,
    /// Largest upper threshold, statistic domain.
    pub upper_max: f64,
    /// Lower thresholds per upper threshold, besides `B = 0`.
    pub lower_points: usize,
    /// Decades spanned by the lower thresholds below `A`.
    pub lower_decades: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            upper_points: 30,
            upper_min: 1.0,
            upper_max: 1e6,
            lower_points: 15,
            lower_decades: 6.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.upper_points == 0 {
            return Err(Error::argument("threshold grid has no upper points"));
        }
        if !(self.upper_min > 0.0 && self.upper_max >= self.upper_min && self.upper_max.is_finite()) {
            return Err(Error::argument("upper thresholds need 0 < min <= max < inf"));
        }
        if !(self.lower_decades >= 0.0) {
            return Err(Error::argument("lower_decades must be nonnegative"));
        }
        Ok(())
    }

    /// Upper thresholds in the detector's threshold domain. CUSUM and GLR
    /// take the logarithms of the statistic-domain range.
    pub fn uppers(&self, kind: DetectorKind) -> Vec<f64> {
        let uppers = log_spaced(self.upper_min, self.upper_max, self.upper_points);
        if kind.is_multiplicative() {
            uppers
        } else {
            uppers.into_iter().map(f64::ln).collect()
        }
    }

    /// `A = B` cells.
    pub fn loc_grid(&self, kind: DetectorKind) -> Vec<Thresholds> {
        self.uppers(kind).into_iter().map(Thresholds::single).collect()
    }

    /// For every `A`: `B = 0`, `B = A`, and `lower_points - 1` further
    /// values log-spaced down to `lower_decades` decades below `A`
    /// (statistic domain). The `A = B` cells make the `Loc` grid a subset.
    pub fn tt_grid(&self, kind: DetectorKind) -> Vec<Thresholds> {
        let mut out = Vec::new();
        for a in self.uppers(kind) {
            let mut lowers = vec![0.0];
            for j in 0..self.lower_points {
                let drop = self.lower_decades * j as f64 / self.lower_points as f64;
                let b = if kind.is_multiplicative() {
                    a * 10f64.powf(-drop)
                } else {
                    a - drop * std::f64::consts::LN_10
                };
                if b >= 0.0 {
                    lowers.push(b);
                }
            }
            lowers.sort_by(|x, y| x.total_cmp(y));
            lowers.dedup();
            out.extend(lowers.into_iter().map(|b| Thresholds {
                upper: a,
                lower: b,
                log_domain: false,
            }));
        }
        out
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub thresholds: Thresholds,
    pub mean_cost: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub best: Thresholds,
    pub summary: PolicySummary,
    pub cells: Vec<CellResult>,
}

fn order_key(t: &Thresholds) -> (f64, f64) {
    (t.upper, t.lower)
}

fn prefer(candidate: (f64, &Thresholds), incumbent: (f64, &Thresholds)) -> bool {
    candidate.0 < incumbent.0
        || (candidate.0 == incumbent.0 && order_key(candidate.1) < order_key(incumbent.1))
}

/// Exhaustive grid search minimising the mean discounted cost. Every cell
/// is evaluated on the same seeds; ties go to the smallest `A`, then the
/// smallest `B`.
pub fn optimize_thresholds(
    env: &dyn Environment,
    template: &ControllerTemplate,
    grid: &[Thresholds],
    config: &MonteCarloConfig,
) -> Result<ThresholdSearch> {
    if grid.is_empty() {
        return Err(Error::argument("threshold grid is empty"));
    }
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, PolicySummary)> = None;
    for (i, &t) in grid.iter().enumerate() {
        let policy = Policy::Switch(template.with_thresholds(t)?);
        let runs = run_many(env, &policy, config)?;
        let summary = PolicySummary::from_runs(&runs, Some(t), config.seed);
        cells.push(CellResult {
            thresholds: t,
            mean_cost: summary.mean_cost,
            stderr: summary.stderr,
        });
        let better = match &best {
            None => true,
            Some((j, s)) => prefer((summary.mean_cost, &t), (s.mean_cost, &grid[*j])),
        };
        if better {
            best = Some((i, summary));
        }
    }
    let (i, summary) = best.expect("grid is nonempty");
    Ok(ThresholdSearch {
        best: grid[i],
        summary,
        cells,
    })
}

/// `E_1` (change at time 1) and `E_inf` (no change) costs of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedCell {
    pub thresholds: Thresholds,
    pub e1_cost: f64,
    pub e1_stderr: f64,
    pub einf_cost: f64,
    pub einf_stderr: f64,
}

/// Evaluates every cell under both change hypotheses with common seeds.
/// `config.change` is ignored.
pub fn evaluate_constrained_grid(
    env: &dyn Environment,
    template: &ControllerTemplate,
    grid: &[Thresholds],
    config: &MonteCarloConfig,
) -> Result<Vec<ConstrainedCell>> {
    if grid.is_empty() {
        return Err(Error::argument("threshold grid is empty"));
    }
    let e1 = config.with_change(ChangeSpec::Fixed { gamma: 1 });
    let einf = config.with_change(ChangeSpec::Never);
    grid.iter()
        .map(|&t| {
            let policy = Policy::Switch(template.with_thresholds(t)?);
            let (e1_cost, e1_stderr) = mean_stderr(
                run_many(env, &policy, &e1)?.iter().map(|r| r.discounted_cost),
            );
            let (einf_cost, einf_stderr) = mean_stderr(
                run_many(env, &policy, &einf)?.iter().map(|r| r.discounted_cost),
            );
            Ok(ConstrainedCell {
                thresholds: t,
                e1_cost,
                e1_stderr,
                einf_cost,
                einf_stderr,
            })
        })
        .collect()
}

/// Outcome of constrained calibration at one level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Calibration {
    /// Minimum `E_1` cost among cells with `E_inf` cost at most `alpha`.
    Feasible { alpha: f64, cell: ConstrainedCell },
    /// No cell meets the constraint; `closest` has the smallest `E_inf` cost.
    Infeasible { alpha: f64, closest: ConstrainedCell },
}

impl Calibration {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Calibration::Feasible { .. })
    }

    pub fn cell(&self) -> &ConstrainedCell {
        match self {
            Calibration::Feasible { cell, .. } => cell,
            Calibration::Infeasible { closest, .. } => closest,
        }
    }
}

/// Picks the calibrated cell for one `alpha` from an evaluated grid.
pub fn select_calibrated(cells: &[ConstrainedCell], alpha: f64) -> Result<Calibration> {
    if cells.is_empty() {
        return Err(Error::argument("threshold grid is empty"));
    }
    let mut best: Option<&ConstrainedCell> = None;
    for c in cells.iter().filter(|c| c.einf_cost <= alpha) {
        let better = match best {
            None => true,
            Some(b) => prefer((c.e1_cost, &c.thresholds), (b.e1_cost, &b.thresholds)),
        };
        if better {
            best = Some(c);
        }
    }
    if let Some(cell) = best {
        return Ok(Calibration::Feasible { alpha, cell: *cell });
    }
    let closest = cells
        .iter()
        .reduce(|b, c| {
            if prefer((c.einf_cost, &c.thresholds), (b.einf_cost, &b.thresholds)) {
                c
            } else {
                b
            }
        })
        .expect("cells are nonempty");
    Ok(Calibration::Infeasible {
        alpha,
        closest: *closest,
    })
}

/// Non-Bayesian calibration: minimise `E_1` cost subject to `E_inf` cost
/// at most `alpha`.
pub fn calibrate_nonbayes(
    env: &dyn Environment,
    template: &ControllerTemplate,
    grid: &[Thresholds],
    alpha: f64,
    config: &MonteCarloConfig,
) -> Result<Calibration> {
    let cells = evaluate_constrained_grid(env, template, grid, config)?;
    select_calibrated(&cells, alpha)
}

/// One line of the frontier table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub alpha: f64,
    pub policy: String,
    pub calibration: Calibration,
}

/// Calibrates every policy at every `alpha`. Each grid is evaluated once.
pub fn frontier_sweep(
    env: &dyn Environment,
    policies: &[(ControllerTemplate, Vec<Thresholds>)],
    alphas: &[f64],
    config: &MonteCarloConfig,
) -> Result<Vec<FrontierRow>> {
    if alphas.is_empty() {
        return Err(Error::argument("alpha list is empty"));
    }
    let mut rows = Vec::new();
    let mut evaluated = Vec::with_capacity(policies.len());
    for (template, grid) in policies {
        evaluated.push(evaluate_constrained_grid(env, template, grid, config)?);
    }
    for &alpha in alphas {
        for ((template, _), cells) in policies.iter().zip(&evaluated) {
            rows.push(FrontierRow {
                alpha,
                policy: template.kind().name().to_string(),
                calibration: select_calibrated(cells, alpha)?,
            });
        }
    }
    Ok(rows)
}

/// Detection delay and false switches at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub thresholds: Thresholds,
    /// Mean of `(tau - gamma)^+` over runs whose change falls inside the
    /// horizon; runs without a switch count as `horizon - gamma`.
    pub mean_delay: f64,
    pub delay_stderr: f64,
    /// Fraction of runs that switched before the change.
    pub false_switch_rate: f64,
    /// Fraction of post-change runs that never switched.
    pub censored_rate: f64,
}

pub fn delay_profile(
    env: &dyn Environment,
    template: &ControllerTemplate,
    thresholds: &[Thresholds],
    config: &MonteCarloConfig,
) -> Result<Vec<DelayPoint>> {
    let horizon = config.episode.horizon;
    thresholds
        .iter()
        .map(|&t| {
            let policy = Policy::Switch(template.with_thresholds(t)?);
            let runs = run_many(env, &policy, config)?;
            let mut delays = Vec::new();
            let mut censored = 0usize;
            for r in &runs {
                let Some(g) = r.gamma.time().filter(|&g| g < horizon) else {
                    continue;
                };
                match r.tau_switch {
                    Some(tau) => delays.push(tau.saturating_sub(g) as f64),
                    None => {
                        censored += 1;
                        delays.push((horizon - g) as f64);
                    }
                }
            }
            let (mean_delay, delay_stderr) = mean_stderr(delays.iter().copied());
            let false_switches = runs.iter().filter(|r| r.premature_switch).count();
            Ok(DelayPoint {
                thresholds: t,
                mean_delay,
                delay_stderr,
                false_switch_rate: false_switches as f64 / runs.len() as f64,
                censored_rate: if delays.is_empty() {
                    0.0
                } else {
                    censored as f64 / delays.len() as f64
                },
            })
        })
        .collect()
}

/// Path of a fixed stationary policy from the environment's initial state,
/// with the change point drawn from `change`.
pub fn simulate_fixed_policy(
    env: &dyn Environment,
    policy: &crate::mdp::StationaryPolicy,
    change: ChangeSpec,
    steps: usize,
    seed: u64,
) -> Result<(ChangePoint, Vec<Transition>)> {
    change.validate()?;
    policy.check_feasible(env.model(false).kernel())?;
    let gamma = sample_change_point(change, &mut stream(seed, STREAM_CHANGE));
    let mut rng = stream(seed, STREAM_ENV);
    let mut s = env.initial_state();
    let mut path = Vec::with_capacity(steps);
    for k in 0..steps {
        let a = policy.action(s);
        let next = env.sample_next(gamma.is_post(k), s, a, rng.gen());
        path.push(Transition::new(s, a, next));
        s = next;
    }
    Ok((gamma, path))
}

/// Checks the cost ordering `oracle < tt < loc < random` with disjoint 95%
/// intervals, and `oracle < momdp < random`, for the policies present.
/// Returns one message per violated comparison; a missing policy is a
/// violation of every comparison it takes part in.
pub fn ordering_violations(summaries: &[PolicySummary]) -> Vec<String> {
    let find = |name: &str| summaries.iter().find(|s| s.policy == name);
    let mut out = Vec::new();
    for pair in [
        ("oracle", "tt"),
        ("tt", "loc"),
        ("loc", "random"),
        ("oracle", "momdp"),
        ("momdp", "random"),
    ] {
        match (find(pair.0), find(pair.1)) {
            (Some(lo), Some(hi)) => {
                if lo.ci95().1 >= hi.ci95().0 {
                    out.push(format!(
                        "{} ({} +/- {}) is not below {} ({} +/- {})",
                        pair.0,
                        format_float(lo.mean_cost),
                        format_float(1.96 * lo.stderr),
                        pair.1,
                        format_float(hi.mean_cost),
                        format_float(1.96 * hi.stderr)
                    ));
                }
            }
            _ => out.push(format!("ordering needs both {} and {}", pair.0, pair.1)),
        }
    }
    out
}

/// Simulates a piecewise-stationary episode: model `schedule[i].1` is
/// active from time `schedule[i].0` on (the first entry must start at 0).
/// Returns the discounted cost and the visited transitions.
pub fn run_piecewise(
    models: &[TabularMdp],
    schedule: &[(usize, usize)],
    ctrl: &mut dyn Controller,
    options: EpisodeOptions,
    seed: u64,
) -> Result<(f64, Vec<Transition>)> {
    options.validate()?;
    if schedule.first().map(|s| s.0) != Some(0) {
        return Err(Error::argument("schedule must start at time 0"));
    }
    if schedule.windows(2).any(|w| w[1].0 <= w[0].0) || schedule.iter().any(|s| s.1 >= models.len()) {
        return Err(Error::argument("schedule times must increase and name existing models"));
    }
    let envs: Vec<KernelEnv> = models
        .iter()
        .map(|m| KernelEnv::new(m.clone(), m.clone(), 0))
        .collect::<Result<_>>()?;
    let mut rng = stream(seed, STREAM_ENV);
    let (mut s, mut feedback, mut discount, mut cost) = (0, None, 1.0, 0.0);
    let mut path = Vec::with_capacity(options.horizon);
    let mut seg = 0;
    for k in 0..options.horizon {
        while seg + 1 < schedule.len() && schedule[seg + 1].0 <= k {
            seg += 1;
        }
        let m = schedule[seg].1;
        let a = ctrl.act(s, feedback, k)?;
        if !models[m].kernel().is_feasible(s, a) {
            return Err(Error::state(format!("controller chose infeasible action {a} in state {s}")));
        }
        cost += discount * models[m].cost(s, a);
        let next = envs[m].sample_next(false, s, a, rng.gen());
        let t = Transition::new(s, a, next);
        path.push(t);
        feedback = Some(t);
        s = next;
        discount *= options.beta;
    }
    Ok((cost, path))
}
