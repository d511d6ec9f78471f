//! Sequential change-detection statistics over state-action-state
//! transitions: Shiryaev, Shiryaev-Roberts (SR), windowed CUSUM and a
//! grid GLR, with their first-passage stopping rules.
//!
//! Shiryaev and SR statistics are stored as `ln S_n` so that long runs of
//! large likelihood ratios cannot overflow; thresholds for them are given
//! in the statistic domain and compared as `ln S_n > ln A`. CUSUM and GLR
//! statistics are sums of log-likelihood ratios and use log-domain
//! thresholds directly.
//!
//! Detectors only see transitions, never costs.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Kernel, Transition, DEFAULT_EPS_PROB};

pub const DEFAULT_WINDOW: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Shiryaev,
    Sr,
    Cusum,
    Glr,
}

impl DetectorKind {
    /// Statistic stored as `ln S` with statistic-domain thresholds.
    pub fn is_multiplicative(self) -> bool {
        matches!(self, DetectorKind::Shiryaev | DetectorKind::Sr)
    }

    /// Internal log-domain level of a threshold-domain value.
    #[inline]
    pub fn level(self, threshold: f64) -> f64 {
        if self.is_multiplicative() {
            threshold.ln()
        } else {
            threshold
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Shiryaev => "shiryaev",
            DetectorKind::Sr => "sr",
            DetectorKind::Cusum => "cusum",
            DetectorKind::Glr => "glr",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shiryaev" => Ok(DetectorKind::Shiryaev),
            "sr" | "shiryaev-roberts" => Ok(DetectorKind::Sr),
            "cusum" => Ok(DetectorKind::Cusum),
            "glr" => Ok(DetectorKind::Glr),
            other => Err(Error::argument(format!("unknown detector kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Geometric prior parameter; Shiryaev only.
    pub rho: f64,
    /// Window `m` for CUSUM and GLR.
    pub window: usize,
    /// Floor applied to kernel probabilities inside log-ratios.
    pub eps_prob: f64,
    /// Minimum sup-norm distance between a GLR candidate and the
    /// pre-change kernel.
    pub min_separation: f64,
}

impl DetectorConfig {
    pub fn shiryaev(rho: f64) -> Self {
        Self {
            kind: DetectorKind::Shiryaev,
            rho,
            ..Self::sr()
        }
    }

    pub fn sr() -> Self {
        Self {
            kind: DetectorKind::Sr,
            rho: 0.0,
            window: DEFAULT_WINDOW,
            eps_prob: DEFAULT_EPS_PROB,
            min_separation: 0.0,
        }
    }

    pub fn cusum(window: usize) -> Self {
        Self {
            kind: DetectorKind::Cusum,
            window,
            ..Self::sr()
        }
    }

    pub fn glr(window: usize, min_separation: f64) -> Self {
        Self {
            kind: DetectorKind::Glr,
            window,
            min_separation,
            ..Self::sr()
        }
    }

    /// Prior parameter actually used by the recursion (zero for SR).
    pub fn effective_rho(&self) -> f64 {
        match self.kind {
            DetectorKind::Shiryaev => self.rho,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DetectorKind::Shiryaev && !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::argument(format!(
                "shiryaev detector needs rho in (0, 1), got {}",
                self.rho
            )));
        }
        if matches!(self.kind, DetectorKind::Cusum | DetectorKind::Glr) && self.window == 0 {
            return Err(Error::argument("window must be at least 1"));
        }
        if !(self.eps_prob > 0.0 && self.eps_prob < 1.0) {
            return Err(Error::argument(format!(
                "eps_prob {} outside (0, 1)",
                self.eps_prob
            )));
        }
        if !(self.min_separation >= 0.0) {
            return Err(Error::argument("min_separation must be non-negative"));
        }
        Ok(())
    }
}

/// `ln(max(T_1(s,a,s'), eps) / max(T_0(s,a,s'), eps))`.
pub fn log_likelihood_ratio(
    kernel0: &Kernel,
    kernel1: &Kernel,
    t: Transition,
    eps_prob: f64,
) -> Result<f64> {
    kernel0.check_transition(t)?;
    kernel1.check_transition(t)?;
    let p1 = kernel1.prob(t.state, t.action, t.next).max(eps_prob);
    let p0 = kernel0.prob(t.state, t.action, t.next).max(eps_prob);
    Ok(p1.ln() - p0.ln())
}

/// Precomputed log-likelihood ratios for one (pre, post) kernel pair.
/// Infeasible `(s, a)` entries hold NaN.
#[derive(Debug, Clone)]
pub struct LlrTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl LlrTable {
    pub fn new(kernel0: &Kernel, kernel1: &Kernel, eps_prob: f64) -> Result<Self> {
        kernel0.check_same_shape(kernel1)?;
        let (n, m) = (kernel0.n_states(), kernel0.n_actions());
        let mut values = vec![f64::NAN; n * m * n];
        for s in 0..n {
            for &a in kernel0.feasible(s) {
                for t in 0..n {
                    values[(s * m + a) * n + t] =
                        log_likelihood_ratio(kernel0, kernel1, Transition::new(s, a, t), eps_prob)?;
                }
            }
        }
        Ok(Self {
            n_states: n,
            n_actions: m,
            values,
        })
    }

    #[inline]
    pub fn get(&self, t: Transition) -> Result<f64> {
        if t.state >= self.n_states || t.action >= self.n_actions || t.next >= self.n_states {
            return Err(Error::argument(format!("transition {t:?} outside the model")));
        }
        let v = self.values[(t.state * self.n_actions + t.action) * self.n_states + t.next];
        if v.is_nan() {
            return Err(Error::argument(format!(
                "action {} is not feasible at state {}",
                t.action, t.state
            )));
        }
        Ok(v)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn ln_1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Running statistic of one detector plus its stopping time.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    kind: DetectorKind,
    /// `ln S_n` for Shiryaev/SR; `W_n` or `G_n` otherwise.
    value: f64,
    buffers: Vec<VecDeque<f64>>,
    n: usize,
    stopped_at: Option<usize>,
    estimate: Option<usize>,
}

impl DetectorState {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            value: if kind.is_multiplicative() { f64::NEG_INFINITY } else { 0.0 },
            buffers: Vec::new(),
            n: 0,
            stopped_at: None,
            estimate: None,
        }
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    /// Number of transitions consumed.
    pub fn step_count(&self) -> usize {
        self.n
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    /// Candidate index achieving the current GLR maximum.
    pub fn estimate(&self) -> Option<usize> {
        self.estimate
    }

    /// `S_n` for Shiryaev/SR, `W_n`/`G_n` for CUSUM/GLR. Every statistic
    /// is zero before the first observation.
    pub fn statistic(&self) -> f64 {
        if self.kind.is_multiplicative() {
            self.value.exp()
        } else {
            self.value
        }
    }

    /// Internal log-domain value: `ln S_n`, or `W_n`/`G_n` unchanged.
    pub fn log_statistic(&self) -> f64 {
        self.value
    }

    /// Whether the statistic strictly exceeds `threshold`, read in the
    /// detector's threshold domain.
    #[inline]
    pub fn exceeds(&self, threshold: f64) -> bool {
        self.value > self.kind.level(threshold)
    }

    /// Whether the internal log-domain value strictly exceeds `level`.
    #[inline]
    pub fn exceeds_level(&self, level: f64) -> bool {
        self.value > level
    }

    fn check_step(&self, expected: &[DetectorKind]) -> Result<()> {
        if let Some(t) = self.stopped_at {
            return Err(Error::state(format!("detector already stopped at n = {t}")));
        }
        if !expected.contains(&self.kind) {
            return Err(Error::state(format!(
                "{} step applied to a {} detector",
                expected[0].name(),
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// `S_n = (1 + S_{n-1}) / (1 - rho) * lr`.
    pub fn shiryaev_step(&mut self, lr: f64, rho: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::argument(format!("likelihood ratio {lr} must be finite and >= 0")));
        }
        self.shiryaev_step_log(lr.ln(), rho)
    }

    /// Shiryaev update from a log-likelihood ratio (`-inf` allowed).
    pub fn shiryaev_step_log(&mut self, llr: f64, rho: f64) -> Result<()> {
        self.check_step(&[DetectorKind::Shiryaev, DetectorKind::Sr])?;
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::argument(format!("rho {rho} outside [0, 1)")));
        }
        if llr.is_nan() || llr == f64::INFINITY {
            return Err(Error::argument("log-likelihood ratio must be < +inf"));
        }
        self.value = ln_1p_exp(self.value) - (-rho).ln_1p() + llr;
        self.n += 1;
        Ok(())
    }

    /// `SR_n = (1 + SR_{n-1}) * lr`.
    pub fn sr_step(&mut self, lr: f64) -> Result<()> {
        self.shiryaev_step(lr, 0.0)
    }

    pub fn sr_step_log(&mut self, llr: f64) -> Result<()> {
        self.shiryaev_step_log(llr, 0.0)
    }

    /// `W_n = max_{n-m <= k <= n} sum_{i=k}^n llr_i` over the last `m + 1`
    /// log-likelihood ratios.
    pub fn cusum_step(&mut self, llr: f64, window: usize) -> Result<()> {
        self.check_step(&[DetectorKind::Cusum])?;
        if window == 0 {
            return Err(Error::argument("window must be at least 1"));
        }
        if self.buffers.is_empty() {
            self.buffers.push(VecDeque::with_capacity(window + 1));
        }
        let buf = &mut self.buffers[0];
        push_bounded(buf, llr, window + 1);
        self.value = max_suffix_sum(buf);
        self.n += 1;
        Ok(())
    }

    /// GLR update from one log-likelihood ratio per candidate model:
    /// `G_n = max_k max_theta sum_{i=k}^n llr_i(theta)`.
    pub fn glr_step_llrs(&mut self, llrs: &[f64], window: usize) -> Result<()> {
        self.check_step(&[DetectorKind::Glr])?;
        if window == 0 {
            return Err(Error::argument("window must be at least 1"));
        }
        if llrs.is_empty() {
            return Err(Error::argument("GLR needs at least one candidate"));
        }
        if self.buffers.is_empty() {
            self.buffers = vec![VecDeque::with_capacity(window + 1); llrs.len()];
        } else if self.buffers.len() != llrs.len() {
            return Err(Error::argument(format!(
                "GLR state tracks {} candidates, got {}",
                self.buffers.len(),
                llrs.len()
            )));
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, (buf, &llr)) in self.buffers.iter_mut().zip(llrs).enumerate() {
            push_bounded(buf, llr, window + 1);
            let w = max_suffix_sum(buf);
            if w > best.0 {
                best = (w, j);
            }
        }
        self.value = best.0;
        self.estimate = Some(best.1);
        self.n += 1;
        Ok(())
    }

    /// First `n >= 1` with statistic `> threshold`; once set, the stopping
    /// time never changes.
    pub fn check_stop(&mut self, threshold: f64) -> Option<usize> {
        self.check_stop_level(self.kind.level(threshold))
    }

    /// [`check_stop`](Self::check_stop) against a log-domain level.
    pub fn check_stop_level(&mut self, level: f64) -> Option<usize> {
        if self.stopped_at.is_none() && self.n >= 1 && self.value > level {
            self.stopped_at = Some(self.n);
        }
        self.stopped_at
    }
}

fn push_bounded(buf: &mut VecDeque<f64>, x: f64, cap: usize) {
    if buf.len() == cap {
        buf.pop_front();
    }
    buf.push_back(x);
}

fn max_suffix_sum(buf: &VecDeque<f64>) -> f64 {
    let mut acc = 0.0;
    let mut best = f64::NEG_INFINITY;
    for x in buf.iter().rev() {
        acc += x;
        best = best.max(acc);
    }
    best
}

/// GLR update computing per-candidate log-ratios from kernels.
pub fn glr_step(
    state: &mut DetectorState,
    t: Transition,
    kernel0: &Kernel,
    theta_grid: &[&Kernel],
    window: usize,
    eps_prob: f64,
) -> Result<()> {
    if theta_grid.is_empty() {
        return Err(Error::argument("GLR needs a nonempty candidate grid"));
    }
    let llrs = theta_grid
        .iter()
        .map(|k| log_likelihood_ratio(kernel0, k, t, eps_prob))
        .collect::<Result<Vec<_>>>()?;
    state.glr_step_llrs(&llrs, window)
}

/// Geometric prior `phi(k) = rho (1 - rho)^(k-1)` for `k = 1..=n`.
pub fn geometric_prior(rho: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| rho * (1.0 - rho).powi(k as i32)).collect()
}

/// `ln sum_{k<=n} phi(k) prod_{i=k}^n lr_i` by log-sum-exp.
pub fn shiryaev_batch_log(prior: &[f64], log_lrs: &[f64]) -> Result<f64> {
    let n = log_lrs.len();
    if prior.len() < n {
        return Err(Error::argument(format!(
            "prior covers {} change points, need {n}",
            prior.len()
        )));
    }
    if let Some(p) = prior.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::argument(format!("prior mass {p} is invalid")));
    }
    if prior.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::argument("prior mass exceeds 1"));
    }
    if log_lrs.iter().any(|x| x.is_nan()) {
        return Err(Error::argument("log-likelihood ratio is NaN"));
    }
    // suffix sums: terms[k] = ln phi(k) + sum_{i >= k} llr_i
    let mut terms = Vec::with_capacity(n);
    let mut suffix = 0.0;
    for k in (0..n).rev() {
        suffix += log_lrs[k];
        terms.push(prior[k].ln() + suffix);
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln())
}

/// Batch Shiryaev statistic in the natural domain.
pub fn shiryaev_batch(prior: &[f64], log_lrs: &[f64]) -> Result<f64> {
    shiryaev_batch_log(prior, log_lrs).map(f64::exp)
}

/// Posterior probability that the change has already happened,
/// `rho S_n / (1 + rho S_n)`, from `ln S_n` of the recursion.
pub fn posterior_from_shiryaev(log_s: f64, rho: f64) -> f64 {
    let x = rho.ln() + log_s;
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A detector bound to its pre-change kernel and candidate post-change
/// kernels. Cloning is cheap: the log-ratio tables are shared.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    tables: Arc<[LlrTable]>,
    state: DetectorState,
    scratch: Vec<f64>,
}

impl Detector {
    /// Shiryaev, SR and CUSUM need exactly one candidate; GLR needs at
    /// least one, each separated from `kernel0` by `min_separation`.
    pub fn new(config: DetectorConfig, kernel0: &Kernel, candidates: &[&Kernel]) -> Result<Self> {
        config.validate()?;
        if candidates.is_empty() {
            return Err(Error::argument("detector needs at least one post-change kernel"));
        }
        if config.kind != DetectorKind::Glr && candidates.len() != 1 {
            return Err(Error::argument(format!(
                "{} detector takes exactly one post-change kernel, got {}",
                config.kind.name(),
                candidates.len()
            )));
        }
        if config.kind == DetectorKind::Glr {
            for (j, k) in candidates.iter().enumerate() {
                let d = kernel0.sup_distance(k)?;
                if d < config.min_separation {
                    return Err(Error::argument(format!(
                        "candidate {j} is {d} from the pre-change kernel, below separation {}",
                        config.min_separation
                    )));
                }
            }
        }
        let tables = candidates
            .iter()
            .map(|k| LlrTable::new(kernel0, k, config.eps_prob))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            tables: tables.into(),
            state: DetectorState::new(config.kind),
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn n_candidates(&self) -> usize {
        self.tables.len()
    }

    /// Same kernels, statistic reset to zero.
    pub fn fresh(&self) -> Self {
        Self {
            config: self.config,
            tables: Arc::clone(&self.tables),
            state: DetectorState::new(self.config.kind),
            scratch: Vec::new(),
        }
    }

    /// Log-likelihood ratio of `t` against the first candidate.
    pub fn llr(&self, t: Transition) -> Result<f64> {
        self.tables[0].get(t)
    }

    /// Feeds one transition into the statistic.
    #[inline]
    pub fn observe(&mut self, t: Transition) -> Result<()> {
        match self.config.kind {
            DetectorKind::Shiryaev | DetectorKind::Sr => {
                let llr = self.tables[0].get(t)?;
                self.state.shiryaev_step_log(llr, self.config.effective_rho())
            }
            DetectorKind::Cusum => {
                let llr = self.tables[0].get(t)?;
                self.state.cusum_step(llr, self.config.window)
            }
            DetectorKind::Glr => {
                self.scratch.clear();
                for table in self.tables.iter() {
                    self.scratch.push(table.get(t)?);
                }
                self.state.glr_step_llrs(&self.scratch, self.config.window)
            }
        }
    }

    pub fn check_stop(&mut self, threshold: f64) -> Option<usize> {
        self.state.check_stop(threshold)
    }

    pub fn exceeds(&self, threshold: f64) -> bool {
        self.state.exceeds(threshold)
    }

    pub fn check_stop_level(&mut self, level: f64) -> Option<usize> {
        self.state.check_stop_level(level)
    }

    #[inline]
    pub fn exceeds_level(&self, level: f64) -> bool {
        self.state.exceeds_level(level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run_shiryaev(lrs: &[f64], rho: f64) -> DetectorState {
        let mut st = DetectorState::new(if rho > 0.0 { DetectorKind::Shiryaev } else { DetectorKind::Sr });
        for &lr in lrs {
            st.shiryaev_step(lr, rho).unwrap();
        }
        st
    }

    /// Direct double sum/product, no logs.
    fn naive_batch(prior: &[f64], lrs: &[f64]) -> f64 {
        (0..lrs.len())
            .map(|k| prior[k] * lrs[k..].iter().product::<f64>())
            .sum()
    }

    /// Brute-force `max` over every suffix of length `1..=m+1`.
    fn brute_windowed_max(xs: &[f64], m: usize) -> f64 {
        let n = xs.len();
        (1..=(m + 1).min(n))
            .map(|len| xs[n - len..].iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn llr_examples() {
        let k0 = Kernel::new(1, 1, vec![vec![0]], vec![1.0]).unwrap();
        assert_eq!(log_likelihood_ratio(&k0, &k0, Transition::new(0, 0, 0), 1e-12).unwrap(), 0.0);

        let a = Kernel::new(2, 1, vec![vec![0], vec![0]], vec![0.4, 0.6, 0.5, 0.5]).unwrap();
        let b = Kernel::new(2, 1, vec![vec![0], vec![0]], vec![0.8, 0.2, 1e-30, 1.0 - 1e-30]).unwrap();
        let l = log_likelihood_ratio(&a, &b, Transition::new(0, 0, 0), 1e-12).unwrap();
        assert_abs_diff_eq!(l, 2f64.ln(), epsilon = 1e-14);
        let l = log_likelihood_ratio(&a, &b, Transition::new(1, 0, 0), 1e-12).unwrap();
        assert_abs_diff_eq!(l, (1e-12f64 / 0.5).ln(), epsilon = 1e-12);

        let err = log_likelihood_ratio(&a, &b, Transition::new(0, 1, 0), 1e-12).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn shiryaev_examples() {
        let st = run_shiryaev(&[1.0], 0.01);
        assert_abs_diff_eq!(st.statistic(), 1.0 / 0.99, epsilon = 1e-12);
        let st = run_shiryaev(&[5.0, 3.0, 0.0], 0.01);
        assert_eq!(st.statistic(), 0.0);
        let mut st = DetectorState::new(DetectorKind::Shiryaev);
        assert!(matches!(st.shiryaev_step(1.0, 1.0), Err(Error::Argument(_))));
        assert!(matches!(st.shiryaev_step(-1.0, 0.1), Err(Error::Argument(_))));
        assert_eq!(st.statistic(), 0.0);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn batch_examples() {
        let rho = 0.3;
        let v = shiryaev_batch(&geometric_prior(rho, 1), &[2.5f64.ln()]).unwrap();
        assert_abs_diff_eq!(v, rho * 2.5, epsilon = 1e-14);
        for n in 1..20 {
            let v = shiryaev_batch(&geometric_prior(rho, n), &vec![0.0; n]).unwrap();
            assert_abs_diff_eq!(v, 1.0 - (1.0 - rho).powi(n as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn batch_matches_naive_and_recursion_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(1..=30);
            let rho = rng.gen_range(0.001..0.5);
            let lrs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..4.0)).collect();
            let llrs: Vec<f64> = lrs.iter().map(|x| x.ln()).collect();
            let prior = geometric_prior(rho, n);
            let batch = shiryaev_batch_log(&prior, &llrs).unwrap();
            assert_abs_diff_eq!(batch, naive_batch(&prior, &lrs).ln(), epsilon = 1e-9);
            let rec = run_shiryaev(&lrs, rho).log_statistic();
            let scaled = rho.ln() + n as f64 * (1.0 - rho).ln() + rec;
            assert_abs_diff_eq!(batch, scaled, epsilon = 1e-9);
        }
    }

    #[test]
    fn sr_examples() {
        let mut st = DetectorState::new(DetectorKind::Sr);
        st.sr_step(2.0).unwrap();
        assert_abs_diff_eq!(st.statistic(), 2.0, epsilon = 1e-12);
        let st = run_shiryaev(&vec![1.0; 37], 0.0);
        assert_abs_diff_eq!(st.statistic(), 37.0, epsilon = 1e-10);
        assert!(matches!(DetectorState::new(DetectorKind::Sr).sr_step(-0.5), Err(Error::Argument(_))));
    }

    #[test]
    fn cusum_examples() {
        let m = 5;
        let mut st = DetectorState::new(DetectorKind::Cusum);
        for n in 1..=12 {
            st.cusum_step(0.5, m).unwrap();
            assert_abs_diff_eq!(st.statistic(), n.min(m + 1) as f64 * 0.5, epsilon = 1e-12);
        }
        let mut st = DetectorState::new(DetectorKind::Cusum);
        for _ in 0..12 {
            st.cusum_step(-0.5, m).unwrap();
            assert_abs_diff_eq!(st.statistic(), -0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn cusum_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = rng.gen_range(1..8);
            let xs: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut st = DetectorState::new(DetectorKind::Cusum);
            for n in 1..=xs.len() {
                st.cusum_step(xs[n - 1], m).unwrap();
                assert_abs_diff_eq!(st.statistic(), brute_windowed_max(&xs[..n], m), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn glr_singleton_equals_cusum_and_grid_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = rng.gen_range(1..6);
            let mut cusum = DetectorState::new(DetectorKind::Cusum);
            let mut single = DetectorState::new(DetectorKind::Glr);
            let mut pair = DetectorState::new(DetectorKind::Glr);
            let xs: Vec<(f64, f64)> = (0..15)
                .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            for (n, &(a, b)) in xs.iter().enumerate() {
                cusum.cusum_step(a, m).unwrap();
                single.glr_step_llrs(&[a], m).unwrap();
                pair.glr_step_llrs(&[a, b], m).unwrap();
                assert_eq!(single.statistic(), cusum.statistic());
                assert!(pair.statistic() >= single.statistic());
                // brute force over (k, theta)
                let firsts: Vec<f64> = xs[..=n].iter().map(|p| p.0).collect();
                let seconds: Vec<f64> = xs[..=n].iter().map(|p| p.1).collect();
                let (ba, bb) = (brute_windowed_max(&firsts, m), brute_windowed_max(&seconds, m));
                assert_abs_diff_eq!(pair.statistic(), ba.max(bb), epsilon = 1e-12);
                assert_eq!(pair.estimate(), Some(if bb > ba { 1 } else { 0 }));
            }
        }
    }

    #[test]
    fn stop_examples() {
        let mut st = DetectorState::new(DetectorKind::Sr);
        let mut tau = None;
        for _ in 0..5 {
            st.sr_step(2.0).unwrap();
            tau = st.check_stop(5.0);
            if tau.is_some() {
                break;
            }
        }
        assert_eq!(tau, Some(2));
        assert_eq!(st.check_stop(1e9), Some(2));
        assert!(matches!(st.sr_step(2.0), Err(Error::State(_))));

        let mut st = DetectorState::new(DetectorKind::Sr);
        for _ in 0..50 {
            st.sr_step(0.5).unwrap();
            assert_eq!(st.check_stop(10.0), None);
        }

        let mut st = DetectorState::new(DetectorKind::Shiryaev);
        assert_eq!(st.check_stop(0.0), None);
        st.shiryaev_step(0.3, 0.1).unwrap();
        assert_eq!(st.check_stop(0.0), Some(1));
    }

    #[test]
    fn stopping_time_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let llrs: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.2)).collect();
            let tau = |a: f64| {
                let mut st = DetectorState::new(DetectorKind::Sr);
                for &x in &llrs {
                    st.sr_step_log(x).unwrap();
                    if let Some(t) = st.check_stop(a) {
                        return t;
                    }
                }
                usize::MAX
            };
            let mut prev = 0;
            for a in [0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1e4] {
                let t = tau(a);
                assert!(t >= prev);
                prev = t;
            }
        }
    }

    /// Exhaustive Bayes over change-point hypotheses `{1..n, >n}`.
    fn exhaustive_posterior(lrs: &[f64], rho: f64) -> f64 {
        let n = lrs.len();
        let before: f64 = (1..=n)
            .map(|k| rho * (1.0 - rho).powi(k as i32 - 1) * lrs[k - 1..].iter().product::<f64>())
            .sum();
        let after = (1.0 - rho).powi(n as i32);
        before / (before + after)
    }

    #[test]
    fn posterior_matches_exhaustive_bayes() {
        assert_eq!(posterior_from_shiryaev(f64::NEG_INFINITY, 0.01), 0.0);
        assert!(posterior_from_shiryaev(800.0, 0.01) > 1.0 - 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let rho = rng.gen_range(0.005..0.3);
            let lrs: Vec<f64> = (0..10).map(|_| rng.gen_range(0.1..3.0)).collect();
            let st = run_shiryaev(&lrs, rho);
            let p = posterior_from_shiryaev(st.log_statistic(), rho);
            assert_abs_diff_eq!(p, exhaustive_posterior(&lrs, rho), epsilon = 1e-9);
        }
        let mut prev = 0.0;
        for x in -20..20 {
            let p = posterior_from_shiryaev(x as f64, 0.05);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn detector_rejects_bad_grids() {
        let k = Kernel::new(2, 1, vec![vec![0], vec![0]], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let k1 = Kernel::new(2, 1, vec![vec![0], vec![0]], vec![0.9, 0.1, 0.5, 0.5]).unwrap();
        assert!(Detector::new(DetectorConfig::glr(5, 0.1), &k, &[]).is_err());
        assert!(Detector::new(DetectorConfig::glr(5, 0.1), &k, &[&k]).is_err());
        assert!(Detector::new(DetectorConfig::glr(5, 0.1), &k, &[&k1]).is_ok());
        assert!(Detector::new(DetectorConfig::sr(), &k, &[&k1, &k1]).is_err());
        assert!(Detector::new(DetectorConfig::shiryaev(0.0), &k, &[&k1]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sr_is_shiryaev_with_zero_rho(lrs in proptest::collection::vec(0.01f64..5.0, 1..40)) {
                let mut sr = DetectorState::new(DetectorKind::Sr);
                let mut sh = DetectorState::new(DetectorKind::Shiryaev);
                for &lr in &lrs {
                    sr.sr_step(lr).unwrap();
                    sh.shiryaev_step(lr, 0.0).unwrap();
                    prop_assert!((sr.log_statistic() - sh.log_statistic()).abs() <= 1e-12);
                }
            }

            #[test]
            fn shiryaev_nonnegative(lrs in proptest::collection::vec(0.0f64..5.0, 1..40), rho in 0.0f64..0.9) {
                let st = run_shiryaev(&lrs, rho);
                prop_assert!(st.statistic() >= 0.0);
            }
        }
    }
}
