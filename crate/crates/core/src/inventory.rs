//! Single-item inventory control with lost sales.
//!
//! The inventory level `s` lives in `{0..N}`, the order `a` in
//! `{0..N-s}`, and demand `w` is i.i.d. within a regime. The next level is
//! `max(0, s + a - w)` and the per-step cost is the exact expectation over
//! demand of ordering, holding and lost-demand penalties.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryParams {
    /// Capacity `N` (units).
    pub capacity: usize,
    /// Cost per unit ordered.
    pub order_cost: f64,
    /// Cost per unit held after demand.
    pub holding_cost: f64,
    /// Cost per unit of unmet demand.
    pub penalty: f64,
    /// Poisson demand rate before the change.
    pub lambda: f64,
    /// Upper end of the post-change Uniform demand support `{0..u_max}`.
    pub uniform_max: usize,
}

impl InventoryParams {
    /// `c = 1`, `h = 5`, `lambda = 2`, Uniform support `{0..N}`.
    pub fn standard(capacity: usize, penalty: f64) -> Self {
        Self {
            capacity,
            order_cost: 1.0,
            holding_cost: 5.0,
            penalty,
            lambda: 2.0,
            uniform_max: capacity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::argument("capacity must be at least 1"));
        }
        for (name, v) in [
            ("order_cost", self.order_cost),
            ("holding_cost", self.holding_cost),
            ("penalty", self.penalty),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::argument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::argument(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DemandKind {
    Poisson { lambda: f64 },
    Uniform { max: usize },
}

/// Truncation point for Poisson demand; the tail mass is folded into it.
pub fn poisson_cap(lambda: f64) -> usize {
    60usize.max((lambda + 10.0 * lambda.sqrt()).ceil() as usize)
}

/// Demand distribution on `{0..len-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPmf {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DemandPmf {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::argument("demand pmf must be nonempty and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::argument(format!("demand pmf sums to {total}")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok(Self { probs, cdf })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P(w = k)`.
    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// `P(w >= k)`.
    pub fn tail(&self, k: usize) -> f64 {
        self.probs.iter().skip(k).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> usize {
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.quantile(rng.gen::<f64>())
    }
}

/// Exact demand pmf; Poisson is truncated at [`poisson_cap`].
pub fn demand_pmf(kind: DemandKind) -> Result<DemandPmf> {
    match kind {
        DemandKind::Poisson { lambda } => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::argument(format!("Poisson rate {lambda} must be positive")));
            }
            let cap = poisson_cap(lambda);
            let mut probs = Vec::with_capacity(cap + 1);
            let mut log_fact = 0.0;
            for k in 0..cap {
                if k > 0 {
                    log_fact += (k as f64).ln();
                }
                probs.push((-lambda + k as f64 * lambda.ln() - log_fact).exp());
            }
            let head: f64 = probs.iter().sum();
            probs.push((1.0 - head).max(0.0));
            DemandPmf::from_probs(probs)
        }
        DemandKind::Uniform { max } => DemandPmf::from_probs(vec![1.0 / (max + 1) as f64; max + 1]),
    }
}

/// Inventory MDP for one demand regime.
pub fn build_inventory_mdp(params: &InventoryParams, kind: DemandKind) -> Result<TabularMdp> {
    params.validate()?;
    let pmf = demand_pmf(kind)?;
    build_from_pmf(params, &pmf)
}

pub(crate) fn build_from_pmf(params: &InventoryParams, pmf: &DemandPmf) -> Result<TabularMdp> {
    let n = params.capacity + 1;
    let feasible: Vec<Vec<usize>> = (0..n).map(|s| (0..n - s).collect()).collect();
    TabularMdp::from_fn(
        n,
        n,
        feasible,
        |s, a, j| {
            let level = s + a;
            match j {
                0 => pmf.tail(level),
                j if j <= level => pmf.prob(level - j),
                _ => 0.0,
            }
        },
        |s, a| {
            let level = s + a;
            let (mut held, mut lost) = (0.0, 0.0);
            for (w, p) in pmf.probs().iter().enumerate() {
                if w <= level {
                    held += p * (level - w) as f64;
                } else {
                    lost += p * (w - level) as f64;
                }
            }
            params.order_cost * a as f64 + params.holding_cost * held + params.penalty * lost
        },
    )
}

/// One simulated period: returns `(s', w)`.
pub fn simulate_step(s: usize, a: usize, pmf: &DemandPmf, rng: &mut impl Rng) -> (usize, usize) {
    let w = pmf.sample(rng);
    ((s + a).saturating_sub(w), w)
}

/// Realised change point `Gamma`: the regime is post-change at step `k`
/// iff `k >= Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChangePoint {
    At(usize),
    Never,
}

impl ChangePoint {
    #[inline]
    pub fn is_post(self, k: usize) -> bool {
        match self {
            ChangePoint::At(g) => k >= g,
            ChangePoint::Never => false,
        }
    }

    pub fn time(self) -> Option<usize> {
        match self {
            ChangePoint::At(g) => Some(g),
            ChangePoint::Never => None,
        }
    }
}

impl std::fmt::Display for ChangePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChangePoint::At(g) => write!(f, "{g}"),
            ChangePoint::Never => f.write_str("inf"),
        }
    }
}

/// How the change point is drawn per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChangeSpec {
    /// `P(Gamma = k) = rho (1 - rho)^(k-1)`, `k >= 1`.
    Geometric { rho: f64 },
    /// Deterministic change point; `Fixed { gamma: 1 }` realises `E_1`.
    Fixed { gamma: usize },
    /// No change; realises `E_inf`.
    Never,
}

impl ChangeSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChangeSpec::Geometric { rho } if !(rho > 0.0 && rho <= 1.0) => {
                Err(Error::argument(format!("geometric rho {rho} outside (0, 1]")))
            }
            ChangeSpec::Fixed { gamma: 0 } => Err(Error::argument("fixed change point must be >= 1")),
            _ => Ok(()),
        }
    }
}

pub fn sample_change_point(spec: ChangeSpec, rng: &mut impl Rng) -> ChangePoint {
    match spec {
        ChangeSpec::Fixed { gamma } => ChangePoint::At(gamma),
        ChangeSpec::Never => ChangePoint::Never,
        ChangeSpec::Geometric { rho } => {
            if rho >= 1.0 {
                return ChangePoint::At(1);
            }
            // P(Gamma > k) = (1 - rho)^k
            let u: f64 = 1.0 - rng.gen::<f64>();
            let failures = (u.ln() / (-rho).ln_1p()).floor();
            if failures >= (usize::MAX / 2) as f64 {
                ChangePoint::Never
            } else {
                ChangePoint::At(1 + failures as usize)
            }
        }
    }
}
