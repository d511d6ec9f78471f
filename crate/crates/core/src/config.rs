//! Experiment manifest: a TOML file with flat sections, validated into an
//! [`ExperimentConfig`]. Validation errors name the offending key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerKind, ControllerTemplate, ModelFamily, Thresholds};
use crate::detectors::{DetectorConfig, DetectorKind, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::harness::{EpisodeOptions, GridSpec, InventoryEnv, MonteCarloConfig};
use crate::inventory::{ChangeSpec, DemandKind, InventoryParams};
use crate::mdp::DEFAULT_EPS_PROB;
use crate::momdp::{BeliefGridOptions, DEFAULT_GRID_POINTS};

/// Reference for every manifest key, printed by the CLI's `--help`.
pub const KEY_REFERENCE: &str = "\
[inventory]
  capacity        N, shelf capacity in units (integer >= 1). Default 20.
  order_cost      c, cost per unit ordered. Default 1.
  holding_cost    h, cost per unit left on the shelf after demand. Default 5.
  penalty         p, cost per unit of unmet demand. Default 100.
  lambda          Poisson demand rate before the change, units/step. Default 2.
  uniform_max     post-change demand is Uniform on {0..uniform_max} units.
                  Default: capacity.
  post_demand     uniform | poisson, the post-change demand family.
                  Default uniform.
  post_lambda     post-change Poisson rate when post_demand = poisson.
                  Default: lambda.
  initial_state   stock at time 0, units. Default 0.
[change]
  kind            geometric | fixed | never. Default geometric.
  rho             per-step change probability for geometric. Default 0.01.
  gamma           change time for fixed (>= 1). Default 1.
[detector]        statistic used by loc/kl/tt in evaluate and sweep
  kind            shiryaev | sr | cusum | glr. Default shiryaev.
  rho             prior change rate for shiryaev. Default: change.rho.
  window          CUSUM/GLR window m (suffixes of length 1..m+1). Default 200.
  eps_prob        probability floor inside logarithms. Default 1e-12.
  min_separation  GLR candidate separation (sup-norm). Default 0.
[evaluation]
  policies        subset of oracle, loc, kl, tt, momdp, random.
                  Default [oracle, loc, tt, momdp, random].
  beta            discount factor in [0, 1). Default 0.99.
  horizon         steps per episode (>= 1). Default 1000.
  n_runs          episodes per policy (>= 1). Default 1000.
  seed            master seed (unsigned 64-bit). Default 1.
  solver_tol      value-iteration residual tolerance. Default 1e-8.
  belief_grid     belief grid points for the momdp baseline (>= 2). Default 201.
  belief_tol      belief value-iteration tolerance. Default 1e-6.
[thresholds]      grid searched for loc/kl/tt; statistic domain for
                  shiryaev/sr, log domain for cusum/glr
  upper_points    number of log-spaced A values. Default 30.
  upper_min       smallest A (statistic domain). Default 1.
  upper_max       largest A (statistic domain). Default 1e6.
  lower_points    B values per A besides B = 0, from A downwards. Default 15.
  lower_decades   decades spanned by B below A. Default 6.
  cells           explicit [[A, B], ...] list replacing the generated grid.
[calibration]     non-Bayesian frontier (calibrate command)
  detector        sr | cusum. Default sr.
  policies        subset of loc, kl, tt. Default [loc, tt].
  alphas          absolute E_inf cost levels.
  relative_alphas levels as fractions above the pure pre-change policy's
                  E_inf cost: alpha = cost * (1 + r). Default
                  [0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
                  when alphas is empty.
[output]
  dir             output directory. Default out.
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Oracle,
    Loc,
    Kl,
    Tt,
    Momdp,
    Random,
}

impl PolicyName {
    pub fn name(self) -> &'static str {
        match self {
            PolicyName::Oracle => "oracle",
            PolicyName::Loc => "loc",
            PolicyName::Kl => "kl",
            PolicyName::Tt => "tt",
            PolicyName::Momdp => "momdp",
            PolicyName::Random => "random",
        }
    }

    /// The switching-controller kind, `None` for the MOMDP baseline.
    pub fn controller_kind(self) -> Option<ControllerKind> {
        match self {
            PolicyName::Oracle => Some(ControllerKind::Oracle),
            PolicyName::Loc => Some(ControllerKind::Loc),
            PolicyName::Kl => Some(ControllerKind::Kl),
            PolicyName::Tt => Some(ControllerKind::Tt),
            PolicyName::Random => Some(ControllerKind::Random),
            PolicyName::Momdp => None,
        }
    }
}

impl std::str::FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(PolicyName::Oracle),
            "loc" => Ok(PolicyName::Loc),
            "kl" => Ok(PolicyName::Kl),
            "tt" => Ok(PolicyName::Tt),
            "momdp" => Ok(PolicyName::Momdp),
            "random" => Ok(PolicyName::Random),
            other => Err(Error::argument(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    inventory: RawInventory,
    #[serde(default)]
    change: RawChange,
    #[serde(default)]
    detector: RawDetector,
    #[serde(default)]
    evaluation: RawEvaluation,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    calibration: RawCalibration,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInventory {
    capacity: Option<i64>,
    order_cost: Option<f64>,
    holding_cost: Option<f64>,
    penalty: Option<f64>,
    lambda: Option<f64>,
    uniform_max: Option<i64>,
    post_demand: Option<String>,
    post_lambda: Option<f64>,
    initial_state: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChange {
    kind: Option<String>,
    rho: Option<f64>,
    gamma: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    kind: Option<String>,
    rho: Option<f64>,
    window: Option<i64>,
    eps_prob: Option<f64>,
    min_separation: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    policies: Option<Vec<String>>,
    beta: Option<f64>,
    horizon: Option<i64>,
    n_runs: Option<i64>,
    seed: Option<u64>,
    solver_tol: Option<f64>,
    belief_grid: Option<i64>,
    belief_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    upper_points: Option<i64>,
    upper_min: Option<f64>,
    upper_max: Option<f64>,
    lower_points: Option<i64>,
    lower_decades: Option<f64>,
    cells: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    detector: Option<String>,
    policies: Option<Vec<String>>,
    alphas: Option<Vec<f64>>,
    relative_alphas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

/// Command-line values that take precedence over the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_runs: Option<usize>,
    pub horizon: Option<usize>,
    pub out: Option<PathBuf>,
    pub policies: Option<Vec<String>>,
    pub alphas: Option<Vec<f64>>,
}

/// Levels of the non-Bayesian constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlphaLevels {
    Absolute(Vec<f64>),
    /// Fractions above the pure pre-change policy's `E_inf` cost.
    Relative(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub detector: DetectorConfig,
    pub policies: Vec<ControllerKind>,
    pub alphas: AlphaLevels,
}

/// Fully validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub inventory: InventoryParams,
    pub post_demand: DemandKind,
    pub initial_state: usize,
    pub change: ChangeSpec,
    pub detector: DetectorConfig,
    pub policies: Vec<PolicyName>,
    pub beta: f64,
    pub horizon: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub solver_tol: f64,
    pub belief: BeliefGridOptions,
    pub grid: GridSpec,
    pub cells: Option<Vec<Thresholds>>,
    pub calibration: CalibrationConfig,
    pub output_dir: PathBuf,
}

fn count(key: &str, v: Option<i64>, default: usize, min: usize) -> Result<usize> {
    match v {
        None => Ok(default),
        Some(x) if x >= min as i64 => Ok(x as usize),
        Some(x) => Err(Error::config(key, format!("must be an integer >= {min}, got {x}"))),
    }
}

fn real(key: &str, v: Option<f64>, default: f64, ok: impl Fn(f64) -> bool, want: &str) -> Result<f64> {
    let x = v.unwrap_or(default);
    if ok(x) {
        Ok(x)
    } else {
        Err(Error::config(key, format!("must be {want}, got {x}")))
    }
}

fn policy_list(key: &str, names: &[String]) -> Result<Vec<PolicyName>> {
    if names.is_empty() {
        return Err(Error::config(key, "policy list is empty"));
    }
    let mut out = Vec::new();
    for n in names {
        let p: PolicyName = n.parse().map_err(|_| {
            Error::config(key, format!("unknown policy `{n}` (oracle, loc, kl, tt, momdp, random)"))
        })?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl ExperimentConfig {
    /// Parses and validates a manifest, with no overrides.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with(text, &Overrides::default())
    }

    pub fn from_toml_str_with(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "manifest".into());
            Error::config(key, msg)
        })?;
        Self::from_raw(raw, overrides)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str_with(&text, overrides)
    }

    /// Defaults only.
    pub fn default_with(overrides: &Overrides) -> Result<Self> {
        Self::from_raw(RawManifest::default(), overrides)
    }

    fn from_raw(raw: RawManifest, ov: &Overrides) -> Result<Self> {
        let inv = &raw.inventory;
        let capacity = count("inventory.capacity", inv.capacity, 20, 1)?;
        let inventory = InventoryParams {
            capacity,
            order_cost: real("inventory.order_cost", inv.order_cost, 1.0, finite_nonneg, "finite and >= 0")?,
            holding_cost: real(
                "inventory.holding_cost",
                inv.holding_cost,
                5.0,
                finite_nonneg,
                "finite and >= 0",
            )?,
            penalty: real("inventory.penalty", inv.penalty, 100.0, finite_nonneg, "finite and >= 0")?,
            lambda: real(
                "inventory.lambda",
                inv.lambda,
                2.0,
                |x| x.is_finite() && x > 0.0,
                "finite and > 0",
            )?,
            uniform_max: count("inventory.uniform_max", inv.uniform_max, capacity, 0)?,
        };
        let post_demand = match inv.post_demand.as_deref().unwrap_or("uniform") {
            "uniform" => DemandKind::Uniform {
                max: inventory.uniform_max,
            },
            "poisson" => DemandKind::Poisson {
                lambda: real(
                    "inventory.post_lambda",
                    inv.post_lambda,
                    inventory.lambda,
                    |x| x.is_finite() && x > 0.0,
                    "finite and > 0",
                )?,
            },
            other => {
                return Err(Error::config(
                    "inventory.post_demand",
                    format!("unknown demand family `{other}` (uniform, poisson)"),
                ))
            }
        };
        let initial_state = count("inventory.initial_state", inv.initial_state, 0, 0)?;
        if initial_state > capacity {
            return Err(Error::config(
                "inventory.initial_state",
                format!("{initial_state} exceeds capacity {capacity}"),
            ));
        }

        let ch = &raw.change;
        let change = match ch.kind.as_deref().unwrap_or("geometric") {
            "geometric" => ChangeSpec::Geometric {
                rho: real("change.rho", ch.rho, 0.01, |x| x > 0.0 && x <= 1.0, "in (0, 1]")?,
            },
            "fixed" => ChangeSpec::Fixed {
                gamma: count("change.gamma", ch.gamma, 1, 1)?,
            },
            "never" => ChangeSpec::Never,
            other => {
                return Err(Error::config(
                    "change.kind",
                    format!("unknown change kind `{other}` (geometric, fixed, never)"),
                ))
            }
        };
        let change_rho = match change {
            ChangeSpec::Geometric { rho } => Some(rho),
            _ => None,
        };

        let det = &raw.detector;
        let kind: DetectorKind = det
            .kind
            .as_deref()
            .unwrap_or("shiryaev")
            .parse()
            .map_err(|e: Error| Error::config("detector.kind", e.to_string()))?;
        let rho = match (kind, det.rho.or(change_rho)) {
            (DetectorKind::Shiryaev, None) => {
                return Err(Error::config(
                    "detector.rho",
                    "required for shiryaev when the change is not geometric",
                ))
            }
            (DetectorKind::Shiryaev, Some(r)) => {
                real("detector.rho", Some(r), r, |x| x > 0.0 && x < 1.0, "in (0, 1)")?
            }
            _ => 0.0,
        };
        let detector = DetectorConfig {
            kind,
            rho,
            window: count("detector.window", det.window, DEFAULT_WINDOW, 0)?,
            eps_prob: real(
                "detector.eps_prob",
                det.eps_prob,
                DEFAULT_EPS_PROB,
                |x| x > 0.0 && x < 1.0,
                "in (0, 1)",
            )?,
            min_separation: real(
                "detector.min_separation",
                det.min_separation,
                0.0,
                finite_nonneg,
                "finite and >= 0",
            )?,
        };
        detector
            .validate()
            .map_err(|e| Error::config("detector", e.to_string()))?;

        let ev = &raw.evaluation;
        let policies = match (&ov.policies, &ev.policies) {
            (Some(p), _) => policy_list("--policies", p)?,
            (None, Some(p)) => policy_list("evaluation.policies", p)?,
            (None, None) => vec![
                PolicyName::Oracle,
                PolicyName::Loc,
                PolicyName::Tt,
                PolicyName::Momdp,
                PolicyName::Random,
            ],
        };
        let beta = real("evaluation.beta", ev.beta, 0.99, |x| (0.0..1.0).contains(&x), "in [0, 1)")?;
        let horizon = match ov.horizon {
            Some(0) => return Err(Error::config("--horizon", "must be >= 1")),
            Some(h) => h,
            None => count("evaluation.horizon", ev.horizon, 1000, 1)?,
        };
        let n_runs = match ov.n_runs {
            Some(0) => return Err(Error::config("--n-runs", "must be >= 1")),
            Some(n) => n,
            None => count("evaluation.n_runs", ev.n_runs, 1000, 1)?,
        };
        let seed = ov.seed.or(ev.seed).unwrap_or(1);
        let solver_tol = real(
            "evaluation.solver_tol",
            ev.solver_tol,
            1e-8,
            |x| x > 0.0 && x.is_finite(),
            "positive",
        )?;
        let belief = BeliefGridOptions {
            grid_points: count("evaluation.belief_grid", ev.belief_grid, DEFAULT_GRID_POINTS, 2)?,
            tol: real(
                "evaluation.belief_tol",
                ev.belief_tol,
                1e-6,
                |x| x > 0.0 && x.is_finite(),
                "positive",
            )?,
        };

        let th = &raw.thresholds;
        let defaults = GridSpec::default();
        let grid = GridSpec {
            upper_points: count("thresholds.upper_points", th.upper_points, defaults.upper_points, 1)?,
            upper_min: real(
                "thresholds.upper_min",
                th.upper_min,
                defaults.upper_min,
                |x| x > 0.0 && x.is_finite(),
                "positive",
            )?,
            upper_max: real(
                "thresholds.upper_max",
                th.upper_max,
                defaults.upper_max,
                |x| x > 0.0 && x.is_finite(),
                "positive",
            )?,
            lower_points: count("thresholds.lower_points", th.lower_points, defaults.lower_points, 0)?,
            lower_decades: real(
                "thresholds.lower_decades",
                th.lower_decades,
                defaults.lower_decades,
                finite_nonneg,
                "finite and >= 0",
            )?,
        };
        if grid.upper_max < grid.upper_min {
            return Err(Error::config("thresholds.upper_max", "must be >= upper_min"));
        }
        let cells = match &th.cells {
            None => None,
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::config("thresholds.cells", "empty cell list"));
                }
                let mut out = Vec::with_capacity(list.len());
                for c in list {
                    let t = match c.as_slice() {
                        [a] => Thresholds::new(*a, *a),
                        [a, b] => Thresholds::new(*a, *b),
                        _ => return Err(Error::config("thresholds.cells", "cells are [A] or [A, B]")),
                    }
                    .map_err(|e| Error::config("thresholds.cells", e.to_string()))?;
                    out.push(t);
                }
                Some(out)
            }
        };

        let cal = &raw.calibration;
        let cal_kind: DetectorKind = cal
            .detector
            .as_deref()
            .unwrap_or("sr")
            .parse()
            .map_err(|e: Error| Error::config("calibration.detector", e.to_string()))?;
        let cal_detector = match cal_kind {
            DetectorKind::Sr => DetectorConfig::sr(),
            DetectorKind::Cusum => DetectorConfig::cusum(detector.window),
            _ => {
                return Err(Error::config(
                    "calibration.detector",
                    "non-Bayesian calibration uses sr or cusum",
                ))
            }
        };
        let cal_detector = DetectorConfig {
            eps_prob: detector.eps_prob,
            ..cal_detector
        };
        let cal_policies = match &cal.policies {
            None => vec![ControllerKind::Loc, ControllerKind::Tt],
            Some(p) => policy_list("calibration.policies", p)?
                .into_iter()
                .map(|p| match p {
                    PolicyName::Loc => Ok(ControllerKind::Loc),
                    PolicyName::Kl => Ok(ControllerKind::Kl),
                    PolicyName::Tt => Ok(ControllerKind::Tt),
                    other => Err(Error::config(
                        "calibration.policies",
                        format!("`{}` has no thresholds to calibrate", other.name()),
                    )),
                })
                .collect::<Result<_>>()?,
        };
        let alphas = match (&ov.alphas, &cal.alphas, &cal.relative_alphas) {
            (Some(a), _, _) => {
                if a.is_empty() {
                    return Err(Error::config("--alphas", "alpha list is empty"));
                }
                AlphaLevels::Absolute(a.clone())
            }
            (None, Some(a), _) if !a.is_empty() => AlphaLevels::Absolute(a.clone()),
            (None, Some(_), None) => return Err(Error::config("calibration.alphas", "alpha list is empty")),
            (None, _, Some(r)) => {
                if r.is_empty() {
                    return Err(Error::config("calibration.relative_alphas", "alpha list is empty"));
                }
                AlphaLevels::Relative(r.clone())
            }
            (None, None, None) => AlphaLevels::Relative(vec![
                0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5,
            ]),
        };
        let (key, levels) = match &alphas {
            AlphaLevels::Absolute(a) => ("calibration.alphas", a),
            AlphaLevels::Relative(r) => ("calibration.relative_alphas", r),
        };
        if levels.iter().any(|x| !x.is_finite() || (matches!(alphas, AlphaLevels::Relative(_)) && *x < 0.0)) {
            return Err(Error::config(key, "levels must be finite (relative levels >= 0)"));
        }

        let output_dir = ov
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(raw.output.dir.as_deref().unwrap_or("out")));

        Ok(Self {
            inventory,
            post_demand,
            initial_state,
            change,
            detector,
            policies,
            beta,
            horizon,
            n_runs,
            seed,
            solver_tol,
            belief,
            grid,
            cells,
            calibration: CalibrationConfig {
                detector: cal_detector,
                policies: cal_policies,
                alphas,
            },
            output_dir,
        })
    }

    pub fn environment(&self) -> Result<InventoryEnv> {
        InventoryEnv::new(
            &self.inventory,
            DemandKind::Poisson {
                lambda: self.inventory.lambda,
            },
            self.post_demand,
            self.initial_state,
        )
    }

    /// Per-step change probability assumed by Bayesian components: the
    /// geometric change rate, else the Shiryaev detector's prior.
    pub fn prior_rho(&self) -> Option<f64> {
        match self.change {
            ChangeSpec::Geometric { rho } => Some(rho),
            _ if self.detector.kind == DetectorKind::Shiryaev => Some(self.detector.rho),
            _ => None,
        }
    }

    pub fn family(&self, env: &InventoryEnv) -> Result<Arc<ModelFamily>> {
        use crate::harness::Environment;
        Ok(Arc::new(ModelFamily::pair(
            env.model(false).clone(),
            env.model(true).clone(),
            self.beta,
            self.solver_tol,
        )?))
    }

    pub fn monte_carlo(&self) -> MonteCarloConfig {
        MonteCarloConfig {
            change: self.change,
            episode: EpisodeOptions::new(self.horizon, self.beta),
            n_runs: self.n_runs,
            seed: self.seed,
        }
    }

    /// Threshold grid for one controller kind under detector `kind`.
    pub fn threshold_grid(&self, policy: ControllerKind, kind: DetectorKind) -> Vec<Thresholds> {
        if let Some(cells) = &self.cells {
            return match policy {
                ControllerKind::Loc | ControllerKind::Kl => {
                    let mut uppers: Vec<f64> = cells.iter().map(|c| c.upper).collect();
                    uppers.sort_by(f64::total_cmp);
                    uppers.dedup();
                    uppers.into_iter().map(Thresholds::single).collect()
                }
                _ => cells.clone(),
            };
        }
        match policy {
            ControllerKind::Tt => self.grid.tt_grid(kind),
            _ => self.grid.loc_grid(kind),
        }
    }

    pub fn template(
        &self,
        family: &Arc<ModelFamily>,
        kind: ControllerKind,
        detector: DetectorConfig,
    ) -> Result<ControllerTemplate> {
        ControllerTemplate::pair(Arc::clone(family), kind, detector, Thresholds::never())
    }
}
