use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use nsmdp::config::{AlphaLevels, ExperimentConfig};
use nsmdp::controller::{kl_policy, ControllerKind, Thresholds};
use nsmdp::detectors::{posterior_from_shiryaev, DetectorKind, DetectorState, LlrTable};
use nsmdp::harness::{
    format_float, frontier_sweep, monte_carlo, optimize_thresholds, ordering_violations,
    simulate_fixed_policy, write_frontier_csv, write_runs_csv, write_summary_csv, Calibration,
    Environment, EvaluationReport, Policy,
};
use nsmdp::inventory::{ChangeSpec, DemandKind, InventoryParams};
use nsmdp::mdp::{
    info_number_floored, max_info_number_with, RviOptions, StationaryPolicy, TabularMdp,
    Transition, ValueFunction,
};
use nsmdp::momdp::{belief_grid_solve, build_pomdp, BeliefPolicy};
use nsmdp::{Error, Result};

const MODEL_FILE: &str = "model.json";
const SOLUTION_FILE: &str = "solution.json";
const MOMDP_FILE: &str = "momdp_policy.json";

#[derive(Serialize)]
struct ModelFile<'a> {
    inventory: InventoryParams,
    post_demand: DemandKind,
    initial_state: usize,
    pre: &'a TabularMdp,
    post: &'a TabularMdp,
}

/// Problem identity shared by every artifact of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Problem {
    inventory: InventoryParams,
    post_demand: DemandKind,
    initial_state: usize,
    beta: f64,
}

impl Problem {
    fn of(config: &ExperimentConfig) -> Self {
        Self {
            inventory: config.inventory,
            post_demand: config.post_demand,
            initial_state: config.initial_state,
            beta: config.beta,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Solution {
    problem: Problem,
    pi0: StationaryPolicy,
    pi1: StationaryPolicy,
    pi_kl: StationaryPolicy,
    max_info_policy: StationaryPolicy,
    v0: ValueFunction,
    v1: ValueFunction,
    i_pi0: f64,
    i_max: f64,
    i_pi_kl: f64,
}

#[derive(Serialize, Deserialize)]
struct MomdpFile {
    problem: Problem,
    rho: f64,
    policy: BeliefPolicy,
}

fn out_path(config: &ExperimentConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_artifact<T: for<'de> Deserialize<'de>>(config: &ExperimentConfig, name: &str) -> Result<T> {
    let path = out_path(config, name);
    let text = fs::read_to_string(&path).map_err(|_| {
        Error::State(format!(
            "{} not found; run `nsmdp solve` with the same config first",
            path.display()
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn check_problem(found: &Problem, config: &ExperimentConfig, name: &str) -> Result<()> {
    if *found != Problem::of(config) {
        return Err(Error::State(format!(
            "{name} was produced for a different problem; rerun `nsmdp solve`"
        )));
    }
    Ok(())
}

pub fn solve(config: &ExperimentConfig) -> Result<()> {
    let env = config.environment()?;
    let family = config.family(&env)?;
    let (k0, k1) = (family.kernel(0), family.kernel(1));
    let eps = config.detector.eps_prob;
    let pi_kl = kl_policy(k0, k1)?;
    let (i_max, max_info_policy) = max_info_number_with(
        k0,
        k1,
        RviOptions {
            eps_prob: eps,
            ..RviOptions::default()
        },
    )?;
    let solution = Solution {
        problem: Problem::of(config),
        pi0: family.optimal_policy(0).clone(),
        pi1: family.optimal_policy(1).clone(),
        i_pi0: info_number_floored(k0, k1, family.optimal_policy(0), eps)?,
        i_pi_kl: info_number_floored(k0, k1, &pi_kl, eps)?,
        pi_kl,
        max_info_policy,
        v0: family.value(0).clone(),
        v1: family.value(1).clone(),
        i_max,
    };
    write_json(
        &out_path(config, MODEL_FILE),
        &ModelFile {
            inventory: config.inventory,
            post_demand: config.post_demand,
            initial_state: config.initial_state,
            pre: family.model(0),
            post: family.model(1),
        },
    )?;
    write_json(&out_path(config, SOLUTION_FILE), &solution)?;
    println!("I_pi0   {}", format_float(solution.i_pi0));
    println!("I_max   {}", format_float(solution.i_max));
    println!("I_piKL  {}", format_float(solution.i_pi_kl));

    match config.prior_rho() {
        Some(rho) => {
            let pomdp = build_pomdp(family.model(0).clone(), family.model(1).clone(), rho)?;
            let policy = belief_grid_solve(&pomdp, config.beta, config.belief)?;
            println!(
                "momdp   {} belief points, {} sweeps, residual {}",
                policy.grid_points(),
                policy.sweeps,
                format_float(policy.residual)
            );
            write_json(
                &out_path(config, MOMDP_FILE),
                &MomdpFile {
                    problem: Problem::of(config),
                    rho,
                    policy,
                },
            )?;
        }
        None => eprintln!("note: no change rate available; momdp baseline not solved"),
    }
    Ok(())
}

fn print_summary(reports: &[EvaluationReport]) {
    println!("{:<8} {:>14} {:>12} {:>10} {:>14} {:>14}", "policy", "mean_cost", "stderr", "delay", "A", "B");
    for r in reports {
        let s = &r.summary;
        let t = |f: fn(&Thresholds) -> f64| s.thresholds.as_ref().map(f).map(format_float).unwrap_or_default();
        println!(
            "{:<8} {:>14} {:>12} {:>10} {:>14} {:>14}",
            s.policy,
            format_float(s.mean_cost),
            format_float(s.stderr),
            s.mean_delay.map(format_float).unwrap_or_default(),
            t(|x| x.upper),
            t(|x| x.lower),
        );
    }
}

pub fn evaluate(config: &ExperimentConfig, assert_ordering: bool) -> Result<()> {
    let solution: Solution = read_artifact(config, SOLUTION_FILE)?;
    check_problem(&solution.problem, config, SOLUTION_FILE)?;
    let env = config.environment()?;
    let family = config.family(&env)?;
    let mc = config.monte_carlo();
    let mut reports = Vec::with_capacity(config.policies.len());
    for &name in &config.policies {
        let report = match name.controller_kind() {
            Some(kind) if kind.uses_detector() => {
                let template = config.template(&family, kind, config.detector)?;
                let grid = config.threshold_grid(kind, config.detector.kind);
                let search = optimize_thresholds(&env, &template, &grid, &mc)?;
                monte_carlo(&env, &Policy::Switch(template.with_thresholds(search.best)?), &mc)?
            }
            Some(kind) => monte_carlo(
                &env,
                &Policy::Switch(config.template(&family, kind, config.detector)?),
                &mc,
            )?,
            None => {
                let file: MomdpFile = read_artifact(config, MOMDP_FILE)?;
                check_problem(&file.problem, config, MOMDP_FILE)?;
                let pomdp = build_pomdp(env.model(false).clone(), env.model(true).clone(), file.rho)?;
                let policy = Policy::Momdp {
                    pomdp: Arc::new(pomdp),
                    policy: Arc::new(file.policy),
                };
                monte_carlo(&env, &policy, &mc)?
            }
        };
        reports.push(report);
    }
    let mut w = create(&out_path(config, "runs.csv"))?;
    let runs: Vec<_> = reports.iter().flat_map(|r| r.runs.iter().cloned()).collect();
    write_runs_csv(&mut w, &runs)?;
    w.flush()?;
    let summaries: Vec<_> = reports.iter().map(|r| r.summary.clone()).collect();
    let mut w = create(&out_path(config, "summary.csv"))?;
    write_summary_csv(&mut w, &summaries)?;
    w.flush()?;
    print_summary(&reports);

    if assert_ordering {
        let violations = ordering_violations(&summaries);
        if !violations.is_empty() {
            return Err(Error::State(format!("ordering check failed: {}", violations.join("; "))));
        }
        println!("ordering check passed");
    }
    Ok(())
}

fn threshold_policies(config: &ExperimentConfig) -> Vec<ControllerKind> {
    let kinds: Vec<_> = config
        .policies
        .iter()
        .filter_map(|p| p.controller_kind())
        .filter(|k| k.uses_detector())
        .collect();
    if kinds.is_empty() {
        vec![ControllerKind::Loc, ControllerKind::Tt]
    } else {
        kinds
    }
}

#[derive(Serialize)]
struct ChosenThresholds {
    policy: &'static str,
    detector: DetectorKind,
    upper: f64,
    lower: f64,
    mean_cost: f64,
    stderr: f64,
}

pub fn sweep(config: &ExperimentConfig) -> Result<()> {
    let env = config.environment()?;
    let family = config.family(&env)?;
    let mc = config.monte_carlo();
    let mut w = csv::Writer::from_writer(create(&out_path(config, "sweep.csv"))?);
    w.write_record(["policy", "A", "B", "mean_cost", "stderr"])?;
    let mut chosen = Vec::new();
    for kind in threshold_policies(config) {
        let template = config.template(&family, kind, config.detector)?;
        let grid = config.threshold_grid(kind, config.detector.kind);
        let search = optimize_thresholds(&env, &template, &grid, &mc)?;
        for cell in &search.cells {
            w.write_record([
                kind.name().to_string(),
                format_float(cell.thresholds.upper),
                format_float(cell.thresholds.lower),
                format_float(cell.mean_cost),
                format_float(cell.stderr),
            ])?;
        }
        println!(
            "{:<4} A = {}  B = {}  cost = {} +/- {}",
            kind.name(),
            format_float(search.best.upper),
            format_float(search.best.lower),
            format_float(search.summary.mean_cost),
            format_float(search.summary.stderr)
        );
        chosen.push(ChosenThresholds {
            policy: kind.name(),
            detector: config.detector.kind,
            upper: search.best.upper,
            lower: search.best.lower,
            mean_cost: search.summary.mean_cost,
            stderr: search.summary.stderr,
        });
    }
    w.flush()?;
    write_json(&out_path(config, "thresholds.json"), &chosen)?;
    Ok(())
}

pub fn calibrate(config: &ExperimentConfig) -> Result<()> {
    let env = config.environment()?;
    let family = config.family(&env)?;
    let mc = config.monte_carlo();
    let detector = config.calibration.detector;
    let alphas = match &config.calibration.alphas {
        AlphaLevels::Absolute(a) => a.clone(),
        AlphaLevels::Relative(r) => {
            let pure = config.template(&family, ControllerKind::Loc, detector)?;
            let base = monte_carlo(&env, &Policy::Switch(pure), &mc.with_change(ChangeSpec::Never))?
                .summary
                .mean_cost;
            println!("pure pre-change E_inf cost {}", format_float(base));
            r.iter().map(|x| base * (1.0 + x)).collect()
        }
    };
    let mut policies = Vec::new();
    for &kind in &config.calibration.policies {
        let template = config.template(&family, kind, detector)?;
        policies.push((template, config.threshold_grid(kind, detector.kind)));
    }
    let rows = frontier_sweep(&env, &policies, &alphas, &mc)?;
    let mut w = create(&out_path(config, "frontier.csv"))?;
    write_frontier_csv(&mut w, &rows)?;
    w.flush()?;
    let mut feasible = 0;
    for row in &rows {
        match row.calibration {
            Calibration::Feasible { alpha, cell } => {
                feasible += 1;
                println!(
                    "alpha {:>12} {:<4} A = {:>12} B = {:>12} E_1 = {} +/- {}  E_inf = {}",
                    format_float(alpha),
                    row.policy,
                    format_float(cell.thresholds.upper),
                    format_float(cell.thresholds.lower),
                    format_float(cell.e1_cost),
                    format_float(cell.e1_stderr),
                    format_float(cell.einf_cost)
                );
            }
            Calibration::Infeasible { alpha, closest } => eprintln!(
                "alpha {} infeasible for {}: closest cell A = {} B = {} has E_inf = {}",
                format_float(alpha),
                row.policy,
                format_float(closest.thresholds.upper),
                format_float(closest.thresholds.lower),
                format_float(closest.einf_cost)
            ),
        }
    }
    if feasible == 0 {
        return Err(Error::State("no alpha level is attainable on the threshold grid".into()));
    }
    Ok(())
}

#[derive(Deserialize)]
struct TrajectoryRow {
    s: usize,
    a: usize,
    s_next: usize,
}

fn read_trajectory(path: &Path) -> Result<Vec<Transition>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config {
            key: "--trajectory".into(),
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<TrajectoryRow>() {
        let r = row?;
        out.push(Transition::new(r.s, r.a, r.s_next));
    }
    Ok(out)
}

pub fn info(config: &ExperimentConfig, trajectory: Option<&Path>, steps: usize) -> Result<()> {
    let env = config.environment()?;
    let family = config.family(&env)?;
    let path = match trajectory {
        Some(p) => read_trajectory(p)?,
        None => {
            let (gamma, path) =
                simulate_fixed_policy(&env, family.optimal_policy(0), config.change, steps, config.seed)?;
            eprintln!("simulated change point: {gamma}");
            path
        }
    };
    let table = LlrTable::new(family.kernel(0), family.kernel(1), config.detector.eps_prob)?;
    let rho = config.prior_rho();
    let mut shiryaev = DetectorState::new(DetectorKind::Shiryaev);
    let mut sr = DetectorState::new(DetectorKind::Sr);
    let mut cusum = DetectorState::new(DetectorKind::Cusum);
    let stdout = io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    w.write_record(["n", "s", "a", "s_next", "llr", "shiryaev", "sr", "cusum", "posterior"])?;
    for (i, t) in path.iter().enumerate() {
        let llr = table.get(*t)?;
        sr.sr_step_log(llr)?;
        cusum.cusum_step(llr, config.detector.window)?;
        let (shir, post) = match rho {
            Some(r) => {
                shiryaev.shiryaev_step_log(llr, r)?;
                (
                    format_float(shiryaev.statistic()),
                    format_float(posterior_from_shiryaev(shiryaev.log_statistic(), r)),
                )
            }
            None => (String::new(), String::new()),
        };
        w.write_record([
            (i + 1).to_string(),
            t.state.to_string(),
            t.action.to_string(),
            t.next.to_string(),
            format_float(llr),
            shir,
            format_float(sr.statistic()),
            format_float(cusum.statistic()),
            post,
        ])?;
    }
    w.flush()?;
    Ok(())
}
