//! CSV writers. Floats carry 9 significant digits; absent values are
//! empty fields and infinite thresholds are written `inf`.

use std::io::Write;

use super::{Calibration, FrontierRow, PolicySummary, RunRecord};
use crate::error::Result;

pub const RUNS_HEADER: [&str; 8] = [
    "run_id",
    "policy",
    "gamma",
    "tau_switch",
    "horizon",
    "discounted_cost",
    "detection_delay",
    "premature_switch",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "policy", "n_runs", "mean_cost", "stderr", "mean_delay", "A", "B", "seed",
];

pub const FRONTIER_HEADER: [&str; 8] = [
    "alpha",
    "policy",
    "A",
    "B",
    "e1_cost",
    "e1_stderr",
    "einf_cost",
    "einf_stderr",
];

/// `%.9g`-style formatting: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_runs_csv<W: Write>(out: W, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER)?;
    for r in runs {
        w.write_record([
            r.run_id.to_string(),
            r.policy.clone(),
            r.gamma.to_string(),
            opt(r.tau_switch),
            r.horizon.to_string(),
            format_float(r.discounted_cost),
            opt(r.detection_delay),
            u8::from(r.premature_switch).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, summaries: &[PolicySummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.write_record([
            s.policy.clone(),
            s.n_runs.to_string(),
            format_float(s.mean_cost),
            format_float(s.stderr),
            opt(s.mean_delay.map(format_float)),
            opt(s.thresholds.map(|t| format_float(t.upper))),
            opt(s.thresholds.map(|t| format_float(t.lower))),
            s.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Infeasible rows are skipped; they carry no calibrated thresholds.
pub fn write_frontier_csv<W: Write>(out: W, rows: &[FrontierRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRONTIER_HEADER)?;
    for r in rows {
        let Calibration::Feasible { alpha, cell } = r.calibration else {
            continue;
        };
        w.write_record([
            format_float(alpha),
            r.policy.clone(),
            format_float(cell.thresholds.upper),
            format_float(cell.thresholds.lower),
            format_float(cell.e1_cost),
            format_float(cell.e1_stderr),
            format_float(cell.einf_cost),
            format_float(cell.einf_stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}
