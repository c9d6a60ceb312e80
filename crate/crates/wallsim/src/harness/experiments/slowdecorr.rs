//! Slow decorrelation: restarting from step data at `T^ν` below particle
//! `(α/α_i)T^ν` changes the rescaled path of particle `αT` around `α_i T` by
//! little.

use serde::Serialize;

use super::super::config::SlowdecorrConfig;
use super::super::stats::EmpiricalDistribution;
use super::super::{decreasing, fmt_list, map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::step_log;
use crate::couplings::{restart_step, round_label, CouplingMode, EventSource, RestartFrom, RestartSpec};
use crate::dynamics::LabelPath;
use crate::scaling::Window;

const BLOCK: u64 = 70;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecorrelationRow {
    pub horizon: f64,
    pub replica: u64,
    pub restart_time: f64,
    pub restart_label: i64,
    pub inequality_held: bool,
    /// `sup |X̂ - X̃|` over the part of the window after the restart.
    pub sup_difference: f64,
}

fn jump_times(paths: &[&LabelPath], from: f64, to: f64) -> Vec<f64> {
    let mut out = vec![from];
    for p in paths {
        out.extend(p.jumps.iter().copied().filter(|&s| s > from && s <= to));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

pub fn replica(cfg: &SlowdecorrConfig, horizon: f64, seed: u64, block: u64, r: u64) -> Result<DecorrelationRow, HarnessError> {
    let window = Window::new(0, cfg.alpha, cfg.alpha_i, horizon)?;
    let n = window.label;
    let restart_time = horizon.powf(cfg.nu);
    let restart_label = round_label(cfg.alpha / cfg.alpha_i * restart_time).max(1);
    let k = n - restart_label;
    if k < 1 {
        return Err(HarnessError::Config(format!("restart label {restart_label} is not below particle {n}")));
    }
    let (lo, hi) = window.time_range(cfg.varkappa.max(0.0));
    let hi = hi.min(horizon);
    if restart_time > hi {
        return Err(HarnessError::Config(format!("restart time {restart_time:.2} is after the window end {hi:.2}")));
    }
    let source = EventSource::new(CouplingMode::Basic, replica_randomness(seed, block, r));
    let log = step_log(&source, hi, n)?;
    let top = log.position(restart_label, restart_time).expect("label in log");
    let spec = RestartSpec { time: restart_time, from: RestartFrom::Position(top) };
    let restarted = restart_step(&log, &source, spec, hi, k)?;
    let (x, y) = (log.path(n).expect("label in log"), restarted.path(k).expect("label in restart"));
    let inequality_held = jump_times(&[x, y], restart_time, hi)
        .into_iter()
        .all(|s| x.position(s).expect("in range") <= y.position(s).expect("in range"));
    let norm = window.coeffs.c1 * horizon.cbrt();
    let sup_difference = jump_times(&[x, y], lo.max(restart_time), hi)
        .into_iter()
        .map(|s| (y.position(s).expect("in range") - x.position(s).expect("in range")).abs() as f64 / norm)
        .fold(0.0, f64::max);
    Ok(DecorrelationRow { horizon, replica: r, restart_time, restart_label, inequality_held, sup_difference })
}

pub fn run(cfg: &SlowdecorrConfig, seed: u64) -> Result<Report, HarnessError> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();

    if cfg.inequality_replicas > 0 {
        let t = cfg.inequality_horizon;
        let out = map_replicas(cfg.inequality_replicas, |r| replica(cfg, t, seed, BLOCK, r))?;
        let held = out.iter().filter(|r| r.inequality_held).count();
        checks.push(Check::new(
            "restart_upper_bound",
            held == out.len(),
            format!("{held}/{} runs at T = {t}", out.len()),
        ));
        rows.extend(out);
    }

    if cfg.replicas > 0 && !cfg.horizons.is_empty() {
        let mut medians = Vec::new();
        for (i, &t) in cfg.horizons.iter().enumerate() {
            let out = map_replicas(cfg.replicas, |r| replica(cfg, t, seed, BLOCK + 1 + i as u64, r))?;
            let held = out.iter().filter(|r| r.inequality_held).count();
            checks.push(Check::new(
                format!("restart_upper_bound_t={t}"),
                held == out.len(),
                format!("{held}/{} runs", out.len()),
            ));
            medians.push(EmpiricalDistribution::new(out.iter().map(|r| r.sup_difference).collect())?.median());
            rows.extend(out);
        }
        checks.push(Check::new(
            "median_difference_nonincreasing",
            decreasing(&medians, false),
            format!("medians {} at T = {}", fmt_list(&medians), fmt_list(&cfg.horizons)),
        ));
    }

    Ok(Report { experiment: Experiment::Slowdecorr, checks, tables: vec![Table::csv("slowdecorr.csv", &rows)?] })
}
