//! Where the backwards path of particle `αT` sits at time `T/2`.

use serde::Serialize;

use super::super::config::MidtimeConfig;
use super::super::{decreasing, fmt_list, map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::{backwards_index, midtime_index, step_log};
use crate::couplings::{round_label, CouplingMode, EventSource};

const BLOCK: u64 = 30;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MidtimeRow {
    pub k: f64,
    pub threshold: f64,
    pub exceedance: f64,
}

/// `N(T↓T/2)` for each replica.
pub fn midtime_indices(cfg: &MidtimeConfig, seed: u64) -> Result<Vec<i64>, HarnessError> {
    let n = round_label(cfg.alpha * cfg.horizon);
    map_replicas(cfg.replicas, |r| {
        let source = EventSource::new(CouplingMode::Basic, replica_randomness(seed, BLOCK, r));
        let log = step_log(&source, cfg.horizon, n)?;
        Ok::<_, HarnessError>(midtime_index(&backwards_index(&log, n, cfg.horizon)?))
    })
}

pub fn run(cfg: &MidtimeConfig, seed: u64) -> Result<Report, HarnessError> {
    if cfg.replicas == 0 || cfg.k_grid.is_empty() {
        return Err(HarnessError::Config("midtime needs replicas and a K grid".into()));
    }
    let indices = midtime_indices(cfg, seed)?;
    let center = cfg.alpha * cfg.horizon / 2.0;
    let width = cfg.horizon.powf(2.0 / 3.0);
    let rows: Vec<MidtimeRow> = cfg
        .k_grid
        .iter()
        .map(|&k| {
            let threshold = 2.0 * k * width;
            let hits = indices.iter().filter(|&&i| (i as f64 - center).abs() > threshold).count();
            MidtimeRow { k, threshold, exceedance: hits as f64 / indices.len() as f64 }
        })
        .collect();
    let rates: Vec<f64> = rows.iter().map(|r| r.exceedance).collect();
    let last = *rates.last().expect("nonempty grid");
    let checks = vec![
        Check::new(
            "midtime_tail_nonincreasing",
            decreasing(&rates, false),
            format!("exceedance {} for K = {}", fmt_list(&rates), fmt_list(&cfg.k_grid)),
        ),
        Check::new(
            "midtime_tail_at_largest_k",
            last <= cfg.max_at_largest,
            format!("{last:.4} at K = {}, bound {}", cfg.k_grid[cfg.k_grid.len() - 1], cfg.max_at_largest),
        ),
    ];
    Ok(Report { experiment: Experiment::Midtime, checks, tables: vec![Table::csv("midtime.csv", &rows)?] })
}
