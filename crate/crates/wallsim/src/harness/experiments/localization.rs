//! Conditional equality of the step system with its two clamped copies.

use super::super::config::LocalizationConfig;
use super::super::{decreasing, fmt_list, map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::{localization_replica, LocalizationRow};
use crate::couplings::{CouplingMode, EventSource};

const BLOCK: u64 = 40;

pub fn rows(cfg: &LocalizationConfig, seed: u64) -> Result<Vec<LocalizationRow>, HarnessError> {
    let per: Vec<Vec<LocalizationRow>> = map_replicas(cfg.replicas, |r| {
        let source = EventSource::new(CouplingMode::Basic, replica_randomness(seed, BLOCK, r));
        Ok::<_, HarnessError>(localization_replica(cfg.gamma, cfg.horizon, &cfg.k_grid, &source, r)?)
    })?;
    Ok(per.into_iter().flatten().collect())
}

pub fn run(cfg: &LocalizationConfig, seed: u64) -> Result<Report, HarnessError> {
    if cfg.replicas == 0 || cfg.k_grid.is_empty() {
        return Err(HarnessError::Config("localization needs replicas and a K grid".into()));
    }
    let rows = rows(cfg, seed)?;
    let mut checks = Vec::new();
    let mut misses = Vec::new();
    for &k in &cfg.k_grid {
        let at: Vec<&LocalizationRow> = rows.iter().filter(|r| r.k == k).collect();
        let qualifying = at.iter().filter(|r| r.e_held).count();
        let equal = at.iter().filter(|r| r.e_held && r.equality_held).count();
        checks.push(Check::new(
            format!("equality_given_e_k={k}"),
            equal == qualifying,
            format!("{equal}/{qualifying} qualifying replicas equal"),
        ));
        misses.push(at.iter().filter(|r| !r.e_held).count() as f64 / at.len() as f64);
    }
    checks.push(Check::new(
        "e_complement_decreasing",
        decreasing(&misses, true),
        format!("P(E^c) = {} for K = {}", fmt_list(&misses), fmt_list(&cfg.k_grid)),
    ));
    Ok(Report { experiment: Experiment::Localization, checks, tables: vec![Table::csv("localization.csv", &rows)?] })
}
