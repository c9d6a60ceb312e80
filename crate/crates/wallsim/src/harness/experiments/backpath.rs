//! Backwards paths: structure, anchor ordering, step embedding, duality,
//! fluctuation tails and the hole side.

use serde::Serialize;

use super::super::config::{BackpathConfig, FluctuationConfig, HoleConfig};
use super::super::stats::ks_distance;
use super::super::{decreasing, fmt_list, map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::{
    anchor_order_violation, backwards_index, control_hole, hole_backwards, left_fluctuation_sup, right_fluctuation_sup,
    step_embedding_misses, step_log, structure_violations,
};
use crate::couplings::{round_label, CouplingMode, EventSource};
use crate::dynamics::{duality_check, evolve_holes};

const STRUCTURE_BLOCK: u64 = 20;
const FLUCTUATION_BLOCK: u64 = 21;
const HOLE_BLOCK: u64 = 22;
const MIRROR_BLOCK: u64 = 23;
const CONTROL_BLOCK: u64 = 24;

fn basic(seed: u64, block: u64, r: u64) -> EventSource {
    EventSource::new(CouplingMode::Basic, replica_randomness(seed, block, r))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureRow {
    pub replica: u64,
    pub index_steps: usize,
    pub structure_violations: usize,
    pub anchor_violation_time: Option<f64>,
    pub embedding_misses: Option<usize>,
    pub duality_checked: usize,
    pub duality_failures: usize,
}

fn structure(cfg: &BackpathConfig, seed: u64) -> Result<Vec<StructureRow>, HarnessError> {
    let (t, n) = (cfg.horizon, cfg.label);
    let top = n + cfg.anchor_offset.max(0);
    map_replicas(cfg.replicas, |r| {
        let source = basic(seed, STRUCTURE_BLOCK, r);
        let log = step_log(&source, t, top)?;
        let path = backwards_index(&log, n, t)?;
        let earlier = backwards_index(&log, top, cfg.anchor_fraction * t)?;
        let t1 = cfg.embed_fraction * t;
        let start = path.position_at(&log, t1).expect("index inside the log");
        let embedding_misses = step_embedding_misses(&log, &source, &path, t1, start + (r % 3) as i64)?;

        // enough holes that the last one never moves before t
        let holes = evolve_holes(&source, t, (2.0 * t).ceil() as i64 + n + 20)?;
        let samples = cfg.duality_samples.max(1);
        let mut failures = 0;
        for k in 1..=samples {
            let s = t * k as f64 / samples as f64;
            if !duality_check(&log, &holes, path.index_at(s), s)? {
                failures += 1;
            }
        }
        Ok::<_, HarnessError>(StructureRow {
            replica: r,
            index_steps: path.steps.len(),
            structure_violations: structure_violations(&path, &log).len(),
            anchor_violation_time: anchor_order_violation(&log, &path, &earlier),
            embedding_misses,
            duality_checked: samples,
            duality_failures: failures,
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceedanceRow {
    pub k: f64,
    pub exceedance: f64,
}

fn fluctuations(cfg: &FluctuationConfig, seed: u64) -> Result<(Vec<f64>, Vec<ExceedanceRow>), HarnessError> {
    let n = round_label(cfg.gamma * cfg.horizon);
    let slope = 1.0 - 2.0 * cfg.gamma.sqrt();
    let sups = map_replicas(cfg.replicas, |r| {
        let log = step_log(&basic(seed, FLUCTUATION_BLOCK, r), cfg.horizon, n)?;
        let path = backwards_index(&log, n, cfg.horizon)?;
        Ok::<_, HarnessError>(right_fluctuation_sup(&path, &log, slope, cfg.horizon))
    })?;
    let rows = cfg
        .k_grid
        .iter()
        .map(|&k| ExceedanceRow { k, exceedance: sups.iter().filter(|&&s| s > k).count() as f64 / sups.len() as f64 })
        .collect();
    Ok((sups, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MirrorRow {
    pub replica: u64,
    pub hole_sup_shifted: f64,
    pub particle_sup: f64,
}

/// The mirrored holes form a step TASEP shifted one site left, so the hole
/// sup plus `T^{-2/3}` has the law of the particle sup for the same label.
fn mirror(cfg: &HoleConfig, seed: u64) -> Result<Vec<MirrorRow>, HarnessError> {
    let t = cfg.mirror_horizon;
    let m = control_hole(cfg.gamma, t).max(1);
    let slope = 1.0 - 2.0 * (m as f64 / t).sqrt();
    let shift = 1.0 / t.powf(2.0 / 3.0);
    map_replicas(cfg.replicas, |r| {
        let holes = evolve_holes(&basic(seed, HOLE_BLOCK, r), t, m)?;
        let hole_sup = left_fluctuation_sup(&hole_backwards(&holes, m, t)?, &holes, -slope, t);
        let log = step_log(&basic(seed, MIRROR_BLOCK, r), t, m)?;
        let particle_sup = right_fluctuation_sup(&backwards_index(&log, m, t)?, &log, slope, t);
        Ok::<_, HarnessError>(MirrorRow { replica: r, hole_sup_shifted: hole_sup + shift, particle_sup })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlRow {
    pub replica: u64,
    pub hole: i64,
    pub particle: i64,
    pub held: bool,
}

fn control(cfg: &HoleConfig, seed: u64) -> Result<Vec<ControlRow>, HarnessError> {
    let t = cfg.control_horizon;
    let n = round_label(cfg.gamma * t);
    let m = control_hole(cfg.gamma, t).max(1);
    map_replicas(cfg.control_replicas, |r| {
        let source = basic(seed, CONTROL_BLOCK, r);
        let holes = evolve_holes(&source, t, m)?;
        let log = step_log(&source, t, n)?;
        let hole = holes.position(m, t).expect("tracked hole");
        let particle = log.position(n, t).expect("tracked label");
        Ok::<_, HarnessError>(ControlRow { replica: r, hole, particle, held: hole < particle })
    })
}

pub fn run(cfg: &BackpathConfig, seed: u64) -> Result<Report, HarnessError> {
    let mut checks = Vec::new();
    let mut tables = Vec::new();

    if cfg.replicas > 0 {
        let rows = structure(cfg, seed)?;
        let total = |f: fn(&StructureRow) -> usize| rows.iter().map(f).sum::<usize>();
        let structure_bad = total(|r| r.structure_violations);
        let anchor_bad = rows.iter().filter(|r| r.anchor_violation_time.is_some()).count();
        let embedded = rows.iter().filter(|r| r.embedding_misses.is_some()).count();
        let misses = total(|r| r.embedding_misses.unwrap_or(0));
        let checked = total(|r| r.duality_checked);
        let duality_bad = total(|r| r.duality_failures);
        checks.push(Check::new("path_structure", structure_bad == 0, format!("{structure_bad} violations on {} paths", rows.len())));
        checks.push(Check::new("anchor_order", anchor_bad == 0, format!("{anchor_bad} of {} path pairs out of order", rows.len())));
        checks.push(Check::new("step_embedding", misses == 0, format!("{misses} trace points missed over {embedded} restarts")));
        checks.push(Check::new("hole_duality", duality_bad == 0, format!("{duality_bad} of {checked} (path, time) samples fail")));
        tables.push(Table::csv("backpath_structure.csv", &rows)?);
    }

    if cfg.fluctuations.replicas > 0 {
        let (_, rows) = fluctuations(&cfg.fluctuations, seed)?;
        let rates: Vec<f64> = rows.iter().map(|r| r.exceedance).collect();
        checks.push(Check::new(
            "right_sup_tail_decreasing",
            decreasing(&rates, true),
            format!("P(sup > K) = {} for K = {}", fmt_list(&rates), fmt_list(&cfg.fluctuations.k_grid)),
        ));
        tables.push(Table::csv("backpath_fluctuations.csv", &rows)?);
    }

    if cfg.holes.replicas > 0 {
        let rows = mirror(&cfg.holes, seed)?;
        let a: Vec<f64> = rows.iter().map(|r| r.hole_sup_shifted).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.particle_sup).collect();
        let d = ks_distance(&a, &b)?;
        checks.push(Check::new(
            "hole_mirror_ks",
            d <= cfg.holes.mirror_ks_max,
            format!("KS {d:.4}, bound {}", cfg.holes.mirror_ks_max),
        ));
        tables.push(Table::csv("backpath_mirror.csv", &rows)?);
    }

    if cfg.holes.control_replicas > 0 {
        let rows = control(&cfg.holes, seed)?;
        let freq = rows.iter().filter(|r| r.held).count() as f64 / rows.len() as f64;
        checks.push(Check::new(
            "control_hole_left",
            freq >= cfg.holes.control_min,
            format!("P(hole left of particle) = {freq:.4}, bound {}", cfg.holes.control_min),
        ));
        tables.push(Table::csv("backpath_control_hole.csv", &rows)?);
    }

    Ok(Report { experiment: Experiment::Backpath, checks, tables })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_structure_run_is_clean() {
        let cfg = BackpathConfig {
            replicas: 20,
            horizon: 30.0,
            label: 10,
            fluctuations: FluctuationConfig { replicas: 0, ..FluctuationConfig::default() },
            holes: HoleConfig { replicas: 0, control_replicas: 0, ..HoleConfig::default() },
            ..BackpathConfig::default()
        };
        let report = run(&cfg, 3).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
        assert_eq!(report.checks.len(), 4);
    }
}
