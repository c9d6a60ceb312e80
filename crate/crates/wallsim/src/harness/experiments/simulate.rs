//! Plain forward simulation with trajectory output.

use std::collections::BTreeMap;

use serde::Serialize;

use super::super::config::{wall_from_pieces, InitialConfig, SimulateConfig};
use super::super::{map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::couplings::EventSource;
use crate::dynamics::{evolve, InitialCondition, TrajectoryLog};

const BLOCK: u64 = 90;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalRow {
    pub replica: u64,
    pub label: i64,
    pub position: i64,
    pub jumps: usize,
    pub suppressed: usize,
    pub wall_blocked: u64,
}

pub fn initial_condition(cfg: &InitialConfig) -> InitialCondition {
    match cfg {
        InitialConfig::Step => InitialCondition::step(),
        InitialConfig::Stationary { density, lo, hi } => InitialCondition::Stationary { density: *density, window: (*lo, *hi) },
        InitialConfig::Explicit { positions } => {
            InitialCondition::Explicit(positions.iter().enumerate().map(|(i, &x)| (i as i64 + 1, x)).collect::<BTreeMap<_, _>>())
        }
    }
}

pub fn run(cfg: &SimulateConfig, seed: u64) -> Result<Report, HarnessError> {
    let wall = if cfg.wall.is_empty() { None } else { Some(wall_from_pieces(&cfg.wall)?) };
    let ic = initial_condition(&cfg.initial);
    let mode = cfg.mode.with_shift(cfg.shift);
    let logs: Vec<TrajectoryLog> = map_replicas(cfg.replicas, |r| {
        let source = EventSource::new(mode, replica_randomness(seed, BLOCK, r));
        evolve(&ic, &source, cfg.horizon, wall.as_ref(), &cfg.tracked, cfg.n_max)
    })?;

    let mut rows = Vec::new();
    let mut exclusion_ok = true;
    let mut ceiling_ok = true;
    let ceiling = wall.as_ref().map_or(f64::INFINITY, |w| w.value(cfg.horizon));
    for (r, log) in logs.iter().enumerate() {
        let last = log.final_config();
        exclusion_ok &= last.values().zip(last.values().skip(1)).all(|(a, b)| a > b);
        ceiling_ok &= last.values().all(|&x| x as f64 <= ceiling);
        for &label in &cfg.tracked {
            let p = log.path(label).expect("tracked label");
            rows.push(FinalRow {
                replica: r as u64,
                label,
                position: p.end(),
                jumps: p.jumps.len(),
                suppressed: p.suppressed.len(),
                wall_blocked: log.wall_blocked,
            });
        }
    }
    let mut tables = vec![Table::csv_with_header(
        "simulate.csv",
        &["replica", "label", "position", "jumps", "suppressed", "wall_blocked"],
        &rows,
    )?];
    if cfg.trajectories {
        let mut buf = Vec::new();
        for (r, log) in logs.iter().enumerate() {
            log.write_jsonl(r as u64, &mut buf).map_err(|e| HarnessError::Io("trajectory buffer".into(), e))?;
        }
        tables.push(Table { file_name: "simulate_trajectories.jsonl".into(), body: String::from_utf8(buf).expect("json is utf-8") });
    }
    let checks = vec![
        Check::new("exclusion", exclusion_ok, "final configurations strictly decreasing in label"),
        Check::new("wall_ceiling", ceiling_ok, format!("final positions at most {ceiling}")),
    ];
    Ok(Report { experiment: Experiment::Simulate, checks, tables })
}
