//! Joint law of the window functionals `V_i` of one particle.

use serde::Serialize;

use super::super::config::{wall_from_pieces, ProductConfig};
use super::super::stats::{joint_product_distance, ks_distance, pearson};
use super::super::{map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::step_log;
use crate::couplings::{CouplingMode, EventSource};
use crate::dynamics::WallSpec;
use crate::scaling::{example_wall, g_from_wall, tau_grid, window_sup, Window};

const JOINT_BLOCK: u64 = 60;
/// Single-window reruns use blocks `SINGLE_BLOCK + i`.
const SINGLE_BLOCK: u64 = 61;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalRow {
    pub run: &'static str,
    pub replica: u64,
    pub window: usize,
    pub varkappa: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairRow {
    pub varkappa: f64,
    pub window_a: usize,
    pub window_b: usize,
    pub pearson: f64,
    pub joint_product_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub window: usize,
    pub tau: f64,
    pub g: f64,
    pub extrapolated: bool,
}

pub struct Setup {
    pub wall: WallSpec,
    pub windows: Vec<Window>,
    pub label: i64,
    /// Last time any window needs.
    pub sim_horizon: f64,
}

pub fn setup(cfg: &ProductConfig) -> Result<Setup, HarnessError> {
    let horizon = cfg.horizon;
    let wall = if cfg.wall.is_empty() {
        example_wall(cfg.alpha, &cfg.windows, cfg.xi, horizon)?
    } else {
        wall_from_pieces(&cfg.wall)?
    };
    let windows = cfg
        .windows
        .iter()
        .enumerate()
        .map(|(i, &a)| Window::new(i, cfg.alpha, a, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let widest = cfg.sensitivity.iter().copied().chain([cfg.varkappa]).fold(0.0, f64::max);
    let sim_horizon = windows.iter().map(|w| w.time_range(widest).1).fold(0.0, f64::max).min(horizon);
    let label = windows[0].label;
    Ok(Setup { wall, windows, label, sim_horizon })
}

fn column(rows: &[FunctionalRow], run: &str, window: usize, varkappa: f64) -> Vec<f64> {
    rows.iter().filter(|r| r.run == run && r.window == window && r.varkappa == varkappa).map(|r| r.v).collect()
}

pub fn run(cfg: &ProductConfig, seed: u64) -> Result<Report, HarnessError> {
    if cfg.windows.len() < 2 || cfg.replicas < 2 {
        return Err(HarnessError::Config("product needs at least two windows and two replicas".into()));
    }
    let s = setup(cfg)?;
    let source = |block, r| EventSource::new(CouplingMode::Basic, replica_randomness(seed, block, r));
    let mut varkappas = vec![cfg.varkappa];
    varkappas.extend(cfg.sensitivity.iter().copied().filter(|&k| k != cfg.varkappa));

    let joint: Vec<Vec<FunctionalRow>> = map_replicas(cfg.replicas, |r| {
        let log = step_log(&source(JOINT_BLOCK, r), s.sim_horizon, s.label)?;
        let mut out = Vec::new();
        for &k in &varkappas {
            for w in &s.windows {
                let v = window_sup(&log, w, &s.wall, cfg.xi, k)?;
                out.push(FunctionalRow { run: "joint", replica: r, window: w.index, varkappa: k, v });
            }
        }
        Ok::<_, HarnessError>(out)
    })?;
    let mut rows: Vec<FunctionalRow> = joint.into_iter().flatten().collect();
    for w in &s.windows {
        let single = map_replicas(cfg.replicas, |r| {
            let log = step_log(&source(SINGLE_BLOCK + w.index as u64, r), s.sim_horizon, s.label)?;
            let v = window_sup(&log, w, &s.wall, cfg.xi, cfg.varkappa)?;
            Ok::<_, HarnessError>(FunctionalRow { run: "single", replica: r, window: w.index, varkappa: cfg.varkappa, v })
        })?;
        rows.extend(single);
    }

    let mut checks = Vec::new();
    let mut pairs = Vec::new();
    for &k in &varkappas {
        for i in 0..s.windows.len() {
            for j in i + 1..s.windows.len() {
                let (a, b) = (column(&rows, "joint", i, k), column(&rows, "joint", j, k));
                let corr = pearson(&a, &b)?;
                let zipped: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
                let dist = joint_product_distance(&zipped)?;
                if k == cfg.varkappa {
                    checks.push(Check::new(
                        format!("correlation_{i}_{j}"),
                        corr.abs() <= cfg.corr_max,
                        format!("pearson {corr:.4}, bound {}", cfg.corr_max),
                    ));
                    checks.push(Check::new(
                        format!("joint_vs_product_{i}_{j}"),
                        dist <= cfg.joint_max,
                        format!("sup distance {dist:.4}, bound {}", cfg.joint_max),
                    ));
                }
                pairs.push(PairRow { varkappa: k, window_a: i, window_b: j, pearson: corr, joint_product_distance: dist });
            }
        }
    }
    for w in &s.windows {
        let d = ks_distance(&column(&rows, "joint", w.index, cfg.varkappa), &column(&rows, "single", w.index, cfg.varkappa))?;
        checks.push(Check::new(
            format!("marginal_{}_vs_single", w.index),
            d <= cfg.marginal_ks_max,
            format!("KS {d:.4}, bound {}", cfg.marginal_ks_max),
        ));
    }

    let taus = tau_grid(cfg.varkappa, 0.1);
    let profile: Vec<ProfileRow> = s
        .windows
        .iter()
        .flat_map(|w| {
            g_from_wall(&s.wall, &w.coeffs, cfg.xi, cfg.epsilon, &taus, cfg.horizon)
                .into_iter()
                .map(move |g| ProfileRow { window: w.index, tau: g.tau, g: g.g, extrapolated: g.extrapolated })
        })
        .collect();

    Ok(Report {
        experiment: Experiment::Product,
        checks,
        tables: vec![
            Table::csv("product_functionals.csv", &rows)?,
            Table::csv("product_pairs.csv", &pairs)?,
            Table::csv("product_profile.csv", &profile)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setup_covers_the_windows() {
        let s = setup(&ProductConfig::default()).unwrap();
        assert_eq!(s.label, 150);
        assert_eq!(s.windows.len(), 2);
        assert_eq!(s.sim_horizon, 600.0);
        assert_eq!(s.wall.pieces().len(), 2);
    }

    #[test]
    fn zero_varkappa_is_well_defined() {
        let cfg = ProductConfig { replicas: 30, horizon: 100.0, varkappa: 0.0, sensitivity: vec![], ..ProductConfig::default() };
        let report = run(&cfg, 1).unwrap();
        assert_eq!(report.checks.len(), 4);
        assert!(report.tables[0].body.lines().count() > 60);
    }
}
