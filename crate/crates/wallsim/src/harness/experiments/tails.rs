//! Empirical tails of the one-point fluctuation, the origin of the backwards
//! path, and the stationary increment along the backwards path.

use serde::Serialize;

use super::super::config::TailsConfig;
use super::super::{decreasing, fmt_list, map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::{backwards_index, step_log};
use crate::couplings::{round_label, stationary_window, CouplingMode, EventSource};
use crate::dynamics::{evolve, InitialCondition};

const STEP_BLOCK: u64 = 80;
const STATIONARY_BLOCK: u64 = 81;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub statistic: &'static str,
    pub level: f64,
    pub exceedance: f64,
    pub samples: usize,
}

/// `c_1(α) = (1 - √α)^{2/3} / α^{1/6}`, the one-point fluctuation scale.
pub fn one_point_scale(alpha: f64) -> f64 {
    (1.0 - alpha.sqrt()).powf(2.0 / 3.0) / alpha.powf(1.0 / 6.0)
}

struct StepSample {
    rescaled: f64,
    origin: f64,
}

/// `|x^ρ_N(T) - x^ρ_{N(T↓0)}(0) - (1 - 2ρ)T| / T^{2/3}`, or `None` when the
/// window edge reached the tracked particle or its backwards path.
fn stationary_sample(cfg: &TailsConfig, seed: u64, r: u64) -> Result<Option<f64>, HarnessError> {
    let (rho, t) = (cfg.rho, cfg.horizon);
    let chi = rho * (1.0 - rho);
    let n = round_label(rho * rho * t - 2.0 * cfg.w * rho * chi.cbrt() * t.powf(2.0 / 3.0));
    let window = stationary_window(rho, t, n.max(1), cfg.buffer);
    let source = EventSource::new(CouplingMode::Basic, replica_randomness(seed, STATIONARY_BLOCK, r));
    let log = evolve(&InitialCondition::Stationary { density: rho, window }, &source, t, None, &[n], n)?;
    let path = backwards_index(&log, n, t)?;
    if log.boundary_contact || path.index_at(0.0) <= log.lowest_label() {
        return Ok(None);
    }
    let end = log.position(n, t).expect("tracked label");
    let origin = path.position_at(&log, 0.0).expect("label in log");
    Ok(Some(((end - origin) as f64 - (1.0 - 2.0 * rho) * t).abs() / t.powf(2.0 / 3.0)))
}

fn exceedance(samples: &[f64], level: f64, strict: bool) -> f64 {
    let hits = samples.iter().filter(|&&v| if strict { v > level } else { v >= level }).count();
    hits as f64 / samples.len() as f64
}

pub fn run(cfg: &TailsConfig, seed: u64) -> Result<Report, HarnessError> {
    if cfg.replicas == 0 {
        return Err(HarnessError::Config("tails needs replicas >= 1".into()));
    }
    let (alpha, t) = (cfg.alpha, cfg.horizon);
    let n = round_label(alpha * t);
    let center = (1.0 - 2.0 * alpha.sqrt()) * t;
    let scale = one_point_scale(alpha) * t.cbrt();
    let step = map_replicas(cfg.replicas, |r| {
        let source = EventSource::new(CouplingMode::Basic, replica_randomness(seed, STEP_BLOCK, r));
        let log = step_log(&source, t, n)?;
        let path = backwards_index(&log, n, t)?;
        Ok::<_, HarnessError>(StepSample {
            rescaled: (log.position(n, t).expect("tracked label") as f64 - center) / scale,
            origin: path.position_at(&log, 0.0).expect("label in log").abs() as f64 / t.cbrt(),
        })
    })?;
    let rescaled: Vec<f64> = step.iter().map(|s| s.rescaled).collect();
    let origins: Vec<f64> = step.iter().map(|s| s.origin).collect();
    let stationary: Vec<f64> =
        map_replicas(cfg.replicas, |r| stationary_sample(cfg, seed, r))?.into_iter().flatten().collect();

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut curve = |name: &'static str, samples: &[f64], levels: &[f64], lower: bool| {
        let values: Vec<f64> = levels
            .iter()
            .map(|&s| {
                let e = if lower {
                    samples.iter().filter(|&&v| v <= -s).count() as f64 / samples.len().max(1) as f64
                } else {
                    exceedance(samples, s, false)
                };
                rows.push(TailRow { statistic: name, level: s, exceedance: e, samples: samples.len() });
                e
            })
            .collect();
        checks.push(Check::new(
            format!("{name}_nonincreasing"),
            !samples.is_empty() && decreasing(&values, false),
            format!("{} at {} over {} samples", fmt_list(&values), fmt_list(levels), samples.len()),
        ));
    };
    curve("one_point_upper", &rescaled, &cfg.s_grid, false);
    curve("one_point_lower", &rescaled, &cfg.s_grid, true);
    curve("origin", &origins, &cfg.k1_grid, false);
    curve("stationary_increment", &stationary, &cfg.k_grid, false);

    let far: Vec<f64> = cfg.s_grid.iter().copied().filter(|&s| s >= cfg.far_s).collect();
    if !far.is_empty() {
        let worst = far.iter().map(|&s| exceedance(&rescaled, s, false)).fold(0.0, f64::max);
        checks.push(Check::new(
            "one_point_far_upper_tail",
            worst <= cfg.far_max,
            format!("largest exceedance {worst:.4} for s >= {}, bound {}", cfg.far_s, cfg.far_max),
        ));
    }
    Ok(Report { experiment: Experiment::Tails, checks, tables: vec![Table::csv("tails.csv", &rows)?] })
}
