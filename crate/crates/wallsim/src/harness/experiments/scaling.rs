//! One-point scaling: `T^{1/3}` growth of the spread and stability of the
//! rescaled position under doubling of `T`.

use serde::Serialize;

use super::super::config::ScalingConfig;
use super::super::stats::{ks_distance, ls_slope, EmpiricalDistribution};
use super::super::{map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::backpaths::step_log;
use crate::couplings::{round_label, CouplingMode, EventSource};
use crate::scaling::{rescale, Window};

const IQR_BLOCK: u64 = 50;
const PAIR_BLOCK: u64 = 51;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpreadRow {
    pub horizon: f64,
    pub label: i64,
    pub median: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RescaledRow {
    pub horizon: f64,
    pub replica: u64,
    pub value: f64,
}

fn source(seed: u64, block: u64, r: u64) -> EventSource {
    EventSource::new(CouplingMode::Basic, replica_randomness(seed, block, r))
}

/// `x_{αT}(T) - (1 - 2√α)T` for each replica.
pub fn centered_positions(alpha: f64, horizon: f64, replicas: u64, seed: u64, block: u64) -> Result<Vec<f64>, HarnessError> {
    let n = round_label(alpha * horizon);
    let center = (1.0 - 2.0 * alpha.sqrt()) * horizon;
    map_replicas(replicas, |r| {
        let log = step_log(&source(seed, block, r), horizon, n)?;
        Ok::<_, HarnessError>(log.position(n, horizon).expect("tracked label") as f64 - center)
    })
}

/// `X̃_T^0(0)` for each replica.
pub fn rescaled_at_zero(
    alpha: f64,
    alpha_i: f64,
    horizon: f64,
    replicas: u64,
    seed: u64,
    block: u64,
) -> Result<Vec<f64>, HarnessError> {
    let window = Window::new(0, alpha, alpha_i, horizon)?;
    let t = window.coeffs.time_of(0.0, horizon);
    map_replicas(replicas, |r| {
        let log = step_log(&source(seed, block, r), t, window.label)?;
        Ok::<_, HarnessError>(rescale(&log, &window, &[0.0])?.values[0])
    })
}

pub fn run(cfg: &ScalingConfig, seed: u64) -> Result<Report, HarnessError> {
    let mut checks = Vec::new();
    let mut tables = Vec::new();

    if cfg.iqr_replicas > 0 && cfg.iqr_horizons.len() >= 2 {
        let mut rows = Vec::new();
        for (k, &horizon) in cfg.iqr_horizons.iter().enumerate() {
            let samples = centered_positions(cfg.alpha, horizon, cfg.iqr_replicas, seed, IQR_BLOCK + 100 * k as u64)?;
            let e = EmpiricalDistribution::new(samples)?;
            rows.push(SpreadRow { horizon, label: round_label(cfg.alpha * horizon), median: e.median(), iqr: e.iqr() });
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.horizon.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.iqr.ln()).collect();
        let slope = ls_slope(&xs, &ys)?;
        checks.push(Check::new(
            "iqr_growth_exponent",
            (cfg.slope_min..=cfg.slope_max).contains(&slope),
            format!("log-log slope {slope:.4}, range [{}, {}]", cfg.slope_min, cfg.slope_max),
        ));
        tables.push(Table::csv("scaling_spread.csv", &rows)?);
    }

    if cfg.pair_replicas > 0 {
        let small = cfg.pair_horizon;
        let a = rescaled_at_zero(cfg.alpha, cfg.alpha_i, small, cfg.pair_replicas, seed, PAIR_BLOCK)?;
        let b = rescaled_at_zero(cfg.alpha, cfg.alpha_i, 2.0 * small, cfg.pair_replicas, seed, PAIR_BLOCK + 1)?;
        let d = ks_distance(&a, &b)?;
        // integer positions put each sample on a lattice of this spacing
        let spacing = |t: f64| Window::new(0, cfg.alpha, cfg.alpha_i, t).map(|w| 1.0 / (w.coeffs.c1 * t.cbrt()));
        checks.push(Check::new(
            "rescaled_ks_under_doubling",
            d <= cfg.ks_max,
            format!(
                "KS {d:.4} between T = {small} and {}, bound {}; lattice spacings {:.3} and {:.3}",
                2.0 * small,
                cfg.ks_max,
                spacing(small)?,
                spacing(2.0 * small)?
            ),
        ));
        let (ma, mb) = (EmpiricalDistribution::new(a.clone())?.median(), EmpiricalDistribution::new(b.clone())?.median());
        checks.push(Check::new(
            "rescaled_median_under_doubling",
            (ma - mb).abs() <= cfg.median_tolerance,
            format!("medians {ma:.4} and {mb:.4}, tolerance {}", cfg.median_tolerance),
        ));
        let rows: Vec<RescaledRow> = a
            .iter()
            .enumerate()
            .map(|(r, &value)| RescaledRow { horizon: small, replica: r as u64, value })
            .chain(b.iter().enumerate().map(|(r, &value)| RescaledRow { horizon: 2.0 * small, replica: r as u64, value }))
            .collect();
        tables.push(Table::csv("scaling_rescaled.csv", &rows)?);
    }

    Ok(Report { experiment: Experiment::Scaling, checks, tables })
}
