//! Backwards index processes rebuilt from suppressed-attempt logs.
//!
//! Index convention: a suppressed attempt of the current label `n` at time `s`
//! switches the index to `n - 1` strictly below `s`, so `N(t↓s) = N - #{s_k > s}`
//! and the trace is right-continuous everywhere.

use serde::Serialize;
use thiserror::Error;

use crate::couplings::{restart_step, CouplingMode, EventSource, RestartFrom, RestartSpec};
use crate::dynamics::{evolve_holes, Clamp, DynamicsError, HoleLog, InitialCondition, Line, Run, TrajectoryLog};

#[derive(Debug, Error)]
pub enum BackpathError {
    #[error("label {0} is needed by the backwards path but missing from the log")]
    MissingLabel(i64),
    #[error("anchor time {t} is outside the logged range [{start}, {horizon}]")]
    AnchorTime { t: f64, start: f64, horizon: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("restart failed: {0}")]
    Restart(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BackwardsPath {
    pub label: i64,
    pub time: f64,
    pub start_time: f64,
    /// `(s_k, n_k)` in decreasing `s_k`: the index is `n_k` just below `s_k`.
    pub steps: Vec<(f64, i64)>,
}

/// Piece of the trace where the position is constant, `[from, to)`; the last
/// piece also holds at `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePiece {
    pub from: f64,
    pub to: f64,
    pub label: i64,
    pub position: i64,
}

pub fn backwards_index(log: &TrajectoryLog, label: i64, t: f64) -> Result<BackwardsPath, BackpathError> {
    if !(t >= log.start_time && t <= log.horizon) {
        return Err(BackpathError::AnchorTime { t, start: log.start_time, horizon: log.horizon });
    }
    let mut n = label;
    let mut s = t;
    let mut steps = Vec::new();
    loop {
        let p = log.path(n).ok_or(BackpathError::MissingLabel(n))?;
        let i = p.suppressed.partition_point(|&u| u < s);
        if i == 0 {
            break;
        }
        s = p.suppressed[i - 1];
        n -= 1;
        steps.push((s, n));
    }
    Ok(BackwardsPath { label, time: t, start_time: log.start_time, steps })
}

impl BackwardsPath {
    /// `N(t↓s)` for `s <= t`.
    pub fn index_at(&self, s: f64) -> i64 {
        self.label - self.steps.partition_point(|&(sk, _)| sk > s) as i64
    }

    pub fn position_at(&self, log: &TrajectoryLog, s: f64) -> Option<i64> {
        log.position(self.index_at(s), s)
    }

    /// Index segments `[from, to)` in increasing time.
    pub fn segments(&self) -> Vec<(f64, f64, i64)> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut hi = self.time;
        let mut n = self.label;
        for &(s, below) in &self.steps {
            out.push((s, hi, n));
            hi = s;
            n = below;
        }
        out.push((self.start_time, hi, n));
        out.reverse();
        out
    }

    pub fn pieces(&self, log: &TrajectoryLog) -> Vec<TracePiece> {
        let mut out = Vec::new();
        for (lo, hi, n) in self.segments() {
            let Some(p) = log.path(n) else { continue };
            let mut from = lo;
            let mut position = p.start + p.jumps.partition_point(|&s| s <= lo) as i64;
            for &s in p.jumps.iter().filter(|&&s| s > lo && s < hi) {
                out.push(TracePiece { from, to: s, label: n, position });
                from = s;
                position += 1;
            }
            out.push(TracePiece { from, to: hi, label: n, position });
        }
        out
    }

    /// Piece starts inside `[from, to]`, plus `from`.
    pub fn breakpoints(&self, log: &TrajectoryLog, from: f64, to: f64) -> Vec<f64> {
        let mut out: Vec<f64> = std::iter::once(from)
            .chain(self.pieces(log).into_iter().map(|p| p.from).filter(|&s| s >= from && s <= to))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// `sup_s (π(s) - slope·s) / scale^{2/3}` over the whole trace.
pub fn right_fluctuation_sup(path: &BackwardsPath, log: &TrajectoryLog, slope: f64, scale: f64) -> f64 {
    let norm = scale.powf(2.0 / 3.0);
    path.pieces(log)
        .iter()
        .map(|p| {
            let v = p.position as f64;
            (v - slope * p.from).max(v - slope * p.to)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        / norm
}

/// `N(T↓T/2)` for a path anchored at time `T`.
pub fn midtime_index(path: &BackwardsPath) -> i64 {
    path.index_at(path.start_time + (path.time - path.start_time) / 2.0)
}

/// Backwards path of hole `m`, in the mirrored coordinates of the hole log.
pub fn hole_backwards(holes: &HoleLog, m: i64, t: f64) -> Result<BackwardsPath, BackpathError> {
    backwards_index(&holes.mirrored, m, t)
}

/// Left fluctuations of a hole path against `slope·s`, measured as
/// `sup_s (slope·s - y(s)) / scale^{2/3}`.
pub fn left_fluctuation_sup(path: &BackwardsPath, holes: &HoleLog, slope: f64, scale: f64) -> f64 {
    right_fluctuation_sup(path, &holes.mirrored, -slope, scale)
}

/// Structural problems of a reconstructed path; empty when it is well formed.
pub fn structure_violations(path: &BackwardsPath, log: &TrajectoryLog) -> Vec<String> {
    let mut out = Vec::new();
    let mut above = (path.time, path.label);
    for &(s, n) in &path.steps {
        if !(s < above.0) {
            out.push(format!("step times not decreasing at {s}"));
        }
        if n != above.1 - 1 {
            out.push(format!("index jumps from {} to {n} at {s}", above.1));
        }
        match (log.position(above.1, s), log.path(n)) {
            (Some(x), Some(ahead)) if x == ahead.position_before(s) - 1 => {}
            _ => out.push(format!("particle {} at {s} is not directly behind {n}", above.1)),
        }
        above = (s, n);
    }
    for w in path.pieces(log).windows(2) {
        if (w[1].position - w[0].position).abs() != 1 {
            out.push(format!("trace moves from {} to {} at {}", w[0].position, w[1].position, w[1].from));
        }
    }
    out
}

/// For `N <= M` and `t < t̃`: `x_{M(t↓τ)}(τ) <= x_{N(t̃↓τ)}(τ)` for all `τ <= t`.
/// Returns the first time where the order fails.
pub fn anchor_order_violation(
    log: &TrajectoryLog,
    later: &BackwardsPath,
    earlier: &BackwardsPath,
) -> Option<f64> {
    let to = earlier.time;
    let mut probes: Vec<f64> =
        later.breakpoints(log, log.start_time, to).into_iter().chain(earlier.breakpoints(log, log.start_time, to)).collect();
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let mids: Vec<f64> = probes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probes.extend(mids);
    probes.push(to);
    probes.sort_by(f64::total_cmp);
    probes.into_iter().find(|&s| match (earlier.position_at(log, s), later.position_at(log, s)) {
        (Some(a), Some(b)) => a > b,
        _ => true,
    })
}

/// If the trace at `t1` is weakly left of `top`, every trace point on
/// `[t1, t]` must be occupied in step data restarted at `t1` with rightmost
/// particle at `top` under basic coupling. `None` when the premise fails,
/// otherwise the number of trace points that are not occupied.
pub fn step_embedding_misses(
    log: &TrajectoryLog,
    source: &EventSource,
    path: &BackwardsPath,
    t1: f64,
    top: i64,
) -> Result<Option<usize>, BackpathError> {
    if source.mode != CouplingMode::Basic {
        return Err(BackpathError::Restart("embedding needs basic coupling".into()));
    }
    let Some(start) = path.position_at(log, t1) else {
        return Err(BackpathError::MissingLabel(path.index_at(t1)));
    };
    if start > top {
        return Ok(None);
    }
    let probes = path.breakpoints(log, t1, path.time);
    let trace: Vec<(f64, i64)> = probes.iter().filter_map(|&s| path.position_at(log, s).map(|x| (s, x))).collect();
    let lowest = trace.iter().map(|p| p.1).min().unwrap_or(top);
    let mut labels = (top - lowest + 8).max(8);
    loop {
        let y = restart_step(log, source, RestartSpec { time: t1, from: RestartFrom::Position(top) }, path.time, labels)
            .map_err(|e| BackpathError::Restart(e.to_string()))?;
        let mut misses = 0;
        let mut ambiguous = false;
        for &(s, x) in &trace {
            let config = y.config_at(s);
            if config.values().any(|&v| v == x) {
                continue;
            }
            if config.get(&labels).is_some_and(|&last| last >= x) {
                ambiguous = true;
                break;
            }
            misses += 1;
        }
        if !ambiguous {
            return Ok(Some(misses));
        }
        labels *= 2;
    }
}

/// Hole label used to control the left side: `(1 - √γ)² T - √T`, rounded.
pub fn control_hole(gamma: f64, horizon: f64) -> i64 {
    crate::couplings::round_label((1.0 - gamma.sqrt()).powi(2) * horizon - horizon.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationRow {
    pub replica: u64,
    #[serde(rename = "K")]
    pub k: f64,
    pub sup_right: f64,
    pub sup_left: f64,
    #[serde(rename = "E_held")]
    pub e_held: bool,
    pub equality_held: bool,
}

/// One replica of the localization comparison: the step system, its copy with
/// everything right of `(1-2√γ)t + K T^{2/3}` removed, and its copy with
/// everything left of `(1-2√γ)t - K T^{2/3}` frozen, all on the same site
/// clocks.
pub fn localization_replica(
    gamma: f64,
    horizon: f64,
    k_grid: &[f64],
    source: &EventSource,
    replica: u64,
) -> Result<Vec<LocalizationRow>, BackpathError> {
    let n = crate::couplings::round_label(gamma * horizon);
    let slope = 1.0 - 2.0 * gamma.sqrt();
    let starts: Vec<(i64, i64)> = (1..=n).map(|k| (k, 1 - k)).collect();
    let run = Run::new(source, 0.0, horizon);
    let x = run.particles(&starts, &[n])?;
    let x_n = x.position(n, horizon).ok_or(BackpathError::MissingLabel(n))?;
    let sup_right = right_fluctuation_sup(&backwards_index(&x, n, horizon)?, &x, slope, horizon);
    let m = control_hole(gamma, horizon).max(1);
    let holes = evolve_holes(source, horizon, m)?;
    let sup_left = left_fluctuation_sup(&hole_backwards(&holes, m, horizon)?, &holes, slope, horizon);
    let hole_left = holes.position(m, horizon).is_some_and(|y| y < x_n);
    let width = horizon.powf(2.0 / 3.0);
    k_grid
        .iter()
        .map(|&k| {
            let right = Clamp { empty_right_of: Some(Line { intercept: k * width, slope }), ..Clamp::default() };
            let left = Clamp { filled_left_of: Some(Line { intercept: -k * width, slope }), ..Clamp::default() };
            let xr = run.with_clamp(right).particles(&starts, &[n])?.position(n, horizon);
            let xl = run.with_clamp(left).particles(&starts, &[n])?.position(n, horizon);
            Ok(LocalizationRow {
                replica,
                k,
                sup_right,
                sup_left,
                e_held: sup_right <= k && hole_left && sup_left <= k,
                equality_held: xr == Some(x_n) && xl == Some(x_n),
            })
        })
        .collect()
}

/// Step-data helper used by tests and experiments.
pub fn step_log(source: &EventSource, horizon: f64, n_max: i64) -> Result<TrajectoryLog, BackpathError> {
    Ok(crate::dynamics::evolve(&InitialCondition::step(), source, horizon, None, &[], n_max)?)
}
