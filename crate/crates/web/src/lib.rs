//! Browser demo: each export returns a JSON string for the page to draw.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use wallsim::backpaths::{backwards_index, step_log, TracePiece};
use wallsim::clockwork::Randomness;
use wallsim::couplings::{CouplingMode, EventSource};
use wallsim::dynamics::{evolve, InitialCondition, WallSpec};
use wallsim::harness::config::{Intercept, PieceConfig, Prop31Config};
use wallsim::harness::experiments::prop31;
use wallsim::harness::Check;

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn source(seed: u32) -> EventSource {
    EventSource::new(CouplingMode::Basic, Randomness::seeded(seed.into(), 0))
}

#[derive(Serialize)]
struct Diagram {
    horizon: f64,
    /// `(label, start, jump times)` per particle.
    particles: Vec<(i64, i64, Vec<f64>)>,
    /// `(t, f(t))` samples; empty without a wall.
    wall: Vec<(f64, f64)>,
    wall_blocked: u64,
}

/// Seeds and counts are `u32` so they arrive as plain JS numbers.
///
/// Space-time diagram of the first `particles` step particles. A negative
/// `wall_intercept` means no wall; otherwise `f(t) = intercept + slope t`.
#[wasm_bindgen]
pub fn space_time(seed: u32, horizon: f64, particles: i64, wall_intercept: f64, wall_slope: f64) -> Result<String, JsError> {
    let wall = (wall_intercept >= 0.0).then(|| WallSpec::affine(wall_intercept, wall_slope, horizon)).transpose().map_err(fail)?;
    let tracked: Vec<i64> = (1..=particles).collect();
    let log = evolve(&InitialCondition::step(), &source(seed), horizon, wall.as_ref(), &tracked, particles).map_err(fail)?;
    let samples = wall.as_ref().map_or_else(Vec::new, |w| (0..=200).map(|k| horizon * k as f64 / 200.0).map(|t| (t, w.value(t))).collect());
    let diagram = Diagram {
        horizon,
        particles: log.paths.iter().map(|p| (p.label, p.start, p.jumps.clone())).collect(),
        wall: samples,
        wall_blocked: log.wall_blocked,
    };
    serde_json::to_string(&diagram).map_err(fail)
}

#[derive(Serialize)]
struct Estimate {
    checks: Vec<Check>,
    table: String,
}

/// Both sides of the wall identity for particle `n` under `f(t) = c + v t`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn wall_identity(seed: u32, n: i64, horizon: f64, c: f64, v: f64, s_lo: i64, s_hi: i64, replicas: u32) -> Result<String, JsError> {
    let cfg = Prop31Config {
        n,
        horizon,
        s_grid: (s_lo..=s_hi).collect(),
        replicas: replicas.into(),
        wall: vec![PieceConfig { from: 0.0, to: horizon, c: Intercept::Finite(c), v }],
    };
    let report = prop31::run(&cfg, seed.into()).map_err(fail)?;
    let table = report.tables.into_iter().next().map(|t| t.body).unwrap_or_default();
    serde_json::to_string(&Estimate { checks: report.checks, table }).map_err(fail)
}

#[derive(Serialize)]
struct Backwards {
    particles: Vec<(i64, i64, Vec<f64>)>,
    trace: Vec<TracePiece>,
}

/// Step TASEP up to `horizon` with the backwards path of `label` from there.
#[wasm_bindgen]
pub fn backwards_path(seed: u32, horizon: f64, label: i64) -> Result<String, JsError> {
    let log = step_log(&source(seed), horizon, label).map_err(fail)?;
    let path = backwards_index(&log, label, horizon).map_err(fail)?;
    let out = Backwards {
        particles: log.paths.iter().map(|p| (p.label, p.start, p.jumps.clone())).collect(),
        trace: path.pieces(&log),
    };
    serde_json::to_string(&out).map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagram_respects_the_wall() {
        let json: serde_json::Value = serde_json::from_str(&space_time(3, 10.0, 5, 2.0, 0.1).unwrap()).unwrap();
        assert_eq!(json["particles"].as_array().unwrap().len(), 5);
        let first = &json["particles"][0];
        assert!(first[2].as_array().unwrap().len() <= 3);
    }

    #[test]
    fn trace_ends_at_the_label() {
        let json: serde_json::Value = serde_json::from_str(&backwards_path(1, 20.0, 8).unwrap()).unwrap();
        let trace = json["trace"].as_array().unwrap();
        assert_eq!(trace.last().unwrap()["label"], 8);
    }
}
