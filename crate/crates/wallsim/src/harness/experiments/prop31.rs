//! The wall identity: `P(x^f_n(T) > S)` equals the probability that the free
//! particle `n` stays above `S - f(T - t)` for all `t` and ends above `S`.

use serde::Serialize;

use super::super::config::{wall_from_pieces, Prop31Config};
use super::super::{map_replicas, replica_randomness, stats::se_bernoulli, Check, Experiment, HarnessError, Report, Table};
use crate::couplings::{CouplingMode, EventSource};
use crate::dynamics::{evolve, InitialCondition, LabelPath, WallLevel, WallSpec};

const WALL_BLOCK: u64 = 0;
const FREE_BLOCK: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop31Row {
    pub s: i64,
    pub p_wall: f64,
    pub p_event: f64,
    pub se_combined: f64,
    pub pass: bool,
    pub analytic: Option<f64>,
}

/// Whether the free path satisfies `x(t) > s - ⌊f(T - t)⌋` on `[0, T]` and
/// `x(T) > s`. The walled dynamics only see `⌊f⌋`, so the event is taken
/// against it. Exact: on a constancy interval `[a, b)` the binding value is
/// `⌊inf f⌋` over `(T - b, T - a]`, and `⌊f⌋` attains it.
pub fn path_event(path: &LabelPath, wall: &WallSpec, horizon: f64, s: i64) -> bool {
    let clears = |v: i64, level: f64| v as f64 + level.floor() > s as f64;
    let mut v = path.start;
    for &jump in path.jumps.iter().take_while(|&&j| j <= horizon) {
        if !clears(v, wall.infimum_after(horizon - jump).0) {
            return false;
        }
        v += 1;
    }
    v > s && clears(v, wall.value(0.0))
}

/// `P(Poisson(t) >= k)`.
fn poisson_at_least(k: i64, t: f64) -> f64 {
    if k <= 0 {
        return 1.0;
    }
    let mut term = (-t).exp();
    let mut below = term;
    for j in 1..k {
        term *= t / j as f64;
        below += term;
    }
    (1.0 - below).max(0.0)
}

/// Closed form for a single particle under a constant wall `c`:
/// `x_1(T) = min(Poisson(T), ⌊c⌋)`.
fn single_particle(wall: &WallSpec, horizon: f64, s: i64) -> Option<f64> {
    let [piece] = wall.pieces() else { return None };
    let WallLevel::Affine { intercept, slope } = piece.level else { return None };
    if slope != 0.0 {
        return None;
    }
    let cap = intercept.floor() as i64;
    Some(if s < 0 { 1.0 } else if s < cap { poisson_at_least(s + 1, horizon) } else { 0.0 })
}

pub fn run(cfg: &Prop31Config, seed: u64) -> Result<Report, HarnessError> {
    if cfg.n < 1 || cfg.replicas == 0 {
        return Err(HarnessError::Config("prop31 needs n >= 1 and replicas >= 1".into()));
    }
    let wall = wall_from_pieces(&cfg.wall)?;
    if wall.horizon() < cfg.horizon {
        return Err(HarnessError::Config(format!("wall ends at {} before the horizon {}", wall.horizon(), cfg.horizon)));
    }
    let (n, horizon) = (cfg.n, cfg.horizon);
    let source = |block, r| EventSource::new(CouplingMode::Basic, replica_randomness(seed, block, r));
    let walled: Vec<i64> = map_replicas(cfg.replicas, |r| {
        let log = evolve(&InitialCondition::step(), &source(WALL_BLOCK, r), horizon, Some(&wall), &[n], n)?;
        Ok::<_, HarnessError>(log.position(n, horizon).expect("tracked label"))
    })?;
    let events: Vec<Vec<bool>> = map_replicas(cfg.replicas, |r| {
        let log = evolve(&InitialCondition::step(), &source(FREE_BLOCK, r), horizon, None, &[n], n)?;
        let path = log.path(n).expect("tracked label");
        Ok::<_, HarnessError>(cfg.s_grid.iter().map(|&s| path_event(path, &wall, horizon, s)).collect())
    })?;

    let reps = cfg.replicas as usize;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (k, &s) in cfg.s_grid.iter().enumerate() {
        let p_wall = walled.iter().filter(|&&x| x > s).count() as f64 / reps as f64;
        let p_event = events.iter().filter(|e| e[k]).count() as f64 / reps as f64;
        let se = (se_bernoulli(p_wall, reps).powi(2) + se_bernoulli(p_event, reps).powi(2)).sqrt();
        let pass = (p_wall - p_event).abs() <= 3.0 * se;
        checks.push(Check::new(
            format!("identity_s={s}"),
            pass,
            format!("p_wall {p_wall:.5}, p_event {p_event:.5}, 3se {:.5}", 3.0 * se),
        ));
        let analytic = if n == 1 { single_particle(&wall, horizon, s) } else { None };
        if let Some(p) = analytic {
            let band = 3.0 * se_bernoulli(p, reps);
            let ok = (p_wall - p).abs() <= band && (p_event - p).abs() <= band;
            checks.push(Check::new(
                format!("analytic_s={s}"),
                ok,
                format!("exact {p:.5}, p_wall {p_wall:.5}, p_event {p_event:.5}, 3se {band:.5}"),
            ));
        }
        rows.push(Prop31Row { s, p_wall, p_event, se_combined: se, pass, analytic });
    }
    Ok(Report { experiment: Experiment::Prop31, checks, tables: vec![Table::csv("prop31.csv", &rows)?] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clockwork::{Randomness, StreamKey};
    use crate::dynamics::WallPiece;

    fn path(start: i64, jumps: &[f64]) -> LabelPath {
        LabelPath { label: 1, start, jumps: jumps.to_vec(), suppressed: Vec::new(), removed_at: None }
    }

    #[test]
    fn event_on_hand_paths() {
        let wall = WallSpec::constant(0.0, 1.0).unwrap();
        // x(0) = 0 against S - f = 0: fails immediately
        assert!(!path_event(&path(0, &[0.4]), &wall, 1.0, 0));
        assert!(path_event(&path(0, &[0.4]), &wall, 1.0, -1));
        let wall = WallSpec::constant(1.0, 1.0).unwrap();
        assert!(path_event(&path(0, &[0.4]), &wall, 1.0, 0));
        assert!(!path_event(&path(0, &[]), &wall, 1.0, 0));
    }

    #[test]
    fn event_uses_the_integer_part_of_the_wall() {
        // f(u) = u on [0, 2], S = 1: at height 1 on [0, 1.5) the path needs
        // ⌊f(u)⌋ >= 1 for u in (0.5, 2], which fails below u = 1
        let wall = WallSpec::affine(0.0, 1.0, 2.0).unwrap();
        assert!(!path_event(&path(1, &[1.5]), &wall, 2.0, 1));
        assert!(path_event(&path(1, &[0.9]), &wall, 2.0, 1));
        // f = 1/2 pins a walled particle, so it must not help the free one
        let half = WallSpec::constant(0.5, 1.0).unwrap();
        assert!(!path_event(&path(0, &[0.3]), &half, 1.0, 0));
        let flat = WallSpec::new(vec![
            WallPiece { from: 0.0, to: 1.0, level: WallLevel::Affine { intercept: 0.5, slope: 0.0 } },
            WallPiece { from: 1.0, to: 2.0, level: WallLevel::Affine { intercept: 1.0, slope: 0.0 } },
        ])
        .unwrap();
        assert!(!path_event(&path(0, &[1.5]), &flat, 2.0, 1));
        assert!(path_event(&path(1, &[0.2]), &flat, 2.0, 1));
    }

    #[test]
    fn estimators_agree_on_scripted_clocks() {
        // a wall of 0.5 pins the particle, so both sides are zero at S = 0
        let rnd = Randomness::scripted([(StreamKey::site(0), 0.3)]);
        let source = EventSource::new(CouplingMode::Basic, rnd);
        let wall = WallSpec::constant(0.5, 1.0).unwrap();
        let walled = evolve(&InitialCondition::step(), &source, 1.0, Some(&wall), &[1], 1).unwrap();
        let free = evolve(&InitialCondition::step(), &source, 1.0, None, &[1], 1).unwrap();
        assert_eq!(walled.position(1, 1.0), Some(0));
        assert!(!path_event(free.path(1).unwrap(), &wall, 1.0, 0));
    }

    #[test]
    fn poisson_tail() {
        assert!((poisson_at_least(1, 3.0) - (1.0 - (-3.0f64).exp())).abs() < 1e-15);
        assert!((poisson_at_least(2, 1.0) - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn pinned_particle_gives_zero_on_both_sides() {
        let cfg = Prop31Config {
            n: 1,
            horizon: 2.0,
            s_grid: vec![0],
            replicas: 200,
            wall: vec![super::super::super::config::PieceConfig {
                from: 0.0,
                to: 2.0,
                c: super::super::super::config::Intercept::Finite(0.0),
                v: 0.0,
            }],
        };
        let report = run(&cfg, 4).unwrap();
        assert!(report.passed());
        assert!(report.tables[0].body.contains("0,0.0,0.0,0.0,true,"));
    }
}
