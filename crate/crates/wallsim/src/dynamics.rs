//! Forward TASEP evolution.
//!
//! Particle `n` only ever looks at particle `n - 1`, so a system is evolved one
//! label at a time, lowest label first, each against the finished path of the
//! particle ahead of it. This is exact and needs no event queue.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clockwork::{unit_uniform, Clock, Randomness, StreamKey};
use crate::couplings::{CouplingMode, EventSource};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid wall: {0}")]
    Wall(String),
    #[error("invalid initial condition: {0}")]
    InitialCondition(String),
    #[error("label {0} is not present in the log")]
    MissingLabel(i64),
    #[error("tracked label {label} exceeds n_max = {n_max}")]
    Truncation { label: i64, n_max: i64 },
    #[error("stationary initial condition needs a seeded event source")]
    ScriptedStationary,
    #[error("window [{lo}, {hi}] does not cover the configuration")]
    Window { lo: i64, hi: i64 },
    #[error("hole log ends at label {last}, which is still left of the particle")]
    HoleWindow { last: i64 },
    #[error("the filled-left region must not advance to the right (slope {0})")]
    ClampDirection(f64),
    #[error("hole evolution needs site-keyed clocks")]
    HolesNeedSites,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WallLevel {
    Affine { intercept: f64, slope: f64 },
    Infinite,
}

impl WallLevel {
    fn at(&self, t: f64) -> f64 {
        match *self {
            WallLevel::Affine { intercept, slope } => intercept + slope * t,
            WallLevel::Infinite => f64::INFINITY,
        }
    }
}

/// One piece of the wall on `[from, to)`; the last piece also owns `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallPiece {
    pub from: f64,
    pub to: f64,
    pub level: WallLevel,
}

/// Non-decreasing càdlàg barrier. Evaluation is right-continuous at seams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pieces: Vec<WallPiece>,
}

impl WallSpec {
    pub fn new(pieces: Vec<WallPiece>) -> Result<Self, DynamicsError> {
        let err = |m: String| Err(DynamicsError::Wall(m));
        let Some(first) = pieces.first() else {
            return err("no pieces".into());
        };
        if first.from != 0.0 {
            return err(format!("first piece starts at {} instead of 0", first.from));
        }
        for (i, p) in pieces.iter().enumerate() {
            if !(p.from < p.to) {
                return err(format!("piece {i} has empty range [{}, {})", p.from, p.to));
            }
            if let WallLevel::Affine { intercept, slope } = p.level {
                if !intercept.is_finite() || !slope.is_finite() || slope < 0.0 {
                    return err(format!("piece {i} is not a finite non-decreasing affine function"));
                }
            }
            if i > 0 {
                let prev = &pieces[i - 1];
                if prev.to != p.from {
                    return err(format!("gap between pieces {} and {i}", i - 1));
                }
                if prev.level.at(p.from) > p.level.at(p.from) {
                    return err(format!("wall decreases at t = {}", p.from));
                }
            }
        }
        if first.level.at(0.0) < 0.0 {
            return err(format!("f(0) = {} is negative", first.level.at(0.0)));
        }
        Ok(Self { pieces })
    }

    pub fn affine(intercept: f64, slope: f64, horizon: f64) -> Result<Self, DynamicsError> {
        Self::new(vec![WallPiece { from: 0.0, to: horizon, level: WallLevel::Affine { intercept, slope } }])
    }

    pub fn constant(value: f64, horizon: f64) -> Result<Self, DynamicsError> {
        Self::affine(value, 0.0, horizon)
    }

    pub fn pieces(&self) -> &[WallPiece] {
        &self.pieces
    }

    pub fn horizon(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.to)
    }

    /// Interior seam times.
    pub fn seams(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().skip(1).map(|p| p.from)
    }

    fn piece_at(&self, t: f64) -> &WallPiece {
        let i = self.pieces.partition_point(|p| p.from <= t);
        &self.pieces[i.saturating_sub(1)]
    }

    /// f(t); outside `[0, horizon]` the first and last pieces are extended.
    pub fn value(&self, t: f64) -> f64 {
        self.piece_at(t).level.at(t)
    }

    /// f(t-).
    pub fn left_limit(&self, t: f64) -> f64 {
        let i = self.pieces.partition_point(|p| p.from < t);
        self.pieces[i.saturating_sub(1)].level.at(t)
    }

    /// Infimum of f over `(u, u + δ)` for small δ, and whether it is attained
    /// there (true on flat or infinite pieces).
    pub fn infimum_after(&self, u: f64) -> (f64, bool) {
        let p = self.piece_at(u);
        let attained = match p.level {
            WallLevel::Affine { slope, .. } => slope == 0.0,
            WallLevel::Infinite => true,
        };
        (p.level.at(u), attained)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Label `n >= lowest_label` at `rightmost - n + lowest_label`.
    Step { rightmost: i64, lowest_label: i64 },
    /// Bernoulli(density) on `[window.0, window.1]`. Label 1 is the first
    /// particle weakly left of the origin; particles to the right of the origin
    /// get labels 0, -1, ...
    Stationary { density: f64, window: (i64, i64) },
    Explicit(BTreeMap<i64, i64>),
}

impl InitialCondition {
    pub fn step() -> Self {
        InitialCondition::Step { rightmost: 0, lowest_label: 1 }
    }

    /// Label/position pairs in increasing label order, truncated at `n_max`.
    pub fn realize(&self, randomness: &Randomness, n_max: i64) -> Result<Vec<(i64, i64)>, DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InitialCondition(m));
        match self {
            InitialCondition::Step { rightmost, lowest_label } => {
                Ok((*lowest_label..=n_max).map(|n| (n, rightmost - n + lowest_label)).collect())
            }
            InitialCondition::Explicit(map) => {
                let mut out: Vec<(i64, i64)> = map.iter().filter(|(&n, _)| n <= n_max).map(|(&n, &x)| (n, x)).collect();
                for w in out.windows(2) {
                    if w[1].0 != w[0].0 + 1 {
                        return bad(format!("labels {} and {} are not consecutive", w[0].0, w[1].0));
                    }
                    if w[1].1 >= w[0].1 {
                        return bad(format!("label {} is not strictly left of label {}", w[1].0, w[0].0));
                    }
                }
                if out.is_empty() {
                    return bad("no particles at or below n_max".into());
                }
                out.shrink_to_fit();
                Ok(out)
            }
            InitialCondition::Stationary { density, window: (lo, hi) } => {
                if !(*density > 0.0 && *density < 1.0) {
                    return bad(format!("density {density} outside (0, 1)"));
                }
                if lo > hi || *lo > 0 {
                    return bad(format!("window [{lo}, {hi}] must contain the origin"));
                }
                let Some(seed) = randomness.seed() else {
                    return Err(DynamicsError::ScriptedStationary);
                };
                let tag = density.to_bits() ^ (*lo as u64).rotate_left(21) ^ (*hi as u64).rotate_left(42);
                let mut rng = seed.auxiliary_rng(tag);
                let sites: Vec<i64> = (*lo..=*hi).rev().filter(|_| unit_uniform(&mut rng) <= *density).collect();
                let right_of_origin = sites.iter().take_while(|&&x| x > 0).count() as i64;
                let first = 1 - right_of_origin;
                let out: Vec<(i64, i64)> =
                    sites.into_iter().zip(first..).map(|(x, n)| (n, x)).take_while(|&(n, _)| n <= n_max).collect();
                if out.last().is_none_or(|&(n, _)| n < n_max) {
                    return bad(format!("window [{lo}, {hi}] holds fewer than {n_max} labelled particles"));
                }
                Ok(out)
            }
        }
    }
}

/// A straight line `intercept + slope * t` in space-time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

impl Line {
    pub fn at(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }
}

/// State overrides applied while evolving. `empty_right_of` removes every
/// particle that is strictly right of the line; `filled_left_of` switches off
/// all clocks strictly left of it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Clamp {
    pub empty_right_of: Option<Line>,
    pub filled_left_of: Option<Line>,
    pub frozen_lead: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Keying {
    Site,
    Label(i64),
    /// Holes in mirrored coordinates z = -y; a hole at y moves when site y-1 rings.
    MirroredSite,
}

impl Keying {
    pub(crate) fn of(mode: CouplingMode) -> Self {
        match mode {
            CouplingMode::Basic => Keying::Site,
            CouplingMode::Clock { shift } => Keying::Label(shift),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelPath {
    pub label: i64,
    pub start: i64,
    /// Times of unit jumps to the right.
    pub jumps: Vec<f64>,
    /// Clock rings blocked by the particle ahead.
    pub suppressed: Vec<f64>,
    /// Set when a clamp deleted the particle.
    pub removed_at: Option<f64>,
}

impl LabelPath {
    fn new(label: i64, start: i64) -> Self {
        Self { label, start, jumps: Vec::new(), suppressed: Vec::new(), removed_at: None }
    }

    /// Right-continuous position; `None` once removed.
    pub fn position(&self, t: f64) -> Option<i64> {
        if self.removed_at.is_some_and(|d| d <= t) {
            return None;
        }
        Some(self.start + self.jumps.partition_point(|&s| s <= t) as i64)
    }

    /// Position just before `t`, ignoring removal.
    pub fn position_before(&self, t: f64) -> i64 {
        self.start + self.jumps.partition_point(|&s| s < t) as i64
    }

    pub fn end(&self) -> i64 {
        self.start + self.jumps.len() as i64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub start_time: f64,
    pub horizon: f64,
    /// Consecutive labels in increasing order.
    pub paths: Vec<LabelPath>,
    pub tracked: Vec<i64>,
    pub wall_blocked: u64,
    pub boundary_contact: bool,
}

impl TrajectoryLog {
    pub fn lowest_label(&self) -> i64 {
        self.paths.first().map_or(0, |p| p.label)
    }

    pub fn highest_label(&self) -> i64 {
        self.paths.last().map_or(-1, |p| p.label)
    }

    pub fn path(&self, label: i64) -> Option<&LabelPath> {
        let i = label.checked_sub(self.lowest_label())?;
        usize::try_from(i).ok().and_then(|i| self.paths.get(i))
    }

    pub fn position(&self, label: i64, t: f64) -> Option<i64> {
        self.path(label)?.position(t)
    }

    pub fn config_at(&self, t: f64) -> BTreeMap<i64, i64> {
        self.paths.iter().filter_map(|p| p.position(t).map(|x| (p.label, x))).collect()
    }

    pub fn final_config(&self) -> BTreeMap<i64, i64> {
        self.config_at(self.horizon)
    }

    /// All blocked attempts as `(time, label)`, time-ordered.
    pub fn suppressed(&self) -> Vec<(f64, i64)> {
        let mut out: Vec<(f64, i64)> =
            self.paths.iter().flat_map(|p| p.suppressed.iter().map(move |&s| (s, p.label))).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Sorted union of the jump times of `labels`.
    pub fn jump_times(&self, labels: impl IntoIterator<Item = i64>) -> Vec<f64> {
        let mut out: Vec<f64> =
            labels.into_iter().filter_map(|n| self.path(n)).flat_map(|p| p.jumps.iter().copied()).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// One JSON line per tracked label.
    pub fn write_jsonl(&self, replica: u64, out: &mut impl Write) -> std::io::Result<()> {
        for &label in &self.tracked {
            let Some(p) = self.path(label) else { continue };
            let rec = TrajectoryRecord {
                replica,
                label,
                start: p.start,
                jump_times: &p.jumps,
                positions: (1..=p.jumps.len() as i64).map(|k| p.start + k).collect(),
                suppressed: p.suppressed.iter().map(|&s| (s, label)).collect(),
                removed_at: p.removed_at,
            };
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    replica: u64,
    label: i64,
    start: i64,
    jump_times: &'a [f64],
    positions: Vec<i64>,
    suppressed: Vec<(f64, i64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    removed_at: Option<f64>,
}

/// Site clocks shared by every particle that visits a site, in visiting order.
struct SiteClocks {
    base: i64,
    slots: Vec<Option<Clock>>,
}

impl SiteClocks {
    fn new(lo: i64, hi: i64) -> Self {
        Self { base: lo, slots: (lo..=hi).map(|_| None).collect() }
    }

    fn get(&mut self, randomness: &Randomness, key: StreamKey, slot: i64) -> &mut Clock {
        if slot < self.base {
            let extra = (self.base - slot) as usize;
            self.slots.splice(0..0, (0..extra).map(|_| None));
            self.base = slot;
        }
        let i = (slot - self.base) as usize;
        if i >= self.slots.len() {
            self.slots.resize_with(i + 1 + self.slots.len() / 2, || None);
        }
        self.slots[i].get_or_insert_with(|| randomness.clock(key))
    }
}

/// Cursor over the path of the particle ahead; queries must be time-ordered.
struct Ahead<'p> {
    path: &'p LabelPath,
    next: usize,
}

impl Ahead<'_> {
    fn occupies(&mut self, t: f64, site: i64) -> bool {
        if self.path.removed_at.is_some_and(|d| d <= t) {
            return false;
        }
        while self.next < self.path.jumps.len() && self.path.jumps[self.next] <= t {
            self.next += 1;
        }
        self.path.start + self.next as i64 == site
    }
}

/// Evolution settings shared by forward runs, restarts and clamped copies.
#[derive(Clone, Copy, Debug)]
pub struct Run<'a> {
    pub randomness: &'a Randomness,
    pub(crate) keying: Keying,
    pub start_time: f64,
    pub horizon: f64,
    pub wall: Option<&'a WallSpec>,
    pub clamp: Clamp,
}

impl<'a> Run<'a> {
    pub fn new(source: &'a EventSource, start_time: f64, horizon: f64) -> Self {
        Self {
            randomness: &source.randomness,
            keying: Keying::of(source.mode),
            start_time,
            horizon,
            wall: None,
            clamp: Clamp::default(),
        }
    }

    pub fn with_wall(mut self, wall: Option<&'a WallSpec>) -> Self {
        self.wall = wall;
        self
    }

    pub fn with_clamp(mut self, clamp: Clamp) -> Self {
        self.clamp = clamp;
        self
    }

    /// Evolve particles given as `(label, position)` with consecutive labels
    /// and strictly decreasing positions.
    pub fn particles(&self, starts: &[(i64, i64)], tracked: &[i64]) -> Result<TrajectoryLog, DynamicsError> {
        if let Some(l) = self.clamp.filled_left_of {
            if l.slope > 0.0 {
                return Err(DynamicsError::ClampDirection(l.slope));
            }
        }
        let (paths, wall_blocked) = self.chain(starts);
        Ok(TrajectoryLog {
            start_time: self.start_time,
            horizon: self.horizon,
            paths,
            tracked: tracked.to_vec(),
            wall_blocked,
            boundary_contact: false,
        })
    }

    fn chain(&self, starts: &[(i64, i64)]) -> (Vec<LabelPath>, u64) {
        let lo = starts.last().map_or(0, |s| s.1) - 1;
        let hi = starts.first().map_or(0, |s| s.1) + 1;
        let mut sites = match self.keying {
            Keying::Label(_) => SiteClocks::new(0, -1),
            _ => SiteClocks::new(lo, hi),
        };
        let mut paths: Vec<LabelPath> = Vec::with_capacity(starts.len());
        let mut wall_blocked = 0;
        for (i, &(label, x0)) in starts.iter().enumerate() {
            let mut path = LabelPath::new(label, x0);
            if !(i == 0 && self.clamp.frozen_lead) {
                let ahead = if i > 0 { Some(Ahead { path: &paths[i - 1], next: 0 }) } else { None };
                wall_blocked += self.walk(&mut path, ahead, &mut sites);
            }
            paths.push(path);
        }
        (paths, wall_blocked)
    }

    fn walk(&self, path: &mut LabelPath, mut ahead: Option<Ahead<'_>>, sites: &mut SiteClocks) -> u64 {
        let mut own = match self.keying {
            Keying::Label(shift) => Some(self.randomness.clock(StreamKey::label(path.label + shift))),
            _ => None,
        };
        let right = self.clamp.empty_right_of;
        let left = self.clamp.filled_left_of;
        let mut pos = path.start;
        let mut t = self.start_time;
        let mut wall_blocked = 0;
        if right.is_some_and(|l| pos as f64 > l.at(t)) {
            path.removed_at = Some(t);
            return 0;
        }
        loop {
            let from = match left {
                Some(l) if (pos as f64) < l.at(t) => {
                    if l.slope < 0.0 {
                        (l.intercept - pos as f64) / -l.slope
                    } else {
                        f64::INFINITY
                    }
                }
                _ => t,
            };
            let exit = match right {
                Some(l) if l.slope < 0.0 => (l.intercept - pos as f64) / -l.slope,
                _ => f64::INFINITY,
            };
            let ring = if from > self.horizon {
                f64::INFINITY
            } else {
                match self.keying {
                    Keying::Label(_) => own.as_mut().map_or(f64::INFINITY, |c| c.next_after(from)),
                    Keying::Site => sites.get(self.randomness, StreamKey::site(pos), pos).next_after(from),
                    Keying::MirroredSite => sites.get(self.randomness, StreamKey::site(-pos - 1), pos).next_after(from),
                }
            };
            if exit < ring && exit <= self.horizon {
                path.removed_at = Some(exit);
                break;
            }
            if ring > self.horizon {
                break;
            }
            t = ring;
            let target = pos + 1;
            if let Some(a) = ahead.as_mut() {
                if a.occupies(ring, target) {
                    path.suppressed.push(ring);
                    continue;
                }
            }
            if self.wall.is_some_and(|w| target as f64 > w.value(ring)) {
                wall_blocked += 1;
                continue;
            }
            pos = target;
            path.jumps.push(ring);
            if right.is_some_and(|l| pos as f64 > l.at(ring)) {
                path.removed_at = Some(ring);
                break;
            }
        }
        wall_blocked
    }
}

/// Forward evolution from time 0, truncated to labels `<= n_max`.
///
/// For stationary data the run is repeated with the rightmost particle held
/// fixed; any difference on a tracked label sets `boundary_contact`.
pub fn evolve(
    ic: &InitialCondition,
    source: &EventSource,
    horizon: f64,
    wall: Option<&WallSpec>,
    tracked: &[i64],
    n_max: i64,
) -> Result<TrajectoryLog, DynamicsError> {
    if let Some(&label) = tracked.iter().find(|&&n| n > n_max) {
        return Err(DynamicsError::Truncation { label, n_max });
    }
    let starts = ic.realize(&source.randomness, n_max)?;
    let lowest = starts[0].0;
    if let Some(&label) = tracked.iter().find(|&&n| n < lowest) {
        return Err(DynamicsError::MissingLabel(label));
    }
    let run = Run::new(source, 0.0, horizon).with_wall(wall);
    let mut log = run.particles(&starts, tracked)?;
    if matches!(ic, InitialCondition::Stationary { .. }) {
        let pinned = run.with_clamp(Clamp { frozen_lead: true, ..Clamp::default() }).particles(&starts, tracked)?;
        log.boundary_contact = tracked.iter().any(|&n| n == lowest || log.path(n) != pinned.path(n));
    }
    Ok(log)
}

/// Holes of the step initial condition, hole `M` starting at site `M`, stored
/// in mirrored coordinates so that they form an ordinary TASEP.
#[derive(Clone, Debug, PartialEq)]
pub struct HoleLog {
    pub mirrored: TrajectoryLog,
}

impl HoleLog {
    pub fn position(&self, hole: i64, t: f64) -> Option<i64> {
        self.mirrored.position(hole, t).map(|z| -z)
    }

    pub fn highest_label(&self) -> i64 {
        self.mirrored.highest_label()
    }
}

/// Evolve holes `1..=hole_max` of step initial data directly from the site
/// clocks: a hole at `y` moves to `y - 1` when site `y - 1` rings while
/// occupied. A ring while `y - 1` is itself a hole is the hole's suppressed
/// attempt.
pub fn evolve_holes(source: &EventSource, horizon: f64, hole_max: i64) -> Result<HoleLog, DynamicsError> {
    if source.mode != CouplingMode::Basic {
        return Err(DynamicsError::HolesNeedSites);
    }
    let starts: Vec<(i64, i64)> = (1..=hole_max).map(|m| (m, -m)).collect();
    let run = Run { keying: Keying::MirroredSite, ..Run::new(source, 0.0, horizon) };
    let tracked: Vec<i64> = (1..=hole_max).collect();
    Ok(HoleLog { mirrored: run.particles(&starts, &tracked)? })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoleView {
    /// hole label -> site
    pub holes: BTreeMap<i64, i64>,
}

impl HoleView {
    /// Holes strictly left of `site`.
    pub fn count_left_of(&self, site: i64) -> usize {
        self.holes.values().filter(|&&y| y < site).count()
    }
}

/// Empty sites of `config` inside `window`, labelled so that hole `M` started
/// at site `M` under step initial data: a hole at `y` carries label
/// `y + #{particles right of y}`.
pub fn holes_of(config: &BTreeMap<i64, i64>, window: (i64, i64)) -> Result<HoleView, DynamicsError> {
    let (lo, hi) = window;
    if config.values().any(|&x| x < lo || x > hi) {
        return Err(DynamicsError::Window { lo, hi });
    }
    let mut occupied: Vec<i64> = config.values().copied().collect();
    occupied.sort_unstable();
    let holes = (lo..=hi)
        .filter(|y| occupied.binary_search(y).is_err())
        .map(|y| {
            let right = occupied.len() - occupied.partition_point(|&x| x <= y);
            (y + right as i64, y)
        })
        .collect();
    Ok(HoleView { holes })
}

/// `x_N(t) = S - N + 1` where `S` counts holes of the independently evolved
/// hole system strictly left of `x_N(t)`.
pub fn duality_check(particles: &TrajectoryLog, holes: &HoleLog, label: i64, t: f64) -> Result<bool, DynamicsError> {
    let x = particles.position(label, t).ok_or(DynamicsError::MissingLabel(label))?;
    let last = holes.highest_label();
    if holes.position(last, t).is_none_or(|y| y < x) {
        return Err(DynamicsError::HoleWindow { last });
    }
    let s = (1..=last).filter(|&m| holes.position(m, t).is_some_and(|y| y < x)).count() as i64;
    Ok(x == s - label + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basic(seed: u64, replica: u64) -> EventSource {
        EventSource::new(CouplingMode::Basic, Randomness::seeded(seed, replica))
    }

    fn clock(seed: u64, replica: u64) -> EventSource {
        EventSource::new(CouplingMode::Clock { shift: 0 }, Randomness::seeded(seed, replica))
    }

    #[test]
    fn free_particle_is_poisson() {
        let t = 25.0;
        let reps = 10_000;
        let sum: i64 = (0..reps)
            .map(|r| evolve(&InitialCondition::step(), &basic(1, r), t, None, &[1], 1).unwrap().position(1, t).unwrap())
            .sum();
        let mean = sum as f64 / reps as f64;
        assert!((mean - t).abs() <= 3.0 * (t / reps as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn zero_wall_pins_particle() {
        let wall = WallSpec::constant(0.0, 30.0).unwrap();
        let log = evolve(&InitialCondition::step(), &basic(2, 0), 30.0, Some(&wall), &[1], 1).unwrap();
        assert!(log.paths[0].jumps.is_empty());
        assert!(log.wall_blocked > 0);
    }

    #[test]
    fn scripted_two_particles() {
        let source = EventSource::new(
            CouplingMode::Clock { shift: 0 },
            Randomness::scripted([(StreamKey::label(2), 0.5), (StreamKey::label(1), 0.7)]),
        );
        let log = evolve(&InitialCondition::step(), &source, 1.0, None, &[1, 2], 2).unwrap();
        assert_eq!(log.suppressed(), vec![(0.5, 2)]);
        assert_eq!(log.position(1, 1.0), Some(1));
        assert_eq!(log.position(2, 1.0), Some(-1));
    }

    #[test]
    fn wall_value_is_right_continuous() {
        let w = WallSpec::new(vec![
            WallPiece { from: 0.0, to: 2.0, level: WallLevel::Affine { intercept: 1.0, slope: 0.5 } },
            WallPiece { from: 2.0, to: 4.0, level: WallLevel::Affine { intercept: 5.0, slope: 0.0 } },
            WallPiece { from: 4.0, to: 5.0, level: WallLevel::Infinite },
        ])
        .unwrap();
        assert_eq!(w.value(2.0), 5.0);
        assert_eq!(w.left_limit(2.0), 2.0);
        assert_eq!(w.value(4.0), f64::INFINITY);
        assert_eq!(w.left_limit(4.0), 5.0);
        assert_eq!(w.value(5.0), f64::INFINITY);
        assert_eq!(w.infimum_after(2.5), (5.0, true));
        assert_eq!(w.infimum_after(1.0), (1.5, false));
    }

    #[test]
    fn decreasing_or_negative_walls_rejected() {
        let down = WallSpec::new(vec![
            WallPiece { from: 0.0, to: 1.0, level: WallLevel::Affine { intercept: 3.0, slope: 0.0 } },
            WallPiece { from: 1.0, to: 2.0, level: WallLevel::Affine { intercept: 2.0, slope: 0.0 } },
        ]);
        assert!(down.is_err());
        assert!(WallSpec::constant(-0.5, 1.0).is_err());
        assert!(WallSpec::affine(0.0, -1.0, 1.0).is_err());
        let after_inf = WallSpec::new(vec![
            WallPiece { from: 0.0, to: 1.0, level: WallLevel::Infinite },
            WallPiece { from: 1.0, to: 2.0, level: WallLevel::Affine { intercept: 2.0, slope: 0.0 } },
        ]);
        assert!(after_inf.is_err());
    }

    #[test]
    fn holes_of_step_at_time_zero() {
        let config: BTreeMap<i64, i64> = (1..=6).map(|n| (n, 1 - n)).collect();
        let view = holes_of(&config, (-5, 4)).unwrap();
        assert_eq!(view.holes.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        for x in config.values() {
            assert_eq!(view.count_left_of(*x), 0);
        }
    }

    #[test]
    fn holes_of_small_config() {
        let config = BTreeMap::from([(1, 2), (2, 0), (3, -1)]);
        let view = holes_of(&config, (-1, 2)).unwrap();
        assert_eq!(view.holes, BTreeMap::from([(2, 1)]));
        assert!(holes_of(&config, (0, 2)).is_err());
    }

    #[test]
    fn holes_of_two_particle_config() {
        let config = BTreeMap::from([(1, 3), (2, 1)]);
        let view = holes_of(&config, (-1, 3)).unwrap();
        let left: Vec<(i64, i64)> = view.holes.iter().filter(|(_, &y)| y < 1).map(|(&m, &y)| (m, y)).collect();
        assert_eq!(left, vec![(1, -1), (2, 0)]);
        let s = left.len() as i64;
        assert_eq!(1, s - 2 + 1);
    }

    #[test]
    fn duality_on_simulated_paths() {
        for r in 0..20 {
            let source = basic(3, r);
            let t = 40.0;
            let n_max = 30;
            let log = evolve(&InitialCondition::step(), &source, t, None, &[], n_max).unwrap();
            let holes = evolve_holes(&source, t, 120).unwrap();
            for &s in &[0.0, 5.0, 13.3, 27.0, 40.0] {
                for n in [1, 7, 19, 30] {
                    assert!(duality_check(&log, &holes, n, s).unwrap(), "replica {r}, n {n}, t {s}");
                }
            }
        }
    }

    #[test]
    fn hole_jumps_are_particle_jumps() {
        let source = basic(4, 0);
        let t = 30.0;
        let (n_max, h_max) = (25, 25);
        let log = evolve(&InitialCondition::step(), &source, t, None, &[], n_max).unwrap();
        let holes = evolve_holes(&source, t, h_max).unwrap();
        for p in &log.paths {
            for (k, &s) in p.jumps.iter().enumerate() {
                let y = p.start + k as i64;
                let hole = p.label + y;
                if hole <= h_max {
                    let hp = holes.mirrored.path(hole).unwrap();
                    assert!(hp.jumps.contains(&s), "particle {} at {s}", p.label);
                }
            }
        }
        for hp in &holes.mirrored.paths {
            for (k, &s) in hp.jumps.iter().enumerate() {
                let y = -(hp.start + k as i64) - 1;
                let label = hp.label - y;
                if label <= n_max {
                    assert!(log.path(label).unwrap().jumps.contains(&s), "hole {} at {s}", hp.label);
                }
            }
        }
    }

    #[test]
    fn duality_needs_enough_holes() {
        let source = basic(4, 1);
        let log = evolve(&InitialCondition::step(), &source, 20.0, None, &[], 10).unwrap();
        let holes = evolve_holes(&source, 20.0, 1).unwrap();
        assert!(duality_check(&log, &holes, 10, 20.0).is_err());
        let scripted = EventSource::new(CouplingMode::Clock { shift: 0 }, Randomness::seeded(1, 1));
        assert!(evolve_holes(&scripted, 1.0, 3).is_err());
    }

    #[test]
    fn truncation_is_exact() {
        for r in 0..100 {
            for source in [basic(5, r), clock(5, r)] {
                let small = evolve(&InitialCondition::step(), &source, 30.0, None, &[], 20).unwrap();
                let big = evolve(&InitialCondition::step(), &source, 30.0, None, &[], 70).unwrap();
                assert_eq!(small.paths[..], big.paths[..20]);
            }
        }
    }

    #[test]
    fn stationary_labels_and_density() {
        let ic = InitialCondition::Stationary { density: 0.3, window: (-2000, 2000) };
        let starts = ic.realize(&Randomness::seeded(9, 0), 400).unwrap();
        let label_one = starts.iter().find(|s| s.0 == 1).unwrap();
        assert!(label_one.1 <= 0);
        assert!(starts.iter().filter(|s| s.0 <= 0).all(|s| s.1 > 0));
        let right = starts.iter().filter(|s| s.1 > 0).count() as f64;
        assert!((right / 2000.0 - 0.3).abs() < 0.04, "{right}");
        assert!(InitialCondition::Stationary { density: 0.3, window: (-10, 10) }
            .realize(&Randomness::seeded(9, 0), 400)
            .is_err());
        assert!(ic.realize(&Randomness::scripted([]), 10).is_err());
    }

    #[test]
    fn stationary_boundary_contact_flag() {
        let ic = InitialCondition::Stationary { density: 0.5, window: (-200, 3) };
        let log = evolve(&ic, &clock(6, 0), 50.0, None, &[1, 20], 40).unwrap();
        assert!(log.boundary_contact);
        let wide = InitialCondition::Stationary { density: 0.5, window: (-200, 400) };
        let log = evolve(&wide, &clock(6, 0), 20.0, None, &[60], 60).unwrap();
        assert!(!log.boundary_contact);
    }

    #[test]
    fn clamps_remove_and_freeze() {
        let source = basic(8, 0);
        let right = Line { intercept: 3.0, slope: -0.2 };
        let log = Run::new(&source, 0.0, 60.0)
            .with_clamp(Clamp { empty_right_of: Some(right), ..Clamp::default() })
            .particles(&(1..=15).map(|n| (n, 1 - n)).collect::<Vec<_>>(), &[])
            .unwrap();
        for p in &log.paths {
            for (k, &s) in p.jumps.iter().enumerate() {
                assert!((p.start + k as i64 + 1) as f64 <= right.at(s) || p.removed_at == Some(s));
            }
            if let Some(d) = p.removed_at {
                assert!(p.end() as f64 >= right.at(d) - 1e-9);
            }
        }
        let left = Line { intercept: -4.0, slope: -0.1 };
        let log = Run::new(&source, 0.0, 30.0)
            .with_clamp(Clamp { filled_left_of: Some(left), ..Clamp::default() })
            .particles(&(1..=15).map(|n| (n, 1 - n)).collect::<Vec<_>>(), &[])
            .unwrap();
        for p in &log.paths {
            for (k, &s) in p.jumps.iter().enumerate() {
                assert!((p.start + k as i64) as f64 >= left.at(s));
            }
        }
        let bad = Clamp { filled_left_of: Some(Line { intercept: 0.0, slope: 0.5 }), ..Clamp::default() };
        assert!(Run::new(&source, 0.0, 1.0).with_clamp(bad).particles(&[(1, 0)], &[]).is_err());
    }

    #[test]
    fn jsonl_has_one_line_per_tracked_label() {
        let log = evolve(&InitialCondition::step(), &basic(1, 2), 5.0, None, &[1, 3], 3).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(7, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1]["label"], 3);
        assert_eq!(lines[0]["replica"], 7);
    }

    fn wall_strategy() -> impl Strategy<Value = WallSpec> {
        (0.0f64..3.0, proptest::collection::vec((0.0f64..1.5, 0.0f64..2.0, 0.5f64..5.0), 1..4)).prop_map(
            |(start, pieces)| {
                let mut t = 0.0;
                let mut level = start;
                let mut out = Vec::new();
                for (slope, bump, len) in pieces {
                    let intercept = level - slope * t;
                    out.push(WallPiece { from: t, to: t + len, level: WallLevel::Affine { intercept, slope } });
                    t += len;
                    level = intercept + slope * t + bump;
                }
                WallSpec::new(out).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn invariants_hold(seed in any::<u64>(), wall in wall_strategy(), labelled in any::<bool>()) {
            let source = if labelled { clock(seed, 0) } else { basic(seed, 0) };
            let horizon = wall.horizon();
            let log = evolve(&InitialCondition::step(), &source, horizon, Some(&wall), &[], 12).unwrap();
            let mut times: Vec<f64> = log.jump_times(1..=12);
            times.push(0.0);
            for &s in &times {
                let config = log.config_at(s);
                for w in config.values().collect::<Vec<_>>().windows(2) {
                    prop_assert!(w[0] > w[1]);
                }
                let front = config[&1];
                prop_assert!(front as f64 <= wall.value(s).floor());
            }
            for p in &log.paths {
                prop_assert!(p.jumps.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
