//! Coupled ensembles, restarts from step data, and the pathwise comparisons
//! that hold between coupled systems.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backpaths::{backwards_index, BackpathError};
use crate::clockwork::{unit_uniform, Randomness};
use crate::dynamics::{evolve, DynamicsError, InitialCondition, LabelPath, Run, TrajectoryLog};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Backpath(#[from] BackpathError),
    #[error("an ensemble needs at least two members")]
    TooFewMembers,
    #[error("basic coupling has no label offsets, got {0}")]
    OffsetUnderBasic(i64),
    #[error("restart time {tau} is outside [{start}, {horizon}]")]
    RestartTime { tau: f64, start: f64, horizon: f64 },
    #[error("{check} needs {expected} coupling")]
    WrongMode { check: &'static str, expected: &'static str },
    #[error("comparison parameters rejected: {0}")]
    Comparison(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingMode {
    /// Site-keyed clocks (Harris construction).
    Basic,
    /// Label `n` reads the clock keyed by label `n + shift`.
    Clock { shift: i64 },
}

/// A coupling mode together with the randomness it reads.
#[derive(Clone, Debug)]
pub struct EventSource {
    pub mode: CouplingMode,
    pub randomness: Randomness,
}

impl EventSource {
    pub fn new(mode: CouplingMode, randomness: Randomness) -> Self {
        Self { mode, randomness }
    }

    pub fn with_mode(&self, mode: CouplingMode) -> Self {
        Self { mode, randomness: self.randomness.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RestartFrom {
    /// Step data with rightmost particle at the given site, labels 1, 2, ...
    Position(i64),
    /// Step data below label `m` of the parent: label `n >= m` at `x_m(τ) - n + m`.
    Label(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSpec {
    pub time: f64,
    pub from: RestartFrom,
}

/// Evolve every member from the same randomness. Under clock coupling member
/// label `n` uses the clock of label `n + shift + offset`.
pub fn run_ensemble(
    members: &[(InitialCondition, i64)],
    mode: CouplingMode,
    randomness: &Randomness,
    horizon: f64,
    tracked: &[i64],
    n_max: i64,
) -> Result<Vec<TrajectoryLog>, CouplingError> {
    if members.len() < 2 {
        return Err(CouplingError::TooFewMembers);
    }
    members
        .iter()
        .map(|(ic, offset)| {
            let member_mode = match mode {
                CouplingMode::Basic if *offset != 0 => return Err(CouplingError::OffsetUnderBasic(*offset)),
                CouplingMode::Basic => CouplingMode::Basic,
                CouplingMode::Clock { shift } => CouplingMode::Clock { shift: shift + offset },
            };
            let source = EventSource::new(member_mode, randomness.clone());
            Ok(evolve(ic, &source, horizon, None, tracked, n_max)?)
        })
        .collect()
}

/// Restart from step data at time τ, reading the same clocks as the parent
/// from τ on. Labels run up to `n_max`.
pub fn restart_step(
    parent: &TrajectoryLog,
    source: &EventSource,
    spec: RestartSpec,
    horizon: f64,
    n_max: i64,
) -> Result<TrajectoryLog, CouplingError> {
    let tau = spec.time;
    if !(tau >= parent.start_time && tau <= horizon) {
        return Err(CouplingError::RestartTime { tau, start: parent.start_time, horizon });
    }
    let starts: Vec<(i64, i64)> = match spec.from {
        RestartFrom::Position(z) => (1..=n_max).map(|n| (n, z - n + 1)).collect(),
        RestartFrom::Label(m) => {
            let top = parent.position(m, tau).ok_or(DynamicsError::MissingLabel(m))?;
            (m..=n_max).map(|n| (n, top - n + m)).collect()
        }
    };
    if starts.is_empty() {
        return Err(DynamicsError::Truncation { label: n_max, n_max }.into());
    }
    Ok(Run::new(source, tau, horizon).particles(&starts, &[])?)
}

/// One failed pathwise comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub replica_id: u64,
    pub check_name: String,
    pub time: f64,
    pub labels: String,
    pub lhs: i64,
    pub rhs: i64,
}

impl Violation {
    fn new(check: &str, time: f64, labels: String, lhs: i64, rhs: i64) -> Self {
        Self { replica_id: 0, check_name: check.to_string(), time, labels, lhs, rhs }
    }
}

pub fn write_violations(rows: &[Violation], out: impl Write) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["replica_id", "check_name", "time", "labels", "lhs", "rhs"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `from` plus every jump of `paths` in `(from, to]`, sorted.
fn event_times(paths: &[&LabelPath], from: f64, to: f64) -> Vec<f64> {
    let mut out = vec![from];
    for p in paths {
        out.extend(p.jumps.iter().copied().filter(|&s| s > from && s <= to));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn pos(p: &LabelPath, t: f64) -> i64 {
    p.position(t).unwrap_or(i64::MAX)
}

/// `x_n(t) <= x̃_n(t)` for every shared label at every jump time.
pub fn check_order(x: &TrajectoryLog, xt: &TrajectoryLog) -> Vec<Violation> {
    let mut out = Vec::new();
    for p in &x.paths {
        let Some(q) = xt.path(p.label) else { continue };
        for s in event_times(&[p, q], x.start_time, x.horizon) {
            let (a, b) = (pos(p, s), pos(q, s));
            if a > b {
                out.push(Violation::new("order", s, p.label.to_string(), a, b));
            }
        }
    }
    out
}

/// Gap domination `x_{n-1} - x_n >= x̃_{n-1} - x̃_n` and increment domination,
/// i.e. `x_n - x̃_n` nondecreasing. A failure at the start time is reported as
/// a precondition violation.
pub fn check_gap_and_increment_order(x: &TrajectoryLog, xt: &TrajectoryLog) -> Vec<Violation> {
    let mut out = Vec::new();
    let t0 = x.start_time;
    for w in x.paths.windows(2) {
        let (ahead, p) = (&w[0], &w[1]);
        let (Some(qa), Some(q)) = (xt.path(ahead.label), xt.path(p.label)) else { continue };
        let labels = format!("{}:{}", ahead.label, p.label);
        for s in event_times(&[ahead, p, qa, q], t0, x.horizon) {
            let gap = pos(ahead, s) - pos(p, s);
            let gap_t = pos(qa, s) - pos(q, s);
            if gap < gap_t {
                let name = if s == t0 { "gap_precondition" } else { "gap" };
                out.push(Violation::new(name, s, labels.clone(), gap, gap_t));
            }
        }
    }
    for p in &x.paths {
        let Some(q) = xt.path(p.label) else { continue };
        let mut last = pos(p, t0) - pos(q, t0);
        for s in event_times(&[p, q], t0, x.horizon) {
            let d = pos(p, s) - pos(q, s);
            if d < last {
                out.push(Violation::new("increment", s, p.label.to_string(), d, last));
            }
            last = d;
        }
    }
    out
}

/// Two step systems from the same site, labels `>= m` and `>= m_tilde` with
/// `m_tilde <= m`, under unshifted clock coupling:
/// `x_N >= x̃_N + m - m̃` and increments of `x_N` dominate those of `x̃_N`.
pub fn check_step_comparison(x: &TrajectoryLog, xt: &TrajectoryLog, m: i64, m_tilde: i64) -> Vec<Violation> {
    let mut out = Vec::new();
    for p in &x.paths {
        let Some(q) = xt.path(p.label) else { continue };
        let mut last = i64::MIN;
        for s in event_times(&[p, q], x.start_time, x.horizon) {
            let (a, b) = (pos(p, s), pos(q, s) + m - m_tilde);
            if a < b {
                out.push(Violation::new("step_comparison", s, p.label.to_string(), a, b));
            }
            if a - b < last {
                out.push(Violation::new("step_increment", s, p.label.to_string(), a - b, last));
            }
            last = a - b;
        }
    }
    out
}

/// Random pair `(x, x̃)` of finite explicit data with `len` particles:
/// `order` gives `x <= x̃` componentwise, `gaps` gives gaps of `x` at least
/// those of `x̃`. Both share labels `1..=len`.
pub fn random_pair(randomness: &Randomness, tag: u64, len: i64, gaps: bool) -> (InitialCondition, InitialCondition) {
    let mut rng = randomness.seed().unwrap_or_else(|| crate::clockwork::SeedSpec::new(0, 0)).auxiliary_rng(tag);
    let mut draw = |k: f64| (unit_uniform(&mut rng) * k) as i64;
    let mut xt = BTreeMap::new();
    let mut x = BTreeMap::new();
    let mut at = draw(5.0);
    let mut base = at;
    let mut shift = 0;
    for n in 1..=len {
        if n > 1 {
            let gap = 1 + draw(3.0);
            at -= gap;
            base -= if gaps { gap + draw(3.0) } else { gap };
        }
        xt.insert(n, at);
        if gaps {
            x.insert(n, base);
        } else {
            shift += draw(2.0);
            x.insert(n, at - shift);
        }
    }
    (InitialCondition::Explicit(x), InitialCondition::Explicit(xt))
}

/// Equality of `x_N(t)` with a minimum over restarted step systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct IdentityCheck {
    pub lhs: i64,
    pub rhs: i64,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }
}

fn require(source: &EventSource, basic: bool, check: &'static str) -> Result<(), CouplingError> {
    match (source.mode, basic) {
        (CouplingMode::Basic, true) | (CouplingMode::Clock { shift: 0 }, false) => Ok(()),
        (_, true) => Err(CouplingError::WrongMode { check, expected: "basic" }),
        (_, false) => Err(CouplingError::WrongMode { check, expected: "unshifted clock" }),
    }
}

/// `x_N(t) = min_{n <= N} x^{step, x_n(τ)}_{N-n+1}(τ, t)` under basic coupling.
pub fn check_min_formula_basic(
    parent: &TrajectoryLog,
    source: &EventSource,
    tau: f64,
    t: f64,
    label: i64,
) -> Result<IdentityCheck, CouplingError> {
    require(source, true, "site min formula")?;
    let lhs = parent.position(label, t).ok_or(DynamicsError::MissingLabel(label))?;
    let mut rhs = i64::MAX;
    for n in parent.lowest_label()..=label {
        let z = parent.position(n, tau).ok_or(DynamicsError::MissingLabel(n))?;
        let k = label - n + 1;
        let y = restart_step(parent, source, RestartSpec { time: tau, from: RestartFrom::Position(z) }, t, k)?;
        rhs = rhs.min(y.position(k, t).ok_or(DynamicsError::MissingLabel(k))?);
    }
    Ok(IdentityCheck { lhs, rhs })
}

/// `x_N(t) = min_{m <= N} y^{step, m}_N(τ; t)` under clock coupling.
pub fn check_min_formula_clock(
    parent: &TrajectoryLog,
    source: &EventSource,
    tau: f64,
    t: f64,
    label: i64,
) -> Result<IdentityCheck, CouplingError> {
    require(source, false, "label min formula")?;
    let lhs = parent.position(label, t).ok_or(DynamicsError::MissingLabel(label))?;
    let mut rhs = i64::MAX;
    for m in parent.lowest_label()..=label {
        let y = restart_step(parent, source, RestartSpec { time: tau, from: RestartFrom::Label(m) }, t, label)?;
        rhs = rhs.min(y.position(label, t).ok_or(DynamicsError::MissingLabel(label))?);
    }
    Ok(IdentityCheck { lhs, rhs })
}

/// Restart along the backwards path: under basic coupling
/// `x_N(t) = x^{step, x_{N(t↓τ)}(τ)}_{N - N(t↓τ) + 1}(τ, t)`, under clock
/// coupling `x_N(t) = y^{step, N(t↓τ)}_N(τ; t)`.
pub fn check_concatenation(
    parent: &TrajectoryLog,
    source: &EventSource,
    tau: f64,
    t: f64,
    label: i64,
) -> Result<IdentityCheck, CouplingError> {
    let lhs = parent.position(label, t).ok_or(DynamicsError::MissingLabel(label))?;
    let index = backwards_index(parent, label, t)?.index_at(tau);
    let rhs = match source.mode {
        CouplingMode::Basic => {
            let z = parent.position(index, tau).ok_or(DynamicsError::MissingLabel(index))?;
            let k = label - index + 1;
            let y = restart_step(parent, source, RestartSpec { time: tau, from: RestartFrom::Position(z) }, t, k)?;
            y.position(k, t)
        }
        CouplingMode::Clock { shift: 0 } => {
            let y = restart_step(parent, source, RestartSpec { time: tau, from: RestartFrom::Label(index) }, t, label)?;
            y.position(label, t)
        }
        CouplingMode::Clock { .. } => return Err(CouplingError::WrongMode { check: "concatenation", expected: "unshifted clock" }),
    };
    Ok(IdentityCheck { lhs, rhs: rhs.ok_or(DynamicsError::MissingLabel(label))? })
}

/// Outcome of the increment lemma for shifted systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IncrementLemma {
    /// Both hypotheses hold: `x̃_M(t1) <= x_N(t1)` and the backwards paths
    /// from `(N, t2)` in `x` and `(M, t1)` in `x̃` meet before `t1`.
    pub applies: bool,
    pub lhs: i64,
    pub rhs: i64,
}

impl IncrementLemma {
    pub fn violated(&self) -> bool {
        self.applies && self.lhs < self.rhs
    }
}

/// Evaluate `x_N(t2) - x_N(t1) >= x̃_M(t2) - x̃_M(t1)` for two step systems
/// whose labels `N + n` and `M + n` are meant to share clocks. Under
/// [`CouplingMode::Basic`] both systems read site clocks instead.
pub fn increment_lemma(
    randomness: &Randomness,
    mode: CouplingMode,
    n: i64,
    m: i64,
    t1: f64,
    t2: f64,
) -> Result<IncrementLemma, CouplingError> {
    let (mode_x, mode_xt) = match mode {
        CouplingMode::Basic => (CouplingMode::Basic, CouplingMode::Basic),
        CouplingMode::Clock { .. } => (CouplingMode::Clock { shift: 0 }, CouplingMode::Clock { shift: n - m }),
    };
    let step = InitialCondition::step();
    let x = evolve(&step, &EventSource::new(mode_x, randomness.clone()), t2, None, &[n], n)?;
    let xt = evolve(&step, &EventSource::new(mode_xt, randomness.clone()), t2, None, &[m], m)?;
    let at = |log: &TrajectoryLog, l: i64, s: f64| log.position(l, s).ok_or(DynamicsError::MissingLabel(l));
    let lhs = at(&x, n, t2)? - at(&x, n, t1)?;
    let rhs = at(&xt, m, t2)? - at(&xt, m, t1)?;
    let bx = backwards_index(&x, n, t2)?;
    let bxt = backwards_index(&xt, m, t1)?;
    let mut probes: Vec<f64> = bx.breakpoints(&x, 0.0, t1).into_iter().chain(bxt.breakpoints(&xt, 0.0, t1)).collect();
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let meet = probes.iter().any(|&s| bx.position_at(&x, s) == bxt.position_at(&xt, s));
    let applies = at(&xt, m, t1)? <= at(&x, n, t1)? && meet;
    Ok(IncrementLemma { applies, lhs, rhs })
}

/// Parameters of the stationary comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub gamma: f64,
    pub horizon: f64,
    pub varkappa: f64,
    pub kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonLabels {
    /// `T - ϰ T^{2/3}`
    pub t: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub n: i64,
    pub m: i64,
    pub p: i64,
}

pub fn round_label(v: f64) -> i64 {
    v.round() as i64
}

impl ComparisonSpec {
    pub fn labels(&self) -> Result<ComparisonLabels, CouplingError> {
        let bad = |m: String| Err(CouplingError::Comparison(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} outside (0, 1)", self.gamma));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa = {} must be positive", self.kappa));
        }
        let big_t = self.horizon;
        let t = big_t - self.varkappa * big_t.powf(2.0 / 3.0);
        if !(t > 0.0 && t <= big_t || self.varkappa < 0.0 && t > 0.0) {
            return bad(format!("t = {t} is not a positive time"));
        }
        let n = round_label(self.gamma * big_t);
        let rho0 = (n as f64 / t).sqrt();
        let rho_plus = rho0 + self.kappa * t.powf(-1.0 / 3.0);
        let rho_minus = rho0 - self.kappa * t.powf(-1.0 / 3.0);
        if rho_plus >= 1.0 || rho_minus <= 0.0 {
            return bad(format!("densities {rho_minus:.4}, {rho_plus:.4} leave (0, 1)"));
        }
        let t23 = t.powf(2.0 / 3.0);
        let m = round_label(rho_plus * rho_plus * t - 1.5 * self.kappa * rho_plus * t23);
        let p = round_label(rho_minus * rho_minus * t + 1.5 * self.kappa * rho_minus * t23);
        Ok(ComparisonLabels { t, rho_plus, rho_minus, n, m, p })
    }
}

/// Stationary window for tracking labels up to `max_label` at density `rho`
/// until `horizon`, padded by `buffer` sites on both sides.
pub fn stationary_window(rho: f64, horizon: f64, max_label: i64, buffer: i64) -> (i64, i64) {
    let hi = (rho * horizon).ceil() as i64 + buffer;
    let lo = -((max_label.max(1) as f64 / rho).ceil() as i64) - buffer;
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonOutcome {
    /// Increment sandwich on `[t, T]` with shifted clocks.
    pub increments_held: bool,
    /// Distance comparison at `t` with unshifted clocks.
    pub distances_held: bool,
    pub boundary_contact: bool,
}

/// One replica of both stationary comparisons.
pub fn check_increment_comparison(
    spec: &ComparisonSpec,
    randomness: &Randomness,
    buffer: i64,
) -> Result<ComparisonOutcome, CouplingError> {
    let lab = spec.labels()?;
    let big_t = spec.horizon;
    let (n, m, p) = (lab.n, lab.m, lab.p);
    let clock = |shift| EventSource::new(CouplingMode::Clock { shift }, randomness.clone());
    let top = m.max(n).max(p);
    let x = evolve(&InitialCondition::step(), &clock(0), big_t, None, &[n, m, p], top)?;
    let stationary = |rho: f64, shift: i64, tracked: &[i64]| {
        let max_label = *tracked.iter().max().unwrap();
        let window = stationary_window(rho, big_t, max_label, buffer);
        evolve(&InitialCondition::Stationary { density: rho, window }, &clock(shift), big_t, None, tracked, max_label)
    };
    let plus = stationary(lab.rho_plus, n - m, &[m])?;
    let minus = stationary(lab.rho_minus, n - p, &[p])?;
    let monotone = |a: &LabelPath, b: &LabelPath| {
        let mut last = i64::MIN;
        event_times(&[a, b], lab.t, big_t).into_iter().all(|s| {
            let d = pos(a, s) - pos(b, s);
            let ok = d >= last;
            last = d;
            ok
        })
    };
    let xn = x.path(n).expect("tracked");
    let increments_held = monotone(xn, plus.path(m).expect("tracked")) && monotone(minus.path(p).expect("tracked"), xn);

    let plus0 = stationary(lab.rho_plus, 0, &[n, m])?;
    let minus0 = stationary(lab.rho_minus, 0, &[n, p])?;
    let at = |log: &TrajectoryLog, l: i64| log.position(l, lab.t).ok_or(DynamicsError::MissingLabel(l));
    let distances_held = at(&x, n)? - at(&x, m)? >= at(&plus0, n)? - at(&plus0, m)?
        && at(&x, p)? - at(&x, n)? <= at(&minus0, p)? - at(&minus0, n)?;
    let boundary_contact =
        plus.boundary_contact || minus.boundary_contact || plus0.boundary_contact || minus0.boundary_contact;
    Ok(ComparisonOutcome { increments_held, distances_held, boundary_contact })
}
