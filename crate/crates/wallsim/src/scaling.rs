//! KPZ scaling arithmetic around the times `α_i T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::couplings::round_label;
use crate::dynamics::{DynamicsError, TrajectoryLog, WallLevel, WallPiece, WallSpec};

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("time {t} is outside the simulated range [{start}, {horizon}]")]
    OutsideHorizon { t: f64, start: f64, horizon: f64 },
}

fn domain<T>(msg: String) -> Result<T, ScalingError> {
    Err(ScalingError::Domain(msg))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCoefficients {
    pub alpha: f64,
    pub alpha_i: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn coefficients(alpha: f64, alpha_i: f64) -> Result<ScalingCoefficients, ScalingError> {
    if !(alpha > 0.0 && alpha < alpha_i && alpha_i < 1.0) {
        return domain(format!("need 0 < alpha < alpha_i < 1, got alpha = {alpha}, alpha_i = {alpha_i}"));
    }
    let gap = alpha_i.sqrt() - alpha.sqrt();
    Ok(ScalingCoefficients {
        alpha,
        alpha_i,
        c1: gap.powf(2.0 / 3.0) * alpha_i.powf(1.0 / 6.0) / alpha.powf(1.0 / 6.0),
        c2: 2.0 * gap.powf(1.0 / 3.0) * alpha_i.powf(5.0 / 6.0) / alpha.powf(1.0 / 3.0),
    })
}

impl ScalingCoefficients {
    /// Centering `μ̃(τ, T)`.
    pub fn mu(&self, tau: f64, horizon: f64) -> f64 {
        let (a, ai) = (self.alpha, self.alpha_i);
        let gap = ai.sqrt() - a.sqrt();
        ai.sqrt() * (ai.sqrt() - 2.0 * a.sqrt()) * horizon
            - 2.0 * tau * gap.powf(4.0 / 3.0) * ai.powf(1.0 / 3.0) / a.powf(1.0 / 3.0) * horizon.powf(2.0 / 3.0)
    }

    /// `t = α_i T - c̃₂ τ T^{2/3}`
    pub fn time_of(&self, tau: f64, horizon: f64) -> f64 {
        self.alpha_i * horizon - self.c2 * tau * horizon.powf(2.0 / 3.0)
    }

    pub fn tau_of(&self, t: f64, horizon: f64) -> f64 {
        (self.alpha_i * horizon - t) / (self.c2 * horizon.powf(2.0 / 3.0))
    }
}

/// Macroscopic wall profile below which the wall is irrelevant.
pub fn f0(beta: f64, xi: f64, alpha: f64) -> Result<f64, ScalingError> {
    if !(0.0..=1.0).contains(&beta) {
        return domain(format!("beta = {beta} outside [0, 1]"));
    }
    Ok(if beta < 1.0 - alpha {
        let r = (1.0 - beta).sqrt();
        xi - r * (r - 2.0 * alpha.sqrt())
    } else {
        xi + alpha
    })
}

/// `(1 - 2√(αT/t)) t`, the macroscopic position of particle `αT` at time `t`.
pub fn lln(alpha: f64, t: f64, horizon: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (1.0 - 2.0 * (alpha * horizon / t).sqrt()) * t
}

/// Intercept and slope `(c_i, v_i)` of the affine wall piece serving window `α_i`.
pub fn example_piece(alpha: f64, alpha_i: f64, xi: f64) -> (f64, f64) {
    let c = xi - (1.0 - (alpha / alpha_i).sqrt() - (alpha * alpha_i).sqrt());
    let v = 1.0 - (alpha / alpha_i).sqrt();
    (c, v)
}

/// Affine pieces for windows `α_0 < α_1 < ...`, one per window, with seams
/// at `(2 - α_i - α_{i+1})T/2`. Pieces are listed in increasing wall time, so
/// the last window comes first.
pub fn example_pieces(alpha: f64, windows: &[f64], xi: f64, horizon: f64) -> Result<Vec<WallPiece>, ScalingError> {
    if windows.is_empty() {
        return domain("no windows given".into());
    }
    let ordered = alpha > 0.0 && alpha < windows[0] && windows.windows(2).all(|w| w[0] < w[1]) && windows[windows.len() - 1] < 1.0;
    if !ordered {
        return domain(format!("need 0 < alpha < alpha_0 < ... < 1, got alpha = {alpha}, windows {windows:?}"));
    }
    if !(xi > -alpha && xi < 1.0 - 2.0 * alpha.sqrt()) {
        return domain(format!("xi = {xi} outside ({}, {})", -alpha, 1.0 - 2.0 * alpha.sqrt()));
    }
    let mut pieces = Vec::with_capacity(windows.len());
    let mut from = 0.0;
    for i in (0..windows.len()).rev() {
        let (c, v) = example_piece(alpha, windows[i], xi);
        if c < 0.0 {
            return domain(format!("c_{i} = {c:.6} is negative; raise xi"));
        }
        let to = if i == 0 { horizon } else { (2.0 - windows[i - 1] - windows[i]) / 2.0 * horizon };
        pieces.push(WallPiece { from, to, level: WallLevel::Affine { intercept: c * horizon, slope: v } });
        from = to;
    }
    Ok(pieces)
}

/// Example walls for any number of windows.
pub fn example_wall(alpha: f64, windows: &[f64], xi: f64, horizon: f64) -> Result<WallSpec, ScalingError> {
    Ok(WallSpec::new(example_pieces(alpha, windows, xi, horizon)?)?)
}

/// Two affine pieces meeting with an upward jump at `(2 - α₀ - α₁)T/2`.
pub fn example1_wall(alpha: f64, alpha0: f64, alpha1: f64, xi: f64, horizon: f64) -> Result<WallSpec, ScalingError> {
    example_wall(alpha, &[alpha0, alpha1], xi, horizon)
}

/// The first example with the wall removed from `(1 - α₀)T` on. The switch to
/// `+∞` is taken right-continuously, so `f((1 - α₀)T) = +∞`.
pub fn example2_wall(alpha: f64, alpha0: f64, alpha1: f64, xi: f64, horizon: f64) -> Result<WallSpec, ScalingError> {
    let mut pieces = example_pieces(alpha, &[alpha0, alpha1], xi, horizon)?;
    let cut = (1.0 - alpha0) * horizon;
    pieces[1].to = cut;
    pieces.push(WallPiece { from: cut, to: horizon, level: WallLevel::Infinite });
    Ok(WallSpec::new(pieces)?)
}

/// Build an affine wall piece from a target `g`: the inverse of [`g_from_wall`]
/// at a single τ.
pub fn wall_value_for(coeffs: &ScalingCoefficients, xi: f64, tau: f64, g: f64, horizon: f64) -> f64 {
    xi * horizon - coeffs.mu(tau, horizon) - coeffs.c1 * (tau * tau - g) * horizon.cbrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GSample {
    pub tau: f64,
    pub g: f64,
    /// τ lies outside `|τ| <= ε T^{1/3} / c̃₂`, where the wall only formally
    /// defines `g`.
    pub extrapolated: bool,
}

/// `g_T^i(τ) = τ² + (f(T - t) - ξT + μ̃(τ, T)) / (c̃₁ T^{1/3})` along
/// `T - t = (1 - α_i)T + c̃₂ τ T^{2/3}`. Infinite wall values give `+∞`.
pub fn g_from_wall(
    wall: &WallSpec,
    coeffs: &ScalingCoefficients,
    xi: f64,
    epsilon: f64,
    taus: &[f64],
    horizon: f64,
) -> Vec<GSample> {
    let reach = epsilon * horizon.cbrt() / coeffs.c2;
    taus.iter()
        .map(|&tau| {
            let u = horizon - coeffs.time_of(tau, horizon);
            let f = wall.value(u);
            let g = if f.is_infinite() {
                f64::INFINITY
            } else {
                tau * tau + (f - xi * horizon + coeffs.mu(tau, horizon)) / (coeffs.c1 * horizon.cbrt())
            };
            GSample { tau, g, extrapolated: tau.abs() > reach || !(0.0..=horizon).contains(&u) }
        })
        .collect()
}

/// Scaling of particle `round(αT)` around `α_i T`. Coefficients use the
/// rounded label's ratio to `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub index: usize,
    pub label: i64,
    pub horizon: f64,
    pub coeffs: ScalingCoefficients,
}

impl Window {
    pub fn new(index: usize, alpha: f64, alpha_i: f64, horizon: f64) -> Result<Self, ScalingError> {
        let label = round_label(alpha * horizon);
        if label < 1 {
            return domain(format!("alpha T = {} rounds below label 1", alpha * horizon));
        }
        let coeffs = coefficients(label as f64 / horizon, alpha_i)?;
        Ok(Self { index, label, horizon, coeffs })
    }

    /// Time range covered by `|τ| <= ϰ`.
    pub fn time_range(&self, varkappa: f64) -> (f64, f64) {
        let a = self.coeffs.time_of(varkappa, self.horizon);
        let b = self.coeffs.time_of(-varkappa, self.horizon);
        (a.min(b), a.max(b))
    }

    pub fn rescale_position(&self, x: i64, tau: f64) -> f64 {
        (x as f64 - self.coeffs.mu(tau, self.horizon)) / (-self.coeffs.c1 * self.horizon.cbrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RescaledSample {
    pub window: usize,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
}

/// `X̃_T^i(τ)` on a grid of τ values.
pub fn rescale(log: &TrajectoryLog, window: &Window, taus: &[f64]) -> Result<RescaledSample, ScalingError> {
    let path = log.path(window.label).ok_or(DynamicsError::MissingLabel(window.label))?;
    let values = taus
        .iter()
        .map(|&tau| {
            let t = window.coeffs.time_of(tau, window.horizon);
            if !(t >= log.start_time && t <= log.horizon) {
                return Err(ScalingError::OutsideHorizon { t, start: log.start_time, horizon: log.horizon });
            }
            let x = path.position(t).ok_or(DynamicsError::MissingLabel(window.label))?;
            Ok(window.rescale_position(x, tau))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RescaledSample { window: window.index, taus: taus.to_vec(), values })
}

/// Uniform grid on `[-ϰ, ϰ]` with spacing at most `step`.
pub fn tau_grid(varkappa: f64, step: f64) -> Vec<f64> {
    if varkappa <= 0.0 {
        return vec![0.0];
    }
    let n = (2.0 * varkappa / step).ceil() as usize;
    (0..=n).map(|k| -varkappa + 2.0 * varkappa * k as f64 / n as f64).collect()
}

/// `sup_{|τ| <= ϰ} (X̃(τ) + τ² - g(τ))`, evaluated exactly. Times outside
/// `[0, T]` are dropped since the wall is not defined there.
///
/// The centering cancels and the functional equals
/// `sup_t (ξT - x(t) - f(T - t)) / (c̃₁ T^{1/3})` over the time window. Both
/// terms are monotone between jumps of `x`, so each constancy interval
/// `[a, b)` contributes the wall's right limit at `T - b`.
pub fn window_sup(
    log: &TrajectoryLog,
    window: &Window,
    wall: &WallSpec,
    xi: f64,
    varkappa: f64,
) -> Result<f64, ScalingError> {
    let (lo, hi) = window.time_range(varkappa.max(0.0));
    let (lo, hi) = (lo.max(0.0), hi.min(window.horizon));
    if !(lo >= log.start_time && hi <= log.horizon) {
        return Err(ScalingError::OutsideHorizon { t: if lo < log.start_time { lo } else { hi }, start: log.start_time, horizon: log.horizon });
    }
    let path = log.path(window.label).ok_or(DynamicsError::MissingLabel(window.label))?;
    let big_t = window.horizon;
    let norm = window.coeffs.c1 * big_t.cbrt();
    let mut best = f64::NEG_INFINITY;
    let mut x = path.position(lo).ok_or(DynamicsError::MissingLabel(window.label))?;
    let mut consider = |x: i64, right_end: f64| {
        let v = (xi * big_t - x as f64 - wall.value(big_t - right_end)) / norm;
        best = best.max(v);
    };
    for &s in path.jumps.iter().filter(|&&s| s > lo && s <= hi) {
        consider(x, s);
        x += 1;
    }
    consider(x, hi);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from a 30-digit evaluation of the defining formulas.
    const C1_025_064: f64 = 0.524148278841779321;
    const C2_025_064: f64 = 1.465234230468264791;

    #[test]
    fn coefficients_match_oracle() {
        let c = coefficients(0.25, 0.64).unwrap();
        assert!((c.c1 - C1_025_064).abs() < 1e-12);
        assert!((c.c2 - C2_025_064).abs() < 1e-12);
        assert!((c.mu(0.0, 1.0) - (-0.16)).abs() < 1e-12);
        assert!(coefficients(0.25, 0.25).is_err());
        assert!(coefficients(0.5, 0.3).is_err());
    }

    #[test]
    fn time_map_round_trips() {
        let c = coefficients(0.25, 0.49).unwrap();
        for tau in [-2.0, -0.3, 0.0, 1.7] {
            let t = c.time_of(tau, 600.0);
            assert!((c.tau_of(t, 600.0) - tau).abs() < 1e-12);
        }
    }

    #[test]
    fn f0_branches() {
        let (xi, a): (f64, f64) = (-0.1, 0.25);
        let seam = 1.0 - a;
        let left = xi - (1.0 - (seam - 1e-12)).sqrt() * ((1.0 - (seam - 1e-12)).sqrt() - 2.0 * a.sqrt());
        assert!((left - (xi + a)).abs() < 1e-6);
        assert_eq!(f0(seam, xi, a).unwrap(), xi + a);
        assert!((f0(0.0, xi, a).unwrap() - (xi - (1.0 - 2.0 * a.sqrt()))).abs() < 1e-15);
        assert_eq!(f0(1.0, xi, a).unwrap(), xi + a);
        assert!(f0(1.5, xi, a).is_err());
    }

    #[test]
    fn example_walls() {
        let (_, v0) = example_piece(0.25, 0.64, 0.0);
        assert!((v0 - 0.375).abs() < 1e-15);
        let big_t = 1000.0;
        let w1 = example1_wall(0.25, 0.49, 0.81, -0.004, big_t).unwrap();
        let seam = (2.0 - 0.49 - 0.81) / 2.0 * big_t;
        assert!(w1.left_limit(seam) < w1.value(seam));
        let w2 = example2_wall(0.25, 0.49, 0.81, -0.004, big_t).unwrap();
        for k in 0..=100 {
            let u = k as f64 * 0.51 * big_t / 100.0;
            if u < 0.51 * big_t {
                assert_eq!(w1.value(u), w2.value(u));
            }
        }
        assert!(w2.value(0.51 * big_t).is_infinite());
        assert!(w2.value(0.9 * big_t).is_infinite());
        assert!(example1_wall(0.25, 0.49, 0.81, -0.05, big_t).is_err());
        assert!(example1_wall(0.25, 0.81, 0.49, -0.004, big_t).is_err());
    }

    #[test]
    fn example1_gives_parabola() {
        let big_t = 1e6;
        let xi = -0.004;
        let wall = example1_wall(0.25, 0.49, 0.81, xi, big_t).unwrap();
        let taus: Vec<f64> = (0..=400).map(|k| -2.0 + k as f64 * 0.01).collect();
        for alpha_i in [0.49, 0.81] {
            let c = coefficients(0.25, alpha_i).unwrap();
            for s in g_from_wall(&wall, &c, xi, 0.05, &taus, big_t) {
                assert!((s.g - s.tau * s.tau).abs() <= 0.05, "{alpha_i} {s:?}");
                assert!(!s.extrapolated);
            }
        }
    }

    #[test]
    fn lower_bound_holds_on_window() {
        let xi = -0.004;
        let epsilon = 0.05;
        for big_t in [1e3, 1e4, 1e5] {
            let wall = example1_wall(0.25, 0.49, 0.81, xi, big_t).unwrap();
            for alpha_i in [0.49, 0.81] {
                let c = coefficients(0.25, alpha_i).unwrap();
                let reach = epsilon * big_t.cbrt() / c.c2;
                let taus: Vec<f64> = (0..=1000).map(|k| -reach + 2.0 * reach * k as f64 / 1000.0).collect();
                let worst = g_from_wall(&wall, &c, xi, epsilon, &taus, big_t)
                    .iter()
                    .map(|s| 0.5 * s.tau * s.tau - s.g)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(worst <= 1e-6, "T = {big_t}, alpha_i = {alpha_i}: {worst}");
            }
        }
    }

    #[test]
    fn example1_clears_f0_away_from_windows() {
        let (alpha, a0, a1, xi, eps) = (0.25, 0.49, 0.81, -0.004, 0.05);
        let big_t = 1000.0;
        let wall = example1_wall(alpha, a0, a1, xi, big_t).unwrap();
        let mut worst = f64::INFINITY;
        for k in 0..=1000 {
            let t = k as f64 * big_t / 1000.0;
            if (t - a0 * big_t).abs() <= eps * big_t || (t - a1 * big_t).abs() <= eps * big_t {
                continue;
            }
            let u = big_t - t;
            worst = worst.min((wall.value(u) - big_t * f0(u / big_t, xi, alpha).unwrap()) / big_t);
        }
        assert!(worst > 0.0, "{worst}");
    }

    #[test]
    fn infinite_wall_gives_infinite_g() {
        let wall = WallSpec::new(vec![WallPiece { from: 0.0, to: 10.0, level: WallLevel::Infinite }]).unwrap();
        let c = coefficients(0.25, 0.5).unwrap();
        assert!(g_from_wall(&wall, &c, 0.0, 0.1, &[0.0], 10.0)[0].g.is_infinite());
    }

    #[test]
    fn g_inverts_wall_values() {
        let c = coefficients(0.3, 0.6).unwrap();
        let big_t = 5000.0;
        for (tau, g) in [(-1.0, 0.3), (0.0, -2.0), (0.8, 5.0)] {
            let f = wall_value_for(&c, 0.01, tau, g, big_t);
            let u = big_t - c.time_of(tau, big_t);
            let wall = WallSpec::new(vec![
                WallPiece { from: 0.0, to: u, level: WallLevel::Affine { intercept: 0.0, slope: 0.0 } },
                WallPiece { from: u, to: big_t, level: WallLevel::Affine { intercept: f, slope: 0.0 } },
            ])
            .unwrap();
            let back = g_from_wall(&wall, &c, 0.01, 1.0, &[tau], big_t)[0].g;
            assert!((back - g).abs() < 1e-9);
        }
    }

    #[test]
    fn lln_curve() {
        assert_eq!(lln(0.25, 100.0, 100.0), 0.0);
        assert!((lln(0.25, 400.0, 100.0) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn rescale_plugs_in() {
        use crate::clockwork::Randomness;
        use crate::couplings::{CouplingMode, EventSource};
        use crate::dynamics::{evolve, InitialCondition};
        let source = EventSource::new(CouplingMode::Basic, Randomness::seeded(3, 0));
        let big_t = 200.0;
        let w = Window::new(0, 0.25, 0.49, big_t).unwrap();
        let log = evolve(&InitialCondition::step(), &source, big_t, None, &[w.label], w.label).unwrap();
        let s = rescale(&log, &w, &[0.0]).unwrap();
        let x = log.position(w.label, 0.49 * big_t).unwrap();
        let expect = (x as f64 - w.coeffs.mu(0.0, big_t)) / (-w.coeffs.c1 * big_t.cbrt());
        assert!((s.values[0] - expect).abs() < 1e-12);
        assert!(rescale(&log, &w, &[-200.0]).is_err());
    }

    #[test]
    fn window_sup_matches_grid() {
        use crate::clockwork::Randomness;
        use crate::couplings::{CouplingMode, EventSource};
        use crate::dynamics::{evolve, InitialCondition};
        let big_t = 300.0;
        let xi = -0.004;
        let wall = example1_wall(0.25, 0.49, 0.81, xi, big_t).unwrap();
        for r in 0..10 {
            let source = EventSource::new(CouplingMode::Basic, Randomness::seeded(4, r));
            let w = Window::new(0, 0.25, 0.49, big_t).unwrap();
            let log = evolve(&InitialCondition::step(), &source, big_t, None, &[], w.label).unwrap();
            let exact = window_sup(&log, &w, &wall, xi, 1.0).unwrap();
            let taus = tau_grid(1.0, 1e-4);
            let s = rescale(&log, &w, &taus).unwrap();
            let g = g_from_wall(&wall, &w.coeffs, xi, 1.0, &taus, big_t);
            let brute =
                s.values.iter().zip(&g).map(|(v, g)| v + g.tau * g.tau - g.g).fold(f64::NEG_INFINITY, f64::max);
            assert!(exact >= brute - 1e-9 && exact <= brute + 1e-3, "{exact} vs {brute}");
            let single = window_sup(&log, &w, &wall, xi, 0.0).unwrap();
            let at0 = s.values[taus.len() / 2] - g[taus.len() / 2].g;
            assert!((single - at0).abs() < 1e-9);
        }
    }
}
