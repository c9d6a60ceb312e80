//! Experiment configuration read from TOML: one table per experiment, every
//! key optional with the defaults below.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{Experiment, HarnessError};
use crate::couplings::CouplingMode;
use crate::dynamics::{WallLevel, WallPiece, WallSpec};

/// Intercept of a wall piece: a number, or the string `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Intercept {
    Finite(f64),
    Named(String),
}

/// `f(t) = c + v t` on `[from, to)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub from: f64,
    pub to: f64,
    pub c: Intercept,
    #[serde(default)]
    pub v: f64,
}

pub fn wall_from_pieces(pieces: &[PieceConfig]) -> Result<WallSpec, HarnessError> {
    let pieces = pieces
        .iter()
        .map(|p| {
            let level = match &p.c {
                Intercept::Finite(c) => WallLevel::Affine { intercept: *c, slope: p.v },
                Intercept::Named(s) if s == "inf" => WallLevel::Infinite,
                Intercept::Named(s) => return Err(HarnessError::Config(format!("wall intercept {s:?} is not a number or \"inf\""))),
            };
            Ok(WallPiece { from: p.from, to: p.to, level })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WallSpec::new(pieces)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Basic,
    Clock,
}

impl ModeConfig {
    pub fn with_shift(self, shift: i64) -> CouplingMode {
        match self {
            ModeConfig::Basic => CouplingMode::Basic,
            ModeConfig::Clock => CouplingMode::Clock { shift },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop31Config {
    pub n: i64,
    pub horizon: f64,
    pub s_grid: Vec<i64>,
    /// Replicas per estimator.
    pub replicas: u64,
    pub wall: Vec<PieceConfig>,
}

impl Default for Prop31Config {
    fn default() -> Self {
        Self {
            n: 10,
            horizon: 20.0,
            s_grid: (-6..=4).collect(),
            replicas: 100_000,
            wall: vec![PieceConfig { from: 0.0, to: 20.0, c: Intercept::Finite(2.0), v: 1.0 / 3.0 }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingsConfig {
    /// Randomized trials per invariant.
    pub replicas: u64,
    pub horizon: f64,
    pub particles: i64,
    /// Step comparison: labels `>= lowest_label` against labels `>= 1`.
    pub step_lowest_label: i64,
    pub identities: IdentitiesConfig,
    pub counterdemo: CounterdemoConfig,
    pub comparison: ComparisonConfig,
}

impl Default for CouplingsConfig {
    fn default() -> Self {
        Self {
            replicas: 1000,
            horizon: 20.0,
            particles: 12,
            step_lowest_label: 4,
            identities: IdentitiesConfig::default(),
            counterdemo: CounterdemoConfig::default(),
            comparison: ComparisonConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub replicas: u64,
    pub horizon: f64,
    pub label: i64,
    /// Restart times as fractions of the horizon.
    pub restart_fractions: Vec<f64>,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self { replicas: 100, horizon: 100.0, label: 20, restart_fractions: vec![0.25, 0.5] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterdemoConfig {
    pub replicas: u64,
    pub n: i64,
    pub m: i64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for CounterdemoConfig {
    fn default() -> Self {
        Self { replicas: 200, n: 5, m: 15, t1: 20.0, t2: 22.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    pub replicas: u64,
    pub gamma: f64,
    pub horizon: f64,
    pub varkappa: f64,
    pub kappa_grid: Vec<f64>,
    /// Extra sites on each side of the stationary window.
    pub buffer: i64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self { replicas: 500, gamma: 0.5, horizon: 400.0, varkappa: 0.1, kappa_grid: vec![0.5, 1.0, 2.0, 4.0], buffer: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackpathConfig {
    pub replicas: u64,
    pub horizon: f64,
    pub label: i64,
    /// Second anchor `(label + anchor_offset, anchor_fraction · T)`.
    pub anchor_offset: i64,
    pub anchor_fraction: f64,
    /// Restart time of the step embedding, as a fraction of the horizon.
    pub embed_fraction: f64,
    /// Trace times checked against particle-hole duality per path.
    pub duality_samples: usize,
    pub fluctuations: FluctuationConfig,
    pub holes: HoleConfig,
}

impl Default for BackpathConfig {
    fn default() -> Self {
        Self {
            replicas: 1000,
            horizon: 100.0,
            label: 50,
            anchor_offset: 5,
            anchor_fraction: 0.75,
            embed_fraction: 0.5,
            duality_samples: 20,
            fluctuations: FluctuationConfig::default(),
            holes: HoleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluctuationConfig {
    pub replicas: u64,
    pub gamma: f64,
    pub horizon: f64,
    pub k_grid: Vec<f64>,
}

impl Default for FluctuationConfig {
    fn default() -> Self {
        Self { replicas: 1000, gamma: 0.5, horizon: 500.0, k_grid: vec![0.5, 1.0, 2.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoleConfig {
    pub replicas: u64,
    pub gamma: f64,
    /// Horizon of the mirror-consistency comparison.
    pub mirror_horizon: f64,
    pub mirror_ks_max: f64,
    /// Horizon of the control-hole check.
    pub control_horizon: f64,
    pub control_replicas: u64,
    pub control_min: f64,
}

impl Default for HoleConfig {
    fn default() -> Self {
        Self {
            replicas: 2000,
            gamma: 0.5,
            mirror_horizon: 100.0,
            mirror_ks_max: 0.05,
            control_horizon: 500.0,
            control_replicas: 1000,
            control_min: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MidtimeConfig {
    pub replicas: u64,
    pub alpha: f64,
    pub horizon: f64,
    pub k_grid: Vec<f64>,
    /// Bound on the exceedance frequency at the largest K.
    pub max_at_largest: f64,
}

impl Default for MidtimeConfig {
    fn default() -> Self {
        Self { replicas: 1000, alpha: 0.5, horizon: 500.0, k_grid: vec![0.5, 1.0, 2.0], max_at_largest: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub replicas: u64,
    pub gamma: f64,
    pub horizon: f64,
    pub k_grid: Vec<f64>,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self { replicas: 1000, gamma: 0.5, horizon: 400.0, k_grid: vec![1.0, 2.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductConfig {
    pub replicas: u64,
    pub horizon: f64,
    pub alpha: f64,
    pub windows: Vec<f64>,
    pub xi: f64,
    pub varkappa: f64,
    /// Half-width of the region where the wall defines `g`.
    pub epsilon: f64,
    /// Explicit wall; the example wall of the windows is used when empty.
    pub wall: Vec<PieceConfig>,
    pub corr_max: f64,
    pub joint_max: f64,
    pub marginal_ks_max: f64,
    /// Further ϰ values reported without a pass criterion.
    pub sensitivity: Vec<f64>,
}

impl Default for ProductConfig {
    fn default() -> Self {
        Self {
            replicas: 2000,
            horizon: 600.0,
            alpha: 0.25,
            windows: vec![0.49, 0.81],
            xi: -0.004,
            varkappa: 0.5,
            epsilon: 0.1,
            wall: Vec::new(),
            corr_max: 0.1,
            joint_max: 0.07,
            marginal_ks_max: 0.07,
            sensitivity: vec![1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub alpha: f64,
    pub alpha_i: f64,
    pub iqr_horizons: Vec<f64>,
    pub iqr_replicas: u64,
    pub slope_min: f64,
    pub slope_max: f64,
    /// Rescaled samples at this horizon are compared with twice it.
    pub pair_horizon: f64,
    pub pair_replicas: u64,
    pub ks_max: f64,
    pub median_tolerance: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            alpha_i: 0.49,
            iqr_horizons: vec![100.0, 200.0, 400.0, 800.0],
            iqr_replicas: 1000,
            slope_min: 0.23,
            slope_max: 0.43,
            pair_horizon: 300.0,
            pair_replicas: 2000,
            ks_max: 0.08,
            median_tolerance: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlowdecorrConfig {
    pub replicas: u64,
    pub alpha: f64,
    pub alpha_i: f64,
    pub nu: f64,
    pub varkappa: f64,
    /// The median sup-difference must not increase along this list.
    pub horizons: Vec<f64>,
    /// Horizon and run count of the pathwise inequality check.
    pub inequality_horizon: f64,
    pub inequality_replicas: u64,
}

impl Default for SlowdecorrConfig {
    fn default() -> Self {
        Self {
            replicas: 200,
            alpha: 0.25,
            alpha_i: 0.49,
            nu: 0.8,
            varkappa: 1.0,
            horizons: vec![200.0, 800.0],
            inequality_horizon: 400.0,
            inequality_replicas: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsConfig {
    pub replicas: u64,
    pub alpha: f64,
    pub horizon: f64,
    pub s_grid: Vec<f64>,
    /// Upper-tail exceedance bound at every `s >= far_s`.
    pub far_s: f64,
    pub far_max: f64,
    pub k1_grid: Vec<f64>,
    pub rho: f64,
    /// Baik-Rains parameter placing the stationary label.
    pub w: f64,
    pub k_grid: Vec<f64>,
    pub buffer: i64,
}

impl Default for TailsConfig {
    fn default() -> Self {
        Self {
            replicas: 1000,
            alpha: 0.5,
            horizon: 400.0,
            s_grid: vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 5.0],
            far_s: 5.0,
            far_max: 0.01,
            k1_grid: vec![1.0, 2.0, 4.0],
            rho: 0.5,
            w: 0.0,
            k_grid: vec![1.0, 2.0, 4.0],
            buffer: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    Step,
    Stationary { density: f64, lo: i64, hi: i64 },
    Explicit { positions: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub replicas: u64,
    pub horizon: f64,
    pub n_max: i64,
    pub tracked: Vec<i64>,
    pub mode: ModeConfig,
    pub shift: i64,
    pub initial: InitialConfig,
    pub wall: Vec<PieceConfig>,
    /// Also write every trajectory as JSON lines.
    pub trajectories: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            replicas: 10,
            horizon: 50.0,
            n_max: 20,
            tracked: vec![1, 10, 20],
            mode: ModeConfig::Basic,
            shift: 0,
            initial: InitialConfig::Step,
            wall: Vec::new(),
            trajectories: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    pub out: PathBuf,
    pub prop31: Prop31Config,
    pub couplings: CouplingsConfig,
    pub backpath: BackpathConfig,
    pub midtime: MidtimeConfig,
    pub localization: LocalizationConfig,
    pub slowdecorr: SlowdecorrConfig,
    pub product: ProductConfig,
    pub scaling: ScalingConfig,
    pub tails: TailsConfig,
    pub simulate: SimulateConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("wallsim-out"),
            prop31: Prop31Config::default(),
            couplings: CouplingsConfig::default(),
            backpath: BackpathConfig::default(),
            midtime: MidtimeConfig::default(),
            localization: LocalizationConfig::default(),
            slowdecorr: SlowdecorrConfig::default(),
            product: ProductConfig::default(),
            scaling: ScalingConfig::default(),
            tails: TailsConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// The section read by `experiment`, as JSON.
    pub fn section(&self, experiment: Experiment) -> serde_json::Value {
        let mut all = serde_json::to_value(self).expect("config serializes");
        all[experiment.name()].take()
    }

    /// Set every nonzero `*replicas` count in the experiment's section to
    /// `count`. Zero counts switch a part off and stay zero.
    pub fn with_replicas(&self, experiment: Experiment, count: u64) -> Result<Self, HarnessError> {
        fn visit(value: &mut serde_json::Value, count: u64) {
            match value {
                serde_json::Value::Object(map) => {
                    for (key, v) in map.iter_mut() {
                        if key.ends_with("replicas") && v.as_u64().is_some_and(|n| n > 0) {
                            *v = count.into();
                        } else {
                            visit(v, count);
                        }
                    }
                }
                serde_json::Value::Array(items) => items.iter_mut().for_each(|v| visit(v, count)),
                _ => {}
            }
        }
        let mut all = serde_json::to_value(self)?;
        visit(&mut all[experiment.name()], count);
        Ok(serde_json::from_value(all)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ConfigFile::parse("").unwrap(), ConfigFile::default());
    }

    #[test]
    fn walls_parse_with_infinite_pieces() {
        let cfg = ConfigFile::parse(
            r#"
            seed = 9
            [prop31]
            n = 1
            wall = [{ from = 0.0, to = 1.0, c = 0.5, v = 1.0 }, { from = 1.0, to = 3.0, c = "inf" }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.prop31.horizon, 20.0);
        let wall = wall_from_pieces(&cfg.prop31.wall).unwrap();
        assert_eq!(wall.value(0.5), 1.0);
        assert_eq!(wall.value(1.0), f64::INFINITY);
        let bad = [PieceConfig { from: 0.0, to: 1.0, c: Intercept::Named("big".into()), v: 0.0 }];
        assert!(wall_from_pieces(&bad).is_err());
    }

    #[test]
    fn replica_override_reaches_nested_sections() {
        let cfg = ConfigFile::parse("[couplings.counterdemo]\nreplicas = 0\n").unwrap();
        let cfg = cfg.with_replicas(Experiment::Couplings, 7).unwrap();
        assert_eq!(cfg.couplings.replicas, 7);
        assert_eq!(cfg.couplings.identities.replicas, 7);
        assert_eq!(cfg.couplings.counterdemo.replicas, 0);
        assert_eq!(cfg.backpath, BackpathConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("[midtime]\nalpah = 0.5\n").is_err());
    }

    #[test]
    fn window_lists_of_any_length() {
        let cfg = ConfigFile::parse("[product]\nalpha = 0.2\nwindows = [0.4, 0.6, 0.8]\nhorizon = 50.0\n").unwrap();
        assert_eq!(cfg.product.windows.len(), 3);
        assert_eq!(cfg.product.xi, -0.004);
    }

    #[test]
    fn initial_conditions_are_tagged() {
        let cfg = ConfigFile::parse("[simulate]\ninitial = { kind = \"stationary\", density = 0.5, lo = -40, hi = 40 }\n").unwrap();
        assert_eq!(cfg.simulate.initial, InitialConfig::Stationary { density: 0.5, lo: -40, hi: 40 });
    }
}
