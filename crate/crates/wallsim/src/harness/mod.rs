//! Experiments, configuration and output files.

pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::backpaths::BackpathError;
use crate::clockwork::Randomness;
use crate::couplings::CouplingError;
use crate::dynamics::DynamicsError;
use crate::scaling::ScalingError;
use config::ConfigFile;
use stats::StatsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Backpath(#[from] BackpathError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Prop31,
    Couplings,
    Backpath,
    Midtime,
    Localization,
    Slowdecorr,
    Product,
    Scaling,
    Tails,
    Simulate,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Prop31,
        Experiment::Couplings,
        Experiment::Backpath,
        Experiment::Midtime,
        Experiment::Localization,
        Experiment::Slowdecorr,
        Experiment::Product,
        Experiment::Scaling,
        Experiment::Tails,
        Experiment::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Prop31 => "prop31",
            Experiment::Couplings => "couplings",
            Experiment::Backpath => "backpath",
            Experiment::Midtime => "midtime",
            Experiment::Localization => "localization",
            Experiment::Slowdecorr => "slowdecorr",
            Experiment::Product => "product",
            Experiment::Scaling => "scaling",
            Experiment::Tails => "tails",
            Experiment::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

/// A declared pass criterion and its outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// One output file: CSV text including its header row, or JSON lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub body: String,
}

impl Table {
    pub fn csv<T: Serialize>(file_name: impl Into<String>, rows: &[T]) -> Result<Self, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io("csv buffer".into(), e.into_error()))?;
        Ok(Self { file_name: file_name.into(), body: String::from_utf8(bytes).expect("csv output is utf-8") })
    }

    /// CSV with an explicit header, for row types that may be empty.
    pub fn csv_with_header<T: Serialize>(
        file_name: impl Into<String>,
        header: &[&str],
        rows: &[T],
    ) -> Result<Self, HarnessError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io("csv buffer".into(), e.into_error()))?;
        Ok(Self { file_name: file_name.into(), body: String::from_utf8(bytes).expect("csv output is utf-8") })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Randomness for replica `r` of an independent block of replicas.
pub fn replica_randomness(seed: u64, block: u64, r: u64) -> Randomness {
    Randomness::seeded(seed, (block << 40) | r)
}

/// Run `f` for replicas `0..count`, in parallel when the feature is on.
/// Results come back in replica order either way.
pub fn map_replicas<T, E, F>(count: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

pub fn run(experiment: Experiment, cfg: &ConfigFile) -> Result<Report, HarnessError> {
    use experiments::*;
    let seed = cfg.seed;
    match experiment {
        Experiment::Prop31 => prop31::run(&cfg.prop31, seed),
        Experiment::Couplings => couplings::run(&cfg.couplings, seed),
        Experiment::Backpath => backpath::run(&cfg.backpath, seed),
        Experiment::Midtime => midtime::run(&cfg.midtime, seed),
        Experiment::Localization => localization::run(&cfg.localization, seed),
        Experiment::Slowdecorr => slowdecorr::run(&cfg.slowdecorr, seed),
        Experiment::Product => product::run(&cfg.product, seed),
        Experiment::Scaling => scaling::run(&cfg.scaling, seed),
        Experiment::Tails => tails::run(&cfg.tails, seed),
        Experiment::Simulate => simulate::run(&cfg.simulate, seed),
    }
}

/// Nonincreasing, and strictly decreasing when `strict`.
pub fn decreasing(values: &[f64], strict: bool) -> bool {
    values.windows(2).all(|w| if strict { w[1] < w[0] } else { w[1] <= w[0] })
}

pub fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn replica_order_is_kept() {
        let out: Vec<u64> = map_replicas(1000, |r| Ok::<_, ()>(r * r)).unwrap();
        assert!(out.iter().enumerate().all(|(i, &v)| v == (i * i) as u64));
    }

    #[test]
    fn monotonicity_helper() {
        assert!(decreasing(&[0.3, 0.3, 0.1], false));
        assert!(!decreasing(&[0.3, 0.3, 0.1], true));
        assert!(decreasing(&[], true));
    }

    #[test]
    fn empty_tables_keep_their_header() {
        let t = Table::csv_with_header::<(u64, f64)>("x.csv", &["a", "b"], &[]).unwrap();
        assert_eq!(t.body, "a,b\n");
    }
}
