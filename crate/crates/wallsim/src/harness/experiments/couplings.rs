//! Pathwise coupling invariants, restart identities, the basic-coupling
//! counterexample and the stationary comparisons.

use serde::Serialize;

use super::super::config::{ComparisonConfig, CounterdemoConfig, CouplingsConfig, IdentitiesConfig};
use super::super::{decreasing, fmt_list, map_replicas, replica_randomness, Check, Experiment, HarnessError, Report, Table};
use crate::couplings::{
    check_concatenation, check_gap_and_increment_order, check_increment_comparison, check_min_formula_basic,
    check_min_formula_clock, check_order, check_step_comparison, increment_lemma, random_pair, ComparisonSpec,
    CouplingError, CouplingMode, EventSource, Violation,
};
use crate::dynamics::{evolve, InitialCondition};

const ORDER_BLOCK: u64 = 10;
const GAP_BLOCK: u64 = 11;
const STEP_BLOCK: u64 = 12;
const IDENTITY_BLOCK: u64 = 13;
const DEMO_BLOCK: u64 = 14;
const COMPARISON_BLOCK: u64 = 15;

const INVARIANTS: [&str; 4] = ["order", "gap", "increment", "step_comparison"];

fn tagged(mut v: Vec<Violation>, replica: u64) -> Vec<Violation> {
    for x in &mut v {
        x.replica_id = replica;
    }
    v
}

/// Which invariant a violation row belongs to.
fn family(check: &str) -> &'static str {
    match check {
        "order" => "order",
        "gap" | "gap_precondition" => "gap",
        "increment" => "increment",
        _ => "step_comparison",
    }
}

fn invariants(cfg: &CouplingsConfig, seed: u64) -> Result<Vec<Violation>, HarnessError> {
    let (horizon, len) = (cfg.horizon, cfg.particles);
    let per_replica: Vec<Vec<Violation>> = map_replicas(cfg.replicas, |r| {
        let mut out = Vec::new();
        let rnd = replica_randomness(seed, ORDER_BLOCK, r);
        let (x0, xt0) = random_pair(&rnd, 1, len, false);
        for mode in [CouplingMode::Clock { shift: 0 }, CouplingMode::Basic] {
            let source = EventSource::new(mode, rnd.clone());
            let x = evolve(&x0, &source, horizon, None, &[], len)?;
            let xt = evolve(&xt0, &source, horizon, None, &[], len)?;
            out.extend(check_order(&x, &xt));
        }

        let rnd = replica_randomness(seed, GAP_BLOCK, r);
        let (x0, xt0) = random_pair(&rnd, 2, len, true);
        let clock = EventSource::new(CouplingMode::Clock { shift: 0 }, rnd);
        let x = evolve(&x0, &clock, horizon, None, &[], len)?;
        let xt = evolve(&xt0, &clock, horizon, None, &[], len)?;
        out.extend(check_gap_and_increment_order(&x, &xt));

        let clock = EventSource::new(CouplingMode::Clock { shift: 0 }, replica_randomness(seed, STEP_BLOCK, r));
        let m = cfg.step_lowest_label;
        let top = len + m;
        let x = evolve(&InitialCondition::Step { rightmost: 0, lowest_label: m }, &clock, horizon, None, &[], top)?;
        let xt = evolve(&InitialCondition::Step { rightmost: 0, lowest_label: 1 }, &clock, horizon, None, &[], top)?;
        out.extend(check_step_comparison(&x, &xt, m, 1));
        Ok::<_, HarnessError>(tagged(out, r))
    })?;
    Ok(per_replica.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub replica: u64,
    pub tau: f64,
    pub check: &'static str,
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

fn identities(cfg: &IdentitiesConfig, seed: u64) -> Result<Vec<IdentityRow>, HarnessError> {
    let (t, label) = (cfg.horizon, cfg.label);
    let rows: Vec<Vec<IdentityRow>> = map_replicas(cfg.replicas, |r| {
        let rnd = replica_randomness(seed, IDENTITY_BLOCK, r);
        let basic = EventSource::new(CouplingMode::Basic, rnd.clone());
        let clock = EventSource::new(CouplingMode::Clock { shift: 0 }, rnd);
        let xb = evolve(&InitialCondition::step(), &basic, t, None, &[label], label)?;
        let xc = evolve(&InitialCondition::step(), &clock, t, None, &[label], label)?;
        let mut out = Vec::new();
        for &frac in &cfg.restart_fractions {
            let tau = frac * t;
            let results = [
                ("min_formula_sites", check_min_formula_basic(&xb, &basic, tau, t, label)?),
                ("min_formula_labels", check_min_formula_clock(&xc, &clock, tau, t, label)?),
                ("concatenation_sites", check_concatenation(&xb, &basic, tau, t, label)?),
                ("concatenation_labels", check_concatenation(&xc, &clock, tau, t, label)?),
            ];
            for (check, c) in results {
                out.push(IdentityRow { replica: r, tau, check, lhs: c.lhs, rhs: c.rhs, holds: c.holds() });
            }
        }
        Ok::<_, CouplingError>(out)
    })?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub replica: u64,
    pub mode: &'static str,
    pub applies: bool,
    pub lhs: i64,
    pub rhs: i64,
    pub violated: bool,
}

fn counterdemo(cfg: &CounterdemoConfig, seed: u64) -> Result<Vec<LemmaRow>, HarnessError> {
    let rows: Vec<Vec<LemmaRow>> = map_replicas(cfg.replicas, |r| {
        let rnd = replica_randomness(seed, DEMO_BLOCK, r);
        [("sites", CouplingMode::Basic), ("labels", CouplingMode::Clock { shift: 0 })]
            .into_iter()
            .map(|(name, mode)| {
                let out = increment_lemma(&rnd, mode, cfg.n, cfg.m, cfg.t1, cfg.t2)?;
                Ok(LemmaRow {
                    replica: r,
                    mode: name,
                    applies: out.applies,
                    lhs: out.lhs,
                    rhs: out.rhs,
                    violated: out.violated(),
                })
            })
            .collect::<Result<Vec<_>, CouplingError>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub kappa: f64,
    pub rejected: bool,
    pub m: Option<i64>,
    pub n: Option<i64>,
    pub p: Option<i64>,
    pub valid_replicas: u64,
    pub increment_failures: u64,
    pub distance_failures: u64,
    pub failure_rate: Option<f64>,
}

fn comparison(cfg: &ComparisonConfig, seed: u64) -> Result<Vec<ComparisonRow>, HarnessError> {
    let mut rows = Vec::new();
    for &kappa in &cfg.kappa_grid {
        let spec = ComparisonSpec { gamma: cfg.gamma, horizon: cfg.horizon, varkappa: cfg.varkappa, kappa };
        let Ok(labels) = spec.labels() else {
            rows.push(ComparisonRow {
                kappa,
                rejected: true,
                m: None,
                n: None,
                p: None,
                valid_replicas: 0,
                increment_failures: 0,
                distance_failures: 0,
                failure_rate: None,
            });
            continue;
        };
        let outcomes = map_replicas(cfg.replicas, |r| {
            check_increment_comparison(&spec, &replica_randomness(seed, COMPARISON_BLOCK, r), cfg.buffer)
        })?;
        let valid: Vec<_> = outcomes.iter().filter(|o| !o.boundary_contact).collect();
        let inc = valid.iter().filter(|o| !o.increments_held).count() as u64;
        let dist = valid.iter().filter(|o| !o.distances_held).count() as u64;
        let failed = valid.iter().filter(|o| !o.increments_held || !o.distances_held).count();
        rows.push(ComparisonRow {
            kappa,
            rejected: false,
            m: Some(labels.m),
            n: Some(labels.n),
            p: Some(labels.p),
            valid_replicas: valid.len() as u64,
            increment_failures: inc,
            distance_failures: dist,
            failure_rate: (!valid.is_empty()).then(|| failed as f64 / valid.len() as f64),
        });
    }
    Ok(rows)
}

pub fn run(cfg: &CouplingsConfig, seed: u64) -> Result<Report, HarnessError> {
    let mut checks = Vec::new();
    let mut tables = Vec::new();

    if cfg.replicas > 0 {
        let violations = invariants(cfg, seed)?;
        for name in INVARIANTS {
            let count = violations.iter().filter(|v| family(&v.check_name) == name).count();
            checks.push(Check::new(
                format!("{name}_violations"),
                count == 0,
                format!("{count} violations in {} trials", cfg.replicas),
            ));
        }
        tables.push(Table::csv_with_header(
            "couplings_violations.csv",
            &["replica_id", "check_name", "time", "labels", "lhs", "rhs"],
            &violations,
        )?);
    }

    if cfg.identities.replicas > 0 {
        let rows = identities(&cfg.identities, seed)?;
        for name in ["min_formula_sites", "min_formula_labels", "concatenation_sites", "concatenation_labels"] {
            let of: Vec<_> = rows.iter().filter(|r| r.check == name).collect();
            let held = of.iter().filter(|r| r.holds).count();
            checks.push(Check::new(name, held == of.len(), format!("{held}/{} exact", of.len())));
        }
        tables.push(Table::csv("couplings_identities.csv", &rows)?);
    }

    if cfg.counterdemo.replicas > 0 {
        let rows = counterdemo(&cfg.counterdemo, seed)?;
        let count = |mode: &str, f: fn(&LemmaRow) -> bool| rows.iter().filter(|r| r.mode == mode && f(r)).count();
        let (site_bad, site_applies) = (count("sites", |r| r.violated), count("sites", |r| r.applies));
        let (label_bad, label_applies) = (count("labels", |r| r.violated), count("labels", |r| r.applies));
        checks.push(Check::new(
            "increment_lemma_sites_fails",
            site_bad >= 1,
            format!("{site_bad} violations among {site_applies} applicable runs with site clocks"),
        ));
        checks.push(Check::new(
            "increment_lemma_labels_holds",
            label_bad == 0,
            format!("{label_bad} violations among {label_applies} applicable runs with shifted label clocks"),
        ));
        tables.push(Table::csv("couplings_increment_lemma.csv", &rows)?);
    }

    if cfg.comparison.replicas > 0 {
        let rows = comparison(&cfg.comparison, seed)?;
        let rates: Vec<f64> = rows.iter().filter_map(|r| r.failure_rate).collect();
        checks.push(Check::new(
            "comparison_failures_decay",
            !rates.is_empty() && decreasing(&rates, false),
            format!("failure rates {} over admissible kappa", fmt_list(&rates)),
        ));
        tables.push(Table::csv("couplings_comparison.csv", &rows)?);
    }

    Ok(Report { experiment: Experiment::Couplings, checks, tables })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let cfg = CouplingsConfig {
            replicas: 30,
            identities: IdentitiesConfig { replicas: 3, horizon: 30.0, label: 6, restart_fractions: vec![0.5] },
            counterdemo: CounterdemoConfig { replicas: 0, ..CounterdemoConfig::default() },
            comparison: ComparisonConfig { replicas: 0, ..ComparisonConfig::default() },
            ..CouplingsConfig::default()
        };
        let report = run(&cfg, 5).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
        assert_eq!(report.checks.len(), 8);
        assert!(report.tables[0].body.starts_with("replica_id,check_name"));
    }

    #[test]
    fn inadmissible_kappa_is_reported_not_run() {
        let cfg = ComparisonConfig { replicas: 1, horizon: 400.0, kappa_grid: vec![4.0], ..ComparisonConfig::default() };
        let rows = comparison(&cfg, 1).unwrap();
        assert!(rows[0].rejected);
        assert_eq!(rows[0].failure_rate, None);
    }
}
