//! Replica-parallel experiments with persistent results, tail fits and oracles.
//!
//! Each replica draws from its own noise stream keyed by `(master_seed,
//! replica_id)`, so results do not depend on scheduling and any replica can be
//! rerun alone. Rows are sorted by replica id before a single writer emits them.

mod oracle;
mod tail;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::couplers::{full_couple, heisenberg_couple, monomial_couple, CouplerConfig, CouplerError, CouplingOutcome};
use crate::polyfield::{check_phc, BivariatePolyVec, PolyError};
use crate::sdecore::{coupled_indices, CoupledState, MonomialIndex, NoiseStream, StateError};

pub use oracle::{
    oracle_levy_identity, oracle_moments, LevyIdentityReport, LevyLevel, MomentReport, OracleError, OracleName,
};
pub use tail::{
    estimate_tail, estimate_tail_with, survival_curve, SurvivalPoint, TailError, TailFit, TailMethod, TailOptions,
    MIN_EXCEEDANCES, MIN_SAMPLES,
};

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "POLYCOUPLE_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Heisenberg,
    Monomial {
        a: u32,
        b: u32,
    },
    Full {
        n: u32,
    },
    PhcCheck {
        sigma1: BivariatePolyVec,
        sigma2: BivariatePolyVec,
        w1: f64,
        w2: f64,
        n: u32,
    },
    Oracle {
        name: OracleName,
        #[serde(default = "one")]
        t: f64,
        #[serde(default = "oracle_dt")]
        dt: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn oracle_dt() -> f64 {
    1e-3
}

impl Scenario {
    /// Label written to the `scenario` column.
    pub fn label(&self) -> String {
        match self {
            Scenario::Heisenberg => "heisenberg".into(),
            Scenario::Monomial { a, b } => format!("monomial({a},{b})"),
            Scenario::Full { n } => format!("full({n})"),
            Scenario::PhcCheck { .. } => "phc_check".into(),
            Scenario::Oracle { name, .. } => format!("oracle({})", name.as_str()),
        }
    }

    /// Coupler defaults for this scenario.
    pub fn default_coupler(&self) -> CouplerConfig {
        match self {
            Scenario::Monomial { a, b } => CouplerConfig::monomial((a + b).max(2)),
            Scenario::Full { n } => CouplerConfig::full(*n),
            _ => CouplerConfig::heisenberg(),
        }
    }

    /// Index whose discrepancy is one in the normalized start.
    fn target(&self, n: u32) -> Option<MonomialIndex> {
        match self {
            Scenario::Heisenberg => Some(MonomialIndex::new(1, 0)),
            Scenario::Monomial { a, b } => Some(MonomialIndex::new(*a, *b)),
            Scenario::Full { .. } => coupled_indices(n).last().copied(),
            _ => None,
        }
    }
}

/// Starting pair of a coupling scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartSpec {
    /// Both copies at the origin with unit discrepancy in the scenario's target integral.
    #[default]
    Normalized,
    Explicit(ExplicitStart),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitStart {
    pub w1: f64,
    pub w1_tilde: f64,
    pub w2: f64,
    pub w2_tilde: f64,
    #[serde(default)]
    pub integrals: Vec<IntegralStart>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralStart {
    pub a: u32,
    pub b: u32,
    pub value: f64,
    pub tilde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Coupler parameters; the scenario's defaults when absent.
    #[serde(default)]
    pub coupler: Option<CouplerConfig>,
    pub replicas: u64,
    pub master_seed: u64,
    /// Id of the first replica, so disjoint seed ranges can be run separately.
    #[serde(default)]
    pub first_replica: u64,
    pub output_path: PathBuf,
    #[serde(default)]
    pub start: StartSpec,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, replicas: u64, master_seed: u64, output_path: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            coupler: None,
            replicas,
            master_seed,
            first_replica: 0,
            output_path: output_path.into(),
            start: StartSpec::Normalized,
        }
    }

    pub fn coupler_config(&self) -> CouplerConfig {
        self.coupler.clone().unwrap_or_else(|| self.scenario.default_coupler())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replicas < 1 {
            return bad("replicas must be at least 1".into());
        }
        if self.first_replica.checked_add(self.replicas).is_none() {
            return bad("replica id range overflows".into());
        }
        match &self.scenario {
            Scenario::PhcCheck { n, .. } if *n < 1 => bad("phc_check needs n ≥ 1".into()),
            Scenario::PhcCheck { .. } => Ok(()),
            Scenario::Oracle { t, dt, .. } => {
                if !(*t >= 0.0 && t.is_finite() && *dt > 0.0 && dt.is_finite()) {
                    return bad("oracle needs t ≥ 0 and dt > 0".into());
                }
                Ok(())
            }
            _ => {
                self.coupler_config()
                    .validate()
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                self.start_state().map(|_| ())
            }
        }
    }

    /// Builds the starting pair for a coupling scenario.
    pub fn start_state(&self) -> Result<CoupledState, HarnessError> {
        let cc = self.coupler_config();
        let n = match &self.scenario {
            Scenario::Heisenberg => 1,
            Scenario::Monomial { a, b } => {
                if *a < 1 || a + b < 2 || a + b > cc.n {
                    return Err(HarnessError::Config(format!(
                        "monomial({a},{b}) needs a ≥ 1 and 2 ≤ a + b ≤ n = {}",
                        cc.n
                    )));
                }
                cc.n
            }
            Scenario::Full { n } => {
                if *n != cc.n {
                    return Err(HarnessError::Config(format!("full({n}) with coupler n = {}", cc.n)));
                }
                *n
            }
            _ => return Err(HarnessError::Config("scenario has no coupling start".into())),
        };
        let state = match &self.start {
            StartSpec::Normalized => {
                let mut s = CoupledState::origin(n)?;
                let idx = self.scenario.target(n).expect("coupling scenario");
                s.set_integral(idx, 1.0, 0.0)?;
                s
            }
            StartSpec::Explicit(e) => {
                let mut s = CoupledState::new(n, e.w1, e.w1_tilde, e.w2, e.w2_tilde)?;
                for i in &e.integrals {
                    s.set_integral(MonomialIndex::new(i.a, i.b), i.value, i.tilde)?;
                }
                s
            }
        };
        Ok(state)
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replica_id: u64,
    pub scenario: String,
    pub success: bool,
    pub coupling_time_physical: f64,
    pub cycles: u64,
    pub active_time: f64,
    pub sup_delta_w1: f64,
    /// Master seed; together with `replica_id` it names the noise stream.
    pub seed: u64,
    /// Unsuccessful run whose time is only a lower bound on the coupling time.
    pub censored: bool,
}

/// A replica's row plus its full outcome, when the coupler returned one.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaResult {
    pub record: RunRecord,
    pub outcome: Option<CouplingOutcome>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl From<StateError> for HarnessError {
    fn from(e: StateError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

/// Runs a single replica of a coupling scenario.
pub fn run_replica(cfg: &ExperimentConfig, replica_id: u64) -> Result<ReplicaResult, HarnessError> {
    let cc = cfg.coupler_config();
    let mut state = cfg.start_state()?;
    let mut stream = NoiseStream::new(cfg.master_seed, replica_id);
    let res: Result<CouplingOutcome, CouplerError> = match &cfg.scenario {
        Scenario::Heisenberg => heisenberg_couple(&mut state, &cc, &mut stream),
        Scenario::Monomial { a, b } => monomial_couple(&mut state, MonomialIndex::new(*a, *b), &cc, &mut stream),
        Scenario::Full { .. } => full_couple(&mut state, &cc, &mut stream),
        _ => return Err(HarnessError::Config("scenario has no replicas".into())),
    };
    let label = cfg.scenario.label();
    Ok(match res {
        Ok(out) => ReplicaResult {
            record: RunRecord {
                replica_id,
                scenario: label,
                success: out.success,
                coupling_time_physical: out.coupling_time_physical,
                cycles: out.cycles.len() as u64,
                active_time: out.active_time,
                sup_delta_w1: out.sup_delta_w1,
                seed: cfg.master_seed,
                censored: !out.success,
            },
            outcome: Some(out),
        },
        // A replica that cannot start is a failed row, not an aborted sweep.
        Err(_) => ReplicaResult {
            record: RunRecord {
                replica_id,
                scenario: label,
                success: false,
                coupling_time_physical: state.phys_time,
                cycles: 0,
                active_time: 0.0,
                sup_delta_w1: 0.0,
                seed: cfg.master_seed,
                censored: false,
            },
            outcome: None,
        },
    })
}

fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))
}

/// Runs all replicas of a coupling scenario in parallel, sorted by replica id.
pub fn run_replicas(cfg: &ExperimentConfig) -> Result<Vec<ReplicaResult>, HarnessError> {
    cfg.validate()?;
    let ids = cfg.first_replica..cfg.first_replica + cfg.replicas;
    let mut out = thread_pool()?.install(|| {
        ids.into_par_iter()
            .map(|id| run_replica(cfg, id))
            .collect::<Result<Vec<_>, _>>()
    })?;
    out.sort_by_key(|r| r.record.replica_id);
    Ok(out)
}

/// Metadata written next to every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config_hash: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub scenario: String,
    pub replicas: u64,
    pub successes: u64,
}

/// Path of the metadata sidecar for an output file.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Runs an experiment and writes its output plus sidecar.
///
/// Coupling scenarios write one CSV row per replica and return the rows.
/// `phc_check` and `oracle` write a single JSON report and return no rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let (records, successes) = match &cfg.scenario {
        Scenario::PhcCheck {
            sigma1,
            sigma2,
            w1,
            w2,
            n,
        } => {
            let verdict = check_phc(sigma1, sigma2, *w1, *w2, *n)?;
            write_json(&cfg.output_path, &verdict)?;
            (Vec::new(), u64::from(verdict.holds))
        }
        Scenario::Oracle { name, t, dt } => {
            let report = thread_pool()?.install(|| oracle_moments(*name, *t, *dt, cfg.replicas, cfg.master_seed))?;
            write_json(&cfg.output_path, &report)?;
            (Vec::new(), u64::from(report.pass))
        }
        _ => {
            let records: Vec<RunRecord> = run_replicas(cfg)?.into_iter().map(|r| r.record).collect();
            write_records(&cfg.output_path, &records)?;
            let ok = records.iter().filter(|r| r.success).count() as u64;
            (records, ok)
        }
    };
    let meta = Sidecar {
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        scenario: cfg.scenario.label(),
        replicas: cfg.replicas,
        successes,
    };
    write_json(&sidecar_path(&cfg.output_path), &meta)?;
    Ok(records)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<RunRecord>, _>>()?)
}

/// Coupling times and censoring flags of a record set, for the tail tools.
pub fn times_and_censoring(records: &[RunRecord]) -> (Vec<f64>, Vec<bool>) {
    records.iter().map(|r| (r.coupling_time_physical, r.censored)).unzip()
}
