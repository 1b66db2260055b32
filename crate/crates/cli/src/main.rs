//! Command-line front end for `polycouple`.
//!
//! Machine-readable results go to stdout; every error is a single JSON line on
//! stderr. Exit codes: 0 success, 2 config error, 3 rank condition fails
//! (`check-phc`), 4 coupling failure (`couple --strict`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polycouple::couplers::CouplingOutcome;
use polycouple::harness::{
    oracle_levy_identity, oracle_moments, run_experiment, run_replica, ExperimentConfig, OracleName,
};
use polycouple::polyfield::{check_phc, reduce_to_monomials, BivariatePolyVec, StartPoint};
use serde::{Deserialize, Serialize};

const EXIT_CONFIG: u8 = 2;
const EXIT_PHC_FAILS: u8 = 3;
const EXIT_COUPLING_FAILED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "polycouple",
    version,
    about = "Rank checks, reductions and Markovian couplings of Brownian monomial integrals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Checks the polynomial rank condition for a pair of fields at a base point.
    CheckPhc(ConfigArg),
    /// Reduces a polynomial-driven diffusion to monomial integrals and solves for their start values.
    Reduce(ConfigArg),
    /// Runs one coupling replica of an experiment config and prints its outcome.
    Couple(CoupleArgs),
    /// Runs every replica of an experiment config and writes the CSV and sidecar.
    Sweep(SweepArgs),
    /// Runs a moment oracle or the Lévy-area identity check.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// JSON input file.
    #[arg(value_name = "FILE", required_unless_present = "config")]
    file: Option<PathBuf>,
    /// JSON input file, as an alternative to the positional argument.
    #[arg(long, conflicts_with = "file")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn path(&self) -> &Path {
        self.file
            .as_deref()
            .or(self.config.as_deref())
            .expect("clap enforces one of the two")
    }
}

#[derive(Args, Debug)]
struct Overrides {
    /// Master seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Tuning constant R > 1, overriding the config file.
    #[arg(long = "R", value_name = "R")]
    r: Option<f64>,
    /// Relative step resolution, overriding the config file.
    #[arg(long)]
    dt: Option<f64>,
    /// Output path, overriding the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    #[command(flatten)]
    input: ConfigArg,
    #[command(flatten)]
    overrides: Overrides,
    /// Replica id to run; defaults to the config's first replica.
    #[arg(long)]
    replica: Option<u64>,
    /// Stream per-cycle statistics as JSON lines on stderr.
    #[arg(long)]
    trace: bool,
    /// Exit with code 4 when the coupling does not succeed.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: ConfigArg,
    #[command(flatten)]
    overrides: Overrides,
    /// Number of replicas, overriding the config file.
    #[arg(long)]
    replicas: Option<u64>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// One of I10_var, I20_var, levy_var or levy_identity.
    #[arg(value_name = "NAME")]
    name: String,
    /// Time horizon.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Step size (the coarsest one for levy_identity).
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Number of Monte Carlo paths.
    #[arg(long, default_value_t = 100_000)]
    replicas: u64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of step halvings for levy_identity.
    #[arg(long, default_value_t = 3)]
    halvings: u32,
}

/// Input of `check-phc`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhcInput {
    sigma1: BivariatePolyVec,
    sigma2: BivariatePolyVec,
    w1: f64,
    w2: f64,
    n: u32,
}

/// Input of `reduce`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReduceInput {
    sigma1: BivariatePolyVec,
    sigma2: BivariatePolyVec,
    start: StartPoint,
    start_tilde: StartPoint,
    n: u32,
}

#[derive(Serialize)]
struct CoupleSummary<'a> {
    replica_id: u64,
    seed: u64,
    #[serde(flatten)]
    outcome: &'a CouplingOutcome,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    output: &'a Path,
    replicas: usize,
    successes: usize,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.to_string(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable output"));
}

fn experiment(input: &ConfigArg, o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg: ExperimentConfig = read_json(input.path())?;
    if let Some(seed) = o.seed {
        cfg.master_seed = seed;
    }
    if o.r.is_some() || o.dt.is_some() {
        let mut cc = cfg.coupler_config();
        if let Some(r) = o.r {
            cc.r = r;
        }
        if let Some(dt) = o.dt {
            cc.dt = dt;
        }
        cfg.coupler = Some(cc);
    }
    if let Some(out) = &o.out {
        cfg.output_path = out.clone();
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::CheckPhc(arg) => {
            let p: PhcInput = read_json(arg.path())?;
            let v = check_phc(&p.sigma1, &p.sigma2, p.w1, p.w2, p.n).map_err(Failure::config)?;
            print_json(&v);
            Ok(if v.holds { 0 } else { EXIT_PHC_FAILS })
        }
        Command::Reduce(arg) => {
            let p: ReduceInput = read_json(arg.path())?;
            let red =
                reduce_to_monomials(&p.sigma1, &p.sigma2, &p.start, &p.start_tilde, p.n).map_err(Failure::config)?;
            print_json(&red);
            Ok(0)
        }
        Command::Couple(args) => {
            let cfg = experiment(&args.input, &args.overrides)?;
            let id = args.replica.unwrap_or(cfg.first_replica);
            let res = run_replica(&cfg, id).map_err(Failure::config)?;
            let Some(outcome) = res.outcome else {
                return Err(Failure::config("replica could not start"));
            };
            if args.trace {
                for c in &outcome.cycles {
                    eprintln!("{}", serde_json::to_string(c).expect("serializable cycle"));
                }
            }
            print_json(&CoupleSummary {
                replica_id: id,
                seed: cfg.master_seed,
                outcome: &outcome,
            });
            Ok(if args.strict && !outcome.success {
                EXIT_COUPLING_FAILED
            } else {
                0
            })
        }
        Command::Sweep(args) => {
            let mut cfg = experiment(&args.input, &args.overrides)?;
            if let Some(n) = args.replicas {
                cfg.replicas = n;
                cfg.validate().map_err(Failure::config)?;
            }
            let records = run_experiment(&cfg).map_err(|e| Failure {
                code: EXIT_CONFIG,
                kind: "experiment",
                message: e.to_string(),
            })?;
            print_json(&SweepSummary {
                output: &cfg.output_path,
                replicas: records.len(),
                successes: records.iter().filter(|r| r.success).count(),
            });
            Ok(0)
        }
        Command::Oracle(args) => {
            if args.name == "levy_identity" {
                let rep = oracle_levy_identity(args.seed, args.t, args.dt, args.replicas, args.halvings)
                    .map_err(Failure::config)?;
                print_json(&rep);
            } else {
                let name: OracleName = args.name.parse().map_err(Failure::config)?;
                let rep = oracle_moments(name, args.t, args.dt, args.replicas, args.seed).map_err(Failure::config)?;
                print_json(&rep);
            }
            Ok(0)
        }
    }
}

fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            report(
                "usage",
                msg.lines().next().unwrap_or_default().trim_start_matches("error: "),
            );
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            report(f.kind, &f.message);
            ExitCode::from(f.code)
        }
    }
}
