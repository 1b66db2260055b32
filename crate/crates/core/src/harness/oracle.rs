use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdecore::{CoupledState, MonomialIndex, NoiseStream, StepMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleName {
    /// `E[I_(1,0)(t)²] = t²/2`.
    #[serde(rename = "I10_var")]
    I10Var,
    /// `E[I_(2,0)(t)²] = t³`.
    #[serde(rename = "I20_var")]
    I20Var,
    /// Variance of the Lévy area `∫W1 dW2 − ∫W2 dW1`, equal to `t²`.
    #[serde(rename = "levy_var")]
    LevyVar,
}

impl OracleName {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleName::I10Var => "I10_var",
            OracleName::I20Var => "I20_var",
            OracleName::LevyVar => "levy_var",
        }
    }

    pub fn analytic(self, t: f64) -> f64 {
        match self {
            OracleName::I10Var => 0.5 * t * t,
            OracleName::I20Var => t * t * t,
            OracleName::LevyVar => t * t,
        }
    }
}

impl FromStr for OracleName {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I10_var" => Ok(OracleName::I10Var),
            "I20_var" => Ok(OracleName::I20Var),
            "levy_var" => Ok(OracleName::LevyVar),
            other => Err(OracleError::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("unknown oracle name {0:?}")]
    UnknownName(String),
    #[error("invalid oracle parameter: {0}")]
    InvalidParameter(String),
}

/// Monte Carlo moment against its closed form; passes within three standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub name: OracleName,
    pub t: f64,
    pub dt: f64,
    pub samples: u64,
    pub analytic: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub pass: bool,
}

fn grid(t: f64, dt: f64) -> Result<(u64, f64), OracleError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(OracleError::InvalidParameter(
            "t must be finite and non-negative".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(OracleError::InvalidParameter("dt must be positive".into()));
    }
    let steps = (t / dt - 1e-9).ceil().max(0.0) as u64;
    let h = if steps == 0 { dt } else { t / steps as f64 };
    Ok((steps, h))
}

/// Mean and standard error, summed in a fixed order.
fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn moment_sample(name: OracleName, steps: u64, h: f64, seed: u64, id: u64) -> f64 {
    let mut stream = NoiseStream::new(seed, id);
    let n = if name == OracleName::I20Var { 2 } else { 1 };
    let mut s = CoupledState::origin(n).expect("valid degree");
    let mut levy = 0.0;
    for _ in 0..steps {
        let (x1, x2) = stream.increments(h);
        levy += s.w1() * x2 - s.w2() * x1;
        s.advance(StepMode::Synchronous, h, x1, x2).expect("finite increments");
    }
    let x = match name {
        OracleName::I10Var => s.integral(MonomialIndex::new(1, 0)).expect("tracked").0,
        OracleName::I20Var => s.integral(MonomialIndex::new(2, 0)).expect("tracked").0,
        OracleName::LevyVar => levy,
    };
    x * x
}

/// Estimates the named second moment from `samples` independent paths started at the origin.
pub fn oracle_moments(
    name: OracleName,
    t: f64,
    dt: f64,
    samples: u64,
    master_seed: u64,
) -> Result<MomentReport, OracleError> {
    if samples == 0 {
        return Err(OracleError::InvalidParameter("samples must be at least 1".into()));
    }
    let (steps, h) = grid(t, dt)?;
    let xs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|id| moment_sample(name, steps, h, master_seed, id))
        .collect();
    let (estimate, stderr) = mean_stderr(&xs);
    let analytic = name.analytic(t);
    Ok(MomentReport {
        name,
        t,
        dt: h,
        samples,
        analytic,
        estimate,
        stderr,
        pass: (estimate - analytic).abs() <= 3.0 * stderr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyLevel {
    pub dt: f64,
    /// Mean over paths of the squared pathwise discrepancy.
    pub mean_sq_discrepancy: f64,
    pub max_abs_discrepancy: f64,
}

/// Compares the Lévy area computed directly with `2 I_(1,0) − W1 W2` on shared paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyIdentityReport {
    pub t: f64,
    pub samples: u64,
    /// Coarsest level first; each further level halves `dt`.
    pub levels: Vec<LevyLevel>,
    /// `mean_sq_discrepancy` of each level over that of the next finer level.
    pub ratios: Vec<f64>,
    /// Variance of the direct Lévy area at the finest level, with its standard error.
    pub direct_var: f64,
    pub direct_var_stderr: f64,
}

/// Discrepancy and direct area on each level, coarsest first.
fn levy_sample(steps: u64, h: f64, halvings: u32, seed: u64, id: u64) -> Vec<(f64, f64)> {
    let mut stream = NoiseStream::new(seed, id);
    let fine = steps << halvings;
    let hf = h / (1u64 << halvings) as f64;
    let incs: Vec<(f64, f64)> = (0..fine).map(|_| stream.increments(hf)).collect();
    (0..=halvings)
        .map(|level| {
            let block = 1usize << (halvings - level);
            let dt = hf * block as f64;
            let mut s = CoupledState::origin(1).expect("valid degree");
            let mut area = 0.0;
            for chunk in incs.chunks(block) {
                let (x1, x2) = chunk.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
                area += s.w1() * x2 - s.w2() * x1;
                s.advance(StepMode::Synchronous, dt, x1, x2).expect("finite increments");
            }
            let i10 = s.integral(MonomialIndex::new(1, 0)).expect("tracked").0;
            let identity = 2.0 * i10 - s.w1() * s.w2();
            (identity - area, area)
        })
        .collect()
}

/// Runs the Lévy-area identity check at `dt` and `halvings` successively halved steps.
pub fn oracle_levy_identity(
    master_seed: u64,
    t: f64,
    dt: f64,
    samples: u64,
    halvings: u32,
) -> Result<LevyIdentityReport, OracleError> {
    if samples < 2 {
        return Err(OracleError::InvalidParameter("samples must be at least 2".into()));
    }
    if halvings > 16 {
        return Err(OracleError::InvalidParameter("at most 16 halvings".into()));
    }
    let (steps, h) = grid(t, dt)?;
    let per_path: Vec<Vec<(f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|id| levy_sample(steps, h, halvings, master_seed, id))
        .collect();
    let levels: Vec<LevyLevel> = (0..=halvings as usize)
        .map(|l| {
            let d: Vec<f64> = per_path.iter().map(|p| p[l].0).collect();
            LevyLevel {
                dt: h / (1u64 << l) as f64,
                mean_sq_discrepancy: d.iter().map(|x| x * x).sum::<f64>() / samples as f64,
                max_abs_discrepancy: d.iter().fold(0.0, |m, x| m.max(x.abs())),
            }
        })
        .collect();
    let ratios = levels
        .windows(2)
        .map(|w| w[0].mean_sq_discrepancy / w[1].mean_sq_discrepancy)
        .collect();
    let sq: Vec<f64> = per_path.iter().map(|p| p[halvings as usize].1.powi(2)).collect();
    let (direct_var, direct_var_stderr) = mean_stderr(&sq);
    Ok(LevyIdentityReport {
        t,
        samples,
        levels,
        ratios,
        direct_var,
        direct_var_stderr,
    })
}
