use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum sample size accepted by [`estimate_tail`].
pub const MIN_SAMPLES: usize = 100;
/// Minimum number of observations inside the fit range.
pub const MIN_EXCEEDANCES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// Least squares of `ln P̂(τ ≥ t)` against `ln t` over the fit range.
    LoglogLs,
    /// Hill estimator over the top order statistics, corrected for censoring.
    Hill,
}

/// Power-law fit `P(τ > t) ≈ C t^(−γ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub gamma_hat: f64,
    pub stderr: f64,
    pub fit_range: (f64, f64),
    pub method: TailMethod,
    /// Observations inside the fit range.
    pub n_points: usize,
}

/// Which part of the sample enters the fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailOptions {
    /// Fit over observations whose empirical survival is at most this value.
    pub top_fraction: f64,
    pub min_points: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            top_fraction: 0.1,
            min_points: MIN_EXCEEDANCES,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("times and censoring flags differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("times must be finite and non-negative")]
    InvalidTime,
    #[error("degenerate sample")]
    Degenerate,
    #[error("too few exceedances in range: {found} < {required}")]
    TooFewExceedances { found: usize, required: usize },
    #[error("grid must be sorted ascending")]
    UnsortedGrid,
}

fn check_input(times: &[f64], censored: &[bool]) -> Result<(), TailError> {
    if times.len() != censored.len() {
        return Err(TailError::LengthMismatch(times.len(), censored.len()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(TailError::InvalidTime);
    }
    Ok(())
}

/// Observations sorted by time, events before censorings at tied times.
fn sorted(times: &[f64], censored: &[bool]) -> Vec<(f64, bool)> {
    let mut obs: Vec<(f64, bool)> = times.iter().copied().zip(censored.iter().copied()).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    obs
}

/// Kaplan–Meier steps: `(t, S(t−), S(t), Greenwood sum after t)` at each distinct event time.
fn kaplan_meier(obs: &[(f64, bool)]) -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::new();
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let (mut events, mut total) = (0usize, 0usize);
        while i < obs.len() && obs[i].0 == t {
            if !obs[i].1 {
                events += 1;
            }
            total += 1;
            i += 1;
        }
        if events > 0 {
            let before = s;
            s *= 1.0 - events as f64 / at_risk as f64;
            if at_risk > events {
                greenwood += events as f64 / (at_risk as f64 * (at_risk - events) as f64);
            }
            out.push((t, before, s, greenwood));
        }
        at_risk -= total;
    }
    out
}

/// Fits the survival tail with the default fit range (the top decile of the sample).
///
/// Censored entries are right-censored: they count as exceeding every time
/// below their recorded value.
pub fn estimate_tail(times: &[f64], censored: &[bool], method: TailMethod) -> Result<TailFit, TailError> {
    estimate_tail_with(times, censored, method, TailOptions::default())
}

pub fn estimate_tail_with(
    times: &[f64],
    censored: &[bool],
    method: TailMethod,
    opts: TailOptions,
) -> Result<TailFit, TailError> {
    check_input(times, censored)?;
    if times.len() < MIN_SAMPLES {
        return Err(TailError::TooFewSamples(times.len()));
    }
    let obs = sorted(times, censored);
    if obs.first().map(|o| o.0) == obs.last().map(|o| o.0) {
        return Err(TailError::Degenerate);
    }
    match method {
        TailMethod::LoglogLs => loglog(&obs, opts),
        TailMethod::Hill => hill(&obs, opts),
    }
}

fn loglog(obs: &[(f64, bool)], opts: TailOptions) -> Result<TailFit, TailError> {
    let pts: Vec<(f64, f64)> = kaplan_meier(obs)
        .into_iter()
        .filter(|&(t, before, _, _)| t > 0.0 && before <= opts.top_fraction && before > 0.0)
        .map(|(t, before, _, _)| (t.ln(), before.ln()))
        .collect();
    if pts.len() < opts.min_points.max(3) {
        return Err(TailError::TooFewExceedances {
            found: pts.len(),
            required: opts.min_points.max(3),
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(TailError::Degenerate);
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = (rss / (m - 2.0) / sxx).sqrt();
    Ok(TailFit {
        gamma_hat: -slope,
        stderr,
        fit_range: (pts[0].0.exp(), pts[pts.len() - 1].0.exp()),
        method: TailMethod::LoglogLs,
        n_points: pts.len(),
    })
}

fn hill(obs: &[(f64, bool)], opts: TailOptions) -> Result<TailFit, TailError> {
    let n = obs.len();
    let k = ((opts.top_fraction * n as f64).ceil() as usize).min(n - 1);
    if k < opts.min_points {
        return Err(TailError::TooFewExceedances {
            found: k,
            required: opts.min_points,
        });
    }
    let threshold = obs[n - k - 1].0;
    if threshold <= 0.0 {
        return Err(TailError::Degenerate);
    }
    let top = &obs[n - k..];
    let log_sum: f64 = top.iter().map(|(t, _)| (t / threshold).ln()).sum();
    let events = top.iter().filter(|(_, c)| !c).count();
    if log_sum <= 0.0 || events == 0 {
        return Err(TailError::Degenerate);
    }
    let gamma = events as f64 / log_sum;
    Ok(TailFit {
        gamma_hat: gamma,
        stderr: gamma / (events as f64).sqrt(),
        fit_range: (threshold, top[k - 1].0),
        method: TailMethod::Hill,
        n_points: k,
    })
}

/// One point of the empirical survival curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// `P̂(τ > t)`, an upper bound on the total-variation distance at `t`.
    pub survival: f64,
    pub stderr: f64,
}

/// Kaplan–Meier survival with Greenwood standard errors on a sorted grid.
///
/// Without censoring this is the empirical survival with binomial errors.
pub fn survival_curve(times: &[f64], censored: &[bool], grid: &[f64]) -> Result<Vec<SurvivalPoint>, TailError> {
    check_input(times, censored)?;
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(TailError::UnsortedGrid);
    }
    let km = kaplan_meier(&sorted(times, censored));
    let mut j = 0;
    let (mut s, mut gw) = (1.0, 0.0);
    Ok(grid
        .iter()
        .map(|&t| {
            while j < km.len() && km[j].0 <= t {
                s = km[j].2;
                gw = km[j].3;
                j += 1;
            }
            SurvivalPoint {
                t,
                survival: s,
                stderr: s * gw.sqrt(),
            }
        })
        .collect())
}
