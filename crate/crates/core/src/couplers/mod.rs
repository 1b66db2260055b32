//! Phase-structured Markovian couplers.
//!
//! Every coupler alternates synchronous and reflection controls on `W1`
//! (with `W2` always synchronous after the pre-stage) and ends each phase on an
//! exact stopping event. Cycles run in coordinates where the discrepancy being
//! removed has size one; the cumulative scale is kept in the state so physical
//! time and reference-frame discrepancies can be recovered.

mod bm;
mod full;
mod heisenberg;
mod monomial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdecore::{
    run_until, CoupledState, MonomialIndex, NoiseStream, PhaseReport, StepFault, StepMode, StepSize, StopRule,
};

pub use bm::{reflect_couple_bm, PreStage};
pub use full::full_couple;
pub use heisenberg::{heisenberg_couple, heisenberg_cycle};
pub use monomial::{monomial_couple, monomial_cycle};

/// Largest `n` accepted by the couplers.
pub const MAX_COUPLED_DEGREE: u32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerConfig {
    /// Tuning constant `R > 1`.
    #[serde(rename = "R")]
    pub r: f64,
    /// Declare-coupled threshold on the discrepancy in the entry frame.
    #[serde(default = "default_tol")]
    pub tol_couple: f64,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: u32,
    /// Squared relative resolution of each step; see [`StepSize`].
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Phase cap in units of the phase's squared length scale.
    #[serde(default = "default_t_cap_factor")]
    pub t_cap_factor: f64,
    pub n: u32,
    /// Rescale between cycles. Only the Heisenberg coupler accepts `false`.
    #[serde(default = "default_true")]
    pub rescale: bool,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_cycles() -> u32 {
    200
}
fn default_dt() -> f64 {
    1e-4
}
fn default_t_cap_factor() -> f64 {
    1e12
}
fn default_true() -> bool {
    true
}

impl CouplerConfig {
    pub fn heisenberg() -> Self {
        Self {
            r: 4.0,
            tol_couple: default_tol(),
            max_cycles: default_max_cycles(),
            dt: default_dt(),
            t_cap_factor: default_t_cap_factor(),
            n: 1,
            rescale: true,
        }
    }

    pub fn monomial(n: u32) -> Self {
        Self {
            r: 8.0,
            n,
            ..Self::heisenberg()
        }
    }

    pub fn full(n: u32) -> Self {
        Self::monomial(n)
    }

    pub fn validate(&self) -> Result<(), CouplerError> {
        let bad = |m: &str| Err(CouplerError::Config(m.to_string()));
        if !(self.r > 1.0 && self.r.is_finite()) {
            return bad("R must be finite and > 1");
        }
        if !(self.tol_couple > 0.0 && self.tol_couple.is_finite()) {
            return bad("tol_couple must be positive");
        }
        if self.max_cycles < 1 {
            return bad("max_cycles must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return bad("dt must lie in (0, 1)");
        }
        if !(self.t_cap_factor > 0.0) {
            return bad("t_cap_factor must be positive");
        }
        if self.n < 1 || self.n > MAX_COUPLED_DEGREE {
            return bad("n must lie in 1..=4");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone)]
pub enum CouplerError {
    #[error("invalid coupler config: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("phase {phase} exceeded its time cap")]
    PhaseCap { phase: &'static str },
    #[error("max_cycles reached at level {level}")]
    MaxCycles { level: MonomialIndex },
    #[error(transparent)]
    Fault(#[from] StepFault),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDuration {
    pub phase: String,
    pub sim: f64,
    pub phys: f64,
    /// Signed `ΔI` of the cycle's target at the phase end, in cycle units.
    pub delta_i_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub level: MonomialIndex,
    pub cycle_index: u32,
    pub phase_durations: Vec<PhaseDuration>,
    pub delta_in: f64,
    pub delta_out: f64,
    /// Factor applied after the cycle; 1 when the cycle ended the coupling.
    pub scale_applied: f64,
    /// `ln` of the cumulative scale at the cycle end, before rescaling.
    pub log_frame: f64,
}

impl CycleStats {
    pub fn phase(&self, name: &str) -> Option<&PhaseDuration> {
        self.phase_durations.iter().find(|p| p.phase == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub level: MonomialIndex,
    pub reason: String,
}

/// Snapshot taken on entry to the monomial stage of the inductive coupler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigma3Entry {
    pub level: MonomialIndex,
    pub max_abs_lower_delta: f64,
    pub delta_w1: f64,
}

impl Sigma3Entry {
    pub fn holds(&self) -> bool {
        self.max_abs_lower_delta == 0.0 && self.delta_w1 == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub success: bool,
    /// Elapsed physical time; a lower bound on the coupling time when unsuccessful.
    pub coupling_time_physical: f64,
    pub cycles: Vec<CycleStats>,
    /// Physical time spent with `W1 ≠ W̃1`.
    pub active_time: f64,
    /// Supremum of `|ΔW1|` in the coupler's entry frame.
    pub sup_delta_w1: f64,
    pub tol: f64,
    pub failure: Option<Failure>,
    pub sigma3_entries: Vec<Sigma3Entry>,
}

/// Mutable bookkeeping shared by nested couplers.
pub(crate) struct Run<'a> {
    pub cfg: &'a CouplerConfig,
    pub stream: &'a mut NoiseStream,
    pub cycles: Vec<CycleStats>,
    pub active_time: f64,
    pub sup_delta_w1: f64,
    /// Frame and length unit that define the outcome's reference frame.
    pub ref_log_frame: f64,
    pub ref_unit: f64,
    pub sigma3: Vec<Sigma3Entry>,
    /// Innermost level currently being coupled.
    pub level: MonomialIndex,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a CouplerConfig, stream: &'a mut NoiseStream, state: &CoupledState) -> Self {
        Self {
            cfg,
            stream,
            cycles: Vec::new(),
            active_time: 0.0,
            sup_delta_w1: 0.0,
            ref_log_frame: state.log_frame(),
            ref_unit: 1.0,
            sigma3: Vec::new(),
            level: MonomialIndex::new(1, 0),
        }
    }

    /// Runs one phase with step sizes relative to the distance to its event.
    pub fn phase(
        &mut self,
        state: &mut CoupledState,
        mode: StepMode,
        rule: &dyn StopRule,
        name: &'static str,
    ) -> Result<PhaseReport, CouplerError> {
        let floor = rule.reach(state).max(f64::MIN_POSITIVE);
        let t_cap = state.t + self.cfg.t_cap_factor * floor * floor;
        let rep = run_until(
            state,
            mode,
            rule,
            StepSize::relative(self.cfg.dt, floor),
            self.stream,
            t_cap,
        )?;
        if !rep.hit {
            return Err(CouplerError::PhaseCap { phase: name });
        }
        Ok(rep)
    }

    /// Records a phase during which `W1 ≠ W̃1`.
    pub fn active(&mut self, state: &CoupledState, rep: &PhaseReport) {
        self.active_time += rep.phys_duration;
        let to_ref = (self.ref_log_frame - state.log_frame()).exp() / self.ref_unit;
        self.sup_delta_w1 = self.sup_delta_w1.max(rep.sup_abs_delta_w1 * to_ref);
    }

    pub fn finish(
        self,
        state: &CoupledState,
        phys0: f64,
        result: Result<(), CouplerError>,
    ) -> Result<CouplingOutcome, CouplerError> {
        let failure = match result {
            Ok(()) => None,
            Err(CouplerError::MaxCycles { level }) => Some(Failure {
                level,
                reason: "max_cycles".into(),
            }),
            Err(CouplerError::PhaseCap { phase }) => Some(Failure {
                level: self.level,
                reason: format!("phase_cap:{phase}"),
            }),
            Err(CouplerError::Fault(f)) => Some(Failure {
                level: self.level,
                reason: format!("fault:{f}"),
            }),
            Err(e) => return Err(e),
        };
        Ok(CouplingOutcome {
            success: failure.is_none(),
            coupling_time_physical: state.phys_time - phys0,
            cycles: self.cycles,
            active_time: self.active_time,
            sup_delta_w1: self.sup_delta_w1,
            tol: self.cfg.tol_couple,
            failure,
            sigma3_entries: self.sigma3,
        })
    }
}

pub(crate) fn duration(name: &str, rep: &PhaseReport, delta_i_end: f64) -> PhaseDuration {
    PhaseDuration {
        phase: name.to_string(),
        sim: rep.sim_duration,
        phys: rep.phys_duration,
        delta_i_end,
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Loops single-index cycles with rescaling until the entry-frame `|ΔI|` is at most `tol`.
///
/// On success `ΔW1` and the target `ΔI` are set exactly to zero.
pub(crate) fn couple_single(
    run: &mut Run<'_>,
    state: &mut CoupledState,
    idx: MonomialIndex,
) -> Result<(), CouplerError> {
    let deg = idx.scaling_degree() as i32;
    let pos = state
        .position(idx)
        .ok_or_else(|| CouplerError::Precondition(format!("index {idx} not tracked")))?;
    run.level = idx;
    let d = state.delta_i_at(pos);
    if d == 0.0 {
        return Ok(());
    }
    let heis = idx == MonomialIndex::new(1, 0);
    if run.cfg.rescale {
        state.scale(d.abs().powf(-1.0 / f64::from(deg)))?;
        if !heis {
            state.clamp_to_line(run.cfg.r);
        }
    }
    let lf0 = state.log_frame();
    let d0 = state.delta_i_at(pos).abs();
    for c in 0..run.cfg.max_cycles {
        let mut stats = if heis {
            heisenberg::cycle(run, state)?
        } else {
            monomial::cycle(run, state, idx)?
        };
        stats.cycle_index = c;
        let out = state.delta_i_at(pos);
        let reference = out.abs() * (f64::from(deg) * (lf0 - state.log_frame())).exp() / d0;
        if reference <= run.cfg.tol_couple {
            state.set_delta_i_at(pos, 0.0);
            state.set_delta_w1(0.0);
            stats.scale_applied = 1.0;
            run.cycles.push(stats);
            return Ok(());
        }
        if run.cfg.rescale {
            let r = out.abs().powf(-1.0 / f64::from(deg));
            state.scale(r)?;
            if !heis {
                state.clamp_to_line(run.cfg.r);
            }
            stats.scale_applied = r;
        }
        run.cycles.push(stats);
    }
    Err(CouplerError::MaxCycles { level: idx })
}

impl From<crate::sdecore::StateError> for CouplerError {
    fn from(e: crate::sdecore::StateError) -> Self {
        CouplerError::Precondition(e.to_string())
    }
}
