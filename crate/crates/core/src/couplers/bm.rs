use serde::{Deserialize, Serialize};

use crate::sdecore::{CoupledState, NoiseStream, OnLine, PlanarMeet, StepMode};

use super::{CouplerConfig, CouplerError, Run};

/// Durations of the Brownian pre-stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreStage {
    /// Simulation time until the planar paths meet.
    pub meet_time: f64,
    /// Simulation time of the synchronous run to the line `W2 = R W1`.
    pub line_time: f64,
}

pub(crate) fn pre_stage(run: &mut Run<'_>, state: &mut CoupledState) -> Result<PreStage, CouplerError> {
    let (d1, d2) = (state.delta_w1(), state.delta_w2());
    let len = d1.hypot(d2);
    let mut out = PreStage::default();
    if len > 0.0 {
        let e = [d1 / len, d2 / len];
        let rep = run.phase(state, StepMode::PlanarReflection { e }, &PlanarMeet { e }, "sigma_-1")?;
        run.active(state, &rep);
        out.meet_time = rep.sim_duration;
    }
    let rep = run.phase(
        state,
        StepMode::Synchronous,
        &OnLine {
            slope: run.cfg.r,
            min_abs_w1: 0.0,
        },
        "sigma_0",
    )?;
    out.line_time = rep.sim_duration;
    Ok(out)
}

/// Reflection coupling of the planar Brownian pair until it meets, then
/// synchronous motion until `W2 = R W1`.
///
/// The difference vector stays on its initial ray, so reflecting along that
/// fixed direction is the mirror coupling across the perpendicular bisector.
pub fn reflect_couple_bm(
    state: &mut CoupledState,
    cfg: &CouplerConfig,
    stream: &mut NoiseStream,
) -> Result<PreStage, CouplerError> {
    cfg.validate()?;
    let mut run = Run::new(cfg, stream, state);
    pre_stage(&mut run, state)
}
