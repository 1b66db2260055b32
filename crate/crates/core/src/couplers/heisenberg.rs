use crate::sdecore::{AbsDeltaW1Reaches, CoupledState, DeltaIZero, DeltaW1Zero, MonomialIndex, NoiseStream, StepMode};

use super::{couple_single, duration, CouplerConfig, CouplerError, CouplingOutcome, CycleStats, Run};

const I10: MonomialIndex = MonomialIndex::new(1, 0);

fn check_entry(state: &CoupledState) -> Result<f64, CouplerError> {
    if state.delta_w1() != 0.0 || state.delta_w2() != 0.0 {
        return Err(CouplerError::Precondition(
            "Heisenberg coupling needs W1 = W̃1 and W2 = W̃2".into(),
        ));
    }
    state
        .delta_i(I10)
        .ok_or_else(|| CouplerError::Precondition("state does not track I_(1,0)".into()))
}

/// One T1/T2/T3 cycle in units where `|ΔI_(1,0)|` at entry is the unit area.
pub(crate) fn cycle(run: &mut Run<'_>, state: &mut CoupledState) -> Result<CycleStats, CouplerError> {
    let d0 = check_entry(state)?;
    let area = d0.abs();
    let unit = area.sqrt();
    let r = run.cfg.r;
    let rel = |s: &CoupledState| s.delta_i(I10).unwrap_or(0.0) / area;

    let t1 = run.phase(
        state,
        StepMode::Reflection,
        &AbsDeltaW1Reaches { level: unit / r },
        "T1",
    )?;
    run.active(state, &t1);
    let p1 = duration("T1", &t1, rel(state));

    let rule = DeltaIZero::new(state, I10).expect("tracked");
    let t2 = run.phase(state, StepMode::Synchronous, &rule, "T2")?;
    run.active(state, &t2);
    let p2 = duration("T2", &t2, rel(state));

    let t3 = run.phase(state, StepMode::Reflection, &DeltaW1Zero, "T3")?;
    run.active(state, &t3);
    let p3 = duration("T3", &t3, rel(state));

    Ok(CycleStats {
        level: I10,
        cycle_index: 0,
        delta_out: p3.delta_i_end.abs(),
        phase_durations: vec![p1, p2, p3],
        delta_in: 1.0,
        scale_applied: 1.0,
        log_frame: state.log_frame(),
    })
}

/// Runs one cycle of the Heisenberg coupler.
///
/// Requires `ΔW1 = 0`, `W2 = W̃2` and `ΔI_(1,0) ≠ 0`. The cycle's length unit is
/// `|ΔI_(1,0)|^(1/2)`, so a normalized state gives the threshold `1/R`.
pub fn heisenberg_cycle(
    state: &mut CoupledState,
    cfg: &CouplerConfig,
    stream: &mut NoiseStream,
) -> Result<CycleStats, CouplerError> {
    cfg.validate()?;
    if check_entry(state)? == 0.0 {
        return Err(CouplerError::Precondition("ΔI_(1,0) is already zero".into()));
    }
    let mut run = Run::new(cfg, stream, state);
    cycle(&mut run, state)
}

/// Couples `(W1, I_(1,0))` given shared `W2` and `ΔW1 = 0`.
pub fn heisenberg_couple(
    state: &mut CoupledState,
    cfg: &CouplerConfig,
    stream: &mut NoiseStream,
) -> Result<CouplingOutcome, CouplerError> {
    cfg.validate()?;
    let d = check_entry(state)?;
    let phys0 = state.phys_time;
    let mut run = Run::new(cfg, stream, state);
    if cfg.rescale {
        run.ref_log_frame = state.log_frame() - 0.5 * d.abs().ln();
    } else {
        run.ref_unit = d.abs().sqrt();
    }
    let res = couple_single(&mut run, state, I10);
    run.finish(state, phys0, res)
}
