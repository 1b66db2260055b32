use crate::sdecore::{
    AbsDeltaW1Reaches, CoupledState, DeltaW1Zero, MonomialIndex, NoiseStream, OnLine, StepMode, W2Hits,
};

use super::{couple_single, duration, sign, CouplerConfig, CouplerError, CouplingOutcome, CycleStats, Run};

fn check_entry(state: &CoupledState, idx: MonomialIndex, slope: f64) -> Result<f64, CouplerError> {
    if idx.a < 1 || idx.total() < 2 {
        return Err(CouplerError::Precondition(format!(
            "monomial coupler needs a ≥ 1 and a + b > 1, got {idx}"
        )));
    }
    if state.delta_w1() != 0.0 || state.delta_w2() != 0.0 {
        return Err(CouplerError::Precondition(
            "monomial coupling needs W1 = W̃1 and W2 = W̃2".into(),
        ));
    }
    let d = state
        .delta_i(idx)
        .ok_or_else(|| CouplerError::Precondition(format!("state does not track {idx}")))?;
    let off = (state.w2() - slope * state.w1()).abs();
    if off > 1e-9 * (1.0 + state.w2().abs()) {
        return Err(CouplerError::Precondition(
            "start must lie on the line W2 = R W1".into(),
        ));
    }
    Ok(d)
}

/// One θ/τ/η/λ/β cycle in units where `|ΔI_(a,b)|` at entry is one.
pub(crate) fn cycle(
    run: &mut Run<'_>,
    state: &mut CoupledState,
    idx: MonomialIndex,
) -> Result<CycleStats, CouplerError> {
    let r = run.cfg.r;
    let d0 = check_entry(state, idx, r)?;
    let pos = state.position(idx).expect("checked");
    let deg = idx.scaling_degree() as i32;
    let size = d0.abs();
    let unit = size.powf(1.0 / f64::from(deg));
    let rel = |s: &CoupledState| s.delta_i_at(pos) / size;
    let k = idx.total() as i32 - 1;

    let far = r.powi(2 * run.cfg.n as i32) * unit;
    let theta = run.phase(
        state,
        StepMode::Synchronous,
        &OnLine {
            slope: r,
            min_abs_w1: far,
        },
        "theta",
    )?;
    let p_theta = duration("theta", &theta, rel(state));
    let w1_theta = state.w1();

    let delta = unit / ((w1_theta.abs() / unit).powi(k) * r.powi(idx.b as i32));
    let tau = run.phase(state, StepMode::Reflection, &AbsDeltaW1Reaches { level: delta }, "tau")?;
    run.active(state, &tau);
    let p_tau = duration("tau", &tau, rel(state));

    // Drive W2 so that the drift (W1^a − W̃1^a) W2^b dW2 removes ΔI.
    let dir = sign(state.delta_w1()) * sign(w1_theta).powi(k) * sign(state.delta_i_at(pos));
    let target = state.w2() - dir * unit / f64::from(idx.a);
    let eta = run.phase(state, StepMode::Synchronous, &W2Hits { target }, "eta")?;
    run.active(state, &eta);
    let p_eta = duration("eta", &eta, rel(state));

    let lambda = run.phase(state, StepMode::Reflection, &DeltaW1Zero, "lambda")?;
    run.active(state, &lambda);
    let p_lambda = duration("lambda", &lambda, rel(state));

    let beta = run.phase(
        state,
        StepMode::Synchronous,
        &OnLine {
            slope: r,
            min_abs_w1: 0.0,
        },
        "beta",
    )?;
    let p_beta = duration("beta", &beta, rel(state));

    Ok(CycleStats {
        level: idx,
        cycle_index: 0,
        delta_in: 1.0,
        delta_out: p_beta.delta_i_end.abs(),
        phase_durations: vec![p_theta, p_tau, p_eta, p_lambda, p_beta],
        scale_applied: 1.0,
        log_frame: state.log_frame(),
    })
}

/// Runs one cycle of the monomial coupler for `idx = (a, b)`.
///
/// Requires `ΔW1 = 0`, `W2 = W̃2`, `ΔI_(a,b) ≠ 0` and a start on `W2 = R W1`.
/// The length unit is `|ΔI_(a,b)|^(1/(a+b+1))`.
pub fn monomial_cycle(
    state: &mut CoupledState,
    idx: MonomialIndex,
    cfg: &CouplerConfig,
    stream: &mut NoiseStream,
) -> Result<CycleStats, CouplerError> {
    cfg.validate()?;
    if check_entry(state, idx, cfg.r)? == 0.0 {
        return Err(CouplerError::Precondition(format!("ΔI{idx} is already zero")));
    }
    let mut run = Run::new(cfg, stream, state);
    cycle(&mut run, state, idx)
}

/// Couples `(W1, I_(a,b))`, ignoring the other integrals.
pub fn monomial_couple(
    state: &mut CoupledState,
    idx: MonomialIndex,
    cfg: &CouplerConfig,
    stream: &mut NoiseStream,
) -> Result<CouplingOutcome, CouplerError> {
    cfg.validate()?;
    if !cfg.rescale {
        return Err(CouplerError::Config("monomial coupler requires rescaling".into()));
    }
    let d = check_entry(state, idx, cfg.r)?;
    let phys0 = state.phys_time;
    let mut run = Run::new(cfg, stream, state);
    if d != 0.0 {
        run.ref_log_frame = state.log_frame() - d.abs().ln() / f64::from(idx.scaling_degree());
    }
    let res = couple_single(&mut run, state, idx);
    run.finish(state, phys0, res)
}
