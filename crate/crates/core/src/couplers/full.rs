use crate::sdecore::{
    coupled_indices, coupled_predecessor, order_key, CoupledState, MonomialIndex, NoiseStream, OnLine, StepMode,
};

use super::bm::pre_stage;
use super::{couple_single, CouplerConfig, CouplerError, CouplingOutcome, CycleStats, PhaseDuration, Run, Sigma3Entry};

/// `(degree, ΔI)` for tracked indices ≼ `upto`, plus `(1, ΔW1)`.
fn components(state: &CoupledState, upto: MonomialIndex) -> Vec<(i32, f64)> {
    let n = state.n();
    let key = order_key(upto, n);
    let mut v = vec![(1, state.delta_w1())];
    for idx in state.indices() {
        if order_key(*idx, n) <= key {
            v.push((idx.scaling_degree() as i32, state.delta_i(*idx).expect("tracked")));
        }
    }
    v
}

/// Norm of the discrepancy array expressed in the frame with log-scale `lf_ref`.
fn norm_in_frame(state: &CoupledState, upto: MonomialIndex, lf_ref: f64) -> f64 {
    let shift = lf_ref - state.log_frame();
    components(state, upto)
        .iter()
        .map(|&(d, x)| {
            let y = x * (f64::from(d) * shift).exp();
            y * y
        })
        .sum::<f64>()
        .sqrt()
}

/// The `r` with `|S_r(ΔX)| = 1`, found by Newton's method on `ln |S_r(ΔX)|²` in `ln r`.
pub(crate) fn normalizing_scale(comps: &[(i32, f64)]) -> Option<f64> {
    let terms: Vec<(f64, f64)> = comps
        .iter()
        .filter(|(_, x)| *x != 0.0)
        .map(|&(d, x)| (f64::from(d), x.abs().ln()))
        .collect();
    if terms.is_empty() {
        return None;
    }
    let g = |s: f64| {
        let e: Vec<f64> = terms.iter().map(|(d, l)| 2.0 * (d * s + l)).collect();
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|x| (x - m).exp()).collect();
        let sw: f64 = w.iter().sum();
        let slope = terms.iter().zip(&w).map(|((d, _), wi)| 2.0 * d * wi).sum::<f64>() / sw;
        (m + sw.ln(), slope)
    };
    // Start right of the root: every component is at most one there.
    let mut s = terms.iter().map(|(d, l)| -l / d).fold(f64::INFINITY, f64::min);
    for _ in 0..100 {
        let (v, dv) = g(s);
        if v.abs() < 1e-15 {
            break;
        }
        s -= v / dv;
    }
    Some(s.exp())
}

fn on_line(state: &CoupledState, slope: f64) -> bool {
    state.delta_w1() == 0.0
        && state.delta_w2() == 0.0
        && (state.w2() - slope * state.w1()).abs() <= 1e-9 * (1.0 + state.w2().abs())
}

fn sigma3_entry(state: &CoupledState, idx: MonomialIndex) -> Sigma3Entry {
    let n = state.n();
    let key = order_key(idx, n);
    let lower = state
        .indices()
        .iter()
        .filter(|j| order_key(**j, n) < key)
        .map(|j| state.delta_i(*j).expect("tracked").abs())
        .fold(0.0, f64::max);
    Sigma3Entry {
        level: idx,
        max_abs_lower_delta: lower,
        delta_w1: state.delta_w1(),
    }
}

fn couple_upto(run: &mut Run<'_>, state: &mut CoupledState, idx: MonomialIndex) -> Result<(), CouplerError> {
    let n = state.n();
    let Some(pred) = coupled_predecessor(idx, n) else {
        return couple_single(run, state, idx);
    };
    run.level = idx;
    let Some(r0) = normalizing_scale(&components(state, idx)) else {
        return Ok(());
    };
    let slope = run.cfg.r;
    let keep_line = on_line(state, slope);
    state.scale(r0)?;
    if keep_line {
        state.clamp_to_line(slope);
    }
    let lf0 = state.log_frame();

    for c in 0..run.cfg.max_cycles {
        let (lf_c, ps, p0) = (state.log_frame(), state.phys_scale(), state.phys_time);

        couple_upto(run, state, pred)?;
        let p1 = state.phys_time;

        run.level = idx;
        run.phase(
            state,
            StepMode::Synchronous,
            &OnLine { slope, min_abs_w1: 0.0 },
            "sigma2",
        )?;
        let p2 = state.phys_time;

        run.sigma3.push(sigma3_entry(state, idx));
        couple_single(run, state, idx)?;
        run.level = idx;
        let p3 = state.phys_time;

        let phase = |name: &str, a: f64, b: f64| PhaseDuration {
            phase: name.to_string(),
            sim: (b - a) / ps,
            phys: b - a,
            delta_i_end: 0.0,
        };
        let mut stats = CycleStats {
            level: idx,
            cycle_index: c,
            phase_durations: vec![
                phase("sigma1", p0, p1),
                phase("sigma2", p1, p2),
                phase("sigma3", p2, p3),
            ],
            delta_in: 1.0,
            delta_out: norm_in_frame(state, idx, lf_c),
            scale_applied: 1.0,
            log_frame: state.log_frame(),
        };
        if norm_in_frame(state, idx, lf0) <= run.cfg.tol_couple {
            state.coalesce_upto(idx);
            run.cycles.push(stats);
            return Ok(());
        }
        let r = normalizing_scale(&components(state, idx)).expect("nonzero discrepancy");
        state.scale(r)?;
        state.clamp_to_line(slope);
        stats.scale_applied = r;
        run.cycles.push(stats);
    }
    Err(CouplerError::MaxCycles { level: idx })
}

/// Couples the whole array `(W1, W2, I_(a,b) for a ≥ 1, a + b ≤ n)` from arbitrary starts.
///
/// A planar reflection pre-stage brings the Brownian coordinates together and
/// onto `W2 = R W1`; then indices are coupled inductively in ≺ order.
pub fn full_couple(
    state: &mut CoupledState,
    cfg: &CouplerConfig,
    stream: &mut NoiseStream,
) -> Result<CouplingOutcome, CouplerError> {
    cfg.validate()?;
    if !cfg.rescale {
        return Err(CouplerError::Config("full coupler requires rescaling".into()));
    }
    if state.n() != cfg.n {
        return Err(CouplerError::Precondition(format!(
            "state has n={} but config has n={}",
            state.n(),
            cfg.n
        )));
    }
    let phys0 = state.phys_time;
    let mut run = Run::new(cfg, stream, state);
    let top = *coupled_indices(cfg.n).last().expect("n ≥ 1");
    let res = pre_stage(&mut run, state).and_then(|_| couple_upto(&mut run, state, top));
    if res.is_ok() {
        state.coalesce();
    }
    run.finish(state, phys0, res)
}
