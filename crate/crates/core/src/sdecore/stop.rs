use super::index::MonomialIndex;
use super::noise::NoiseStream;
use super::state::{CoupledState, StepFault, StepMode};

/// A stopping event expressed as the zero of a signed gap.
pub trait StopRule {
    /// Signed distance to the event; the event is the gap reaching zero.
    fn gap(&self, s: &CoupledState) -> f64;

    /// Distance to the event in units of the driving Brownian motion.
    fn reach(&self, s: &CoupledState) -> f64 {
        self.gap(s).abs()
    }

    /// Side condition that must also hold where the gap crosses zero.
    fn armed(&self, _s: &CoupledState) -> bool {
        true
    }

    /// Sets the triggering quantity exactly to its target.
    fn clamp(&self, s: &mut CoupledState);
}

/// `|ΔW1| = level`.
#[derive(Clone, Copy, Debug)]
pub struct AbsDeltaW1Reaches {
    pub level: f64,
}

impl StopRule for AbsDeltaW1Reaches {
    fn gap(&self, s: &CoupledState) -> f64 {
        self.level - s.delta_w1().abs()
    }

    fn reach(&self, s: &CoupledState) -> f64 {
        0.5 * self.gap(s).abs()
    }

    fn clamp(&self, s: &mut CoupledState) {
        let d = s.delta_w1();
        s.set_delta_w1(if d < 0.0 { -self.level } else { self.level });
    }
}

/// `ΔW1 = 0`.
#[derive(Clone, Copy, Debug)]
pub struct DeltaW1Zero;

impl StopRule for DeltaW1Zero {
    fn gap(&self, s: &CoupledState) -> f64 {
        s.delta_w1()
    }

    fn reach(&self, s: &CoupledState) -> f64 {
        0.5 * s.delta_w1().abs()
    }

    fn clamp(&self, s: &mut CoupledState) {
        s.set_delta_w1(0.0);
    }
}

/// `ΔI_(a,b) = 0`.
#[derive(Clone, Copy, Debug)]
pub struct DeltaIZero {
    idx: MonomialIndex,
    pos: usize,
}

impl DeltaIZero {
    pub fn new(state: &CoupledState, idx: MonomialIndex) -> Option<Self> {
        state.position(idx).map(|pos| Self { idx, pos })
    }
}

impl StopRule for DeltaIZero {
    fn gap(&self, s: &CoupledState) -> f64 {
        s.delta_i_at(self.pos)
    }

    fn reach(&self, s: &CoupledState) -> f64 {
        let d = s.delta_i_at(self.pos).abs();
        let speed = (s.power_difference(self.idx.a) * s.w2().powi(self.idx.b as i32)).abs();
        if speed > 0.0 {
            d / speed
        } else {
            d
        }
    }

    fn clamp(&self, s: &mut CoupledState) {
        s.set_delta_i_at(self.pos, 0.0);
    }
}

/// `W2 = target`, with both copies sharing `W2`.
#[derive(Clone, Copy, Debug)]
pub struct W2Hits {
    pub target: f64,
}

impl StopRule for W2Hits {
    fn gap(&self, s: &CoupledState) -> f64 {
        s.w2() - self.target
    }

    fn clamp(&self, s: &mut CoupledState) {
        s.set_w2_shared(self.target);
    }
}

/// `W2 = slope · W1` with `|W1| ≥ min_abs_w1`.
#[derive(Clone, Copy, Debug)]
pub struct OnLine {
    pub slope: f64,
    pub min_abs_w1: f64,
}

impl StopRule for OnLine {
    fn gap(&self, s: &CoupledState) -> f64 {
        s.w2() - self.slope * s.w1()
    }

    fn reach(&self, s: &CoupledState) -> f64 {
        let across = self.gap(s).abs() / (1.0 + self.slope * self.slope).sqrt();
        across.max(self.min_abs_w1 - s.w1().abs())
    }

    fn armed(&self, s: &CoupledState) -> bool {
        s.w1().abs() >= self.min_abs_w1
    }

    fn clamp(&self, s: &mut CoupledState) {
        s.clamp_to_line(self.slope);
    }
}

/// The two planar Brownian paths meet; `e` is the fixed unit difference direction.
#[derive(Clone, Copy, Debug)]
pub struct PlanarMeet {
    pub e: [f64; 2],
}

impl StopRule for PlanarMeet {
    fn gap(&self, s: &CoupledState) -> f64 {
        self.e[0] * s.delta_w1() + self.e[1] * s.delta_w2()
    }

    fn reach(&self, s: &CoupledState) -> f64 {
        0.5 * self.gap(s).abs()
    }

    fn clamp(&self, s: &mut CoupledState) {
        s.meet_planar();
    }
}

/// Step size policy for [`run_until`].
///
/// With a floor, each step uses `dt · max(floor, reach)²`, so `dt` is the
/// squared relative resolution; without one, every step is `dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSize {
    pub dt: f64,
    pub floor: Option<f64>,
}

impl StepSize {
    pub fn fixed(dt: f64) -> Self {
        Self { dt, floor: None }
    }

    pub fn relative(dt: f64, floor: f64) -> Self {
        Self { dt, floor: Some(floor) }
    }

    fn at(&self, reach: f64) -> f64 {
        match self.floor {
            None => self.dt,
            Some(f) => {
                let l = f.max(reach);
                self.dt * l * l
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseReport {
    pub hit: bool,
    pub steps: u64,
    pub sim_duration: f64,
    pub phys_duration: f64,
    pub sup_abs_delta_w1: f64,
}

/// Steps until `rule` fires or the simulation clock reaches `t_cap`.
///
/// A crossing inside a step is located by linear interpolation of every
/// field, after which the rule clamps its quantity to the exact target.
pub fn run_until(
    state: &mut CoupledState,
    mode: StepMode,
    rule: &dyn StopRule,
    size: StepSize,
    stream: &mut NoiseStream,
    t_cap: f64,
) -> Result<PhaseReport, StepFault> {
    let (t0, p0) = (state.t, state.phys_time);
    let mut sup = state.delta_w1().abs();
    let mut steps = 0u64;
    let finish = |s: &CoupledState, hit: bool, steps: u64, sup: f64| PhaseReport {
        hit,
        steps,
        sim_duration: s.t - t0,
        phys_duration: s.phys_time - p0,
        sup_abs_delta_w1: sup.max(s.delta_w1().abs()),
    };

    let mut g0 = rule.gap(state);
    if g0 == 0.0 && rule.armed(state) {
        rule.clamp(state);
        return Ok(finish(state, true, 0, sup));
    }
    loop {
        if state.t >= t_cap {
            return Ok(finish(state, false, steps, sup));
        }
        let h = size.at(rule.reach(state));
        let prev = *state;
        state.step(mode, h, stream)?;
        steps += 1;
        let g1 = rule.gap(state);
        let crossed = g1 == 0.0 || (g0 < 0.0 && g1 > 0.0) || (g0 > 0.0 && g1 < 0.0);
        if crossed {
            let alpha = if g0 == g1 {
                1.0
            } else {
                (g0 / (g0 - g1)).clamp(0.0, 1.0)
            };
            let mut cand = *state;
            cand.interpolate_from(&prev, alpha);
            if rule.armed(&cand) {
                sup = sup.max(cand.delta_w1().abs());
                rule.clamp(&mut cand);
                *state = cand;
                return Ok(finish(state, true, steps, sup));
            }
        }
        sup = sup.max(state.delta_w1().abs());
        g0 = g1;
    }
}
