use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::index::{coupled_indices, order_key, MonomialIndex};
use super::noise::NoiseStream;

/// Largest supported `n`. Keeps the state a fixed-size `Copy` value.
pub const MAX_DEGREE: u32 = 6;
pub const MAX_INDICES: usize = (MAX_DEGREE * (MAX_DEGREE + 1) / 2) as usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("degree n={0} outside 1..={MAX_DEGREE}")]
    Degree(u32),
    #[error("index {0} not tracked by this state")]
    UnknownIndex(MonomialIndex),
    #[error("scale factor must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("non-finite input")]
    NonFinite,
}

/// Non-finite value produced by a step, with the offending state.
#[derive(Debug, Error, Clone)]
#[error("non-finite state after step (t={t}): {dump}")]
pub struct StepFault {
    pub t: f64,
    pub dump: String,
}

/// Control applied to the second copy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// Both copies receive the same increments.
    Synchronous,
    /// `W̃1` receives `−dW1`; `W2` stays synchronous.
    Reflection,
    /// Reflection of the planar increment along the unit vector `e`.
    PlanarReflection { e: [f64; 2] },
}

/// Joint state of two copies of `(W1, W2, {I_(a,b)})`.
///
/// Positions are stored as midpoint and difference, so synchronous steps
/// leave `W1 − W̃1` untouched and reflection steps leave `W1 + W̃1` untouched,
/// bit for bit. Integrals are stored as the plain value and the difference
/// `I − Ĩ`; the difference is updated directly to avoid cancellation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledState {
    pub t: f64,
    pub phys_time: f64,
    phys_scale: f64,
    log_frame: f64,
    mid1: f64,
    diff1: f64,
    mid2: f64,
    diff2: f64,
    n: u32,
    len: usize,
    idx: [MonomialIndex; MAX_INDICES],
    i: [f64; MAX_INDICES],
    di: [f64; MAX_INDICES],
}

impl CoupledState {
    /// Two copies at the given Brownian positions with all integrals zero.
    pub fn new(n: u32, w1: f64, w1t: f64, w2: f64, w2t: f64) -> Result<Self, StateError> {
        if n == 0 || n > MAX_DEGREE {
            return Err(StateError::Degree(n));
        }
        if ![w1, w1t, w2, w2t].iter().all(|x| x.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let list = coupled_indices(n);
        let mut idx = [MonomialIndex::default(); MAX_INDICES];
        idx[..list.len()].copy_from_slice(&list);
        Ok(Self {
            t: 0.0,
            phys_time: 0.0,
            phys_scale: 1.0,
            log_frame: 0.0,
            mid1: 0.5 * (w1 + w1t),
            diff1: w1 - w1t,
            mid2: 0.5 * (w2 + w2t),
            diff2: w2 - w2t,
            n,
            len: list.len(),
            idx,
            i: [0.0; MAX_INDICES],
            di: [0.0; MAX_INDICES],
        })
    }

    /// Both copies at the origin.
    pub fn origin(n: u32) -> Result<Self, StateError> {
        Self::new(n, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Tracked indices in ≺ order.
    pub fn indices(&self) -> &[MonomialIndex] {
        &self.idx[..self.len]
    }

    pub fn position(&self, idx: MonomialIndex) -> Option<usize> {
        self.indices().iter().position(|i| *i == idx)
    }

    fn require(&self, idx: MonomialIndex) -> Result<usize, StateError> {
        self.position(idx).ok_or(StateError::UnknownIndex(idx))
    }

    pub fn w1(&self) -> f64 {
        self.mid1 + 0.5 * self.diff1
    }

    pub fn w1_tilde(&self) -> f64 {
        self.mid1 - 0.5 * self.diff1
    }

    pub fn w2(&self) -> f64 {
        self.mid2 + 0.5 * self.diff2
    }

    pub fn w2_tilde(&self) -> f64 {
        self.mid2 - 0.5 * self.diff2
    }

    /// `W1 − W̃1`.
    pub fn delta_w1(&self) -> f64 {
        self.diff1
    }

    /// `W2 − W̃2`.
    pub fn delta_w2(&self) -> f64 {
        self.diff2
    }

    /// `W1 + W̃1`.
    pub fn sum_w1(&self) -> f64 {
        2.0 * self.mid1
    }

    /// `(I, Ĩ)` for a tracked index.
    pub fn integral(&self, idx: MonomialIndex) -> Option<(f64, f64)> {
        self.position(idx).map(|k| (self.i[k], self.i[k] - self.di[k]))
    }

    /// `I − Ĩ` for a tracked index.
    pub fn delta_i(&self, idx: MonomialIndex) -> Option<f64> {
        self.position(idx).map(|k| self.di[k])
    }

    pub(crate) fn delta_i_at(&self, k: usize) -> f64 {
        self.di[k]
    }

    pub fn set_integral(&mut self, idx: MonomialIndex, plain: f64, tilde: f64) -> Result<(), StateError> {
        let k = self.require(idx)?;
        if !plain.is_finite() || !tilde.is_finite() {
            return Err(StateError::NonFinite);
        }
        self.i[k] = plain;
        self.di[k] = plain - tilde;
        Ok(())
    }

    /// Sets `I − Ĩ` keeping `I`.
    pub fn set_delta_i(&mut self, idx: MonomialIndex, delta: f64) -> Result<(), StateError> {
        let k = self.require(idx)?;
        if !delta.is_finite() {
            return Err(StateError::NonFinite);
        }
        self.di[k] = delta;
        Ok(())
    }

    /// Cumulative spatial scale factor applied since the state was created.
    pub fn frame(&self) -> f64 {
        self.log_frame.exp()
    }

    /// Natural log of [`Self::frame`]; nested rescaling can overflow the plain value.
    pub fn log_frame(&self) -> f64 {
        self.log_frame
    }

    /// Physical time per unit of simulation clock.
    pub fn phys_scale(&self) -> f64 {
        self.phys_scale
    }

    /// Euclidean norm of `(ΔW1, ΔI_(c,d) for (c,d) ≼ upto)`.
    pub fn delta_norm(&self, upto: MonomialIndex) -> f64 {
        let k = order_key(upto, self.n);
        let mut s = self.diff1 * self.diff1;
        for (j, idx) in self.indices().iter().enumerate() {
            if order_key(*idx, self.n) > k {
                break;
            }
            s += self.di[j] * self.di[j];
        }
        s.sqrt()
    }

    /// Brownian scaling `S_r`: positions by `r`, `I_(a,b)` by `r^(a+b+1)`.
    pub fn scale(&mut self, r: f64) -> Result<(), StateError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(StateError::BadScale(r));
        }
        self.mid1 *= r;
        self.diff1 *= r;
        self.mid2 *= r;
        self.diff2 *= r;
        for k in 0..self.len {
            let f = r.powi(self.idx[k].scaling_degree() as i32);
            self.i[k] *= f;
            self.di[k] *= f;
        }
        self.log_frame += r.ln();
        self.phys_scale /= r * r;
        self.t = 0.0;
        Ok(())
    }

    /// Sets the tilde copy equal to the plain copy.
    pub fn coalesce(&mut self) {
        self.diff1 = 0.0;
        self.diff2 = 0.0;
        self.di = [0.0; MAX_INDICES];
    }

    /// Zeroes `ΔW1` and `ΔI` for indices ≼ `upto`, leaving the rest alone.
    pub fn coalesce_upto(&mut self, upto: MonomialIndex) {
        let k = order_key(upto, self.n);
        self.diff1 = 0.0;
        for j in 0..self.len {
            if order_key(self.idx[j], self.n) <= k {
                self.di[j] = 0.0;
            }
        }
    }

    pub(crate) fn set_delta_w1(&mut self, d: f64) {
        self.diff1 = d;
    }

    pub(crate) fn set_delta_i_at(&mut self, k: usize, d: f64) {
        self.di[k] = d;
    }

    /// Puts both copies on the line `W2 = R W1` with equal Brownian coordinates.
    pub(crate) fn clamp_to_line(&mut self, slope: f64) {
        self.diff1 = 0.0;
        self.diff2 = 0.0;
        self.mid2 = slope * self.mid1;
    }

    pub(crate) fn set_w2_shared(&mut self, w2: f64) {
        self.mid2 = w2;
        self.diff2 = 0.0;
    }

    pub(crate) fn meet_planar(&mut self) {
        self.diff1 = 0.0;
        self.diff2 = 0.0;
    }

    /// `W1^a − W̃1^a`, computed without cancellation.
    pub fn power_difference(&self, a: u32) -> f64 {
        let (w, wt) = (self.w1(), self.w1_tilde());
        let mut s = 0.0;
        for k in 0..a {
            s += w.powi(k as i32) * wt.powi((a - 1 - k) as i32);
        }
        self.diff1 * s
    }

    /// Draws increments and advances both copies by one Euler step.
    pub fn step(&mut self, mode: StepMode, dt: f64, stream: &mut NoiseStream) -> Result<(f64, f64), StepFault> {
        let (xi1, xi2) = stream.increments(dt);
        self.advance(mode, dt, xi1, xi2)?;
        Ok((xi1, xi2))
    }

    /// One Itô–Euler step with given increments, integrands at the left endpoint.
    pub fn advance(&mut self, mode: StepMode, dt: f64, xi1: f64, xi2: f64) -> Result<(), StepFault> {
        const P: usize = MAX_DEGREE as usize + 1;
        let n = self.n as usize;
        let w1 = self.w1();
        let w1t = self.w1_tilde();
        let w2 = self.w2();
        let w2t = self.w2_tilde();

        let mut p1 = [1.0; P];
        let mut q1 = [1.0; P];
        let mut p2 = [1.0; P];
        let mut q2 = [1.0; P];
        for k in 1..=n {
            p1[k] = p1[k - 1] * w1;
            q1[k] = q1[k - 1] * w1t;
            p2[k] = p2[k - 1] * w2;
            q2[k] = q2[k - 1] * w2t;
        }

        let (xi2t, proj) = match mode {
            StepMode::Synchronous | StepMode::Reflection => (xi2, 0.0),
            StepMode::PlanarReflection { e } => {
                let p = e[0] * xi1 + e[1] * xi2;
                (xi2 - 2.0 * e[1] * p, p)
            }
        };

        let shared_w2 = self.diff2 == 0.0 && xi2t == xi2;
        let mut check = 0.0;
        if shared_w2 {
            // dpow[a] = W1^a − W̃1^a = ΔW1 · Σ_k W1^k W̃1^(a−1−k)
            let mut dpow = [0.0; P];
            for a in 1..=n {
                let mut s = 0.0;
                for k in 0..a {
                    s += p1[k] * q1[a - 1 - k];
                }
                dpow[a] = self.diff1 * s;
            }
            for k in 0..self.len {
                let MonomialIndex { a, b } = self.idx[k];
                let (a, b) = (a as usize, b as usize);
                let mut g = p2[b] * xi2;
                if b > 0 {
                    g += 0.5 * b as f64 * p2[b - 1] * dt;
                }
                self.i[k] += p1[a] * g;
                self.di[k] += dpow[a] * g;
                check += self.i[k] + self.di[k];
            }
        } else {
            for k in 0..self.len {
                let MonomialIndex { a, b } = self.idx[k];
                let (a, b) = (a as usize, b as usize);
                let mut g = p2[b] * xi2;
                let mut gt = q2[b] * xi2t;
                if b > 0 {
                    let c = 0.5 * b as f64 * dt;
                    g += c * p2[b - 1];
                    gt += c * q2[b - 1];
                }
                let inc = p1[a] * g;
                self.i[k] += inc;
                self.di[k] += inc - q1[a] * gt;
                check += self.i[k] + self.di[k];
            }
        }

        match mode {
            StepMode::Synchronous => {
                self.mid1 += xi1;
                self.mid2 += xi2;
            }
            StepMode::Reflection => {
                self.diff1 += 2.0 * xi1;
                self.mid2 += xi2;
            }
            StepMode::PlanarReflection { e } => {
                self.diff1 += 2.0 * e[0] * proj;
                self.diff2 += 2.0 * e[1] * proj;
                self.mid1 += xi1 - e[0] * proj;
                self.mid2 += xi2 - e[1] * proj;
            }
        }
        self.t += dt;
        self.phys_time += self.phys_scale * dt;

        check += self.mid1 + self.diff1 + self.mid2 + self.diff2 + self.phys_time;
        if !check.is_finite() {
            return Err(StepFault {
                t: self.t,
                dump: format!("{self:?}"),
            });
        }
        Ok(())
    }

    /// Replaces `self` with `prev + α (self − prev)` in every continuous field.
    pub(crate) fn interpolate_from(&mut self, prev: &Self, alpha: f64) {
        let lerp = |a: f64, b: f64| a + alpha * (b - a);
        self.t = lerp(prev.t, self.t);
        self.phys_time = lerp(prev.phys_time, self.phys_time);
        self.mid1 = lerp(prev.mid1, self.mid1);
        self.diff1 = lerp(prev.diff1, self.diff1);
        self.mid2 = lerp(prev.mid2, self.mid2);
        self.diff2 = lerp(prev.diff2, self.diff2);
        for k in 0..self.len {
            self.i[k] = lerp(prev.i[k], self.i[k]);
            self.di[k] = lerp(prev.di[k], self.di[k]);
        }
    }
}
