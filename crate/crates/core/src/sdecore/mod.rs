//! Coupled Brownian motion with monomial integrals: state, stepping, scaling.
//!
//! The integrals `I_(a,b) = ∫ W1^a W2^b ∘ dW2` are advanced in Itô form,
//! `dI = W1^a W2^b dW2 + (b/2) W1^a W2^(b-1) dt`, with left-endpoint Euler steps.

mod index;
mod noise;
mod state;
mod stop;

pub use index::{coupled_indices, coupled_predecessor, order_key, precedes_eq, predecessor, simplex, MonomialIndex};
pub use noise::NoiseStream;
pub use state::{CoupledState, StateError, StepFault, StepMode, MAX_DEGREE, MAX_INDICES};
pub use stop::{
    run_until, AbsDeltaW1Reaches, DeltaIZero, DeltaW1Zero, OnLine, PhaseReport, PlanarMeet, StepSize, StopRule, W2Hits,
};
