//! Markovian couplings of planar Brownian motion together with its monomial
//! Stratonovich integrals, plus the polynomial-field reduction that leads to them.
//!
//! Modules:
//! - [`polyfield`]: polynomial vector fields, the Σ matrix and the rank test.
//! - [`sdecore`]: the coupled state, Euler stepping, scaling and stopping rules.
//! - [`couplers`]: reflection, Heisenberg, monomial and inductive couplers.
//! - [`harness`]: replica-parallel experiments, tail fits and oracles.

pub mod couplers;
pub mod harness;
pub mod polyfield;
pub mod sdecore;

pub use couplers::{CouplerConfig, CouplingOutcome, CycleStats};
pub use harness::{ExperimentConfig, RunRecord, Scenario, TailFit, TailMethod};
pub use polyfield::{BivariatePolyVec, PhcVerdict, SigmaMatrix};
pub use sdecore::{CoupledState, MonomialIndex, NoiseStream, StepMode};
