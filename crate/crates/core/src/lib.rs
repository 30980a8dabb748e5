// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Stochastic quasi-probability error mitigation for continuous-time
//! Lindblad dynamics.
//!
//! The crate is organised bottom-up:
//!
//! * [`pauli`] and [`basis`]: Pauli algebra, transfer matrices and the
//!   catalog of implementable single-qubit basis operations.
//! * [`lindblad`]: noisy, ideal, rescaled and effective master-equation
//!   integration.
//! * [`decomposition`]: recovery generators, their quasi-probability
//!   decompositions and sampling-cost bookkeeping.
//! * [`stochastic`]: jump-schedule sampling, recovery-inserted trajectories
//!   and estimators.
//! * [`extrapolation`]: Richardson extrapolation over boosted noise.
//! * [`models`]: benchmark Hamiltonians, observables, noise presets and the
//!   cross-resonance circuit.

pub mod basis;
pub mod decomposition;
pub mod error;
pub mod extrapolation;
pub mod linalg;
pub mod lindblad;
pub mod models;
pub mod pauli;
pub mod stochastic;

pub use error::{QemError, Result};
