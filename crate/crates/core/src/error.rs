// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced by the simulation and mitigation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QemError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("input is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("invalid support {support:?} for a {qubits}-qubit system")]
    InvalidSupport { support: Vec<usize>, qubits: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integrator step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("noise term acts on {arity} qubits; at most 2 are supported")]
    NonLocalTerm { arity: usize },

    #[error("singular linear system")]
    Singular,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("reference state is not pure (purity {purity})")]
    NonPureReference { purity: f64 },
}

pub type Result<T, E = QemError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> QemError {
    QemError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
