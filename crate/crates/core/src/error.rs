// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::mother::MotherSplat;

/// Errors raised by model evaluation, gradient computation and training.
#[derive(Debug, Error)]
pub enum SplatError {
    #[error("splat {index} is singular: |det A| = {det:e} is below the floor {floor:e}")]
    SingularSplat { index: usize, det: f64, floor: f64 },

    #[error("mother splat {0:?} does not provide the evaluators this operation needs")]
    UnsupportedMother(MotherSplat),

    #[error("non-finite value in {what}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFinite { what: String, step: Option<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("symmetric square root failed: {0}")]
    NonPsdIntermediate(String),

    #[error("every splat was pruned")]
    EmptyModel,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model document: {0}")]
    Document(String),
}

impl SplatError {
    pub(crate) fn non_finite(what: impl Into<String>) -> Self {
        SplatError::NonFinite {
            what: what.into(),
            step: None,
        }
    }

    /// Attaches the optimizer step index to a `NonFinite` error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            SplatError::NonFinite { what, .. } => SplatError::NonFinite {
                what,
                step: Some(step),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, SplatError>;
