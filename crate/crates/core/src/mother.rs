// SPDX-License-Identifier: Apache-2.0

//! Mother splat densities in standardized coordinates.
//!
//! A mother splat is a zero-mean, identity-covariance density `rho` on `R^d`.
//! Every splat is an affine pushforward of it. The evaluators here work on
//! the standardized coordinate `z = A^{-1}(x - b)`; the pushforward versions
//! live in [`crate::splat`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Result, SplatError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[non_exhaustive]
pub enum MotherSplat {
    /// Standard normal `N(0, I)`.
    Gaussian,
}

impl MotherSplat {
    pub fn name(&self) -> &'static str {
        match self {
            MotherSplat::Gaussian => "gaussian",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Some(MotherSplat::Gaussian),
            _ => None,
        }
    }

    /// Whether the density decays at least exponentially, so that the
    /// integration-by-parts gradient formulas hold without boundary terms.
    pub fn is_sub_exponential(&self) -> bool {
        match self {
            MotherSplat::Gaussian => true,
        }
    }

    /// Normalizing constant `rho(0)` in dimension `d`.
    pub fn peak(&self, d: usize) -> f64 {
        match self {
            MotherSplat::Gaussian => (2.0 * PI).powf(-(d as f64) / 2.0),
        }
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        match self {
            MotherSplat::Gaussian => self.peak(z.len()) * (-0.5 * norm_sq(z)).exp(),
        }
    }

    pub fn grad_log_density(&self, z: &[f64]) -> Vec<f64> {
        match self {
            MotherSplat::Gaussian => z.iter().map(|zi| -zi).collect(),
        }
    }

    pub fn laplacian(&self, z: &[f64]) -> Result<f64> {
        match self {
            MotherSplat::Gaussian => Ok(self.density(z) * (norm_sq(z) - z.len() as f64)),
        }
    }

    pub fn grad_laplacian(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            MotherSplat::Gaussian => {
                let d = z.len() as f64;
                let r = self.density(z) * (2.0 + d - norm_sq(z));
                Ok(z.iter().map(|zi| r * zi).collect())
            }
        }
    }

    /// Rejects kinds that cannot back the physics-informed losses.
    pub fn require_laplacian(&self) -> Result<()> {
        if self.is_sub_exponential() {
            Ok(())
        } else {
            Err(SplatError::UnsupportedMother(*self))
        }
    }
}

#[inline]
pub(crate) fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum()
}
