// SPDX-License-Identifier: Apache-2.0

//! Splat regression: mixtures of affine pushforwards of a mother density,
//! trained with Wasserstein-Fisher-Rao parameter gradients.

pub mod baselines;
pub mod bw;
pub mod construct;
pub mod error;
pub mod losses;
pub mod mother;
pub mod optim;
pub mod par;
pub mod splat;
pub mod wfr;

#[cfg(test)]
mod testutil;

pub use error::{Result, SplatError};
pub use mother::MotherSplat;
pub use splat::{ModelDocument, Splat, SplatModel, SplatRecord, DEFAULT_DET_FLOOR};
pub use wfr::{
    fd_gradient_oracle, particle_gradients, wfr_gradients, Block, FirstVariation, GradientSet,
    ParticleGradient, SplatGradient,
};
pub use bw::{bw_distance, bw_geodesic, bw_transport_map, AffineMap, BwPoint};
pub use losses::{AllenCahnLoss, CollocationSet, Dataset};
pub use optim::{
    init_model, prune_and_clone, train, Algorithm, InitScheme, Objective, OptimizerConfig,
    TrainRecord, TrainTrace,
};
pub use baselines::{cheb_eval, cheb_fit, haar_eval, haar_fit, ChebInterpolant, HaarApproximation};
pub use construct::{build_construction, sup_error, ConstructionSpec, GridSpec};
