// SPDX-License-Identifier: Apache-2.0

//! Loss functionals and their first variations.

mod allen_cahn;
mod collocation;
mod ls;
mod poisson;

pub use allen_cahn::{
    allen_cahn_gradients, allen_cahn_loss, allen_cahn_loss_and_gradients, AllenCahnLoss,
};
pub use collocation::CollocationSet;
pub use ls::{ls_first_variation, ls_gradients, ls_loss, Dataset};
pub use poisson::{poisson_gradients, poisson_loss, poisson_loss_and_gradients};

use crate::error::{Result, SplatError};
use crate::splat::SplatModel;

/// Physics-informed losses act on scalar fields through `Lap f`.
fn require_scalar_field(model: &SplatModel, coll: &CollocationSet) -> Result<()> {
    model.mother().require_laplacian()?;
    if model.output_dim() != 1 {
        return Err(SplatError::DimensionError(format!(
            "physics-informed losses need p = 1, model has p = {}",
            model.output_dim()
        )));
    }
    if coll.dim() != model.input_dim() {
        return Err(SplatError::DimensionError(format!(
            "collocation points are in R^{} but the model is on R^{}",
            coll.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}
