// SPDX-License-Identifier: Apache-2.0

//! `F(f) = 1/2 |Lap f - g|^2_{L^2}` by Monte Carlo over interior points.
//!
//! The first variation pairs the residual with `Lap rho_i`, so only second
//! derivatives of the mother density are needed.

use super::{require_scalar_field, CollocationSet};
use crate::error::{Result, SplatError};
use crate::splat::SplatModel;
use crate::wfr::{accumulate, GradientSet};

pub fn poisson_loss(model: &SplatModel, coll: &CollocationSet) -> Result<f64> {
    require_scalar_field(model, coll)?;
    coll.check()?;
    let (_, lap) = model.eval_batch_with_laplacian(&coll.interior)?;
    let w = coll.interior_weight();
    let loss = 0.5
        * w
        * lap
            .iter()
            .zip(&coll.forcing)
            .map(|(l, g)| (l[0] - g).powi(2))
            .sum::<f64>();
    if !loss.is_finite() {
        return Err(SplatError::non_finite("Poisson loss"));
    }
    Ok(loss)
}

pub fn poisson_loss_and_gradients(
    model: &SplatModel,
    coll: &CollocationSet,
) -> Result<(f64, GradientSet)> {
    require_scalar_field(model, coll)?;
    coll.check()?;
    let prep = model.prepare()?;
    let w = coll.interior_weight();
    let coef = |j: usize, _f: &[f64], lap: &[f64], _alpha: &mut [f64], beta: &mut [f64]| {
        let r = lap[0] - coll.forcing[j];
        beta[0] = w * r;
        0.5 * w * r * r
    };
    let acc = accumulate(&prep, &coll.interior, true, &coef);
    let loss = acc.loss;
    if !loss.is_finite() {
        return Err(SplatError::non_finite("Poisson loss"));
    }
    Ok((loss, acc.into_gradients(model)?))
}

pub fn poisson_gradients(model: &SplatModel, coll: &CollocationSet) -> Result<GradientSet> {
    poisson_loss_and_gradients(model, coll).map(|(_, g)| g)
}
