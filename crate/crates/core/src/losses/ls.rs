// SPDX-License-Identifier: Apache-2.0

use nalgebra::DVector;

use crate::error::{Result, SplatError};
use crate::splat::SplatModel;
use crate::wfr::{accumulate, FirstVariation, GradientSet};

/// Regression data `(x_j, y_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<DVector<f64>>, y: Vec<DVector<f64>>) -> Result<Self> {
        if x.is_empty() {
            return Err(SplatError::InvalidArgument("dataset is empty".into()));
        }
        if x.len() != y.len() {
            return Err(SplatError::DimensionError(format!(
                "{} inputs but {} targets",
                x.len(),
                y.len()
            )));
        }
        let (d, p) = (x[0].len(), y[0].len());
        if x.iter().any(|v| v.len() != d) || y.iter().any(|v| v.len() != p) {
            return Err(SplatError::DimensionError(
                "dataset rows have inconsistent dimensions".into(),
            ));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.y[0].len()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i].clone()).collect(),
        }
    }

    fn check_model(&self, model: &SplatModel) -> Result<()> {
        if self.input_dim() != model.input_dim() || self.output_dim() != model.output_dim() {
            return Err(SplatError::DimensionError(format!(
                "data is R^{} -> R^{} but the model is R^{} -> R^{}",
                self.input_dim(),
                self.output_dim(),
                model.input_dim(),
                model.output_dim()
            )));
        }
        Ok(())
    }
}

/// `(1/n) sum_j |f(x_j) - y_j|^2`.
pub fn ls_loss(model: &SplatModel, data: &Dataset) -> Result<f64> {
    data.check_model(model)?;
    let pred = model.eval_batch(&data.x)?;
    let total: f64 = pred
        .iter()
        .zip(&data.y)
        .map(|(f, y)| (f - y).norm_squared())
        .sum();
    Ok(total / data.len() as f64)
}

/// `dF(x_j) = (2/n)(f(x_j) - y_j)` on the data points, unit weights.
pub fn ls_first_variation(model: &SplatModel, data: &Dataset) -> Result<FirstVariation> {
    data.check_model(model)?;
    let scale = 2.0 / data.len() as f64;
    let values = model
        .eval_batch(&data.x)?
        .into_iter()
        .zip(&data.y)
        .map(|(f, y)| (f - y) * scale)
        .collect();
    FirstVariation::new(data.x.clone(), vec![1.0; data.len()], values)
}

/// Loss and gradients in one pass over the data.
pub fn ls_gradients(model: &SplatModel, data: &Dataset) -> Result<(f64, GradientSet)> {
    data.check_model(model)?;
    let prep = model.prepare()?;
    let inv_n = 1.0 / data.len() as f64;
    let coef = |j: usize, f: &[f64], _lap: &[f64], alpha: &mut [f64], _beta: &mut [f64]| {
        let mut sq = 0.0;
        for ((a, fi), yi) in alpha.iter_mut().zip(f).zip(data.y[j].iter()) {
            let r = fi - yi;
            sq += r * r;
            *a = 2.0 * inv_n * r;
        }
        sq * inv_n
    };
    let acc = accumulate(&prep, &data.x, false, &coef);
    let loss = acc.loss;
    let grads = acc.into_gradients(model)?;
    if !loss.is_finite() {
        return Err(SplatError::non_finite("least-squares loss"));
    }
    Ok((loss, grads))
}
