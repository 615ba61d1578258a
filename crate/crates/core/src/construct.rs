// SPDX-License-Identifier: Apache-2.0

//! Constructive approximation by random kernel sums: sample centers
//! `x_i ~ U([0,1]^d)` and place splats `v_i = f(x_i)`, `b_i = x_i`,
//! `A_i = eps I`, `m_i = 1/k`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SplatError};
use crate::mother::MotherSplat;
use crate::splat::{Splat, SplatModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstructionSpec {
    pub d: usize,
    pub eps: f64,
    pub k: usize,
    pub seed: u64,
}

impl ConstructionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 || !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(SplatError::InvalidArgument(format!(
                "construction needs d >= 1, k >= 1 and eps > 0, got d={} k={} eps={}",
                self.d, self.k, self.eps
            )));
        }
        Ok(())
    }
}

pub fn build_construction(
    spec: &ConstructionSpec,
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<SplatModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mass = 1.0 / spec.k as f64;
    let a = DMatrix::identity(spec.d, spec.d) * spec.eps;
    let splats: Vec<Splat> = (0..spec.k)
        .map(|_| {
            let x = DVector::from_fn(spec.d, |_, _| rng.random::<f64>());
            Splat::new(f(&x), a.clone(), x, mass)
        })
        .collect();
    let p = splats[0].v.len();
    SplatModel::new(MotherSplat::Gaussian, spec.d, p, splats)
}

/// Tensor grid with `points_per_axis` equispaced points per axis on `[0,1]^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<DVector<f64>> {
        let n = self.points_per_axis;
        let coord = |i: usize| if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
        let total = n.pow(self.d as u32);
        (0..total)
            .map(|mut idx| {
                DVector::from_fn(self.d, |_, _| {
                    let c = coord(idx % n);
                    idx /= n;
                    c
                })
            })
            .collect()
    }
}

/// Largest Euclidean error `|f_model(x) - f(x)|` over the grid.
pub fn sup_error(
    model: &SplatModel,
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    grid: &GridSpec,
) -> Result<f64> {
    if grid.d != model.input_dim() {
        return Err(SplatError::DimensionError(format!(
            "grid is on [0,1]^{} but the model is on R^{}",
            grid.d,
            model.input_dim()
        )));
    }
    let points = grid.points();
    let values = model.eval_batch(&points)?;
    let mut worst: f64 = 0.0;
    for (x, v) in points.iter().zip(&values) {
        let target = f(x);
        if target.len() != v.len() {
            return Err(SplatError::DimensionError(format!(
                "target has {} outputs, model has {}",
                target.len(),
                v.len()
            )));
        }
        worst = worst.max((v - target).norm());
    }
    Ok(worst)
}
