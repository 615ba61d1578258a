// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mother::MotherSplat;
use crate::splat::{Splat, SplatModel};

/// Well-conditioned random model with splats centered in the unit cube.
pub(crate) fn random_model(rng: &mut ChaCha8Rng, k: usize, d: usize, p: usize) -> SplatModel {
    let splats = (0..k)
        .map(|_| {
            let v = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            let a = DMatrix::from_fn(d, d, |r, c| {
                let base = if r == c { 0.4 } else { 0.0 };
                base + rng.random_range(-0.1..0.1)
            });
            let b = DVector::from_fn(d, |_, _| rng.random_range(0.0..1.0));
            Splat::new(v, a, b, rng.random_range(0.1..1.0))
        })
        .collect();
    SplatModel::new(MotherSplat::Gaussian, d, p, splats).unwrap()
}

pub(crate) fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(0.0..1.0)))
        .collect()
}
