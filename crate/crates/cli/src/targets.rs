// SPDX-License-Identifier: Apache-2.0

//! Named target functions and synthetic data.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use splatreg_core::baselines::uniform_grid;
use splatreg_core::construct::GridSpec;
use splatreg_core::Dataset;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("unknown target `{0}` (known: {KNOWN})")]
pub struct UnknownTarget(pub String);

const KNOWN: &str = "fig1, sawtooth, sin2pi, linear, sin_cos_2d";

#[derive(Clone, Copy, Debug)]
pub struct Target {
    pub name: &'static str,
    pub d: usize,
    f: fn(&[f64]) -> f64,
}

impl Target {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn eval_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (self.f)(x.as_slice()))
    }
}

fn fig1(x: &[f64]) -> f64 {
    (20.0 * PI * x[0] * (2.0 - x[0])).sin()
}

fn sawtooth(x: &[f64]) -> f64 {
    2.0 * ((6.0 * x[0]) % 1.0) - 1.0
}

fn sin2pi(x: &[f64]) -> f64 {
    (2.0 * PI * x[0]).sin()
}

fn linear(x: &[f64]) -> f64 {
    x[0]
}

fn sin_cos_2d(x: &[f64]) -> f64 {
    (3.0 * PI * x[0].sqrt()).sin() * (3.0 * PI * x[1]).cos()
}

pub fn lookup(name: &str) -> Result<Target, UnknownTarget> {
    let (d, f): (usize, fn(&[f64]) -> f64) = match name {
        "fig1" => (1, fig1),
        "sawtooth" => (1, sawtooth),
        "sin2pi" => (1, sin2pi),
        "linear" => (1, linear),
        "sin_cos_2d" => (2, sin_cos_2d),
        _ => return Err(UnknownTarget(name.to_string())),
    };
    let name = KNOWN
        .split(", ")
        .find(|k| *k == name)
        .expect("registry and list agree");
    Ok(Target { name, d, f })
}

/// `x_i ~ U([0,1]^d)`, `y_i = f(x_i) + e_i` with `e_i ~ N(0, sigma^2)`.
pub fn gen_data(target: &Target, n: usize, sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(target.d, |_, _| rng.random::<f64>()))
        .collect();
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let y = x
        .iter()
        .map(|xi| {
            let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            DVector::from_element(1, target.eval(xi.as_slice()) + e)
        })
        .collect();
    Dataset::new(x, y).expect("n >= 1")
}

/// Noiseless validation set: 2000 equispaced points in 1D, a 101 x 101 grid
/// in 2D, unless `points` overrides the per-axis count.
pub fn validation_set(target: &Target, points: Option<usize>) -> Dataset {
    let x: Vec<DVector<f64>> = match target.d {
        1 => uniform_grid(points.unwrap_or(2000))
            .into_iter()
            .map(|t| DVector::from_element(1, t))
            .collect(),
        d => GridSpec {
            d,
            points_per_axis: points.unwrap_or(101),
        }
        .points(),
    };
    let y = x.iter().map(|xi| target.eval_vec(xi)).collect();
    Dataset::new(x, y).expect("non-empty grid")
}
