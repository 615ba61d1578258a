// SPDX-License-Identifier: Apache-2.0

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Result, SplatError};

/// Monte Carlo collocation on the unit cube `[0,1]^d`: interior points with
/// forcing values, boundary points with boundary data.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<DVector<f64>>,
    pub forcing: Vec<f64>,
    pub boundary: Vec<DVector<f64>>,
    pub boundary_values: Vec<f64>,
    /// Lebesgue measure of the domain; interior weights are `volume / n_int`.
    pub volume: f64,
    /// Multiplier on the boundary term of composite losses.
    pub boundary_weight: f64,
}

impl CollocationSet {
    /// Uniform interior points in the open cube and uniform points on its
    /// faces. Forcing and boundary values start at zero.
    pub fn sample<R: Rng + ?Sized>(
        d: usize,
        n_int: usize,
        n_bdy: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d == 0 || n_int == 0 {
            return Err(SplatError::InvalidArgument(
                "collocation needs d >= 1 and at least one interior point".into(),
            ));
        }
        let open = |rng: &mut R| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let interior: Vec<_> = (0..n_int)
            .map(|_| DVector::from_fn(d, |_, _| open(rng)))
            .collect();
        let boundary: Vec<_> = (0..n_bdy)
            .map(|_| {
                let face = rng.random_range(0..2 * d);
                let mut z = DVector::from_fn(d, |_, _| rng.random::<f64>());
                z[face / 2] = (face % 2) as f64;
                z
            })
            .collect();
        Ok(CollocationSet {
            forcing: vec![0.0; n_int],
            boundary_values: vec![0.0; n_bdy],
            interior,
            boundary,
            volume: 1.0,
            boundary_weight: 1.0,
        })
    }

    /// Explicit point sets on the unit cube.
    pub fn from_points(
        interior: Vec<DVector<f64>>,
        boundary: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let set = CollocationSet {
            forcing: vec![0.0; interior.len()],
            boundary_values: vec![0.0; boundary.len()],
            interior,
            boundary,
            volume: 1.0,
            boundary_weight: 1.0,
        };
        set.check()?;
        Ok(set)
    }

    pub fn with_forcing(mut self, g: impl Fn(&DVector<f64>) -> f64) -> Self {
        self.forcing = self.interior.iter().map(g).collect();
        self
    }

    pub fn with_boundary_values(mut self, u: impl Fn(&DVector<f64>) -> f64) -> Self {
        self.boundary_values = self.boundary.iter().map(u).collect();
        self
    }

    pub fn with_boundary_weight(mut self, w: f64) -> Self {
        self.boundary_weight = w;
        self
    }

    pub fn dim(&self) -> usize {
        self.interior[0].len()
    }

    pub fn interior_weight(&self) -> f64 {
        self.volume / self.interior.len() as f64
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.interior.is_empty() {
            return Err(SplatError::InvalidArgument("no interior points".into()));
        }
        let d = self.interior[0].len();
        if self.interior.iter().chain(&self.boundary).any(|x| x.len() != d) {
            return Err(SplatError::DimensionError(
                "collocation points have inconsistent dimensions".into(),
            ));
        }
        if self.forcing.len() != self.interior.len()
            || self.boundary_values.len() != self.boundary.len()
        {
            return Err(SplatError::DimensionError(
                "collocation values do not match the point counts".into(),
            ));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.forcing) || !finite(&self.boundary_values) {
            return Err(SplatError::non_finite("collocation data"));
        }
        Ok(())
    }
}
