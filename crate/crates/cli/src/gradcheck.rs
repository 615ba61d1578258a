// SPDX-License-Identifier: Apache-2.0

//! Analytic gradients against central differences on random instances.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatreg_core::losses::{
    allen_cahn_loss, allen_cahn_loss_and_gradients, ls_gradients, ls_loss, poisson_loss,
    poisson_loss_and_gradients,
};
use splatreg_core::wfr::oracle_error;
use splatreg_core::{Block, CollocationSet, Dataset, GradientSet, MotherSplat, Splat, SplatModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    LeastSquares,
    Poisson,
    AllenCahn,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::LeastSquares => "ls",
            LossKind::Poisson => "poisson",
            LossKind::AllenCahn => "allen-cahn",
        }
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ls" => Ok(LossKind::LeastSquares),
            "poisson" => Ok(LossKind::Poisson),
            "allen-cahn" => Ok(LossKind::AllenCahn),
            _ => Err(format!("unknown loss `{s}` (expected ls, poisson, allen-cahn or all)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckParams {
    pub seed: u64,
    pub instances: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub d_min: usize,
    pub d_max: usize,
    /// Output dimension bound, least squares only.
    pub p_max: usize,
    pub n: usize,
    pub n_int: usize,
    pub n_bdy: usize,
    pub eps: f64,
    pub fd_step: f64,
}

impl Default for GradcheckParams {
    fn default() -> Self {
        GradcheckParams {
            seed: 0,
            instances: 50,
            k_min: 1,
            k_max: 5,
            d_min: 1,
            d_max: 3,
            p_max: 3,
            n: 10,
            n_int: 64,
            n_bdy: 32,
            eps: 0.1,
            fd_step: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    /// Worst relative error over all instances, per block.
    pub block_errors: Vec<(&'static str, f64)>,
    /// Worst `|sum_i m_i g_fr_i|`.
    pub max_centering: f64,
    pub instances: usize,
}

pub fn random_model(rng: &mut ChaCha8Rng, k: usize, d: usize, p: usize) -> SplatModel {
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
    SplatModel::new(MotherSplat::Gaussian, d, p, splats).expect("well-conditioned random model")
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(0.0..1.0)))
        .collect()
}

fn collocation(rng: &mut ChaCha8Rng, d: usize, params: &GradcheckParams) -> splatreg_core::Result<CollocationSet> {
    Ok(CollocationSet::sample(d, params.n_int, params.n_bdy, rng)?
        .with_forcing(|x| (3.0 * x[0]).sin() - 0.5)
        .with_boundary_values(|x| (2.0 * x[0]).cos())
        .with_boundary_weight(2.0))
}

/// Runs `params.instances` random instances of `kind`.
pub fn check(kind: LossKind, params: &GradcheckParams) -> splatreg_core::Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = [0.0f64; 4];
    let mut max_centering: f64 = 0.0;
    for _ in 0..params.instances {
        let k = rng.random_range(params.k_min.max(1)..=params.k_max.max(params.k_min).max(1));
        let d = rng.random_range(params.d_min.max(1)..=params.d_max.max(params.d_min).max(1));
        let (model, grads, loss): (SplatModel, GradientSet, Box<dyn Fn(&SplatModel) -> f64>) =
            match kind {
                LossKind::LeastSquares => {
                    let p = rng.random_range(1..=params.p_max.max(1));
                    let model = random_model(&mut rng, k, d, p);
                    let x = random_points(&mut rng, params.n, d);
                    let y = (0..params.n)
                        .map(|_| DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)))
                        .collect();
                    let data = Dataset::new(x, y)?;
                    let (_, grads) = ls_gradients(&model, &data)?;
                    (model, grads, Box::new(move |m| ls_loss(m, &data).unwrap_or(f64::NAN)))
                }
                LossKind::Poisson => {
                    let model = random_model(&mut rng, k, d, 1);
                    let coll = collocation(&mut rng, d, params)?;
                    let (_, grads) = poisson_loss_and_gradients(&model, &coll)?;
                    (model, grads, Box::new(move |m| poisson_loss(m, &coll).unwrap_or(f64::NAN)))
                }
                LossKind::AllenCahn => {
                    let model = random_model(&mut rng, k, d, 1);
                    let coll = collocation(&mut rng, d, params)?;
                    let eps = params.eps;
                    let (_, grads) = allen_cahn_loss_and_gradients(&model, &coll, eps)?;
                    (
                        model,
                        grads,
                        Box::new(move |m| {
                            allen_cahn_loss(m, &coll, eps).map(|l| l.total).unwrap_or(f64::NAN)
                        }),
                    )
                }
            };
        for (slot, block) in Block::ALL.iter().enumerate() {
            let e = oracle_error(&model, &grads, &*loss, *block, params.fd_step);
            // NaN must register as a failure.
            worst[slot] = if e.is_nan() { f64::INFINITY } else { worst[slot].max(e) };
        }
        max_centering = max_centering.max(grads.fr_mass_moment(&model).abs());
    }
    Ok(GradcheckReport {
        block_errors: Block::ALL.iter().map(|b| b.name()).zip(worst).collect(),
        max_centering,
        instances: params.instances,
    })
}
