// SPDX-License-Identifier: Apache-2.0

//! Allen-Cahn residual `eps^2 Lap u + u - u^3 - g` on interior points plus a
//! least-squares boundary term.

use super::{require_scalar_field, CollocationSet};
use crate::error::{Result, SplatError};
use crate::splat::SplatModel;
use crate::wfr::{accumulate, GradientSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AllenCahnLoss {
    pub total: f64,
    pub interior: f64,
    pub boundary: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SplatError::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    Ok(())
}

fn finish(interior: f64, boundary: f64) -> Result<AllenCahnLoss> {
    let total = interior + boundary;
    if !total.is_finite() {
        return Err(SplatError::non_finite("Allen-Cahn loss"));
    }
    Ok(AllenCahnLoss {
        total,
        interior,
        boundary,
    })
}

/// Interior term `(1/n_int) sum R^2`, boundary term
/// `w_b (1/n_bdy) sum (u - u*)^2`.
pub fn allen_cahn_loss(model: &SplatModel, coll: &CollocationSet, eps: f64) -> Result<AllenCahnLoss> {
    require_scalar_field(model, coll)?;
    coll.check()?;
    check_eps(eps)?;
    let eps2 = eps * eps;
    let (val, lap) = model.eval_batch_with_laplacian(&coll.interior)?;
    let interior = val
        .iter()
        .zip(&lap)
        .zip(&coll.forcing)
        .map(|((u, l), g)| {
            let u = u[0];
            (eps2 * l[0] + u - u * u * u - g).powi(2)
        })
        .sum::<f64>()
        / coll.interior.len() as f64;
    let boundary = if coll.boundary.is_empty() {
        0.0
    } else {
        let ub = model.eval_batch(&coll.boundary)?;
        coll.boundary_weight
            * ub.iter()
                .zip(&coll.boundary_values)
                .map(|(u, t)| (u[0] - t).powi(2))
                .sum::<f64>()
            / coll.boundary.len() as f64
    };
    finish(interior, boundary)
}

/// The interior first variation applies the adjoint linearization
/// `eps^2 Lap + 1 - 3u^2` to the residual: the value channel carries
/// `(2/n) R (1 - 3u^2)` and the Laplacian channel `(2/n) R eps^2`.
pub fn allen_cahn_loss_and_gradients(
    model: &SplatModel,
    coll: &CollocationSet,
    eps: f64,
) -> Result<(AllenCahnLoss, GradientSet)> {
    require_scalar_field(model, coll)?;
    coll.check()?;
    check_eps(eps)?;
    let prep = model.prepare()?;
    let eps2 = eps * eps;
    let wi = 1.0 / coll.interior.len() as f64;
    let interior_coef = |j: usize, f: &[f64], lap: &[f64], alpha: &mut [f64], beta: &mut [f64]| {
        let u = f[0];
        let r = eps2 * lap[0] + u - u * u * u - coll.forcing[j];
        alpha[0] = 2.0 * wi * r * (1.0 - 3.0 * u * u);
        beta[0] = 2.0 * wi * r * eps2;
        wi * r * r
    };
    let mut acc = accumulate(&prep, &coll.interior, true, &interior_coef);
    let interior = acc.loss;
    let mut boundary = 0.0;
    if !coll.boundary.is_empty() {
        let wb = coll.boundary_weight / coll.boundary.len() as f64;
        let boundary_coef = |j: usize, f: &[f64], _l: &[f64], alpha: &mut [f64], _b: &mut [f64]| {
            let r = f[0] - coll.boundary_values[j];
            alpha[0] = 2.0 * wb * r;
            wb * r * r
        };
        let bacc = accumulate(&prep, &coll.boundary, false, &boundary_coef);
        boundary = bacc.loss;
        acc = acc.add(bacc);
    }
    let loss = finish(interior, boundary)?;
    Ok((loss, acc.into_gradients(model)?))
}

pub fn allen_cahn_gradients(model: &SplatModel, coll: &CollocationSet, eps: f64) -> Result<GradientSet> {
    allen_cahn_loss_and_gradients(model, coll, eps).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_model;
    use crate::wfr::{oracle_error, Block};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interface(eps: f64) -> impl Fn(&nalgebra::DVector<f64>) -> f64 {
        move |x| ((x[0] - 0.5) / (2f64.sqrt() * eps)).tanh()
    }

    #[test]
    fn zero_solution_with_zero_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = random_model(&mut rng, 3, 2, 1);
        m.splats.iter_mut().for_each(|s| s.v.fill(0.0));
        let c = CollocationSet::sample(2, 64, 32, &mut rng).unwrap();
        let l = allen_cahn_loss(&m, &c, 0.1).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn interface_profile_solves_the_equation() {
        // u'' = (u^3 - u) / eps^2 for the tanh profile, checked by differences.
        let eps = 0.1;
        let u = |t: f64| ((t - 0.5) / (2f64.sqrt() * eps)).tanh();
        for t in [0.3, 0.45, 0.5, 0.62] {
            let h = 1e-4;
            let upp = (u(t + h) - 2.0 * u(t) + u(t - h)) / (h * h);
            let r = eps * eps * upp + u(t) - u(t).powi(3);
            assert!(r.abs() < 1e-6, "residual {r} at {t}");
        }
    }

    #[test]
    fn gradients_match_oracle() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(20 + seed);
            let m = random_model(&mut rng, 2, 2, 1);
            let c = CollocationSet::sample(2, 64, 32, &mut rng)
                .unwrap()
                .with_boundary_values(interface(0.1))
                .with_forcing(|x| 0.3 * x[1]);
            let (loss, g) = allen_cahn_loss_and_gradients(&m, &c, 0.1).unwrap();
            let direct = allen_cahn_loss(&m, &c, 0.1).unwrap();
            assert!((loss.total - direct.total).abs() <= 1e-12 * direct.total);
            assert!((loss.total - loss.interior - loss.boundary).abs() <= 1e-15);
            let f = |mm: &SplatModel| allen_cahn_loss(mm, &c, 0.1).unwrap().total;
            for block in Block::ALL {
                let err = oracle_error(&m, &g, &f, block, 1e-5);
                assert!(err <= 1e-4, "seed {seed} block {} err {err}", block.name());
            }
        }
    }

    #[test]
    fn rejects_bad_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 2, 1, 1);
        let c = CollocationSet::sample(1, 8, 2, &mut rng).unwrap();
        assert!(allen_cahn_loss(&m, &c, 0.0).is_err());
    }
}
