// SPDX-License-Identifier: Apache-2.0

//! Bures-Wasserstein geometry of splats.
//!
//! A splat density `rho_{A,b}` is the law of `A Z + b` with `Z ~ rho`. For a
//! rotation-invariant mother (the Gaussian) it depends on `A` only through
//! `A A^T`, so points here are equivalence classes of `(A A^T, b)`. For other
//! mothers the formulas below are the Gaussian ones applied to the same
//! covariances, which is an approximation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SplatError};
use crate::splat::DEFAULT_DET_FLOOR;

/// Eigenvalue floor for symmetric square roots.
pub const SQRT_EIG_FLOOR: f64 = 1e-14;

/// Relative size of a negative eigenvalue tolerated as rounding noise.
const NEG_EIG_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BwPoint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl BwPoint {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::with_det_floor(a, b, DEFAULT_DET_FLOOR)
    }

    pub fn with_det_floor(a: DMatrix<f64>, b: DVector<f64>, floor: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(SplatError::DimensionError(format!(
                "A is {:?} but b has length {}",
                a.shape(),
                b.len()
            )));
        }
        let det = a.determinant();
        if !(det.abs() >= floor) {
            return Err(SplatError::SingularSplat {
                index: 0,
                det,
                floor,
            });
        }
        Ok(BwPoint { a, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `A A^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.a * self.a.transpose()
    }
}

/// The affine map `x -> M x + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x + &self.c
    }
}

fn check_dims(p: &BwPoint, q: &BwPoint) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(SplatError::DimensionError(format!(
            "points live in R^{} and R^{}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax();
    if let Some(bad) = eig
        .eigenvalues
        .iter()
        .find(|&&l| !l.is_finite() || l < -NEG_EIG_TOL * scale.max(1.0))
    {
        return Err(SplatError::NonPsdIntermediate(format!(
            "eigenvalue {bad:e} in symmetric square root"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(SQRT_EIG_FLOOR).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// 2-Wasserstein distance between `rho_{A,b}` and `rho_{R,s}`:
/// `W2^2 = |b - s|^2 + |A|_F^2 + |R|_F^2 - 2 |A^T R|_*`.
pub fn bw_distance(p: &BwPoint, q: &BwPoint) -> Result<f64> {
    check_dims(p, q)?;
    let nuclear: f64 = (p.a.transpose() * &q.a).singular_values().sum();
    let sq = (&p.b - &q.b).norm_squared() + p.a.norm_squared() + q.a.norm_squared()
        - 2.0 * nuclear;
    Ok(sq.max(0.0).sqrt())
}

/// Optimal transport map from `p` to `q`:
/// `M = S^{-1} (S Sigma_q S)^{1/2} S^{-1}` with `S = (A_p A_p^T)^{1/2}`, and
/// `c = b_q - M b_p`.
pub fn bw_transport_map(p: &BwPoint, q: &BwPoint) -> Result<AffineMap> {
    check_dims(p, q)?;
    let s = sym_sqrt(&p.covariance())?;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| SplatError::NonPsdIntermediate("covariance square root is singular".into()))?;
    let inner = sym_sqrt(&(&s * q.covariance() * &s))?;
    let m = &s_inv * inner * &s_inv;
    let m = (&m + m.transpose()) * 0.5;
    let c = &q.b - &m * &p.b;
    Ok(AffineMap { m, c })
}

/// Point at time `t` on the geodesic from `p` to `q`:
/// `A_t = ((1-t) I + t M) A_p`, `b_t = (1-t) b_p + t b_q`.
pub fn bw_geodesic(p: &BwPoint, q: &BwPoint, t: f64) -> Result<BwPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(SplatError::InvalidArgument(format!(
            "geodesic time must lie in [0, 1], got {t}"
        )));
    }
    let map = bw_transport_map(p, q)?;
    let d = p.dim();
    let step = DMatrix::identity(d, d) * (1.0 - t) + &map.m * t;
    Ok(BwPoint {
        a: step * &p.a,
        b: &p.b * (1.0 - t) + &q.b * t,
    })
}
