// SPDX-License-Identifier: Apache-2.0

//! Wasserstein-Fisher-Rao parameter gradients.
//!
//! Given the first variation `dF` of a loss at a weighted point set, the
//! per-splat gradients are integrals of `dF` against the splat density and its
//! parameter derivatives:
//!
//! ```text
//! g_v  =  sum_j w_j dF(x_j) rho_i(x_j)
//! g_A  = -sum_j w_j <dF(x_j), v_i> (I + grad log rho_i(x_j) (x_j - b_i)^T) A_i^{-T} rho_i(x_j)
//! g_b  = -sum_j w_j <dF(x_j), v_i> grad log rho_i(x_j) rho_i(x_j)
//! g_fr =  sum_j w_j <dF(x_j), v_i> rho_i(x_j)  -  (same, averaged over splats by mass)
//! ```
//!
//! These are gradients per unit mass: the Euclidean derivative of the loss
//! with respect to splat `i`'s parameters is `m_i` times the Wasserstein
//! component, and the derivative with respect to `m_i` is the uncentered
//! Fisher-Rao integral.
//!
//! Losses involving `Lap f` (physics-informed fitting) pair part of their
//! first variation with `Lap rho_i` instead of `rho_i`, which moves the
//! Laplacian onto the splat where it has a closed form. [`FirstVariation`]
//! carries that second channel in `laplacian_values`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SplatError};
use crate::par;
use crate::splat::{Prepared, SplatModel};

/// First variation of a loss, sampled at a weighted point set representing
/// the base measure.
#[derive(Clone, Debug)]
pub struct FirstVariation {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    /// `dF(x_j)`, paired with `rho_i(x_j)`.
    pub values: Vec<DVector<f64>>,
    /// Optional part paired with `Lap rho_i(x_j)`.
    pub laplacian_values: Option<Vec<DVector<f64>>>,
}

impl FirstVariation {
    pub fn new(
        points: Vec<DVector<f64>>,
        weights: Vec<f64>,
        values: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let fv = FirstVariation {
            points,
            weights,
            values,
            laplacian_values: None,
        };
        fv.check()?;
        Ok(fv)
    }

    /// Samples `delta_f` at the points.
    pub fn from_fn(
        points: Vec<DVector<f64>>,
        weights: Vec<f64>,
        delta_f: impl Fn(&DVector<f64>) -> DVector<f64>,
    ) -> Result<Self> {
        let values = points.iter().map(&delta_f).collect();
        Self::new(points, weights, values)
    }

    pub fn with_laplacian_values(mut self, lap: Vec<DVector<f64>>) -> Result<Self> {
        self.laplacian_values = Some(lap);
        self.check()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(SplatError::InvalidArgument(
                "first variation needs at least one point".into(),
            ));
        }
        if self.weights.len() != n || self.values.len() != n {
            return Err(SplatError::DimensionError(format!(
                "{n} points but {} weights and {} values",
                self.weights.len(),
                self.values.len()
            )));
        }
        if let Some(lap) = &self.laplacian_values {
            if lap.len() != n {
                return Err(SplatError::DimensionError(format!(
                    "{n} points but {} Laplacian-paired values",
                    lap.len()
                )));
            }
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(SplatError::InvalidArgument(format!(
                "weights must be nonnegative, got {w}"
            )));
        }
        Ok(())
    }
}

/// Gradient record for one splat.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGradient {
    pub v: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Centered Fisher-Rao scalar.
    pub fr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub splats: Vec<SplatGradient>,
}

/// A parameter block of every splat.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    V,
    A,
    B,
    M,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::V, Block::A, Block::B, Block::M];

    pub fn name(&self) -> &'static str {
        match self {
            Block::V => "v",
            Block::A => "A",
            Block::B => "b",
            Block::M => "m",
        }
    }
}

impl GradientSet {
    pub fn zeros(model: &SplatModel) -> Self {
        let (d, p) = (model.input_dim(), model.output_dim());
        GradientSet {
            splats: (0..model.len())
                .map(|_| SplatGradient {
                    v: DVector::zeros(p),
                    a: DMatrix::zeros(d, d),
                    b: DVector::zeros(d),
                    fr: 0.0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    /// `sum_i m_i g_fr_i`; zero up to rounding for every set produced here.
    pub fn fr_mass_moment(&self, model: &SplatModel) -> f64 {
        self.splats
            .iter()
            .zip(&model.splats)
            .map(|(g, s)| s.mass * g.fr)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.splats.iter().all(|g| {
            g.fr.is_finite()
                && g.v.iter().all(|x| x.is_finite())
                && g.a.iter().all(|x| x.is_finite())
                && g.b.iter().all(|x| x.is_finite())
        })
    }

    /// Entrywise `self * scale + other`.
    pub fn scaled_add(&self, scale: f64, other: &GradientSet) -> GradientSet {
        GradientSet {
            splats: self
                .splats
                .iter()
                .zip(&other.splats)
                .map(|(a, b)| SplatGradient {
                    v: &a.v * scale + &b.v,
                    a: &a.a * scale + &b.a,
                    b: &a.b * scale + &b.b,
                    fr: a.fr * scale + b.fr,
                })
                .collect(),
        }
    }

    /// Block values flattened per splat (`A` row-major), in the units of
    /// a Euclidean derivative of the loss: `v`, `A`, `b` are multiplied by the
    /// splat mass, `m` is the centered Fisher-Rao scalar.
    pub fn euclidean_block(&self, model: &SplatModel, block: Block) -> Vec<Vec<f64>> {
        self.splats
            .iter()
            .zip(&model.splats)
            .map(|(g, s)| match block {
                Block::V => g.v.iter().map(|x| x * s.mass).collect(),
                Block::A => row_major(&g.a).into_iter().map(|x| x * s.mass).collect(),
                Block::B => g.b.iter().map(|x| x * s.mass).collect(),
                Block::M => vec![g.fr],
            })
            .collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect()
}

/// Raw per-splat sums: `[g_v (p) | g_A (d*d, row-major) | g_b (d) | raw_fr]`.
#[derive(Clone, Debug)]
pub(crate) struct Accum {
    pub stride: usize,
    pub data: Vec<f64>,
    pub loss: f64,
}

impl Accum {
    fn new(k: usize, d: usize, p: usize) -> Self {
        let stride = p + d * d + d + 1;
        Accum {
            stride,
            data: vec![0.0; k * stride],
            loss: 0.0,
        }
    }

    pub fn add(mut self, other: Accum) -> Accum {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        self.loss += other.loss;
        self
    }

    /// Splits into gradients and centers the Fisher-Rao component.
    pub fn into_gradients(self, model: &SplatModel) -> Result<GradientSet> {
        let (d, p) = (model.input_dim(), model.output_dim());
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(SplatError::non_finite("splat gradients"));
        }
        let mut splats = Vec::with_capacity(model.len());
        let mut fr_mean = 0.0;
        let total_mass = model.total_mass();
        for (i, s) in model.splats.iter().enumerate() {
            let row = &self.data[i * self.stride..(i + 1) * self.stride];
            let raw_fr = row[p + d * d + d];
            if total_mass > 0.0 {
                fr_mean += s.mass / total_mass * raw_fr;
            }
            splats.push(SplatGradient {
                v: DVector::from_column_slice(&row[..p]),
                a: DMatrix::from_row_slice(d, d, &row[p..p + d * d]),
                b: DVector::from_column_slice(&row[p + d * d..p + d * d + d]),
                fr: raw_fr,
            });
        }
        for g in &mut splats {
            g.fr -= fr_mean;
        }
        Ok(GradientSet { splats })
    }
}

/// Model-dependent first variation: for point `j`, given `f(x_j)` and
/// `Lap f(x_j)`, writes the value-paired coefficient `alpha` and the
/// Laplacian-paired coefficient `beta` (both already multiplied by the point
/// weight) and returns the point's contribution to the loss.
pub(crate) trait PointCoefficients: Sync {
    fn coefficients(
        &self,
        j: usize,
        f: &[f64],
        lap_f: &[f64],
        alpha: &mut [f64],
        beta: &mut [f64],
    ) -> f64;
}

impl<F> PointCoefficients for F
where
    F: Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]) -> f64 + Sync,
{
    fn coefficients(
        &self,
        j: usize,
        f: &[f64],
        lap_f: &[f64],
        alpha: &mut [f64],
        beta: &mut [f64],
    ) -> f64 {
        self(j, f, lap_f, alpha, beta)
    }
}

/// One pass over `points`: evaluates the model (and its Laplacian when
/// `with_laplacian`), asks `coef` for the first variation at each point and
/// accumulates the raw gradient integrals.
pub(crate) fn accumulate(
    prep: &Prepared,
    points: &[DVector<f64>],
    with_laplacian: bool,
    coef: &dyn PointCoefficients,
) -> Accum {
    let (d, p, k) = (prep.d, prep.p, prep.splats.len());
    let map = |range: std::ops::Range<usize>| -> Accum {
        let mut acc = Accum::new(k, d, p);
        let stride = acc.stride;
        let mut ws = prep.workspace();
        let mut rho = vec![0.0; k];
        let mut lap_factor = vec![0.0; k];
        let mut ys = vec![0.0; k * d];
        let mut hs = vec![0.0; k * d];
        let mut f = vec![0.0; p];
        let mut lap_f = vec![0.0; p];
        let mut alpha = vec![0.0; p];
        let mut beta = vec![0.0; p];
        let mut g = vec![0.0; d];
        let mut w = vec![0.0; d];
        for j in range {
            let x = points[j].as_slice();
            f.iter_mut().for_each(|v| *v = 0.0);
            lap_f.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k {
                let r = prep.local(i, x, &mut ws);
                rho[i] = r;
                ys[i * d..(i + 1) * d].copy_from_slice(&ws.y);
                hs[i * d..(i + 1) * d].copy_from_slice(&ws.h);
                let s = &prep.splats[i];
                let c = s.mass * r;
                for (fo, v) in f.iter_mut().zip(&s.v) {
                    *fo += c * v;
                }
                if with_laplacian {
                    let lf = prep.laplacian_factor(i, &ws);
                    lap_factor[i] = lf;
                    for (lo, v) in lap_f.iter_mut().zip(&s.v) {
                        *lo += c * lf * v;
                    }
                }
            }
            alpha.iter_mut().for_each(|v| *v = 0.0);
            beta.iter_mut().for_each(|v| *v = 0.0);
            acc.loss += coef.coefficients(j, &f, &lap_f, &mut alpha, &mut beta);

            for i in 0..k {
                let r = rho[i];
                if r == 0.0 {
                    continue;
                }
                let s = &prep.splats[i];
                let y = &ys[i * d..(i + 1) * d];
                let h = &hs[i * d..(i + 1) * d];
                let out = &mut acc.data[i * stride..(i + 1) * stride];
                let a_s: f64 = alpha.iter().zip(&s.v).map(|(a, v)| a * v).sum();
                let (b_s, sfac) = if with_laplacian {
                    (
                        beta.iter().zip(&s.v).map(|(b, v)| b * v).sum::<f64>(),
                        lap_factor[i],
                    )
                } else {
                    (0.0, 0.0)
                };
                let lap_rho = r * sfac;
                for c in 0..p {
                    out[c] += alpha[c] * r + beta[c] * lap_rho;
                }
                // Combined scalar weight on rho_i: also the raw Fisher-Rao integrand.
                let c1 = (a_s + b_s * sfac) * r;
                // d rho / dA = rho (h y^T - A^{-T})
                // d Lap rho / dA = s * d rho/dA + 2 rho (P A^{-T} - g y^T - h w^T),
                //   with g = P h and w = A^{-1} h.
                let ga = &mut out[p..p + d * d];
                if b_s != 0.0 {
                    for rr in 0..d {
                        let mut gg = 0.0;
                        let mut ww = 0.0;
                        for cc in 0..d {
                            gg += s.prec[rr * d + cc] * h[cc];
                            ww += s.a_inv[rr * d + cc] * h[cc];
                        }
                        g[rr] = gg;
                        w[rr] = ww;
                    }
                    let c2 = 2.0 * b_s * r;
                    for rr in 0..d {
                        for cc in 0..d {
                            ga[rr * d + cc] += c1 * (h[rr] * y[cc] - s.a_inv[cc * d + rr])
                                + c2 * (s.prec_a_inv_t[rr * d + cc] - g[rr] * y[cc] - h[rr] * w[cc]);
                        }
                    }
                    let gb = &mut out[p + d * d..p + d * d + d];
                    for rr in 0..d {
                        gb[rr] += c1 * h[rr] - c2 * g[rr];
                    }
                } else {
                    for rr in 0..d {
                        for cc in 0..d {
                            ga[rr * d + cc] += c1 * (h[rr] * y[cc] - s.a_inv[cc * d + rr]);
                        }
                    }
                    // d rho / db = rho h
                    let gb = &mut out[p + d * d..p + d * d + d];
                    for rr in 0..d {
                        gb[rr] += c1 * h[rr];
                    }
                }
                out[stride - 1] += c1;
            }
        }
        acc
    };
    par::chunked_reduce(points.len(), map, Accum::add).unwrap_or_else(|| Accum::new(k, d, p))
}

/// Fisher-Rao and Wasserstein gradients of a loss given its first variation.
pub fn wfr_gradients(model: &SplatModel, fv: &FirstVariation) -> Result<GradientSet> {
    fv.check()?;
    let (d, p) = (model.input_dim(), model.output_dim());
    if fv.points.iter().any(|x| x.len() != d) || fv.values.iter().any(|v| v.len() != p) {
        return Err(SplatError::DimensionError(format!(
            "first variation must have points in R^{d} and values in R^{p}"
        )));
    }
    let finite = |vs: &[DVector<f64>]| vs.iter().all(|v| v.iter().all(|x| x.is_finite()));
    if !finite(&fv.values) || !fv.weights.iter().all(|w| w.is_finite()) {
        return Err(SplatError::non_finite("first variation values"));
    }
    let with_lap = match &fv.laplacian_values {
        Some(lap) => {
            model.mother().require_laplacian()?;
            if lap.iter().any(|v| v.len() != p) {
                return Err(SplatError::DimensionError(
                    "Laplacian-paired values must be in R^p".into(),
                ));
            }
            if !finite(lap) {
                return Err(SplatError::non_finite("first variation values"));
            }
            true
        }
        None => false,
    };
    let prep = model.prepare()?;
    let coef = |j: usize, _f: &[f64], _l: &[f64], alpha: &mut [f64], beta: &mut [f64]| {
        let w = fv.weights[j];
        for (a, v) in alpha.iter_mut().zip(fv.values[j].iter()) {
            *a = w * v;
        }
        if let Some(lap) = &fv.laplacian_values {
            for (b, v) in beta.iter_mut().zip(lap[j].iter()) {
                *b = w * v;
            }
        }
        0.0
    };
    accumulate(&prep, &fv.points, with_lap, &coef).into_gradients(model)
}

/// Gradients of a point-particle (Dirac) splat measure at `(v, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleGradient {
    pub v: DVector<f64>,
    pub x: DVector<f64>,
    pub fr: f64,
}

/// Particle-limit gradients at `(v, x)`.
///
/// `mean_pairing` is the population average `E[<dF(X), V>]` used to center
/// the Fisher-Rao component. The spatial Jacobian of `dF` (shape `p x d`) is
/// taken from `jacobian` when supplied and by central differences otherwise.
/// The spatial component is `v^T D_x dF(x)`, the limit of the `b` gradient of
/// a splat shrinking onto `x`.
pub fn particle_gradients(
    v: &DVector<f64>,
    x: &DVector<f64>,
    delta_f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    jacobian: Option<&dyn Fn(&DVector<f64>) -> DMatrix<f64>>,
    mean_pairing: f64,
) -> Result<ParticleGradient> {
    let value = delta_f(x);
    if value.len() != v.len() {
        return Err(SplatError::DimensionError(format!(
            "dF has {} components but v has {}",
            value.len(),
            v.len()
        )));
    }
    let jac = match jacobian {
        Some(j) => j(x),
        None => {
            let h = 1e-6;
            let mut jac = DMatrix::zeros(value.len(), x.len());
            for c in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                jac.set_column(c, &((delta_f(&xp) - delta_f(&xm)) / (2.0 * h)));
            }
            jac
        }
    };
    if jac.shape() != (v.len(), x.len()) {
        return Err(SplatError::DimensionError(format!(
            "Jacobian has shape {:?}, expected ({}, {})",
            jac.shape(),
            v.len(),
            x.len()
        )));
    }
    let gx = jac.transpose() * v;
    let fr = value.dot(v) - mean_pairing;
    let out = ParticleGradient { v: value, x: gx, fr };
    if !out.fr.is_finite() || out.v.iter().chain(out.x.iter()).any(|a| !a.is_finite()) {
        return Err(SplatError::non_finite("particle gradients"));
    }
    Ok(out)
}

/// Central-difference gradient of `loss` with respect to one parameter block,
/// flattened per splat (`A` row-major). No step is taken on other blocks.
pub fn fd_gradient_oracle(
    model: &SplatModel,
    loss: &dyn Fn(&SplatModel) -> f64,
    block: Block,
    step: f64,
) -> Vec<Vec<f64>> {
    let d = model.input_dim();
    let mut out = Vec::with_capacity(model.len());
    let mut work = model.clone();
    for i in 0..model.len() {
        let count = match block {
            Block::V => model.output_dim(),
            Block::A => d * d,
            Block::B => d,
            Block::M => 1,
        };
        let mut g = Vec::with_capacity(count);
        for e in 0..count {
            let probe = |delta: f64, m: &mut SplatModel| {
                let s = &mut m.splats[i];
                match block {
                    Block::V => s.v[e] += delta,
                    Block::A => s.a[(e / d, e % d)] += delta,
                    Block::B => s.b[e] += delta,
                    Block::M => s.mass += delta,
                }
            };
            probe(step, &mut work);
            let up = loss(&work);
            work.splats[i] = model.splats[i].clone();
            probe(-step, &mut work);
            let down = loss(&work);
            work.splats[i] = model.splats[i].clone();
            g.push((up - down) / (2.0 * step));
        }
        out.push(g);
    }
    out
}

/// Projects raw mass derivatives onto mass-preserving directions, giving the
/// quantity comparable with the centered Fisher-Rao gradient.
pub fn center_mass_derivatives(model: &SplatModel, raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total = model.total_mass();
    let mean: f64 = raw
        .iter()
        .zip(&model.splats)
        .map(|(g, s)| s.mass / total * g[0])
        .sum();
    raw.iter().map(|g| vec![g[0] - mean]).collect()
}

/// `max |a - b| / max |b|` over all entries; `b` is the reference.
pub fn max_relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            diff = diff.max((x - y).abs());
            scale = scale.max(y.abs());
        }
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compares analytic gradients with the finite-difference oracle for one
/// block, returning the max relative error.
pub fn oracle_error(
    model: &SplatModel,
    grads: &GradientSet,
    loss: &dyn Fn(&SplatModel) -> f64,
    block: Block,
    step: f64,
) -> f64 {
    let analytic = grads.euclidean_block(model, block);
    let mut numeric = fd_gradient_oracle(model, loss, block, step);
    if block == Block::M {
        numeric = center_mass_derivatives(model, &numeric);
    }
    max_relative_error(&analytic, &numeric)
}
