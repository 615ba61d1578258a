// SPDX-License-Identifier: Apache-2.0

//! Splats and k-splat models.
//!
//! A splat is the pushforward `rho_{A,b}` of the mother density through
//! `x -> A x + b`, weighted by an output vector `v` and a mass `m`. A k-splat
//! model evaluates
//!
//! ```text
//! f(x) = sum_i m_i v_i rho(A_i^{-1}(x - b_i)) |det A_i^{-1}|
//! ```
//!
//! Evaluation goes through [`Prepared`], which caches inverses, precision
//! matrices and normalizers once per model so that inner loops over points do
//! no allocation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::mother::MotherSplat;
use crate::par;

pub const DEFAULT_DET_FLOOR: f64 = 1e-12;
pub const MODEL_DOCUMENT_VERSION: u32 = 1;

/// One mixture atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    pub v: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub mass: f64,
}

impl Splat {
    pub fn new(v: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>, mass: f64) -> Self {
        Splat { v, a, b, mass }
    }

    /// Isotropic splat `A = scale * I`.
    pub fn isotropic(v: DVector<f64>, b: DVector<f64>, scale: f64, mass: f64) -> Self {
        let d = b.len();
        Splat {
            v,
            a: DMatrix::identity(d, d) * scale,
            b,
            mass,
        }
    }

    /// Smallest singular value of `A`.
    pub fn min_singular_value(&self) -> f64 {
        if self.a.nrows() == 1 {
            return self.a[(0, 0)].abs();
        }
        self.a
            .singular_values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// A mother splat together with an ordered list of splats.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatModel {
    mother: MotherSplat,
    d: usize,
    p: usize,
    det_floor: f64,
    pub splats: Vec<Splat>,
}

impl SplatModel {
    pub fn new(mother: MotherSplat, d: usize, p: usize, splats: Vec<Splat>) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(SplatError::DimensionError(format!(
                "input and output dimensions must be positive (d={d}, p={p})"
            )));
        }
        let model = SplatModel {
            mother,
            d,
            p,
            det_floor: DEFAULT_DET_FLOOR,
            splats,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn with_det_floor(mut self, floor: f64) -> Self {
        self.det_floor = floor;
        self
    }

    pub fn mother(&self) -> MotherSplat {
        self.mother
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    pub fn det_floor(&self) -> f64 {
        self.det_floor
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.splats.iter().map(|s| s.mass).sum()
    }

    /// Sets every mass to `1/k`.
    pub fn set_uniform_masses(&mut self) {
        let k = self.splats.len();
        if k > 0 {
            let m = 1.0 / k as f64;
            self.splats.iter_mut().for_each(|s| s.mass = m);
        }
    }

    /// Rescales masses to sum to one. No-op on an empty or massless model.
    pub fn normalize_masses(&mut self) {
        let total = self.total_mass();
        if total > 0.0 && total.is_finite() {
            self.splats.iter_mut().for_each(|s| s.mass /= total);
        }
    }

    fn check_shapes(&self) -> Result<()> {
        for (i, s) in self.splats.iter().enumerate() {
            if s.v.len() != self.p || s.b.len() != self.d || s.a.shape() != (self.d, self.d) {
                return Err(SplatError::DimensionError(format!(
                    "splat {i} has v:{} A:{:?} b:{} but the model is d={} p={}",
                    s.v.len(),
                    s.a.shape(),
                    s.b.len(),
                    self.d,
                    self.p
                )));
            }
            if !(s.mass >= 0.0) {
                return Err(SplatError::InvalidArgument(format!(
                    "splat {i} has negative or NaN mass {}",
                    s.mass
                )));
            }
        }
        Ok(())
    }

    /// Checks shapes, masses and the determinant floor.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        self.prepare().map(|_| ())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        Prepared::new(self)
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.d {
            return Err(SplatError::DimensionError(format!(
                "point has dimension {} but the model expects {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let prep = self.prepare()?;
        let mut out = vec![0.0; self.p];
        prep.eval_into(x.as_slice(), &mut out);
        Ok(DVector::from_vec(out))
    }

    /// Jacobian of `eval` at `x`, shape `p x d`.
    pub fn eval_grad_x(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let prep = self.prepare()?;
        let mut jac = DMatrix::zeros(self.p, self.d);
        let mut ws = prep.workspace();
        for (i, s) in prep.splats.iter().enumerate() {
            let rho = prep.local(i, x.as_slice(), &mut ws);
            if rho == 0.0 {
                continue;
            }
            // grad_x rho_{A,b} = -rho * Sigma^{-1}(x - b)
            for r in 0..self.p {
                let c = -s.mass * s.v[r] * rho;
                for col in 0..self.d {
                    jac[(r, col)] += c * ws.h[col];
                }
            }
        }
        Ok(jac)
    }

    /// Componentwise Laplacian `sum_i m_i v_i Lap(rho_i)(x)`.
    pub fn eval_laplacian(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.mother.require_laplacian()?;
        self.check_point(x)?;
        let prep = self.prepare()?;
        let mut val = vec![0.0; self.p];
        let mut lap = vec![0.0; self.p];
        prep.eval_with_laplacian_into(x.as_slice(), &mut val, &mut lap);
        Ok(DVector::from_vec(lap))
    }

    /// Evaluates at many points. Deterministic and data-parallel.
    pub fn eval_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        for x in xs {
            self.check_point(x)?;
        }
        let prep = self.prepare()?;
        let p = self.p;
        Ok(xs
            .par_iter()
            .with_min_len(par::MIN_POINTS_PER_TASK)
            .map(|x| {
                let mut out = vec![0.0; p];
                prep.eval_into(x.as_slice(), &mut out);
                DVector::from_vec(out)
            })
            .collect())
    }

    /// Values and Laplacians at many points.
    pub fn eval_batch_with_laplacian(
        &self,
        xs: &[DVector<f64>],
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.mother.require_laplacian()?;
        for x in xs {
            self.check_point(x)?;
        }
        let prep = self.prepare()?;
        let p = self.p;
        Ok(xs
            .par_iter()
            .with_min_len(par::MIN_POINTS_PER_TASK)
            .map(|x| {
                let mut val = vec![0.0; p];
                let mut lap = vec![0.0; p];
                prep.eval_with_laplacian_into(x.as_slice(), &mut val, &mut lap);
                (DVector::from_vec(val), DVector::from_vec(lap))
            })
            .unzip())
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            version: MODEL_DOCUMENT_VERSION,
            d: self.d,
            p: self.p,
            mother: self.mother,
            splats: self
                .splats
                .iter()
                .map(|s| SplatRecord {
                    v: s.v.iter().cloned().collect(),
                    a: (0..self.d)
                        .map(|r| (0..self.d).map(|c| s.a[(r, c)]).collect())
                        .collect(),
                    b: s.b.iter().cloned().collect(),
                    m: s.mass,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.version != MODEL_DOCUMENT_VERSION {
            return Err(SplatError::Document(format!(
                "unsupported version {} (expected {MODEL_DOCUMENT_VERSION})",
                doc.version
            )));
        }
        let (d, p) = (doc.d, doc.p);
        let mut splats = Vec::with_capacity(doc.splats.len());
        for (i, rec) in doc.splats.iter().enumerate() {
            if rec.a.len() != d || rec.a.iter().any(|row| row.len() != d) {
                return Err(SplatError::Document(format!("splat {i}: A must be {d}x{d}")));
            }
            let a = DMatrix::from_fn(d, d, |r, c| rec.a[r][c]);
            splats.push(Splat::new(
                DVector::from_vec(rec.v.clone()),
                a,
                DVector::from_vec(rec.b.clone()),
                rec.m,
            ));
        }
        SplatModel::new(doc.mother, d, p, splats)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_document())
            .map_err(|e| SplatError::Document(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| SplatError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// Versioned on-disk form of a [`SplatModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub d: usize,
    pub p: usize,
    pub mother: MotherSplat,
    pub splats: Vec<SplatRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplatRecord {
    pub v: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub m: f64,
}

/// Per-splat cached quantities. Matrices are row-major `d x d`.
#[derive(Clone, Debug)]
pub struct PreparedSplat {
    pub v: Vec<f64>,
    pub mass: f64,
    pub b: Vec<f64>,
    /// `A^{-1}`
    pub a_inv: Vec<f64>,
    /// `rho(0) / |det A|`
    pub norm: f64,
    /// `tr Sigma^{-1} = ||A^{-1}||_F^2`
    pub prec_trace: f64,
    /// `Sigma^{-1} = A^{-T} A^{-1}`
    pub prec: Vec<f64>,
    /// `Sigma^{-1} A^{-T}`
    pub prec_a_inv_t: Vec<f64>,
}

/// Scratch buffers for [`Prepared::local`].
#[derive(Clone, Debug)]
pub struct Workspace {
    pub z: Vec<f64>,
    /// `A^{-1}(x - b)`
    pub y: Vec<f64>,
    /// `Sigma^{-1}(x - b)`; note `grad_x log rho_{A,b} = -h`.
    pub h: Vec<f64>,
}

/// A model with per-splat caches, ready for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub d: usize,
    pub p: usize,
    pub splats: Vec<PreparedSplat>,
}

impl Prepared {
    fn new(model: &SplatModel) -> Result<Self> {
        let d = model.d;
        let peak = model.mother.peak(d);
        let mut splats = Vec::with_capacity(model.splats.len());
        for (index, s) in model.splats.iter().enumerate() {
            let det = s.a.determinant();
            if !det.is_finite() || det.abs() < model.det_floor {
                return Err(SplatError::SingularSplat {
                    index,
                    det,
                    floor: model.det_floor,
                });
            }
            let a_inv = s.a.clone().try_inverse().ok_or(SplatError::SingularSplat {
                index,
                det,
                floor: model.det_floor,
            })?;
            let prec = a_inv.transpose() * &a_inv;
            let prec_a_inv_t = &prec * a_inv.transpose();
            splats.push(PreparedSplat {
                v: s.v.iter().cloned().collect(),
                mass: s.mass,
                b: s.b.iter().cloned().collect(),
                a_inv: row_major(&a_inv),
                norm: peak / det.abs(),
                prec_trace: prec.trace(),
                prec: row_major(&prec),
                prec_a_inv_t: row_major(&prec_a_inv_t),
            });
        }
        Ok(Prepared {
            d,
            p: model.p,
            splats,
        })
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            z: vec![0.0; self.d],
            y: vec![0.0; self.d],
            h: vec![0.0; self.d],
        }
    }

    /// Density `rho_i(x)`, leaving `z`, `y`, `h` in the workspace.
    #[inline]
    pub fn local(&self, i: usize, x: &[f64], ws: &mut Workspace) -> f64 {
        let s = &self.splats[i];
        let d = self.d;
        for k in 0..d {
            ws.z[k] = x[k] - s.b[k];
        }
        let mut q = 0.0;
        for r in 0..d {
            let row = &s.a_inv[r * d..(r + 1) * d];
            let mut acc = 0.0;
            for c in 0..d {
                acc += row[c] * ws.z[c];
            }
            ws.y[r] = acc;
            q += acc * acc;
        }
        // h = A^{-T} y
        for c in 0..d {
            let mut acc = 0.0;
            for r in 0..d {
                acc += s.a_inv[r * d + c] * ws.y[r];
            }
            ws.h[c] = acc;
        }
        s.norm * (-0.5 * q).exp()
    }

    /// `Lap(rho_i)(x) / rho_i(x)`, valid after [`Prepared::local`].
    #[inline]
    pub fn laplacian_factor(&self, i: usize, ws: &Workspace) -> f64 {
        let hh: f64 = ws.h.iter().map(|v| v * v).sum();
        hh - self.splats[i].prec_trace
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut ws = self.workspace();
        for (i, s) in self.splats.iter().enumerate() {
            let rho = self.local(i, x, &mut ws);
            let c = s.mass * rho;
            for (o, v) in out.iter_mut().zip(&s.v) {
                *o += c * v;
            }
        }
    }

    pub fn eval_with_laplacian_into(&self, x: &[f64], val: &mut [f64], lap: &mut [f64]) {
        val.iter_mut().for_each(|o| *o = 0.0);
        lap.iter_mut().for_each(|o| *o = 0.0);
        let mut ws = self.workspace();
        for (i, s) in self.splats.iter().enumerate() {
            let rho = self.local(i, x, &mut ws);
            let c = s.mass * rho;
            let cl = c * self.laplacian_factor(i, &ws);
            for r in 0..self.p {
                val[r] += c * s.v[r];
                lap[r] += cl * s.v[r];
            }
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}
