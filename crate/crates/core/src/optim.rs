// SPDX-License-Identifier: Apache-2.0

//! Training: explicit Wasserstein steps on `(v, A, b)` with plain gradient
//! descent or Adam, optional Fisher-Rao mass updates with birth-death, and a
//! logging loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::losses::{
    allen_cahn_loss, allen_cahn_loss_and_gradients, ls_gradients, ls_loss, poisson_loss,
    poisson_loss_and_gradients, CollocationSet, Dataset,
};
use crate::mother::MotherSplat;
use crate::splat::{Splat, SplatModel};
use crate::wfr::GradientSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gd,
    Adam,
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gd" => Ok(Algorithm::Gd),
            "adam" => Ok(Algorithm::Adam),
            _ => Err(format!("unknown algorithm `{s}` (expected gd or adam)")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Gd => "gd",
            Algorithm::Adam => "adam",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub steps: usize,
    pub fr_enabled: bool,
    pub fr_rate: f64,
    pub prune_threshold: f64,
    pub clone_threshold: f64,
    /// Offset of cloned centers, in units of the smallest singular value of A.
    pub clone_perturbation: f64,
    pub seed: u64,
    pub sigma_min: f64,
    pub log_every: usize,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    /// Fill the `wall_ms` column; off by default so traces are reproducible.
    pub record_wall_time: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Gd,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps_adam: 1e-8,
            steps: 1000,
            fr_enabled: false,
            fr_rate: 1e-2,
            prune_threshold: 1e-8,
            clone_threshold: 0.5,
            clone_perturbation: 1e-3,
            seed: 0,
            sigma_min: 1e-6,
            log_every: 100,
            checkpoint_every: 0,
            batch_size: 0,
            record_wall_time: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SplatError::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps_adam > 0.0) {
            return bad(format!("eps_adam must be positive, got {}", self.eps_adam));
        }
        if !(self.sigma_min > 0.0) {
            return bad(format!("sigma_min must be positive, got {}", self.sigma_min));
        }
        if self.fr_enabled && !(self.fr_rate >= 0.0 && self.fr_rate.is_finite()) {
            return bad(format!("fr_rate must be nonnegative, got {}", self.fr_rate));
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Initial placement of splats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// `b_i = (i-1)/k`, `A_i = 1/(2k)`; one dimension.
    UniformGrid,
    /// Chebyshev nodes mapped to `[0,1]`, `A_i` half the gap between neighbours;
    /// one dimension.
    Chebyshev,
    /// `b_i ~ U([0,1]^d)`, `A_i = 0.1 I`.
    RandomUniform,
}

impl InitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::UniformGrid => "uniform-grid",
            InitScheme::Chebyshev => "chebyshev",
            InitScheme::RandomUniform => "random-uniform",
        }
    }
}

impl FromStr for InitScheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform-grid" => Ok(InitScheme::UniformGrid),
            "chebyshev" => Ok(InitScheme::Chebyshev),
            "random-uniform" => Ok(InitScheme::RandomUniform),
            _ => Err(format!(
                "unknown init scheme `{s}` (expected uniform-grid, chebyshev or random-uniform)"
            )),
        }
    }
}

/// Chebyshev nodes `(1 + cos(pi (2i+1) / 2k)) / 2`, ascending.
pub fn chebyshev_nodes(k: usize) -> Vec<f64> {
    let mut b: Vec<f64> = (0..k)
        .map(|i| {
            0.5 * (1.0 + (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * k) as f64).cos())
        })
        .collect();
    b.sort_by(f64::total_cmp);
    b
}

/// A `k`-splat model with `v = 0` and masses `1/k`.
pub fn init_model(
    scheme: InitScheme,
    mother: MotherSplat,
    k: usize,
    d: usize,
    p: usize,
    rng: &mut impl Rng,
) -> Result<SplatModel> {
    if k == 0 {
        return Err(SplatError::EmptyModel);
    }
    let one_d = |what: &str| {
        if d == 1 {
            Ok(())
        } else {
            Err(SplatError::DimensionError(format!(
                "{what} initialization is defined for d = 1, got d = {d}"
            )))
        }
    };
    let mass = 1.0 / k as f64;
    let zero = || DVector::zeros(p);
    let splats = match scheme {
        InitScheme::UniformGrid => {
            one_d("uniform-grid")?;
            (0..k)
                .map(|i| Splat::isotropic(zero(), DVector::from_element(1, i as f64 / k as f64), 0.5 / k as f64, mass))
                .collect()
        }
        InitScheme::Chebyshev => {
            one_d("chebyshev")?;
            let b = chebyshev_nodes(k);
            (0..k)
                .map(|i| {
                    let left = if i == 0 { 0.0 } else { b[i - 1] };
                    let right = if i + 1 == k { 1.0 } else { b[i + 1] };
                    let scale = (right - left).abs() / 2.0;
                    Splat::isotropic(zero(), DVector::from_element(1, b[i]), scale, mass)
                })
                .collect()
        }
        InitScheme::RandomUniform => (0..k)
            .map(|_| {
                let b = DVector::from_fn(d, |_, _| rng.random::<f64>());
                Splat::isotropic(zero(), b, 0.1, mass)
            })
            .collect(),
    };
    SplatModel::new(mother, d, p, splats)
}

/// Raises singular values of `a` below `sigma_min` to `sigma_min`. Returns
/// whether `a` changed.
pub fn project_singular_values(a: &mut DMatrix<f64>, sigma_min: f64) -> bool {
    if a.nrows() == 1 {
        let x = a[(0, 0)];
        if x.abs() < sigma_min {
            a[(0, 0)] = if x < 0.0 { -sigma_min } else { sigma_min };
            return true;
        }
        return false;
    }
    let mut svd = a.clone().svd(true, true);
    if svd.singular_values.iter().all(|&s| s >= sigma_min) {
        return false;
    }
    svd.singular_values.iter_mut().for_each(|s| *s = s.max(sigma_min));
    if let Ok(m) = svd.recompose() {
        *a = m;
    }
    true
}

/// Removes splats with mass below `prune_threshold` and splits those above
/// `clone_threshold` into two half-mass copies with centers offset by
/// `+-clone_perturbation * sigma_min(A) * u` along a random unit vector `u`.
/// Masses are renormalized to sum to one.
///
/// Returns, for each resulting splat, the index it came from.
pub fn prune_and_clone(
    model: &mut SplatModel,
    cfg: &OptimizerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let d = model.input_dim();
    let mut origin = Vec::with_capacity(model.len());
    let mut next = Vec::with_capacity(model.len());
    for (i, s) in model.splats.drain(..).enumerate() {
        if s.mass < cfg.prune_threshold {
            continue;
        }
        if s.mass > cfg.clone_threshold {
            let u = random_unit(rng, d);
            let shift = u * (cfg.clone_perturbation * s.min_singular_value());
            let mut plus = s.clone();
            plus.mass *= 0.5;
            let mut minus = plus.clone();
            plus.b += &shift;
            minus.b -= &shift;
            next.push(plus);
            next.push(minus);
            origin.push(i);
            origin.push(i);
        } else {
            next.push(s);
            origin.push(i);
        }
    }
    model.splats = next;
    if model.is_empty() {
        return Err(SplatError::EmptyModel);
    }
    model.normalize_masses();
    Ok(origin)
}

fn random_unit(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    loop {
        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = u.norm();
        if n > 1e-12 {
            return u / n;
        }
    }
}

/// First moment and second moment per splat, flattened like `[v | A | b]`.
#[derive(Clone, Debug)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Applies update steps and keeps per-splat optimizer state aligned with the
/// splat list across birth-death.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    adam: Vec<AdamState>,
    t: u64,
    rng: ChaCha8Rng,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c10e);
        Ok(Optimizer {
            cfg,
            adam: Vec::new(),
            t: 0,
            rng,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// One update of `model` from gradients computed at `model`.
    pub fn step(&mut self, model: &mut SplatModel, grads: &GradientSet) -> Result<()> {
        if grads.len() != model.len() {
            return Err(SplatError::DimensionError(format!(
                "{} gradients for {} splats",
                grads.len(),
                model.len()
            )));
        }
        let (d, p) = (model.input_dim(), model.output_dim());
        let lr = self.cfg.learning_rate;
        match self.cfg.algorithm {
            Algorithm::Gd => {
                for (s, g) in model.splats.iter_mut().zip(&grads.splats) {
                    s.v.axpy(-lr, &g.v, 1.0);
                    s.a.zip_apply(&g.a, |x, gi| *x -= lr * gi);
                    s.b.axpy(-lr, &g.b, 1.0);
                }
            }
            Algorithm::Adam => {
                let n = p + d * d + d;
                if self.adam.len() != model.len() {
                    self.adam = vec![
                        AdamState {
                            m: vec![0.0; n],
                            v: vec![0.0; n]
                        };
                        model.len()
                    ];
                }
                self.t += 1;
                let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps_adam);
                let c1 = 1.0 - b1.powf(self.t as f64);
                let c2 = 1.0 - b2.powf(self.t as f64);
                for ((s, g), st) in model
                    .splats
                    .iter_mut()
                    .zip(&grads.splats)
                    .zip(&mut self.adam)
                {
                    let params = s
                        .v
                        .iter_mut()
                        .chain(s.a.iter_mut())
                        .chain(s.b.iter_mut());
                    let grad = g.v.iter().chain(g.a.iter()).chain(g.b.iter());
                    for (((x, gi), mi), vi) in params.zip(grad).zip(&mut st.m).zip(&mut st.v) {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
        for s in &mut model.splats {
            project_singular_values(&mut s.a, self.cfg.sigma_min);
        }
        if self.cfg.fr_enabled {
            for (s, g) in model.splats.iter_mut().zip(&grads.splats) {
                s.mass *= (-self.cfg.fr_rate * g.fr).exp();
            }
            model.normalize_masses();
            let origin = prune_and_clone(model, &self.cfg, &mut self.rng)?;
            if !self.adam.is_empty() {
                self.adam = origin.iter().map(|&i| self.adam[i].clone()).collect();
            }
        }
        let finite = model.splats.iter().all(|s| {
            s.mass.is_finite()
                && s.v.iter().chain(s.a.iter()).chain(s.b.iter()).all(|x| x.is_finite())
        });
        if !finite {
            return Err(SplatError::non_finite("model parameters"));
        }
        Ok(())
    }
}

/// A loss the training loop can query.
pub trait Objective {
    /// Loss and gradients used for the next update. May draw a minibatch or
    /// fresh collocation points.
    fn loss_and_gradients(&mut self, model: &SplatModel) -> Result<(f64, GradientSet)>;

    /// Full loss at `model`, without advancing any sampling state.
    fn loss(&mut self, model: &SplatModel) -> Result<f64>;
}

/// `(1/n) sum |f(x_j) - y_j|^2`, full batch or reshuffled minibatches.
pub struct LeastSquares {
    data: Dataset,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl LeastSquares {
    pub fn new(data: Dataset) -> Self {
        Self::with_batches(data, 0, 0)
    }

    /// `batch_size = 0` or `>= n` means full batch.
    pub fn with_batches(data: Dataset, batch_size: usize, seed: u64) -> Self {
        let n = data.len();
        LeastSquares {
            data,
            batch_size,
            order: (0..n).collect(),
            cursor: n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl Objective for LeastSquares {
    fn loss_and_gradients(&mut self, model: &SplatModel) -> Result<(f64, GradientSet)> {
        let n = self.data.len();
        if self.batch_size == 0 || self.batch_size >= n {
            return ls_gradients(model, &self.data);
        }
        if self.cursor + self.batch_size > n {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        ls_gradients(model, &self.data.subset(idx))
    }

    fn loss(&mut self, model: &SplatModel) -> Result<f64> {
        ls_loss(model, &self.data)
    }
}

pub type PointFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Draws fresh collocation sets on demand.
pub struct Resampler {
    pub d: usize,
    pub n_int: usize,
    pub n_bdy: usize,
    pub forcing: PointFn,
    pub boundary: PointFn,
    pub boundary_weight: f64,
    pub rng: ChaCha8Rng,
}

impl Resampler {
    pub fn draw(&mut self) -> Result<CollocationSet> {
        Ok(
            CollocationSet::sample(self.d, self.n_int, self.n_bdy, &mut self.rng)?
                .with_forcing(&self.forcing)
                .with_boundary_values(&self.boundary)
                .with_boundary_weight(self.boundary_weight),
        )
    }
}

/// Collocation-based loss with an optional fresh draw before every step.
pub struct Physics {
    kind: PhysicsKind,
    coll: CollocationSet,
    resampler: Option<Resampler>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhysicsKind {
    Poisson,
    AllenCahn { eps: f64 },
}

impl Physics {
    pub fn new(kind: PhysicsKind, coll: CollocationSet) -> Self {
        Physics {
            kind,
            coll,
            resampler: None,
        }
    }

    /// Resamples before every step after the first.
    pub fn resampling(kind: PhysicsKind, mut resampler: Resampler) -> Result<Self> {
        let coll = resampler.draw()?;
        Ok(Physics {
            kind,
            coll,
            resampler: Some(resampler),
        })
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.coll
    }

    fn eval(&self, model: &SplatModel) -> Result<(f64, GradientSet)> {
        match self.kind {
            PhysicsKind::Poisson => poisson_loss_and_gradients(model, &self.coll),
            PhysicsKind::AllenCahn { eps } => {
                allen_cahn_loss_and_gradients(model, &self.coll, eps).map(|(l, g)| (l.total, g))
            }
        }
    }
}

impl Objective for Physics {
    fn loss_and_gradients(&mut self, model: &SplatModel) -> Result<(f64, GradientSet)> {
        let out = self.eval(model)?;
        if let Some(r) = &mut self.resampler {
            self.coll = r.draw()?;
        }
        Ok(out)
    }

    fn loss(&mut self, model: &SplatModel) -> Result<f64> {
        match self.kind {
            PhysicsKind::Poisson => poisson_loss(model, &self.coll),
            PhysicsKind::AllenCahn { eps } => allen_cahn_loss(model, &self.coll, eps).map(|l| l.total),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_mse: Option<f64>,
    pub wall_ms: f64,
    pub k_alive: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TrainRecord>,
}

pub const TRACE_HEADER: &str = "step,train_loss,val_mse,wall_ms,k_alive";

impl TrainTrace {
    pub fn last(&self) -> Option<&TrainRecord> {
        self.records.last()
    }

    /// CSV with header `step,train_loss,val_mse,wall_ms,k_alive`. Missing
    /// validation values are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            let val = r.val_mse.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:e},{},{:.3},{}",
                r.step, r.train_loss, val, r.wall_ms, r.k_alive
            )?;
        }
        Ok(())
    }
}

/// Mean squared error of `model` on `data`.
pub fn validation_mse(model: &SplatModel, data: &Dataset) -> Result<f64> {
    let p = model.output_dim() as f64;
    ls_loss(model, data).map(|l| l / p)
}

/// Runs `cfg.steps` updates, logging every `cfg.log_every` steps and at the
/// end.
pub fn train(
    model: SplatModel,
    objective: &mut dyn Objective,
    cfg: &OptimizerConfig,
    validation: Option<&Dataset>,
) -> Result<(SplatModel, TrainTrace)> {
    train_with_checkpoints(model, objective, cfg, validation, &mut |_, _| Ok(()))
}

/// As [`train`], calling `checkpoint(step, model)` every
/// `cfg.checkpoint_every` steps.
pub fn train_with_checkpoints(
    mut model: SplatModel,
    objective: &mut dyn Objective,
    cfg: &OptimizerConfig,
    validation: Option<&Dataset>,
    checkpoint: &mut dyn FnMut(usize, &SplatModel) -> Result<()>,
) -> Result<(SplatModel, TrainTrace)> {
    let mut opt = Optimizer::new(cfg.clone())?;
    model.validate()?;
    let start = Instant::now();
    let mut trace = TrainTrace::default();
    let mut record = |step: usize, loss: f64, model: &SplatModel| -> Result<()> {
        let val_mse = validation.map(|v| validation_mse(model, v)).transpose()?;
        let wall_ms = if cfg.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        trace.records.push(TrainRecord {
            step,
            train_loss: loss,
            val_mse,
            wall_ms,
            k_alive: model.len(),
        });
        Ok(())
    };
    for step in 0..cfg.steps {
        let (loss, grads) = objective
            .loss_and_gradients(&model)
            .map_err(|e| e.at_step(step))?;
        if !loss.is_finite() {
            return Err(SplatError::non_finite("training loss").at_step(step));
        }
        if step % cfg.log_every == 0 {
            record(step, loss, &model)?;
        }
        opt.step(&mut model, &grads).map_err(|e| e.at_step(step))?;
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            checkpoint(step + 1, &model)?;
        }
    }
    let loss = objective.loss(&model).map_err(|e| e.at_step(cfg.steps))?;
    record(cfg.steps, loss, &model)?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_model, random_points};
    use crate::wfr::SplatGradient;

    fn fig1_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = |x: f64| (20.0 * std::f64::consts::PI * x * (2.0 - x)).sin();
        let x: Vec<_> = (0..n).map(|_| DVector::from_element(1, rng.random::<f64>())).collect();
        let y = x.iter().map(|x| DVector::from_element(1, f(x[0]))).collect();
        Dataset::new(x, y).unwrap()
    }

    fn fig1_model() -> SplatModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        init_model(InitScheme::UniformGrid, MotherSplat::Gaussian, 30, 1, 1, &mut rng).unwrap()
    }

    #[test]
    fn zero_gradients_leave_model_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m0 = random_model(&mut rng, 3, 2, 2);
        for algorithm in [Algorithm::Gd, Algorithm::Adam] {
            let mut m = m0.clone();
            let cfg = OptimizerConfig {
                algorithm,
                ..Default::default()
            };
            Optimizer::new(cfg).unwrap().step(&mut m, &GradientSet::zeros(&m0)).unwrap();
            assert_eq!(m, m0);
        }
    }

    #[test]
    fn gd_step_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m0 = random_model(&mut rng, 1, 2, 3);
        let g = GradientSet {
            splats: vec![SplatGradient {
                v: DVector::from_vec(vec![1.0, -2.0, 0.5]),
                a: DMatrix::zeros(2, 2),
                b: DVector::zeros(2),
                fr: 0.0,
            }],
        };
        let cfg = OptimizerConfig {
            learning_rate: 0.25,
            ..Default::default()
        };
        let mut m = m0.clone();
        Optimizer::new(cfg).unwrap().step(&mut m, &g).unwrap();
        assert_eq!(m.splats[0].v, &m0.splats[0].v - &g.splats[0].v * 0.25);
    }

    #[test]
    fn fr_step_keeps_unit_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random_model(&mut rng, 5, 1, 1);
        m.set_uniform_masses();
        let x = random_points(&mut rng, 20, 1);
        let y = x.iter().map(|t| DVector::from_element(1, t[0].sin())).collect();
        let mut obj = LeastSquares::new(Dataset::new(x, y).unwrap());
        let cfg = OptimizerConfig {
            fr_enabled: true,
            fr_rate: 5.0,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let mut opt = Optimizer::new(cfg).unwrap();
        let before: Vec<f64> = m.splats.iter().map(|s| s.mass).collect();
        for _ in 0..20 {
            let (_, g) = obj.loss_and_gradients(&m).unwrap();
            opt.step(&mut m, &g).unwrap();
            assert!((m.total_mass() - 1.0).abs() < 1e-12);
        }
        let after: Vec<f64> = m.splats.iter().map(|s| s.mass).collect();
        assert_ne!(before, after);
    }

    #[test]
    fn masses_fixed_without_fr() {
        let mut m = fig1_model();
        let mut obj = LeastSquares::new(fig1_data(50, 4));
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        for _ in 0..10 {
            let (_, g) = obj.loss_and_gradients(&m).unwrap();
            opt.step(&mut m, &g).unwrap();
        }
        assert!(m.splats.iter().all(|s| s.mass == 1.0 / 30.0));
    }

    #[test]
    fn projection_enforces_sigma_min() {
        let mut a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0 + 1e-9]);
        assert!(project_singular_values(&mut a, 1e-3));
        let s = a.singular_values();
        assert!(s.min() >= 1e-3 * (1.0 - 1e-12));
        let mut fine = DMatrix::<f64>::identity(3, 3);
        assert!(!project_singular_values(&mut fine, 1e-3));
        let mut scalar = DMatrix::from_element(1, 1, -1e-9);
        project_singular_values(&mut scalar, 1e-6);
        assert_eq!(scalar[(0, 0)], -1e-6);
    }

    #[test]
    fn projection_holds_after_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = random_model(&mut rng, 4, 2, 1);
        let x = random_points(&mut rng, 30, 2);
        let y = x.iter().map(|t| DVector::from_element(1, 10.0 * t[0])).collect();
        let mut obj = LeastSquares::new(Dataset::new(x, y).unwrap());
        let cfg = OptimizerConfig {
            learning_rate: 0.5,
            sigma_min: 0.05,
            ..Default::default()
        };
        let mut opt = Optimizer::new(cfg).unwrap();
        for _ in 0..30 {
            let (_, g) = obj.loss_and_gradients(&m).unwrap();
            opt.step(&mut m, &g).unwrap();
            for s in &m.splats {
                assert!(s.min_singular_value() >= 0.05 * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn equal_masses_survive_birth_death() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for k in 3..8 {
            let mut m = random_model(&mut rng, k, 2, 1);
            m.set_uniform_masses();
            let before = m.clone();
            let cfg = OptimizerConfig {
                prune_threshold: 1e-6 / k as f64,
                clone_threshold: 0.5,
                ..Default::default()
            };
            let origin = prune_and_clone(&mut m, &cfg, &mut rng).unwrap();
            assert_eq!(origin, (0..k).collect::<Vec<_>>());
            for (a, b) in m.splats.iter().zip(&before.splats) {
                assert_eq!(a.v, b.v);
                assert_eq!(a.a, b.a);
                assert_eq!(a.b, b.b);
                assert!((a.mass - b.mass).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_mass_is_pruned() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = random_model(&mut rng, 4, 1, 1);
        for (s, w) in m.splats.iter_mut().zip([0.0, 0.2, 0.3, 0.5]) {
            s.mass = w;
        }
        let cfg = OptimizerConfig {
            clone_threshold: 0.9,
            ..Default::default()
        };
        let origin = prune_and_clone(&mut m, &cfg, &mut rng).unwrap();
        assert_eq!(origin, vec![1, 2, 3]);
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        assert!((m.splats[2].mass - 0.5).abs() < 1e-15);

        for s in &mut m.splats {
            s.mass = 0.0;
        }
        assert!(matches!(
            prune_and_clone(&mut m, &cfg, &mut rng),
            Err(SplatError::EmptyModel)
        ));
    }

    #[test]
    fn cloning_barely_changes_the_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = random_model(&mut rng, 3, 2, 1);
        for (s, w) in m.splats.iter_mut().zip([0.7, 0.2, 0.1]) {
            s.mass = w;
        }
        let grid: Vec<_> = (0..21)
            .flat_map(|i| (0..21).map(move |j| DVector::from_vec(vec![i as f64 / 20.0, j as f64 / 20.0])))
            .collect();
        let before = m.eval_batch(&grid).unwrap();
        let origin = prune_and_clone(&mut m, &OptimizerConfig::default(), &mut rng).unwrap();
        assert_eq!(origin, vec![0, 0, 1, 2]);
        let after = m.eval_batch(&grid).unwrap();
        let sup = before.iter().map(|v| v.amax()).fold(0.0, f64::max);
        let diff = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-2 * sup, "diff {diff} sup {sup}");
    }

    #[test]
    fn adam_state_follows_clones() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = random_model(&mut rng, 3, 1, 1);
        m.set_uniform_masses();
        let x = random_points(&mut rng, 20, 1);
        let y = x.iter().map(|t| DVector::from_element(1, (6.0 * t[0]).sin())).collect();
        let mut obj = LeastSquares::new(Dataset::new(x, y).unwrap());
        let cfg = OptimizerConfig {
            algorithm: Algorithm::Adam,
            fr_enabled: true,
            fr_rate: 50.0,
            clone_threshold: 0.45,
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut opt = Optimizer::new(cfg).unwrap();
        for _ in 0..50 {
            let (_, g) = obj.loss_and_gradients(&m).unwrap();
            opt.step(&mut m, &g).unwrap();
            assert_eq!(opt.adam.len(), m.len());
        }
    }

    #[test]
    fn zero_steps_returns_model() {
        let m = fig1_model();
        let mut obj = LeastSquares::new(fig1_data(20, 1));
        let cfg = OptimizerConfig {
            steps: 0,
            ..Default::default()
        };
        let (out, trace) = train(m.clone(), &mut obj, &cfg, None).unwrap();
        assert_eq!(out, m);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut obj = LeastSquares::with_batches(fig1_data(100, 3), 32, 11);
            let cfg = OptimizerConfig {
                algorithm: Algorithm::Adam,
                learning_rate: 1e-2,
                steps: 200,
                log_every: 10,
                ..Default::default()
            };
            let (_, trace) = train(fig1_model(), &mut obj, &cfg, Some(&fig1_data(50, 4))).unwrap();
            let mut buf = Vec::new();
            trace.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fig1_descent_smoke() {
        // Least-squares descent on the multiscale target: at most 1% of the
        // first 1000 steps may increase the loss, and the 100-step moving
        // average is non-increasing over 5000 steps. Unit masses, as in the
        // shipped fig1 config.
        let mut obj = LeastSquares::new(fig1_data(200, 0));
        let mut m = fig1_model();
        m.splats.iter_mut().for_each(|s| s.mass = 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        let mut losses = Vec::new();
        for _ in 0..5000 {
            let (l, g) = obj.loss_and_gradients(&m).unwrap();
            losses.push(l);
            opt.step(&mut m, &g).unwrap();
        }
        let ups = losses[..1000].windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups <= 10, "{ups} increases");
        let avg: Vec<f64> = losses.windows(100).map(|w| w.iter().sum::<f64>() / 100.0).collect();
        assert!(avg.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn init_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = init_model(InitScheme::UniformGrid, MotherSplat::Gaussian, 4, 1, 1, &mut rng).unwrap();
        let b: Vec<f64> = m.splats.iter().map(|s| s.b[0]).collect();
        assert_eq!(b, vec![0.0, 0.25, 0.5, 0.75]);
        assert!(m.splats.iter().all(|s| s.a[(0, 0)] == 0.125 && s.v[0] == 0.0));

        let c = init_model(InitScheme::Chebyshev, MotherSplat::Gaussian, 5, 1, 1, &mut rng).unwrap();
        let b: Vec<f64> = c.splats.iter().map(|s| s.b[0]).collect();
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!((b[2] - 0.5).abs() < 1e-15);
        assert!((c.splats[0].a[(0, 0)] - b[1] / 2.0).abs() < 1e-15);
        assert!((c.splats[4].a[(0, 0)] - (1.0 - b[3]) / 2.0).abs() < 1e-15);

        let r = init_model(InitScheme::RandomUniform, MotherSplat::Gaussian, 6, 2, 1, &mut rng).unwrap();
        assert!(r.splats.iter().all(|s| s.a == DMatrix::identity(2, 2) * 0.1));
        assert!((r.total_mass() - 1.0).abs() < 1e-15);
        assert!(init_model(InitScheme::UniformGrid, MotherSplat::Gaussian, 4, 2, 1, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            beta2: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }
}
