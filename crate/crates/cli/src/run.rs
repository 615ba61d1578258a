// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use splatreg_core::baselines::{cheb_eval, cheb_fit, grid_mse, haar_eval, haar_fit, uniform_grid};
use splatreg_core::construct::{build_construction, sup_error, ConstructionSpec, GridSpec};
use splatreg_core::losses::CollocationSet;
use splatreg_core::optim::{
    init_model, train_with_checkpoints, validation_mse, InitScheme, LeastSquares,
    Objective, OptimizerConfig, Physics, PhysicsKind, PointFn, Resampler, TrainTrace,
};
use splatreg_core::{bw, par, Dataset, MotherSplat, Splat, SplatError, SplatModel};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::gradcheck::{self, GradcheckParams, LossKind};
use crate::targets::{gen_data, lookup, validation_set, UnknownTarget};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Fit,
    Pde,
    Baseline,
    Gradcheck,
    ApproxBound,
    Geodesic,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Pde => "pde",
            Command::Baseline => "baseline",
            Command::Gradcheck => "gradcheck",
            Command::ApproxBound => "approx-bound",
            Command::Geodesic => "geodesic",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Target(#[from] UnknownTarget),
    #[error(transparent)]
    Splat(#[from] SplatError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("gradient check failed: {0}")]
    GradcheckFailed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Target(_) => 2,
            RunError::GradcheckFailed(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What a run produced, besides the files.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub metrics: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl Summary {
    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }
}

struct Ctx<'a> {
    cfg: &'a Config,
    out: &'a Path,
    /// Relative paths inside the config resolve against this directory.
    base: PathBuf,
    seed: u64,
    summary: Summary,
}

impl Ctx<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        let path = self.out.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        self.summary.outputs.push(path);
        Ok(BufWriter::new(file))
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        self.summary.outputs.push(path);
        Ok(())
    }
}

/// Independent random streams derived from the run seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_COLLOCATION: u64 = 2;

/// Loads the config at `config_path`, runs `command` and writes artifacts into
/// `out` (created if needed).
pub fn run(command: Command, config_path: &Path, out: &Path) -> Result<Summary, RunError> {
    let cfg = Config::load(config_path)?;
    run_config(command, &cfg, Some(config_path), out)
}

pub fn run_config(
    command: Command,
    cfg: &Config,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<Summary, RunError> {
    let seed: u64 = cfg.require("seed")?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let threads = par::init_threads_from_env();
    let start = Instant::now();
    let base = config_path
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut ctx = Ctx {
        cfg,
        out,
        base,
        seed,
        summary: Summary::default(),
    };
    match command {
        Command::Fit => fit(&mut ctx)?,
        Command::Pde => pde(&mut ctx)?,
        Command::Baseline => baseline(&mut ctx)?,
        Command::Gradcheck => run_gradcheck(&mut ctx)?,
        Command::ApproxBound => approx_bound(&mut ctx)?,
        Command::Geodesic => geodesic(&mut ctx)?,
    }
    cfg.reject_unused()?;
    let wall = start.elapsed().as_secs_f64();
    let mut summary = ctx.summary;
    let manifest = json!({
        "tool": "splatreg",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command.name(),
        "config_path": config_path.map(|p| p.display().to_string()),
        "config": cfg.entries(),
        "seed": seed,
        "threads": threads,
        "metrics": summary.metrics,
        "outputs": summary.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "wall_seconds": wall,
    });
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    summary.outputs.push(path);
    Ok(summary)
}

fn optimizer_config(c: &Config, seed: u64) -> Result<OptimizerConfig, ConfigError> {
    let d = OptimizerConfig::default();
    let cfg = OptimizerConfig {
        algorithm: c.get_or("algorithm", d.algorithm)?,
        learning_rate: c.get_or("learning_rate", d.learning_rate)?,
        beta1: c.get_or("beta1", d.beta1)?,
        beta2: c.get_or("beta2", d.beta2)?,
        eps_adam: c.get_or("eps_adam", d.eps_adam)?,
        steps: c.require("steps")?,
        fr_enabled: c.get_or("fr_enabled", d.fr_enabled)?,
        fr_rate: c.get_or("fr_rate", d.fr_rate)?,
        prune_threshold: c.get_or("prune_threshold", d.prune_threshold)?,
        clone_threshold: c.get_or("clone_threshold", d.clone_threshold)?,
        clone_perturbation: c.get_or("clone_perturbation", d.clone_perturbation)?,
        seed,
        sigma_min: c.get_or("sigma_min", d.sigma_min)?,
        log_every: c.get_or("log_every", d.log_every)?,
        checkpoint_every: c.get_or("checkpoint_every", d.checkpoint_every)?,
        batch_size: c.get_or("batch_size", d.batch_size)?,
        record_wall_time: c.get_or("record_wall_time", d.record_wall_time)?,
    };
    // Validation messages start with the offending key.
    cfg.validate().map_err(|e| {
        let msg = match e {
            SplatError::InvalidArgument(m) => m,
            other => other.to_string(),
        };
        let key = msg.split_whitespace().next().unwrap_or("optimizer").to_string();
        c.invalid(&key, msg)
    })?;
    Ok(cfg)
}

/// `k` splats placed by the configured scheme, with masses `1/k` or the
/// configured per-splat value.
fn initial_model(c: &Config, seed: u64, d: usize, default_init: InitScheme) -> Result<SplatModel, RunError> {
    let k: usize = c.require("k")?;
    let init: InitScheme = c.get_or("init", default_init)?;
    let mother = match c.raw("mother") {
        None => MotherSplat::Gaussian,
        Some(name) => {
            MotherSplat::from_name(name).ok_or_else(|| c.invalid("mother", "unknown mother splat"))?
        }
    };
    let mut model = init_model(init, mother, k, d, 1, &mut stream(seed, STREAM_INIT))
        .map_err(|e| c.invalid("init", e.to_string()))?;
    match c.raw("mass") {
        None | Some("uniform") => {}
        Some(_) => {
            let m: f64 = c.require("mass")?;
            if !(m > 0.0 && m.is_finite()) {
                return Err(c.invalid("mass", "must be positive or `uniform`").into());
            }
            model.splats.iter_mut().for_each(|s| s.mass = m);
        }
    }
    Ok(model)
}

fn write_trace(ctx: &mut Ctx, trace: &TrainTrace) -> Result<(), RunError> {
    let path = ctx.out.join("trace.csv");
    let w = ctx.create("trace.csv")?;
    trace.write_csv(w).map_err(io_err(&path))
}

fn train_and_save(
    ctx: &mut Ctx,
    model: SplatModel,
    objective: &mut dyn Objective,
    opt: &OptimizerConfig,
    validation: Option<&Dataset>,
) -> Result<SplatModel, RunError> {
    let ckpt_dir = ctx.out.join("checkpoints");
    if opt.checkpoint_every > 0 {
        fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    }
    let mut save = |step: usize, m: &SplatModel| -> splatreg_core::Result<()> {
        let path = ckpt_dir.join(format!("step_{step:08}.json"));
        fs::write(&path, m.to_json()?).map_err(|e| SplatError::Document(format!("{}: {e}", path.display())))
    };
    let (model, trace) = train_with_checkpoints(model, objective, opt, validation, &mut save)?;
    write_trace(ctx, &trace)?;
    ctx.write_text("model.json", &model.to_json()?)?;
    let last = trace.last().expect("trace has a final record");
    let first = &trace.records[0];
    ctx.summary.metric("initial_loss", first.train_loss);
    ctx.summary.metric("final_loss", last.train_loss);
    ctx.summary.metric("k_alive", last.k_alive as f64);
    if let Some(v) = last.val_mse {
        ctx.summary.metric("val_mse", v);
    }
    ctx.summary.lines.push(format!(
        "step {}: train loss {:.4e}{}",
        last.step,
        last.train_loss,
        last.val_mse.map(|v| format!(", validation MSE {v:.4e}")).unwrap_or_default()
    ));
    Ok(model)
}

fn fit(ctx: &mut Ctx) -> Result<(), RunError> {
    let c = ctx.cfg;
    let target = lookup(&c.require::<String>("target")?)?;
    let n: usize = c.require("n")?;
    if n == 0 {
        return Err(c.invalid("n", "must be at least 1").into());
    }
    let sigma: f64 = c.get_or("noise_sigma", 0.0)?;
    let data_seed: u64 = c.get_or("data_seed", ctx.seed)?;
    let data = gen_data(&target, n, sigma, data_seed);
    let validation = validation_set(&target, c.get("val_points")?);
    let opt = optimizer_config(c, ctx.seed)?;
    let default_init = if target.d == 1 {
        InitScheme::UniformGrid
    } else {
        InitScheme::RandomUniform
    };
    let mut model = initial_model(c, ctx.seed, target.d, default_init)?;
    if opt.fr_enabled {
        model.normalize_masses();
    }
    let mut objective = LeastSquares::with_batches(data, opt.batch_size, ctx.seed);
    let model = train_and_save(ctx, model, &mut objective, &opt, Some(&validation))?;
    if target.d == 1 {
        // Reference errors on the same grid.
        let grid: Vec<f64> = validation.x.iter().map(|x| x[0]).collect();
        let f = |x: f64| target.eval(&[x]);
        let haar = haar_fit(f, 8)?;
        let cheb = cheb_fit(f, 30)?;
        ctx.summary.metric("haar8_mse", grid_mse(|x| haar_eval(&haar, x), f, &grid));
        ctx.summary.metric("cheb30_mse", grid_mse(|x| cheb_eval(&cheb, x), f, &grid));
    }
    ctx.summary.metric("val_mse", validation_mse(&model, &validation)?);
    Ok(())
}

/// Fixed splat used as a manufactured solution.
fn manufactured_splat(d: usize) -> SplatModel {
    let s = Splat::isotropic(
        DVector::from_element(1, 1.0),
        DVector::from_element(d, 0.5),
        0.2,
        1.0,
    );
    SplatModel::new(MotherSplat::Gaussian, d, 1, vec![s]).expect("valid splat")
}

/// Point values read from a headerless CSV with rows `x_1,...,x_d,value`,
/// looked up by nearest tabulated point.
fn table_fn(c: &Config, key: &str, path: &Path, d: usize) -> Result<PointFn, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == d + 1 => rows.push((v[..d].to_vec(), v[d])),
            _ => {
                return Err(c
                    .invalid(key, format!("{}:{}: expected {} numbers", path.display(), i + 1, d + 1))
                    .into())
            }
        }
    }
    if rows.is_empty() {
        return Err(c.invalid(key, format!("{} has no rows", path.display())).into());
    }
    Ok(Box::new(move |x| {
        let dist = |p: &[f64]| p.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        rows.iter()
            .min_by(|a, b| dist(&a.0).total_cmp(&dist(&b.0)))
            .map(|r| r.1)
            .unwrap_or(f64::NAN)
    }))
}

fn pde(ctx: &mut Ctx) -> Result<(), RunError> {
    let c = ctx.cfg;
    let problem: String = c.require("problem")?;
    let d: usize = c.get_or("d", 2)?;
    if d == 0 {
        return Err(c.invalid("d", "must be at least 1").into());
    }
    let kind = match problem.as_str() {
        "allen-cahn" => {
            let eps: f64 = c.require("eps")?;
            if !(eps > 0.0) {
                return Err(c.invalid("eps", "must be positive").into());
            }
            PhysicsKind::AllenCahn { eps }
        }
        "poisson" => PhysicsKind::Poisson,
        _ => return Err(c.invalid("problem", "expected allen-cahn or poisson").into()),
    };
    let n_int: usize = c.require("n_int")?;
    let n_bdy: usize = c.get_or("n_bdy", 0)?;
    if n_int == 0 {
        return Err(c.invalid("n_int", "must be at least 1").into());
    }
    let boundary_weight: f64 = c.get_or("boundary_weight", 1.0)?;
    let resample: bool = c.get_or("resample", false)?;
    let boundary_name = c.get_or("boundary", "tanh-interface".to_string())?;
    let forcing_name = c.get_or("forcing", "zero".to_string())?;

    let manufactured = manufactured_splat(d);
    let boundary: PointFn = match boundary_name.as_str() {
        "zero" => Box::new(|_| 0.0),
        "tanh-interface" => {
            let PhysicsKind::AllenCahn { eps } = kind else {
                return Err(c.invalid("boundary", "tanh-interface needs problem = allen-cahn").into());
            };
            Box::new(move |x| ((x[0] - 0.5) / (2f64.sqrt() * eps)).tanh())
        }
        "manufactured-splat" => {
            let m = manufactured.clone();
            Box::new(move |x| m.eval(x).map(|v| v[0]).unwrap_or(f64::NAN))
        }
        other => match other.strip_prefix("table:") {
            Some(file) => table_fn(c, "boundary", &ctx.base.join(file), d)?,
            None => {
                return Err(c
                    .invalid("boundary", "expected zero, tanh-interface, manufactured-splat or table:<csv>")
                    .into())
            }
        },
    };
    let forcing: PointFn = match forcing_name.as_str() {
        "zero" => Box::new(|_| 0.0),
        "manufactured-splat" => {
            let m = manufactured.clone();
            match kind {
                PhysicsKind::Poisson => {
                    Box::new(move |x| m.eval_laplacian(x).map(|v| v[0]).unwrap_or(f64::NAN))
                }
                PhysicsKind::AllenCahn { eps } => Box::new(move |x| {
                    let u = m.eval(x).map(|v| v[0]).unwrap_or(f64::NAN);
                    let lap = m.eval_laplacian(x).map(|v| v[0]).unwrap_or(f64::NAN);
                    eps * eps * lap + u - u * u * u
                }),
            }
        }
        other => match other.strip_prefix("table:") {
            Some(file) => table_fn(c, "forcing", &ctx.base.join(file), d)?,
            None => {
                return Err(c
                    .invalid("forcing", "expected zero, manufactured-splat or table:<csv>")
                    .into())
            }
        },
    };
    // Exact solutions for the built-in data, used for the validation column.
    let reference: Option<PointFn> = match (kind, boundary_name.as_str(), forcing_name.as_str()) {
        (PhysicsKind::AllenCahn { eps }, "tanh-interface", "zero") => {
            Some(Box::new(move |x| ((x[0] - 0.5) / (2f64.sqrt() * eps)).tanh()))
        }
        (PhysicsKind::AllenCahn { .. }, "zero", "zero") => Some(Box::new(|_| 0.0)),
        (PhysicsKind::AllenCahn { .. }, "manufactured-splat", "manufactured-splat") => {
            let m = manufactured.clone();
            Some(Box::new(move |x| m.eval(x).map(|v| v[0]).unwrap_or(f64::NAN)))
        }
        _ => None,
    };

    let opt = optimizer_config(c, ctx.seed)?;
    let mut model = initial_model(c, ctx.seed, d, InitScheme::RandomUniform)?;
    if opt.fr_enabled {
        model.normalize_masses();
    }
    let mut resampler = Resampler {
        d,
        n_int,
        n_bdy,
        forcing,
        boundary,
        boundary_weight,
        rng: stream(ctx.seed, STREAM_COLLOCATION),
    };
    let mut objective = if resample {
        Physics::resampling(kind, resampler)?
    } else {
        Physics::new(kind, resampler.draw()?)
    };
    let val_points: Option<usize> = c.get("val_points")?;
    let validation = reference.map(|u| {
        let x = if d == 1 {
            uniform_grid(val_points.unwrap_or(2000))
                .into_iter()
                .map(|t| DVector::from_element(1, t))
                .collect()
        } else {
            GridSpec {
                d,
                points_per_axis: val_points.unwrap_or(101),
            }
            .points()
        };
        let y = x.iter().map(|p| DVector::from_element(1, u(p))).collect();
        Dataset::new(x, y).expect("non-empty grid")
    });
    let coll: &CollocationSet = objective.collocation();
    ctx.summary.metric("n_int", coll.interior.len() as f64);
    ctx.summary.metric("n_bdy", coll.boundary.len() as f64);
    train_and_save(ctx, model, &mut objective, &opt, validation.as_ref())?;
    Ok(())
}

fn baseline(ctx: &mut Ctx) -> Result<(), RunError> {
    let c = ctx.cfg;
    let target = lookup(&c.require::<String>("target")?)?;
    if target.d != 1 {
        return Err(c.invalid("target", "baselines are one-dimensional").into());
    }
    let nodes: Vec<usize> = c.list("cheb_nodes")?.unwrap_or_else(|| vec![30, 45]);
    let levels: Vec<u32> = c.list("haar_levels")?.unwrap_or_else(|| vec![8]);
    let grid = uniform_grid(c.get_or("val_points", 2000)?);
    let f = |x: f64| target.eval(&[x]);
    let mut w = ctx.create("baseline.csv")?;
    let path = ctx.out.join("baseline.csv");
    let mut rows = vec!["method,params,mse".to_string()];
    for &m in &nodes {
        let interp = cheb_fit(f, m).map_err(|e| c.invalid("cheb_nodes", e.to_string()))?;
        let mse = grid_mse(|x| cheb_eval(&interp, x), f, &grid);
        // Both parameter accountings: coefficients only, and with node locations.
        rows.push(format!("chebyshev,{m},{mse:e}"));
        rows.push(format!("chebyshev_with_nodes,{},{mse:e}", 2 * m));
        ctx.summary.metric(&format!("cheb{m}_mse"), mse);
    }
    for &l in &levels {
        let h = haar_fit(f, l).map_err(|e| c.invalid("haar_levels", e.to_string()))?;
        let mse = grid_mse(|x| haar_eval(&h, x), f, &grid);
        rows.push(format!("haar,{},{mse:e}", h.coefficient_count()));
        ctx.summary.metric(&format!("haar{l}_mse"), mse);
    }
    for r in &rows {
        writeln!(w, "{r}").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    ctx.summary.lines.extend(rows);
    Ok(())
}

fn run_gradcheck(ctx: &mut Ctx) -> Result<(), RunError> {
    let c = ctx.cfg;
    let d = GradcheckParams::default();
    let losses: Vec<String> = c.list("loss")?.unwrap_or_else(|| vec!["all".into()]);
    let mut kinds = Vec::new();
    for l in &losses {
        match l.as_str() {
            "all" => kinds.extend([LossKind::LeastSquares, LossKind::Poisson, LossKind::AllenCahn]),
            other => kinds.push(other.parse().map_err(|e: String| c.invalid("loss", e))?),
        }
    }
    let params = GradcheckParams {
        seed: ctx.seed,
        instances: c.get_or("instances", d.instances)?,
        k_min: c.get_or("k_min", d.k_min)?,
        k_max: c.get_or("k_max", d.k_max)?,
        d_min: c.get_or("d_min", d.d_min)?,
        d_max: c.get_or("d_max", d.d_max)?,
        p_max: c.get_or("p_max", d.p_max)?,
        n: c.get_or("n", d.n)?,
        n_int: c.get_or("n_int", d.n_int)?,
        n_bdy: c.get_or("n_bdy", d.n_bdy)?,
        eps: c.get_or("eps", d.eps)?,
        fd_step: c.get_or("fd_step", d.fd_step)?,
    };
    let threshold: f64 = c.get_or("threshold", 1e-4)?;
    let path = ctx.out.join("gradcheck.csv");
    let mut w = ctx.create("gradcheck.csv")?;
    writeln!(w, "loss,block,max_rel_err,status").map_err(io_err(&path))?;
    let mut failures = Vec::new();
    for kind in kinds {
        let report = gradcheck::check(kind, &params)?;
        for (block, err) in &report.block_errors {
            let status = if *err <= threshold { "PASS" } else { "FAIL" };
            if status == "FAIL" {
                failures.push(format!("{} {block}", kind.name()));
            }
            writeln!(w, "{},{block},{err:e},{status}", kind.name()).map_err(io_err(&path))?;
            ctx.summary
                .lines
                .push(format!("{:<11} {block}  max rel err {err:.3e}  {status}", kind.name()));
            ctx.summary.metric(&format!("{}_{block}", kind.name()), *err);
        }
        ctx.summary
            .metric(&format!("{}_fr_centering", kind.name()), report.max_centering);
    }
    w.flush().map_err(io_err(&path))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(RunError::GradcheckFailed(failures.join(", ")))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn approx_bound(ctx: &mut Ctx) -> Result<(), RunError> {
    let c = ctx.cfg;
    let target = lookup(&c.get_or("target", "sin2pi".to_string())?)?;
    let pairs_raw: Vec<String> = c
        .list("pairs")?
        .unwrap_or_else(|| vec!["0.2:100".into(), "0.05:10000".into()]);
    let mut pairs = Vec::new();
    for p in &pairs_raw {
        let parsed = p
            .split_once(':')
            .and_then(|(e, k)| Some((e.trim().parse::<f64>().ok()?, k.trim().parse::<usize>().ok()?)));
        match parsed {
            Some(pair) => pairs.push(pair),
            None => return Err(c.invalid("pairs", "expected eps:k entries").into()),
        }
    }
    let replicates: u64 = c.get_or("replicates", 5)?;
    let default_grid = if target.d == 1 { 2001 } else { 101 };
    let grid = GridSpec {
        d: target.d,
        points_per_axis: c.get_or("grid_points", default_grid)?,
    };
    let f = |x: &DVector<f64>| target.eval_vec(x);
    let path = ctx.out.join("approx_bound.csv");
    let mut w = ctx.create("approx_bound.csv")?;
    writeln!(w, "eps,k,seed,sup_error").map_err(io_err(&path))?;
    for (eps, k) in pairs {
        let mut errs = Vec::new();
        for r in 0..replicates {
            let seed = ctx.seed + r;
            let spec = ConstructionSpec {
                d: target.d,
                eps,
                k,
                seed,
            };
            let model = build_construction(&spec, &f).map_err(|e| c.invalid("pairs", e.to_string()))?;
            let e = sup_error(&model, &f, &grid)?;
            writeln!(w, "{eps},{k},{seed},{e:e}").map_err(io_err(&path))?;
            errs.push(e);
        }
        let med = median(errs);
        ctx.summary.lines.push(format!("eps {eps} k {k}: median sup error {med:.4e}"));
        ctx.summary.metric(&format!("median_eps{eps}_k{k}"), med);
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

fn geodesic(ctx: &mut Ctx) -> Result<(), RunError> {
    let c = ctx.cfg;
    let d: usize = c.require("d")?;
    let matrix = |key: &str| -> Result<DMatrix<f64>, RunError> {
        let v: Vec<f64> = c.list(key)?.ok_or_else(|| ConfigError::Missing(key.into()))?;
        if v.len() != d * d {
            return Err(c.invalid(key, format!("expected {} entries", d * d)).into());
        }
        Ok(DMatrix::from_row_slice(d, d, &v))
    };
    let vector = |key: &str| -> Result<DVector<f64>, RunError> {
        let v: Vec<f64> = c.list(key)?.ok_or_else(|| ConfigError::Missing(key.into()))?;
        if v.len() != d {
            return Err(c.invalid(key, format!("expected {d} entries")).into());
        }
        Ok(DVector::from_vec(v))
    };
    let p = bw::BwPoint::new(matrix("a0")?, vector("b0")?).map_err(|e| c.invalid("a0", e.to_string()))?;
    let q = bw::BwPoint::new(matrix("a1")?, vector("b1")?).map_err(|e| c.invalid("a1", e.to_string()))?;
    let steps: usize = c.get_or("steps", 11)?;
    if steps < 2 {
        return Err(c.invalid("steps", "need at least 2 points").into());
    }
    let path = ctx.out.join("geodesic.csv");
    let mut w = ctx.create("geodesic.csv")?;
    let mut header = vec!["t".to_string()];
    for r in 0..d {
        for col in 0..d {
            header.push(format!("a_{r}{col}"));
        }
    }
    header.extend((0..d).map(|r| format!("b_{r}")));
    header.push("dist_from_start".into());
    writeln!(w, "{}", header.join(",")).map_err(io_err(&path))?;
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let g = bw::bw_geodesic(&p, &q, t)?;
        let dist = bw::bw_distance(&p, &g)?;
        let mut row = vec![format!("{t}")];
        for r in 0..d {
            for col in 0..d {
                row.push(format!("{:e}", g.a[(r, col)]));
            }
        }
        row.extend(g.b.iter().map(|x| format!("{x:e}")));
        row.push(format!("{dist:e}"));
        writeln!(w, "{}", row.join(",")).map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    let total = bw::bw_distance(&p, &q)?;
    ctx.summary.metric("distance", total);
    ctx.summary.lines.push(format!("W2 distance {total:.6e}"));
    Ok(())
}
