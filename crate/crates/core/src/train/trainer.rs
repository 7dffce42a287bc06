//! Minibatch training of neural operators on a dataset with validation-based
//! learning-rate control, repeated over several runs.

use super::checkpoint::{Checkpoint, TrainingMeta};
use super::dataset::Dataset;
use super::optim::{adam_step, sgd_step, AdamState, Optimizer};
use super::schedule::LrSchedule;
use crate::autodiff::{value_and_grad, Tape, Var};
use crate::error::{invalid, shape, Error, Result};
use crate::operators::OperatorSpec;
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub tolerance: f64,
    pub val_every: usize,
    pub max_steps: usize,
    pub runs: usize,
    pub optimizer: Optimizer,
    /// Taken from the top-level seed when read from a config file.
    #[serde(skip)]
    pub seed: u64,
    /// Record wall-clock time; off keeps every output byte-reproducible.
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 1e-3,
            tolerance: 0.97,
            val_every: 400,
            max_steps: 2000,
            runs: 1,
            optimizer: Optimizer::Adam,
            seed: 0,
            timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.val_every == 0 || self.runs == 0 {
            return invalid("batch size, validation interval and run count must be positive");
        }
        LrSchedule::new(self.lr, self.tolerance)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub run: usize,
    pub step: usize,
    pub train_loss: f64,
    pub val_error: f64,
    pub best_val: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub best_val: f64,
    pub best_step: usize,
    pub steps: usize,
    pub diverged: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogEntry>,
    pub runs: Vec<RunSummary>,
}

/// `(1/B) Σ_b ‖𝒩_θ(i_b) − t_b‖²` with the discrete seminorm of cell volume `vol`.
pub fn data_loss_tape(t: &mut Tape, spec: &OperatorSpec, theta: Var, inputs: &Tensor, targets: &Tensor, vol: f64) -> Result<Var> {
    if inputs.len() != targets.len() {
        return shape(format!("{} input values, {} target values", inputs.len(), targets.len()));
    }
    let y = spec.forward(t, theta, inputs)?;
    let b = inputs.len() / spec.points();
    let target = t.constant(targets.clone().reshape(t.value(y).shape())?);
    let r = t.sub(y, target)?;
    let sq = t.square(r)?;
    let s = t.sum(sq)?;
    t.scale(s, vol / b as f64)
}

/// `(1/K Σ_k ‖𝒩_θ(i_k) − t_k‖²)^{1/2}` over a whole dataset, evaluated in chunks.
pub fn dataset_l2_error(spec: &OperatorSpec, theta: &[f64], ds: &Dataset) -> Result<f64> {
    check_grid(spec, ds)?;
    if ds.is_empty() {
        return invalid("cannot evaluate on an empty dataset");
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut acc = 0.0;
    for chunk in idx.chunks(64) {
        let (x, y) = ds.batch(chunk);
        let out = spec.apply_batch(theta, &x)?;
        acc += out.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((acc * ds.inputs[0].cell_volume() / ds.len() as f64).sqrt())
}

/// `(1/K Σ_k ‖t_k‖²)^{1/2}`, the scale for relative errors.
pub fn dataset_target_norm(ds: &Dataset) -> f64 {
    let s: f64 = ds.targets.iter().map(|g| g.cell_volume() * g.data().iter().map(|v| v * v).sum::<f64>()).sum();
    (s / ds.len().max(1) as f64).sqrt()
}

fn check_grid(spec: &OperatorSpec, ds: &Dataset) -> Result<()> {
    if spec.extents() != ds.meta.extents.as_slice() {
        return shape(format!("operator grid {:?} differs from dataset grid {:?}", spec.extents(), ds.meta.extents));
    }
    Ok(())
}

/// Index of the run with the smallest finite validation error.
pub fn select_best(runs: &[RunSummary]) -> Option<usize> {
    runs.iter()
        .enumerate()
        .filter(|(_, r)| r.best_val.is_finite())
        .min_by(|a, b| a.1.best_val.total_cmp(&b.1.best_val))
        .map(|(i, _)| i)
}

struct RunResult {
    summary: RunSummary,
    params: Vec<f64>,
    log: Vec<LogEntry>,
}

fn train_run(spec: &OperatorSpec, train: &Dataset, val: &Dataset, cfg: &TrainConfig, run: usize) -> Result<RunResult> {
    let rng = RngState::new(cfg.seed).split(run as u64);
    let mut theta = spec.init(&mut rng.split(0)).values;
    let mut batches = rng.split(1);
    let mut sched = LrSchedule::new(cfg.lr, cfg.tolerance)?;
    let mut adam = AdamState::new(theta.len());
    let vol = train.inputs[0].cell_volume();
    let mut log = Vec::new();

    let v0 = dataset_l2_error(spec, &theta, val)?;
    sched.observe(v0);
    let mut best = theta.clone();
    let mut best_step = 0;
    log.push(LogEntry { run, step: 0, train_loss: f64::NAN, val_error: v0, best_val: sched.best, lr: sched.lr });

    let mut steps = 0;
    let mut diverged = false;
    let mut last_loss = f64::NAN;
    for step in 1..=cfg.max_steps {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| batches.next_index(train.len())).collect();
        let (x, y) = train.batch(&idx);
        let (loss, g) = value_and_grad(&theta, |t, th| data_loss_tape(t, spec, th, &x, &y, vol))?;
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        last_loss = loss;
        match cfg.optimizer {
            Optimizer::Sgd => sgd_step(&mut theta, std::slice::from_ref(&g), sched.lr)?,
            Optimizer::Adam => adam_step(&mut adam, &mut theta, &g, sched.lr)?,
        }
        steps = step;
        if step % cfg.val_every == 0 || step == cfg.max_steps {
            let v = dataset_l2_error(spec, &theta, val)?;
            let verdict = sched.observe(v);
            if verdict.improved {
                best.clone_from(&theta);
                best_step = step;
            }
            log.push(LogEntry { run, step, train_loss: loss, val_error: v, best_val: sched.best, lr: sched.lr });
            if verdict.stop {
                break;
            }
        }
    }
    if diverged {
        log.push(LogEntry { run, step: steps + 1, train_loss: f64::INFINITY, val_error: f64::NAN, best_val: sched.best, lr: sched.lr });
    } else if steps > 0 && log.last().map(|e| e.step) != Some(steps) {
        log.push(LogEntry { run, step: steps, train_loss: last_loss, val_error: f64::NAN, best_val: sched.best, lr: sched.lr });
    }
    Ok(RunResult { summary: RunSummary { run, best_val: sched.best, best_step, steps, diverged }, params: best, log })
}

/// Trains `cfg.runs` independent initializations and keeps the parameters
/// with the best validation error. A run whose loss turns non-finite stops
/// early; its best checkpoint so far still competes.
pub fn train(name: &str, spec: &OperatorSpec, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    check_grid(spec, train)?;
    check_grid(spec, val)?;
    if train.is_empty() || val.is_empty() {
        return invalid("training and validation sets must be nonempty");
    }
    let start = Instant::now();
    let mut results = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        results.push(train_run(spec, train, val, cfg, run)?);
    }
    let summaries: Vec<RunSummary> = results.iter().map(|r| r.summary.clone()).collect();
    let best = select_best(&summaries).ok_or_else(|| Error::Numerical("every training run diverged before validation".into()))?;
    let total_steps = summaries.iter().map(|s| s.steps).sum();
    let elapsed = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let r = &results[best];
    let meta = TrainingMeta {
        name: name.to_string(),
        seed: cfg.seed,
        run: best,
        steps: r.summary.best_step,
        total_steps,
        best_validation: r.summary.best_val,
        training_time: elapsed,
    };
    let checkpoint = Checkpoint::new(spec.clone(), ParamVector { values: r.params.clone() }, meta)?;
    let log = results.into_iter().flat_map(|r| r.log).collect();
    Ok(TrainOutcome { checkpoint, log, runs: summaries })
}
