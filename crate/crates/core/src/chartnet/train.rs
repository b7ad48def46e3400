//! AdamW training loops for the distance (chart) and fingerprinting objectives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::ArchSpec;
use super::loss::{fp_terms, siamese_terms};
use super::net::{build_model, frame_input, ModelParams, Trace};

use crate::distgraph::{sample_pairs, SparseDistanceMatrix};
use crate::geom::{mix_seed, Vec2};
use crate::mesh::CirFrame;
use crate::{Error, Result};

/// Above this many bytes of cached activations a batch is processed in two
/// passes (outputs first, then per-sample forward/backward).
const TRACE_BUDGET_BYTES: usize = 256 << 20;
const PLATEAU_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub plateau_patience: usize,
    pub lr_decay: f64,
    pub weight_decay: f64,
    /// Integration window of the distance matrix, seconds.
    pub window: f64,
    /// Distance floor of the pair weight, meters.
    pub beta_floor: f64,
    pub seed: u64,
    /// Fixed number of optimizer steps per epoch; `None` means one pass over
    /// the data (`ceil(entries / batch)` steps).
    pub steps_per_epoch: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lr: 1e-4,
            batch: 128,
            epochs: 500,
            plateau_patience: 50,
            lr_decay: 0.5,
            weight_decay: 0.01,
            window: 40.0,
            beta_floor: 0.25,
            seed: 0,
            steps_per_epoch: None,
        }
    }
}

impl HyperParams {
    /// Short schedule sized for a single CPU core.
    pub fn desk() -> Self {
        HyperParams {
            lr: 3e-3,
            batch: 32,
            epochs: 40,
            plateau_patience: 5,
            steps_per_epoch: Some(160),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.lr_decay, self.window, self.beta_floor];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::config(
                "lr, lr_decay, window and beta_floor must be positive",
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        if self.batch == 0 || self.plateau_patience == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::config(
                "batch, patience and steps per epoch must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p *= decay;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without an improvement of the best epoch loss.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records an epoch loss; returns the new learning rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - PLATEAU_THRESHOLD {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return lr * self.factor;
        }
        lr
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean step loss of every epoch.
    pub loss_history: Vec<f64>,
}

/// Loss and parameter gradient for a set of distinct inputs. `loss` maps the
/// outputs to the scalar loss and per-output derivatives.
pub fn batch_gradient<F>(params: &ModelParams, inputs: &[&[f64]], loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Vec2]) -> (f64, Vec<Vec2>),
{
    if inputs.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    if params.trace_bytes().saturating_mul(inputs.len()) <= TRACE_BUDGET_BYTES {
        return super::net::gradient(params, inputs, loss);
    }
    let outputs = inputs
        .iter()
        .map(|x| params.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let (value, douts) = loss(&outputs);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss is {value}")));
    }
    let mut grad = vec![0.0; params.len()];
    for (x, dout) in inputs.iter().zip(douts) {
        let trace: Trace = params.trace(x)?;
        params.backward(&trace, dout, &mut grad);
    }
    params.check_gradient(&grad)?;
    Ok((value, grad))
}

fn check_frames(arch: &ArchSpec, frames: &[CirFrame]) -> Result<()> {
    if let Some(f) = frames
        .iter()
        .find(|f| f.num_links != arch.link_count || f.tap_count != arch.tap_count)
    {
        return Err(Error::domain(format!(
            "frame is {} links × {} taps, network expects {} × {}",
            f.num_links, f.tap_count, arch.link_count, arch.tap_count
        )));
    }
    Ok(())
}

struct Trainer {
    params: ModelParams,
    opt: AdamW,
    sched: PlateauScheduler,
    history: Vec<f64>,
}

impl Trainer {
    fn new(arch: &ArchSpec, hyper: &HyperParams) -> Result<Self> {
        hyper.validate()?;
        let params = build_model(arch, hyper.seed)?;
        let opt = AdamW::new(params.len(), hyper.lr, hyper.weight_decay);
        Ok(Trainer {
            params,
            opt,
            sched: PlateauScheduler::new(hyper.plateau_patience, hyper.lr_decay),
            history: Vec::new(),
        })
    }

    fn end_epoch(&mut self, epoch: usize, losses: &[f64]) {
        let mean = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        self.history.push(mean);
        let lr = self.sched.observe(mean, self.opt.lr);
        if lr != self.opt.lr {
            log::debug!("epoch {epoch}: lr {} -> {lr}", self.opt.lr);
            self.opt.lr = lr;
        }
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
    }

    fn finish(self) -> TrainOutcome {
        TrainOutcome {
            params: self.params,
            loss_history: self.history,
        }
    }
}

fn with_context(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, step {step}: {msg}")),
        other => other,
    }
}

/// Trains the chart network on pairs drawn from `matrix`. `frames` must be
/// normalized and indexed like the matrix.
pub fn train_chart(
    arch: &ArchSpec,
    frames: &[CirFrame],
    matrix: &SparseDistanceMatrix,
    hyper: &HyperParams,
) -> Result<TrainOutcome> {
    check_frames(arch, frames)?;
    if let Some(e) = matrix.entries.iter().find(|e| e.j >= frames.len()) {
        return Err(Error::domain(format!(
            "distance entry ({}, {}) refers past the {} frames",
            e.i,
            e.j,
            frames.len()
        )));
    }
    let mut trainer = Trainer::new(arch, hyper)?;
    if hyper.epochs == 0 {
        return Ok(trainer.finish());
    }
    if matrix.is_empty() {
        return Err(Error::domain("distance matrix is empty"));
    }
    let mut inputs: Vec<Option<Vec<f64>>> = vec![None; frames.len()];
    for i in matrix.node_indices() {
        inputs[i] = Some(frame_input(&frames[i]));
    }
    let steps = hyper
        .steps_per_epoch
        .unwrap_or_else(|| matrix.len().div_ceil(hyper.batch));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, 1));
    let floor = hyper.beta_floor;

    for epoch in 0..hyper.epochs {
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let pairs = sample_pairs(matrix, hyper.batch, &mut rng)?;
            let mut unique: Vec<usize> = pairs.iter().flat_map(|p| [p.i, p.j]).collect();
            unique.sort_unstable();
            unique.dedup();
            let batch: Vec<&[f64]> = unique
                .iter()
                .map(|&i| inputs[i].as_deref().expect("matrix index has an input"))
                .collect();
            let slot = |i: usize| unique.binary_search(&i).unwrap();
            let scale = 1.0 / pairs.len() as f64;
            let (loss, grad) = batch_gradient(&trainer.params, &batch, |out| {
                let mut d = vec![Vec2::zeros(); out.len()];
                let mut total = 0.0;
                for p in &pairs {
                    let (a, b) = (slot(p.i), slot(p.j));
                    let (l, ga, gb) = siamese_terms(out[a], out[b], p.d, floor);
                    total += l;
                    d[a] += ga * scale;
                    d[b] += gb * scale;
                }
                (total * scale, d)
            })
            .map_err(|e| with_context(e, epoch, step))?;
            trainer.opt.step(&mut trainer.params.theta, &grad);
            losses.push(loss);
        }
        trainer.end_epoch(epoch, &losses);
    }
    Ok(trainer.finish())
}

/// Supervised fingerprinting: regress `positions[k]` from `frames[k]`.
pub fn train_fp(
    arch: &ArchSpec,
    frames: &[CirFrame],
    positions: &[Vec2],
    hyper: &HyperParams,
) -> Result<TrainOutcome> {
    check_frames(arch, frames)?;
    if frames.len() != positions.len() {
        return Err(Error::domain(format!(
            "{} frames but {} reference positions",
            frames.len(),
            positions.len()
        )));
    }
    let mut trainer = Trainer::new(arch, hyper)?;
    if hyper.epochs == 0 {
        return Ok(trainer.finish());
    }
    if frames.is_empty() {
        return Err(Error::domain("no labeled samples"));
    }
    // Start the output at the mean reference position so the optimizer does
    // not spend its first steps learning the offset.
    let mean = positions.iter().sum::<Vec2>() / positions.len() as f64;
    let out = trainer.params.layers.convs[trainer.params.layers.dense_out];
    trainer.params.theta[out.bias_offset..out.bias_offset + 2].copy_from_slice(mean.as_slice());
    let inputs: Vec<Vec<f64>> = frames.iter().map(frame_input).collect();
    let batch_size = hyper.batch.min(frames.len());
    let steps = hyper
        .steps_per_epoch
        .unwrap_or_else(|| frames.len().div_ceil(batch_size));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, 2));
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut cursor = order.len();

    for epoch in 0..hyper.epochs {
        if hyper.steps_per_epoch.is_none() {
            cursor = order.len();
        }
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let mut idx = Vec::with_capacity(batch_size);
            while idx.len() < batch_size {
                if cursor >= order.len() {
                    if hyper.steps_per_epoch.is_none() && !idx.is_empty() {
                        break;
                    }
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            let batch: Vec<&[f64]> = idx.iter().map(|&i| inputs[i].as_slice()).collect();
            let scale = 1.0 / idx.len() as f64;
            let (loss, grad) = batch_gradient(&trainer.params, &batch, |out| {
                let mut total = 0.0;
                let d = out
                    .iter()
                    .zip(&idx)
                    .map(|(o, &i)| {
                        let (l, g) = fp_terms(*o, positions[i]);
                        total += l;
                        g * scale
                    })
                    .collect();
                (total * scale, d)
            })
            .map_err(|e| with_context(e, epoch, step))?;
            trainer.opt.step(&mut trainer.params.theta, &grad);
            losses.push(loss);
        }
        trainer.end_epoch(epoch, &losses);
    }
    Ok(trainer.finish())
}
