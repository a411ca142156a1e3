//! Alternating lower/upper training with unrolled hypergradients.
//!
//! One iteration accumulates `lower_accumulation` training samples into a
//! single lower step φ′ = φ − β1·Σ α_i ∇ℓ_i(φ), evaluates the unweighted meta
//! loss of `upper_accumulation` meta samples at φ′, differentiates it through
//! the step with respect to the weight parameters, updates them with β2 and
//! commits φ′.

mod judge_task;
mod optim;

pub use crate::manifest::RunManifest;
pub use judge_task::{
    pairwise_accuracy, train_judge, train_manifest, BilevelCheckpoint, JudgeItem, JudgeTask,
    TaskSample, TrainOutcome,
};
pub use optim::{Adam, EpochSampler, OptimizerKind};

use crate::diffcore::{DiffError, Tape, Var};
use crate::judge::{JudgeError, Objective};
use crate::reweight::{
    dispersion, ReweightError, SampleKey, Strategy, StrategyKind, TrajectoryRow,
};
use crate::rng::{derive_seed, seeded, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BilevelError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient for {split} sample {index}: {source}")]
    NonFinite {
        split: Split,
        index: usize,
        source: DiffError,
    },
    #[error("empty meta batch")]
    EmptyMetaBatch,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Reweight(#[from] ReweightError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Meta,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Meta => "meta",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub unroll_steps: usize,
    pub lower_accumulation: usize,
    pub upper_accumulation: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub objective: Objective,
    pub strategy: StrategyKind,
    pub optimizer: OptimizerKind,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub log_every: usize,
    pub hidden: usize,
    /// Largest L2 norm of a hypergradient before the upper step. Longer
    /// hypergradients are rescaled to this length. `None` leaves them as is.
    #[serde(default)]
    pub upper_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 1e-3,
            beta2: 1e-2,
            unroll_steps: 1,
            lower_accumulation: 16,
            upper_accumulation: 8,
            max_iterations: 2_000,
            seed: 0,
            objective: Objective::Dpo,
            strategy: StrategyKind::Domain,
            optimizer: OptimizerKind::Sgd,
            convergence_window: 200,
            convergence_tol: 1e-5,
            log_every: 20,
            hidden: crate::judge::DEFAULT_HIDDEN,
            upper_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), BilevelError> {
        let fail = |m: &str| Err(BilevelError::Config(m.to_string()));
        if !(self.beta1 > 0.0 && self.beta1.is_finite()) {
            return fail("beta1 must be positive");
        }
        if !(self.beta2 > 0.0 && self.beta2.is_finite()) {
            return fail("beta2 must be positive");
        }
        if self.unroll_steps == 0 {
            return fail("unroll_steps must be at least 1");
        }
        if self.lower_accumulation == 0 || self.upper_accumulation == 0 {
            return fail("accumulation sizes must be at least 1");
        }
        if self.log_every == 0 {
            return fail("log_every must be at least 1");
        }
        if self.hidden == 0 {
            return fail("hidden width must be at least 1");
        }
        if self.upper_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return fail("upper_clip must be positive");
        }
        if self.optimizer == OptimizerKind::Adam && self.unroll_steps > 1 {
            return fail("adam is only supported with unroll_steps = 1");
        }
        Ok(())
    }
}

/// A lower/upper problem the trainer can drive.
pub trait Task: Sync {
    type Item: Send + Sync;

    fn num_params(&self) -> usize;
    fn train_len(&self) -> usize;
    fn meta_len(&self) -> usize;
    fn num_domains(&self) -> usize;
    fn domain_of(&self, train_index: usize) -> usize;

    /// Realizes the randomness sample `index` needs at parameters `phi`
    /// (for example a rollout group). Deterministic given `rng`.
    fn item(
        &self,
        split: Split,
        index: usize,
        phi: &[f64],
        rng: &mut Stream,
    ) -> Result<Self::Item, BilevelError>;

    /// Records ℓ(item) as a function of the bound parameters.
    fn loss(&self, tape: &mut Tape, params: &[Var], item: &Self::Item) -> Var;
}

/// Loss value and gradient of one realized sample at `phi`.
pub fn sample_grad<T: Task>(
    task: &T,
    phi: &[f64],
    item: &T::Item,
    split: Split,
    index: usize,
) -> Result<(f64, Vec<f64>), BilevelError> {
    let mut tape = Tape::new();
    let params = tape.params(phi);
    let l = task.loss(&mut tape, &params, item);
    let wrap = |source| BilevelError::NonFinite {
        split,
        index,
        source,
    };
    tape.check_finite().map_err(wrap)?;
    let g = tape.backward(l).map_err(wrap)?;
    if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
        return Err(wrap(DiffError::NonFinite {
            node: l,
            op: tape.op_kind(l),
            value: *bad,
        }));
    }
    Ok((tape.value(l), g))
}

/// H(ℓ(item))·v at `phi`.
pub fn sample_hvp<T: Task>(task: &T, phi: &[f64], item: &T::Item, v: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let params = tape.params(phi);
    let l = task.loss(&mut tape, &params, item);
    tape.hvp(l, v).expect("dimensions match")
}

/// Per-sample quantities of one accumulated lower batch.
#[derive(Debug, Clone)]
pub struct LowerPass<I> {
    pub indices: Vec<usize>,
    pub keys: Vec<SampleKey>,
    pub items: Vec<I>,
    pub losses: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl<I> LowerPass<I> {
    /// Σ α_i ∇ℓ_i accumulated in sample order.
    pub fn weighted_grad(&self, dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; dim];
        for (w, gi) in self.weights.iter().zip(&self.grads) {
            for (a, b) in g.iter_mut().zip(gi) {
                *a += w * b;
            }
        }
        g
    }

    pub fn weighted_loss(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.losses)
            .map(|(w, l)| w * l)
            .sum()
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len().max(1) as f64
    }
}

fn sample_stream(
    seed: u64,
    iteration: usize,
    split: Split,
    step: usize,
    position: usize,
) -> Stream {
    seeded(derive_seed(
        seed,
        &format!("item/{iteration}/{split}/{step}/{position}"),
    ))
}

/// Realizes a batch in parallel from one stream per batch position.
pub fn realize<T: Task>(
    task: &T,
    split: Split,
    phi: &[f64],
    indices: &[usize],
    mut stream_for: impl FnMut(usize) -> Stream,
) -> Result<Vec<T::Item>, BilevelError> {
    let streams: Vec<Stream> = (0..indices.len()).map(&mut stream_for).collect();
    indices
        .par_iter()
        .zip(streams.into_par_iter())
        .map(|(&index, mut rng)| task.item(split, index, phi, &mut rng))
        .collect()
}

/// Losses and gradients of realized items at `phi`, in batch order.
pub fn batch_grads<T: Task>(
    task: &T,
    split: Split,
    phi: &[f64],
    indices: &[usize],
    items: &[T::Item],
) -> Result<Vec<(f64, Vec<f64>)>, BilevelError> {
    indices
        .par_iter()
        .zip(items.par_iter())
        .map(|(&index, item)| sample_grad(task, phi, item, split, index))
        .collect()
}

/// One loss-history row. `meta_loss` is absent when no upper step ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub weighted_train_loss: f64,
    pub meta_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRecord {
    pub iteration: usize,
    pub dispersion: f64,
}

pub fn loss_csv(rows: &[LossRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn dispersion_csv(rows: &[DispersionRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub phi: Vec<f64>,
    pub strategy: Strategy,
    pub iteration: usize,
    pub history: Vec<LossRecord>,
    pub trajectory: Vec<TrajectoryRow>,
    pub dispersion: Vec<DispersionRecord>,
    /// Most recent unweighted loss of every training sample; the net
    /// strategy's trajectory is logged at these losses.
    pub last_loss: Vec<f64>,
    pub converged: bool,
    lower: EpochSampler,
    upper: EpochSampler,
    lower_opt: Option<Adam>,
    upper_opt: Option<Adam>,
    seed: u64,
}

impl TrainState {
    pub fn new<T: Task>(
        task: &T,
        config: &TrainConfig,
        phi: Vec<f64>,
        strategy: Strategy,
    ) -> Result<Self, BilevelError> {
        config.validate()?;
        if task.train_len() == 0 {
            return Err(BilevelError::EmptyTrainingSet);
        }
        if phi.len() != task.num_params() {
            return Err(BilevelError::Config(format!(
                "parameter vector has {} entries, task expects {}",
                phi.len(),
                task.num_params()
            )));
        }
        let adam = |n| (config.optimizer == OptimizerKind::Adam).then(|| Adam::new(n));
        Ok(Self {
            lower_opt: adam(phi.len()),
            upper_opt: adam(strategy.num_raw()),
            phi,
            strategy,
            iteration: 0,
            history: Vec::new(),
            trajectory: Vec::new(),
            dispersion: Vec::new(),
            last_loss: vec![0.0; task.train_len()],
            converged: false,
            lower: EpochSampler::new(
                task.train_len(),
                seeded(derive_seed(config.seed, "lower-sampling")),
            ),
            upper: EpochSampler::new(
                task.meta_len(),
                seeded(derive_seed(config.seed, "upper-sampling")),
            ),
            seed: config.seed,
        })
    }

    fn key<T: Task>(task: &T, index: usize) -> SampleKey {
        SampleKey {
            index,
            domain: task.domain_of(index),
        }
    }

    /// Per-sample losses, gradients and weights at the current φ.
    pub fn lower_pass<T: Task>(
        &self,
        task: &T,
        phi: &[f64],
        indices: &[usize],
        step: usize,
    ) -> Result<LowerPass<T::Item>, BilevelError> {
        let items = self.realize(task, Split::Train, phi, indices, step)?;
        let evaluated = batch_grads(task, Split::Train, phi, indices, &items)?;
        let mut pass = LowerPass {
            indices: indices.to_vec(),
            keys: Vec::with_capacity(indices.len()),
            items: Vec::with_capacity(indices.len()),
            losses: Vec::with_capacity(indices.len()),
            grads: Vec::with_capacity(indices.len()),
            weights: Vec::with_capacity(indices.len()),
        };
        for ((&index, item), (l, g)) in indices.iter().zip(items).zip(evaluated) {
            let key = Self::key(task, index);
            pass.weights.push(self.strategy.weight_of(key, l)?);
            pass.keys.push(key);
            pass.items.push(item);
            pass.losses.push(l);
            pass.grads.push(g);
        }
        Ok(pass)
    }

    /// Lower update direction and, for Adam, the diagonal preconditioner the
    /// hypergradient treats as constant.
    fn lower_direction(&mut self, g: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        match &mut self.lower_opt {
            None => (g.to_vec(), None),
            Some(adam) => {
                let (d, p) = adam.step(g);
                (d, Some(p))
            }
        }
    }

    /// Plain weighted step with α held constant: φ ← φ − β1·Σ α_i ∇ℓ_i(φ).
    pub fn lower_step<T: Task>(
        &mut self,
        task: &T,
        indices: &[usize],
        beta1: f64,
    ) -> Result<LowerPass<T::Item>, BilevelError> {
        let pass = self.lower_pass(task, &self.phi, indices, 0)?;
        let g = pass.weighted_grad(self.phi.len());
        let (d, _) = self.lower_direction(&g);
        for (p, di) in self.phi.iter_mut().zip(&d) {
            *p -= beta1 * di;
        }
        for (&i, &l) in pass.indices.iter().zip(&pass.losses) {
            self.last_loss[i] = l;
        }
        Ok(pass)
    }

    /// Realizes `indices` with this iteration's per-position streams.
    pub fn realize<T: Task>(
        &self,
        task: &T,
        split: Split,
        phi: &[f64],
        indices: &[usize],
        step: usize,
    ) -> Result<Vec<T::Item>, BilevelError> {
        let (seed, it) = (self.seed, self.iteration);
        realize(task, split, phi, indices, |p| {
            sample_stream(seed, it, split, step, p)
        })
    }

    /// Mean meta loss and the gradient of the summed meta loss at `phi`.
    pub fn meta_grad<T: Task>(
        &self,
        task: &T,
        phi: &[f64],
        indices: &[usize],
        items: &[T::Item],
    ) -> Result<(f64, Vec<f64>), BilevelError> {
        if indices.is_empty() {
            return Err(BilevelError::EmptyMetaBatch);
        }
        let evaluated = batch_grads(task, Split::Meta, phi, indices, items)?;
        let mut g = vec![0.0; phi.len()];
        let mut total = 0.0;
        for (l, gi) in &evaluated {
            total += l;
            for (a, b) in g.iter_mut().zip(gi) {
                *a += b;
            }
        }
        Ok((total / indices.len() as f64, g))
    }

    /// Updates the weight parameters from a hypergradient.
    pub fn apply_upper(&mut self, hyper: &[f64], beta2: f64) {
        let direction = match &mut self.upper_opt {
            None => hyper.to_vec(),
            Some(adam) => adam.step(hyper).0,
        };
        for (u, d) in self.strategy.raw_mut().iter_mut().zip(&direction) {
            *u -= beta2 * d;
        }
    }

    /// Hypergradient of the meta loss over the weight parameters through
    /// `passes.len()` virtual lower steps taken from `phis[0]`. `phis[k]` is
    /// the iterate at which `passes[k]` was evaluated; `meta_grad` is taken
    /// at the final iterate.
    pub fn hypergradient<T: Task>(
        &self,
        task: &T,
        phis: &[Vec<f64>],
        passes: &[LowerPass<T::Item>],
        meta_grad: &[f64],
        beta1: f64,
        preconditioner: Option<&[f64]>,
    ) -> Result<Vec<f64>, BilevelError> {
        let mut v = meta_grad.to_vec();
        let mut hyper = vec![0.0; self.strategy.num_raw()];
        for k in (0..passes.len()).rev() {
            let pass = &passes[k];
            let scaled: Vec<f64> = match preconditioner {
                Some(p) => v.iter().zip(p).map(|(a, b)| a * b).collect(),
                None => v.clone(),
            };
            let h = self.strategy.strategy_grad(
                &pass.keys,
                &pass.losses,
                &pass.grads,
                &scaled,
                beta1,
            )?;
            for (a, b) in hyper.iter_mut().zip(&h) {
                *a += b;
            }
            if k > 0 {
                // v ← (I − β1·Σ α_i H_i(φ_k))·v
                let hvps: Vec<Vec<f64>> = pass
                    .items
                    .par_iter()
                    .map(|item| sample_hvp(task, &phis[k], item, &v))
                    .collect();
                let mut next = v.clone();
                for (w, hv) in pass.weights.iter().zip(&hvps) {
                    for (a, b) in next.iter_mut().zip(hv) {
                        *a -= beta1 * w * b;
                    }
                }
                v = next;
            }
        }
        Ok(hyper)
    }

    /// One full iteration: virtual lower step(s), upper step, commit.
    pub fn iterate<T: Task>(&mut self, task: &T, config: &TrainConfig) -> Result<(), BilevelError> {
        let mut phis = vec![self.phi.clone()];
        let mut passes = Vec::with_capacity(config.unroll_steps);
        let mut preconditioner = None;
        for step in 0..config.unroll_steps {
            let indices = self.lower.next_batch(config.lower_accumulation);
            let pass = self.lower_pass(task, &phis[step], &indices, step)?;
            let g = pass.weighted_grad(self.phi.len());
            let (d, p) = self.lower_direction(&g);
            preconditioner = p;
            let next: Vec<f64> = phis[step]
                .iter()
                .zip(&d)
                .map(|(x, di)| x - config.beta1 * di)
                .collect();
            phis.push(next);
            passes.push(pass);
        }
        let phi_prime = phis.last().expect("at least one step").clone();

        let meta_loss = if self.strategy.kind() == StrategyKind::None {
            None
        } else {
            let meta = self.upper.next_batch(config.upper_accumulation);
            let items = self.realize(task, Split::Meta, &phi_prime, &meta, 0)?;
            let (meta_loss, meta_grad) = self.meta_grad(task, &phi_prime, &meta, &items)?;
            let mut hyper = self.hypergradient(
                task,
                &phis,
                &passes,
                &meta_grad,
                config.beta1,
                preconditioner.as_deref(),
            )?;
            if let Some(clip) = config.upper_clip {
                clip_norm(&mut hyper, clip);
            }
            self.apply_upper(&hyper, config.beta2);
            Some(meta_loss)
        };

        self.phi = phi_prime;
        let first = &passes[0];
        for pass in &passes {
            for (&i, &l) in pass.indices.iter().zip(&pass.losses) {
                self.last_loss[i] = l;
            }
        }
        self.history.push(LossRecord {
            iteration: self.iteration,
            train_loss: first.mean_loss(),
            weighted_train_loss: first.weighted_loss(),
            meta_loss,
        });
        self.iteration += 1;
        Ok(())
    }

    /// Appends the current weights to the trajectory and dispersion logs.
    pub fn log_weights(&mut self, domain_names: &[crate::minilang::Domain]) {
        let snapshot = self.strategy.snapshot(domain_names, &self.last_loss);
        let kind = self.strategy.kind();
        let weights: Vec<f64> = snapshot.iter().map(|(_, w)| *w).collect();
        self.dispersion.push(DispersionRecord {
            iteration: self.iteration,
            dispersion: dispersion(&weights).unwrap_or(0.0),
        });
        self.trajectory
            .extend(snapshot.into_iter().map(|(key, w)| TrajectoryRow {
                iteration: self.iteration,
                strategy: kind,
                key,
                effective_weight: w,
            }));
    }

    /// Relative change between the means of the last two windows of the
    /// meta loss (train loss when no upper step runs) fell below `tol`.
    pub fn has_converged(&self, window: usize, tol: f64) -> bool {
        if window == 0 || self.history.len() < 2 * window {
            return false;
        }
        let series: Vec<f64> = self
            .history
            .iter()
            .map(|r| r.meta_loss.unwrap_or(r.train_loss))
            .collect();
        let n = series.len();
        let recent = series[n - window..].iter().sum::<f64>() / window as f64;
        let before = series[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
        (recent - before).abs() <= tol * before.abs().max(f64::MIN_POSITIVE)
    }

    /// Fills `last_loss` by evaluating every training sample at the current φ.
    pub fn refresh_losses<T: Task>(&mut self, task: &T) -> Result<(), BilevelError> {
        let indices: Vec<usize> = (0..task.train_len()).collect();
        let seed = self.seed;
        let items = realize(task, Split::Train, &self.phi, &indices, |p| {
            seeded(derive_seed(seed, &format!("refresh/{p}")))
        })?;
        let evaluated = batch_grads(task, Split::Train, &self.phi, &indices, &items)?;
        for (i, (l, _)) in evaluated.into_iter().enumerate() {
            self.last_loss[i] = l;
        }
        Ok(())
    }
}

/// Rescales `v` to L2 norm `max` when it is longer.
pub fn clip_norm(v: &mut [f64], max: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max {
        let s = max / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Runs iterations until `max_iterations` or convergence, logging weights
/// at iteration 0, every `log_every` iterations and at the end.
pub fn run<T: Task>(
    task: &T,
    config: &TrainConfig,
    state: &mut TrainState,
    domain_names: &[crate::minilang::Domain],
) -> Result<(), BilevelError> {
    if state.strategy.kind() == StrategyKind::Net {
        state.refresh_losses(task)?;
    }
    state.log_weights(domain_names);
    while state.iteration < config.max_iterations {
        state.iterate(task, config)?;
        if state.iteration.is_multiple_of(config.log_every) {
            state.log_weights(domain_names);
        }
        if state.has_converged(config.convergence_window, config.convergence_tol) {
            state.converged = true;
            break;
        }
    }
    if !state.iteration.is_multiple_of(config.log_every) {
        state.log_weights(domain_names);
    }
    Ok(())
}
