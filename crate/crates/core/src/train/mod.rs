//! Contrastive fine-tuning of the toy encoder.

mod batch;
mod loss;
mod optim;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use batch::{build_batches, Batch, BatchOptions, BatchSampler, MIXED_DATASET};
pub use loss::{infonce_loss, LossVariant};
pub use optim::{adamw_step, lr_schedule, AdamWState, BETA1, BETA2, EPSILON};

use crate::data::{apply_prefix, TrainingPair};
use crate::embed::{tokenize, BatchForward, Pooling, ToyParams, DEFAULT_MAX_TOKENS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub temperature: f64,
    pub n_hard: usize,
    pub batch_size: usize,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub stratified: bool,
    pub prefixes_enabled: bool,
    pub variant: LossVariant,
    pub seed: u64,
    pub max_tokens: usize,
    pub pooling: Pooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            temperature: 0.02,
            n_hard: 7,
            batch_size: 16,
            total_steps: 200,
            warmup_steps: 200,
            lr: 1e-2,
            weight_decay: 0.01,
            stratified: true,
            prefixes_enabled: true,
            variant: LossVariant::default(),
            seed: 0,
            max_tokens: DEFAULT_MAX_TOKENS,
            pooling: Pooling::Cls,
        }
    }
}

impl TrainConfig {
    /// Batch size and learning rate used at full model scale.
    pub const FULL_SCALE_BATCH_SIZE: usize = 128;
    pub const FULL_SCALE_LR: f64 = 1e-5;

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.batch_size == 0 || self.max_tokens == 0 {
            return Err(Error::InvalidInput(
                "batch_size and max_tokens must be at least 1".into(),
            ));
        }
        // A zero-step run is an identity regardless of warmup.
        if self.total_steps > 0 && self.warmup_steps > self.total_steps {
            return Err(Error::InvalidInput(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidInput(
                "lr and weight_decay must be finite and >= 0".into(),
            ));
        }
        self.variant.validate()
    }

    pub fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            batch_size: self.batch_size,
            n_hard: self.n_hard,
            stratified: self.stratified,
            prefixes_enabled: self.prefixes_enabled,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: ToyParams,
    pub log: Vec<StepLog>,
}

fn forward(params: &ToyParams, texts: &[(String, crate::data::PrefixKind)], cfg: &TrainConfig) -> BatchForward {
    let tokens = texts
        .iter()
        .map(|(t, p)| tokenize(&apply_prefix(*p, t), params.vocab_size, cfg.max_tokens))
        .collect();
    BatchForward::run(params, tokens, cfg.pooling)
}

/// Contrastive loss of one batch and its exact gradient with respect to every
/// parameter, through both encoders' forward passes.
pub fn batch_loss_and_grad(params: &ToyParams, batch: &Batch, cfg: &TrainConfig) -> Result<(f64, ToyParams)> {
    let d = params.dim;
    let qf = forward(params, &batch.queries, cfg);
    let df = forward(params, &batch.documents, cfg);
    let (nq, nd) = (batch.queries.len(), batch.documents.len());
    let mut scores = vec![0.0; nq * nd];
    for (i, qe) in qf.encoded.iter().enumerate() {
        for (j, de) in df.encoded.iter().enumerate() {
            scores[i * nd + j] = crate::embed::dot(&qe.y, &de.y);
        }
    }
    let (loss, ds) = infonce_loss(&scores, nq, nd, &batch.pos_index, cfg.temperature, &cfg.variant)?;
    let mut up_q = vec![0.0; nq * d];
    let mut up_d = vec![0.0; nd * d];
    for i in 0..nq {
        for j in 0..nd {
            let g = ds[i * nd + j];
            if g == 0.0 {
                continue;
            }
            let (qy, dy) = (&qf.encoded[i].y, &df.encoded[j].y);
            for k in 0..d {
                up_q[i * d + k] += g * dy[k];
                up_d[j * d + k] += g * qy[k];
            }
        }
    }
    let mut grads = params.zeros_like();
    qf.backward(params, &up_q, &mut grads);
    df.backward(params, &up_d, &mut grads);
    Ok((loss, grads))
}

/// Loss of one batch without the gradient.
pub fn batch_loss(params: &ToyParams, batch: &Batch, cfg: &TrainConfig) -> Result<f64> {
    let qf = forward(params, &batch.queries, cfg);
    let df = forward(params, &batch.documents, cfg);
    let nd = batch.documents.len();
    let scores: Vec<f64> = qf
        .encoded
        .iter()
        .flat_map(|q| df.encoded.iter().map(move |e| crate::embed::dot(&q.y, &e.y)))
        .collect();
    Ok(infonce_loss(
        &scores,
        batch.queries.len(),
        nd,
        &batch.pos_index,
        cfg.temperature,
        &cfg.variant,
    )?
    .0)
}

/// Runs `total_steps` AdamW steps from `init`. Deterministic for a fixed
/// configuration.
pub fn train(pairs: &[TrainingPair], init: &ToyParams, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    init.validate()?;
    let mut sampler = build_batches(pairs, cfg.batch_options(), cfg.seed)?;
    let mut params = init.clone();
    let mut state = AdamWState::new(&params);
    let mut log = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let batch = sampler.next_batch();
        let (loss, grads) = batch_loss_and_grad(&params, &batch, cfg)?;
        let lr = lr_schedule(step, cfg.lr, cfg.warmup_steps);
        adamw_step(&mut params, &grads, &mut state, lr, cfg.weight_decay)?;
        log::debug!("step {step}: loss {loss:.6} lr {lr:.3e} ({})", batch.dataset);
        log.push(StepLog {
            step,
            lr,
            loss,
            dataset: batch.dataset,
        });
    }
    Ok(TrainOutput { params, log })
}

/// Writes the log as JSONL.
pub fn write_train_log(path: &Path, log: &[StepLog]) -> Result<()> {
    let mut out = Vec::new();
    for entry in log {
        serde_json::to_writer(&mut out, entry)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}
