//! The prompt-training loop.
//!
//! [`train`] optimizes exactly the parameter registry of an [`EptParams`]
//! against a frozen encoder: the short prompt and the fusion/projection
//! networks step at `lr_prompt`, the low-rank factors at `lr_lowrank`.
//! Batches are seeded, so a (config, seed) pair fully determines the loss
//! trajectory; wall-clock timings are captured separately so the
//! deterministic record stays byte-reproducible.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::encoder::{build_logits, FrozenEncoder};
use crate::error::{EptError, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::pipeline::{
    bake, build_prompt, build_training_input, is_lowrank_param, BakedPrompt, EptParams,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tape::Tape;
use crate::tasks::{Example, LabeledDataset};

/// Step count for a full-scale run; the desk default keeps runs interactive.
pub const FULL_SCALE_STEPS: usize = 30_000;
/// Leading steps excluded from the timing median (cold caches, first
/// allocations).
pub const TIMING_WARMUP_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_prompt: f64,
    pub lr_lowrank: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2_000,
            batch_size: 16,
            lr_prompt: 0.5,
            lr_lowrank: 5e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            eval_every: 200,
        }
    }
}

impl TrainConfig {
    /// Zero learning rates are allowed — they make a run a pure measurement
    /// of the initial parameters.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(EptError::Contract(format!(
                "steps, batch_size, and eval_every must be positive; got {}, {}, {}",
                self.steps, self.batch_size, self.eval_every
            )));
        }
        if !(self.lr_prompt.is_finite() && self.lr_lowrank.is_finite())
            || self.lr_prompt < 0.0
            || self.lr_lowrank < 0.0
        {
            return Err(EptError::Contract(format!(
                "learning rates must be finite and non-negative; got {} and {}",
                self.lr_prompt, self.lr_lowrank
            )));
        }
        Ok(())
    }
}

/// One logged measurement: the state *before* any update at `step`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalPoint {
    pub step: usize,
    /// Cross-entropy of the seeded training batch drawn at this step.
    pub train_loss: f64,
    /// Cross-entropy over the full evaluation split.
    pub eval_loss: f64,
    /// Argmax accuracy over the full evaluation split.
    pub eval_accuracy: f64,
}

/// Everything a finished run reports. The deterministic part (`points` and
/// the parameter counts) is what [`RunRecord::to_jsonl`] serializes; timings
/// live in separate fields because wall-clock is never reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub points: Vec<EvalPoint>,
    pub best_eval: f64,
    pub final_eval: f64,
    pub prompt_group_params: usize,
    pub lowrank_group_params: usize,
    /// Wall-clock per training step (forward + backward + update only).
    pub step_ms: Vec<f64>,
    pub total_ms: f64,
}

impl RunRecord {
    /// Median step time excluding the warmup prefix.
    pub fn median_step_ms(&self) -> f64 {
        let tail = if self.step_ms.len() > TIMING_WARMUP_STEPS {
            &self.step_ms[TIMING_WARMUP_STEPS..]
        } else {
            &self.step_ms[..]
        };
        let mut sorted: Vec<f64> = tail.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
        match sorted.len() {
            0 => 0.0,
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        }
    }

    /// One JSON object per eval point, then one summary object — everything
    /// in here is bit-deterministic for a fixed config and seed.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&serde_json::to_string(p).expect("eval points serialize"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "best_eval": self.best_eval,
            "final_eval": self.final_eval,
            "prompt_group_params": self.prompt_group_params,
            "lowrank_group_params": self.lowrank_group_params,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Mean cross-entropy and argmax accuracy of a baked prompt on `examples`.
///
/// This is the inference path: the encoder and the baked matrices enter the
/// tape as frozen leaves, exactly as a deployed prompt would.
pub fn evaluate(
    encoder: &FrozenEncoder,
    baked: &BakedPrompt<f64>,
    examples: &[Example],
) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(EptError::Data("evaluation set is empty".to_string()));
    }
    let mut tape = Tape::new();
    let nodes = encoder.register_frozen(&mut tape);
    let p_leaf = (baked.p_new.rows() > 0).then(|| tape.leaf(baked.p_new.clone()));
    let ab_leaf = if baked.a.cols() > 0 {
        Some(tape.leaf(baked.a.matmul(&baked.b)?))
    } else {
        None
    };
    let mut logit_rows = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    for ex in examples {
        let padded = encoder.pad_tokens(&ex.tokens)?;
        let emb = tape.gather_rows(nodes.embedding, &padded)?;
        let i_up = match ab_leaf {
            Some(ab) => tape.add(emb, ab)?,
            None => emb,
        };
        let input = match p_leaf {
            Some(p) => tape.concat_rows(&[p, i_up])?,
            None => i_up,
        };
        logit_rows.push(build_logits(&mut tape, &nodes, &encoder.cfg, input)?);
        labels.push(ex.label);
    }
    let logits = tape.concat_rows(&logit_rows)?;
    let loss = tape.cross_entropy_mean(logits, &labels)?;
    let loss_value = tape.value(loss).get(0, 0);

    let values = tape.value(logits);
    let mut correct = 0usize;
    for (row, &label) in labels.iter().enumerate() {
        let mut best = 0usize;
        for c in 1..values.cols() {
            if values.get(row, c) > values.get(row, best) {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok((loss_value, correct as f64 / labels.len() as f64))
}

fn check_geometry(params: &EptParams<f64>, encoder: &FrozenEncoder) -> Result<()> {
    let b = &params.budget;
    let cfg = &encoder.cfg;
    if b.d != cfg.d_model || b.m != cfg.max_seq {
        return Err(EptError::Contract(format!(
            "prompt geometry ({}, {}) does not match the encoder's (d={}, m={})",
            b.d, b.m, cfg.d_model, cfg.max_seq
        )));
    }
    if b.s > cfg.max_prompt {
        return Err(EptError::Contract(format!(
            "prompt length {} exceeds the encoder's positional capacity {}",
            b.s, cfg.max_prompt
        )));
    }
    Ok(())
}

/// Optimize `params` in place against the frozen encoder. Returns the run's
/// deterministic metric trail and its (non-deterministic) timings.
pub fn train(
    params: &mut EptParams<f64>,
    encoder: &FrozenEncoder,
    task: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_geometry(params, encoder)?;
    if task.train.is_empty() {
        return Err(EptError::Data(format!(
            "task '{}' has no training examples",
            task.name
        )));
    }
    if task.eval.is_empty() {
        return Err(EptError::Data(format!(
            "task '{}' has no evaluation examples",
            task.name
        )));
    }
    if let Some(ex) = task
        .train
        .iter()
        .chain(&task.eval)
        .find(|e| e.label >= encoder.cfg.n_classes)
    {
        return Err(EptError::Data(format!(
            "label {} outside the encoder's {} classes",
            ex.label, encoder.cfg.n_classes
        )));
    }

    let mut named = params.to_named_params();
    let prompt_group_params = named
        .iter()
        .filter(|(n, _)| !is_lowrank_param(n))
        .map(|(_, v)| v.len())
        .sum();
    let lowrank_group_params = named
        .iter()
        .filter(|(n, _)| is_lowrank_param(n))
        .map(|(_, v)| v.len())
        .sum();

    let mut opt = Optimizer::new(cfg.optimizer);
    let lr_for = |name: &str| {
        if is_lowrank_param(name) {
            cfg.lr_lowrank
        } else {
            cfg.lr_prompt
        }
    };
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "batches"));
    let mut live = params.clone();
    let mut points: Vec<EvalPoint> = Vec::new();
    let mut step_ms = Vec::with_capacity(cfg.steps);
    let t_total = Instant::now();

    for step in 0..=cfg.steps {
        live.absorb_named_params(&named)?;
        let batch: Vec<usize> = (0..cfg.batch_size)
            .map(|_| rng.gen_range(0..task.train.len()))
            .collect();
        let log_now = step % cfg.eval_every == 0 || step == cfg.steps;
        let eval_stats = if log_now {
            Some(evaluate(encoder, &bake(&live)?, &task.eval)?)
        } else {
            None
        };

        let t_step = Instant::now();
        let mut tape = Tape::new();
        let enc_nodes = encoder.register_frozen(&mut tape);
        let ept_nodes = live.register(&mut tape)?;
        let p_new = build_prompt(&mut tape, &live, &ept_nodes)?;
        let mut logit_rows = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for &i in &batch {
            let ex = &task.train[i];
            let padded = encoder.pad_tokens(&ex.tokens)?;
            let emb = tape.gather_rows(enc_nodes.embedding, &padded)?;
            let input = build_training_input(&mut tape, &ept_nodes, p_new, emb)?;
            logit_rows.push(build_logits(&mut tape, &enc_nodes, &encoder.cfg, input)?);
            labels.push(ex.label);
        }
        let logits = tape.concat_rows(&logit_rows)?;
        let loss = tape.cross_entropy_mean(logits, &labels)?;
        let loss_value = tape.value(loss).get(0, 0);
        if !loss_value.is_finite() {
            return Err(EptError::Divergence {
                step,
                lr_prompt: cfg.lr_prompt,
                lr_lowrank: cfg.lr_lowrank,
            });
        }
        if step < cfg.steps {
            let grads = tape.backward(loss)?;
            opt.step(&mut named, &grads, &lr_for)?;
            step_ms.push(t_step.elapsed().as_secs_f64() * 1e3);
        }

        if let Some((eval_loss, eval_accuracy)) = eval_stats {
            points.push(EvalPoint {
                step,
                train_loss: loss_value,
                eval_loss,
                eval_accuracy,
            });
        }
    }

    params.absorb_named_params(&named)?;
    let best_eval = points
        .iter()
        .map(|p| p.eval_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let final_eval = points
        .last()
        .expect("step 0 is always logged")
        .eval_accuracy;
    Ok(RunRecord {
        points,
        best_eval,
        final_eval,
        prompt_group_params,
        lowrank_group_params,
        step_ms,
        total_ms: t_total.elapsed().as_secs_f64() * 1e3,
    })
}
