use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Sequence, TinyModel};
use super::store::ParamGroup;
use super::{MllmError, Result, Stage, TrainConfig};
use crate::audio::TokenGrid;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// A (music, prompt, target) training triple; prompt and target are token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub music: TokenGrid,
    pub prompt: Vec<u32>,
    pub target: Vec<u32>,
}

impl TrainExample {
    pub fn sequence(&self) -> Sequence {
        Sequence::from_prompt_target(&self.prompt, &self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: Stage,
    pub steps: Vec<StepRecord>,
    /// Token-averaged loss over the whole dataset before the first step.
    pub initial_loss: f64,
    /// Same, after the last step.
    pub final_loss: f64,
    /// Hash of each frozen group before and after training.
    pub frozen_hashes: BTreeMap<ParamGroup, (String, String)>,
}

impl TrainLog {
    pub fn loss_drop(&self) -> f64 {
        1.0 - self.final_loss / self.initial_loss
    }
}

/// Linear warm-up over the first `warmup_fraction` of steps, cosine decay after.
pub fn lr_at(step: usize, total: usize, base: f64, warmup_fraction: f64) -> f64 {
    let warm = ((total as f64 * warmup_fraction).round() as usize).clamp(1, total.max(1));
    if step < warm {
        return base * (step + 1) as f64 / warm as f64;
    }
    let span = (total - warm).max(1) as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * (step - warm) as f64 / span).cos())
}

/// Token-averaged masked cross-entropy over a dataset.
pub fn dataset_loss(model: &TinyModel, data: &[TrainExample]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for ex in data {
        let (l, k) = model.sequence_loss(&ex.music, &ex.sequence())?;
        sum += l;
        n += k;
    }
    Ok(sum / n.max(1) as f64)
}

fn trainable_groups(stage: Stage) -> &'static [ParamGroup] {
    if stage.trains_lora() {
        &[ParamGroup::Projector, ParamGroup::Lora]
    } else {
        &[ParamGroup::Projector]
    }
}

struct Schedule {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    warmup_fraction: f64,
    seed: u64,
}

/// Seeded mini-batch Adam over `items`, updating only tensors in `groups`.
fn run_adam(model: &mut TinyModel, items: &[(&TokenGrid, Sequence)], groups: &[ParamGroup], sched: &Schedule) -> Result<Vec<StepRecord>> {
    let full = groups.contains(&ParamGroup::Base);
    let ranges: Vec<std::ops::Range<usize>> =
        model.params().metas().iter().filter(|m| groups.contains(&m.group)).map(|m| m.range()).collect();
    let per_epoch = items.len().div_ceil(sched.batch_size);
    let total = sched.epochs * per_epoch;
    let n_params = model.params().len();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut grads = vec![0.0; n_params];
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut steps = Vec::with_capacity(total);
    let mut step = 0;
    for _ in 0..sched.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(sched.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let n_sup: usize = batch.iter().map(|&i| items[i].1.n_supervised()).sum();
            let weight = 1.0 / n_sup.max(1) as f64;
            let mut loss = 0.0;
            for &i in batch {
                let (music, seq) = &items[i];
                loss += if full {
                    model.accumulate_full_gradients(music, seq, weight, &mut grads)?.0
                } else {
                    model.accumulate_gradients(music, seq, weight, &mut grads)?.0
                };
            }
            let lr = lr_at(step, total, sched.learning_rate, sched.warmup_fraction);
            let t = (step + 1) as i32;
            let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
            let params = &mut model.params_mut().data;
            for r in &ranges {
                for i in r.clone() {
                    let g = grads[i];
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
            steps.push(StepRecord { step, lr, loss: loss * weight });
            step += 1;
        }
    }
    Ok(steps)
}

fn items_loss(model: &TinyModel, items: &[(&TokenGrid, Sequence)]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (music, seq) in items {
        let (l, k) = model.sequence_loss(music, seq)?;
        sum += l;
        n += k;
    }
    Ok(sum / n.max(1) as f64)
}

/// Trains the groups the stage allows (projector in stage 1, projector and
/// adapters otherwise) with Adam; every other parameter is left untouched.
pub fn train_stage(model: &mut TinyModel, data: &[TrainExample], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(MllmError::EmptyData);
    }
    match (cfg.stage.trains_lora(), model.lora_config().is_some()) {
        (false, true) => return Err(MllmError::StageMismatch("stage1 trains the projector only; detach LoRA adapters first".into())),
        (true, false) => return Err(MllmError::StageMismatch(format!("{} requires LoRA adapters to be attached", cfg.stage))),
        _ => {}
    }
    let trainable = trainable_groups(cfg.stage);
    let frozen: Vec<ParamGroup> = ParamGroup::ALL.into_iter().filter(|g| !trainable.contains(g)).collect();
    let before: Vec<String> = frozen.iter().map(|g| model.group_hash(*g)).collect();

    let items: Vec<(&TokenGrid, Sequence)> = data.iter().map(|ex| (&ex.music, ex.sequence())).collect();
    let initial_loss = items_loss(model, &items)?;
    let sched = Schedule {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        warmup_fraction: cfg.warmup_fraction,
        seed: cfg.seed,
    };
    let steps = run_adam(model, &items, trainable, &sched)?;
    let final_loss = items_loss(model, &items)?;
    let frozen_hashes = frozen
        .into_iter()
        .zip(before)
        .map(|(g, b)| (g, (b, model.group_hash(g))))
        .collect();
    Ok(TrainLog { stage: cfg.stage, steps, initial_loss, final_loss, frozen_hashes })
}

/// A text-only example for base pretraining: `context` occupies the
/// positions a music prefix takes during stage training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextExample {
    pub context: Vec<u32>,
    pub prompt: Vec<u32>,
    pub target: Vec<u32>,
}

impl TextExample {
    pub fn sequence(&self) -> Sequence {
        Sequence::with_context(&self.context, &self.prompt, &self.target)
    }
}

/// Optimizer settings for base pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 40, learning_rate: 3e-3, warmup_fraction: 0.1, batch_size: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub steps: Vec<StepRecord>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Text-only language-model training of the base group, standing in for the
/// pretrained LLM a real system starts from. Runs before adapters exist.
pub fn pretrain_base(model: &mut TinyModel, data: &[TextExample], cfg: &PretrainConfig) -> Result<PretrainLog> {
    let train_cfg = TrainConfig {
        stage: Stage::Stage1,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        warmup_fraction: cfg.warmup_fraction,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    train_cfg.validate()?;
    if data.is_empty() {
        return Err(MllmError::EmptyData);
    }
    if model.lora_config().is_some() {
        return Err(MllmError::StageMismatch("base pretraining must run before LoRA adapters are attached".into()));
    }
    let empty = TokenGrid::new(Vec::new(), 0, model.config().patch_dim)?;
    let items: Vec<(&TokenGrid, Sequence)> = data.iter().map(|ex| (&empty, ex.sequence())).collect();
    let initial_loss = items_loss(model, &items)?;
    let sched = Schedule {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        warmup_fraction: cfg.warmup_fraction,
        seed: cfg.seed,
    };
    let steps = run_adam(model, &items, &[ParamGroup::Base], &sched)?;
    let final_loss = items_loss(model, &items)?;
    Ok(PretrainLog { steps, initial_loss, final_loss })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let total = 100;
        let lrs: Vec<f64> = (0..total).map(|s| lr_at(s, total, 1.0, 0.3)).collect();
        assert!((lrs[29] - 1.0).abs() < 1e-12);
        assert!(lrs[..30].windows(2).all(|w| w[0] < w[1]));
        assert!(lrs[30..].windows(2).all(|w| w[0] >= w[1]));
        assert!(lrs[99] > 0.0 && lrs[99] < 0.01);
        assert_eq!(lr_at(0, 1, 0.5, 0.3), 0.5);
    }
}
