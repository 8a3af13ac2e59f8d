use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MllmError, Result, VOCAB_SIZE};
use crate::audio::PATCH_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_context: usize,
    pub encoder_dim: usize,
    /// Width of the raw patch tokens fed to the encoder stub.
    pub patch_dim: usize,
    /// Projector hidden width.
    pub proj_hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_width(64, 2, 4, 768)
    }
}

impl ModelConfig {
    pub fn with_width(d_model: usize, n_layers: usize, n_heads: usize, encoder_dim: usize) -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            d_model,
            n_layers,
            n_heads,
            max_context: 2048,
            encoder_dim,
            patch_dim: PATCH_DIM,
            proj_hidden: 4 * d_model,
            seed: 0,
        }
    }

    /// Small enough to train in seconds on a laptop.
    pub fn toy() -> Self {
        Self::with_width(32, 2, 2, 32)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MllmError::Config(m.to_string()));
        if self.vocab_size != VOCAB_SIZE {
            return bad("vocab_size must be 258 (bytes plus BOS/EOS)");
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.n_layers == 0 || self.max_context == 0 || self.encoder_dim == 0 || self.patch_dim == 0 {
            return bad("n_layers, max_context, encoder_dim and patch_dim must be positive");
        }
        if self.proj_hidden == 0 {
            return bad("proj_hidden must be positive");
        }
        Ok(())
    }
}

impl ModelConfig {
    /// Number of scalar parameters a model with this config (and optional
    /// adapters) holds, or `None` on overflow.
    pub fn param_count(&self, lora: Option<LoraConfig>) -> Option<usize> {
        let d = self.d_model;
        let dd = d.checked_mul(d)?;
        let block = dd.checked_mul(12)?.checked_add(d.checked_mul(9)?)?;
        let adapters = match lora {
            Some(l) => l.r.checked_mul(d)?.checked_mul(8)?,
            None => 0,
        };
        let blocks = self.n_layers.checked_mul(block.checked_add(adapters)?)?;
        [
            self.vocab_size.checked_mul(d)?.checked_mul(2)?,
            self.max_context.checked_mul(d)?,
            self.patch_dim.checked_add(1)?.checked_mul(self.encoder_dim)?,
            self.encoder_dim.checked_add(1)?.checked_mul(self.proj_hidden)?,
            self.proj_hidden.checked_add(1)?.checked_mul(d)?,
            d.checked_mul(2)?,
            blocks,
        ]
        .into_iter()
        .try_fold(0usize, usize::checked_add)
    }
}

/// Rank and scale of the low-rank adapters; the update is `(alpha / r) * B A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraConfig {
    pub r: usize,
    pub alpha: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self { r: 16, alpha: 128.0 }
    }
}

impl LoraConfig {
    pub fn scale(&self) -> f64 {
        self.alpha / self.r as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || !self.alpha.is_finite() {
            return Err(MllmError::Config("LoRA rank must be >= 1 and alpha finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Projector only.
    Stage1,
    /// Projector plus LoRA adapters.
    Stage2,
    Lyrics,
    Tools,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Stage1, Stage::Stage2, Stage::Lyrics, Stage::Tools];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Lyrics => "lyrics",
            Stage::Tools => "tools",
        }
    }

    pub fn trains_lora(self) -> bool {
        self != Stage::Stage1
    }

    pub fn default_epochs(self) -> usize {
        match self {
            Stage::Stage1 => 15,
            Stage::Stage2 => 10,
            Stage::Lyrics => 20,
            Stage::Tools => 5,
        }
    }

    pub fn default_lr(self) -> f64 {
        match self {
            Stage::Stage1 => 1e-3,
            _ => 2e-5,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = MllmError;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| MllmError::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale defaults for a stage.
    pub fn for_stage(stage: Stage) -> Self {
        Self {
            stage,
            epochs: stage.default_epochs(),
            learning_rate: stage.default_lr(),
            warmup_fraction: 0.3,
            batch_size: 8,
            seed: 0,
        }
    }

    /// Learning rates scaled up for [`ModelConfig::toy`]-sized models.
    pub fn toy(stage: Stage) -> Self {
        Self { learning_rate: stage.default_lr() * TOY_LR_SCALE[usize::from(stage.trains_lora())], ..Self::for_stage(stage) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MllmError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(MllmError::Config("warmup_fraction must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MllmError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Multipliers on the stage learning rates for toy models: projector-only
/// stages and adapter stages.
const TOY_LR_SCALE: [f64; 2] = [10.0, 100.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::default();
        assert_eq!((c.max_context, c.encoder_dim, c.proj_hidden), (2048, 768, 256));
        assert!(c.validate().is_ok());
        assert_eq!(LoraConfig::default().scale(), 8.0);
        let t = TrainConfig::for_stage(Stage::Stage1);
        assert_eq!((t.epochs, t.learning_rate, t.warmup_fraction), (15, 1e-3, 0.3));
        assert_eq!(TrainConfig::for_stage(Stage::Stage2).learning_rate, 2e-5);
        assert_eq!(Stage::Tools.default_epochs(), 5);
        assert_eq!("lyrics".parse::<Stage>().unwrap(), Stage::Lyrics);
    }

    #[test]
    fn invalid() {
        let mut c = ModelConfig::toy();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut t = TrainConfig::toy(Stage::Stage1);
        t.warmup_fraction = 1.0;
        assert!(t.validate().is_err());
        assert!(LoraConfig { r: 0, alpha: 1.0 }.validate().is_err());
    }
}
