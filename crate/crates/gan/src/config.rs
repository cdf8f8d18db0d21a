use serde::{Deserialize, Serialize};

use crate::GanError;

/// Generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Encoder-decoder with two stride-2 stages and residual blocks.
    Resnet,
    /// Two 3x3 convolutions; used for gradient checking.
    Micro,
}

/// Discriminator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    /// Three unnormalized 4x4 convolutions and a 1x1 head (22 px receptive field).
    Compact,
    /// Five-layer patch discriminator (70 px receptive field).
    Patch70,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub resolution: u32,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_cycle: f64,
    /// Effective weight of the identity term (not relative to `lambda_cycle`).
    pub lambda_identity: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub residual_blocks: usize,
    pub base_channels: usize,
    pub generator: GeneratorKind,
    pub discriminator: DiscriminatorKind,
    /// Replay pool size for discriminator updates; 0 disables the pool.
    pub replay_pool: usize,
    /// Write a checkpoint every this many epochs (the final epoch is always written).
    pub checkpoint_every: usize,
}

impl GanConfig {
    /// 64 px preset sized for CPU runs.
    pub fn desk() -> Self {
        Self {
            resolution: 64,
            epochs: 30,
            batch_size: 8,
            lambda_cycle: 10.0,
            lambda_identity: 5.0,
            lr_generator: 2e-3,
            lr_discriminator: 2e-3,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            residual_blocks: 2,
            base_channels: 8,
            generator: GeneratorKind::Resnet,
            discriminator: DiscriminatorKind::Compact,
            replay_pool: 50,
            checkpoint_every: 10,
        }
    }

    /// Full-resolution preset.
    pub fn paper() -> Self {
        Self {
            resolution: 512,
            epochs: 300,
            batch_size: 64,
            residual_blocks: 9,
            base_channels: 64,
            lr_generator: 2e-4,
            lr_discriminator: 2e-4,
            discriminator: DiscriminatorKind::Patch70,
            checkpoint_every: 25,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self, GanError> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(GanError::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if self.resolution == 0 || !self.resolution.is_multiple_of(4) {
            return bad(format!("resolution {} is not a positive multiple of 4", self.resolution));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lambda_cycle >= 0.0 && self.lambda_identity >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        Ok(())
    }
}

impl Default for GanConfig {
    fn default() -> Self {
        Self::desk()
    }
}
