use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::CODEC_VOCAB;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub layers_per_block: usize,
    pub in_attention_fraction: f64,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Codec ids plus the delimiter, which takes the top id.
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub rhythm_classes: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 16,
            layers_per_block: 4,
            in_attention_fraction: 0.75,
            d_model: 128,
            n_heads: 4,
            d_ff: 256,
            vocab_size: CODEC_VOCAB as usize + 1,
            max_seq_len: 256,
            rhythm_classes: 3,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn delimiter(&self) -> u32 {
        (self.vocab_size - 1) as u32
    }

    pub fn n_blocks(&self) -> usize {
        self.n_layers / self.layers_per_block
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.layers_per_block == 0 || self.n_layers == 0 || self.n_layers % self.layers_per_block != 0 {
            return fail(format!(
                "n_layers {} is not a positive multiple of layers_per_block {}",
                self.n_layers, self.layers_per_block
            ));
        }
        if !(self.in_attention_fraction > 0.0 && self.in_attention_fraction <= 1.0) {
            return fail(format!(
                "in_attention_fraction {} outside (0, 1]",
                self.in_attention_fraction
            ));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 || self.d_model % 2 != 0 {
            return fail(format!(
                "d_model {} must be even and divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 || self.max_seq_len < 2 || self.rhythm_classes == 0 {
            return fail("d_ff, rhythm_classes must be positive and max_seq_len at least 2".into());
        }
        if self.vocab_size < 2 {
            return fail(format!("vocab_size {} leaves no room for the delimiter", self.vocab_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeSchedule {
    pub trainable_layers: BTreeSet<usize>,
    /// Layers whose input receives another projection of the rhythm grid. The grid always
    /// enters at the input embedding as well.
    pub injection_layers: BTreeSet<usize>,
}

impl FreezeSchedule {
    pub fn is_trainable(&self, layer: usize) -> bool {
        self.trainable_layers.contains(&layer)
    }

    pub fn is_injection(&self, layer: usize) -> bool {
        self.injection_layers.contains(&layer)
    }
}

/// The first layer of every block trains; blocks `1..floor(fraction · n_blocks)` also reinject
/// the condition at their first layer.
pub fn make_freeze_schedule(config: &ModelConfig) -> Result<FreezeSchedule> {
    config.validate()?;
    let n_blocks = config.n_blocks();
    let m = (config.in_attention_fraction * n_blocks as f64 + 1e-9).floor() as usize;
    Ok(FreezeSchedule {
        trainable_layers: (0..n_blocks).map(|b| b * config.layers_per_block).collect(),
        injection_layers: (1..m).map(|b| b * config.layers_per_block).collect(),
    })
}
