use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder shape and training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub vocab_size: usize,
    /// Longest training sequence; longer requests are truncated at a word boundary.
    pub block_size: usize,
    /// Longest sequence accepted at inference; also the positional table size.
    pub max_seq_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub seed: u64,
}

impl LmConfig {
    /// Small encoder that trains on a laptop CPU in minutes.
    pub fn desk() -> Self {
        Self {
            layers: 2,
            heads: 4,
            hidden: 128,
            vocab_size: 2048,
            block_size: 128,
            max_seq_len: 256,
            epochs: 30,
            batch_size: 8,
            warmup_fraction: 0.05,
            learning_rate: 5e-4,
            mask_rate: 0.15,
            seed: 0,
        }
    }

    /// RoBERTa-style shape used for the full datasets.
    pub fn paper() -> Self {
        Self {
            layers: 6,
            heads: 12,
            hidden: 768,
            vocab_size: 52_000,
            block_size: 128,
            max_seq_len: 512,
            epochs: 20,
            batch_size: 32,
            warmup_fraction: 0.05,
            learning_rate: 1e-4,
            mask_rate: 0.15,
            seed: 0,
        }
    }

    /// A few-thousand-parameter model for unit tests.
    pub fn tiny() -> Self {
        Self {
            layers: 2,
            heads: 2,
            hidden: 32,
            vocab_size: 600,
            block_size: 64,
            max_seq_len: 64,
            epochs: 20,
            batch_size: 4,
            warmup_fraction: 0.05,
            learning_rate: 3e-3,
            mask_rate: 0.15,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 {
            return fail("layers, heads and hidden must be positive");
        }
        if self.hidden % self.heads != 0 {
            return fail("hidden must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must be in [0, 1)");
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return fail("mask_rate must be in (0, 1)");
        }
        if self.block_size < 3 || self.block_size > self.max_seq_len {
            return fail("block_size must be in [3, max_seq_len]");
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return fail("batch_size and learning_rate must be positive");
        }
        Ok(())
    }
}
