use serde::{Deserialize, Serialize};

use crate::error::{DecoderError, Result};

pub const VOCAB_SIZE: usize = 39;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    /// The embedding is reshaped to `memory_slots` key/value rows of width
    /// `d_model` for cross-attention.
    pub memory_slots: usize,
}

impl ModelConfig {
    /// 4 layers, 4 heads, width 128 over a 128-anchor embedding.
    pub fn desk() -> Self {
        ModelConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            dropout: 0.1,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 256,
            memory_slots: 1,
        }
    }

    /// 12 layers, 16 heads, width 1024, feed-forward 4096.
    pub fn paper() -> Self {
        ModelConfig {
            n_layers: 12,
            n_heads: 16,
            d_model: 1024,
            d_ff: 4096,
            dropout: 0.1,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 512,
            memory_slots: 1,
        }
    }

    /// 2 layers of width 64 reading a 128-anchor embedding as two memory rows.
    pub fn tiny() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 64,
            d_ff: 256,
            dropout: 0.0,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 256,
            memory_slots: 2,
        }
    }

    /// Small enough for finite-difference checks.
    pub fn micro() -> Self {
        ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_model: 16,
            d_ff: 32,
            dropout: 0.0,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 32,
            memory_slots: 2,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.d_model * self.memory_slots
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DecoderError::InvalidConfig(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer, head, width and feed-forward sizes must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by {} heads", self.d_model, self.n_heads));
        }
        if self.vocab_size != VOCAB_SIZE {
            return bad(format!("vocab_size must be {VOCAB_SIZE}, got {}", self.vocab_size));
        }
        if self.max_seq_len < 2 || self.memory_slots == 0 {
            return bad("max_seq_len must be >= 2 and memory_slots >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Number of trainable scalars:
    ///
    /// ```text
    /// V·d + L·d                       token and position embeddings
    /// + n · (8d² + 2·d·f + f + 15d)   per layer: two attention blocks with
    ///                                 biases, feed-forward, three norms
    /// + d·V + V                       output projection
    /// ```
    pub fn param_count(&self) -> usize {
        let (v, l, d, f, n) = (self.vocab_size, self.max_seq_len, self.d_model, self.d_ff, self.n_layers);
        v * d + l * d + n * (8 * d * d + 2 * d * f + f + 15 * d) + d * v + v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub log_every: usize,
    pub checkpoint_every: usize,
    /// Steps between validity probes; 0 disables them.
    pub probe_every: usize,
    pub probe_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 5e-5,
            warmup_steps: 5000,
            total_steps: 50_000,
            weight_decay: 0.01,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
            log_every: 50,
            checkpoint_every: 1000,
            probe_every: 1000,
            probe_size: 200,
        }
    }
}

impl TrainConfig {
    /// Short-horizon schedule for desk-scale runs.
    pub fn desk() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            warmup_steps: 500,
            total_steps: 8000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(DecoderError::InvalidConfig(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 || self.base_lr.is_nan() || self.base_lr <= 0.0 || self.weight_decay < 0.0 {
            return Err(DecoderError::InvalidConfig(
                "batch_size and base_lr must be positive, weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Linear warm-up from 0 to `base_lr` over `warmup_steps`, then linear
    /// decay to 0 at `total_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step <= self.warmup_steps {
            self.base_lr * step as f64 / self.warmup_steps.max(1) as f64
        } else if step >= self.total_steps {
            0.0
        } else {
            self.base_lr * (self.total_steps - step) as f64 / (self.total_steps - self.warmup_steps) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Temperature { tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    /// Maximum number of generated tokens, excluding `bos`.
    pub max_length: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Greedy,
            max_length: 255,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if let DecodeMode::Temperature { tau } = self.mode {
            if tau.is_nan() || tau <= 0.0 {
                return Err(DecoderError::InvalidConfig(format!("temperature must be > 0, got {tau}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_hits_published_points() {
        let t = TrainConfig::default();
        assert_eq!(t.lr_at(0), 0.0);
        assert_eq!(t.lr_at(5000), 5e-5);
        assert_eq!(t.lr_at(50_000), 0.0);
        assert!((t.lr_at(2500) - 2.5e-5).abs() < 1e-18);
        assert!((t.lr_at(27_500) - 2.5e-5).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        ModelConfig::desk().validate().unwrap();
        ModelConfig::paper().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
        assert_eq!(ModelConfig::tiny().embedding_dim(), ModelConfig::desk().embedding_dim());
        let bad = ModelConfig { n_heads: 3, ..ModelConfig::desk() };
        assert!(bad.validate().is_err());
        let t = TrainConfig { warmup_steps: 10, total_steps: 10, ..Default::default() };
        assert!(t.validate().is_err());
        let d = DecodeConfig { mode: DecodeMode::Temperature { tau: 0.0 }, ..Default::default() };
        assert!(d.validate().is_err());
    }
}
