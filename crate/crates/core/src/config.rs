//! Model geometry configurations.
//!
//! `ToyConfig` is the desk-scale geometry every test trains and checks;
//! `ReferenceScaleConfig` records the full-scale sampling geometry and
//! query counts, used only for shape-level construction checks.

use serde::{Deserialize, Serialize};

/// Visual queries per audio query in every fusion layer.
pub const QUERY_RATIO: usize = 3;

/// Desk-scale geometry. All learning experiments run at this size.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    /// Sampled visual frames per clip. Must be divisible by 3 (the
    /// grouped temporal convolution folds 3 consecutive frames into 1).
    pub n_frames: usize,
    /// Sampled audio segments per clip.
    pub m_audio: usize,
    /// Visual tokens per frame, including the leading cls token.
    pub l_v: usize,
    /// Audio tokens per segment (no cls token).
    pub l_a: usize,
    /// Visual feature dim out of the (synthetic) encoder.
    pub d_v: usize,
    /// Audio feature dim out of the (synthetic) encoder.
    pub d_a: usize,
    /// Token count after adaptive pooling, shared by both modalities.
    pub l_prime: usize,
    /// Shared transformer width.
    pub model_dim: usize,
    pub heads: usize,
    /// Fusion stack depth.
    pub layers: usize,
    /// Learnable visual queries per layer.
    pub q_v: usize,
    /// Learnable audio queries per layer (`q_v == 3 * q_a`).
    pub q_a: usize,
    /// Fusion queries, shared across layers.
    pub q_f: usize,
    pub vocab: usize,
    /// Discrete time bins used to express segment endpoints as tokens.
    pub time_bins: usize,

    // Bridge / decoder knobs.
    /// Projection queries in the query-based projector.
    pub k_p: usize,
    /// Decoder embedding width.
    pub d_llm: usize,
    /// Projector cross-attention blocks.
    pub projector_blocks: usize,
    /// Frozen decoder depth.
    pub decoder_blocks: usize,
    /// Adapter rank used when LoRA is enabled at toy scale.
    pub lora_rank: usize,
    /// Adapter scaling numerator; effective scale is `lora_alpha / lora_rank`.
    pub lora_alpha: f64,

    // Alignment head knobs.
    /// Shared embedding dim for the contrastive heads.
    pub d_e: usize,
    /// Contrastive temperature (fixed, not learned).
    pub temperature: f64,

    /// Hidden dim multiplier for feed-forward sublayers.
    pub ffn_ratio: usize,

    // Synthetic task knobs.
    pub duration_min: f64,
    pub duration_max: f64,
    /// Target segments are at least this fraction of the duration.
    pub min_target_frac: f64,
    /// Additive amplitude of the event signature.
    pub event_amplitude: f64,
    /// Virtual stream length used by the uniform sampling index math.
    pub virtual_ticks: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_frames: 6,
            m_audio: 2,
            l_v: 17,
            l_a: 10,
            d_v: 32,
            d_a: 24,
            l_prime: 4,
            model_dim: 48,
            heads: 4,
            layers: 2,
            q_v: 12,
            q_a: 4,
            q_f: 8,
            vocab: 64,
            time_bins: 20,
            k_p: 16,
            d_llm: 48,
            projector_blocks: 2,
            decoder_blocks: 2,
            lora_rank: 8,
            lora_alpha: 16.0,
            d_e: 32,
            temperature: 0.07,
            ffn_ratio: 2,
            duration_min: 30.0,
            duration_max: 90.0,
            min_target_frac: 0.1,
            event_amplitude: 1.0,
            virtual_ticks: 240,
        }
    }
}

impl ToyConfig {
    /// Check the structural invariants; panics with a description on
    /// violation. Call after deserializing external configs.
    pub fn validate(&self) {
        assert!(
            self.q_v == QUERY_RATIO * self.q_a,
            "visual:audio query ratio must be {QUERY_RATIO} (got {}:{})",
            self.q_v,
            self.q_a
        );
        assert!(self.l_v >= 2, "l_v must be >= 2 (cls token plus at least one patch)");
        assert!(self.n_frames % 3 == 0, "n_frames must be divisible by 3");
        assert!(self.m_audio >= 1, "m_audio must be >= 1");
        assert!(self.model_dim % self.heads == 0, "model_dim must split across heads");
        assert!(self.d_llm % self.heads == 0, "d_llm must split across heads");
        assert!(self.l_prime >= 1 && self.l_prime <= self.l_v - 1 && self.l_prime <= self.l_a);
        assert!(self.layers >= 1);
        assert!(self.time_bins >= 2);
        assert!(self.temperature > 0.0);
        assert!(self.lora_rank < self.d_llm, "adapter must be strictly low-rank");
        assert!(self.duration_min > 0.0 && self.duration_max >= self.duration_min);
        assert!(self.min_target_frac > 0.0 && self.min_target_frac < 1.0);
        assert!(
            self.virtual_ticks >= self.n_frames && self.virtual_ticks >= self.m_audio,
            "virtual stream must be at least as long as the sample counts"
        );
    }

    /// Temporal length of the visual stream after grouped convolution.
    pub fn compressed_frames(&self) -> usize {
        self.n_frames / 3
    }

    /// Flattened visual token count entering the fusion stack.
    pub fn visual_tokens(&self) -> usize {
        self.compressed_frames() * self.l_prime
    }

    /// Flattened audio token count entering the fusion stack.
    pub fn audio_tokens(&self) -> usize {
        self.m_audio * self.l_prime
    }

    pub fn ffn_hidden(&self) -> usize {
        self.ffn_ratio * self.model_dim
    }
}

/// Full-scale sampling geometry and query counts.
///
/// Feature dims depend on the choice of pretrained encoders and are
/// recorded here as conventional defaults, not contracts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceScaleConfig {
    pub n_frames: usize,
    pub m_audio: usize,
    /// Audio segment length in seconds.
    pub seg_len_s: f64,
    /// Audio sample rate in Hz.
    pub audio_rate_hz: u32,
    /// Input frame side length (frames are square).
    pub frame_size: usize,
    /// Visual feature dim (encoder-dependent default).
    pub d_v: usize,
    /// Audio feature dim (encoder-dependent default).
    pub d_a: usize,
    pub model_dim: usize,
    pub q_v: usize,
    pub q_a: usize,
    pub q_f: usize,
}

impl Default for ReferenceScaleConfig {
    fn default() -> Self {
        ReferenceScaleConfig {
            n_frames: 24,
            m_audio: 8,
            seg_len_s: 30.0,
            audio_rate_hz: 16_000,
            frame_size: 336,
            d_v: 1024,
            d_a: 768,
            model_dim: 768,
            q_v: 192,
            q_a: 64,
            q_f: 128,
        }
    }
}

impl ReferenceScaleConfig {
    pub fn validate(&self) {
        assert!(self.n_frames % 3 == 0, "n_frames must be divisible by 3");
        assert!(self.m_audio >= 1, "m_audio must be >= 1");
        assert!(self.seg_len_s > 0.0, "segment length must be positive");
        assert!(
            self.q_v == QUERY_RATIO * self.q_a,
            "visual:audio query ratio must be {QUERY_RATIO}"
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ToyConfig::default().validate();
        ReferenceScaleConfig::default().validate();
    }

    #[test]
    fn toy_token_counts() {
        let cfg = ToyConfig::default();
        assert_eq!(cfg.compressed_frames(), 2);
        assert_eq!(cfg.visual_tokens(), 8);
        assert_eq!(cfg.audio_tokens(), 8);
    }

    #[test]
    #[should_panic(expected = "query ratio")]
    fn query_ratio_enforced() {
        let cfg = ToyConfig { q_v: 10, ..ToyConfig::default() };
        cfg.validate();
    }

    #[test]
    #[should_panic(expected = "divisible by 3")]
    fn frame_count_must_group() {
        let cfg = ToyConfig { n_frames: 7, ..ToyConfig::default() };
        cfg.validate();
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let r: Result<ToyConfig, _> = serde_json::from_str(r#"{"bogus_key": 3}"#);
        assert!(r.is_err());
    }
}
