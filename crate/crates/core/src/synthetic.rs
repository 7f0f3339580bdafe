//! Deterministic synthetic world: encoder stand-ins, the toy grounding
//! task, token vocabulary, and uniform sampling index math.
//!
//! Every generator is a pure function of `(config, dataset_seed, index)`.
//! A dataset seed fixes the event signature vectors; the sample index
//! selects the noise stream, clip duration and target segment. Frames
//! and audio segments whose timestamp falls inside the target carry an
//! additive signature, which is what the model learns to localize.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ToyConfig;
use crate::grounding::Segment;
use crate::tensor::Tensor;
use crate::util::{mix_seed, rng_from_seed, standard_normal};

pub type TokenId = usize;

// Stream tags for deriving independent RNG streams from one seed.
const TAG_SIG_VISUAL: u64 = 0x5649;
const TAG_SIG_AUDIO: u64 = 0x4155;
const TAG_PLAN: u64 = 0x504c;
const TAG_NOISE_VISUAL: u64 = 0x4e56;
const TAG_NOISE_AUDIO: u64 = 0x4e41;

// ─── Vocabulary ────────────────────────────────────────────────────────────

/// Toy token layout: `[PAD, BOS, SEG, bins..., question template...]`.
#[derive(Debug, Clone, Copy)]
pub struct Vocab {
    time_bins: usize,
    size: usize,
}

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const SEG: TokenId = 2;
const BIN_BASE: TokenId = 3;
pub const QUESTION_LEN: usize = 4;

impl Vocab {
    pub fn new(cfg: &ToyConfig) -> Self {
        let needed = BIN_BASE + cfg.time_bins + QUESTION_LEN;
        assert!(
            cfg.vocab >= needed,
            "vocab {} too small for {} time bins plus template ({needed} needed)",
            cfg.vocab,
            cfg.time_bins
        );
        Vocab { time_bins: cfg.time_bins, size: cfg.vocab }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bin_token(&self, bin: usize) -> TokenId {
        assert!(bin < self.time_bins, "bin {bin} out of range {}", self.time_bins);
        BIN_BASE + bin
    }

    pub fn bin_of_token(&self, tok: TokenId) -> Option<usize> {
        (BIN_BASE..BIN_BASE + self.time_bins).contains(&tok).then(|| tok - BIN_BASE)
    }

    /// The fixed 4-token question template.
    pub fn question_tokens(&self) -> Vec<TokenId> {
        let base = BIN_BASE + self.time_bins;
        (base..base + QUESTION_LEN).collect()
    }

    /// Question tokens rotated by `round`, used for multi-turn dialogue.
    pub fn question_tokens_rotated(&self, round: usize) -> Vec<TokenId> {
        let q = self.question_tokens();
        let n = q.len();
        (0..n).map(|i| q[(i + round) % n]).collect()
    }

    /// `[SEG, bin(start), bin(end)]`.
    pub fn answer_tokens(&self, target: Segment, duration: f64) -> Vec<TokenId> {
        let (bs, be) = encode_bins(target, duration, self.time_bins);
        vec![SEG, self.bin_token(bs), self.bin_token(be)]
    }

    /// Inverse of [`Vocab::answer_tokens`]; `None` when the shape or
    /// token classes do not match.
    pub fn parse_answer(&self, tokens: &[TokenId]) -> Option<(usize, usize)> {
        if tokens.len() != 3 || tokens[0] != SEG {
            return None;
        }
        Some((self.bin_of_token(tokens[1])?, self.bin_of_token(tokens[2])?))
    }
}

/// Discretize a segment into time-bin indices:
/// `bin(t) = floor(t / duration * time_bins)`, clipped to the last bin.
/// A 1e-9 guard keeps exact bin boundaries stable under the fp
/// round-trip through [`decode_bins`].
pub fn encode_bins(seg: Segment, duration: f64, time_bins: usize) -> (usize, usize) {
    let bin = |t: f64| -> usize {
        let b = (t / duration * time_bins as f64 + 1e-9).floor() as isize;
        (b.max(0) as usize).min(time_bins - 1)
    };
    (bin(seg.start()), bin(seg.end()))
}

/// Bin indices back to seconds (start-of-bin convention). Re-encoding
/// the result returns the same bins.
pub fn decode_bins(bin_start: usize, bin_end: usize, duration: f64, time_bins: usize) -> Segment {
    let w = duration / time_bins as f64;
    let (lo, hi) = if bin_start <= bin_end { (bin_start, bin_end) } else { (bin_end, bin_start) };
    Segment::new(lo as f64 * w, hi as f64 * w)
}

// ─── Uniform sampling ──────────────────────────────────────────────────────

/// Indices of `n` uniformly spaced picks out of `total` items:
/// `idx_i = floor((i + 0.5) * total / n)`. Strictly increasing.
pub fn uniform_sample_indices(total: usize, n: usize) -> Vec<usize> {
    assert!(n >= 1 && n <= total, "need 1 <= n ({n}) <= total ({total})");
    (0..n).map(|i| (2 * i + 1) * total / (2 * n)).collect()
}

// ─── Sample plan ───────────────────────────────────────────────────────────

/// Duration and target drawn for one sample index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePlan {
    pub duration: f64,
    pub target: Segment,
}

fn sample_seed(dataset_seed: u64, index: u64) -> u64 {
    mix_seed(dataset_seed, index)
}

/// Draw duration and a target segment with length at least
/// `min_target_frac * duration` (rejection sampling).
pub fn sample_plan(cfg: &ToyConfig, dataset_seed: u64, index: u64) -> SamplePlan {
    let mut rng = rng_from_seed(mix_seed(sample_seed(dataset_seed, index), TAG_PLAN));
    let duration = rng.gen_range(cfg.duration_min..cfg.duration_max);
    let min_len = cfg.min_target_frac * duration;
    loop {
        let a: f64 = rng.gen_range(0.0..duration);
        let b: f64 = rng.gen_range(0.0..duration);
        let (s, e) = if a <= b { (a, b) } else { (b, a) };
        if e - s >= min_len {
            return SamplePlan { duration, target: Segment::new(s, e) };
        }
    }
}

/// Unit event signature for the visual modality; fixed per dataset seed.
pub fn event_signature_visual(cfg: &ToyConfig, dataset_seed: u64) -> Vec<f64> {
    unit_signature(cfg.d_v, mix_seed(dataset_seed, TAG_SIG_VISUAL))
}

/// Unit event signature for the audio modality; fixed per dataset seed.
pub fn event_signature_audio(cfg: &ToyConfig, dataset_seed: u64) -> Vec<f64> {
    unit_signature(cfg.d_a, mix_seed(dataset_seed, TAG_SIG_AUDIO))
}

fn unit_signature(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

/// Timestamps (seconds) of the sampled frames/segments of a stream.
pub fn stream_timestamps(cfg: &ToyConfig, count: usize, duration: f64) -> Vec<f64> {
    uniform_sample_indices(cfg.virtual_ticks, count)
        .into_iter()
        .map(|idx| (idx as f64 + 0.5) / cfg.virtual_ticks as f64 * duration)
        .collect()
}

fn encode_stream(
    noise_rng: &mut ChaCha8Rng,
    steps: usize,
    tokens: usize,
    dim: usize,
    timestamps: &[f64],
    target: Segment,
    signature: &[f64],
    amplitude: f64,
) -> Tensor {
    let mut t = Tensor::randn(&[steps, tokens, dim], 1.0, noise_rng);
    for (step, &ts) in timestamps.iter().enumerate() {
        if ts >= target.start() && ts <= target.end() {
            for tok in 0..tokens {
                for (j, &s) in signature.iter().enumerate() {
                    let idx = (step * tokens + tok) * dim + j;
                    t.data_mut()[idx] += amplitude * s;
                }
            }
        }
    }
    t
}

/// Synthetic visual features `[n_frames, l_v, d_v]`. Token 0 of each
/// frame plays the role of the cls token; frames whose timestamp falls
/// inside the sample's target carry the additive visual signature.
pub fn encode_video_synthetic(cfg: &ToyConfig, dataset_seed: u64, index: u64) -> Tensor {
    let plan = sample_plan(cfg, dataset_seed, index);
    let sig = event_signature_visual(cfg, dataset_seed);
    let mut rng = rng_from_seed(mix_seed(sample_seed(dataset_seed, index), TAG_NOISE_VISUAL));
    let ts = stream_timestamps(cfg, cfg.n_frames, plan.duration);
    encode_stream(
        &mut rng,
        cfg.n_frames,
        cfg.l_v,
        cfg.d_v,
        &ts,
        plan.target,
        &sig,
        cfg.event_amplitude,
    )
}

/// Synthetic audio features `[m_audio, l_a, d_a]`; no cls token. The
/// audio signature is injected over the same target segment as the
/// visual one.
pub fn encode_audio_synthetic(cfg: &ToyConfig, dataset_seed: u64, index: u64) -> Tensor {
    let plan = sample_plan(cfg, dataset_seed, index);
    let sig = event_signature_audio(cfg, dataset_seed);
    let mut rng = rng_from_seed(mix_seed(sample_seed(dataset_seed, index), TAG_NOISE_AUDIO));
    let ts = stream_timestamps(cfg, cfg.m_audio, plan.duration);
    encode_stream(
        &mut rng,
        cfg.m_audio,
        cfg.l_a,
        cfg.d_a,
        &ts,
        plan.target,
        &sig,
        cfg.event_amplitude,
    )
}

// ─── Grounding samples ─────────────────────────────────────────────────────

/// One supervised grounding example.
#[derive(Debug, Clone)]
pub struct GroundingSample {
    pub visual: Tensor,
    pub audio: Tensor,
    pub duration: f64,
    pub target: Segment,
    pub question_tokens: Vec<TokenId>,
    pub answer_tokens: Vec<TokenId>,
}

pub fn make_grounding_sample(cfg: &ToyConfig, dataset_seed: u64, index: u64) -> GroundingSample {
    let plan = sample_plan(cfg, dataset_seed, index);
    let vocab = Vocab::new(cfg);
    GroundingSample {
        visual: encode_video_synthetic(cfg, dataset_seed, index),
        audio: encode_audio_synthetic(cfg, dataset_seed, index),
        duration: plan.duration,
        target: plan.target,
        question_tokens: vocab.question_tokens(),
        answer_tokens: vocab.answer_tokens(plan.target, plan.duration),
    }
}

/// Multi-turn variant for dialogue-format training: each round asks a
/// rotated form of the question about the same clip.
#[derive(Debug, Clone)]
pub struct DialogueSample {
    pub base: GroundingSample,
    /// (user question, assistant answer) token pairs.
    pub rounds: Vec<(Vec<TokenId>, Vec<TokenId>)>,
}

pub fn make_dialogue_sample(
    cfg: &ToyConfig,
    dataset_seed: u64,
    index: u64,
    rounds: usize,
) -> DialogueSample {
    assert!(rounds >= 1);
    let base = make_grounding_sample(cfg, dataset_seed, index);
    let vocab = Vocab::new(cfg);
    let rounds = (0..rounds)
        .map(|r| (vocab.question_tokens_rotated(r), base.answer_tokens.clone()))
        .collect();
    DialogueSample { base, rounds }
}

// ─── Dataset + JSONL descriptors ───────────────────────────────────────────

/// Lazily generated dataset: samples are regenerated on demand from
/// `(cfg, seed, index)`.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub cfg: ToyConfig,
    pub seed: u64,
    pub len: usize,
}

impl SyntheticDataset {
    pub fn new(cfg: ToyConfig, seed: u64, len: usize) -> Self {
        cfg.validate();
        SyntheticDataset { cfg, seed, len }
    }

    pub fn sample(&self, index: usize) -> GroundingSample {
        assert!(index < self.len, "sample index {index} out of range {}", self.len);
        make_grounding_sample(&self.cfg, self.seed, index as u64)
    }

    pub fn dialogue_sample(&self, index: usize, rounds: usize) -> DialogueSample {
        assert!(index < self.len);
        make_dialogue_sample(&self.cfg, self.seed, index as u64, rounds)
    }

    pub fn descriptor(&self, index: usize) -> SampleDescriptor {
        let s = self.sample(index);
        SampleDescriptor {
            dataset_seed: self.seed,
            index: index as u64,
            duration: s.duration,
            target: s.target,
            question_tokens: s.question_tokens,
            answer_tokens: s.answer_tokens,
        }
    }
}

/// JSONL line describing one sample; features are regenerated from the
/// seeds rather than serialized.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleDescriptor {
    pub dataset_seed: u64,
    pub index: u64,
    pub duration: f64,
    pub target: Segment,
    pub question_tokens: Vec<TokenId>,
    pub answer_tokens: Vec<TokenId>,
}

/// Regenerate the sample a descriptor points at, verifying that the
/// recorded fields match the generator output.
pub fn load_sample(cfg: &ToyConfig, desc: &SampleDescriptor) -> Result<GroundingSample, String> {
    let s = make_grounding_sample(cfg, desc.dataset_seed, desc.index);
    if (s.duration - desc.duration).abs() > 1e-9
        || (s.target.start() - desc.target.start()).abs() > 1e-9
        || (s.target.end() - desc.target.end()).abs() > 1e-9
        || s.question_tokens != desc.question_tokens
        || s.answer_tokens != desc.answer_tokens
    {
        return Err(format!(
            "descriptor (seed {}, index {}) does not match regenerated sample; \
             config mismatch is the usual cause",
            desc.dataset_seed, desc.index
        ));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_indices_worked_examples() {
        assert_eq!(uniform_sample_indices(10, 5), vec![1, 3, 5, 7, 9]);
        assert_eq!(uniform_sample_indices(7, 7), vec![0, 1, 2, 3, 4, 5, 6]);
        let idx = uniform_sample_indices(48, 24);
        assert_eq!(idx[0], 1);
        assert_eq!(idx[1], 3);
        assert_eq!(idx[23], 47);
    }

    #[test]
    #[should_panic(expected = "total")]
    fn uniform_indices_rejects_oversampling() {
        uniform_sample_indices(4, 5);
    }

    #[test]
    fn uniform_indices_monotone_strict() {
        // exhaustive on small ranges
        for total in 1..=100usize {
            for n in 1..=total {
                let idx = uniform_sample_indices(total, n);
                assert_eq!(idx.len(), n);
                for w in idx.windows(2) {
                    assert!(w[0] < w[1], "not strictly increasing for ({total}, {n})");
                }
                assert!(*idx.last().unwrap() < total);
            }
        }
        // spot larger ranges
        for &(total, n) in &[(10_000usize, 977usize), (9_999, 9_999), (10_000, 1)] {
            let idx = uniform_sample_indices(total, n);
            for w in idx.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn bins_worked_examples() {
        // full span clips to the last bin
        assert_eq!(encode_bins(Segment::new(0.0, 100.0), 100.0, 20), (0, 19));
        assert_eq!(encode_bins(Segment::new(25.0, 50.0), 100.0, 20), (5, 10));
    }

    #[test]
    fn bin_round_trip_is_idempotent() {
        for tb in [10usize, 20] {
            for bs in 0..tb {
                for be in bs..tb {
                    let seg = decode_bins(bs, be, 77.3, tb);
                    assert_eq!(encode_bins(seg, 77.3, tb), (bs, be));
                }
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = ToyConfig::default();
        let a = encode_video_synthetic(&cfg, 5, 3);
        let b = encode_video_synthetic(&cfg, 5, 3);
        assert_eq!(a.data(), b.data());
        let s1 = make_grounding_sample(&cfg, 5, 3);
        assert_eq!(s1.visual.data(), a.data());
        let c = encode_audio_synthetic(&cfg, 5, 3);
        assert_eq!(s1.audio.data(), c.data());
    }

    #[test]
    fn shapes_match_config() {
        let cfg = ToyConfig::default();
        let v = encode_video_synthetic(&cfg, 1, 0);
        assert_eq!(v.shape(), &[6, 17, 32]);
        let a = encode_audio_synthetic(&cfg, 1, 0);
        assert_eq!(a.shape(), &[2, 10, 24]);
    }

    #[test]
    fn target_respects_invariants() {
        let cfg = ToyConfig::default();
        for i in 0..50 {
            let s = make_grounding_sample(&cfg, 11, i);
            assert!(s.target.start() >= 0.0);
            assert!(s.target.start() < s.target.end());
            assert!(s.target.end() <= s.duration);
            assert!(s.target.length() >= cfg.min_target_frac * s.duration - 1e-9);
            assert_eq!(s.question_tokens.len(), QUESTION_LEN);
            assert_eq!(s.answer_tokens.len(), 3);
        }
    }

    #[test]
    fn answer_tokens_encode_target_bins() {
        let cfg = ToyConfig::default();
        let vocab = Vocab::new(&cfg);
        let s = make_grounding_sample(&cfg, 2, 9);
        let (bs, be) = vocab.parse_answer(&s.answer_tokens).unwrap();
        assert_eq!((bs, be), encode_bins(s.target, s.duration, cfg.time_bins));
    }

    /// Frames outside the event: mean |dot with signature| stays below
    /// a 3-sigma bound estimated by a pure-noise sampling oracle.
    #[test]
    fn outside_frames_uncorrelated_with_signature() {
        let cfg = ToyConfig::default();
        let sig = event_signature_visual(&cfg, 21);
        let mut dots = Vec::new();
        for i in 0..100u64 {
            let s = make_grounding_sample(&cfg, 21, i);
            let ts = stream_timestamps(&cfg, cfg.n_frames, s.duration);
            for (f, &t) in ts.iter().enumerate() {
                if t < s.target.start() || t > s.target.end() {
                    let mut frame_dot = 0.0;
                    for tok in 0..cfg.l_v {
                        for (j, &sv) in sig.iter().enumerate() {
                            frame_dot += s.visual.at(&[f, tok, j]) * sv;
                        }
                    }
                    dots.push(frame_dot / cfg.l_v as f64);
                }
            }
        }
        let mean = dots.iter().sum::<f64>() / dots.len() as f64;
        // oracle: frame-mean dot of pure noise has std 1/sqrt(l_v)
        let mut rng = rng_from_seed(4242);
        let mut noise_dots = Vec::new();
        for _ in 0..2000 {
            let mut acc = 0.0;
            for _ in 0..cfg.l_v {
                let mut d = 0.0;
                for &sv in &sig {
                    d += standard_normal(&mut rng) * sv;
                }
                acc += d;
            }
            noise_dots.push(acc / cfg.l_v as f64);
        }
        let noise_mean = noise_dots.iter().sum::<f64>() / noise_dots.len() as f64;
        let noise_var = noise_dots.iter().map(|v| (v - noise_mean) * (v - noise_mean)).sum::<f64>()
            / noise_dots.len() as f64;
        let bound = 3.0 * (noise_var / dots.len() as f64).sqrt();
        assert!(
            mean.abs() < bound,
            "outside-event correlation {mean} exceeds 3-sigma bound {bound}"
        );
    }

    /// The injected signature is detectable by a linear probe that
    /// knows the signature vector: accuracy > 0.95 over 200 samples.
    #[test]
    fn linear_probe_detects_events() {
        let cfg = ToyConfig::default();
        let sig = event_signature_visual(&cfg, 7);
        let mut correct = 0usize;
        let mut total = 0usize;
        for i in 0..200u64 {
            let s = make_grounding_sample(&cfg, 7, i);
            let ts = stream_timestamps(&cfg, cfg.n_frames, s.duration);
            for (f, &t) in ts.iter().enumerate() {
                let inside = t >= s.target.start() && t <= s.target.end();
                let mut score = 0.0;
                for tok in 0..cfg.l_v {
                    for (j, &sv) in sig.iter().enumerate() {
                        score += s.visual.at(&[f, tok, j]) * sv;
                    }
                }
                score /= cfg.l_v as f64;
                let detected = score > cfg.event_amplitude / 2.0;
                if detected == inside {
                    correct += 1;
                }
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.95, "probe accuracy {acc} <= 0.95");
    }

    #[test]
    fn descriptor_round_trip_and_verification() {
        let cfg = ToyConfig::default();
        let ds = SyntheticDataset::new(cfg.clone(), 3, 4);
        let desc = ds.descriptor(2);
        let json = serde_json::to_string(&desc).unwrap();
        let back: SampleDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(desc, back);
        let s = load_sample(&cfg, &back).unwrap();
        assert_eq!(s.visual.data(), ds.sample(2).visual.data());

        let bad = SampleDescriptor { duration: desc.duration + 1.0, ..desc };
        assert!(load_sample(&cfg, &bad).is_err());
    }
}
