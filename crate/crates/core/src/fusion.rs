//! Stacked dual-stream fusion transformer.
//!
//! Each layer refines one modality with self-attention + FFN,
//! compresses it into a fixed bank of learnable queries via
//! cross-attention, then lets shared fusion queries attend over the
//! concatenation `[fusion; visual; audio]`. Layer `l+1` consumes layer
//! `l`'s compressed query outputs, so the stack refines at
//! progressively coarser granularity; only the fusion queries are
//! shared across layers.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat_rows, Var};
use crate::config::{ToyConfig, QUERY_RATIO};
use crate::nn::{CrossAttnBlock, FfnBlock, SelfAttnBlock, Session};
use crate::tensor::{Parameter, Tensor};

/// Self-refine + query-compress for one modality in one layer.
pub struct UnimodalStage {
    pub refine_attn: SelfAttnBlock,
    pub refine_ffn: FfnBlock,
    /// Per-layer learnable query bank `[Q, d]`.
    pub queries: Parameter,
    pub compress_attn: CrossAttnBlock,
    pub compress_ffn: FfnBlock,
}

impl UnimodalStage {
    pub fn new(
        prefix: &str,
        group: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        n_queries: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        UnimodalStage {
            refine_attn: SelfAttnBlock::new(&format!("{prefix}.refine_attn"), group, dim, heads, rng),
            refine_ffn: FfnBlock::new(&format!("{prefix}.refine_ffn"), group, dim, hidden, rng),
            queries: Parameter::new(
                format!("{prefix}.queries"),
                group,
                Tensor::randn(&[n_queries, dim], 0.02, rng),
            ),
            compress_attn: CrossAttnBlock::new(&format!("{prefix}.compress_attn"), group, dim, heads, rng),
            compress_ffn: FfnBlock::new(&format!("{prefix}.compress_ffn"), group, dim, hidden, rng),
        }
    }

    /// `[S, d]` tokens → `[Q, d]` compressed queries, for any `S >= 1`.
    pub fn forward<'g>(&self, sess: &Session<'g>, features: Var<'g>) -> Var<'g> {
        let refined = self.refine_ffn.forward(sess, self.refine_attn.forward(sess, features));
        let q = sess.bind(&self.queries);
        self.compress_ffn.forward(sess, self.compress_attn.forward(sess, q, refined))
    }

    pub fn n_queries(&self) -> usize {
        self.queries.value.shape()[0]
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.refine_attn.collect(out);
        self.refine_ffn.collect(out);
        out.push(&self.queries);
        self.compress_attn.collect(out);
        self.compress_ffn.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.refine_attn.collect_mut(out);
        self.refine_ffn.collect_mut(out);
        out.push(&mut self.queries);
        self.compress_attn.collect_mut(out);
        self.compress_ffn.collect_mut(out);
    }
}

/// Fusion-query update over `[fusion; visual; audio]`.
pub struct MultimodalStage {
    pub attn: SelfAttnBlock,
    pub ffn: FfnBlock,
}

impl MultimodalStage {
    pub fn new(
        prefix: &str,
        group: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        MultimodalStage {
            attn: SelfAttnBlock::new(&format!("{prefix}.attn"), group, dim, heads, rng),
            ffn: FfnBlock::new(&format!("{prefix}.ffn"), group, dim, hidden, rng),
        }
    }

    /// Fusion queries come first; the updated fusion state is rows
    /// `[0, Q_f)` of the processed sequence.
    pub fn forward<'g>(
        &self,
        sess: &Session<'g>,
        fusion: Var<'g>,
        vis_c: Var<'g>,
        aud_c: Var<'g>,
    ) -> Var<'g> {
        let q_f = fusion.shape()[0];
        let seq = concat_rows(&[fusion, vis_c, aud_c]);
        let out = self.ffn.forward(sess, self.attn.forward(sess, seq));
        out.slice_rows(0, q_f)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.attn.collect(out);
        self.ffn.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.attn.collect_mut(out);
        self.ffn.collect_mut(out);
    }
}

pub struct FusionLayer {
    pub visual: UnimodalStage,
    pub audio: UnimodalStage,
    pub multimodal: MultimodalStage,
}

/// The full stack plus the shared fusion query bank.
pub struct FusionStack {
    pub layers: Vec<FusionLayer>,
    pub fusion_queries: Parameter,
}

/// Geometry of a fusion stack, decoupled from [`ToyConfig`] so the
/// full-scale configuration can be constructed too.
#[derive(Debug, Clone, Copy)]
pub struct FusionDims {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub q_v: usize,
    pub q_a: usize,
    pub q_f: usize,
    pub ffn_hidden: usize,
}

impl FusionDims {
    pub fn from_toy(cfg: &ToyConfig) -> Self {
        FusionDims {
            dim: cfg.model_dim,
            heads: cfg.heads,
            layers: cfg.layers,
            q_v: cfg.q_v,
            q_a: cfg.q_a,
            q_f: cfg.q_f,
            ffn_hidden: cfg.ffn_hidden(),
        }
    }
}

impl FusionStack {
    pub fn new(prefix: &str, group: &str, dims: FusionDims, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.layers >= 1, "fusion stack needs at least one layer");
        assert!(
            dims.q_v == QUERY_RATIO * dims.q_a,
            "visual:audio query ratio must be {QUERY_RATIO} (got {}:{})",
            dims.q_v,
            dims.q_a
        );
        let layers = (0..dims.layers)
            .map(|l| FusionLayer {
                visual: UnimodalStage::new(
                    &format!("{prefix}.layer{l}.visual"),
                    group,
                    dims.dim,
                    dims.heads,
                    dims.ffn_hidden,
                    dims.q_v,
                    rng,
                ),
                audio: UnimodalStage::new(
                    &format!("{prefix}.layer{l}.audio"),
                    group,
                    dims.dim,
                    dims.heads,
                    dims.ffn_hidden,
                    dims.q_a,
                    rng,
                ),
                multimodal: MultimodalStage::new(
                    &format!("{prefix}.layer{l}.multimodal"),
                    group,
                    dims.dim,
                    dims.heads,
                    dims.ffn_hidden,
                    rng,
                ),
            })
            .collect();
        FusionStack {
            layers,
            fusion_queries: Parameter::new(
                format!("{prefix}.fusion_queries"),
                group,
                Tensor::randn(&[dims.q_f, dims.dim], 0.02, rng),
            ),
        }
    }

    /// `v: [S_v, d]`, `a: [S_a, d]` → final fusion state `[Q_f, d]`.
    pub fn forward<'g>(&self, sess: &Session<'g>, v: Var<'g>, a: Var<'g>) -> Var<'g> {
        let mut fusion = sess.bind(&self.fusion_queries);
        let (mut v, mut a) = (v, a);
        for layer in &self.layers {
            let vis_c = layer.visual.forward(sess, v);
            let aud_c = layer.audio.forward(sess, a);
            fusion = layer.multimodal.forward(sess, fusion, vis_c, aud_c);
            v = vis_c;
            a = aud_c;
        }
        fusion
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        for l in &self.layers {
            l.visual.collect(out);
            l.audio.collect(out);
            l.multimodal.collect(out);
        }
        out.push(&self.fusion_queries);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        for l in &mut self.layers {
            l.visual.collect_mut(out);
            l.audio.collect_mut(out);
            l.multimodal.collect_mut(out);
        }
        out.push(&mut self.fusion_queries);
    }
}
