//! Neural building blocks and the parameter-binding session.
//!
//! A [`Session`] wraps one [`Graph`] and decides, per parameter group,
//! whether a parameter enters the tape as a gradient leaf or as a
//! frozen constant. Binding is cached by name so a parameter used in
//! several places accumulates one combined gradient.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat_cols, Gradients, Graph, Var};
use crate::tensor::{Parameter, Tensor};

// ─── Session ───────────────────────────────────────────────────────────────

#[derive(Clone, Copy, PartialEq, Eq)]
enum Binding {
    Trainable(usize),
    Frozen(usize),
}

/// Forward-pass context: a graph plus the set of trainable groups.
pub struct Session<'g> {
    graph: &'g Graph,
    trainable_groups: Option<BTreeSet<String>>,
    bound: RefCell<BTreeMap<String, Binding>>,
}

impl<'g> Session<'g> {
    /// Every parameter trainable.
    pub fn all_trainable(graph: &'g Graph) -> Self {
        Session { graph, trainable_groups: None, bound: RefCell::new(BTreeMap::new()) }
    }

    /// Only parameters whose group is listed receive gradients.
    pub fn with_trainable(graph: &'g Graph, groups: &BTreeSet<String>) -> Self {
        Session {
            graph,
            trainable_groups: Some(groups.clone()),
            bound: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn is_trainable(&self, p: &Parameter) -> bool {
        self.trainable_groups.as_ref().map_or(true, |s| s.contains(p.group()))
    }

    /// Insert a parameter into the tape (cached by name).
    pub fn bind(&self, p: &Parameter) -> Var<'g> {
        if let Some(b) = self.bound.borrow().get(p.name()) {
            let id = match b {
                Binding::Trainable(id) | Binding::Frozen(id) => *id,
            };
            return self.graph.var_by_id(id);
        }
        let (var, binding) = if self.is_trainable(p) {
            let v = self.graph.leaf(&p.value);
            (v, Binding::Trainable(v.id()))
        } else {
            let v = self.graph.constant(&p.value);
            (v, Binding::Frozen(v.id()))
        };
        self.bound.borrow_mut().insert(p.name().to_string(), binding);
        var
    }

    /// Gradients for every trainable parameter bound during the pass.
    /// A bound-but-unreached parameter gets explicit zeros; frozen
    /// parameters do not appear at all.
    pub fn extract_grads(&self, grads: &Gradients) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        for (name, binding) in self.bound.borrow().iter() {
            if let Binding::Trainable(id) = binding {
                let v = self.graph.var_by_id(*id);
                out.insert(name.clone(), grads.get_or_zeros(v));
            }
        }
        out
    }
}

// ─── Linear / LayerNorm / Embedding ────────────────────────────────────────

/// Affine map `y = x Wᵀ + b` with `W: [out, in]`.
pub struct Linear {
    pub w: Parameter,
    pub b: Parameter,
}

impl Linear {
    /// Weight std defaults to `1/sqrt(in_dim)`.
    pub fn new(
        prefix: &str,
        group: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::with_std(prefix, group, in_dim, out_dim, (1.0 / in_dim as f64).sqrt(), rng)
    }

    pub fn with_std(
        prefix: &str,
        group: &str,
        in_dim: usize,
        out_dim: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Linear {
            w: Parameter::new(
                format!("{prefix}.w"),
                group,
                Tensor::randn(&[out_dim, in_dim], std, rng),
            ),
            b: Parameter::new(format!("{prefix}.b"), group, Tensor::zeros(&[out_dim])),
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.matmul_nt(sess.bind(&self.w)).add_bias(sess.bind(&self.b))
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.w);
        out.push(&self.b);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }
}

pub struct LayerNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(prefix: &str, group: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Parameter::new(format!("{prefix}.gamma"), group, Tensor::full(&[dim], 1.0)),
            beta: Parameter::new(format!("{prefix}.beta"), group, Tensor::zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.layer_norm(sess.bind(&self.gamma), sess.bind(&self.beta), self.eps)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

/// Token embedding table `[vocab, dim]`.
pub struct Embedding {
    pub table: Parameter,
}

impl Embedding {
    pub fn new(
        prefix: &str,
        group: &str,
        vocab: usize,
        dim: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Embedding {
            table: Parameter::new(
                format!("{prefix}.table"),
                group,
                Tensor::randn(&[vocab, dim], std, rng),
            ),
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, ids: &[usize]) -> Var<'g> {
        sess.bind(&self.table).gather_rows(ids)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.table);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.table);
    }
}

// ─── Attention ─────────────────────────────────────────────────────────────

/// Multi-head scaled dot-product attention with output projection.
///
/// The key projection carries no bias: a key bias shifts every score in
/// a row by the same amount, which softmax cancels exactly, so such a
/// parameter could never receive gradient.
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Parameter,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(prefix: &str, group: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(heads >= 1 && dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        let std = (1.0 / dim as f64).sqrt();
        MultiHeadAttention {
            wq: Linear::new(&format!("{prefix}.wq"), group, dim, dim, rng),
            wk: Parameter::new(
                format!("{prefix}.wk.w"),
                group,
                Tensor::randn(&[dim, dim], std, rng),
            ),
            wv: Linear::new(&format!("{prefix}.wv"), group, dim, dim, rng),
            wo: Linear::new(&format!("{prefix}.wo"), group, dim, dim, rng),
            heads,
        }
    }

    pub fn forward<'g>(
        &self,
        sess: &Session<'g>,
        q_in: Var<'g>,
        kv_in: Var<'g>,
        causal: bool,
    ) -> Var<'g> {
        let q = self.wq.forward(sess, q_in);
        let k = kv_in.matmul_nt(sess.bind(&self.wk));
        let v = self.wv.forward(sess, kv_in);
        let ctx = attend_heads(q, k, v, self.heads, causal);
        self.wo.forward(sess, ctx)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.wq.collect(out);
        out.push(&self.wk);
        self.wv.collect(out);
        self.wo.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.wq.collect_mut(out);
        out.push(&mut self.wk);
        self.wv.collect_mut(out);
        self.wo.collect_mut(out);
    }
}

/// Head-split attention on already-projected q/k/v.
pub fn attend_heads<'g>(q: Var<'g>, k: Var<'g>, v: Var<'g>, heads: usize, causal: bool) -> Var<'g> {
    let d = q.shape()[1];
    assert_eq!(d % heads, 0);
    let hd = d / heads;
    let mut parts = Vec::with_capacity(heads);
    for h in 0..heads {
        let (c0, c1) = (h * hd, (h + 1) * hd);
        let qh = q.slice_cols(c0, c1);
        let kh = k.slice_cols(c0, c1);
        let vh = v.slice_cols(c0, c1);
        let scores = qh.matmul_nt(kh).scale(1.0 / (hd as f64).sqrt());
        let probs = if causal { scores.causal_row_softmax() } else { scores.row_softmax() };
        parts.push(probs.matmul(vh));
    }
    concat_cols(&parts)
}

// ─── Pre-norm residual blocks ──────────────────────────────────────────────

pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

impl FeedForward {
    pub fn new(prefix: &str, group: &str, dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            lin1: Linear::new(&format!("{prefix}.lin1"), group, dim, hidden, rng),
            lin2: Linear::new(&format!("{prefix}.lin2"), group, hidden, dim, rng),
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        self.lin2.forward(sess, self.lin1.forward(sess, x).gelu())
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.lin1.collect(out);
        self.lin2.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.lin1.collect_mut(out);
        self.lin2.collect_mut(out);
    }
}

/// `x + Attn(LN(x))`
pub struct SelfAttnBlock {
    pub ln: LayerNorm,
    pub attn: MultiHeadAttention,
}

impl SelfAttnBlock {
    pub fn new(prefix: &str, group: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        SelfAttnBlock {
            ln: LayerNorm::new(&format!("{prefix}.ln"), group, dim),
            attn: MultiHeadAttention::new(&format!("{prefix}.attn"), group, dim, heads, rng),
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let n = self.ln.forward(sess, x);
        x.add(self.attn.forward(sess, n, n, false))
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.ln.collect(out);
        self.attn.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.ln.collect_mut(out);
        self.attn.collect_mut(out);
    }
}

/// `q + Attn(LN_q(q) -> LN_kv(kv))`
pub struct CrossAttnBlock {
    pub ln_q: LayerNorm,
    pub ln_kv: LayerNorm,
    pub attn: MultiHeadAttention,
}

impl CrossAttnBlock {
    pub fn new(prefix: &str, group: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        CrossAttnBlock {
            ln_q: LayerNorm::new(&format!("{prefix}.ln_q"), group, dim),
            ln_kv: LayerNorm::new(&format!("{prefix}.ln_kv"), group, dim),
            attn: MultiHeadAttention::new(&format!("{prefix}.attn"), group, dim, heads, rng),
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, q: Var<'g>, kv: Var<'g>) -> Var<'g> {
        let nq = self.ln_q.forward(sess, q);
        let nkv = self.ln_kv.forward(sess, kv);
        q.add(self.attn.forward(sess, nq, nkv, false))
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.ln_q.collect(out);
        self.ln_kv.collect(out);
        self.attn.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.ln_q.collect_mut(out);
        self.ln_kv.collect_mut(out);
        self.attn.collect_mut(out);
    }
}

/// `x + FFN(LN(x))`
pub struct FfnBlock {
    pub ln: LayerNorm,
    pub ff: FeedForward,
}

impl FfnBlock {
    pub fn new(prefix: &str, group: &str, dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        FfnBlock {
            ln: LayerNorm::new(&format!("{prefix}.ln"), group, dim),
            ff: FeedForward::new(&format!("{prefix}.ff"), group, dim, hidden, rng),
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        x.add(self.ff.forward(sess, self.ln.forward(sess, x)))
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.ln.collect(out);
        self.ff.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.ln.collect_mut(out);
        self.ff.collect_mut(out);
    }
}
