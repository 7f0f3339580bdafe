//! Temporal compression and temporal embeddings.
//!
//! The visual stream is compressed 3:1 along time by a grouped 2-D
//! convolution (frames as channels over the token x feature grid), then
//! both modalities are projected to the shared model width and tagged
//! with per-time-step embeddings (learnable + fixed sinusoidal).

use rand_chacha::ChaCha8Rng;

use crate::autodiff::Var;
use crate::nn::{Linear, Session};
use crate::tensor::{Parameter, Tensor};

/// Fixed sinusoidal table: `table[t][2i] = sin(t / 10000^(2i/d))`,
/// `table[t][2i+1] = cos(t / 10000^(2i/d))`. Row 0 is `[0, 1, 0, 1, ...]`.
pub fn sinusoidal_table(t_max: usize, dim: usize) -> Tensor {
    Tensor::from_fn(&[t_max, dim], |idx| {
        let t = (idx / dim) as f64;
        let j = idx % dim;
        let i = (j / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * i / dim as f64);
        if j % 2 == 0 {
            (t * freq).sin()
        } else {
            (t * freq).cos()
        }
    })
}

/// Per-time-step additive embedding: learnable component plus the
/// fixed sinusoidal table. Every token at time `t` receives the same
/// offset.
pub struct TemporalEmbedding {
    pub learnable: Parameter,
    sinusoidal: Tensor,
    pub t_max: usize,
    pub dim: usize,
}

impl TemporalEmbedding {
    pub fn new(prefix: &str, group: &str, t_max: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        TemporalEmbedding {
            learnable: Parameter::new(
                format!("{prefix}.learnable"),
                group,
                Tensor::randn(&[t_max, dim], 0.02, rng),
            ),
            sinusoidal: sinusoidal_table(t_max, dim),
            t_max,
            dim,
        }
    }

    pub fn sinusoidal(&self) -> &Tensor {
        &self.sinusoidal
    }

    /// Combined embedding rows `0..t` on the graph.
    fn combined<'g>(&self, sess: &Session<'g>, t: usize) -> Var<'g> {
        assert!(t <= self.t_max, "sequence length {t} exceeds t_max {}", self.t_max);
        let learn = sess.bind(&self.learnable).slice_rows(0, t);
        let sin = sess.graph().constant(&self.sinusoidal).slice_rows(0, t);
        learn.add(sin)
    }

    /// `x[t, l] + learnable[t] + sinusoidal[t]` for `x: [T, L, d]`.
    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let shape = x.shape();
        assert_eq!(shape.len(), 3, "temporal embedding expects [T, L, d]");
        assert_eq!(shape[2], self.dim, "feature dim {} != embedding dim {}", shape[2], self.dim);
        x.add_time_broadcast(self.combined(sess, shape[0]))
    }

    /// Subtract the embedding again (numerical inverse of [`forward`]).
    pub fn inverse<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let shape = x.shape();
        x.add_time_broadcast(self.combined(sess, shape[0]).scale(-1.0))
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.learnable);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.learnable);
    }
}

/// Grouped temporal convolution: `[N, L, D]` → `[N/3, L, D]` with
/// `N/3` groups, so output frame `g` depends only on input frames
/// `{3g, 3g+1, 3g+2}`.
pub struct GroupedTemporalConv {
    pub weight: Parameter,
    pub bias: Parameter,
    pub n_frames: usize,
}

impl GroupedTemporalConv {
    pub fn new(prefix: &str, group: &str, n_frames: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(n_frames % 3 == 0, "frame count {n_frames} not divisible by 3");
        let g = n_frames / 3;
        // start near "average the 3 frames": center taps at 1/3 plus noise,
        // so the event signal survives initialization
        let mut w = Tensor::randn(&[g, 3, 3, 3], 0.05, rng);
        for gi in 0..g {
            for c in 0..3 {
                let center = ((gi * 3 + c) * 3 + 1) * 3 + 1;
                w.data_mut()[center] += 1.0 / 3.0;
            }
        }
        GroupedTemporalConv {
            weight: Parameter::new(format!("{prefix}.weight"), group, w),
            bias: Parameter::new(format!("{prefix}.bias"), group, Tensor::zeros(&[g])),
            n_frames,
        }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let shape = x.shape();
        assert_eq!(shape[0], self.n_frames, "expected {} frames, got {}", self.n_frames, shape[0]);
        x.conv_grouped3x3(sess.bind(&self.weight), sess.bind(&self.bias))
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Per-token affine projection `[T, L, D_mod]` → `[T, L, d]`.
pub struct ModelDimProjection {
    pub lin: Linear,
}

impl ModelDimProjection {
    pub fn new(prefix: &str, group: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        ModelDimProjection { lin: Linear::new(prefix, group, in_dim, out_dim, rng) }
    }

    pub fn forward<'g>(&self, sess: &Session<'g>, x: Var<'g>) -> Var<'g> {
        let shape = x.shape();
        assert_eq!(shape.len(), 3, "projection expects [T, L, D]");
        let (t, l, d) = (shape[0], shape[1], shape[2]);
        assert_eq!(d, self.lin.in_dim(), "projection input dim mismatch");
        let out = self.lin.forward(sess, x.reshape(&[t * l, d]));
        out.reshape(&[t, l, self.lin.out_dim()])
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.lin.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.lin.collect_mut(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::util::rng_from_seed;

    #[test]
    fn sinusoid_row_zero_alternates_zero_one() {
        let t = sinusoidal_table(4, 6);
        for j in 0..6 {
            let expect = if j % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(t.at(&[0, j]), expect);
        }
    }

    #[test]
    fn sinusoid_spot_value() {
        // t=1, i=0 -> sin(1)
        let t = sinusoidal_table(2, 8);
        assert!((t.at(&[1, 0]) - 1f64.sin()).abs() < 1e-12);
        assert!((t.at(&[1, 0]) - 0.8415).abs() < 1e-4);
        assert!((t.at(&[1, 1]) - 1f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn embedding_shifts_all_tokens_at_same_step_equally() {
        let g = Graph::new();
        let sess = Session::all_trainable(&g);
        let mut rng = rng_from_seed(1);
        let mut te = TemporalEmbedding::new("te", "pathways", 3, 4, &mut rng);
        te.learnable.value = Tensor::zeros(&[3, 4]);
        let x = g.constant(&Tensor::zeros(&[2, 3, 4]));
        let y = te.forward(&sess, x).to_vec();
        // t=0 tokens shifted by [0,1,0,1]
        for tok in 0..3 {
            assert_eq!(&y[tok * 4..tok * 4 + 4], &[0.0, 1.0, 0.0, 1.0]);
        }
        // all tokens at t=1 identical
        let base = &y[3 * 4..4 * 4].to_vec();
        for tok in 0..3 {
            assert_eq!(&y[(3 + tok) * 4..(4 + tok) * 4], base.as_slice());
        }
    }

    #[test]
    #[should_panic(expected = "exceeds t_max")]
    fn embedding_rejects_long_sequences() {
        let g = Graph::new();
        let sess = Session::all_trainable(&g);
        let mut rng = rng_from_seed(1);
        let te = TemporalEmbedding::new("te", "pathways", 2, 4, &mut rng);
        let x = g.constant(&Tensor::zeros(&[3, 1, 4]));
        let _ = te.forward(&sess, x);
    }

    #[test]
    fn embedding_inverse_restores_input() {
        let g = Graph::new();
        let sess = Session::all_trainable(&g);
        let mut rng = rng_from_seed(2);
        let te = TemporalEmbedding::new("te", "pathways", 4, 6, &mut rng);
        let x_t = Tensor::randn(&[4, 3, 6], 1.0, &mut rng);
        let x = g.constant(&x_t);
        let restored = te.inverse(&sess, te.forward(&sess, x)).to_vec();
        // fp addition is not exactly invertible; require <= 1e-12 abs error
        for (a, b) in restored.iter().zip(x_t.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_output_length_is_n_over_3() {
        let g = Graph::new();
        let sess = Session::all_trainable(&g);
        let mut rng = rng_from_seed(3);
        let conv = GroupedTemporalConv::new("c", "pathways", 6, &mut rng);
        let x = g.constant(&Tensor::randn(&[6, 4, 5], 1.0, &mut rng));
        assert_eq!(conv.forward(&sess, x).shape(), vec![2, 4, 5]);
    }

    #[test]
    fn conv_group_locality_exhaustive() {
        let mut rng = rng_from_seed(4);
        let conv = GroupedTemporalConv::new("c", "pathways", 6, &mut rng);
        let base = Tensor::randn(&[6, 4, 5], 1.0, &mut rng);
        let baseline = {
            let g = Graph::new();
            let sess = Session::all_trainable(&g);
            conv.forward(&sess, g.constant(&base)).to_vec()
        };
        let plane = 4 * 5;
        for frame in 0..6 {
            let mut perturbed = base.clone();
            for i in 0..plane {
                perturbed.data_mut()[frame * plane + i] += 7.0;
            }
            let g = Graph::new();
            let sess = Session::all_trainable(&g);
            let out = conv.forward(&sess, g.constant(&perturbed)).to_vec();
            let touched_group = frame / 3;
            for gi in 0..2 {
                let slice_changed = out[gi * plane..(gi + 1) * plane]
                    .iter()
                    .zip(&baseline[gi * plane..(gi + 1) * plane])
                    .any(|(a, b)| a.to_bits() != b.to_bits());
                if gi == touched_group {
                    assert!(slice_changed, "group {gi} should react to frame {frame}");
                } else {
                    assert!(!slice_changed, "group {gi} leaked from frame {frame}");
                }
            }
        }
    }

    #[test]
    fn identity_kernel_reproduces_chosen_frame() {
        let mut rng = rng_from_seed(5);
        let mut conv = GroupedTemporalConv::new("c", "pathways", 3, &mut rng);
        // single group: pick input channel 1 via its center tap
        conv.weight.value = Tensor::zeros(&[1, 3, 3, 3]);
        conv.weight.value.set(&[0, 1, 1, 1], 1.0);
        conv.bias.value = Tensor::zeros(&[1]);
        let x_t = Tensor::randn(&[3, 4, 5], 1.0, &mut rng);
        let g = Graph::new();
        let sess = Session::all_trainable(&g);
        let out = conv.forward(&sess, g.constant(&x_t)).to_vec();
        let plane = 4 * 5;
        assert_eq!(out, x_t.data()[plane..2 * plane].to_vec());
    }

    #[test]
    fn projection_identity_and_zero() {
        let g = Graph::new();
        let sess = Session::all_trainable(&g);
        let mut rng = rng_from_seed(6);
        let mut proj = ModelDimProjection::new("p", "pathways", 3, 3, &mut rng);
        proj.lin.w.value = Tensor::eye(3);
        proj.lin.b.value = Tensor::zeros(&[3]);
        let x_t = Tensor::randn(&[2, 2, 3], 1.0, &mut rng);
        let y = proj.forward(&sess, g.constant(&x_t));
        assert_eq!(y.to_vec(), x_t.data());
        proj.lin.w.value = Tensor::zeros(&[3, 3]);
        let g2 = Graph::new();
        let sess2 = Session::all_trainable(&g2);
        let z = proj.forward(&sess2, g2.constant(&x_t));
        assert!(z.to_vec().iter().all(|&v| v == 0.0));
    }
}
