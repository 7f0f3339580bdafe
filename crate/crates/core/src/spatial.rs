//! Spatial reduction: global/local split and average pooling with a
//! global residual.
//!
//! Features `[T, L, D]` are split into a per-step global vector (the
//! cls token for visual streams, the token mean for audio) and local
//! tokens. Locals are adaptively pooled down to `l_out` tokens and the
//! FFN-refined global is broadcast-added back onto every pooled token.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::Var;
use crate::nn::{FeedForward, Session};
use crate::tensor::Parameter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// Token 0 of each step is a cls token; locals are tokens `1..L`.
    Visual,
    /// No cls token; global is the token mean, locals are unchanged.
    Audio,
}

/// Per-step global vector plus local token block.
pub struct GlobalLocalSplit<'g> {
    /// `[T, D]`
    pub global: Var<'g>,
    /// `[T, L_local, D]`
    pub local: Var<'g>,
}

/// Split `[T, L, D]` features into global and local components.
///
/// Visual streams require `L >= 2` (cls token at index 0 plus at least
/// one patch token).
pub fn split_global_local<'g>(features: Var<'g>, modality: Modality) -> GlobalLocalSplit<'g> {
    let shape = features.shape();
    assert_eq!(shape.len(), 3, "expected [T, L, D], got {shape:?}");
    let (t, l, d) = (shape[0], shape[1], shape[2]);
    match modality {
        Modality::Visual => {
            assert!(l >= 2, "visual split needs L >= 2 (cls + patches), got {l}");
            let flat = features.reshape(&[t * l, d]);
            let cls_rows: Vec<usize> = (0..t).map(|i| i * l).collect();
            let global = flat.gather_rows(&cls_rows);
            let local_rows: Vec<usize> =
                (0..t).flat_map(|i| (1..l).map(move |j| i * l + j)).collect();
            let local = flat.gather_rows(&local_rows).reshape(&[t, l - 1, d]);
            GlobalLocalSplit { global, local }
        }
        Modality::Audio => {
            let global = features.pool_tokens(1).reshape(&[t, d]);
            GlobalLocalSplit { global, local: features }
        }
    }
}

/// Adaptive average pooling over the token axis (`[T, L, D]` →
/// `[T, l_out, D]`); see [`crate::autodiff::pool_bins`] for the bin rule.
pub fn adaptive_avg_pool<'g>(local: Var<'g>, l_out: usize) -> Var<'g> {
    local.pool_tokens(l_out)
}

/// Pooled locals plus the FFN-refined global broadcast over tokens:
/// `out[t, i] = AdaptiveAvgPool(local)[t, i] + FFN(global)[t]`.
pub fn global_residual<'g>(
    sess: &Session<'g>,
    split: &GlobalLocalSplit<'g>,
    ffn: &FeedForward,
    l_out: usize,
) -> Var<'g> {
    let pooled = adaptive_avg_pool(split.local, l_out);
    let refined = ffn.forward(sess, split.global);
    pooled.add_time_broadcast(refined)
}

/// One modality's spatial reduction parameters (group `pathways`).
pub struct SpatialPathway {
    pub modality: Modality,
    pub ffn: FeedForward,
    pub l_out: usize,
}

impl SpatialPathway {
    pub fn new(
        prefix: &str,
        modality: Modality,
        dim: usize,
        l_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        SpatialPathway {
            modality,
            // lightweight: hidden width equals the feature dim
            ffn: FeedForward::new(&format!("{prefix}.global_ffn"), "pathways", dim, dim, rng),
            l_out,
        }
    }

    /// `[T, L, D]` → `[T, l_out, D]`.
    pub fn forward<'g>(&self, sess: &Session<'g>, features: Var<'g>) -> Var<'g> {
        let split = split_global_local(features, self.modality);
        global_residual(sess, &split, &self.ffn, self.l_out)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.ffn.collect(out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.ffn.collect_mut(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::tensor::Tensor;
    use crate::util::rng_from_seed;

    #[test]
    fn visual_split_extracts_cls_and_rest() {
        let g = Graph::new();
        // one frame, three tokens of dim 2
        let x = g.constant(&Tensor::new(
            vec![1, 3, 2],
            vec![9.0, 9.0, 1.0, 1.0, 3.0, 3.0],
        ));
        let split = split_global_local(x, Modality::Visual);
        assert_eq!(split.global.shape(), vec![1, 2]);
        assert_eq!(split.global.to_vec(), vec![9.0, 9.0]);
        assert_eq!(split.local.shape(), vec![1, 2, 2]);
        assert_eq!(split.local.to_vec(), vec![1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn audio_split_takes_token_mean() {
        let g = Graph::new();
        let x = g.constant(&Tensor::new(vec![1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]));
        let split = split_global_local(x, Modality::Audio);
        assert_eq!(split.global.to_vec(), vec![3.0, 5.0]);
        assert_eq!(split.local.to_vec(), x.to_vec());
    }

    #[test]
    fn split_shapes_at_toy_scale() {
        let g = Graph::new();
        let mut rng = rng_from_seed(0);
        let x = g.constant(&Tensor::randn(&[6, 17, 32], 1.0, &mut rng));
        let split = split_global_local(x, Modality::Visual);
        assert_eq!(split.global.shape(), vec![6, 32]);
        assert_eq!(split.local.shape(), vec![6, 16, 32]);
    }

    #[test]
    #[should_panic(expected = "L >= 2")]
    fn visual_split_rejects_single_token() {
        let g = Graph::new();
        let x = g.constant(&Tensor::zeros(&[2, 1, 4]));
        let _ = split_global_local(x, Modality::Visual);
    }

    #[test]
    fn zero_ffn_reduces_to_plain_pooling() {
        let g = Graph::new();
        let mut rng = rng_from_seed(3);
        let mut ffn = FeedForward::new("f", "pathways", 4, 4, &mut rng);
        for p in [&mut ffn.lin1, &mut ffn.lin2] {
            p.w.value = Tensor::zeros(&[4, 4]);
            p.b.value = Tensor::zeros(&[4]);
        }
        let sess = Session::all_trainable(&g);
        let x = g.constant(&Tensor::randn(&[2, 5, 4], 1.0, &mut rng));
        let split = split_global_local(x, Modality::Audio);
        let out = global_residual(&sess, &split, &ffn, 3);
        let plain = adaptive_avg_pool(split.local, 3);
        assert_eq!(out.to_vec(), plain.to_vec());
    }

    #[test]
    fn zero_local_leaves_pure_global_term() {
        let g = Graph::new();
        let mut rng = rng_from_seed(4);
        let ffn = FeedForward::new("f", "pathways", 3, 3, &mut rng);
        let sess = Session::all_trainable(&g);
        let global_t = Tensor::randn(&[2, 3], 1.0, &mut rng);
        let split = GlobalLocalSplit {
            global: g.constant(&global_t),
            local: g.constant(&Tensor::zeros(&[2, 4, 3])),
        };
        let out = global_residual(&sess, &split, &ffn, 2);
        let refined = ffn.forward(&sess, g.constant(&global_t)).to_vec();
        let data = out.to_vec();
        for t in 0..2 {
            for tok in 0..2 {
                for j in 0..3 {
                    assert_eq!(data[(t * 2 + tok) * 3 + j], refined[t * 3 + j]);
                }
            }
        }
    }

    #[test]
    fn residual_is_linear_in_local() {
        let g = Graph::new();
        let mut rng = rng_from_seed(5);
        let ffn = FeedForward::new("f", "pathways", 3, 3, &mut rng);
        let sess = Session::all_trainable(&g);
        let global = g.constant(&Tensor::randn(&[2, 3], 1.0, &mut rng));
        let l1 = Tensor::randn(&[2, 4, 3], 1.0, &mut rng);
        let l2 = Tensor::randn(&[2, 4, 3], 1.0, &mut rng);
        let sum = Tensor::new(
            vec![2, 4, 3],
            l1.data().iter().zip(l2.data()).map(|(a, b)| a + b).collect(),
        );
        let run = |local: &Tensor| {
            let split = GlobalLocalSplit { global, local: g.constant(local) };
            global_residual(&sess, &split, &ffn, 2).to_vec()
        };
        let (f1, f2, fsum) = (run(&l1), run(&l2), run(&sum));
        let f0 = run(&Tensor::zeros(&[2, 4, 3]));
        for i in 0..f1.len() {
            let lhs = fsum[i] - f0[i];
            let rhs = (f1[i] - f0[i]) + (f2[i] - f0[i]);
            assert!((lhs - rhs).abs() < 1e-10, "superposition violated at {i}");
        }
    }

    #[test]
    fn mean_preserved_under_equal_bins() {
        let g = Graph::new();
        let mut rng = rng_from_seed(6);
        let x = g.constant(&Tensor::randn(&[3, 8, 5], 1.0, &mut rng));
        let pooled = adaptive_avg_pool(x, 4); // 8 % 4 == 0 -> disjoint equal bins
        let mean_in: f64 = x.to_vec().iter().sum::<f64>() / x.numel() as f64;
        let mean_out: f64 = pooled.to_vec().iter().sum::<f64>() / pooled.numel() as f64;
        assert!((mean_in - mean_out).abs() < 1e-12);
    }
}
