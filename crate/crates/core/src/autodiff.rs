//! Reverse-mode automatic differentiation on a per-step tape.
//!
//! A [`Graph`] records every operation of one forward pass into a linear
//! tape; [`Graph::backward`] replays the tape in reverse accumulating
//! vector-Jacobian products. Graphs are cheap and meant to be dropped
//! after each training step.
//!
//! Conventions:
//! - all tensors are row-major f64 (see [`crate::tensor::Tensor`]);
//! - matrices are rank-2 `[rows, cols]`; sequence data is `[time, tokens, dim]`;
//! - linear maps store weights `[out, in]` and apply `y = x Wᵀ + b`;
//! - no implicit broadcasting: the only broadcast rules are the ones the
//!   dedicated ops (`add_bias`, `add_time_broadcast`) document.
//!
//! Single-threaded per graph. Values are finite for finite inputs of
//! moderate magnitude; softmax and cross-entropy use max-subtraction.

use std::cell::RefCell;
use std::f64::consts::PI;

use crate::tensor::Tensor;

// ─── Tape storage ──────────────────────────────────────────────────────────

type EmitFn<'a> = dyn FnMut(usize, Vec<f64>) + 'a;
type BackFn = Box<dyn Fn(&[f64], &mut EmitFn)>;

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    needs_grad: bool,
    back: Option<BackFn>,
}

/// Tape of one forward pass.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` was reached by backward.
    pub fn get(&self, v: Var<'_>) -> Option<&[f64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Gradient as an owned buffer, zeros when the node was not reached.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; v.numel()],
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, data: Vec<f64>, needs_grad: bool, back: Option<BackFn>) -> Var<'_> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced on the tape"
        );
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { shape, data, needs_grad, back });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// Insert a tensor that does not receive gradient.
    pub fn constant(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, None)
    }

    /// Insert a tensor that accumulates gradient (a differentiation leaf).
    pub fn leaf(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), true, None)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.push(vec![], vec![v], false, None)
    }

    /// Reconstruct a handle from a node id (used by the binding session).
    pub(crate) fn var_by_id(&self, id: usize) -> Var<'_> {
        assert!(id < self.len(), "node id {id} out of range");
        Var { graph: self, id }
    }

    /// Reverse sweep from a scalar loss. Panics if `loss` is not scalar.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        assert!(
            std::ptr::eq(loss.graph, self),
            "loss was recorded on a different graph"
        );
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.id].data.len(), 1, "backward requires a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(gout) = grads[id].clone() else { continue };
            let Some(back) = &nodes[id].back else { continue };
            back(&gout, &mut |pid: usize, contrib: Vec<f64>| {
                if !nodes[pid].needs_grad {
                    return;
                }
                debug_assert_eq!(contrib.len(), nodes[pid].data.len());
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a += c;
                        }
                    }
                    slot => *slot = Some(contrib),
                }
            });
        }
        Gradients { grads }
    }
}

// ─── Var accessors ─────────────────────────────────────────────────────────

impl<'g> Var<'g> {
    pub(crate) fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.graph.nodes.borrow()[self.id].data.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.graph.nodes.borrow()[self.id].data.clone()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape(), self.to_vec())
    }

    /// Value of a scalar node.
    pub fn value(&self) -> f64 {
        let nodes = self.graph.nodes.borrow();
        assert_eq!(nodes[self.id].data.len(), 1, "value() requires a scalar node");
        nodes[self.id].data[0]
    }

    fn dims2(&self) -> (usize, usize) {
        let s = self.shape();
        assert_eq!(s.len(), 2, "expected a rank-2 tensor, got shape {s:?}");
        (s[0], s[1])
    }

    fn dims3(&self) -> (usize, usize, usize) {
        let s = self.shape();
        assert_eq!(s.len(), 3, "expected a rank-3 tensor, got shape {s:?}");
        (s[0], s[1], s[2])
    }

    fn same_graph(&self, other: &Var<'g>) {
        assert!(
            std::ptr::eq(self.graph, other.graph),
            "operands recorded on different graphs"
        );
    }

    fn needs_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].needs_grad
    }
}

// ─── Elementwise ops ───────────────────────────────────────────────────────

impl<'g> Var<'g> {
    /// Elementwise sum; shapes must match exactly.
    pub fn add(self, rhs: Var<'g>) -> Var<'g> {
        self.same_graph(&rhs);
        let (a, b) = (self.to_vec(), rhs.to_vec());
        let (sa, sb) = (self.shape(), rhs.shape());
        assert_eq!(sa, sb, "add: shape mismatch {sa:?} vs {sb:?}");
        let data = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (ia, ib) = (self.id, rhs.id);
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(
            sa,
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, g.to_vec());
                    emit(ib, g.to_vec());
                })
            }),
        )
    }

    /// Elementwise difference; shapes must match exactly.
    pub fn sub(self, rhs: Var<'g>) -> Var<'g> {
        self.same_graph(&rhs);
        let (a, b) = (self.to_vec(), rhs.to_vec());
        let (sa, sb) = (self.shape(), rhs.shape());
        assert_eq!(sa, sb, "sub: shape mismatch {sa:?} vs {sb:?}");
        let data = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let (ia, ib) = (self.id, rhs.id);
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(
            sa,
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, g.to_vec());
                    emit(ib, g.iter().map(|v| -v).collect());
                })
            }),
        )
    }

    /// Hadamard product; shapes must match exactly.
    pub fn mul(self, rhs: Var<'g>) -> Var<'g> {
        self.same_graph(&rhs);
        let (a, b) = (self.to_vec(), rhs.to_vec());
        let (sa, sb) = (self.shape(), rhs.shape());
        assert_eq!(sa, sb, "mul: shape mismatch {sa:?} vs {sb:?}");
        let data = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let (ia, ib) = (self.id, rhs.id);
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(
            sa,
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, g.iter().zip(&b).map(|(gv, y)| gv * y).collect());
                    emit(ib, g.iter().zip(&a).map(|(gv, x)| gv * x).collect());
                })
            }),
        )
    }

    /// Multiply every entry by a constant.
    pub fn scale(self, c: f64) -> Var<'g> {
        let data = self.to_vec().iter().map(|x| x * c).collect();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            self.shape(),
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| emit(ia, g.iter().map(|v| v * c).collect()))
            }),
        )
    }

    /// Add a `[d]` bias row to every row of an `[n, d]` matrix.
    pub fn add_bias(self, bias: Var<'g>) -> Var<'g> {
        self.same_graph(&bias);
        let (n, d) = self.dims2();
        let bs = bias.shape();
        assert_eq!(bs, vec![d], "add_bias: bias shape {bs:?} does not match cols {d}");
        let x = self.to_vec();
        let b = bias.to_vec();
        let mut data = x.clone();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += b[j];
            }
        }
        let (ia, ib) = (self.id, bias.id);
        let needs = self.needs_grad() || bias.needs_grad();
        self.graph.push(
            vec![n, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, g.to_vec());
                    let mut db = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            db[j] += g[i * d + j];
                        }
                    }
                    emit(ib, db);
                })
            }),
        )
    }

    /// GELU in its exact erf form: `0.5 x (1 + erf(x / sqrt(2)))`.
    pub fn gelu(self) -> Var<'g> {
        let x = self.to_vec();
        let data = x.iter().map(|&v| gelu_scalar(v)).collect();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            self.shape(),
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(
                        ia,
                        g.iter().zip(&x).map(|(gv, &v)| gv * gelu_grad_scalar(v)).collect(),
                    )
                })
            }),
        )
    }
}

pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

// ─── Matrix ops ────────────────────────────────────────────────────────────

/// `c[m,n] = a[m,k] @ b[k,n]`
pub(crate) fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let alpha = a[i * k + p];
            if alpha == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += alpha * brow[j];
            }
        }
    }
    c
}

/// `c[m,n] = a[m,k] @ b[n,k]ᵀ`
pub(crate) fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// `c[m,n] = a[k,m]ᵀ @ b[k,n]`
pub(crate) fn mm_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let alpha = arow[i];
            if alpha == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += alpha * brow[j];
            }
        }
    }
    c
}

impl<'g> Var<'g> {
    /// `self[m,k] @ rhs[k,n]`.
    pub fn matmul(self, rhs: Var<'g>) -> Var<'g> {
        self.same_graph(&rhs);
        let (m, k) = self.dims2();
        let (k2, n) = rhs.dims2();
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let a = self.to_vec();
        let b = rhs.to_vec();
        let data = mm(&a, m, k, &b, n);
        let (ia, ib) = (self.id, rhs.id);
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(
            vec![m, n],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, mm_nt(g, m, n, &b, k));
                    emit(ib, mm_tn(&a, m, k, g, n));
                })
            }),
        )
    }

    /// `self[m,k] @ rhs[n,k]ᵀ` — the layout used by linear layers and
    /// attention scores.
    pub fn matmul_nt(self, rhs: Var<'g>) -> Var<'g> {
        self.same_graph(&rhs);
        let (m, k) = self.dims2();
        let (n, k2) = rhs.dims2();
        assert_eq!(k, k2, "matmul_nt: inner dims {k} vs {k2}");
        let a = self.to_vec();
        let b = rhs.to_vec();
        let data = mm_nt(&a, m, k, &b, n);
        let (ia, ib) = (self.id, rhs.id);
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(
            vec![m, n],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, mm(g, m, n, &b, k));
                    emit(ib, mm_tn(g, m, n, &a, k));
                })
            }),
        )
    }

    pub fn transpose(self) -> Var<'g> {
        let (m, n) = self.dims2();
        let x = self.to_vec();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = x[i * n + j];
            }
        }
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![n, m],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dg = vec![0.0; m * n];
                    for j in 0..n {
                        for i in 0..m {
                            dg[i * n + j] = g[j * m + i];
                        }
                    }
                    emit(ia, dg);
                })
            }),
        )
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.numel(), "reshape: element count mismatch");
        let old_shape = self.shape();
        let ia = self.id;
        let needs = self.needs_grad();
        let _ = old_shape;
        self.graph.push(
            shape.to_vec(),
            self.to_vec(),
            needs,
            needs.then(|| -> BackFn { Box::new(move |g, emit| emit(ia, g.to_vec())) }),
        )
    }
}

// ─── Softmax / normalization ───────────────────────────────────────────────

fn softmax_row_inplace(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl<'g> Var<'g> {
    /// Softmax over the last axis of an `[n, m]` matrix. Rows sum to 1.
    pub fn row_softmax(self) -> Var<'g> {
        let (n, m) = self.dims2();
        let mut data = self.to_vec();
        for i in 0..n {
            softmax_row_inplace(&mut data[i * m..(i + 1) * m]);
        }
        let probs = data.clone();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![n, m],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * m];
                    for i in 0..n {
                        let p = &probs[i * m..(i + 1) * m];
                        let gr = &g[i * m..(i + 1) * m];
                        let dot: f64 = p.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..m {
                            dx[i * m + j] = p[j] * (gr[j] - dot);
                        }
                    }
                    emit(ia, dx);
                })
            }),
        )
    }

    /// Softmax over keys `j <= i` of an `[n, n]` score matrix; entries
    /// above the diagonal get exactly zero weight.
    pub fn causal_row_softmax(self) -> Var<'g> {
        let (n, m) = self.dims2();
        assert_eq!(n, m, "causal_row_softmax requires a square score matrix");
        let x = self.to_vec();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let row = &x[i * n..i * n + i + 1];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..=i {
                let e = (x[i * n + j] - max).exp();
                data[i * n + j] = e;
                sum += e;
            }
            for j in 0..=i {
                data[i * n + j] /= sum;
            }
        }
        let probs = data.clone();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![n, n],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * n];
                    for i in 0..n {
                        let p = &probs[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let dot: f64 = p[..=i].iter().zip(&gr[..=i]).map(|(a, b)| a * b).sum();
                        for j in 0..=i {
                            dx[i * n + j] = p[j] * (gr[j] - dot);
                        }
                    }
                    emit(ia, dx);
                })
            }),
        )
    }

    /// Rowwise L2 normalization: `y_i = x_i / sqrt(|x_i|² + eps)`.
    pub fn normalize_rows(self, eps: f64) -> Var<'g> {
        assert!(eps >= 0.0);
        let (n, d) = self.dims2();
        let x = self.to_vec();
        let mut data = vec![0.0; n * d];
        let mut inv_r = vec![0.0; n];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let s: f64 = row.iter().map(|v| v * v).sum();
            let r = (s + eps).sqrt();
            inv_r[i] = 1.0 / r;
            for j in 0..d {
                data[i * d + j] = row[j] * inv_r[i];
            }
        }
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![n, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        let row = &x[i * d..(i + 1) * d];
                        let gr = &g[i * d..(i + 1) * d];
                        let ir = inv_r[i];
                        let dot: f64 = gr.iter().zip(row).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            dx[i * d + j] = gr[j] * ir - row[j] * dot * ir * ir * ir;
                        }
                    }
                    emit(ia, dx);
                })
            }),
        )
    }

    /// Rowwise layer normalization with affine scale and shift.
    ///
    /// Rejects feature dims < 2 (variance of one point is undefined as
    /// eps → 0). Variance uses the biased (1/d) estimator.
    pub fn layer_norm(self, gamma: Var<'g>, beta: Var<'g>, eps: f64) -> Var<'g> {
        self.same_graph(&gamma);
        self.same_graph(&beta);
        assert!(eps > 0.0, "layer_norm: eps must be positive");
        let (n, d) = self.dims2();
        assert!(d >= 2, "layer_norm: feature dim must be >= 2, got {d}");
        assert_eq!(gamma.shape(), vec![d], "layer_norm: gamma shape mismatch");
        assert_eq!(beta.shape(), vec![d], "layer_norm: beta shape mismatch");
        let x = self.to_vec();
        let gm = gamma.to_vec();
        let bt = beta.to_vec();
        let mut xhat = vec![0.0; n * d];
        let mut inv_sigma = vec![0.0; n];
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_sigma[i] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[i * d + j] = xh;
                data[i * d + j] = gm[j] * xh + bt[j];
            }
        }
        let (ix, ig, ib) = (self.id, gamma.id, beta.id);
        let needs = self.needs_grad() || gamma.needs_grad() || beta.needs_grad();
        self.graph.push(
            vec![n, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * d];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for i in 0..n {
                        let gr = &g[i * d..(i + 1) * d];
                        let xh = &xhat[i * d..(i + 1) * d];
                        let is = inv_sigma[i];
                        let mut mean_h = 0.0;
                        let mut mean_hx = 0.0;
                        for j in 0..d {
                            let h = gm[j] * gr[j];
                            mean_h += h;
                            mean_hx += h * xh[j];
                        }
                        mean_h /= d as f64;
                        mean_hx /= d as f64;
                        for j in 0..d {
                            let h = gm[j] * gr[j];
                            dx[i * d + j] = is * (h - mean_h - xh[j] * mean_hx);
                            dgamma[j] += gr[j] * xh[j];
                            dbeta[j] += gr[j];
                        }
                    }
                    emit(ix, dx);
                    emit(ig, dgamma);
                    emit(ib, dbeta);
                })
            }),
        )
    }
}

// ─── Reductions ────────────────────────────────────────────────────────────

impl<'g> Var<'g> {
    /// Sum of all entries (scalar output).
    pub fn sum(self) -> Var<'g> {
        let x = self.to_vec();
        let total: f64 = x.iter().sum();
        let numel = x.len();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![],
            vec![total],
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| emit(ia, vec![g[0]; numel]))
            }),
        )
    }

    /// Mean of all entries (scalar output).
    pub fn mean(self) -> Var<'g> {
        let n = self.numel();
        assert!(n > 0);
        self.sum().scale(1.0 / n as f64)
    }

    /// Column means of an `[n, d]` matrix, producing `[d]`.
    pub fn mean_axis0(self) -> Var<'g> {
        let (n, d) = self.dims2();
        assert!(n > 0);
        let x = self.to_vec();
        let mut data = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                data[j] += x[i * d + j];
            }
        }
        for v in data.iter_mut() {
            *v /= n as f64;
        }
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..d {
                            dx[i * d + j] = g[j] / n as f64;
                        }
                    }
                    emit(ia, dx);
                })
            }),
        )
    }
}

// ─── Structural ops ────────────────────────────────────────────────────────

impl<'g> Var<'g> {
    /// Rows `r0..r1` of an `[n, d]` matrix.
    pub fn slice_rows(self, r0: usize, r1: usize) -> Var<'g> {
        let (n, d) = self.dims2();
        assert!(r0 <= r1 && r1 <= n, "slice_rows: bad range {r0}..{r1} for {n} rows");
        let x = self.to_vec();
        let data = x[r0 * d..r1 * d].to_vec();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![r1 - r0, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * d];
                    dx[r0 * d..r1 * d].copy_from_slice(g);
                    emit(ia, dx);
                })
            }),
        )
    }

    /// Columns `c0..c1` of an `[n, d]` matrix.
    pub fn slice_cols(self, c0: usize, c1: usize) -> Var<'g> {
        let (n, d) = self.dims2();
        assert!(c0 <= c1 && c1 <= d, "slice_cols: bad range {c0}..{c1} for {d} cols");
        let w = c1 - c0;
        let x = self.to_vec();
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            data[i * w..(i + 1) * w].copy_from_slice(&x[i * d + c0..i * d + c1]);
        }
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![n, w],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        dx[i * d + c0..i * d + c1].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    emit(ia, dx);
                })
            }),
        )
    }

    /// Rows of `table[v, d]` selected by `ids` (embedding lookup).
    pub fn gather_rows(self, ids: &[usize]) -> Var<'g> {
        let (v, d) = self.dims2();
        for &id in ids {
            assert!(id < v, "gather_rows: id {id} out of vocabulary {v}");
        }
        let x = self.to_vec();
        let n = ids.len();
        let mut data = vec![0.0; n * d];
        for (i, &id) in ids.iter().enumerate() {
            data[i * d..(i + 1) * d].copy_from_slice(&x[id * d..(id + 1) * d]);
        }
        let ids_owned = ids.to_vec();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![n, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dt = vec![0.0; v * d];
                    for (i, &id) in ids_owned.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[i * d + j];
                        }
                    }
                    emit(ia, dt);
                })
            }),
        )
    }
}

/// Vertical concatenation of `[n_i, d]` matrices.
pub fn concat_rows<'g>(parts: &[Var<'g>]) -> Var<'g> {
    assert!(!parts.is_empty(), "concat_rows: empty input");
    let graph = parts[0].graph;
    let d = parts[0].dims2().1;
    let mut total = 0;
    let mut blocks = Vec::with_capacity(parts.len());
    for p in parts {
        parts[0].same_graph(p);
        let (ni, di) = p.dims2();
        assert_eq!(di, d, "concat_rows: column mismatch {di} vs {d}");
        blocks.push((p.id, total, ni));
        total += ni;
    }
    let mut data = Vec::with_capacity(total * d);
    for p in parts {
        data.extend_from_slice(&p.to_vec());
    }
    let needs = parts.iter().any(|p| p.needs_grad());
    graph.push(
        vec![total, d],
        data,
        needs,
        needs.then(|| -> BackFn {
            Box::new(move |g, emit| {
                for &(pid, row0, ni) in &blocks {
                    emit(pid, g[row0 * d..(row0 + ni) * d].to_vec());
                }
            })
        }),
    )
}

/// Horizontal concatenation of `[n, d_i]` matrices.
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Var<'g> {
    assert!(!parts.is_empty(), "concat_cols: empty input");
    let graph = parts[0].graph;
    let n = parts[0].dims2().0;
    let mut total = 0;
    let mut blocks = Vec::with_capacity(parts.len());
    for p in parts {
        parts[0].same_graph(p);
        let (ni, di) = p.dims2();
        assert_eq!(ni, n, "concat_cols: row mismatch {ni} vs {n}");
        blocks.push((p.id, total, di));
        total += di;
    }
    let mut data = vec![0.0; n * total];
    for (p, &(_, c0, di)) in parts.iter().zip(&blocks) {
        let x = p.to_vec();
        for i in 0..n {
            data[i * total + c0..i * total + c0 + di].copy_from_slice(&x[i * di..(i + 1) * di]);
        }
    }
    let needs = parts.iter().any(|p| p.needs_grad());
    graph.push(
        vec![n, total],
        data,
        needs,
        needs.then(|| -> BackFn {
            Box::new(move |g, emit| {
                for &(pid, c0, di) in &blocks {
                    let mut dp = vec![0.0; n * di];
                    for i in 0..n {
                        dp[i * di..(i + 1) * di]
                            .copy_from_slice(&g[i * total + c0..i * total + c0 + di]);
                    }
                    emit(pid, dp);
                }
            })
        }),
    )
}

// ─── Sequence ops ──────────────────────────────────────────────────────────

/// Bin boundaries of adaptive average pooling: bin `i` covers input
/// indices `[floor(i·l/l_out), ceil((i+1)·l/l_out))`. Bins may overlap.
pub fn pool_bins(l: usize, l_out: usize) -> Vec<(usize, usize)> {
    assert!(l_out >= 1 && l_out <= l, "pool: need 1 <= l_out ({l_out}) <= l ({l})");
    (0..l_out)
        .map(|i| {
            let lo = i * l / l_out;
            let hi = ((i + 1) * l).div_ceil(l_out);
            (lo, hi)
        })
        .collect()
}

impl<'g> Var<'g> {
    /// Adaptive average pooling over the token axis of `[t, l, d]`.
    pub fn pool_tokens(self, l_out: usize) -> Var<'g> {
        let (t, l, d) = self.dims3();
        let bins = pool_bins(l, l_out);
        let x = self.to_vec();
        let mut data = vec![0.0; t * l_out * d];
        for ti in 0..t {
            for (i, &(lo, hi)) in bins.iter().enumerate() {
                let w = 1.0 / (hi - lo) as f64;
                for r in lo..hi {
                    for j in 0..d {
                        data[(ti * l_out + i) * d + j] += x[(ti * l + r) * d + j] * w;
                    }
                }
            }
        }
        let ia = self.id;
        let needs = self.needs_grad();
        let bins_b = bins.clone();
        self.graph.push(
            vec![t, l_out, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; t * l * d];
                    for ti in 0..t {
                        for (i, &(lo, hi)) in bins_b.iter().enumerate() {
                            let w = 1.0 / (hi - lo) as f64;
                            for r in lo..hi {
                                for j in 0..d {
                                    dx[(ti * l + r) * d + j] += g[(ti * l_out + i) * d + j] * w;
                                }
                            }
                        }
                    }
                    emit(ia, dx);
                })
            }),
        )
    }

    /// Add a per-time-step vector `[t, d]` to every token of `[t, l, d]`.
    pub fn add_time_broadcast(self, per_step: Var<'g>) -> Var<'g> {
        self.same_graph(&per_step);
        let (t, l, d) = self.dims3();
        let gs = per_step.shape();
        assert_eq!(gs, vec![t, d], "add_time_broadcast: expected [{t}, {d}], got {gs:?}");
        let x = self.to_vec();
        let e = per_step.to_vec();
        let mut data = x.clone();
        for ti in 0..t {
            for li in 0..l {
                for j in 0..d {
                    data[(ti * l + li) * d + j] += e[ti * d + j];
                }
            }
        }
        let (ia, ie) = (self.id, per_step.id);
        let needs = self.needs_grad() || per_step.needs_grad();
        self.graph.push(
            vec![t, l, d],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    emit(ia, g.to_vec());
                    let mut de = vec![0.0; t * d];
                    for ti in 0..t {
                        for li in 0..l {
                            for j in 0..d {
                                de[ti * d + j] += g[(ti * l + li) * d + j];
                            }
                        }
                    }
                    emit(ie, de);
                })
            }),
        )
    }

    /// Grouped 2-D convolution over `[n, h, w]` with `n/3` groups: each
    /// output channel `g` sees only input channels `{3g, 3g+1, 3g+2}`,
    /// kernel 3x3, stride 1, zero padding 1. Weights are
    /// `[n/3, 3, 3, 3]`, bias `[n/3]`.
    pub fn conv_grouped3x3(self, weight: Var<'g>, bias: Var<'g>) -> Var<'g> {
        self.same_graph(&weight);
        self.same_graph(&bias);
        let (n, h, w) = self.dims3();
        assert!(n % 3 == 0, "conv_grouped3x3: channel count {n} not divisible by 3");
        let groups = n / 3;
        assert_eq!(weight.shape(), vec![groups, 3, 3, 3], "conv_grouped3x3: weight shape");
        assert_eq!(bias.shape(), vec![groups], "conv_grouped3x3: bias shape");
        let x = self.to_vec();
        let wt = weight.to_vec();
        let b = bias.to_vec();
        let plane = h * w;
        let mut data = vec![0.0; groups * plane];
        for g_i in 0..groups {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = b[g_i];
                    for c in 0..3 {
                        let xch = &x[(3 * g_i + c) * plane..(3 * g_i + c + 1) * plane];
                        for (u, xi) in kernel_span(i, h) {
                            for (v, xj) in kernel_span(j, w) {
                                acc += wt[((g_i * 3 + c) * 3 + u) * 3 + v] * xch[xi * w + xj];
                            }
                        }
                    }
                    data[g_i * plane + i * w + j] = acc;
                }
            }
        }
        let (ix, iw, ib) = (self.id, weight.id, bias.id);
        let needs = self.needs_grad() || weight.needs_grad() || bias.needs_grad();
        self.graph.push(
            vec![groups, h, w],
            data,
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let mut dx = vec![0.0; n * plane];
                    let mut dw = vec![0.0; groups * 27];
                    let mut db = vec![0.0; groups];
                    for g_i in 0..groups {
                        let gout = &g[g_i * plane..(g_i + 1) * plane];
                        for i in 0..h {
                            for j in 0..w {
                                let gv = gout[i * w + j];
                                db[g_i] += gv;
                                for c in 0..3 {
                                    let ch = 3 * g_i + c;
                                    for (u, xi) in kernel_span(i, h) {
                                        for (v, xj) in kernel_span(j, w) {
                                            let widx = ((g_i * 3 + c) * 3 + u) * 3 + v;
                                            dw[widx] += gv * x[ch * plane + xi * w + xj];
                                            dx[ch * plane + xi * w + xj] += gv * wt[widx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    emit(ix, dx);
                    emit(iw, dw);
                    emit(ib, db);
                })
            }),
        )
    }

    /// Mean cross-entropy over the masked rows of `[n, v]` logits.
    /// Rows with `mask[i] == false` contribute neither loss nor gradient.
    /// An all-false mask yields exactly 0.
    pub fn masked_cross_entropy(self, targets: &[usize], mask: &[bool]) -> Var<'g> {
        let (n, v) = self.dims2();
        assert_eq!(targets.len(), n, "masked_cross_entropy: targets length");
        assert_eq!(mask.len(), n, "masked_cross_entropy: mask length");
        for (i, &t) in targets.iter().enumerate() {
            if mask[i] {
                assert!(t < v, "masked_cross_entropy: target {t} out of vocab {v}");
            }
        }
        let x = self.to_vec();
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return self.graph.scalar(0.0);
        }
        let mut probs = vec![0.0; n * v];
        let mut loss = 0.0;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let row = &x[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..v {
                let e = (row[j] - max).exp();
                probs[i * v + j] = e;
                sum += e;
            }
            for j in 0..v {
                probs[i * v + j] /= sum;
            }
            loss -= (row[targets[i]] - max) - sum.ln();
        }
        loss /= count as f64;
        let targets_b = targets.to_vec();
        let mask_b = mask.to_vec();
        let ia = self.id;
        let needs = self.needs_grad();
        self.graph.push(
            vec![],
            vec![loss],
            needs,
            needs.then(|| -> BackFn {
                Box::new(move |g, emit| {
                    let scale = g[0] / count as f64;
                    let mut dx = vec![0.0; n * v];
                    for i in 0..n {
                        if !mask_b[i] {
                            continue;
                        }
                        for j in 0..v {
                            let indicator = if j == targets_b[i] { 1.0 } else { 0.0 };
                            dx[i * v + j] = scale * (probs[i * v + j] - indicator);
                        }
                    }
                    emit(ia, dx);
                })
            }),
        )
    }
}

fn kernel_span(center: usize, size: usize) -> impl Iterator<Item = (usize, usize)> {
    // (kernel tap, input index) pairs for a 3-tap kernel with padding 1
    (0..3usize).filter_map(move |u| {
        let idx = center as isize + u as isize - 1;
        (idx >= 0 && (idx as usize) < size).then_some((u, idx as usize))
    })
}

// ─── Composite helpers ─────────────────────────────────────────────────────

/// Scaled dot-product attention: softmax(Q Kᵀ / sqrt(d)) V.
///
/// `q: [n_q, d]`, `k: [n_k, d]`, `v: [n_k, d_v]` → `[n_q, d_v]`.
pub fn attention<'g>(q: Var<'g>, k: Var<'g>, v: Var<'g>) -> Var<'g> {
    let (_, d) = q.dims2();
    let (nk, dk) = k.dims2();
    assert_eq!(d, dk, "attention: query dim {d} vs key dim {dk}");
    let (nv, _) = v.dims2();
    assert_eq!(nk, nv, "attention: {nk} keys vs {nv} values");
    let scores = q.matmul_nt(k).scale(1.0 / (d as f64).sqrt());
    scores.row_softmax().matmul(v)
}

/// Two-layer feed-forward with GELU between the affine maps:
/// `y = GELU(x W1ᵀ + b1) W2ᵀ + b2`.
pub fn ffn<'g>(x: Var<'g>, w1: Var<'g>, b1: Var<'g>, w2: Var<'g>, b2: Var<'g>) -> Var<'g> {
    x.matmul_nt(w1).add_bias(b1).gelu().matmul_nt(w2).add_bias(b2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        let r = rows.len();
        let c = rows[0].len();
        Tensor::new(vec![r, c], rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    #[test]
    fn attention_identical_keys_averages_values() {
        let g = Graph::new();
        let q = g.constant(&t2(&[&[1.0, 0.0]]));
        let k = g.constant(&t2(&[&[1.0, 0.0], &[1.0, 0.0]]));
        let v = g.constant(&t2(&[&[2.0], &[4.0]]));
        let out = attention(q, k, v);
        assert!((out.to_vec()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let g = Graph::new();
        let x = g.constant(&t2(&[&[0.0, 0.0]]));
        let p = x.row_softmax();
        assert_eq!(p.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let g = Graph::new();
        let mut rng = crate::util::rng_from_seed(3);
        let x = g.constant(&Tensor::randn(&[7, 11], 3.0, &mut rng));
        let p = x.row_softmax();
        let data = p.to_vec();
        for i in 0..7 {
            let s: f64 = data[i * 11..(i + 1) * 11].iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn ffn_zero_weights_zero_output() {
        let g = Graph::new();
        let x = g.constant(&t2(&[&[1.0, -2.0], &[0.5, 3.0]]));
        let w1 = g.constant(&Tensor::zeros(&[4, 2]));
        let b1 = g.constant(&Tensor::zeros(&[4]));
        let w2 = g.constant(&Tensor::zeros(&[3, 4]));
        let b2 = g.constant(&Tensor::zeros(&[3]));
        let y = ffn(x, w1, b1, w2, b2);
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ffn_identity_weights_is_scalar_gelu() {
        let g = Graph::new();
        let x = g.constant(&t2(&[&[3.0]]));
        let w1 = g.constant(&Tensor::eye(1));
        let b1 = g.constant(&Tensor::zeros(&[1]));
        let w2 = g.constant(&Tensor::eye(1));
        let b2 = g.constant(&Tensor::zeros(&[1]));
        let y = ffn(x, w1, b1, w2, b2);
        // oracle: 0.5 * 3 * (1 + erf(3/sqrt(2)))
        let expect = 0.5 * 3.0 * (1.0 + libm::erf(3.0 / std::f64::consts::SQRT_2));
        assert!((y.to_vec()[0] - expect).abs() < 1e-12);
        assert!((y.to_vec()[0] - 2.9960).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_two_point_row() {
        let g = Graph::new();
        let x = g.constant(&t2(&[&[1.0, 3.0]]));
        let gamma = g.constant(&Tensor::full(&[2], 1.0));
        let beta = g.constant(&Tensor::zeros(&[2]));
        let y = x.layer_norm(gamma, beta, 1e-5);
        let v = y.to_vec();
        assert!((v[0] + 1.0).abs() < 1e-4);
        assert!((v[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let g = Graph::new();
        let x = g.constant(&t2(&[&[5.0, 5.0, 5.0]]));
        let gamma = g.constant(&Tensor::full(&[3], 1.0));
        let beta = g.constant(&Tensor::zeros(&[3]));
        let y = x.layer_norm(gamma, beta, 1e-5);
        for v in y.to_vec() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "feature dim must be >= 2")]
    fn layer_norm_rejects_single_feature() {
        let g = Graph::new();
        let x = g.constant(&t2(&[&[1.0]]));
        let gamma = g.constant(&Tensor::full(&[1], 1.0));
        let beta = g.constant(&Tensor::zeros(&[1]));
        let _ = x.layer_norm(gamma, beta, 1e-5);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let g = Graph::new();
        let x = g.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]));
        let loss = x.mul(x).sum();
        let grads = g.backward(loss);
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_grad() {
        let g = Graph::new();
        let x = g.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]));
        let p = g.leaf(&Tensor::new(vec![3], vec![0.0, 0.0, 0.0]));
        let loss = x.sum();
        let grads = g.backward(loss);
        assert!(grads.get(p).is_none());
        assert_eq!(grads.get_or_zeros(p), vec![0.0; 3]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar() {
        let g = Graph::new();
        let x = g.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]));
        let _ = g.backward(x);
    }

    #[test]
    fn ops_are_deterministic() {
        let run = || {
            let g = Graph::new();
            let mut rng = crate::util::rng_from_seed(17);
            let a = g.leaf(&Tensor::randn(&[4, 5], 1.0, &mut rng));
            let b = g.leaf(&Tensor::randn(&[6, 5], 1.0, &mut rng));
            let y = a.matmul_nt(b).row_softmax().sum();
            let grads = g.backward(y);
            (y.value(), grads.get(a).unwrap().to_vec())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(g1, g2);
        for (x, y) in g1.iter().zip(&g2) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn causal_softmax_support_is_lower_triangular() {
        let g = Graph::new();
        let mut rng = crate::util::rng_from_seed(5);
        let x = g.constant(&Tensor::randn(&[5, 5], 1.0, &mut rng));
        let p = x.causal_row_softmax();
        let data = p.to_vec();
        for i in 0..5 {
            for j in 0..5 {
                if j > i {
                    assert_eq!(data[i * 5 + j], 0.0);
                } else {
                    assert!(data[i * 5 + j] > 0.0);
                }
            }
            let s: f64 = data[i * 5..i * 5 + i + 1].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_bins_match_documented_rule() {
        assert_eq!(pool_bins(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(pool_bins(3, 3), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(pool_bins(3, 2), vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn pool_tokens_examples() {
        let g = Graph::new();
        // [1,2,3,4] with D=1, L_out=2 -> [1.5, 3.5]
        let x = g.constant(&Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]));
        assert_eq!(x.pool_tokens(2).to_vec(), vec![1.5, 3.5]);
        // identity at L_out == L
        let y = g.constant(&Tensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]));
        assert_eq!(y.pool_tokens(3).to_vec(), vec![1.0, 2.0, 3.0]);
        // overlapping bins [0,2) and [1,3)
        assert_eq!(y.pool_tokens(2).to_vec(), vec![1.5, 2.5]);
    }

    #[test]
    fn masked_ce_all_masked_is_zero() {
        let g = Graph::new();
        let x = g.leaf(&Tensor::zeros(&[2, 4]));
        let loss = x.masked_cross_entropy(&[0, 1], &[false, false]);
        assert_eq!(loss.value(), 0.0);
        let grads = g.backward(loss);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn masked_ce_uniform_logits() {
        let g = Graph::new();
        let x = g.constant(&Tensor::zeros(&[3, 64]));
        let loss = x.masked_cross_entropy(&[5, 9, 1], &[true, true, true]);
        assert!((loss.value() - 64.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let g = Graph::new();
        let a = g.constant(&t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.constant(&t2(&[&[5.0, 6.0]]));
        let c = concat_rows(&[a, b]);
        assert_eq!(c.shape(), vec![3, 2]);
        assert_eq!(c.slice_rows(2, 3).to_vec(), vec![5.0, 6.0]);
        let d = concat_cols(&[a, a]);
        assert_eq!(d.shape(), vec![2, 4]);
        assert_eq!(d.slice_cols(2, 4).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }
}
