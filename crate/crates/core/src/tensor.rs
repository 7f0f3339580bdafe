//! Dense row-major f64 tensors and named parameters.
//!
//! `Tensor` is the storage type for every real-valued quantity in the
//! pipeline. Differentiation happens on a per-step tape (see
//! [`crate::autodiff`]); a `Tensor` only carries the latest gradient
//! written back after a backward pass.

use rand_chacha::ChaCha8Rng;

use crate::util::fill_normal;

/// Dense n-dimensional array of f64 in row-major order.
///
/// Invariants: `shape.iter().product() == data.len()`, and `grad`,
/// when present, has the same length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Build a tensor from explicit shape and data.
    ///
    /// Panics if the element count does not match the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {shape:?} implies {numel} elements, got {}",
            data.len()
        );
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![0.0; numel])
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![value; numel])
    }

    /// Scalar tensor (empty shape, one element).
    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![], vec![value])
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0; numel];
        fill_normal(rng, std, &mut data);
        Tensor::new(shape.to_vec(), data)
    }

    /// 2-D identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..numel).map(|i| f(i)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() requires a single-element tensor");
        self.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, yes: bool) {
        self.requires_grad = yes;
        if !yes {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Overwrite the gradient buffer. Panics on length mismatch.
    pub fn set_grad(&mut self, grad: Vec<f64>) {
        assert_eq!(grad.len(), self.data.len(), "gradient length mismatch");
        self.grad = Some(grad);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Euclidean norm of the gradient, 0 when absent.
    pub fn grad_norm(&self) -> f64 {
        match &self.grad {
            None => 0.0,
            Some(g) => g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major linear index for a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (i, (&x, &s)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(x < s, "index {x} out of bounds for axis {i} (size {s})");
            off = off * s + x;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }
}

/// A named, group-tagged trainable tensor.
///
/// The `group` tag drives the per-stage freeze schedule: a training
/// stage lists the groups it updates and everything else stays frozen.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    group: String,
    pub value: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, group: impl Into<String>, mut value: Tensor) -> Self {
        let name = name.into();
        let group = group.into();
        assert!(!group.is_empty(), "parameter {name} has an empty group tag");
        value.set_requires_grad(true);
        Parameter { name, group, value }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn group(&self) -> &str {
        &self.group
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    #[test]
    fn shape_data_invariant_enforced() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        let r = std::panic::catch_unwind(|| Tensor::new(vec![2, 3], vec![0.0; 5]));
        assert!(r.is_err());
    }

    #[test]
    fn scalar_has_empty_shape() {
        let s = Tensor::scalar(4.5);
        assert_eq!(s.shape(), &[] as &[usize]);
        assert_eq!(s.item(), 4.5);
    }

    #[test]
    fn offset_is_row_major() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| i as f64);
        assert_eq!(t.at(&[1, 2, 3]), (1 * 12 + 2 * 4 + 3) as f64);
    }

    #[test]
    fn randn_is_deterministic() {
        let a = Tensor::randn(&[3, 3], 1.0, &mut rng_from_seed(5));
        let b = Tensor::randn(&[3, 3], 1.0, &mut rng_from_seed(5));
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn grad_helpers() {
        let mut t = Tensor::zeros(&[2]);
        assert_eq!(t.grad_norm(), 0.0);
        t.set_grad(vec![3.0, 4.0]);
        assert_eq!(t.grad_norm(), 5.0);
        t.clear_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn parameter_group_must_be_nonempty() {
        let r = std::panic::catch_unwind(|| {
            Parameter::new("w", "", Tensor::zeros(&[1]))
        });
        assert!(r.is_err());
    }
}
