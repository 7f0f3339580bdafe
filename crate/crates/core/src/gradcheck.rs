//! Central finite-difference gradient checking.
//!
//! The numeric side never touches [`crate::autodiff::Graph::backward`]:
//! it only re-evaluates the caller's forward closure at perturbed
//! inputs, so it is an independent oracle for every analytic gradient.

use crate::tensor::Tensor;

/// Default step for central differences.
pub const DEFAULT_H: f64 = 1e-5;

/// Worst-case error between analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

impl GradCheck {
    pub fn within(&self, rel_tol: f64) -> bool {
        self.max_rel_err < rel_tol
    }
}

/// Numeric gradient of `f` w.r.t. every entry of every input, via
/// central differences `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff_grads<F>(f: F, inputs: &[Tensor], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let n = inputs[t].numel();
        let mut g = vec![0.0; n];
        for e in 0..n {
            let orig = work[t].data()[e];
            work[t].data_mut()[e] = orig + h;
            let fp = f(&work);
            work[t].data_mut()[e] = orig - h;
            let fm = f(&work);
            work[t].data_mut()[e] = orig;
            g[e] = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Compare analytic and numeric gradients.
///
/// The relative error denominator is floored at 1e-4: below that the
/// finite-difference truncation noise dominates and a ratio would be
/// meaningless.
pub fn compare_grads(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> GradCheck {
    assert_eq!(analytic.len(), numeric.len());
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.len(), n.len());
        for (&av, &nv) in a.iter().zip(n) {
            let abs = (av - nv).abs();
            let denom = av.abs().max(nv.abs()).max(1e-4);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / denom);
        }
    }
    GradCheck { max_rel_err: max_rel, max_abs_err: max_abs }
}

/// Run a full check of `forward` (which must both compute the loss and
/// return analytic gradients for each input) against central
/// differences of `loss_only`.
pub fn check<FA, FL>(forward: FA, loss_only: FL, inputs: &[Tensor], h: f64) -> GradCheck
where
    FA: Fn(&[Tensor]) -> (f64, Vec<Vec<f64>>),
    FL: Fn(&[Tensor]) -> f64,
{
    let (loss_a, analytic) = forward(inputs);
    let loss_b = loss_only(inputs);
    assert!(
        (loss_a - loss_b).abs() <= 1e-12 * loss_a.abs().max(1.0),
        "forward and loss_only disagree: {loss_a} vs {loss_b}"
    );
    let numeric = central_diff_grads(loss_only, inputs, h);
    compare_grads(&analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches() {
        // f(x) = sum(x^2), df/dx = 2x — analytic by hand here, numeric by FD
        let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]);
        let f = |inp: &[Tensor]| inp[0].data().iter().map(|v| v * v).sum::<f64>();
        let numeric = central_diff_grads(f, &[x.clone()], DEFAULT_H);
        let analytic = vec![x.data().iter().map(|v| 2.0 * v).collect::<Vec<_>>()];
        let res = compare_grads(&analytic, &numeric);
        assert!(res.within(1e-6), "rel err {}", res.max_rel_err);
    }

    #[test]
    fn mismatch_is_detected() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]);
        let f = |inp: &[Tensor]| inp[0].data().iter().map(|v| v * v).sum::<f64>();
        let numeric = central_diff_grads(f, &[x.clone()], DEFAULT_H);
        let wrong = vec![vec![2.0, 3.0]]; // second entry should be 4.0
        let res = compare_grads(&wrong, &numeric);
        assert!(res.max_rel_err > 0.2);
    }
}
