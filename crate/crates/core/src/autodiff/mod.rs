//! Dense small-tensor arithmetic with reverse-mode differentiation.
//!
//! Every backward rule is written in terms of recorded tape operations, so a
//! gradient obtained with [`Tape::grad_graph`] is itself a differentiable node.
//! That is what makes the weight-gradient of an input-gradient penalty exact.

mod tape;
mod tensor;

pub use tape::{PrimitiveKind, Tape, Var};
pub use tensor::Tensor;

/// Central finite-difference gradient of a scalar function of one tensor.
pub fn finite_difference(x: &Tensor, step: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let hi = f(&probe);
        probe.data_mut()[i] = orig - step;
        let lo = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (hi - lo) / (2.0 * step);
    }
    grad
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`, the relative error used by gradient checks.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}
