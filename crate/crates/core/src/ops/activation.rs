use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    relu_in_place(out.data_mut());
    out
}

pub fn relu_in_place<T: Real>(data: &mut [T]) {
    for v in data {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Passes gradient where the saved input is strictly positive.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, saved_input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != saved_input.shape() {
        return Err(Error::shape(format!(
            "relu backward: grad {:?} vs input {:?}",
            grad_out.shape(),
            saved_input.shape()
        )));
    }
    let mut g = grad_out.clone();
    relu_backward_in_place(g.data_mut(), saved_input.data());
    Ok(g)
}

/// `saved` may be either the pre-activation or the activation output;
/// both are positive at exactly the same positions.
pub fn relu_backward_in_place<T: Real>(grad: &mut [T], saved: &[T]) {
    debug_assert_eq!(grad.len(), saved.len());
    for (g, &x) in grad.iter_mut().zip(saved) {
        if !(x > T::zero()) {
            *g = T::zero();
        }
    }
}
