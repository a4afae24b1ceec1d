use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Mean absolute error between `min(pred, delta)` and `min(target, delta)`.
///
/// Returns the loss and its subgradient with respect to `pred`; the
/// derivative of the clamp is zero for `pred >= delta` and the derivative
/// of `|x|` at zero is zero.
pub fn clamped_l1_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, delta: T) -> Result<(T, Tensor<T>)> {
    if pred.rank() != 1 || pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "clamped_l1_loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if !(delta > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "clamp distance must be positive, got {delta}"
        )));
    }
    if target.data().iter().any(|&t| t < T::zero()) {
        return Err(Error::InvalidInput("target distances must be non-negative".into()));
    }
    let n = pred.len();
    let inv_n = T::one() / T::from_usize(n).expect("batch size");
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(n);
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let diff = p.min(delta) - t.min(delta);
        total += diff.abs();
        let g = if p >= delta || diff == T::zero() {
            T::zero()
        } else if diff > T::zero() {
            inv_n
        } else {
            -inv_n
        };
        grad.push(g);
    }
    Ok((total * inv_n, Tensor::new(vec![n], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_target() {
        let p = Tensor::new(vec![1], vec![0.05f64]).unwrap();
        let t = Tensor::new(vec![1], vec![0.2]).unwrap();
        let (loss, g) = clamped_l1_loss(&p, &t, 0.1).unwrap();
        assert!((loss - 0.05).abs() < 1e-15);
        assert_eq!(g.data(), &[-1.0]);
    }

    #[test]
    fn equal_inputs_give_zero() {
        let p = Tensor::new(vec![3], vec![0.01f32, 0.2, 0.0]).unwrap();
        let (loss, g) = clamped_l1_loss(&p, &p, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_batch_has_zero_gradient() {
        let p = Tensor::new(vec![3], vec![0.3f64, 0.11, 5.0]).unwrap();
        let t = Tensor::new(vec![3], vec![0.2, 0.9, 0.1]).unwrap();
        let (loss, g) = clamped_l1_loss(&p, &t, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_empty_and_bad_inputs() {
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
        let p = Tensor::new(vec![2], vec![0.0f32, 0.0]).unwrap();
        let t = Tensor::new(vec![2], vec![-0.1f32, 0.0]).unwrap();
        assert!(clamped_l1_loss(&p, &t, 0.1).is_err());
        assert!(clamped_l1_loss(&p, &p, 0.0).is_err());
        assert!(clamped_l1_loss(&p, &Tensor::zeros(&[3]), 0.1).is_err());
    }
}
