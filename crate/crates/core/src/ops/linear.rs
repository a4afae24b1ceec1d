use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn batch_dims<T: Real>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let ws = weight.shape();
    if ws.len() != 2 {
        return Err(Error::shape(format!("linear weight must be n_out×n_in, got {ws:?}")));
    }
    let (n_out, n_in) = (ws[0], ws[1]);
    let (rows, batch) = match input.shape() {
        [n] => (*n, 1),
        [n, b] => (*n, *b),
        other => {
            return Err(Error::shape(format!(
                "linear input must be n_in or n_in×B, got {other:?}"
            )))
        }
    };
    if rows != n_in {
        return Err(Error::shape(format!(
            "linear input has {rows} features, weight expects {n_in}"
        )));
    }
    Ok((n_out, n_in, batch))
}

fn out_shape(input: &Tensor<impl Real>, n_out: usize) -> Vec<usize> {
    match input.shape() {
        [_] => vec![n_out],
        [_, b] => vec![n_out, *b],
        _ => unreachable!(),
    }
}

/// Pointwise affine map `W·x + b`. A rank-2 input is an n_in×B batch whose
/// columns are mapped independently.
pub fn linear_forward<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n_out, n_in, b) = batch_dims(input, weight)?;
    if bias.shape() != [n_out] {
        return Err(Error::shape(format!(
            "linear bias must be [{n_out}], got {:?}",
            bias.shape()
        )));
    }
    let mut out = Vec::with_capacity(n_out * b);
    for &bv in bias.data() {
        out.extend(std::iter::repeat_n(bv, b));
    }
    T::gemm(
        n_out,
        n_in,
        b,
        T::one(),
        weight.data(),
        n_in as isize,
        1,
        input.data(),
        b as isize,
        1,
        T::one(),
        &mut out,
        b as isize,
        1,
    );
    Tensor::new(out_shape(input, n_out), out)
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n_out, n_in, b) = batch_dims(saved_input, weight)?;
    if grad_out.shape() != out_shape(saved_input, n_out).as_slice() {
        return Err(Error::shape(format!(
            "linear backward: grad_out {:?} does not match output of input {:?}",
            grad_out.shape(),
            saved_input.shape()
        )));
    }
    let go = grad_out.data();
    let bias: Vec<T> = go.chunks(b).map(|r| r.iter().copied().sum()).collect();
    let mut gw = vec![T::zero(); n_out * n_in];
    T::gemm(
        n_out,
        b,
        n_in,
        T::one(),
        go,
        b as isize,
        1,
        saved_input.data(),
        1,
        b as isize,
        T::zero(),
        &mut gw,
        n_in as isize,
        1,
    );
    let mut gi = vec![T::zero(); n_in * b];
    T::gemm(
        n_in,
        n_out,
        b,
        T::one(),
        weight.data(),
        1,
        n_in as isize,
        go,
        b as isize,
        1,
        T::zero(),
        &mut gi,
        b as isize,
        1,
    );
    Ok(LinearGrads {
        input: Tensor::new(saved_input.shape().to_vec(), gi)?,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![n_out], bias)?,
    })
}
