//! Pointwise decoder. Batches are stored point-major (one row per query) so
//! the interpolated features feed the first layer without a transpose.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Real;

use super::params::{LayerParams, ModelParams};

fn dims<T: Real>(l: &LayerParams<T>) -> (usize, usize) {
    let s = l.weight.shape();
    (s[0], s[1])
}

fn check_input<T: Real>(params: &ModelParams<T>, len: usize, batch: usize) -> Result<()> {
    let first = params
        .decoder
        .first()
        .ok_or_else(|| Error::shape("decoder has no layers"))?;
    let n_in = dims(first).1;
    if batch == 0 || len != n_in * batch {
        return Err(Error::shape(format!(
            "decoder expects {batch} rows of {n_in} features, got {len} values"
        )));
    }
    Ok(())
}

/// `Y = X·Wᵀ + b` for a B×n_in row batch.
fn affine<T: Real>(x: &[T], batch: usize, l: &LayerParams<T>) -> Vec<T> {
    let (n_out, n_in) = dims(l);
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(l.bias.data());
    }
    T::gemm(
        batch,
        n_in,
        n_out,
        T::one(),
        x,
        n_in as isize,
        1,
        l.weight.data(),
        1,
        n_in as isize,
        T::one(),
        &mut y,
        n_out as isize,
        1,
    );
    y
}

/// Saved layer inputs: `acts[0]` holds the features, `acts[j]` the
/// post-ReLU output of layer `j - 1`.
pub(crate) struct DecoderTrace<T> {
    batch: usize,
    acts: Vec<Vec<T>>,
}

fn run<T: Real>(
    features: Vec<T>,
    batch: usize,
    params: &ModelParams<T>,
    keep: bool,
) -> Result<(Vec<T>, Option<DecoderTrace<T>>)> {
    check_input(params, features.len(), batch)?;
    let last = params.decoder.len() - 1;
    let mut acts = Vec::new();
    let mut x = features;
    for (j, l) in params.decoder.iter().enumerate() {
        let mut y = affine(&x, batch, l);
        if j < last {
            ops::relu_in_place(&mut y);
        }
        if keep {
            acts.push(x);
        }
        x = y;
    }
    Ok((x, keep.then_some(DecoderTrace { batch, acts })))
}

/// Decodes one feature vector to a raw (unclamped) distance.
pub fn decode<T: Real>(features: &[T], params: &ModelParams<T>) -> Result<T> {
    Ok(run(features.to_vec(), 1, params, false)?.0[0])
}

/// Decodes `batch` feature rows laid out back to back.
pub fn decode_batch<T: Real>(features: &[T], batch: usize, params: &ModelParams<T>) -> Result<Vec<T>> {
    Ok(run(features.to_vec(), batch, params, false)?.0)
}

pub(crate) fn decode_traced<T: Real>(
    features: Vec<T>,
    batch: usize,
    params: &ModelParams<T>,
) -> Result<(Vec<T>, DecoderTrace<T>)> {
    let (y, t) = run(features, batch, params, true)?;
    Ok((y, t.expect("trace requested")))
}

/// Back-propagates per-point output gradients. Returns feature gradients
/// (B×F rows) and, when `grads` is given, accumulates parameter gradients.
pub(crate) fn decode_backward<T: Real>(
    trace: &DecoderTrace<T>,
    grad_out: &[T],
    params: &ModelParams<T>,
    mut grads: Option<&mut ModelParams<T>>,
) -> Result<Vec<T>> {
    let b = trace.batch;
    if grad_out.len() != b {
        return Err(Error::shape(format!(
            "decoder backward expects {b} output gradients, got {}",
            grad_out.len()
        )));
    }
    let mut g = grad_out.to_vec();
    for (j, l) in params.decoder.iter().enumerate().rev() {
        let (n_out, n_in) = dims(l);
        let x = &trace.acts[j];
        if let Some(gr) = grads.as_deref_mut() {
            let gl = &mut gr.decoder[j];
            T::gemm(
                n_out,
                b,
                n_in,
                T::one(),
                &g,
                1,
                n_out as isize,
                x,
                n_in as isize,
                1,
                T::one(),
                gl.weight.data_mut(),
                n_in as isize,
                1,
            );
            let gb = gl.bias.data_mut();
            for row in g.chunks(n_out) {
                for (d, &v) in gb.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
        let mut gx = vec![T::zero(); b * n_in];
        T::gemm(
            b,
            n_out,
            n_in,
            T::one(),
            &g,
            n_out as isize,
            1,
            l.weight.data(),
            n_in as isize,
            1,
            T::zero(),
            &mut gx,
            n_in as isize,
            1,
        );
        if j > 0 {
            ops::relu_backward_in_place(&mut gx, x);
        }
        g = gx;
    }
    Ok(g)
}
