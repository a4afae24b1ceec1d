use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Flat input index of every window maximum, in output order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolRecord {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// 2×2×2 max pooling with stride 2. Ties go to the lowest flat index.
pub fn maxpool3d_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolRecord)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!("maxpool3d input must be C×D×H×W, got {s:?}")));
    }
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("maxpool3d needs even spatial extents, got {s:?}")));
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * od * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    // window visited in increasing flat-index order
                    for dz in 0..2 {
                        for dy in 0..2 {
                            let row = ((ch * d + 2 * z + dz) * h + 2 * y + dy) * w + 2 * xo;
                            for idx in row..row + 2 {
                                if best == usize::MAX || x[idx] > best_v {
                                    best = idx;
                                    best_v = x[idx];
                                }
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![c, od, oh, ow], out)?,
        PoolRecord {
            input_shape: s.to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to its recorded window maximum.
pub fn maxpool3d_backward<T: Real>(
    grad_out: &Tensor<T>,
    record: &PoolRecord,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if record.input_shape != input_shape {
        return Err(Error::shape(format!(
            "maxpool3d backward: record is for {:?}, asked for {input_shape:?}",
            record.input_shape
        )));
    }
    if grad_out.len() != record.argmax.len() || input_shape.len() != 4 {
        return Err(Error::shape(format!(
            "maxpool3d backward: grad_out {:?} does not match a record of {} windows",
            grad_out.shape(),
            record.argmax.len()
        )));
    }
    let expect: Vec<usize> = [
        input_shape[0],
        input_shape[1] / 2,
        input_shape[2] / 2,
        input_shape[3] / 2,
    ]
    .to_vec();
    if grad_out.shape() != expect.as_slice() {
        return Err(Error::shape(format!(
            "maxpool3d backward: grad_out {:?}, expected {expect:?}",
            grad_out.shape()
        )));
    }
    let mut gi = Tensor::zeros(input_shape);
    let data = gi.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(&record.argmax) {
        if idx >= data.len() {
            return Err(Error::shape("maxpool3d backward: argmax index out of range"));
        }
        data[idx] += g;
    }
    Ok(gi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_window_picks_last_element() {
        let input = Tensor::new(vec![1, 2, 2, 2], (1..=8).map(|v| v as f64).collect()).unwrap();
        let (out, rec) = maxpool3d_forward(&input).unwrap();
        assert_eq!(out.data(), &[8.0]);
        assert_eq!(rec.argmax, vec![7]);

        let go = Tensor::new(vec![1, 1, 1, 1], vec![2.5]).unwrap();
        let gi = maxpool3d_backward(&go, &rec, input.shape()).unwrap();
        let mut expect = vec![0.0; 8];
        expect[7] = 2.5;
        assert_eq!(gi.data(), expect.as_slice());
    }

    #[test]
    fn ties_go_to_first_element_of_window() {
        let input = Tensor::full(&[2, 4, 4, 4], 1.5f32);
        let (out, rec) = maxpool3d_forward(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.5));
        for (i, &idx) in rec.argmax.iter().enumerate() {
            let (c, rest) = (i / 8, i % 8);
            let (z, y, x) = (rest / 4, (rest / 2) % 2, rest % 2);
            assert_eq!(idx, ((c * 4 + 2 * z) * 4 + 2 * y) * 4 + 2 * x);
        }
        let go = Tensor::full(out.shape(), 1.0f32);
        let gi = maxpool3d_backward(&go, &rec, input.shape()).unwrap();
        assert_eq!(gi.sum(), 16.0);
        for &idx in &rec.argmax {
            assert_eq!(gi.data()[idx], 1.0);
        }
    }

    #[test]
    fn random_input_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = Tensor::<f64>::from_fn(&[2, 4, 4, 4], |_| rng.random_range(-1.0..1.0));
        let (out, _) = maxpool3d_forward(&input).unwrap();
        for c in 0..2 {
            for z in 0..2 {
                for y in 0..2 {
                    for x in 0..2 {
                        let mut m = f64::NEG_INFINITY;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let idx = ((c * 4 + 2 * z + dz) * 4 + 2 * y + dy) * 4 + 2 * x + dx;
                                    m = m.max(input.data()[idx]);
                                }
                            }
                        }
                        assert_eq!(out.data()[((c * 2 + z) * 2 + y) * 2 + x], m);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_odd_extent_and_bad_record() {
        assert!(maxpool3d_forward(&Tensor::<f32>::zeros(&[1, 3, 4, 4])).is_err());
        let (out, rec) = maxpool3d_forward(&Tensor::<f32>::zeros(&[1, 4, 4, 4])).unwrap();
        assert!(maxpool3d_backward(&out, &rec, &[1, 4, 4, 2]).is_err());
        let wrong = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(maxpool3d_backward(&wrong, &rec, &[1, 4, 4, 4]).is_err());
    }
}
