use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Upper bound on the number of elements in one im2col buffer.
const COL_BUDGET: usize = 1 << 23;

/// Output extent along one axis, or `None` when the window does not fit.
pub fn conv_output_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = extent + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    inp: [usize; 3],
    out: [usize; 3],
}

impl ConvGeom {
    fn new<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, stride: usize, pad: usize) -> Result<Self> {
        let (is, ws) = (input.shape(), weight.shape());
        if is.len() != 4 {
            return Err(Error::shape(format!("conv3d input must be C×D×H×W, got {is:?}")));
        }
        if ws.len() != 5 {
            return Err(Error::shape(format!(
                "conv3d weight must be Cout×Cin×k×k×k, got {ws:?}"
            )));
        }
        if ws[1] != is[0] {
            return Err(Error::shape(format!(
                "conv3d channel mismatch: input has {} channels, weight expects {} (input {is:?}, weight {ws:?})",
                is[0], ws[1]
            )));
        }
        let k = ws[2];
        if ws[3] != k || ws[4] != k {
            return Err(Error::shape(format!("conv3d kernel must be cubic, got {ws:?}")));
        }
        if k % 2 == 0 {
            return Err(Error::shape(format!("conv3d kernel extent must be odd, got {k}")));
        }
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = conv_output_extent(is[a + 1], k, stride, pad).ok_or_else(|| {
                Error::shape(format!(
                    "conv3d: empty output for input {is:?}, kernel {k}, stride {stride}, padding {pad}"
                ))
            })?;
        }
        Ok(Self {
            c_in: is[0],
            c_out: ws[0],
            k,
            stride,
            pad,
            inp: [is[1], is[2], is[3]],
            out,
        })
    }

    fn rows(&self) -> usize {
        self.c_in * self.k * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.out[1] * self.out[2]
    }

    fn out_len(&self) -> usize {
        self.out[0] * self.plane()
    }

    /// Number of output z-planes handled per im2col slab.
    fn slab_planes(&self) -> usize {
        (COL_BUDGET / (self.rows() * self.plane()).max(1)).clamp(1, self.out[0])
    }

    /// Input coordinate for output coordinate `o` and kernel tap `t`, if inside.
    #[inline]
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + t) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }

    /// Range of output x for which the input x is in bounds, for tap `t`.
    fn valid_x(&self, t: usize) -> (usize, usize) {
        let w = self.inp[2];
        let (s, p) = (self.stride as isize, self.pad as isize);
        let t = t as isize;
        // need 0 <= ox*s + t - p < w
        let lo = ((p - t).max(0) + s - 1) / s;
        let hi_excl = ((w as isize + p - t - 1).div_euclid(s) + 1).clamp(0, self.out[2] as isize);
        let lo = (lo as usize).min(self.out[2]);
        (lo, (hi_excl as usize).max(lo))
    }

    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let k = self.k;
        for ci in 0..self.c_in {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let r = ((ci * k + kz) * k + ky) * k + kx;
                        f(r, ci, kz, ky, kx);
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, input: &[T], z0: usize, nz: usize, col: &mut [T]) {
        let [d, h, w] = self.inp;
        let (oh, ow) = (self.out[1], self.out[2]);
        let cols = nz * oh * ow;
        self.for_each_row(|r, ci, kz, ky, kx| {
            let row = &mut col[r * cols..(r + 1) * cols];
            let (xlo, xhi) = self.valid_x(kx);
            for dz in 0..nz {
                let iz = self.source(z0 + dz, kz, d);
                for oy in 0..oh {
                    let dst = &mut row[(dz * oh + oy) * ow..(dz * oh + oy + 1) * ow];
                    let iy = self.source(oy, ky, h);
                    match (iz, iy) {
                        (Some(iz), Some(iy)) => {
                            let base = ((ci * d + iz) * h + iy) * w;
                            dst[..xlo].fill(T::zero());
                            dst[xhi..].fill(T::zero());
                            if xhi == xlo {
                                // no in-bounds tap on this row
                            } else if self.stride == 1 {
                                let x0 = xlo + kx - self.pad;
                                dst[xlo..xhi].copy_from_slice(&input[base + x0..base + x0 + (xhi - xlo)]);
                            } else {
                                for ox in xlo..xhi {
                                    dst[ox] = input[base + ox * self.stride + kx - self.pad];
                                }
                            }
                        }
                        _ => dst.fill(T::zero()),
                    }
                }
            }
        });
    }

    fn col2im_add<T: Real>(&self, col: &[T], z0: usize, nz: usize, grad_input: &mut [T]) {
        let [d, h, w] = self.inp;
        let (oh, ow) = (self.out[1], self.out[2]);
        let cols = nz * oh * ow;
        self.for_each_row(|r, ci, kz, ky, kx| {
            let row = &col[r * cols..(r + 1) * cols];
            let (xlo, xhi) = self.valid_x(kx);
            for dz in 0..nz {
                let Some(iz) = self.source(z0 + dz, kz, d) else {
                    continue;
                };
                for oy in 0..oh {
                    let Some(iy) = self.source(oy, ky, h) else { continue };
                    let src = &row[(dz * oh + oy) * ow..(dz * oh + oy + 1) * ow];
                    let base = ((ci * d + iz) * h + iy) * w;
                    if xhi == xlo {
                        // no in-bounds tap on this row
                    } else if self.stride == 1 {
                        let x0 = xlo + kx - self.pad;
                        let dst = &mut grad_input[base + x0..base + x0 + (xhi - xlo)];
                        for (g, &s) in dst.iter_mut().zip(&src[xlo..xhi]) {
                            *g += s;
                        }
                    } else {
                        for ox in xlo..xhi {
                            grad_input[base + ox * self.stride + kx - self.pad] += src[ox];
                        }
                    }
                }
            }
        });
    }
}

/// 3D cross-correlation with zero padding.
///
/// `input` is C_in×D×H×W, `weight` is C_out×C_in×k×k×k, `bias` has C_out entries.
pub fn conv3d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input, weight, stride, padding)?;
    if bias.shape() != [g.c_out] {
        return Err(Error::shape(format!(
            "conv3d bias must have shape [{}], got {:?}",
            g.c_out,
            bias.shape()
        )));
    }
    let out_len = g.out_len();
    let mut out = vec![T::zero(); g.c_out * out_len];
    for (co, chunk) in out.chunks_mut(out_len).enumerate() {
        chunk.fill(bias.data()[co]);
    }
    let slab = g.slab_planes();
    let rows = g.rows();
    let mut col = vec![T::zero(); rows * slab * g.plane()];
    let mut z0 = 0;
    while z0 < g.out[0] {
        let nz = slab.min(g.out[0] - z0);
        let cols = nz * g.plane();
        g.im2col(input.data(), z0, nz, &mut col);
        let off = z0 * g.plane();
        T::gemm(
            g.c_out,
            rows,
            cols,
            T::one(),
            weight.data(),
            rows as isize,
            1,
            &col,
            cols as isize,
            1,
            T::one(),
            &mut out[off..],
            out_len as isize,
            1,
        );
        z0 += nz;
    }
    Tensor::new(vec![g.c_out, g.out[0], g.out[1], g.out[2]], out)
}

/// Gradients of a scalar loss with respect to the three conv inputs.
#[derive(Debug, Clone)]
pub struct Conv3dGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Exact adjoint of [`conv3d_forward`].
pub fn conv3d_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Conv3dGrads<T>> {
    let g = ConvGeom::new(saved_input, weight, stride, padding)?;
    let expect = [g.c_out, g.out[0], g.out[1], g.out[2]];
    if grad_out.shape() != expect {
        return Err(Error::shape(format!(
            "conv3d backward: grad_out {:?} does not match forward output {expect:?}",
            grad_out.shape()
        )));
    }
    let rows = g.rows();
    let out_len = g.out_len();
    let go = grad_out.data();

    let mut gb = vec![T::zero(); g.c_out];
    for (co, chunk) in go.chunks(out_len).enumerate() {
        gb[co] = chunk.iter().copied().sum();
    }

    let mut gw = vec![T::zero(); g.c_out * rows];
    let mut gi = vec![T::zero(); saved_input.len()];
    let slab = g.slab_planes();
    let mut col = vec![T::zero(); rows * slab * g.plane()];
    let mut z0 = 0;
    while z0 < g.out[0] {
        let nz = slab.min(g.out[0] - z0);
        let cols = nz * g.plane();
        let off = z0 * g.plane();
        g.im2col(saved_input.data(), z0, nz, &mut col);
        // dW += dY_slab · colᵀ
        T::gemm(
            g.c_out,
            cols,
            rows,
            T::one(),
            &go[off..],
            out_len as isize,
            1,
            &col,
            1,
            cols as isize,
            T::one(),
            &mut gw,
            rows as isize,
            1,
        );
        // dcol = Wᵀ · dY_slab, reusing the column buffer
        T::gemm(
            rows,
            g.c_out,
            cols,
            T::one(),
            weight.data(),
            1,
            rows as isize,
            &go[off..],
            out_len as isize,
            1,
            T::zero(),
            &mut col,
            cols as isize,
            1,
        );
        g.col2im_add(&col, z0, nz, &mut gi);
        z0 += nz;
    }
    Ok(Conv3dGrads {
        input: Tensor::new(saved_input.shape().to_vec(), gi)?,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![g.c_out], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Six-nested-loop reference (plus channel loops).
    fn reference(input: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: usize, p: usize) -> Tensor<f64> {
        let is = input.shape();
        let ws = w.shape();
        let (ci_n, d, h, wd) = (is[0], is[1], is[2], is[3]);
        let (co_n, k) = (ws[0], ws[2]);
        let od = (d + 2 * p - k) / s + 1;
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        let mut out = Tensor::zeros(&[co_n, od, oh, ow]);
        for co in 0..co_n {
            for z in 0..od {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = b.data()[co];
                        for ci in 0..ci_n {
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iz = (z * s + kz) as isize - p as isize;
                                        let iy = (y * s + ky) as isize - p as isize;
                                        let ix = (x * s + kx) as isize - p as isize;
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= d || iy >= h || ix >= wd {
                                            continue;
                                        }
                                        acc += input.data()[((ci * d + iz) * h + iy) * wd + ix]
                                            * w.data()[(((co * ci_n + ci) * k + kz) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((co * od + z) * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn scalar_kernel_is_affine() {
        let input = Tensor::new(vec![1, 1, 1, 1], vec![3.0f64]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1, 1], vec![-2.0]).unwrap();
        let b = Tensor::new(vec![1], vec![0.5]).unwrap();
        let out = conv3d_forward(&input, &w, &b, 1, 0).unwrap();
        assert_eq!(out.data(), &[3.0 * -2.0 + 0.5]);

        let go = Tensor::new(vec![1, 1, 1, 1], vec![1.5]).unwrap();
        let g = conv3d_backward(&go, &input, &w, 1, 0).unwrap();
        assert_eq!(g.input.data(), &[1.5 * -2.0]);
        assert_eq!(g.weight.data(), &[1.5 * 3.0]);
        assert_eq!(g.bias.data(), &[1.5]);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random(&[1, 4, 4, 4], &mut rng);
        let mut w = Tensor::zeros(&[1, 1, 3, 3, 3]);
        w.data_mut()[13] = 1.0;
        let b = Tensor::zeros(&[1]);
        let out = conv3d_forward(&input, &w, &b, 1, 1).unwrap();
        assert_eq!(out, input);

        let go = random(&[1, 4, 4, 4], &mut rng);
        let g = conv3d_backward(&go, &input, &w, 1, 1).unwrap();
        assert_eq!(g.input, go);
    }

    #[test]
    fn strided_conv_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random(&[2, 5, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        for (s, p) in [(2, 1), (1, 1), (1, 0), (2, 0), (3, 2)] {
            let out = conv3d_forward(&input, &w, &b, s, p).unwrap();
            let expect = reference(&input, &w, &b, s, p);
            assert_eq!(out.shape(), expect.shape());
            for (a, e) in out.data().iter().zip(expect.data()) {
                assert!((a - e).abs() <= 1e-6 * e.abs().max(1.0), "s={s} p={p}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn kernel_wider_than_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for shape in [[2, 1, 1, 1], [2, 2, 1, 3]] {
            let input = random(&shape, &mut rng);
            let w = random(&[3, 2, 5, 5, 5], &mut rng);
            let b = random(&[3], &mut rng);
            let out = conv3d_forward(&input, &w, &b, 1, 2).unwrap();
            let expect = reference(&input, &w, &b, 1, 2);
            for (a, e) in out.data().iter().zip(expect.data()) {
                assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0));
            }
            let g = conv3d_backward(&out, &input, &w, 1, 2).unwrap();
            assert_eq!(g.input.shape(), input.shape());
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let input = Tensor::<f32>::zeros(&[2, 4, 4, 4]);
        let w = Tensor::zeros(&[3, 1, 3, 3, 3]);
        let b = Tensor::zeros(&[3]);
        let err = conv3d_forward(&input, &w, &b, 1, 1).unwrap_err();
        assert!(err.to_string().contains("channel mismatch"), "{err}");
    }

    #[test]
    fn backward_rejects_mismatched_grad_out() {
        let input = Tensor::<f32>::zeros(&[1, 4, 4, 4]);
        let w = Tensor::zeros(&[2, 1, 3, 3, 3]);
        let go = Tensor::zeros(&[2, 3, 4, 4]);
        assert!(conv3d_backward(&go, &input, &w, 1, 1).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (s, p) in [(1, 1), (2, 1)] {
            let input = random(&[2, 4, 5, 3], &mut rng);
            let w = random(&[2, 2, 3, 3, 3], &mut rng);
            let b = random(&[2], &mut rng);
            let out = conv3d_forward(&input, &w, &b, s, p).unwrap();
            let r = random(out.shape(), &mut rng);
            let loss = |i: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                let o = conv3d_forward(i, w, b, s, p).unwrap();
                o.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
            };
            let g = conv3d_backward(&r, &input, &w, s, p).unwrap();
            let h = 1e-6;
            let check = |analytic: f64, plus: f64, minus: f64| {
                let fd = (plus - minus) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-5, "analytic {analytic} fd {fd}");
            };
            for idx in [0, 7, 33, input.len() - 1] {
                let (mut ip, mut im) = (input.clone(), input.clone());
                ip.data_mut()[idx] += h;
                im.data_mut()[idx] -= h;
                check(g.input.data()[idx], loss(&ip, &w, &b), loss(&im, &w, &b));
            }
            for idx in [0, 13, 50, w.len() - 1] {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp.data_mut()[idx] += h;
                wm.data_mut()[idx] -= h;
                check(g.weight.data()[idx], loss(&input, &wp, &b), loss(&input, &wm, &b));
            }
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp.data_mut()[1] += h;
            bm.data_mut()[1] -= h;
            check(g.bias.data()[1], loss(&input, &w, &bp), loss(&input, &w, &bm));
        }
    }
}
