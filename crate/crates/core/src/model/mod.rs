//! The network: convolutional encoder, stencil interpolation, pointwise
//! decoder, and the composed field with its analytic spatial gradient.

mod config;
pub(crate) mod decoder;
pub(crate) mod encoder;
pub(crate) mod interp;
mod params;

use rayon::prelude::*;

use crate::error::Result;
use crate::field::UdfField;
use crate::geometry::Vec3;
use crate::tensor::Real;

pub use config::{
    decoder_flops_per_query, decoder_param_count, encoder_param_count, flop_count, param_count, ArchConfig,
    ConvLayerSpec, DEFAULT_STENCIL_DISPLACEMENT, FEATURE_SCALES,
};
pub use decoder::{decode, decode_batch};
pub use encoder::{encode, encode_tensor, FeatureGrid, FeaturePyramid};
pub use interp::{interpolate, stencil_offsets, STENCIL_POINTS};
pub use params::{LayerParams, ModelParams};

/// Points per batched evaluation chunk.
const CHUNK: usize = 512;

/// Raw field value `decode(interpolate(p))`.
pub fn forward_udf<T: Real>(p: &Vec3, pyramid: &FeaturePyramid<T>, params: &ModelParams<T>) -> Result<T> {
    decode(&interpolate(pyramid, p)?, params)
}

/// Analytic gradient of [`forward_udf`] with respect to `p`.
pub fn grad_udf<T: Real>(p: &Vec3, pyramid: &FeaturePyramid<T>, params: &ModelParams<T>) -> Result<Vec3> {
    Ok(value_and_grad_chunk(pyramid, params, std::slice::from_ref(p))?[0].1)
}

/// Clamps a raw prediction into the reported range `[0, delta]`.
pub fn clamp_reported(value: f64, delta: f64) -> f64 {
    value.clamp(0.0, delta)
}

fn value_chunk<T: Real>(pyramid: &FeaturePyramid<T>, params: &ModelParams<T>, points: &[Vec3]) -> Result<Vec<f64>> {
    let rows = interp::interpolate_rows(pyramid, points)?;
    let out = decoder::decode_batch(&rows, points.len(), params)?;
    Ok(out.into_iter().map(Real::to_f64_lossy).collect())
}

fn value_and_grad_chunk<T: Real>(
    pyramid: &FeaturePyramid<T>,
    params: &ModelParams<T>,
    points: &[Vec3],
) -> Result<Vec<(f64, Vec3)>> {
    let rows = interp::interpolate_rows(pyramid, points)?;
    let (out, trace) = decoder::decode_traced(rows, points.len(), params)?;
    let ones = vec![T::one(); points.len()];
    let grad_rows = decoder::decode_backward(&trace, &ones, params, None)?;
    let grads = interp::backward_points(pyramid, points, &grad_rows);
    Ok(out.into_iter().map(Real::to_f64_lossy).zip(grads).collect())
}

fn chunked<R: Send>(points: &[Vec3], f: impl Fn(&[Vec3]) -> Result<Vec<R>> + Sync + Send) -> Result<Vec<R>> {
    let parts: Vec<Result<Vec<R>>> = points.par_chunks(CHUNK).map(f).collect();
    let mut out = Vec::with_capacity(points.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// A trained network bound to one encoded shape.
#[derive(Debug, Clone)]
pub struct NetworkField<'a, T> {
    pyramid: FeaturePyramid<T>,
    params: &'a ModelParams<T>,
}

impl<'a, T: Real> NetworkField<'a, T> {
    pub fn new(pyramid: FeaturePyramid<T>, params: &'a ModelParams<T>) -> Self {
        Self { pyramid, params }
    }

    pub fn pyramid(&self) -> &FeaturePyramid<T> {
        &self.pyramid
    }
}

impl<T: Real> UdfField for NetworkField<'_, T> {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)> {
        Ok(value_and_grad_chunk(&self.pyramid, self.params, std::slice::from_ref(p))?[0])
    }

    fn value(&self, p: &Vec3) -> Result<f64> {
        Ok(forward_udf(p, &self.pyramid, self.params)?.to_f64_lossy())
    }

    fn value_batch(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        chunked(points, |c| value_chunk(&self.pyramid, self.params, c))
    }

    fn value_and_grad_batch(&self, points: &[Vec3]) -> Result<Vec<(f64, Vec3)>> {
        chunked(points, |c| value_and_grad_chunk(&self.pyramid, self.params, c))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Tiny architecture for gradient checks.
    pub(crate) fn micro_config() -> ArchConfig {
        let mut c = ArchConfig::lightndf(8);
        c.encoder = vec![
            ConvLayerSpec::same(1, 2, 3).emit().pool(),
            ConvLayerSpec::same(2, 3, 3).emit().pool(),
            ConvLayerSpec::same(3, 2, 3).emit().pool(),
            ConvLayerSpec::same(2, 2, 3).emit(),
        ];
        c.decoder_widths = vec![6, 4, 1];
        c.stencil_displacement = 0.05;
        c
    }

    pub(crate) fn random_pyramid(config: &ArchConfig, rng: &mut impl Rng) -> FeaturePyramid<f64> {
        let grids = config
            .feature_resolutions()
            .into_iter()
            .zip(config.feature_channels())
            .map(|(r, c)| FeatureGrid::from_fn(r, c, |_, _, _, _| rng.random_range(-1.0..1.0)))
            .collect();
        FeaturePyramid::new(grids, config.stencil_displacement).unwrap()
    }

    fn random_point(rng: &mut impl Rng, lim: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-lim..lim),
            rng.random_range(-lim..lim),
            rng.random_range(-lim..lim),
        )
    }

    fn fd_grad(pyr: &FeaturePyramid<f64>, params: &ModelParams<f64>, p: Vec3) -> Option<[f64; 3]> {
        let mut g = [0.0; 3];
        for a in 0..3 {
            g[a] = central_difference(
                |t| {
                    let mut q = p;
                    q[a] = t;
                    forward_udf(&q, pyr, params).unwrap()
                },
                p[a],
                1e-4,
                1e-4,
            )?;
        }
        Some(g)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        let mut trial = 0;
        while checked < 60 {
            trial += 1;
            let params = ModelParams::<f64>::init(&c, trial).unwrap();
            let pyr = random_pyramid(&c, &mut rng);
            let p = random_point(&mut rng, 0.5);
            let Some(fd) = fd_grad(&pyr, &params, p) else { continue };
            let an = grad_udf(&p, &pyr, &params).unwrap();
            let err = relative_error_vec(&fd, an.as_slice(), 1e-6);
            assert!(err < 1e-4, "trial {trial}: {fd:?} vs {an:?}");
            checked += 1;
        }
    }

    #[test]
    fn composition_and_zero_model() {
        let c = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = ModelParams::<f64>::init(&c, 1).unwrap();
        let pyr = random_pyramid(&c, &mut rng);
        let p = Vec3::new(0.1, -0.2, 0.3);
        let manual = decode(&interpolate(&pyr, &p).unwrap(), &params).unwrap();
        assert_eq!(forward_udf(&p, &pyr, &params).unwrap(), manual);

        let zero = ModelParams::<f64>::zeros(&c).unwrap();
        for _ in 0..20 {
            let q = random_point(&mut rng, 0.6);
            assert_eq!(forward_udf(&q, &pyr, &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_grids_have_zero_gradient() {
        let c = micro_config();
        let grids = c
            .feature_resolutions()
            .into_iter()
            .zip(c.feature_channels())
            .map(|(r, ch)| FeatureGrid::from_fn(r, ch, |_, _, _, k| 0.3 * k as f64 - 0.2))
            .collect();
        let pyr = FeaturePyramid::new(grids, c.stencil_displacement).unwrap();
        let params = ModelParams::<f64>::init(&c, 2).unwrap();
        let g = grad_udf(&Vec3::new(0.12, 0.05, -0.31), &pyr, &params).unwrap();
        assert!(g.norm() < 1e-12, "{g:?}");
    }

    #[test]
    fn mirrored_grids_give_mirrored_gradients() {
        let c = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // symmetrize every grid under x -> -x, which maps node i to K-1-i
        let grids = random_pyramid(&c, &mut rng)
            .grids()
            .iter()
            .map(|g| {
                let k = g.resolution();
                FeatureGrid::from_fn(k, g.channels(), |ix, iy, iz, ch| {
                    0.5 * (g.node(ix, iy, iz)[ch] + g.node(k - 1 - ix, iy, iz)[ch])
                })
            })
            .collect();
        let pyr = FeaturePyramid::new(grids, c.stencil_displacement).unwrap();
        let params = ModelParams::<f64>::init(&c, 3).unwrap();
        // the stencil is symmetric as a set but ordered, so swap the ±x slots
        // by using a decoder whose first layer treats them symmetrically
        let mut params = params;
        let total: usize = c.feature_channels().iter().sum();
        let first = &mut params.decoder[0].weight;
        let n_in = first.shape()[1];
        for row in first.data_mut().chunks_mut(n_in) {
            for ch in 0..total {
                let avg = 0.5 * (row[total + ch] + row[2 * total + ch]);
                row[total + ch] = avg;
                row[2 * total + ch] = avg;
            }
        }
        for _ in 0..20 {
            let p = random_point(&mut rng, 0.4);
            let m = Vec3::new(-p.x, p.y, p.z);
            let fp = forward_udf(&p, &pyr, &params).unwrap();
            let fm = forward_udf(&m, &pyr, &params).unwrap();
            assert!((fp - fm).abs() < 1e-12);
            let gp = grad_udf(&p, &pyr, &params).unwrap();
            let gm = grad_udf(&m, &pyr, &params).unwrap();
            assert!((gp.x + gm.x).abs() < 1e-10 && (gp.y - gm.y).abs() < 1e-10 && (gp.z - gm.z).abs() < 1e-10);
        }
    }

    #[test]
    fn batch_evaluation_is_independent_of_composition() {
        let c = ArchConfig::lightndf(16);
        let params = ModelParams::<f32>::init(&c, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let grids = c
            .feature_resolutions()
            .into_iter()
            .zip(c.feature_channels())
            .map(|(r, ch)| FeatureGrid::from_fn(r, ch, |_, _, _, _| rng.random_range(0.0f32..1.0)))
            .collect();
        let field = NetworkField::new(FeaturePyramid::new(grids, c.stencil_displacement).unwrap(), &params);
        let pts: Vec<Vec3> = (0..700).map(|_| random_point(&mut rng, 0.5)).collect();
        let all = field.value_and_grad_batch(&pts).unwrap();
        let values = field.value_batch(&pts).unwrap();
        for (i, p) in pts.iter().enumerate().step_by(37) {
            let (v, g) = field.value_and_grad(p).unwrap();
            assert_eq!(v, all[i].0);
            assert_eq!(values[i], v);
            assert_eq!(g, all[i].1);
        }
        let reversed: Vec<Vec3> = pts.iter().rev().cloned().collect();
        let rev = field.value_batch(&reversed).unwrap();
        for (a, b) in values.iter().zip(rev.iter().rev()) {
            assert_eq!(a, b);
        }
    }
}
