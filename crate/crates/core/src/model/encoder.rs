use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::ops::{self, PoolRecord};
use crate::tensor::{Real, Tensor};

use super::config::ArchConfig;
use super::params::ModelParams;

/// One feature scale, stored channel-last (`[z][y][x][c]`) so that a grid
/// node's channels are contiguous for interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid<T> {
    resolution: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureGrid<T> {
    pub fn new(resolution: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != resolution.pow(3) * channels || channels == 0 || resolution == 0 {
            return Err(Error::shape(format!(
                "feature grid {resolution}³×{channels} needs {} values, got {}",
                resolution.pow(3) * channels,
                data.len()
            )));
        }
        Ok(Self {
            resolution,
            channels,
            data,
        })
    }

    pub fn zeros(resolution: usize, channels: usize) -> Self {
        Self {
            resolution,
            channels,
            data: vec![T::zero(); resolution.pow(3) * channels],
        }
    }

    /// Builds a grid from a value function of (ix, iy, iz, channel).
    pub fn from_fn(resolution: usize, channels: usize, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut g = Self::zeros(resolution, channels);
        let n = resolution;
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    for c in 0..channels {
                        g.data[((iz * n + iy) * n + ix) * channels + c] = f(ix, iy, iz, c);
                    }
                }
            }
        }
        g
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn node(&self, ix: usize, iy: usize, iz: usize) -> &[T] {
        let n = self.resolution;
        let base = ((iz * n + iy) * n + ix) * self.channels;
        &self.data[base..base + self.channels]
    }

    /// From a C×K×K×K activation tensor.
    pub fn from_channel_first(t: &Tensor<T>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[1] != s[2] || s[2] != s[3] {
            return Err(Error::shape(format!("feature tensor must be C×K×K×K, got {s:?}")));
        }
        let (c, k) = (s[0], s[1]);
        let vol = k * k * k;
        let mut data = vec![T::zero(); vol * c];
        for ch in 0..c {
            let src = &t.data()[ch * vol..(ch + 1) * vol];
            for (i, &v) in src.iter().enumerate() {
                data[i * c + ch] = v;
            }
        }
        Self::new(k, c, data)
    }

    pub fn to_channel_first(&self) -> Tensor<T> {
        let (c, k) = (self.channels, self.resolution);
        let vol = k * k * k;
        let mut data = vec![T::zero(); vol * c];
        for i in 0..vol {
            for ch in 0..c {
                data[ch * vol + i] = self.data[i * c + ch];
            }
        }
        Tensor::new(vec![c, k, k, k], data).expect("consistent shape")
    }
}

/// Multi-scale features of one shape, finest first, covering `[-0.5, 0.5]³`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    pub(crate) grids: Vec<FeatureGrid<T>>,
    pub(crate) stencil_displacement: f64,
}

impl<T: Real> FeaturePyramid<T> {
    pub fn new(grids: Vec<FeatureGrid<T>>, stencil_displacement: f64) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::shape("feature pyramid needs at least one grid"));
        }
        Ok(Self {
            grids,
            stencil_displacement,
        })
    }

    pub fn grids(&self) -> &[FeatureGrid<T>] {
        &self.grids
    }

    pub fn stencil_displacement(&self) -> f64 {
        self.stencil_displacement
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.grids.iter().map(FeatureGrid::resolution).collect()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.grids.iter().map(FeatureGrid::channels).collect()
    }

    pub fn total_channels(&self) -> usize {
        self.grids.iter().map(FeatureGrid::channels).sum()
    }

    pub(crate) fn zeros_like(&self) -> Vec<FeatureGrid<T>> {
        self.grids
            .iter()
            .map(|g| FeatureGrid::zeros(g.resolution, g.channels))
            .collect()
    }
}

struct LayerTrace<T> {
    input: Tensor<T>,
    activation: Tensor<T>,
    pool: Option<PoolRecord>,
}

/// Saved activations for the encoder backward pass.
pub(crate) struct EncoderTrace<T> {
    layers: Vec<LayerTrace<T>>,
}

pub(crate) fn voxel_tensor<T: Real>(grid: &VoxelGrid) -> Tensor<T> {
    let n = grid.resolution();
    let data = grid
        .occupancy()
        .iter()
        .map(|&v| if v == 1 { T::one() } else { T::zero() })
        .collect();
    Tensor::new(vec![1, n, n, n], data).expect("voxel grid is cubic")
}

/// Runs the convolutional encoder on an occupancy grid.
pub fn encode<T: Real>(grid: &VoxelGrid, params: &ModelParams<T>, config: &ArchConfig) -> Result<FeaturePyramid<T>> {
    if grid.resolution() != config.resolution {
        return Err(Error::shape(format!(
            "grid resolution {} does not match architecture resolution {}",
            grid.resolution(),
            config.resolution
        )));
    }
    encode_tensor(voxel_tensor(grid), params, config)
}

/// Runs the encoder on an arbitrary 1×N×N×N input.
pub fn encode_tensor<T: Real>(
    input: Tensor<T>,
    params: &ModelParams<T>,
    config: &ArchConfig,
) -> Result<FeaturePyramid<T>> {
    Ok(run(input, params, config, false)?.0)
}

pub(crate) fn encode_traced<T: Real>(
    input: Tensor<T>,
    params: &ModelParams<T>,
    config: &ArchConfig,
) -> Result<(FeaturePyramid<T>, EncoderTrace<T>)> {
    let (p, t) = run(input, params, config, true)?;
    Ok((p, t.expect("trace requested")))
}

fn run<T: Real>(
    input: Tensor<T>,
    params: &ModelParams<T>,
    config: &ArchConfig,
    keep: bool,
) -> Result<(FeaturePyramid<T>, Option<EncoderTrace<T>>)> {
    let n = config.resolution;
    if input.shape() != [1, n, n, n] {
        return Err(Error::shape(format!(
            "encoder input must be 1×{n}×{n}×{n}, got {:?}",
            input.shape()
        )));
    }
    if params.encoder.len() != config.encoder.len() {
        return Err(Error::shape("parameter/architecture encoder layer count mismatch"));
    }
    let mut grids = Vec::new();
    let mut trace = Vec::new();
    let mut x = input;
    for (spec, lp) in config.encoder.iter().zip(&params.encoder) {
        let mut act = ops::conv3d_forward(&x, &lp.weight, &lp.bias, 1, spec.padding)?;
        ops::relu_in_place(act.data_mut());
        if spec.emit {
            grids.push(FeatureGrid::from_channel_first(&act)?);
        }
        let (next, pool) = if spec.pool_after {
            let (p, rec) = ops::maxpool3d_forward(&act)?;
            (p, Some(rec))
        } else {
            (act.clone(), None)
        };
        if keep {
            trace.push(LayerTrace {
                input: x,
                activation: act,
                pool,
            });
        }
        x = next;
    }
    let pyramid = FeaturePyramid::new(grids, config.stencil_displacement)?;
    Ok((pyramid, keep.then_some(EncoderTrace { layers: trace })))
}

/// Accumulates encoder parameter gradients given gradients with respect to
/// each emitted feature grid.
pub(crate) fn encode_backward<T: Real>(
    trace: &EncoderTrace<T>,
    grid_grads: &[FeatureGrid<T>],
    params: &ModelParams<T>,
    config: &ArchConfig,
    grads: &mut ModelParams<T>,
) -> Result<()> {
    let mut emit_idx = config.encoder.iter().filter(|l| l.emit).count();
    if grid_grads.len() != emit_idx {
        return Err(Error::shape("one gradient grid per emitted scale is required"));
    }
    let mut upstream: Option<Tensor<T>> = None;
    for (i, (spec, lt)) in config.encoder.iter().zip(&trace.layers).enumerate().rev() {
        let mut g = match (upstream.take(), &lt.pool) {
            (Some(u), Some(rec)) => ops::maxpool3d_backward(&u, rec, lt.activation.shape())?,
            (Some(u), None) => u,
            (None, _) => lt.activation.zeros_like(),
        };
        if spec.emit {
            emit_idx -= 1;
            g.add_assign(&grid_grads[emit_idx].to_channel_first())?;
        }
        ops::relu_backward_in_place(g.data_mut(), lt.activation.data());
        let cg = ops::conv3d_backward(&g, &lt.input, &params.encoder[i].weight, 1, spec.padding)?;
        grads.encoder[i].weight.add_assign(&cg.weight)?;
        grads.encoder[i].bias.add_assign(&cg.bias)?;
        if i > 0 {
            upstream = Some(cg.input);
        }
    }
    Ok(())
}
