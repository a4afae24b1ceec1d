use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::config::ArchConfig;

/// Weight and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub encoder: Vec<LayerParams<T>>,
    pub decoder: Vec<LayerParams<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Uniform initialization in `±sqrt(1/fan_in)` for weights and biases.
    pub fn init(config: &ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |shape: Vec<usize>, fan_in: usize| {
            let bound = (1.0 / fan_in as f64).sqrt();
            let weight = Tensor::from_fn(&shape, |_| T::from_f64_lossy(rng.random_range(-bound..bound)));
            let bias = Tensor::from_fn(&[shape[0]], |_| T::from_f64_lossy(rng.random_range(-bound..bound)));
            LayerParams { weight, bias }
        };
        let encoder = config
            .encoder
            .iter()
            .map(|l| {
                let k = l.kernel;
                layer(vec![l.out_channels, l.in_channels, k, k, k], l.in_channels * k * k * k)
            })
            .collect();
        let mut n_in = config.feature_len();
        let mut decoder = Vec::new();
        for &w in &config.decoder_widths {
            decoder.push(layer(vec![w, n_in], n_in));
            n_in = w;
        }
        Ok(Self { encoder, decoder })
    }

    /// Parameters shaped for `config` with every value zero.
    pub fn zeros(config: &ArchConfig) -> Result<Self> {
        Ok(Self::init(config, 0)?.zeros_like())
    }

    pub fn zeros_like(&self) -> Self {
        let z = |l: &LayerParams<T>| LayerParams {
            weight: l.weight.zeros_like(),
            bias: l.bias.zeros_like(),
        };
        Self {
            encoder: self.encoder.iter().map(z).collect(),
            decoder: self.decoder.iter().map(z).collect(),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.encoder.iter().chain(&self.decoder)
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Stable tensor names in [`Self::tensors`] order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (prefix, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for i in 0..layers.len() {
                out.push(format!("{prefix}.{i}.weight"));
                out.push(format!("{prefix}.{i}.bias"));
            }
        }
        out
    }

    pub fn count(&self) -> u64 {
        self.tensors().iter().map(|t| t.len() as u64).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let c = |l: &LayerParams<T>| LayerParams {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        ModelParams {
            encoder: self.encoder.iter().map(c).collect(),
            decoder: self.decoder.iter().map(c).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams<T>) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Rebuilds parameters from tensors in [`Self::names`] order.
    pub fn from_tensors(config: &ArchConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut shaped = Self::zeros(config)?;
        let expected = shaped.tensors().len();
        if tensors.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} parameter tensors, got {}",
                tensors.len()
            )));
        }
        let names = shaped.names();
        for ((slot, t), name) in shaped.tensors_mut().into_iter().zip(tensors).zip(names) {
            if slot.shape() != t.shape() {
                return Err(Error::shape(format!(
                    "{name}: expected shape {:?}, got {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t;
        }
        Ok(shaped)
    }

    /// Checks tensor shapes against `config`.
    pub fn check(&self, config: &ArchConfig) -> Result<()> {
        let expect = Self::zeros(config)?;
        if self.encoder.len() != expect.encoder.len() || self.decoder.len() != expect.decoder.len() {
            return Err(Error::shape("parameter layer count does not match architecture"));
        }
        for ((a, b), name) in self.tensors().iter().zip(expect.tensors()).zip(expect.names()) {
            if a.shape() != b.shape() {
                return Err(Error::shape(format!(
                    "{name}: shape {:?} does not match architecture {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}
