use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::interp::STENCIL_POINTS;

/// One encoder stage: conv → ReLU → (emit feature grid) → (2×2×2 max pool).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub pool_after: bool,
    pub emit: bool,
}

impl ConvLayerSpec {
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            padding: kernel / 2,
            pool_after: false,
            emit: false,
        }
    }

    pub fn emit(mut self) -> Self {
        self.emit = true;
        self
    }

    pub fn pool(mut self) -> Self {
        self.pool_after = true;
        self
    }

    pub fn params(&self) -> u64 {
        (self.out_channels * self.in_channels * self.kernel.pow(3) + self.out_channels) as u64
    }
}

/// Number of feature scales the decoder consumes.
pub const FEATURE_SCALES: usize = 4;

/// Full architecture description; determines every parameter shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub name: String,
    pub resolution: usize,
    pub encoder: Vec<ConvLayerSpec>,
    pub decoder_widths: Vec<usize>,
    pub stencil_displacement: f64,
}

pub const DEFAULT_STENCIL_DISPLACEMENT: f64 = 0.0722;

impl ArchConfig {
    /// Five 3×3×3 convolutions emitting four scales, decoder 128 → 256 → 1.
    pub fn lightndf(resolution: usize) -> Self {
        Self {
            name: "lightndf".into(),
            resolution,
            encoder: vec![
                ConvLayerSpec::same(1, 16, 3).emit().pool(),
                ConvLayerSpec::same(16, 32, 3).emit().pool(),
                ConvLayerSpec::same(32, 64, 3).emit().pool(),
                ConvLayerSpec::same(64, 64, 3),
                ConvLayerSpec::same(64, 96, 3).emit(),
            ],
            decoder_widths: vec![128, 256, 1],
            stencil_displacement: DEFAULT_STENCIL_DISPLACEMENT,
        }
    }

    /// Heavier comparison configuration: eight convolutions in pairs per
    /// scale, decoder 512 → 256 → 256 → 1.
    pub fn ndf_like(resolution: usize) -> Self {
        Self {
            name: "ndf-like".into(),
            resolution,
            encoder: vec![
                ConvLayerSpec::same(1, 16, 3),
                ConvLayerSpec::same(16, 32, 3).emit().pool(),
                ConvLayerSpec::same(32, 32, 3),
                ConvLayerSpec::same(32, 64, 3).emit().pool(),
                ConvLayerSpec::same(64, 64, 3),
                ConvLayerSpec::same(64, 128, 3).emit().pool(),
                ConvLayerSpec::same(128, 128, 5),
                ConvLayerSpec::same(128, 128, 3).emit(),
            ],
            decoder_widths: vec![512, 256, 256, 1],
            stencil_displacement: DEFAULT_STENCIL_DISPLACEMENT,
        }
    }

    pub fn preset(name: &str, resolution: usize) -> Result<Self> {
        match name {
            "lightndf" => Ok(Self::lightndf(resolution)),
            "ndf-like" | "ndf_like" => Ok(Self::ndf_like(resolution)),
            other => Err(Error::config(format!(
                "unknown architecture preset {other:?} (expected lightndf or ndf-like)"
            ))),
        }
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    /// Channel count of each emitted feature grid, finest first.
    pub fn feature_channels(&self) -> Vec<usize> {
        self.encoder.iter().filter(|l| l.emit).map(|l| l.out_channels).collect()
    }

    /// Spatial resolution of each emitted feature grid.
    pub fn feature_resolutions(&self) -> Vec<usize> {
        let mut res = self.resolution;
        let mut out = Vec::new();
        for l in &self.encoder {
            if l.emit {
                out.push(res);
            }
            if l.pool_after {
                res /= 2;
            }
        }
        out
    }

    /// Length of the decoder input vector.
    pub fn feature_len(&self) -> usize {
        STENCIL_POINTS * self.feature_channels().iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::config(format!("architecture {:?}: {m}", self.name)));
        let n = self.resolution;
        if n < 8 || !n.is_power_of_two() {
            return err(format!("resolution must be a power of two >= 8, got {n}"));
        }
        if self.encoder.is_empty() {
            return err("encoder has no layers".into());
        }
        if self.encoder[0].in_channels != 1 {
            return err("first encoder layer must take 1 input channel".into());
        }
        let mut res = n;
        for (i, l) in self.encoder.iter().enumerate() {
            if i > 0 && l.in_channels != self.encoder[i - 1].out_channels {
                return err(format!(
                    "layer {i} takes {} channels but layer {} emits {}",
                    l.in_channels,
                    i - 1,
                    self.encoder[i - 1].out_channels
                ));
            }
            if l.out_channels == 0 || l.in_channels == 0 {
                return err(format!("layer {i} has zero channels"));
            }
            if l.kernel % 2 == 0 || l.padding != l.kernel / 2 {
                return err(format!(
                    "layer {i}: kernel must be odd with padding (k-1)/2, got k={} pad={}",
                    l.kernel, l.padding
                ));
            }
            if l.pool_after {
                if res < 2 {
                    return err(format!("layer {i} pools a 1³ grid"));
                }
                res /= 2;
            }
        }
        let emitted = self.feature_resolutions();
        let expect: Vec<usize> = (0..FEATURE_SCALES).map(|k| n >> k).collect();
        if emitted != expect {
            return err(format!("emitted feature resolutions {emitted:?}, expected {expect:?}"));
        }
        if self.decoder_widths.is_empty() || self.decoder_widths.contains(&0) {
            return err("decoder widths must be non-empty and positive".into());
        }
        if self.decoder_widths.last() != Some(&1) {
            return err("decoder must end with width 1".into());
        }
        if !(self.stencil_displacement.is_finite() && self.stencil_displacement >= 0.0) {
            return err("stencil displacement must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Field-by-field differences, for diagnosing checkpoint mismatches.
    pub fn diff(&self, other: &ArchConfig) -> Vec<String> {
        let mut out = Vec::new();
        if self.name != other.name {
            out.push(format!("name: {:?} vs {:?}", self.name, other.name));
        }
        if self.resolution != other.resolution {
            out.push(format!("resolution: {} vs {}", self.resolution, other.resolution));
        }
        if self.encoder.len() != other.encoder.len() {
            out.push(format!(
                "encoder layers: {} vs {}",
                self.encoder.len(),
                other.encoder.len()
            ));
        }
        for (i, (a, b)) in self.encoder.iter().zip(&other.encoder).enumerate() {
            if a != b {
                out.push(format!("encoder[{i}]: {a:?} vs {b:?}"));
            }
        }
        if self.decoder_widths != other.decoder_widths {
            out.push(format!(
                "decoder_widths: {:?} vs {:?}",
                self.decoder_widths, other.decoder_widths
            ));
        }
        if self.stencil_displacement != other.stencil_displacement {
            out.push(format!(
                "stencil_displacement: {} vs {}",
                self.stencil_displacement, other.stencil_displacement
            ));
        }
        out
    }
}

/// Trainable parameter count: conv `C_out·C_in·k³ + C_out`, linear `n_out·n_in + n_out`.
pub fn param_count(config: &ArchConfig) -> u64 {
    encoder_param_count(config) + decoder_param_count(config)
}

pub fn encoder_param_count(config: &ArchConfig) -> u64 {
    config.encoder.iter().map(ConvLayerSpec::params).sum()
}

pub fn decoder_param_count(config: &ArchConfig) -> u64 {
    let mut n_in = config.feature_len() as u64;
    let mut total = 0;
    for &w in &config.decoder_widths {
        total += w as u64 * n_in + w as u64;
        n_in = w as u64;
    }
    total
}

/// Encoder FLOPs (2 per multiply-accumulate) for one `resolution³` grid.
pub fn flop_count(config: &ArchConfig, resolution: usize) -> u64 {
    let mut res = resolution as u64;
    let mut total = 0;
    for l in &config.encoder {
        let macs = (l.out_channels * l.in_channels * l.kernel.pow(3)) as u64 * res.pow(3);
        total += 2 * macs;
        if l.pool_after {
            res /= 2;
        }
    }
    total
}

/// Decoder FLOPs for one query point.
pub fn decoder_flops_per_query(config: &ArchConfig) -> u64 {
    let mut n_in = config.feature_len() as u64;
    let mut total = 0;
    for &w in &config.decoder_widths {
        total += 2 * w as u64 * n_in;
        n_in = w as u64;
    }
    total
}
