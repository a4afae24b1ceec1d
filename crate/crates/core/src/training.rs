//! Joint encoder/decoder training with Adam, validation, and checkpoints.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::model::{decoder, encoder, interp, ArchConfig, ModelParams};
use crate::ops::clamped_l1_loss;
use crate::optim::{AdamConfig, AdamState};
use crate::sampling::ShapeRecord;
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// The learning rate stated for full-scale training.
pub const FIDELITY_LEARNING_RATE: f64 = 1e-6;
/// Default for small corpora, which do not converge at the fidelity rate
/// within practical step budgets.
pub const DESK_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Queries per step, shared evenly by the shapes in the step.
    pub batch_size: usize,
    pub shapes_per_step: usize,
    pub epochs: usize,
    pub delta: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Stops training after this many optimizer steps.
    pub max_steps: Option<u64>,
    /// Queries per validation shape (a fixed, evenly strided subset).
    pub validation_queries: usize,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DESK_LEARNING_RATE,
            batch_size: 2048,
            shapes_per_step: 4,
            epochs: 50,
            delta: 0.1,
            seed: 0,
            precision: Precision::Single,
            max_steps: None,
            validation_queries: 4096,
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.shapes_per_step == 0 || self.epochs == 0 || self.validation_queries == 0 {
            return Err(Error::config("training counts must be ≥ 1"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps must be ≥ 1 when set"));
        }
        Ok(())
    }

    fn queries_per_shape(&self) -> usize {
        self.batch_size.div_ceil(self.shapes_per_step)
    }
}

/// One shape's contribution to a step: the record and the chosen sample indices.
#[derive(Debug, Clone, Copy)]
pub struct ShapeBatch<'a> {
    pub record: &'a ShapeRecord,
    pub queries: &'a [usize],
}

fn shape_gradient<T: Real>(
    batch: &ShapeBatch<'_>,
    params: &ModelParams<T>,
    arch: &ArchConfig,
    delta: f64,
    total: usize,
) -> Result<(f64, ModelParams<T>)> {
    let rec = batch.record;
    let (pyr, etrace) = encoder::encode_traced(encoder::voxel_tensor(&rec.grid), params, arch)?;
    let mut points = Vec::with_capacity(batch.queries.len());
    let mut target = Vec::with_capacity(batch.queries.len());
    for &i in batch.queries {
        let s = rec
            .samples
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("{}: sample index {i} out of range", rec.id)))?;
        points.push(s.point());
        target.push(T::from_f64_lossy(s.udf as f64));
    }
    let b = points.len();
    let rows = interp::interpolate_rows(&pyr, &points)?;
    let (pred, dtrace) = decoder::decode_traced(rows, b, params)?;
    let (mean, grad) = clamped_l1_loss(
        &Tensor::new(vec![b], pred)?,
        &Tensor::new(vec![b], target)?,
        T::from_f64_lossy(delta),
    )?;
    // rescale from a per-shape mean to the mean over the whole step
    let scale = T::from_f64_lossy(b as f64 / total as f64);
    let grad_out: Vec<T> = grad.data().iter().map(|&g| g * scale).collect();
    let mut grads = params.zeros_like();
    let grad_rows = decoder::decode_backward(&dtrace, &grad_out, params, Some(&mut grads))?;
    let mut grid_grads = pyr.zeros_like();
    interp::backward_grids(&pyr, &points, &grad_rows, &mut grid_grads);
    encoder::encode_backward(&etrace, &grid_grads, params, arch, &mut grads)?;
    Ok((mean.to_f64_lossy() * b as f64, grads))
}

/// Mean clamped-L1 loss over every query in the batch and its parameter
/// gradient. Shapes are processed in parallel and reduced in batch order, so
/// the result does not depend on the worker count.
pub fn batch_gradient<T: Real>(
    batch: &[ShapeBatch<'_>],
    params: &ModelParams<T>,
    arch: &ArchConfig,
    delta: f64,
) -> Result<(f64, ModelParams<T>)> {
    let total: usize = batch.iter().map(|b| b.queries.len()).sum();
    if total == 0 {
        return Err(Error::InvalidInput("training batch has no queries".into()));
    }
    let parts: Vec<Result<(f64, ModelParams<T>)>> = batch
        .par_iter()
        .map(|b| shape_gradient(b, params, arch, delta, total))
        .collect();
    let mut loss = 0.0;
    let mut grads = params.zeros_like();
    for p in parts {
        let (l, g) = p?;
        loss += l;
        grads.add_assign(&g)?;
    }
    let loss = loss / total as f64;
    if !loss.is_finite() {
        let ids: Vec<&str> = batch.iter().map(|b| b.record.id.as_str()).collect();
        return Err(Error::NonFinite(format!("loss {loss} on shapes {ids:?}")));
    }
    Ok((loss, grads))
}

/// Forward, backward, and one Adam update. Returns the pre-update loss.
pub fn train_step<T: Real>(
    batch: &[ShapeBatch<'_>],
    params: &mut ModelParams<T>,
    state: &mut AdamState<T>,
    arch: &ArchConfig,
    delta: f64,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(batch, params, arch, delta)?;
    state.step(params.tensors_mut(), &grads.tensors())?;
    Ok(loss)
}

fn validation_indices(len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        (0..len).collect()
    } else {
        (0..n).map(|i| i * len / n).collect()
    }
}

/// Mean clamped-L1 loss over a fixed query subset of each record. Never
/// touches the parameters.
pub fn evaluate_loss<T: Real>(
    records: &[ShapeRecord],
    params: &ModelParams<T>,
    arch: &ArchConfig,
    delta: f64,
    queries_per_shape: usize,
) -> Result<f64> {
    let parts: Vec<Result<(f64, usize)>> = records
        .par_iter()
        .map(|rec| {
            let pyr = encoder::encode(&rec.grid, params, arch)?;
            let idx = validation_indices(rec.samples.len(), queries_per_shape);
            let points: Vec<Vec3> = idx.iter().map(|&i| rec.samples[i].point()).collect();
            if points.is_empty() {
                return Ok((0.0, 0));
            }
            let rows = interp::interpolate_rows(&pyr, &points)?;
            let pred = decoder::decode_batch(&rows, points.len(), params)?;
            let sum = pred
                .iter()
                .zip(&idx)
                .map(|(p, &i)| (p.to_f64_lossy().min(delta) - (rec.samples[i].udf as f64).min(delta)).abs())
                .sum::<f64>();
            Ok((sum, points.len()))
        })
        .collect();
    let (mut sum, mut n) = (0.0, 0);
    for p in parts {
        let (s, c) = p?;
        sum += s;
        n += c;
    }
    if n == 0 {
        return Err(Error::InvalidInput("no validation queries".into()));
    }
    Ok(sum / n as f64)
}

/// Persisted training state. Tensors are stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
    pub epoch: u64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    arch: ArchConfig,
    epoch: u64,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    adam: AdamConfig,
}

impl Checkpoint {
    /// Fresh parameters and optimizer state for `arch`.
    pub fn initial(arch: &ArchConfig, adam: AdamConfig, init_seed: u64) -> Result<Self> {
        let params = ModelParams::init(arch, init_seed)?;
        let adam = AdamState::new(adam, params.tensors());
        Ok(Self {
            arch: arch.clone(),
            params,
            adam,
            epoch: 0,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
        })
    }

    /// Rejects a checkpoint built for a different architecture, listing the differences.
    pub fn check_arch(&self, expected: &ArchConfig) -> Result<()> {
        let diff = self.arch.diff(expected);
        if diff.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "checkpoint architecture differs from the requested one:\n  {}",
                diff.join("\n  ")
            )))
        }
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.val_loss.iter().copied().reduce(f64::min)
    }

    fn tensor_names(&self) -> Vec<String> {
        let names = self.params.names();
        let mut all = names.clone();
        all.extend(names.iter().map(|n| format!("adam.m.{n}")));
        all.extend(names.iter().map(|n| format!("adam.v.{n}")));
        all
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    let meta = serde_json::to_string(&CheckpointMeta {
        arch: c.arch.clone(),
        epoch: c.epoch,
        train_loss: c.train_loss.clone(),
        val_loss: c.val_loss.clone(),
        adam: c.adam.config,
    })?;
    let tensors: Vec<&Tensor<f32>> = c
        .params
        .tensors()
        .into_iter()
        .chain(c.adam.m.iter())
        .chain(c.adam.v.iter())
        .collect();
    let names = c.tensor_names();
    let ctx = || format!("writing {}", path.display());
    // write to a sibling file first so a crash never leaves a torn checkpoint
    let tmp = path.with_extension("tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (t, name) in tensors.iter().zip(&names) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &e in t.shape() {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&c.adam.step.to_le_bytes())?;
        w.flush()
    })()
    .map_err(|e| Error::io(ctx(), e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(ctx(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_checkpoint(&bytes, path)
}

/// Loads a checkpoint and verifies it was trained for `arch`.
pub fn load_checkpoint_for(path: &Path, arch: &ArchConfig) -> Result<Checkpoint> {
    let c = load_checkpoint(path)?;
    c.check_arch(arch)?;
    Ok(c)
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let fail = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fail(format!("truncated at byte {pos}")))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(fail("bad magic, not a checkpoint".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION}); retrain or convert it with a matching release"
        )));
    }
    let meta_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(meta_len)?)?;
    meta.arch.validate()?;
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut tensors = Vec::new();
    let mut names = Vec::new();
    for _ in 0..count {
        let n = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let name = String::from_utf8(take(n)?.to_vec()).map_err(|_| fail("tensor name is not UTF-8".into()))?;
        let rank = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .filter(|&l| l.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| fail(format!("{name}: implausible shape {shape:?}")))?;
        let data = take(len * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| fail(format!("{name}: {e}")))?);
        names.push(name);
    }
    let step = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    if pos != bytes.len() {
        return Err(fail("trailing bytes after step counter".into()));
    }
    let per = ModelParams::<f32>::zeros(&meta.arch)?.tensors().len();
    if count != 3 * per {
        return Err(fail(format!("expected {} tensors, found {count}", 3 * per)));
    }
    let v: Vec<Tensor<f32>> = tensors.split_off(2 * per);
    let m: Vec<Tensor<f32>> = tensors.split_off(per);
    let params = ModelParams::from_tensors(&meta.arch, tensors)?;
    let c = Checkpoint {
        arch: meta.arch,
        adam: AdamState {
            config: meta.adam,
            m,
            v,
            step,
        },
        params,
        epoch: meta.epoch,
        train_loss: meta.train_loss,
        val_loss: meta.val_loss,
    };
    if let Some((got, want)) = names.iter().zip(c.tensor_names()).find(|(a, b)| *a != b) {
        return Err(fail(format!("unexpected tensor {got:?}, expected {want:?}")));
    }
    for (a, b) in c
        .adam
        .m
        .iter()
        .chain(&c.adam.v)
        .zip(c.params.tensors().into_iter().cycle())
    {
        if a.shape() != b.shape() {
            return Err(fail("optimizer moment shapes do not match parameters".into()));
        }
    }
    Ok(c)
}

/// Training and validation records.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<ShapeRecord>,
    pub validation: Vec<ShapeRecord>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub latest: Checkpoint,
    pub best: Checkpoint,
    /// Loss of every optimizer step in order.
    pub step_losses: Vec<f64>,
}

/// File names used when `train` persists its progress.
pub const LATEST_CHECKPOINT: &str = "latest.lnck";
pub const BEST_CHECKPOINT: &str = "best.lnck";
pub const LOSS_LOG: &str = "loss_log.csv";

/// Runs epochs over a seeded shuffle of the training shapes. When `out_dir`
/// is given, the latest and best-validation checkpoints and a per-epoch loss
/// log are written after every epoch. `resume` continues epoch numbering,
/// parameters, and optimizer state from an earlier checkpoint.
pub fn train(
    dataset: &Dataset,
    arch: &ArchConfig,
    config: &TrainConfig,
    resume: Option<Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    arch.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for r in dataset.train.iter().chain(&dataset.validation) {
        if r.grid.resolution() != arch.resolution {
            return Err(Error::config(format!(
                "shape {} has grid resolution {}, architecture expects {}",
                r.id,
                r.grid.resolution(),
                arch.resolution
            )));
        }
        if r.samples.is_empty() {
            return Err(Error::InvalidInput(format!("shape {} has no samples", r.id)));
        }
    }
    let start = match resume {
        Some(c) => {
            c.check_arch(arch)?;
            c
        }
        None => Checkpoint::initial(
            arch,
            AdamConfig::with_learning_rate(config.learning_rate),
            config.init_seed,
        )?,
    };
    match config.precision {
        Precision::Single => run::<f32>(dataset, arch, config, start, out_dir),
        Precision::Double => run::<f64>(dataset, arch, config, start, out_dir),
    }
}

fn to_checkpoint<T: Real>(base: &Checkpoint, params: &ModelParams<T>, adam: &AdamState<T>) -> Checkpoint {
    Checkpoint {
        arch: base.arch.clone(),
        params: params.cast(),
        adam: AdamState {
            config: adam.config,
            m: adam.m.iter().map(Tensor::cast).collect(),
            v: adam.v.iter().map(Tensor::cast).collect(),
            step: adam.step,
        },
        epoch: base.epoch,
        train_loss: base.train_loss.clone(),
        val_loss: base.val_loss.clone(),
    }
}

fn run<T: Real>(
    dataset: &Dataset,
    arch: &ArchConfig,
    config: &TrainConfig,
    start: Checkpoint,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut params: ModelParams<T> = start.params.cast();
    let mut adam = AdamState {
        config: AdamConfig {
            learning_rate: config.learning_rate,
            ..start.adam.config
        },
        m: start.adam.m.iter().map(Tensor::cast).collect(),
        v: start.adam.v.iter().map(Tensor::cast).collect(),
        step: start.adam.step,
    };
    let mut meta = start;
    let mut best: Option<Checkpoint> = None;
    let mut step_losses = Vec::new();
    let per_shape = config.queries_per_shape();
    let first_epoch = meta.epoch;
    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            let path = dir.join(LOSS_LOG);
            let mut text = String::from("epoch,train_loss,val_loss\n");
            for (i, (t, v)) in meta.train_loss.iter().zip(&meta.val_loss).enumerate() {
                text.push_str(&format!("{},{t:e},{v:e}\n", i + 1));
            }
            Some((path, text))
        }
        None => None,
    };
    let mut steps_done = 0u64;
    'epochs: for epoch in first_epoch..first_epoch + config.epochs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_losses = Vec::new();
        let mut stop = false;
        for group in order.chunks(config.shapes_per_step) {
            let picks: Vec<Vec<usize>> = group
                .iter()
                .map(|&i| {
                    let n = dataset.train[i].samples.len();
                    let mut idx = index::sample(&mut rng, n, per_shape.min(n)).into_vec();
                    idx.sort_unstable();
                    idx
                })
                .collect();
            let batch: Vec<ShapeBatch> = group
                .iter()
                .zip(&picks)
                .map(|(&i, q)| ShapeBatch {
                    record: &dataset.train[i],
                    queries: q,
                })
                .collect();
            let loss = train_step(&batch, &mut params, &mut adam, arch, config.delta).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {}: {m}", epoch + 1)),
                other => other,
            })?;
            epoch_losses.push(loss);
            step_losses.push(loss);
            steps_done += 1;
            if config.max_steps.is_some_and(|m| steps_done >= m) {
                stop = true;
                break;
            }
        }
        let train_loss = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
        let val_loss = if dataset.validation.is_empty() {
            train_loss
        } else {
            evaluate_loss(
                &dataset.validation,
                &params,
                arch,
                config.delta,
                config.validation_queries,
            )?
        };
        meta.epoch = epoch + 1;
        meta.train_loss.push(train_loss);
        meta.val_loss.push(val_loss);
        log::info!(
            "epoch {} step {}: train {train_loss:.6} val {val_loss:.6}",
            meta.epoch,
            adam.step
        );
        let latest = to_checkpoint(&meta, &params, &adam);
        let improved = best
            .as_ref()
            .is_none_or(|b| val_loss < b.val_loss[b.val_loss.len() - 1]);
        if let Some(dir) = out_dir {
            save_checkpoint(&latest, &dir.join(LATEST_CHECKPOINT))?;
            if improved {
                save_checkpoint(&latest, &dir.join(BEST_CHECKPOINT))?;
            }
            if let Some((path, text)) = log.as_mut() {
                text.push_str(&format!("{},{train_loss:e},{val_loss:e}\n", meta.epoch));
                fs::write(&*path, text.as_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            }
        }
        if improved {
            best = Some(latest);
        }
        if stop {
            break 'epochs;
        }
    }
    let latest = to_checkpoint(&meta, &params, &adam);
    Ok(TrainOutcome {
        best: best.unwrap_or_else(|| latest.clone()),
        latest,
        step_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{shapes, VoxelGrid};
    use crate::gradcheck::{central_difference, relative_error};
    use crate::model::tests::micro_config;
    use crate::sampling::{build_record, SamplingConfig, TrainingSample};
    use rand::Rng;

    fn micro_record(rng: &mut impl Rng, queries: usize) -> ShapeRecord {
        let occ = (0..512).map(|_| u8::from(rng.random_bool(0.3))).collect();
        ShapeRecord {
            id: "micro".into(),
            grid: VoxelGrid::from_occupancy(8, occ).unwrap(),
            samples: (0..queries)
                .map(|_| TrainingSample {
                    query: [
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ],
                    udf: rng.random_range(0.0..0.1),
                })
                .collect(),
        }
    }

    fn param_slot(p: &mut ModelParams<f64>, t: usize, i: usize) -> &mut f64 {
        &mut p.tensors_mut().into_iter().nth(t).unwrap().data_mut()[i]
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let arch = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rec = micro_record(&mut rng, 2);
        let queries = [0usize, 1];
        let batch = [ShapeBatch {
            record: &rec,
            queries: &queries,
        }];
        // delta well above the predictions keeps the clamp inactive
        let delta = 10.0;
        let params = ModelParams::<f64>::init(&arch, 5).unwrap();
        let (_, grads) = batch_gradient(&batch, &params, &arch, delta).unwrap();
        let mut checked = 0;
        for t in 0..params.tensors().len() {
            let n = params.tensors()[t].len();
            for i in (0..n).step_by(n.div_ceil(6)) {
                let fd = central_difference(
                    |x| {
                        let mut p = params.clone();
                        *param_slot(&mut p, t, i) = x;
                        batch_gradient(&batch, &p, &arch, delta).unwrap().0
                    },
                    params.tensors()[t].data()[i],
                    1e-6,
                    1e-4,
                );
                let Some(fd) = fd else { continue };
                let an = grads.tensors()[t].data()[i];
                assert!(
                    relative_error(fd, an, 1e-6) < 1e-4,
                    "tensor {t} index {i}: {fd} vs {an}"
                );
                checked += 1;
            }
        }
        assert!(checked > 40);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let arch = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rec = micro_record(&mut rng, 64);
        let q: Vec<usize> = (0..64).collect();
        let batch = [ShapeBatch {
            record: &rec,
            queries: &q,
        }];
        let mut params = ModelParams::<f32>::init(&arch, 1).unwrap();
        let before = params.clone();
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.0), params.tensors());
        let loss = train_step(&batch, &mut params, &mut adam, &arch, 0.1).unwrap();
        assert!(loss > 0.0);
        assert_eq!(params, before);
    }

    #[test]
    fn repeated_steps_reduce_loss() {
        let arch = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rec = micro_record(&mut rng, 64);
        let q: Vec<usize> = (0..64).collect();
        let batch = [ShapeBatch {
            record: &rec,
            queries: &q,
        }];
        let mut params = ModelParams::<f32>::init(&arch, 2).unwrap();
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(1e-3), params.tensors());
        let first = train_step(&batch, &mut params, &mut adam, &arch, 0.1).unwrap();
        for _ in 0..199 {
            train_step(&batch, &mut params, &mut adam, &arch, 0.1).unwrap();
        }
        let last = batch_gradient(&batch, &params, &arch, 0.1).unwrap().0;
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn saturated_batch_has_zero_gradient_and_order_invariant_loss() {
        let arch = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut rec = micro_record(&mut rng, 32);
        let mut params = ModelParams::<f64>::init(&arch, 3).unwrap();
        // a large output bias pushes every prediction past the clamp
        let last = params.decoder.len() - 1;
        params.decoder[last].bias.data_mut()[0] = 50.0;
        for s in &mut rec.samples {
            s.udf = 0.2;
        }
        let q: Vec<usize> = (0..32).collect();
        let (loss, grads) = batch_gradient(
            &[ShapeBatch {
                record: &rec,
                queries: &q,
            }],
            &params,
            &arch,
            0.1,
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));

        let rec = micro_record(&mut rng, 32);
        let params = ModelParams::<f64>::init(&arch, 4).unwrap();
        let rev: Vec<usize> = q.iter().rev().copied().collect();
        let a = batch_gradient(
            &[ShapeBatch {
                record: &rec,
                queries: &q,
            }],
            &params,
            &arch,
            0.1,
        )
        .unwrap()
        .0;
        let b = batch_gradient(
            &[ShapeBatch {
                record: &rec,
                queries: &rev,
            }],
            &params,
            &arch,
            0.1,
        )
        .unwrap()
        .0;
        assert!((a - b).abs() < 1e-14);
    }

    fn tiny_dataset() -> Dataset {
        let cfg = SamplingConfig {
            samples_per_shape: 300,
            input_points: 500,
            resolution: 8,
            ..SamplingConfig::default()
        };
        let rec = |id: &str, m| build_record(id, &m, &cfg, 1).unwrap();
        Dataset {
            train: vec![
                rec("s", shapes::uv_sphere(0.3, 16, 8)),
                rec("t", shapes::torus(0.25, 0.1, 16, 8)),
            ],
            validation: vec![rec("v", shapes::uv_sphere(0.2, 16, 8))],
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            shapes_per_step: 1,
            epochs: 1,
            validation_queries: 50,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_epoch_run_and_determinism() {
        let data = tiny_dataset();
        let arch = micro_config();
        let a = train(&data, &arch, &tiny_config(), None, None).unwrap();
        assert_eq!(a.latest.epoch, 1);
        assert_eq!(a.latest.train_loss.len(), 1);
        assert_eq!(a.step_losses.len(), 2);
        let b = train(&data, &arch, &tiny_config(), None, None).unwrap();
        assert_eq!(a.latest, b.latest);
        assert_eq!(a.step_losses, b.step_losses);
    }

    #[test]
    fn resume_continues_epochs_and_persists() {
        let data = tiny_dataset();
        let arch = micro_config();
        let dir = tempfile::tempdir().unwrap();
        let first = train(&data, &arch, &tiny_config(), None, Some(dir.path())).unwrap();
        let loaded = load_checkpoint(&dir.path().join(LATEST_CHECKPOINT)).unwrap();
        assert_eq!(loaded, first.latest);
        let second = train(&data, &arch, &tiny_config(), Some(loaded), Some(dir.path())).unwrap();
        assert_eq!(second.latest.epoch, 2);
        assert_eq!(second.latest.train_loss[0], first.latest.train_loss[0]);
        let log = fs::read_to_string(dir.path().join(LOSS_LOG)).unwrap();
        assert_eq!(log.lines().count(), 3);
        assert!(dir.path().join(BEST_CHECKPOINT).exists());
    }

    #[test]
    fn checkpoint_round_trip_and_rejections() {
        let arch = micro_config();
        let mut c = Checkpoint::initial(&arch, AdamConfig::default(), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for t in c.adam.m.iter_mut().chain(c.adam.v.iter_mut()) {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random());
        }
        c.adam.step = 17;
        c.epoch = 3;
        c.train_loss = vec![0.1, 0.05, 1.0 / 3.0];
        c.val_loss = vec![0.2, 0.1, 0.09];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.lnck");
        save_checkpoint(&c, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.params.tensors().iter().zip(c.params.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let bytes = fs::read(&path).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(parse_checkpoint(&bad, &path).is_err());
        assert!(parse_checkpoint(&bytes[..bytes.len() - 1], &path).is_err());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(parse_checkpoint(&v, &path).unwrap_err().to_string().contains("version"));
        let other = ArchConfig::lightndf(8);
        let err = load_checkpoint_for(&path, &other).unwrap_err().to_string();
        assert!(err.contains("decoder_widths"), "{err}");
    }
}
