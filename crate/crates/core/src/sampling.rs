//! Training data: near-surface queries with clamped distance labels, the
//! per-shape binary archive, and seeded dataset splits.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::sample::sample_surface_with;
use crate::geometry::{voxelize, SpatialIndex, TriangleMesh, Vec3, VoxelGrid};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"LNDF";
pub const ARCHIVE_VERSION: u32 = 1;

/// A query point and its label `min(UDF, δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub query: [f32; 3],
    pub udf: f32,
}

impl TrainingSample {
    pub fn point(&self) -> Vec3 {
        Vec3::new(self.query[0] as f64, self.query[1] as f64, self.query[2] as f64)
    }
}

/// One shape's encoder input and supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub id: String,
    pub grid: VoxelGrid,
    pub samples: Vec<TrainingSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Queries per shape, spread evenly over `sigmas`.
    pub samples_per_shape: usize,
    pub sigmas: Vec<f64>,
    pub delta: f64,
    pub resolution: usize,
    /// Surface points in the sparse cloud that gets voxelized.
    pub input_points: usize,
    /// Rescale loaded meshes into the unit cube.
    pub normalize: bool,
    /// Train/test/validation fractions.
    pub ratios: [f64; 3],
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            samples_per_shape: 50_000,
            sigmas: vec![0.005, 0.01, 0.03],
            delta: 0.1,
            resolution: 32,
            input_points: 10_000,
            normalize: true,
            ratios: [0.7, 0.2, 0.1],
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_shape == 0 || self.input_points == 0 {
            return Err(Error::config("sample and input point counts must be ≥ 1"));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::config("sigmas must be a non-empty list of positive values"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        crate::geometry::voxel::check_resolution(self.resolution)?;
        check_ratios(&self.ratios)
    }

    /// Per-sigma counts: equal shares, the remainder going to the first sigmas.
    pub fn counts_per_sigma(&self) -> Vec<usize> {
        let k = self.sigmas.len();
        let (q, r) = (self.samples_per_shape / k, self.samples_per_shape % k);
        (0..k).map(|i| q + usize::from(i < r)).collect()
    }
}

fn check_ratios(r: &[f64; 3]) -> Result<()> {
    if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios {r:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

/// Stable per-shape seed: FNV-1a over the id, mixed with the global seed.
pub fn shape_seed(global_seed: u64, shape_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in shape_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ global_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// For each sigma, draws area-weighted surface points, perturbs them with
/// isotropic Gaussian noise, and labels them with the clamped exact distance.
/// Queries are rounded to `f32` before labeling so stored labels match them.
pub fn generate_samples(
    mesh: &TriangleMesh,
    n_per_sigma: &[usize],
    sigmas: &[f64],
    delta: f64,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = SpatialIndex::build(mesh);
    generate_samples_with(&index, n_per_sigma, sigmas, delta, &mut rng)
}

fn generate_samples_with(
    index: &SpatialIndex,
    n_per_sigma: &[usize],
    sigmas: &[f64],
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainingSample>> {
    if sigmas.is_empty() || sigmas.len() != n_per_sigma.len() {
        return Err(Error::InvalidInput("one sample count per sigma is required".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let mut out = Vec::with_capacity(n_per_sigma.iter().sum());
    for (&n, &sigma) in n_per_sigma.iter().zip(sigmas) {
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(format!("sigma {sigma}: {e}")))?;
        let base = sample_surface_with(index.mesh(), n, rng);
        for p in &base.points {
            let q = p + Vec3::from_fn(|_, _| noise.sample(rng));
            let query = [q.x as f32, q.y as f32, q.z as f32];
            let rounded = Vec3::new(query[0] as f64, query[1] as f64, query[2] as f64);
            let udf = index.udf(&rounded).min(delta) as f32;
            out.push(TrainingSample { query, udf });
        }
    }
    Ok(out)
}

/// Builds the full record for one (already normalized) mesh.
pub fn build_record(id: &str, mesh: &TriangleMesh, config: &SamplingConfig, global_seed: u64) -> Result<ShapeRecord> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(shape_seed(global_seed, id));
    let index = SpatialIndex::build(mesh);
    let cloud = sample_surface_with(mesh, config.input_points, &mut rng);
    let (grid, clamped) = voxelize(&cloud, config.resolution)?;
    if clamped > 0 {
        log::warn!("{id}: {clamped} input points clamped into the unit cube");
    }
    let samples = generate_samples_with(
        &index,
        &config.counts_per_sigma(),
        &config.sigmas,
        config.delta,
        &mut rng,
    )?;
    Ok(ShapeRecord {
        id: id.to_string(),
        grid,
        samples,
    })
}

/// Train/test/validation id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.test.len(), self.validation.len())
    }
}

/// Seeded shuffle, then floor-allocated test and validation shares; every
/// leftover id goes to train.
pub fn split_dataset(shape_ids: &[String], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if shape_ids.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty id list".into()));
    }
    check_ratios(&ratios)?;
    let n = shape_ids.len();
    // the small epsilon keeps exact products such as 3514 · 0.2 from flooring down
    let share = |r: f64| ((n as f64 * r) + 1e-9).floor() as usize;
    let (n_test, n_val) = (share(ratios[1]), share(ratios[2]));
    let mut ids = shape_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let validation = ids.split_off(n - n_val);
    let test = ids.split_off(n - n_val - n_test);
    Ok(Split {
        train: ids,
        test,
        validation,
    })
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Writes a record in the little-endian archive format.
pub fn write_archive(path: &Path, record: &ShapeRecord) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(ARCHIVE_MAGIC)?;
        put_u32(&mut w, ARCHIVE_VERSION)?;
        put_u32(&mut w, record.id.len() as u32)?;
        w.write_all(record.id.as_bytes())?;
        put_u32(&mut w, record.grid.resolution() as u32)?;
        w.write_all(record.grid.occupancy())?;
        w.write_all(&(record.samples.len() as u64).to_le_bytes())?;
        for s in &record.samples {
            for v in s.query.iter().chain(std::iter::once(&s.udf)) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    })()
    .map_err(|e| Error::io(ctx(), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format {
                path: self.path.to_path_buf(),
                msg: format!("truncated at byte {}", self.pos),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

pub fn read_archive(path: &Path) -> Result<ShapeRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_archive(&bytes, path)
}

pub fn parse_archive(bytes: &[u8], path: &Path) -> Result<ShapeRecord> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != ARCHIVE_MAGIC {
        return Err(r.fail("bad magic, not a sample archive"));
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(r.fail(format!(
            "archive version {version} is not supported (expected {ARCHIVE_VERSION}); regenerate it with the sample command"
        )));
    }
    let id_len = r.u32()? as usize;
    let id = String::from_utf8(r.take(id_len)?.to_vec()).map_err(|_| r.fail("shape id is not UTF-8"))?;
    let n = r.u32()? as usize;
    let cells = n.checked_pow(3).ok_or_else(|| r.fail("grid resolution overflows"))?;
    let grid = VoxelGrid::from_occupancy(n, r.take(cells)?.to_vec())?;
    let count = r.u64()? as usize;
    if count.checked_mul(16).is_none_or(|b| b > bytes.len()) {
        return Err(r.fail(format!("sample count {count} exceeds file size")));
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let query = [r.f32()?, r.f32()?, r.f32()?];
        let udf = r.f32()?;
        samples.push(TrainingSample { query, udf });
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after samples"));
    }
    Ok(ShapeRecord { id, grid, samples })
}
