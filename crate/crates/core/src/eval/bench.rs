use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::densify::{project_points, uniform_cube};
use crate::error::{Error, Result};
use crate::geometry::shapes::AnalyticShape;
use crate::geometry::{sample_surface, voxelize};
use crate::model::{decoder_flops_per_query, encode, flop_count, param_count, ArchConfig, ModelParams, NetworkField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub resolution: usize,
    pub initial_counts: Vec<usize>,
    pub steps: usize,
    pub repeats: usize,
    /// Surface points voxelized as the encoder input.
    pub input_points: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            initial_counts: vec![5050, 20_100],
            steps: 5,
            repeats: 5,
            input_points: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config: String,
    pub seed: u64,
    pub resolution: usize,
    pub initial_count: usize,
    pub steps: usize,
    pub param_count: u64,
    pub encoder_flops: u64,
    pub decoder_flops_per_query: u64,
    pub encode_secs_median: f64,
    pub projection_secs_median: f64,
    /// Optional Chamfer-L2 mean and standard deviation over test shapes.
    pub chamfer_mean: Option<f64>,
    pub chamfer_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub configs: Vec<ArchConfig>,
    pub rows: Vec<BenchRow>,
}

pub const BENCH_CSV_HEADER: &str = "config,seed,resolution,initial_count,steps,param_count,encoder_flops,decoder_flops_per_query,encode_secs_median,projection_secs_median,chamfer_mean,chamfer_std";

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut s = String::from(BENCH_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{},{}\n",
                r.config,
                r.seed,
                r.resolution,
                r.initial_count,
                r.steps,
                r.param_count,
                r.encoder_flops,
                r.decoder_flops_per_query,
                r.encode_secs_median,
                r.projection_secs_median,
                opt(r.chamfer_mean),
                opt(r.chamfer_std)
            ));
        }
        s
    }

    /// First row of the named config, if present.
    pub fn row(&self, config: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.config == config)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn time_median<R>(repeats: usize, mut f: impl FnMut() -> Result<R>) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(f()?);
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

/// Counted metrics and single-worker median timings for each config. Timing
/// uses seeded random weights: cost does not depend on training.
pub fn benchmark(configs: &[ArchConfig], config: &BenchConfig) -> Result<BenchReport> {
    if configs.is_empty() {
        return Err(Error::config("benchmark needs at least one architecture"));
    }
    if config.repeats == 0 || config.steps == 0 || config.initial_counts.is_empty() {
        return Err(Error::config(
            "benchmark repeats, steps, and initial counts must be non-empty",
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let mesh = AnalyticShape::Sphere { radius: 0.3 }.mesh();
    let sparse = sample_surface(&mesh, config.input_points, config.seed);
    let mut rows = Vec::new();
    let mut resolved = Vec::new();
    for arch in configs {
        let arch = arch.clone().with_resolution(config.resolution);
        arch.validate()?;
        let params = ModelParams::<f32>::init(&arch, config.seed)?;
        let (grid, _) = voxelize(&sparse, arch.resolution)?;
        let encode_secs = pool.install(|| time_median(config.repeats, || encode(&grid, &params, &arch)))?;
        let field = NetworkField::new(encode(&grid, &params, &arch)?, &params);
        for &count in &config.initial_counts {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let starts = uniform_cube(count, &mut rng);
            let proj =
                pool.install(|| time_median(config.repeats, || project_points(&field, &starts, config.steps)))?;
            log::info!(
                "{} @ {count}: encode {encode_secs:.4}s, projection {proj:.4}s",
                arch.name
            );
            rows.push(BenchRow {
                config: arch.name.clone(),
                seed: config.seed,
                resolution: arch.resolution,
                initial_count: count,
                steps: config.steps,
                param_count: param_count(&arch),
                encoder_flops: flop_count(&arch, arch.resolution),
                decoder_flops_per_query: decoder_flops_per_query(&arch),
                encode_secs_median: encode_secs,
                projection_secs_median: proj,
                chamfer_mean: None,
                chamfer_std: None,
            });
        }
        resolved.push(arch);
    }
    Ok(BenchReport {
        configs: resolved,
        rows,
    })
}
