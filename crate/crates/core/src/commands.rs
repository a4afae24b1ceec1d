//! The command-line pipeline: argument definitions and one function per
//! subcommand. The binary only parses arguments and maps errors to exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::densify::{densify, DensifyReport};
use crate::error::{Error, Result};
use crate::eval::{benchmark, evaluate_model, EvalReport, FieldSource};
use crate::geometry::io::{load_mesh, load_point_cloud, save_point_cloud, write_off, MeshFormat};
use crate::geometry::shapes::analytic_corpus;
use crate::geometry::{normalize, sample_surface, voxelize, NormalizationTransform, PointCloud, TriangleMesh};
use crate::model::{
    decoder_flops_per_query, decoder_param_count, encode, encoder_param_count, flop_count, param_count, ArchConfig,
    NetworkField,
};
use crate::sampling::{build_record, read_archive, shape_seed, split_dataset, write_archive, SamplingConfig, Split};
use crate::training::{load_checkpoint_for, train, Dataset, BEST_CHECKPOINT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Exit status for an error: 2 configuration, 3 input data, 4 runtime.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Parse { .. } | Error::Format { .. } | Error::InvalidInput(_) | Error::Io { .. } | Error::Json(_) => {
            EXIT_DATA
        }
        Error::Shape(_) | Error::NonFinite(_) | Error::Densify(_) => EXIT_RUNTIME,
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const ARCHIVE_EXT: &str = "lndf";

#[derive(Debug, Parser)]
#[command(
    name = "lightndf",
    version,
    about = "Neural unsigned distance fields for dense point cloud generation",
    after_help = "Exit status: 0 success, 2 configuration error, 3 input data error, 4 runtime failure.\n\
                  With --workers 1 every command is bitwise reproducible for a fixed seed."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// JSON run configuration; omitted keys take defaults, unknown keys are errors
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed, overriding the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; the resolved config is echoed into it
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build sample archives and a split manifest from meshes
    Sample {
        /// Directory of .off/.obj meshes
        #[arg(long)]
        meshes: Option<PathBuf>,
        /// Generate this many analytic shapes instead of reading meshes
        #[arg(long)]
        analytic: Option<usize>,
    },
    /// Train on the train split of a sample directory
    Train {
        /// Directory written by `sample`
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from a checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Densify a sparse cloud or mesh with a trained model
    Densify {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Sparse input: .ply/.xyz cloud or .off/.obj mesh
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output point count (default: projection.target)
        #[arg(long)]
        count: Option<usize>,
        /// Output file name inside --out (.ply or .xyz)
        #[arg(long, default_value = "dense.ply")]
        output: String,
    },
    /// Chamfer evaluation on the test split
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use the exact distance to each test mesh instead of a model
        #[arg(long)]
        oracle: bool,
    },
    /// Parameter, FLOP and timing comparison of architectures
    Bench {
        /// Architecture presets to compare
        #[arg(long, value_delimiter = ',', default_value = "lightndf,ndf-like")]
        configs: Vec<String>,
    },
    /// Print parameter and FLOP counts
    Params {
        #[arg(long, value_delimiter = ',', default_value = "lightndf,ndf-like")]
        configs: Vec<String>,
    },
}

/// Loads, overrides, and validates the configuration.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let base = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    base.resolve(global.seed)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = resolve_config(&cli.global)?;
    let out = cli.global.out.clone();
    let body = move || match cli.command {
        Command::Sample { meshes, analytic } => {
            if meshes.is_some() {
                config.paths.meshes = meshes;
                config.paths.analytic_shapes = None;
            }
            if analytic.is_some() {
                config.paths.analytic_shapes = analytic;
                config.paths.meshes = None;
            }
            config.validate()?;
            cmd_sample(&config, &out).map(|_| ())
        }
        Command::Train { data, resume } => {
            override_path(&mut config.paths.data, data);
            cmd_train(&config, &out, resume.as_deref())
        }
        Command::Densify {
            checkpoint,
            input,
            count,
            output,
        } => {
            override_path(&mut config.paths.checkpoint, checkpoint);
            override_path(&mut config.paths.input, input);
            if let Some(c) = count {
                config.projection.target = c;
            }
            config.validate()?;
            cmd_densify(&config, &out, &output).map(|_| ())
        }
        Command::Eval {
            checkpoint,
            data,
            oracle,
        } => {
            override_path(&mut config.paths.checkpoint, checkpoint);
            override_path(&mut config.paths.data, data);
            cmd_eval(&config, &out, oracle).map(|_| ())
        }
        Command::Bench { configs } => cmd_bench(&config, &out, &configs).map(|_| ()),
        Command::Params { configs } => {
            let rows = cmd_params(&config, &out, &configs)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
            Ok(())
        }
    };
    match cli.global.workers {
        Some(0) => Err(Error::config("--workers must be ≥ 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("{what} is required (flag or paths.{what} in the config)")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestShape {
    pub id: String,
    pub archive: String,
    /// Mesh the samples were drawn from.
    pub source: PathBuf,
    pub shape_seed: u64,
    pub samples: usize,
    pub occupied_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMesh {
    pub source: PathBuf,
    pub reason: String,
}

/// Written by `sample`: the split, provenance of every archive, and skipped inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub sampling: SamplingConfig,
    pub split: Split,
    pub shapes: Vec<ManifestShape>,
    pub skipped: Vec<SkippedMesh>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn shape(&self, id: &str) -> Result<&ManifestShape> {
        self.shapes
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("manifest has no shape {id:?}")))
    }
}

fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| MeshFormat::from_path(p).is_some())
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a mesh, normalizing it when the sampling config asks for it.
pub fn load_corpus_mesh(path: &Path, sampling: &SamplingConfig) -> Result<TriangleMesh> {
    let mesh = load_mesh(path)?;
    Ok(if sampling.normalize { normalize(&mesh)?.0 } else { mesh })
}

/// Writes one archive per shape plus `manifest.json` and the config echo.
pub fn cmd_sample(config: &RunConfig, out: &Path) -> Result<Manifest> {
    config.echo(out)?;
    let mut sampling = config.sampling.clone();
    let sources = match (&config.paths.analytic_shapes, &config.paths.meshes) {
        (Some(n), _) => {
            // analytic shapes are authored inside the unit cube already
            sampling.normalize = false;
            let dir = out.join("meshes");
            fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            let mut files = Vec::new();
            for (i, shape) in analytic_corpus(*n).iter().enumerate() {
                let path = dir.join(format!("{i:03}_{}.off", shape.name()));
                write_off(&path, &shape.mesh())?;
                files.push(path);
            }
            files
        }
        (None, Some(dir)) => mesh_files(dir)?,
        (None, None) => return Err(Error::config("sample needs --meshes or --analytic")),
    };
    let mut shapes = Vec::new();
    let mut skipped = Vec::new();
    for path in &sources {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if shapes.iter().any(|s: &ManifestShape| s.id == id) {
            skipped.push(SkippedMesh {
                source: path.clone(),
                reason: format!("duplicate shape id {id:?}"),
            });
            continue;
        }
        let built = load_corpus_mesh(path, &sampling).and_then(|m| build_record(&id, &m, &sampling, config.seed));
        match built {
            Ok(rec) => {
                let archive = format!("{id}.{ARCHIVE_EXT}");
                write_archive(&out.join(&archive), &rec)?;
                log::info!(
                    "{id}: {} samples, {} occupied cells",
                    rec.samples.len(),
                    rec.grid.occupied_count()
                );
                shapes.push(ManifestShape {
                    id: id.clone(),
                    archive,
                    source: path.clone(),
                    shape_seed: shape_seed(config.seed, &id),
                    samples: rec.samples.len(),
                    occupied_cells: rec.grid.occupied_count(),
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedMesh {
                    source: path.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if shapes.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no usable meshes ({} skipped)",
            skipped.len()
        )));
    }
    if !skipped.is_empty() {
        log::warn!("{} of {} meshes skipped", skipped.len(), sources.len());
    }
    let ids: Vec<String> = shapes.iter().map(|s| s.id.clone()).collect();
    let manifest = Manifest {
        seed: config.seed,
        split: split_dataset(&ids, sampling.ratios, config.seed)?,
        sampling,
        shapes,
        skipped,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn load_split(data: &Path, ids: &[String], manifest: &Manifest) -> Result<Vec<crate::sampling::ShapeRecord>> {
    ids.iter()
        .map(|id| read_archive(&data.join(&manifest.shape(id)?.archive)))
        .collect()
}

/// Trains on the manifest's train split and validates on its validation split.
pub fn cmd_train(config: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<()> {
    let data = required(&config.paths.data, "data")?;
    let manifest = Manifest::load(data)?;
    if manifest.sampling.resolution != config.arch.resolution {
        return Err(Error::config(format!(
            "archives were built at resolution {}, architecture expects {}",
            manifest.sampling.resolution, config.arch.resolution
        )));
    }
    config.echo(out)?;
    let dataset = Dataset {
        train: load_split(data, &manifest.split.train, &manifest)?,
        validation: load_split(data, &manifest.split.validation, &manifest)?,
    };
    let start = match resume {
        Some(p) => Some(load_checkpoint_for(p, &config.arch)?),
        None => None,
    };
    let outcome = train(&dataset, &config.arch, &config.training, start, Some(out))?;
    log::info!(
        "trained to epoch {} (best validation loss {:?})",
        outcome.latest.epoch,
        outcome.best.best_val_loss()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyOutput {
    pub input: PathBuf,
    pub output: PathBuf,
    pub transform: NormalizationTransform,
    pub report: DensifyReport,
    pub error: Option<String>,
}

fn sparse_input(path: &Path, config: &RunConfig) -> Result<(PointCloud, NormalizationTransform)> {
    if MeshFormat::from_path(path).is_some() {
        let mesh = load_mesh(path)?;
        let (mesh, t) = if config.sampling.normalize {
            normalize(&mesh)?
        } else {
            (mesh, NormalizationTransform::identity())
        };
        let seed = shape_seed(config.seed, &path.to_string_lossy());
        Ok((sample_surface(&mesh, config.sampling.input_points, seed), t))
    } else {
        let cloud = load_point_cloud(path)?;
        if cloud.is_empty() {
            return Err(Error::InvalidInput(format!("{} has no points", path.display())));
        }
        Ok((cloud, NormalizationTransform::identity()))
    }
}

/// Densifies one input. The report is written even when densification fails.
pub fn cmd_densify(config: &RunConfig, out: &Path, output: &str) -> Result<DensifyOutput> {
    let ckpt = load_checkpoint_for(required(&config.paths.checkpoint, "checkpoint")?, &config.arch)?;
    let input = required(&config.paths.input, "input")?;
    let (cloud, transform) = sparse_input(input, config)?;
    let (grid, clamped) = voxelize(&cloud, config.arch.resolution)?;
    if clamped > 0 {
        log::warn!("{clamped} input points were outside the unit cube and clamped");
    }
    config.echo(out)?;
    let field = NetworkField::new(encode(&grid, &ckpt.params, &config.arch)?, &ckpt.params);
    let out_path = out.join(output);
    let (report, error) = match densify(&field, &config.projection) {
        Ok((dense, report)) => {
            let back = PointCloud::new(dense.points.iter().map(|p| transform.invert(p)).collect());
            save_point_cloud(&out_path, &back)?;
            (report, None)
        }
        Err(f) => (f.report, Some(f.message)),
    };
    let result = DensifyOutput {
        input: input.to_path_buf(),
        output: out_path,
        transform,
        report,
        error,
    };
    write_json(&out.join("densify_report.json"), &result)?;
    match &result.error {
        Some(msg) => Err(Error::Densify(msg.clone())),
        None => Ok(result),
    }
}

/// Chamfer evaluation of the manifest's test split, per configured input size.
pub fn cmd_eval(config: &RunConfig, out: &Path, oracle: bool) -> Result<EvalReport> {
    let data = required(&config.paths.data, "data")?;
    let manifest = Manifest::load(data)?;
    let ckpt = if oracle {
        None
    } else {
        Some(load_checkpoint_for(
            required(&config.paths.checkpoint, "checkpoint")?,
            &config.arch,
        )?)
    };
    let shapes = manifest
        .split
        .test
        .iter()
        .map(|id| {
            let s = manifest.shape(id)?;
            Ok((id.clone(), load_corpus_mesh(&s.source, &manifest.sampling)?))
        })
        .collect::<Result<Vec<_>>>()?;
    config.echo(out)?;
    let source = match &ckpt {
        Some(c) => FieldSource::Model {
            arch: &config.arch,
            params: &c.params,
        },
        None => FieldSource::Oracle,
    };
    let report = evaluate_model(source, &shapes, &config.eval)?;
    write_json(&out.join("eval.json"), &report)?;
    write_text(&out.join("eval.csv"), &report.to_csv())?;
    Ok(report)
}

fn presets(names: &[String], resolution: usize) -> Result<Vec<ArchConfig>> {
    names.iter().map(|n| ArchConfig::preset(n.trim(), resolution)).collect()
}

pub fn cmd_bench(config: &RunConfig, out: &Path, configs: &[String]) -> Result<crate::eval::BenchReport> {
    let archs = presets(configs, config.bench.resolution)?;
    config.echo(out)?;
    let report = benchmark(&archs, &config.bench)?;
    write_json(&out.join("bench.json"), &report)?;
    write_text(&out.join("bench.csv"), &report.to_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRow {
    pub config: String,
    pub resolution: usize,
    pub param_count: u64,
    pub encoder_params: u64,
    pub decoder_params: u64,
    pub encoder_flops: u64,
    pub decoder_flops_per_query: u64,
}

pub fn cmd_params(config: &RunConfig, out: &Path, configs: &[String]) -> Result<Vec<ParamsRow>> {
    let archs = presets(configs, config.arch.resolution)?;
    let rows: Vec<ParamsRow> = archs
        .iter()
        .map(|a| ParamsRow {
            config: a.name.clone(),
            resolution: a.resolution,
            param_count: param_count(a),
            encoder_params: encoder_param_count(a),
            decoder_params: decoder_param_count(a),
            encoder_flops: flop_count(a, a.resolution),
            decoder_flops_per_query: decoder_flops_per_query(a),
        })
        .collect();
    config.echo(out)?;
    write_json(&out.join("params.json"), &rows)?;
    Ok(rows)
}

/// Path of the best checkpoint written by `train` into `dir`.
pub fn best_checkpoint(dir: &Path) -> PathBuf {
    dir.join(BEST_CHECKPOINT)
}
