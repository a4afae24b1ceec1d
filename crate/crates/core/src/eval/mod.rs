//! Chamfer evaluation of densified clouds and the parameter/FLOP/timing
//! benchmark.

mod bench;
mod chamfer;
mod kdtree;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::densify::{densify, ProjectionConfig};
use crate::error::{Error, Result};
use crate::field::{MeshField, UdfField};
use crate::geometry::{sample_surface, voxelize, TriangleMesh};
use crate::model::{encode, ArchConfig, ModelParams, NetworkField};
use crate::sampling::shape_seed;

pub use bench::{benchmark, BenchConfig, BenchReport, BenchRow};
pub use chamfer::{chamfer_l2, chamfer_l2_bruteforce, ChamferResult};
pub use kdtree::KdTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Sparse input sizes to evaluate.
    pub input_sizes: Vec<usize>,
    /// Size of the reference cloud, identical for every input size.
    pub ground_truth_points: usize,
    pub projection: ProjectionConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            input_sizes: vec![3000, 10_000],
            ground_truth_points: 100_000,
            projection: ProjectionConfig::default(),
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_sizes.is_empty() || self.input_sizes.contains(&0) || self.ground_truth_points == 0 {
            return Err(Error::config("input sizes and ground-truth count must be ≥ 1"));
        }
        self.projection.validate()
    }
}

/// Where the distance field comes from.
#[derive(Debug, Clone, Copy)]
pub enum FieldSource<'a> {
    Model {
        arch: &'a ArchConfig,
        params: &'a ModelParams<f32>,
    },
    /// The exact distance to the ground-truth mesh.
    Oracle,
}

impl FieldSource<'_> {
    pub fn label(&self) -> String {
        match self {
            FieldSource::Model { arch, .. } => arch.name.clone(),
            FieldSource::Oracle => "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub shape_id: String,
    pub input_size: usize,
    pub ground_truth_points: usize,
    pub chamfer: Option<ChamferResult>,
    pub projection_secs: f64,
    pub passes: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub input_size: usize,
    pub shapes: usize,
    pub failures: usize,
    pub cd_mean: f64,
    pub cd_std: f64,
    pub projection_secs_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub summary: Vec<EvalSummary>,
}

pub const EVAL_CSV_HEADER: &str =
    "source,shape_id,input_size,ground_truth_points,cd_l2,a_to_b,b_to_a,projection_secs,passes,error";

impl EvalReport {
    /// One row per (shape, input size); failed shapes have empty metric cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(EVAL_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let (cd, ab, ba) = r.chamfer.map_or((String::new(), String::new(), String::new()), |c| {
                (
                    format!("{:e}", c.cd_l2),
                    format!("{:e}", c.a_to_b),
                    format!("{:e}", c.b_to_a),
                )
            });
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            s.push_str(&format!(
                "{},{},{},{},{cd},{ab},{ba},{:.6},{},{err}\n",
                self.source, r.shape_id, r.input_size, r.ground_truth_points, r.projection_secs, r.passes
            ));
        }
        s
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

fn evaluate_one(
    source: FieldSource<'_>,
    id: &str,
    mesh: &TriangleMesh,
    size: usize,
    config: &EvalConfig,
    reference: &crate::geometry::PointCloud,
) -> Result<(ChamferResult, f64, usize)> {
    let seed = shape_seed(config.seed, id);
    let projection = ProjectionConfig {
        seed: seed ^ size as u64,
        ..config.projection.clone()
    };
    let run = |field: &dyn UdfField| -> Result<(ChamferResult, f64, usize)> {
        let t = Instant::now();
        let (cloud, report) = densify(field, &projection)?;
        let secs = t.elapsed().as_secs_f64();
        Ok((chamfer_l2(&cloud, reference)?, secs, report.passes.len()))
    };
    match source {
        FieldSource::Model { arch, params } => {
            let sparse = sample_surface(mesh, size, seed.wrapping_add(size as u64));
            let (grid, _) = voxelize(&sparse, arch.resolution)?;
            let field = NetworkField::new(encode(&grid, params, arch)?, params);
            run(&field)
        }
        FieldSource::Oracle => run(&MeshField::new(mesh)),
    }
}

/// For every shape and input size: sample a sparse cloud, encode it,
/// densify, and compare against a dense reference sampling of the mesh.
/// Failures are recorded per row and do not stop the sweep.
pub fn evaluate_model(
    source: FieldSource<'_>,
    shapes: &[(String, TriangleMesh)],
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if let FieldSource::Model { arch, params } = source {
        params.check(arch)?;
    }
    let mut rows = Vec::new();
    for (id, mesh) in shapes {
        let reference = sample_surface(mesh, config.ground_truth_points, shape_seed(config.seed, id) ^ 0x5eed);
        for &size in &config.input_sizes {
            let row = match evaluate_one(source, id, mesh, size, config, &reference) {
                Ok((cd, secs, passes)) => EvalRow {
                    shape_id: id.clone(),
                    input_size: size,
                    ground_truth_points: reference.len(),
                    chamfer: Some(cd),
                    projection_secs: secs,
                    passes,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{id} at {size} input points: {e}");
                    EvalRow {
                        shape_id: id.clone(),
                        input_size: size,
                        ground_truth_points: reference.len(),
                        chamfer: None,
                        projection_secs: 0.0,
                        passes: 0,
                        error: Some(e.to_string()),
                    }
                }
            };
            rows.push(row);
        }
    }
    let summary = config
        .input_sizes
        .iter()
        .map(|&size| {
            let sel: Vec<&EvalRow> = rows.iter().filter(|r| r.input_size == size).collect();
            let cds: Vec<f64> = sel.iter().filter_map(|r| r.chamfer.map(|c| c.cd_l2)).collect();
            let times: Vec<f64> = sel
                .iter()
                .filter(|r| r.chamfer.is_some())
                .map(|r| r.projection_secs)
                .collect();
            let (cd_mean, cd_std) = mean_std(&cds);
            EvalSummary {
                input_size: size,
                shapes: sel.len(),
                failures: sel.len() - cds.len(),
                cd_mean,
                cd_std,
                projection_secs_mean: mean_std(&times).0,
            }
        })
        .collect();
    Ok(EvalReport {
        source: source.label(),
        seed: config.seed,
        rows,
        summary,
    })
}
