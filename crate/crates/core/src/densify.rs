//! Dense point generation by projecting samples onto the zero level set of
//! a distance field, with acceptance filtering and jitter resampling.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::UdfField;
use crate::geometry::{PointCloud, Vec3};

/// Gradients shorter than this leave the point in place.
pub const DEGENERATE_GRADIENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub steps: usize,
    pub initial: usize,
    /// Accept points whose clamped field value is at most this.
    pub epsilon: f64,
    pub jitter_sigma: f64,
    pub target: usize,
    pub max_passes: usize,
    /// Clamp applied to reported field values.
    pub delta: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            initial: 5050,
            epsilon: 0.01,
            jitter_sigma: 0.1 / 3.0,
            target: 100_000,
            max_passes: 50,
            delta: 0.1,
            seed: 0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.initial == 0 || self.target == 0 || self.max_passes == 0 {
            return Err(Error::config("projection counts must be ≥ 1"));
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("jitter_sigma", self.jitter_sigma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub candidates: usize,
    pub accepted: usize,
    pub cumulative: usize,
    /// Mean clamped `|f|` over the candidates after projection.
    pub mean_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyReport {
    pub passes: Vec<PassStats>,
    /// Field evaluations, counting each point once per projection step and
    /// once for the acceptance test.
    pub evaluations: u64,
    pub duration_secs: f64,
    pub target: usize,
    pub success: bool,
}

impl DensifyReport {
    pub fn accepted(&self) -> usize {
        self.passes.last().map_or(0, |p| p.cumulative)
    }
}

/// Densification that stopped short of its target. The partial report is kept.
#[derive(Debug)]
pub struct DensifyFailure {
    pub message: String,
    pub report: DensifyReport,
}

impl std::fmt::Display for DensifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for DensifyFailure {}

impl From<DensifyFailure> for Error {
    fn from(e: DensifyFailure) -> Self {
        Error::Densify(e.message)
    }
}

fn clamp_cube(p: Vec3) -> Vec3 {
    p.map(|c| c.clamp(-0.5, 0.5))
}

fn step_point(p: &Vec3, f: f64, g: &Vec3) -> Vec3 {
    let n = g.norm();
    if !(n >= DEGENERATE_GRADIENT) {
        return *p;
    }
    clamp_cube(p - g * (f / n))
}

/// `p - f(p) · ∇f / ‖∇f‖`, clamped into the unit cube.
pub fn project_once(field: &dyn UdfField, p: &Vec3) -> Result<Vec3> {
    let (f, g) = field.value_and_grad(p)?;
    Ok(step_point(p, f, &g))
}

/// Applies `steps` projections to every point.
pub fn project_points(field: &dyn UdfField, points: &[Vec3], steps: usize) -> Result<Vec<Vec3>> {
    let mut pts = points.to_vec();
    for _ in 0..steps {
        let vg = field.value_and_grad_batch(&pts)?;
        pts = pts.iter().zip(&vg).map(|(p, (f, g))| step_point(p, *f, g)).collect();
    }
    Ok(pts)
}

/// Clamped `|f|` of every point before each step and after the last one
/// (`steps + 1` rows).
pub fn residual_history(field: &dyn UdfField, points: &[Vec3], steps: usize, delta: f64) -> Result<Vec<Vec<f64>>> {
    let mut pts = points.to_vec();
    let mut rows = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let vg = field.value_and_grad_batch(&pts)?;
        rows.push(vg.iter().map(|(f, _)| f.abs().min(delta)).collect());
        pts = pts.iter().zip(&vg).map(|(p, (f, g))| step_point(p, *f, g)).collect();
    }
    rows.push(field.value_batch(&pts)?.iter().map(|f| f.abs().min(delta)).collect());
    Ok(rows)
}

pub fn uniform_cube(n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            )
        })
        .collect()
}

/// Projects uniform samples onto the surface band `|f| ≤ ε`, then grows the
/// accepted set by jittering and re-projecting until `target` points exist.
pub fn densify(field: &dyn UdfField, config: &ProjectionConfig) -> Result<(PointCloud, DensifyReport), DensifyFailure> {
    let start = Instant::now();
    let mut report = DensifyReport {
        passes: Vec::new(),
        evaluations: 0,
        duration_secs: 0.0,
        target: config.target,
        success: false,
    };
    let fail = |message: String, mut report: DensifyReport| {
        report.duration_secs = start.elapsed().as_secs_f64();
        DensifyFailure { message, report }
    };
    if let Err(e) = config.validate() {
        return Err(fail(e.to_string(), report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, config.jitter_sigma).expect("validated sigma");
    let mut accepted: Vec<Vec3> = Vec::new();
    while accepted.len() < config.target && report.passes.len() < config.max_passes {
        let candidates = if accepted.is_empty() {
            uniform_cube(config.initial, &mut rng)
        } else {
            // oversample slightly since not every jittered point is accepted
            let want = (config.target - accepted.len()) * 6 / 5 + 1;
            (0..want)
                .map(|i| clamp_cube(accepted[i % accepted.len()] + Vec3::from_fn(|_, _| jitter.sample(&mut rng))))
                .collect()
        };
        let projected = project_points(field, &candidates, config.steps).and_then(|p| {
            let v = field.value_batch(&p)?;
            Ok((p, v))
        });
        let (projected, values) = match projected {
            Ok(x) => x,
            Err(e) => return Err(fail(e.to_string(), report)),
        };
        report.evaluations += (candidates.len() * (config.steps + 1)) as u64;
        let mut residual = 0.0;
        let mut kept = 0;
        for (p, f) in projected.iter().zip(&values) {
            let r = f.abs().min(config.delta);
            residual += r;
            if r <= config.epsilon {
                accepted.push(*p);
                kept += 1;
            }
        }
        report.passes.push(PassStats {
            candidates: candidates.len(),
            accepted: kept,
            cumulative: accepted.len(),
            mean_residual: residual / candidates.len() as f64,
        });
        log::debug!(
            "densify pass {}: {kept}/{} accepted",
            report.passes.len(),
            candidates.len()
        );
    }
    report.duration_secs = start.elapsed().as_secs_f64();
    if accepted.len() < config.target {
        let last = report.passes.last().map_or(f64::NAN, |p| p.mean_residual);
        let msg = format!(
            "only {} of {} points accepted after {} passes (mean residual {last:.4} vs threshold {})",
            accepted.len(),
            config.target,
            report.passes.len(),
            config.epsilon
        );
        return Err(fail(msg, report));
    }
    accepted.truncate(config.target);
    report.success = true;
    Ok((PointCloud::new(accepted), report))
}
