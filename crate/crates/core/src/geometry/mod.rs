//! Ground-truth geometry in the normalized frame `[-0.5, 0.5]³`.

mod bvh;
mod distance;
pub mod io;
pub(crate) mod sample;
pub mod shapes;
pub(crate) mod voxel;

pub use bvh::{ClosestHit, SpatialIndex};
pub use distance::{closest_point_on_triangle, exact_udf_bruteforce};
pub use sample::sample_surface;
pub use voxel::{voxelize, VoxelGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Triangles with area at or below this are dropped at load time.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Validates indices and drops degenerate triangles. Returns the mesh and
    /// the number of triangles dropped.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<(Self, usize)> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidInput(format!(
                "triangle {t:?} references a vertex beyond {n}"
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite vertex {v:?}")));
        }
        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| triangle_area(&vertices, t) > DEGENERATE_AREA)
            .collect();
        let dropped = before - triangles.len();
        if triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no non-degenerate triangles".into()));
        }
        Ok((Self { vertices, triangles }, dropped))
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.vertices, t))
            .collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.triangle_areas().iter().sum()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounds(&self.vertices)
    }

    pub fn transformed(&self, t: &NormalizationTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

fn triangle_area(vertices: &[Vec3], t: &[u32; 3]) -> f64 {
    let [a, b, c] = t.map(|i| vertices[i as usize]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub(crate) fn bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &NormalizationTransform) -> Self {
        Self::new(self.points.iter().map(|p| t.apply(p)).collect())
    }
}

/// `p' = (p + translation) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub translation: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    /// Centers the bounding box of `points` and scales its longest edge to 1.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("cannot normalize an empty point set".into()));
        }
        let (lo, hi) = bounds(points);
        let extent = (hi - lo).max();
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidInput(format!(
                "zero-extent geometry (bounds {lo:?}..{hi:?})"
            )));
        }
        let center = (lo + hi) * 0.5;
        Ok(Self {
            translation: [-center.x, -center.y, -center.z],
            scale: 1.0 / extent,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p + Vec3::from(self.translation)) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale - Vec3::from(self.translation)
    }
}

/// Centers the mesh at its bounding-box center with the longest bounding-box edge 1.
pub fn normalize(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizationTransform)> {
    let t = NormalizationTransform::fit(mesh.vertices())?;
    let mut out = mesh.transformed(&t);
    // guard rounding so every vertex stays in the closed unit cube
    for v in &mut out.vertices {
        v.apply(|c| *c = c.clamp(-0.5, 0.5));
    }
    Ok((out, t))
}
