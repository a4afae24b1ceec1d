//! Procedural meshes: the analytic corpus (spheres, ellipsoids, tori) plus
//! small fixtures.

use std::f64::consts::PI;

use rand::Rng;

use super::{TriangleMesh, Vec3};

fn build(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, triangles)
        .expect("procedural mesh is valid")
        .0
}

/// Two triangles covering `[0,1]² × {0}`.
pub fn unit_square() -> TriangleMesh {
    let v = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
    ];
    build(v, vec![[0, 1, 2], [0, 2, 3]])
}

/// Surface of an axis-aligned box, 12 triangles.
pub fn axis_box(center: Vec3, half: Vec3) -> TriangleMesh {
    let mut v = Vec::with_capacity(8);
    for i in 0..8u32 {
        let s = |bit: u32| if i & bit != 0 { 1.0 } else { -1.0 };
        v.push(center + Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
    }
    let t = vec![
        [0, 2, 1],
        [1, 2, 3], // z-
        [4, 5, 6],
        [5, 7, 6], // z+
        [0, 1, 4],
        [1, 5, 4], // y-
        [2, 6, 3],
        [3, 6, 7], // y+
        [0, 4, 2],
        [2, 4, 6], // x-
        [1, 3, 5],
        [3, 7, 5], // x+
    ];
    build(v, t)
}

/// Ellipsoid centered at the origin with semi-axes `(a, b, c)`.
pub fn ellipsoid(axes: Vec3, segments: usize, rings: usize) -> TriangleMesh {
    assert!(segments >= 3 && rings >= 2);
    let mut v = vec![Vec3::new(0.0, 0.0, axes.z)];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            v.push(Vec3::new(
                axes.x * theta.sin() * phi.cos(),
                axes.y * theta.sin() * phi.sin(),
                axes.z * theta.cos(),
            ));
        }
    }
    v.push(Vec3::new(0.0, 0.0, -axes.z));
    let south = (v.len() - 1) as u32;
    let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
    let mut t = Vec::new();
    for s in 0..segments {
        t.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            t.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            t.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    for s in 0..segments {
        t.push([ring(rings - 1, s), south, ring(rings - 1, s + 1)]);
    }
    build(v, t)
}

pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriangleMesh {
    ellipsoid(Vec3::repeat(radius), segments, rings)
}

/// Torus around the z axis with tube center radius `major` and tube radius `minor`.
pub fn torus(major: f64, minor: f64, major_segments: usize, minor_segments: usize) -> TriangleMesh {
    let mut v = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let u = 2.0 * PI * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let w = 2.0 * PI * j as f64 / minor_segments as f64;
            let rr = major + minor * w.cos();
            v.push(Vec3::new(rr * u.cos(), rr * u.sin(), minor * w.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % major_segments) * minor_segments + j % minor_segments) as u32;
    let mut t = Vec::with_capacity(2 * v.len());
    for i in 0..major_segments {
        for j in 0..minor_segments {
            t.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            t.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(v, t)
}

/// Random triangle soup inside `[-scale/2, scale/2]³`.
pub fn random_soup(rng: &mut impl Rng, triangles: usize, scale: f64) -> TriangleMesh {
    let h = scale / 2.0;
    let mut v = Vec::with_capacity(3 * triangles);
    for _ in 0..3 * triangles {
        v.push(Vec3::new(
            rng.random_range(-h..h),
            rng.random_range(-h..h),
            rng.random_range(-h..h),
        ));
    }
    let t = (0..triangles as u32).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
    build(v, t)
}

/// One member of the analytic training corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticShape {
    Sphere { radius: f64 },
    Ellipsoid { axes: [f64; 3] },
    Torus { major: f64, minor: f64 },
}

impl AnalyticShape {
    pub fn name(&self) -> String {
        match self {
            AnalyticShape::Sphere { radius } => format!("sphere_r{radius:.3}"),
            AnalyticShape::Ellipsoid { axes } => {
                format!("ellipsoid_{:.3}_{:.3}_{:.3}", axes[0], axes[1], axes[2])
            }
            AnalyticShape::Torus { major, minor } => format!("torus_{major:.3}_{minor:.3}"),
        }
    }

    /// Tessellation fine enough that the chordal error stays below 1e-3.
    pub fn mesh(&self) -> TriangleMesh {
        match *self {
            AnalyticShape::Sphere { radius } => uv_sphere(radius, 96, 48),
            AnalyticShape::Ellipsoid { axes } => ellipsoid(Vec3::from(axes), 96, 48),
            AnalyticShape::Torus { major, minor } => torus(major, minor, 96, 32),
        }
    }
}

/// Deterministic corpus of `count` shapes cycling sphere, ellipsoid, torus
/// with radii spread over the cube interior.
pub fn analytic_corpus(count: usize) -> Vec<AnalyticShape> {
    (0..count)
        .map(|i| {
            let t = (i / 3) as f64 / ((count / 3).max(2) - 1).max(1) as f64; // 0..1
            match i % 3 {
                0 => AnalyticShape::Sphere { radius: 0.2 + 0.15 * t },
                1 => AnalyticShape::Ellipsoid {
                    axes: [0.35 - 0.1 * t, 0.2 + 0.1 * t, 0.15 + 0.1 * (1.0 - t)],
                },
                _ => AnalyticShape::Torus {
                    major: 0.22 + 0.08 * t,
                    minor: 0.06 + 0.05 * t,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpatialIndex;

    #[test]
    fn sphere_vertices_on_radius_and_area_close() {
        let m = uv_sphere(0.3, 96, 48);
        assert!(m.vertices().iter().all(|v| (v.norm() - 0.3).abs() < 1e-12));
        let area = 4.0 * PI * 0.09;
        assert!((m.surface_area() - area).abs() / area < 2e-3);
    }

    #[test]
    fn corpus_fits_in_cube_with_margin() {
        for s in analytic_corpus(24) {
            let (lo, hi) = s.mesh().bounds();
            assert!(lo.min() > -0.42 && hi.max() < 0.42, "{}", s.name());
        }
    }

    #[test]
    fn torus_distance_is_analytic() {
        let (rm, rt) = (0.3, 0.1);
        let idx = SpatialIndex::build(&torus(rm, rt, 96, 32));
        let p = Vec3::new(0.5, 0.0, 0.0);
        assert!((idx.udf(&p) - 0.1).abs() < 1e-3);
    }
}
