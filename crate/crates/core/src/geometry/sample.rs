use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, TriangleMesh, Vec3};

/// Draws `n` points uniformly over the surface area: triangle chosen with
/// probability proportional to its area, then uniform barycentric coordinates.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_surface_with(mesh, n, &mut rng)
}

pub(crate) fn sample_surface_with(mesh: &TriangleMesh, n: usize, rng: &mut impl Rng) -> PointCloud {
    let areas = mesh.triangle_areas();
    let pick = WeightedIndex::new(&areas).expect("mesh has positive area");
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = mesh.triangle(pick.sample(rng));
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect::<Vec<Vec3>>();
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exact_udf_bruteforce, TriangleMesh};

    #[test]
    fn single_triangle_samples_are_coplanar() {
        let verts = vec![
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(0.4, 0.1, -0.1),
            Vec3::new(-0.3, 0.2, 0.2),
        ];
        let (mesh, _) = TriangleMesh::new(verts.clone(), vec![[0, 1, 2]]).unwrap();
        let normal = (verts[1] - verts[0]).cross(&(verts[2] - verts[0])).normalize();
        let cloud = sample_surface(&mesh, 500, 4);
        for p in &cloud.points {
            assert!((p - verts[0]).dot(&normal).abs() < 1e-9);
            assert!(exact_udf_bruteforce(p, &mesh) < 1e-9);
        }
    }

    #[test]
    fn area_weighted_counts() {
        // two disjoint triangles with area ratio 9:1
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(0.0, 3.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(11.0, 0.0, 0.0),
            Vec3::new(10.0, 1.0, 0.0),
        ];
        let (mesh, _) = TriangleMesh::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let cloud = sample_surface(&mesh, 10_000, 77);
        let big = cloud.points.iter().filter(|p| p.x < 5.0).count();
        // binomial sd = sqrt(10000 * 0.9 * 0.1) = 30; 3 sd = 90, spec band 300
        assert!((big as i64 - 9000).abs() <= 300, "{big}");
    }

    #[test]
    fn deterministic_given_seed() {
        let mesh = crate::geometry::shapes::uv_sphere(0.3, 16, 8);
        assert_eq!(sample_surface(&mesh, 100, 5), sample_surface(&mesh, 100, 5));
        assert_ne!(sample_surface(&mesh, 100, 5), sample_surface(&mesh, 100, 6));
    }
}
