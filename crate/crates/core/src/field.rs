//! The field interface consumed by projection and evaluation, plus exact
//! analytic and mesh-backed unsigned distance fields.

use crate::error::Result;
use crate::geometry::{SpatialIndex, TriangleMesh, Vec3};

/// A scalar field with a spatial gradient. Values are raw (not clamped).
pub trait UdfField: Sync {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)>;

    fn value(&self, p: &Vec3) -> Result<f64> {
        Ok(self.value_and_grad(p)?.0)
    }

    fn value_batch(&self, points: &[Vec3]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.value(p)).collect()
    }

    fn value_and_grad_batch(&self, points: &[Vec3]) -> Result<Vec<(f64, Vec3)>> {
        points.iter().map(|p| self.value_and_grad(p)).collect()
    }
}

fn unit_or_zero(v: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vec3::zeros()
    }
}

/// `|‖p - c‖ - r|`.
#[derive(Debug, Clone, Copy)]
pub struct SphereField {
    pub center: Vec3,
    pub radius: f64,
}

impl SphereField {
    pub fn new(radius: f64) -> Self {
        Self {
            center: Vec3::zeros(),
            radius,
        }
    }
}

impl UdfField for SphereField {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)> {
        let q = p - self.center;
        let s = q.norm() - self.radius;
        Ok((s.abs(), s.signum() * unit_or_zero(q)))
    }
}

/// `|n · (p - x0)|` for a unit normal `n`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneField {
    pub point: Vec3,
    pub normal: Vec3,
}

impl PlaneField {
    pub fn new(point: Vec3, normal: Vec3) -> Self {
        Self {
            point,
            normal: normal.normalize(),
        }
    }
}

impl UdfField for PlaneField {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)> {
        let s = self.normal.dot(&(p - self.point));
        Ok((s.abs(), s.signum() * self.normal))
    }
}

/// Distance to the surface of an axis-aligned box.
#[derive(Debug, Clone, Copy)]
pub struct BoxField {
    pub center: Vec3,
    pub half: Vec3,
}

impl UdfField for BoxField {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)> {
        let q = p - self.center;
        let out = Vec3::from_fn(|i, _| (q[i].abs() - self.half[i]).max(0.0));
        if out.norm() > 0.0 {
            let dir = Vec3::from_fn(|i, _| out[i] * q[i].signum());
            return Ok((out.norm(), unit_or_zero(dir)));
        }
        // inside: the nearest face wins
        let (axis, gap) = (0..3)
            .map(|i| (i, self.half[i] - q[i].abs()))
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        let mut g = Vec3::zeros();
        g[axis] = -q[axis].signum();
        Ok((gap, g))
    }
}

/// Distance to a torus around the z axis.
#[derive(Debug, Clone, Copy)]
pub struct TorusField {
    pub major: f64,
    pub minor: f64,
}

impl UdfField for TorusField {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)> {
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        let radial = if rho > 0.0 {
            Vec3::new(p.x / rho, p.y / rho, 0.0)
        } else {
            Vec3::zeros()
        };
        // offset from the nearest point of the core circle
        let d = Vec3::new(0.0, 0.0, p.z) + (rho - self.major) * radial;
        let s = d.norm() - self.minor;
        Ok((s.abs(), s.signum() * unit_or_zero(d)))
    }
}

/// Exact distance to a triangle mesh through a spatial index.
#[derive(Debug, Clone)]
pub struct MeshField {
    index: SpatialIndex,
}

impl MeshField {
    pub fn new(mesh: &TriangleMesh) -> Self {
        Self {
            index: SpatialIndex::build(mesh),
        }
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }
}

impl UdfField for MeshField {
    fn value_and_grad(&self, p: &Vec3) -> Result<(f64, Vec3)> {
        let hit = self.index.closest(p);
        Ok((hit.distance, unit_or_zero(p - hit.point)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use crate::gradcheck::{central_difference, relative_error_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_gradient(field: &dyn UdfField, p: Vec3) -> Option<f64> {
        let (_, g) = field.value_and_grad(&p).unwrap();
        let mut fd = [0.0; 3];
        for a in 0..3 {
            fd[a] = central_difference(
                |t| {
                    let mut q = p;
                    q[a] = t;
                    field.value(&q).unwrap()
                },
                p[a],
                1e-5,
                1e-6,
            )?;
        }
        Some(relative_error_vec(&fd, g.as_slice(), 1e-9))
    }

    fn one_step(field: &dyn UdfField, p: Vec3) -> Vec3 {
        let (f, g) = field.value_and_grad(&p).unwrap();
        p - f * g
    }

    #[test]
    fn analytic_gradients_match_differences_and_project_in_one_step() {
        let fields: Vec<Box<dyn UdfField>> = vec![
            Box::new(SphereField::new(0.3)),
            Box::new(PlaneField::new(Vec3::new(0.0, 0.1, 0.0), Vec3::new(1.0, 2.0, -0.5))),
            Box::new(BoxField {
                center: Vec3::new(0.05, 0.0, -0.02),
                half: Vec3::new(0.2, 0.3, 0.1),
            }),
            Box::new(TorusField {
                major: 0.25,
                minor: 0.08,
            }),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for field in &fields {
            let mut checked = 0;
            while checked < 100 {
                let p = Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                );
                let Some(err) = check_gradient(field.as_ref(), p) else {
                    continue;
                };
                assert!(err < 1e-5, "{err} at {p:?}");
                assert!(field.value(&one_step(field.as_ref(), p)).unwrap() < 1e-9);
                checked += 1;
            }
        }
    }

    #[test]
    fn mesh_field_points_away_from_the_closest_point() {
        let mesh = shapes::unit_square();
        let f = MeshField::new(&mesh);
        let (d, g) = f.value_and_grad(&Vec3::new(0.25, 0.25, 1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((g - Vec3::z()).norm() < 1e-12);
        let (d, g) = f.value_and_grad(&Vec3::new(0.5, 0.5, 0.0)).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(g, Vec3::zeros());
    }
}
