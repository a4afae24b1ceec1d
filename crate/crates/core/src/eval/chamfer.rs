use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

use super::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamferResult {
    pub cd_l2: f64,
    /// mean squared distance from each point of A to B
    pub a_to_b: f64,
    pub b_to_a: f64,
    pub count_a: usize,
    pub count_b: usize,
}

fn check(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "chamfer distance needs two non-empty clouds".into(),
        ));
    }
    Ok(())
}

fn assemble(a: &PointCloud, b: &PointCloud, ab: Vec<f64>, ba: Vec<f64>) -> ChamferResult {
    // sequential sums keep the result independent of the worker count
    let a_to_b = ab.iter().sum::<f64>() / a.len() as f64;
    let b_to_a = ba.iter().sum::<f64>() / b.len() as f64;
    ChamferResult {
        cd_l2: a_to_b + b_to_a,
        a_to_b,
        b_to_a,
        count_a: a.len(),
        count_b: b.len(),
    }
}

fn directed(from: &[Vec3], tree: &KdTree) -> Vec<f64> {
    from.par_iter()
        .map(|p| tree.nearest(p).expect("non-empty tree").1)
        .collect()
}

/// Sum of the two directional means of squared nearest-neighbor distances.
pub fn chamfer_l2(a: &PointCloud, b: &PointCloud) -> Result<ChamferResult> {
    check(a, b)?;
    let ta = KdTree::build(&a.points);
    let tb = KdTree::build(&b.points);
    Ok(assemble(a, b, directed(&a.points, &tb), directed(&b.points, &ta)))
}

/// Double-loop reference for [`chamfer_l2`].
pub fn chamfer_l2_bruteforce(a: &PointCloud, b: &PointCloud) -> Result<ChamferResult> {
    check(a, b)?;
    let nn = |from: &[Vec3], to: &[Vec3]| -> Vec<f64> {
        from.iter()
            .map(|p| to.iter().map(|q| (q - p).norm_squared()).fold(f64::INFINITY, f64::min))
            .collect()
    };
    Ok(assemble(a, b, nn(&a.points, &b.points), nn(&b.points, &a.points)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5))
                .collect(),
        )
    }

    #[test]
    fn known_values() {
        let a = PointCloud::new(vec![Vec3::zeros()]);
        let b = PointCloud::new(vec![Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(chamfer_l2(&a, &b).unwrap().cd_l2, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_cloud(&mut rng, 300);
        assert_eq!(chamfer_l2(&c, &c).unwrap().cd_l2, 0.0);
        assert!(chamfer_l2(&c, &PointCloud::default()).is_err());
    }

    #[test]
    fn index_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 7, 200, 999] {
            let a = random_cloud(&mut rng, n);
            let b = random_cloud(&mut rng, 200);
            let fast = chamfer_l2(&a, &b).unwrap();
            let slow = chamfer_l2_bruteforce(&a, &b).unwrap();
            assert!((fast.cd_l2 - slow.cd_l2).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn symmetric_and_homogeneous(seed in any::<u64>(), na in 1usize..60, nb in 1usize..60, s in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, na);
            let b = random_cloud(&mut rng, nb);
            let ab = chamfer_l2(&a, &b).unwrap();
            let ba = chamfer_l2(&b, &a).unwrap();
            prop_assert!((ab.cd_l2 - ba.cd_l2).abs() <= 1e-15 * ab.cd_l2.max(1.0));
            let scale = |c: &PointCloud| PointCloud::new(c.points.iter().map(|p| p * s).collect());
            let scaled = chamfer_l2(&scale(&a), &scale(&b)).unwrap();
            prop_assert!((scaled.cd_l2 - s * s * ab.cd_l2).abs() <= 1e-12 * scaled.cd_l2.max(1e-12));
        }
    }
}
