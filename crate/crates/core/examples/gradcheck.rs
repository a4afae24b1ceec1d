//! Compares the analytic query gradient of a randomly initialized model with
//! central differences.
//!
//!     cargo run --release --example gradcheck

use lightndf::geometry::{Vec3, VoxelGrid};
use lightndf::gradcheck::{central_difference, relative_error_vec};
use lightndf::model::{encode, forward_udf, grad_udf, ArchConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lightndf::Result<()> {
    let arch = ArchConfig::lightndf(16);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let occupancy = (0..16 * 16 * 16).map(|_| u8::from(rng.random_bool(0.2))).collect();
    let grid = VoxelGrid::from_occupancy(16, occupancy)?;
    let params = ModelParams::<f64>::init(&arch, 1)?;
    let pyramid = encode(&grid, &params, &arch)?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 20 {
        let p = Vec3::from_fn(|_, _| rng.random_range(-0.45..0.45));
        let analytic = grad_udf(&p, &pyramid, &params)?;
        let numeric: Option<Vec<f64>> = (0..3)
            .map(|a| {
                central_difference(
                    |x| {
                        let mut q = p;
                        q[a] = x;
                        forward_udf(&q, &pyramid, &params).unwrap()
                    },
                    p[a],
                    1e-4,
                    1e-4,
                )
            })
            .collect();
        // a ReLU kink inside the stencil; draw another point
        let Some(numeric) = numeric else { continue };
        let err = relative_error_vec(analytic.as_slice(), &numeric, 1e-8);
        println!("p = [{:+.3}, {:+.3}, {:+.3}]  rel err {err:.2e}", p.x, p.y, p.z);
        worst = worst.max(err);
        checked += 1;
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
