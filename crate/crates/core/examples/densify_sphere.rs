//! Densifies a sphere from its exact distance field, or from a checkpoint
//! written by the `train_sphere` example.
//!
//!     cargo run --release --example densify_sphere
//!     cargo run --release --example densify_sphere -- sphere.lnck

use std::path::Path;

use lightndf::densify::{densify, ProjectionConfig};
use lightndf::eval::chamfer_l2;
use lightndf::field::{SphereField, UdfField};
use lightndf::geometry::shapes::AnalyticShape;
use lightndf::geometry::{sample_surface, voxelize};
use lightndf::model::{encode, NetworkField};
use lightndf::training::load_checkpoint;

fn report(field: &dyn UdfField, target: usize) -> lightndf::Result<()> {
    let cfg = ProjectionConfig {
        target,
        ..ProjectionConfig::default()
    };
    let (cloud, rep) = densify(field, &cfg).map_err(lightndf::Error::from)?;
    for (i, p) in rep.passes.iter().enumerate() {
        println!(
            "pass {}: {} candidates, {} accepted, mean residual {:.2e}",
            i + 1,
            p.candidates,
            p.accepted,
            p.mean_residual
        );
    }
    let radial = cloud.points.iter().map(|p| (p.norm() - 0.3).abs()).sum::<f64>() / cloud.len() as f64;
    let mesh = AnalyticShape::Sphere { radius: 0.3 }.mesh();
    let cd = chamfer_l2(&cloud, &sample_surface(&mesh, target, 7))?;
    println!(
        "{} points in {:.2}s, mean radial error {radial:.2e}, Chamfer-L2 {:.2e}",
        cloud.len(),
        rep.duration_secs,
        cd.cd_l2
    );
    Ok(())
}

fn main() -> lightndf::Result<()> {
    match std::env::args().nth(1) {
        None => report(&SphereField::new(0.3), 20_000),
        Some(path) => {
            let ckpt = load_checkpoint(Path::new(&path))?;
            let mesh = AnalyticShape::Sphere { radius: 0.3 }.mesh();
            let (grid, _) = voxelize(&sample_surface(&mesh, 10_000, 3), ckpt.arch.resolution)?;
            let field = NetworkField::new(encode(&grid, &ckpt.params, &ckpt.arch)?, &ckpt.params);
            report(&field, 20_000)
        }
    }
}
