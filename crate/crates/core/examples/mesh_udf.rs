//! Exact unsigned distance to a mesh and one projection step onto it.
//!
//!     cargo run --release --example mesh_udf -- model.off

use std::path::Path;

use lightndf::densify::project_once;
use lightndf::field::{MeshField, UdfField};
use lightndf::geometry::io::load_mesh;
use lightndf::geometry::shapes::torus;
use lightndf::geometry::{normalize, Vec3};

fn main() -> lightndf::Result<()> {
    let mesh = match std::env::args().nth(1) {
        Some(p) => normalize(&load_mesh(Path::new(&p))?)?.0,
        None => torus(0.3, 0.1, 96, 32),
    };
    println!("{} triangles, area {:.4}", mesh.triangles().len(), mesh.surface_area());
    let field = MeshField::new(&mesh);
    for p in [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.4, 0.1, 0.2),
        Vec3::new(-0.2, 0.3, -0.1),
    ] {
        let (d, g) = field.value_and_grad(&p)?;
        let q = project_once(&field, &p)?;
        println!(
            "udf({:+.2}, {:+.2}, {:+.2}) = {d:.4}, |grad| = {:.3}, after one step {:.2e}",
            p.x,
            p.y,
            p.z,
            g.norm(),
            field.value(&q)?
        );
    }
    Ok(())
}
