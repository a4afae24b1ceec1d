//! Chamfer-L2 between two point files (.ply/.xyz), or between two samplings
//! of a torus when no files are given.
//!
//!     cargo run --release --example chamfer -- a.ply b.ply

use std::path::Path;

use lightndf::eval::chamfer_l2;
use lightndf::geometry::io::load_point_cloud;
use lightndf::geometry::sample_surface;
use lightndf::geometry::shapes::torus;

fn main() -> lightndf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = match args.as_slice() {
        [a, b] => (load_point_cloud(Path::new(a))?, load_point_cloud(Path::new(b))?),
        _ => {
            let mesh = torus(0.3, 0.1, 96, 32);
            (sample_surface(&mesh, 20_000, 1), sample_surface(&mesh, 20_000, 2))
        }
    };
    let r = chamfer_l2(&a, &b)?;
    println!("{} vs {} points", r.count_a, r.count_b);
    println!("a→b {:.4e}  b→a {:.4e}  CD-L2 {:.4e}", r.a_to_b, r.b_to_a, r.cd_l2);
    Ok(())
}
