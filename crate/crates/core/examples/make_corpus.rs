//! Writes an analytic corpus (meshes, sample archives, manifest) to a directory.
//!
//!     cargo run --release --example make_corpus -- out/corpus 12

use std::path::PathBuf;

use lightndf::commands::cmd_sample;
use lightndf::config::RunConfig;

fn main() -> lightndf::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let count: usize = args.next().map_or(12, |s| s.parse().expect("shape count"));
    let mut config = RunConfig::default();
    config.paths.analytic_shapes = Some(count);
    config.sampling.samples_per_shape = 20_000;
    let manifest = cmd_sample(&config.resolve(Some(1))?, &out)?;
    let (train, test, val) = manifest.split.sizes();
    println!(
        "{} shapes in {}: {train} train, {test} test, {val} validation",
        manifest.shapes.len(),
        out.display()
    );
    for s in &manifest.shapes {
        println!(
            "  {:<36} {:>6} samples {:>5} occupied cells",
            s.id, s.samples, s.occupied_cells
        );
    }
    Ok(())
}
