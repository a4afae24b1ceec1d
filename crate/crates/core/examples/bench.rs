//! Timing comparison of the two presets at a reduced repeat count.
//!
//!     cargo run --release --example bench

use lightndf::eval::{benchmark, BenchConfig};
use lightndf::model::ArchConfig;

fn main() -> lightndf::Result<()> {
    let cfg = BenchConfig {
        repeats: 2,
        ..BenchConfig::default()
    };
    let archs = [
        ArchConfig::lightndf(cfg.resolution),
        ArchConfig::ndf_like(cfg.resolution),
    ];
    let report = benchmark(&archs, &cfg)?;
    print!("{}", report.to_csv());
    Ok(())
}
