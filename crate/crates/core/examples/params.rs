//! Parameter and FLOP counts of the two architecture presets.
//!
//!     cargo run --example params -- 32

use lightndf::model::{decoder_flops_per_query, flop_count, param_count, ArchConfig};

fn main() {
    let n: usize = std::env::args().nth(1).map_or(32, |s| s.parse().expect("resolution"));
    println!(
        "{:<10} {:>10} {:>16} {:>18}",
        "config", "params", "encoder FLOPs", "decoder FLOPs/query"
    );
    for arch in [ArchConfig::lightndf(n), ArchConfig::ndf_like(n)] {
        println!(
            "{:<10} {:>10} {:>16} {:>18}",
            arch.name,
            param_count(&arch),
            flop_count(&arch, n),
            decoder_flops_per_query(&arch)
        );
    }
}
