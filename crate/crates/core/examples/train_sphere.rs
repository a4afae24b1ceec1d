//! Overfits the default model to one sphere and saves the checkpoint.
//!
//!     cargo run --release --example train_sphere -- 500 sphere.lnck

use std::path::PathBuf;

use lightndf::geometry::shapes::AnalyticShape;
use lightndf::model::ArchConfig;
use lightndf::sampling::{build_record, SamplingConfig};
use lightndf::training::{evaluate_loss, save_checkpoint, train, Dataset, TrainConfig};

fn main() -> lightndf::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(500, |s| s.parse().expect("step count"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sphere.lnck".into()));

    let sampling = SamplingConfig {
        normalize: false,
        ..SamplingConfig::default()
    };
    let mesh = AnalyticShape::Sphere { radius: 0.3 }.mesh();
    let record = build_record("sphere", &mesh, &sampling, 0)?;
    let dataset = Dataset {
        train: vec![record],
        validation: vec![],
    };
    let arch = ArchConfig::lightndf(sampling.resolution);
    let config = TrainConfig {
        shapes_per_step: 1,
        epochs: usize::MAX / 2,
        max_steps: Some(steps),
        ..TrainConfig::default()
    };
    let outcome = train(&dataset, &arch, &config, None, None)?;
    for (i, l) in outcome
        .step_losses
        .iter()
        .enumerate()
        .step_by((steps as usize / 10).max(1))
    {
        println!("step {i:>5}: batch loss {l:.5}");
    }
    let loss = evaluate_loss(&dataset.train, &outcome.latest.params, &arch, config.delta, 8192)?;
    println!("clamped L1 after {steps} steps: {loss:.5}");
    save_checkpoint(&outcome.latest, &out)?;
    println!("saved {}", out.display());
    Ok(())
}
