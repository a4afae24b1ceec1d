use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lightndf::commands::Manifest;
use lightndf::config::RunConfig;
use lightndf::model::{ArchConfig, ConvLayerSpec};

fn tiny_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.sampling.samples_per_shape = 1500;
    c.sampling.resolution = 8;
    c.sampling.input_points = 1000;
    let mut arch = ArchConfig::lightndf(8);
    arch.encoder = vec![
        ConvLayerSpec::same(1, 2, 3).emit().pool(),
        ConvLayerSpec::same(2, 2, 3).emit().pool(),
        ConvLayerSpec::same(2, 2, 3).emit().pool(),
        ConvLayerSpec::same(2, 2, 3).emit(),
    ];
    arch.decoder_widths = vec![8, 1];
    c.arch = arch;
    c.training.epochs = 2;
    c.training.batch_size = 64;
    c.training.shapes_per_step = 2;
    c.training.validation_queries = 64;
    c.projection.target = 500;
    c.projection.initial = 200;
    c.projection.max_passes = 3;
    c.eval.input_sizes = vec![300];
    c.eval.ground_truth_points = 500;
    c.eval.projection = c.projection.clone();
    c
}

fn write_config(dir: &Path, c: &RunConfig) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, c.to_json()).unwrap();
    p.to_string_lossy().into_owned()
}

fn lightndf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lightndf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn help_lists_subcommands_and_exit_codes() {
    let o = lightndf(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in [
        "sample",
        "train",
        "densify",
        "eval",
        "bench",
        "params",
        "--workers",
        "--seed",
        "Exit status",
    ] {
        assert!(text.contains(cmd), "help is missing {cmd}");
    }
}

#[test]
fn params_prints_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = lightndf(&["params", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["param_count"], 566_081);
    assert!(out.join("params.json").exists());
    assert!(out.join("config.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"sampling": {"bogus": 1}}"#).unwrap();
    let o = lightndf(&[
        "--config",
        bad.to_str().unwrap(),
        "params",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = lightndf(&["params", "--configs", "resnet", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = lightndf(&["--workers", "0", "params", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = lightndf(&[
        "train",
        "--data",
        dir.path().join("nowhere").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn sample_skips_bad_meshes_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("meshes");
    fs::create_dir(&meshes).unwrap();
    lightndf::geometry::io::write_off(
        &meshes.join("box.off"),
        &lightndf::geometry::shapes::axis_box(
            lightndf::geometry::Vec3::zeros(),
            lightndf::geometry::Vec3::new(3.0, 1.0, 2.0),
        ),
    )
    .unwrap();
    fs::write(meshes.join("broken.off"), "OFF\n3 1 0\n0 0 0\n").unwrap();
    fs::write(meshes.join("notes.txt"), "ignored").unwrap();
    let cfg = write_config(dir.path(), &tiny_config());
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = lightndf(&[
            "--config",
            &cfg,
            "--workers",
            "1",
            "sample",
            "--meshes",
            meshes.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let m = Manifest::load(&a).unwrap();
    assert_eq!(m.shapes.len(), 1);
    assert_eq!(m.skipped.len(), 1);
    assert!(m.skipped[0].source.ends_with("broken.off"));
    assert_eq!(
        fs::read(a.join("box.lndf")).unwrap(),
        fs::read(b.join("box.lndf")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn full_pipeline_with_failure_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config());
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let data = p("data");
    let run = p("run");

    let o = lightndf(&[
        "--config",
        &cfg,
        "--seed",
        "5",
        "sample",
        "--analytic",
        "10",
        "--out",
        &data,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::load(Path::new(&data)).unwrap();
    assert_eq!(m.seed, 5);
    assert_eq!(m.split.sizes(), (7, 2, 1));

    let o = lightndf(&["--config", &cfg, "train", "--data", &data, "--out", &run]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(Path::new(&run).join("loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let resumed = p("resumed");
    let latest = Path::new(&run).join("latest.lnck");
    let o = lightndf(&[
        "--config",
        &cfg,
        "train",
        "--data",
        &data,
        "--resume",
        latest.to_str().unwrap(),
        "--out",
        &resumed,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(Path::new(&resumed).join("loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5, "{log}");

    // two epochs of a tiny model cannot reach the acceptance threshold, so
    // densify must fail, still writing its report
    let best = Path::new(&run).join("best.lnck");
    let mesh = Path::new(&data).join("meshes").join("000_sphere_r0.200.off");
    let dense = p("dense");
    let o = lightndf(&[
        "--config",
        &cfg,
        "densify",
        "--checkpoint",
        best.to_str().unwrap(),
        "--input",
        mesh.to_str().unwrap(),
        "--out",
        &dense,
    ]);
    assert_eq!(code(&o), 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&dense).join("densify_report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["success"], false);
    assert!(report["error"].as_str().unwrap().contains("accepted"));

    let ev = p("eval");
    let o = lightndf(&["--config", &cfg, "eval", "--oracle", "--data", &data, "--out", &ev]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(Path::new(&ev).join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + m.split.test.len());
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&ev).join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["source"], "oracle");

    let mismatched = p("mismatch");
    let mut wrong = tiny_config();
    wrong.arch.decoder_widths = vec![4, 1];
    let wrong_cfg = dir.path().join("wrong.json");
    fs::write(&wrong_cfg, wrong.to_json()).unwrap();
    let o = lightndf(&[
        "--config",
        wrong_cfg.to_str().unwrap(),
        "densify",
        "--checkpoint",
        best.to_str().unwrap(),
        "--input",
        mesh.to_str().unwrap(),
        "--out",
        &mismatched,
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}
