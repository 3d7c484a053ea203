use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pisco(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pisco"))
        .arg("--config")
        .arg(&cfg)
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
  "phantom": {"n": 32, "n_frames": 3},
  "pisco": {"exclusion_cells": 3},
  "fit": {"epochs": 12, "precondition_epochs": 4},
  "network": {"n_features": 8, "hidden": 16},
  "train": {"epochs": 6, "e_pre": 3, "lambda": 0.1}
}"#;

#[test]
fn default_phantom_writes_25_frames() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = pisco(tmp.path(), "{}", &["--out", out.to_str().unwrap(), "phantom"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pngs = fs::read_dir(out.join("truth"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png")
        .count();
    assert_eq!(pngs, 25);
    assert!(out.join("kspace.bin").exists());
    assert!(out.join("manifest_phantom.json").exists());
}

#[test]
fn missing_output_dir_is_created() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("a/b/c");
    let o = pisco(tmp.path(), SMALL, &["--out", out.to_str().unwrap(), "phantom"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("mask.json").exists());
}

#[test]
fn unknown_key_is_named() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = pisco(
        tmp.path(),
        r#"{"phantom": {"n": 32, "coils": 4}}"#,
        &["--out", out.to_str().unwrap(), "phantom"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("coils"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(!out.exists());
}

#[test]
fn single_subset_dispersion_exits_insufficient() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = pisco(
        tmp.path(),
        r#"{"phantom": {"n": 32}, "pisco": {"n_s_min": 1, "exclusion_cells": 3}, "validate": {"seeds": [0]}}"#,
        &["--out", out.to_str().unwrap(), "validate-kernel"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn fit_loss_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let mut losses = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let out = out.to_str().unwrap();
        for cmd in ["phantom", "fit"] {
            let o = pisco(tmp.path(), SMALL, &["--out", out, "--seed", "7", cmd]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        losses.push(fs::read(Path::new(out).join("loss.csv")).unwrap());
    }
    assert_eq!(losses[0], losses[1]);
    assert!(losses[0].starts_with(b"epoch,dc,pisco,total\n"));
}

#[test]
fn metrics_on_identical_dirs_hit_the_cap() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = pisco(tmp.path(), SMALL, &["--out", out.to_str().unwrap(), "phantom"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let truth = out.join("truth");
    let cfg = format!(
        r#"{{"metrics": {{"recon_dir": {t:?}, "reference_dir": {t:?}, "method": "truth"}}}}"#,
        t = truth.to_str().unwrap()
    );
    let o = pisco(tmp.path(), &cfg, &["--out", out.to_str().unwrap(), "metrics"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["method", "R", "frame", "psnr", "ssim"]);
    let mut n = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        assert_eq!(row[3].parse::<f64>().unwrap(), 100.0);
        n += 1;
    }
    assert_eq!(n, 3);
}

#[test]
fn recon_between_frames() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap();
    let cfg = SMALL.replacen(
        "\"phantom\": {\"n\": 32, \"n_frames\": 3}",
        "\"phantom\": {\"n\": 32, \"n_frames\": 25}, \"trajectory\": {\"kind\": \"radial-golden-angle\", \"spokes_per_frame\": 2}, \"recon\": {\"times\": [0.37]}",
        1,
    );
    for cmd in ["phantom", "train", "recon"] {
        let o = pisco(tmp.path(), &cfg, &["--out", out_s, cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    assert!(out.join("recon/frame_000.png").exists());
    assert!(out.join("recon/frame_000.bin").exists());
    assert!(!out.join("recon/frame_001.png").exists());
}
