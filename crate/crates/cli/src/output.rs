use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use image::{GrayImage, Luma};
use ndarray::Array2;
use serde::Serialize;
use sha2::{Digest, Sha256};

use pisco_core::eval::normalize_magnitude;
use pisco_core::Image;

use crate::config::ExperimentConfig;

/// Writes a real array as an 8-bit grayscale PNG; `values[[ix, iy]]` lands
/// at column `ix`, row `iy`. Values are expected in `[0, 1]`.
pub fn write_gray(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (w, h) = values.dim();
    let mut img = GrayImage::new(w as u32, h as u32);
    for ((x, y), v) in values.indexed_iter() {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        img.put_pixel(x as u32, y as u32, Luma([g]));
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Magnitude image after percentile clipping and min-max scaling.
pub fn write_magnitude(path: &Path, image: &Image) -> Result<()> {
    write_gray(path, &normalize_magnitude(&image.mapv(|v| v.norm()))?)
}

/// Min-max scaled heatmap of an arbitrary real array.
pub fn write_heatmap(path: &Path, values: &Array2<f64>) -> Result<()> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scaled = if span > 0.0 {
        values.mapv(|v| (v - lo) / span)
    } else {
        Array2::zeros(values.raw_dim())
    };
    write_gray(path, &scaled)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:03}")
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    wall_time_s: f64,
    outputs: &'a [PathBuf],
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Versions {
    pisco: &'static str,
    pisco_core: &'static str,
}

/// Tracks one command run and writes `manifest_<command>.json` at the end.
pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            command,
            out: out.to_path_buf(),
            started: Instant::now(),
            outputs: Vec::new(),
        })
    }

    /// Path of an output file, creating its parent directory.
    pub fn file(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.outputs.push(PathBuf::from(rel));
        Ok(path)
    }

    pub fn finish(self, config: &ExperimentConfig) -> Result<PathBuf> {
        let canonical = serde_json::to_vec(config)?;
        let manifest = Manifest {
            command: self.command,
            config_sha256: Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect(),
            seed: config.seed,
            versions: Versions {
                pisco: env!("CARGO_PKG_VERSION"),
                pisco_core: pisco_core::VERSION,
            },
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: &self.outputs,
            config,
        };
        let path = self.out.join(format!("manifest_{}.json", self.command.replace('-', "_")));
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(path)
    }
}
