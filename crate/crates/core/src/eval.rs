//! Image-quality protocol: percentile clipping, PSNR, SSIM, temporal profiles.
//!
//! Metrics operate on real magnitude images indexed `[ix, iy]`. The `_images`
//! wrappers normalise complex reconstructions first, each image on its own.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::Image;

pub const PSNR_CAP_DB: f64 = 100.0;
const PSNR_MIN_MSE: f64 = 1e-10;
const CLIP_PERCENTILE: f64 = 99.0;
const SSIM_WINDOW: usize = 8;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Percentile `p` in `[0, 100]` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Clips at the 99th percentile and rescales to `[0, 1]`. A constant image
/// maps to all zeros.
pub fn normalize_magnitude(image: &Array2<f64>) -> Result<Array2<f64>> {
    let values: Vec<f64> = image.iter().copied().collect();
    let clip = percentile(&values, CLIP_PERCENTILE)?;
    let clipped = image.mapv(|v| v.min(clip));
    let lo = clipped.fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = clipped.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(hi > lo) {
        return Ok(Array2::zeros(image.raw_dim()));
    }
    Ok(clipped.mapv(|v| (v - lo) / (hi - lo)))
}

/// [`normalize_magnitude`] of `|image|`.
pub fn normalize_for_metrics(image: &Image) -> Result<Array2<f64>> {
    normalize_magnitude(&image.mapv(|v| v.norm()))
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for images already on `[0, 1]`, capped at 100 dB.
pub fn psnr(test: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    same_shape(test, reference)?;
    if test.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    let mse = (test - reference).mapv(|d| d * d).mean().unwrap_or(0.0);
    if mse < PSNR_MIN_MSE {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

pub fn psnr_images(test: &Image, reference: &Image) -> Result<f64> {
    psnr(&normalize_for_metrics(test)?, &normalize_for_metrics(reference)?)
}

fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW as f64 - 1.0) / 2.0;
    let w1: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let mut w = Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(i, j)| w1[i] * w1[j]);
    let total = w.sum();
    w /= total;
    w
}

/// Mean structural similarity over all fully contained 8x8 Gaussian windows
/// (sigma 1.5, data range 1), clamped to `[0, 1]`.
pub fn ssim(test: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    same_shape(test, reference)?;
    let (nx, ny) = test.dim();
    if nx < SSIM_WINDOW || ny < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {nx}x{ny}"
        )));
    }
    let w = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=nx - SSIM_WINDOW {
        for j in 0..=ny - SSIM_WINDOW {
            let a = test.slice(s![i..i + SSIM_WINDOW, j..j + SSIM_WINDOW]);
            let b = reference.slice(s![i..i + SSIM_WINDOW, j..j + SSIM_WINDOW]);
            let mu_a = (&w * &a).sum();
            let mu_b = (&w * &b).sum();
            let var_a = (&w * &a.mapv(|v| (v - mu_a) * (v - mu_a))).sum();
            let var_b = (&w * &b.mapv(|v| (v - mu_b) * (v - mu_b))).sum();
            let cov = (&w * &(a.mapv(|v| v - mu_a) * b.mapv(|v| v - mu_b))).sum();
            total += ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

pub fn ssim_images(test: &Image, reference: &Image) -> Result<f64> {
    ssim(&normalize_for_metrics(test)?, &normalize_for_metrics(reference)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub frames: Vec<FrameMetrics>,
}

/// Per-frame PSNR and SSIM plus their means.
pub fn evaluate_frames(frames: &[Image], references: &[Image]) -> Result<MetricReport> {
    if frames.is_empty() || frames.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} frames against {} references",
            frames.len(),
            references.len()
        )));
    }
    let mut out = Vec::with_capacity(frames.len());
    for (i, (f, r)) in frames.iter().zip(references).enumerate() {
        let a = normalize_for_metrics(f)?;
        let b = normalize_for_metrics(r)?;
        out.push(FrameMetrics {
            frame: i,
            psnr: psnr(&a, &b)?,
            ssim: ssim(&a, &b)?,
        });
    }
    let n = out.len() as f64;
    Ok(MetricReport {
        psnr: out.iter().map(|m| m.psnr).sum::<f64>() / n,
        ssim: out.iter().map(|m| m.ssim).sum::<f64>() / n,
        frames: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileAxis {
    /// Row `index` (fixed `ix`) of every frame.
    Xt,
    /// Column `index` (fixed `iy`) of every frame.
    Yt,
}

/// Stacks one line of each frame along time; frame `f` becomes column `f`.
pub fn temporal_profile(frames: &[Array2<f64>], axis: ProfileAxis, index: usize) -> Result<Array2<f64>> {
    if frames.len() < 2 {
        return Err(Error::invalid("temporal profile needs at least 2 frames"));
    }
    let dim = frames[0].dim();
    if frames.iter().any(|f| f.dim() != dim) {
        return Err(Error::invalid("frames differ in shape"));
    }
    let (ax, len) = match axis {
        ProfileAxis::Xt => (Axis(0), dim.1),
        ProfileAxis::Yt => (Axis(1), dim.0),
    };
    let limit = frames[0].len_of(ax);
    if index >= limit {
        return Err(Error::invalid(format!(
            "profile index {index} out of range 0..{limit}"
        )));
    }
    let mut out = Array2::zeros((len, frames.len()));
    for (f, frame) in frames.iter().enumerate() {
        out.column_mut(f).assign(&frame.index_axis(ax, index));
    }
    Ok(out)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length series of length >= 2"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
