//! Minimal raster line plots: axes, tick marks and polylines.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: i64 = 32;
const TICKS: usize = 5;

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Renders each series of `(x, y)` points as a coloured polyline on shared axes.
pub fn line_plot(series: &[Vec<(f64, f64)>]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (x_lo, x_hi) = range(series.iter().flatten().map(|p| p.0));
    let (y_lo, y_hi) = range(series.iter().flatten().map(|p| p.1));
    let (w, h) = (WIDTH as i64, HEIGHT as i64);
    let to_px = |(x, y): (f64, f64)| {
        let px = MARGIN as f64 + (x - x_lo) / (x_hi - x_lo) * (w - 2 * MARGIN) as f64;
        let py = (h - MARGIN) as f64 - (y - y_lo) / (y_hi - y_lo) * (h - 2 * MARGIN) as f64;
        (px.round() as i64, py.round() as i64)
    };
    let black = [0, 0, 0];
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), black);
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), black);
    for i in 0..=TICKS {
        let x = MARGIN + i as i64 * (w - 2 * MARGIN) / TICKS as i64;
        let y = h - MARGIN - i as i64 * (h - 2 * MARGIN) / TICKS as i64;
        line(&mut img, (x, h - MARGIN), (x, h - MARGIN + 4), black);
        line(&mut img, (MARGIN - 4, y), (MARGIN, y), black);
    }
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let pts: Vec<(i64, i64)> = s.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&p| to_px(p)).collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], c);
        }
        for &(x, y) in &pts {
            for d in -1..=1 {
                put(&mut img, x + d, y, c);
                put(&mut img, x, y + d, c);
            }
        }
    }
    img
}

pub fn save_line_plot(path: &Path, series: &[Vec<(f64, f64)>]) -> Result<()> {
    line_plot(series)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}
