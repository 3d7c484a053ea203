use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Line-wise Cartesian undersampling pattern; `kept[[ix, iy]]` is true for
/// every `ix` of a kept phase-encode line `iy`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub kept: Array2<bool>,
    pub acceleration: f64,
    pub center_fraction: f64,
}

impl SamplingMask {
    pub fn full(n_x: usize, n_y: usize) -> Self {
        Self {
            kept: Array2::from_elem((n_x, n_y), true),
            acceleration: 1.0,
            center_fraction: 1.0,
        }
    }

    pub fn n_x(&self) -> usize {
        self.kept.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.kept.ncols()
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_lines(&self) -> Vec<usize> {
        (0..self.n_y()).filter(|&iy| self.kept[[0, iy]]).collect()
    }

    /// Whether the grid node at row-major index `idx` is sampled.
    pub fn is_kept(&self, idx: usize) -> bool {
        let nx = self.n_x();
        self.kept[[idx % nx, idx / nx]]
    }
}

/// Random line undersampling with a fully kept central band.
///
/// Keeps `ceil(center_fraction * n_y)` central lines and fills up to
/// `round(n_y / R)` lines with uniformly random others.
pub fn make_mask(
    n_x: usize,
    n_y: usize,
    acceleration: f64,
    center_fraction: f64,
    seed: u64,
) -> Result<SamplingMask> {
    if n_x == 0 || n_y == 0 {
        return Err(Error::invalid("mask dimensions must be positive"));
    }
    if !(acceleration >= 1.0) {
        return Err(Error::invalid(format!("acceleration must be >= 1, got {acceleration}")));
    }
    if !(0.0..=1.0).contains(&center_fraction) {
        return Err(Error::invalid(format!(
            "center fraction must lie in [0, 1], got {center_fraction}"
        )));
    }
    let target = (n_y as f64 / acceleration).round().max(1.0) as usize;
    let n_center = (center_fraction * n_y as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_center > target {
        return Err(Error::invalid(format!(
            "{n_center} central lines exceed the {target} lines allowed at R={acceleration}"
        )));
    }
    let mut lines = vec![false; n_y];
    let start = (n_y / 2).saturating_sub(n_center / 2);
    for l in lines.iter_mut().skip(start).take(n_center) {
        *l = true;
    }
    let rest: Vec<usize> = (0..n_y).filter(|&i| !lines[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pick in index::sample(&mut rng, rest.len(), target - n_center) {
        lines[rest[pick]] = true;
    }
    let kept = Array2::from_shape_fn((n_x, n_y), |(_, iy)| lines[iy]);
    Ok(SamplingMask {
        kept,
        acceleration,
        center_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r1_keeps_everything() {
        let m = make_mask(16, 20, 1.0, 0.04, 1).unwrap();
        assert!(m.kept.iter().all(|&k| k));
    }

    #[test]
    fn r2_keeps_half_with_center() {
        let m = make_mask(10, 100, 2.0, 0.04, 3).unwrap();
        let lines = m.kept_lines();
        assert_eq!(lines.len(), 50);
        for c in 48..52 {
            assert!(lines.contains(&c), "central line {c} missing");
        }
        assert_eq!(m.kept_count(), 500);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(make_mask(8, 64, 3.0, 0.1, 11).unwrap(), make_mask(8, 64, 3.0, 0.1, 11).unwrap());
    }

    #[test]
    fn center_larger_than_budget_rejected() {
        assert!(make_mask(8, 100, 4.0, 0.5, 0).is_err());
        assert!(make_mask(8, 100, 0.5, 0.1, 0).is_err());
    }
}
