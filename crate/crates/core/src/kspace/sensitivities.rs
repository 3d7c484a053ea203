use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex receive sensitivities, shape `(n_x, n_y, n_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSensitivities {
    pub maps: Array3<Complex64>,
}

impl CoilSensitivities {
    pub fn n_x(&self) -> usize {
        self.maps.shape()[0]
    }

    pub fn n_y(&self) -> usize {
        self.maps.shape()[1]
    }

    pub fn n_coils(&self) -> usize {
        self.maps.shape()[2]
    }

    /// Largest deviation of `sum_c |S_c|^2` from one over all pixels.
    pub fn normalization_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for ix in 0..self.n_x() {
            for iy in 0..self.n_y() {
                let s: f64 = (0..self.n_coils())
                    .map(|c| self.maps[[ix, iy, c]].norm_sqr())
                    .sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }
}

const LOBE_WIDTH: f64 = 0.4;
const COIL_RING: f64 = 0.55;
/// Phase ramp in cycles across the FOV for the last coil.
const PHASE_CYCLES: f64 = 0.5;

/// Smooth synthetic coil maps normalised to `sum_c |S_c|^2 = 1`.
///
/// Coil `c` has a Gaussian magnitude lobe centred on a ring just outside the
/// FOV at angle `2 pi c / n_c`, and a linear phase ramp along the same
/// direction whose slope grows with `c` (coil 0 has zero phase).
pub fn simulate_sensitivities(n_x: usize, n_y: usize, n_c: usize) -> Result<CoilSensitivities> {
    if n_c == 0 {
        return Err(Error::invalid("need at least one coil"));
    }
    if n_x == 0 || n_y == 0 {
        return Err(Error::invalid("sensitivity grid must be non-empty"));
    }
    let mut maps = Array3::<Complex64>::zeros((n_x, n_y, n_c));
    for ix in 0..n_x {
        let px = (ix as f64 - (n_x / 2) as f64) / n_x as f64;
        for iy in 0..n_y {
            let py = (iy as f64 - (n_y / 2) as f64) / n_y as f64;
            let mut total = 0.0;
            for c in 0..n_c {
                let theta = 2.0 * PI * c as f64 / n_c as f64;
                let (s, co) = theta.sin_cos();
                let dx = px - COIL_RING * co;
                let dy = py - COIL_RING * s;
                let mag = (-(dx * dx + dy * dy) / (2.0 * LOBE_WIDTH * LOBE_WIDTH)).exp();
                let slope = PHASE_CYCLES * c as f64 / n_c as f64;
                let phase = 2.0 * PI * slope * (px * co + py * s);
                maps[[ix, iy, c]] = Complex64::from_polar(mag, phase);
                total += mag * mag;
            }
            let norm = total.sqrt();
            for c in 0..n_c {
                maps[[ix, iy, c]] /= norm;
            }
        }
    }
    Ok(CoilSensitivities { maps })
}
