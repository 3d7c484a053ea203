//! Simulated multi-coil ground truth and image/k-space transforms.
//!
//! Conventions used throughout the crate:
//!
//! * k-space coordinates are normalised to `[-0.5, 0.5)`, so a Cartesian grid
//!   with `n` nodes per axis has spacing exactly `1/n`.
//! * Images are `Array2<Complex64>` of shape `(n_x, n_y)` indexed `[[ix, iy]]`.
//!   Pixel `(ix, iy)` sits at spatial position `(ix - n_x/2, iy - n_y/2)`.
//! * Grid-ordered sample lists are row-major with `k_x` fastest:
//!   node `(ix, iy)` is sample `iy * n_x + ix`.

mod coords;
mod mask;
mod noise;
mod phantom;
mod sensitivities;
mod source;
mod transform;

pub use coords::{
    golden_angle, make_cartesian_grid, make_radial_trajectory, CartesianGrid, Coord, Trajectory,
    TrajectoryKind,
};
pub use mask::{make_mask, SamplingMask};
pub use noise::{add_image_noise, add_kspace_noise, NoiseDomain};
pub use phantom::{render_phantom, Ellipse, PhantomSpec};
pub use sensitivities::{simulate_sensitivities, CoilSensitivities};
pub use source::{GridKSpace, NudftSource, ValueSource};
pub use transform::{
    adjoint_nudft, forward_grid, ifft_recon, ifft_recon_grid, nudft_forward, simulate_acquisition,
};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex image, shape `(n_x, n_y)`.
pub type Image = Array2<Complex64>;

/// Complex samples at explicit coordinates for every receive coil.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCoilKSpace {
    pub coords: Vec<Coord>,
    /// `n_samples x n_coils`.
    pub values: Array2<Complex64>,
    /// Readout length; the grid resolution the coordinates refer to.
    pub n_fe: usize,
}

impl MultiCoilKSpace {
    pub fn new(coords: Vec<Coord>, values: Array2<Complex64>, n_fe: usize) -> Result<Self> {
        if values.nrows() != coords.len() {
            return Err(Error::invalid(format!(
                "{} value rows for {} coordinates",
                values.nrows(),
                coords.len()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::invalid("k-space needs at least one coil"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("k-space values must be finite"));
        }
        Ok(Self {
            coords,
            values,
            n_fe,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.coords.len()
    }

    pub fn n_coils(&self) -> usize {
        self.values.ncols()
    }

    /// Median sample magnitude over all coils.
    pub fn median_magnitude(&self) -> f64 {
        let mut mags: Vec<f64> = self.values.iter().map(|v| v.norm()).collect();
        median(&mut mags)
    }

    /// Largest sample magnitude over all coils.
    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
