use ndarray::Array2;
use num_complex::Complex64;

use super::{nudft_forward, CartesianGrid, CoilSensitivities, Coord, Image, MultiCoilKSpace};
use crate::error::{Error, Result};

/// Anything that can produce multi-coil values at requested coordinates.
///
/// Implemented by stored grids, by exact simulation, and by the neural
/// representation, so subset systems can be assembled from any of them.
pub trait ValueSource {
    fn n_coils(&self) -> usize;

    /// Values at `coords`, one row per coordinate.
    fn values_at(&self, coords: &[Coord]) -> Result<Array2<Complex64>>;
}

impl<F> ValueSource for (usize, F)
where
    F: Fn(&[Coord]) -> Result<Array2<Complex64>>,
{
    fn n_coils(&self) -> usize {
        self.0
    }

    fn values_at(&self, coords: &[Coord]) -> Result<Array2<Complex64>> {
        (self.1)(coords)
    }
}

/// Multi-coil k-space stored on a complete Cartesian grid (row-major, `k_x` fastest).
///
/// Lookups ignore the time coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridKSpace {
    pub grid: CartesianGrid,
    /// `n_x * n_y` rows by `n_c` columns.
    pub values: Array2<Complex64>,
}

impl GridKSpace {
    pub fn new(grid: CartesianGrid, values: Array2<Complex64>) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::invalid(format!(
                "grid of {} nodes given {} value rows",
                grid.len(),
                values.nrows()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: CartesianGrid, n_coils: usize) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.len(), n_coils)),
        }
    }

    /// Reorders an arbitrary-order sample list onto the grid, requiring every
    /// node exactly once.
    pub fn from_kspace(kspace: &MultiCoilKSpace, grid: CartesianGrid) -> Result<Self> {
        if kspace.n_samples() != grid.len() {
            return Err(Error::invalid(format!(
                "incomplete Cartesian grid: {} samples for {} nodes",
                kspace.n_samples(),
                grid.len()
            )));
        }
        let mut seen = vec![false; grid.len()];
        let mut values = Array2::zeros((grid.len(), kspace.n_coils()));
        for (i, c) in kspace.coords.iter().enumerate() {
            let idx = grid.index_of(c).ok_or_else(|| {
                Error::invalid(format!("sample {i} at {c:?} is not a grid node"))
            })?;
            if seen[idx] {
                return Err(Error::invalid(format!("grid node {idx} sampled twice")));
            }
            seen[idx] = true;
            values.row_mut(idx).assign(&kspace.values.row(i));
        }
        Ok(Self { grid, values })
    }

    pub fn n_coils(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_kspace(&self, t: f64) -> MultiCoilKSpace {
        MultiCoilKSpace {
            coords: self.grid.coords(t),
            values: self.values.clone(),
            n_fe: self.grid.n_x,
        }
    }

    /// Row indices of `coords`; fails on any off-grid coordinate.
    pub fn indices_of(&self, coords: &[Coord]) -> Result<Vec<usize>> {
        coords
            .iter()
            .map(|c| {
                self.grid
                    .index_of(c)
                    .ok_or_else(|| Error::invalid(format!("coordinate {c:?} is not a grid node")))
            })
            .collect()
    }
}

impl ValueSource for GridKSpace {
    fn n_coils(&self) -> usize {
        self.values.ncols()
    }

    fn values_at(&self, coords: &[Coord]) -> Result<Array2<Complex64>> {
        let idx = self.indices_of(coords)?;
        let mut out = Array2::zeros((coords.len(), self.n_coils()));
        for (row, i) in idx.into_iter().enumerate() {
            out.row_mut(row).assign(&self.values.row(i));
        }
        Ok(out)
    }
}

/// Exact simulated k-space of a fixed image, evaluated on demand.
pub struct NudftSource<'a> {
    pub image: &'a Image,
    pub sens: &'a CoilSensitivities,
}

impl ValueSource for NudftSource<'_> {
    fn n_coils(&self) -> usize {
        self.sens.n_coils()
    }

    fn values_at(&self, coords: &[Coord]) -> Result<Array2<Complex64>> {
        Ok(nudft_forward(self.image, self.sens, coords)?.values)
    }
}
