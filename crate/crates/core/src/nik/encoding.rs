use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::Coord;

/// Gaussian Fourier features `[sin(2 pi B c), cos(2 pi B c)]` of
/// `c = (k_x, k_y, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    /// `n_features x 3`, entries drawn from `N(0, sigma^2)`.
    pub b: Array2<f64>,
    pub sigma: f64,
}

impl FeatureEncoding {
    pub fn new(n_features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("encoding needs at least one feature"));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::invalid(format!("feature scale {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_simple_fn((n_features, 3), || normal.sample(&mut rng));
        Ok(Self { b, sigma })
    }

    pub fn n_features(&self) -> usize {
        self.b.nrows()
    }

    pub fn out_dim(&self) -> usize {
        2 * self.n_features()
    }

    pub fn encode(&self, coord: &Coord) -> Vec<f64> {
        let f = self.n_features();
        let mut out = vec![0.0; 2 * f];
        for i in 0..f {
            let phase = 2.0
                * std::f64::consts::PI
                * (self.b[[i, 0]] * coord.kx + self.b[[i, 1]] * coord.ky + self.b[[i, 2]] * coord.t);
            let (s, c) = phase.sin_cos();
            out[i] = s;
            out[f + i] = c;
        }
        out
    }

    /// One encoded row per coordinate.
    pub fn encode_batch(&self, coords: &[Coord]) -> Array2<f64> {
        let mut out = Array2::zeros((coords.len(), self.out_dim()));
        for (mut row, c) in out.rows_mut().into_iter().zip(coords) {
            row.assign(&ndarray::Array1::from(self.encode(c)));
        }
        out
    }
}
