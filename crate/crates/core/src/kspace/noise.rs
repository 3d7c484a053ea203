use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Image, MultiCoilKSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDomain {
    Kspace,
    Image,
}

fn add_complex_noise(values: &mut Array2<Complex64>, sigma: f64, seed: u64) -> Result<()> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // standard layout order: real then imaginary, row by row
    for v in values.iter_mut() {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        *v += Complex64::new(re, im);
    }
    Ok(())
}

/// Adds i.i.d. complex Gaussian noise (each part `N(0, sigma^2)`) to every sample.
pub fn add_kspace_noise(y: &MultiCoilKSpace, sigma: f64, seed: u64) -> Result<MultiCoilKSpace> {
    let mut out = y.clone();
    add_complex_noise(&mut out.values, sigma, seed)?;
    Ok(out)
}

/// Adds i.i.d. complex Gaussian noise to every pixel; apply before the forward transform.
pub fn add_image_noise(x: &Image, sigma: f64, seed: u64) -> Result<Image> {
    let mut out = x.clone();
    add_complex_noise(&mut out, sigma, seed)?;
    Ok(out)
}
