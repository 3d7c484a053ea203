//! Agreement of subset weights on ideal data, for comparing kernel designs
//! and subset partitioning strategies.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kspace::{CartesianGrid, ValueSource};
use crate::loss::{subset_weights, PiscoConfig};
use crate::sampling::{random_partition, sample_targets, sort_and_partition, KernelGeometry, PatchPair};
use crate::solver::WeightSet;

/// Per-entry spread of weight sets across subsets.
///
/// For entry `e` with values `w_s`, the variance is `mean_s |w_s - mean(w)|^2`
/// and the coefficient of variation is `sqrt(variance) / mean_s |w_s|`.
#[derive(Debug, Clone)]
pub struct Dispersion {
    pub n_subsets: usize,
    pub mean_cov: f64,
    pub mean_variance: f64,
    /// `(N_n N_c) x N_c`, laid out like the weight matrices.
    pub cov: Array2<f64>,
    pub variance: Array2<f64>,
}

pub fn weight_dispersion(sets: &[WeightSet]) -> Result<Dispersion> {
    if sets.len() < 2 {
        return Err(Error::InsufficientData {
            what: "weight sets for a dispersion".into(),
            required: 2,
            available: sets.len(),
        });
    }
    let (rows, cols) = sets[0].weights.shape();
    if sets.iter().any(|w| w.weights.shape() != (rows, cols)) {
        return Err(Error::invalid("weight sets differ in shape"));
    }
    let n = sets.len() as f64;
    let mut cov = Array2::zeros((rows, cols));
    let mut variance = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mean = sets.iter().map(|w| w.weights[(r, c)]).sum::<num_complex::Complex64>() / n;
            let var = sets
                .iter()
                .map(|w| (w.weights[(r, c)] - mean).norm_sqr())
                .sum::<f64>()
                / n;
            let mag = sets.iter().map(|w| w.weights[(r, c)].norm()).sum::<f64>() / n;
            variance[[r, c]] = var;
            cov[[r, c]] = if mag > 0.0 { var.sqrt() / mag } else { 0.0 };
        }
    }
    Ok(Dispersion {
        n_subsets: sets.len(),
        mean_cov: cov.mean().unwrap_or(0.0),
        mean_variance: variance.mean().unwrap_or(0.0),
        cov,
        variance,
    })
}

/// Weight magnitudes and phases stacked one subset per row; column
/// `r * N_c + c` holds entry `(r, c)`.
pub fn weight_stack(sets: &[WeightSet]) -> (Array2<f64>, Array2<f64>) {
    let (rows, cols) = sets.first().map(|w| w.weights.shape()).unwrap_or((0, 0));
    let mut mag = Array2::zeros((sets.len(), rows * cols));
    let mut phase = Array2::zeros((sets.len(), rows * cols));
    for (s, w) in sets.iter().enumerate() {
        for r in 0..rows {
            for c in 0..cols {
                mag[[s, r * cols + c]] = w.weights[(r, c)].norm();
                phase[[s, r * cols + c]] = w.weights[(r, c)].arg();
            }
        }
    }
    (mag, phase)
}

/// Pool of `n_s_min * N_m` grid targets at `t = 0` with neighbours laid out by
/// `geometry`.
pub fn sample_pair_pool(
    grid: CartesianGrid,
    geometry: &KernelGeometry,
    cfg: &PiscoConfig,
    n_coils: usize,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    let n_m = crate::sampling::pairs_per_subset(geometry.n_neighbors(), n_coils, cfg.f_od)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = sample_targets(
        grid,
        cfg.n_s_min * n_m,
        &[0.0],
        &mut rng,
        cfg.exclusion_radius,
        geometry.extent(),
    )?;
    geometry.pairs(&targets)
}

/// Solves every subset of `pairs` on `source`, either sorted by centre
/// distance or randomly chunked (shuffle seeded by `seed`).
pub fn pool_weights(
    pairs: Vec<PatchPair>,
    source: &dyn ValueSource,
    cfg: &PiscoConfig,
    sorted: bool,
    seed: u64,
) -> Result<Vec<WeightSet>> {
    let n_c = source.n_coils();
    let partition = if sorted {
        sort_and_partition(pairs, n_c, cfg.f_od, cfg.n_s_min)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_partition(pairs, n_c, cfg.f_od, cfg.n_s_min, &mut rng)?
    };
    let values = source.values_at(&partition.flat_coords())?;
    subset_weights(&partition, &values, cfg.alpha)
}

/// Weight sets of one kernel geometry on `source`, frequency-sorted.
pub fn kernel_weight_sets(
    source: &dyn ValueSource,
    grid: CartesianGrid,
    geometry: &KernelGeometry,
    cfg: &PiscoConfig,
    seed: u64,
) -> Result<Vec<WeightSet>> {
    let pairs = sample_pair_pool(grid, geometry, cfg, source.n_coils(), seed)?;
    pool_weights(pairs, source, cfg, true, seed)
}
