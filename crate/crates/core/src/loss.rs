//! Consistency measures built on subset weights, and their gradients.
//!
//! Gradients use the real-pair convention: the cotangent of a real loss `L`
//! with respect to a complex value `z` is `dL/dRe(z) + i dL/dIm(z)`. A
//! descent step is therefore `z -= lr * g`.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{
    add_image_noise, add_kspace_noise, forward_grid, CartesianGrid, CoilSensitivities, GridKSpace,
    Image, NoiseDomain, ValueSource,
};
use crate::sampling::{
    pairs_per_subset, sample_targets, sort_and_partition, KernelGeometry, Orientation,
    SubsetPartition,
};
use crate::solver::{solve_with_factor, CMatrix, SubsetSystem, WeightSet, DEFAULT_ALPHA, DEFAULT_F_OD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Residual,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Subset weights are treated as constants of the current values.
    FixedWeights,
    /// Also differentiates the weights through the normal equations.
    ThroughSolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiscoConfig {
    pub geometry: KernelGeometry,
    pub alpha: f64,
    pub f_od: f64,
    pub n_s_min: usize,
    pub exclusion_radius: f64,
    pub lambda: f64,
    pub measure: Measure,
    pub gradient_mode: GradientMode,
    /// Divide each subset residual by `sqrt(N_m * N_c)`.
    pub normalize_entries: bool,
}

impl PiscoConfig {
    /// Cartesian 3x2 kernel with `delta = 2/n_fe` and centre exclusion `10/n_fe`.
    pub fn for_grid(n_fe: usize) -> Self {
        let n = n_fe as f64;
        Self {
            geometry: KernelGeometry::cartesian(3, 2, 2.0 / n, Orientation::YMajor),
            alpha: DEFAULT_ALPHA,
            f_od: DEFAULT_F_OD,
            n_s_min: 20,
            exclusion_radius: 10.0 / n,
            lambda: 0.0,
            measure: Measure::Residual,
            gradient_mode: GradientMode::FixedWeights,
            normalize_entries: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.f_od > 1.0) {
            return Err(Error::invalid(format!("f_od must exceed 1, got {}", self.f_od)));
        }
        if self.n_s_min == 0 {
            return Err(Error::invalid("n_s_min must be at least 1"));
        }
        Ok(())
    }

    pub fn pairs_per_subset(&self, n_coils: usize) -> Result<usize> {
        pairs_per_subset(self.geometry.n_neighbors(), n_coils, self.f_od)
    }

    /// Samples `n_s_min * N_m` grid targets at time `t` (the default number of
    /// targets per evaluation) and partitions them by centre distance.
    pub fn sample_partition(
        &self,
        grid: CartesianGrid,
        n_coils: usize,
        orientation: Orientation,
        t_values: &[f64],
        seed: u64,
    ) -> Result<SubsetPartition> {
        let geometry = self.geometry.with_orientation(orientation);
        let n_m = self.pairs_per_subset(n_coils)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(self.n_s_min * n_m);
        // one time point per block so that every block fills whole subsets
        for _ in 0..self.n_s_min {
            let t = t_values[rand::Rng::random_range(&mut rng, 0..t_values.len().max(1))];
            let targets = sample_targets(
                grid,
                n_m,
                &[t],
                &mut rng,
                self.exclusion_radius,
                geometry.extent(),
            )?;
            pairs.extend(geometry.pairs(&targets)?);
        }
        sort_and_partition(pairs, n_coils, self.f_od, self.n_s_min)
    }
}

struct SubsetResult {
    residual: f64,
    weights: CMatrix,
    /// `(G_T, G_P)` cotangents when requested.
    grads: Option<(CMatrix, CMatrix)>,
}

fn check_values(partition: &SubsetPartition, values: &Array2<Complex64>) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::invalid("empty partition"));
    }
    let rows = partition.len() * partition.rows_per_subset();
    if values.nrows() != rows {
        return Err(Error::invalid(format!(
            "partition references {rows} coordinates but {} value rows were given",
            values.nrows()
        )));
    }
    Ok(())
}

/// Relative residual below which a subset counts as exactly consistent.
const ZERO_RESIDUAL_RTOL: f64 = 1e-10;

fn solve_subsets(
    partition: &SubsetPartition,
    values: &Array2<Complex64>,
    alpha: f64,
    normalize: bool,
    mode: Option<GradientMode>,
) -> Result<Vec<SubsetResult>> {
    check_values(partition, values)?;
    let stride = partition.rows_per_subset();
    let n_s = partition.len() as f64;
    (0..partition.len())
        .into_par_iter()
        .map(|s| {
            let sys = SubsetSystem::from_flat(
                values,
                s * stride,
                partition.pairs_per_subset,
                partition.n_neighbors,
                partition.subsets[s][0].target.t,
            );
            let (w, factor) = solve_with_factor(&sys, alpha).map_err(|e| Error::Subset {
                index: s,
                source: Box::new(e),
            })?;
            let r = sys.residual(&w);
            let norm = r.norm();
            // ||R|| is not differentiable at zero; residuals at round-off level
            // get the zero subgradient.
            let floor = ZERO_RESIDUAL_RTOL * sys.targets.norm().max(f64::MIN_POSITIVE);
            let entry_scale = if normalize {
                1.0 / ((sys.n_pairs() * sys.n_coils()) as f64).sqrt()
            } else {
                1.0
            };
            let grads = match mode {
                Some(mode) if norm > floor => {
                    let k = entry_scale / (n_s * norm);
                    let mut g_t = &r * Complex64::new(-k, 0.0);
                    let mut g_p = &r * w.adjoint() * Complex64::new(k, 0.0);
                    if mode == GradientMode::ThroughSolve {
                        let x_w = sys.patches.adjoint() * &r * Complex64::new(k, 0.0);
                        let lam = factor.solve(&x_w).map_err(|e| Error::Subset {
                            index: s,
                            source: Box::new(e),
                        })?;
                        g_t += &sys.patches * &lam;
                        g_p -= &r * lam.adjoint() + &sys.patches * &lam * w.adjoint();
                    }
                    Some((g_t, g_p))
                }
                Some(_) => Some((
                    CMatrix::zeros(sys.n_pairs(), sys.n_coils()),
                    CMatrix::zeros(sys.n_pairs(), sys.n_unknowns()),
                )),
                None => None,
            };
            Ok(SubsetResult {
                residual: norm * entry_scale,
                weights: w,
                grads,
            })
        })
        .collect()
}

/// Mean subset residual `(1/N_s) sum_s ||P_s W_s - T_s||_F` from values laid
/// out as [`SubsetPartition::flat_coords`].
pub fn residual_loss_from_values(
    partition: &SubsetPartition,
    values: &Array2<Complex64>,
    cfg: &PiscoConfig,
) -> Result<f64> {
    let res = solve_subsets(partition, values, cfg.alpha, cfg.normalize_entries, None)?;
    Ok(res.iter().map(|r| r.residual).sum::<f64>() / res.len() as f64)
}

/// Residual consistency loss of the values provided by `source`.
pub fn residual_loss(
    partition: &SubsetPartition,
    source: &dyn ValueSource,
    cfg: &PiscoConfig,
) -> Result<f64> {
    let values = source.values_at(&partition.flat_coords())?;
    residual_loss_from_values(partition, &values, cfg)
}

/// Weight sets for every subset, in subset order.
pub fn subset_weights(
    partition: &SubsetPartition,
    values: &Array2<Complex64>,
    alpha: f64,
) -> Result<Vec<WeightSet>> {
    Ok(solve_subsets(partition, values, alpha, false, None)?
        .into_iter()
        .map(|r| WeightSet {
            weights: r.weights,
            alpha,
            residual_fro: r.residual,
        })
        .collect())
}

fn complex_l1(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.re.abs() + v.im.abs()).sum()
}

/// `(1/N_s^2) sum_i sum_{j != i} (||Re(W_i - W_j)||_1 + ||Im(W_i - W_j)||_1)`.
pub fn distance_loss(weight_sets: &[WeightSet]) -> Result<f64> {
    if weight_sets.len() < 2 {
        return Err(Error::invalid("distance loss needs at least two weight sets"));
    }
    let shape = weight_sets[0].weights.shape();
    if weight_sets.iter().any(|w| w.weights.shape() != shape) {
        return Err(Error::invalid("weight sets differ in shape"));
    }
    let n = weight_sets.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            // both ordered pairs contribute the same amount
            total += 2.0 * complex_l1(&(&weight_sets[i].weights - &weight_sets[j].weights));
        }
    }
    Ok(total / (n * n) as f64)
}

/// Loss value plus one cotangent per referenced coordinate and coil.
#[derive(Debug, Clone)]
pub struct PiscoGradient {
    pub loss: f64,
    /// Rows aligned with [`SubsetPartition::flat_coords`].
    pub cotangents: Array2<Complex64>,
}

/// Gradient of [`residual_loss_from_values`] with respect to every value row.
pub fn residual_gradient_from_values(
    partition: &SubsetPartition,
    values: &Array2<Complex64>,
    cfg: &PiscoConfig,
    mode: GradientMode,
) -> Result<PiscoGradient> {
    let res = solve_subsets(partition, values, cfg.alpha, cfg.normalize_entries, Some(mode))?;
    let stride = partition.rows_per_subset();
    let n_c = values.ncols();
    let mut cot = Array2::<Complex64>::zeros(values.raw_dim());
    for (s, r) in res.iter().enumerate() {
        let (g_t, g_p) = r.grads.as_ref().expect("gradients requested");
        for i in 0..partition.pairs_per_subset {
            let row = s * stride + i * (1 + partition.n_neighbors);
            for c in 0..n_c {
                cot[[row, c]] += g_t[(i, c)];
            }
            for n in 0..partition.n_neighbors {
                for c in 0..n_c {
                    cot[[row + 1 + n, c]] += g_p[(i, n * n_c + c)];
                }
            }
        }
    }
    let loss = res.iter().map(|r| r.residual).sum::<f64>() / res.len() as f64;
    Ok(PiscoGradient {
        loss,
        cotangents: cot,
    })
}

/// Evaluates `source` on the partition and returns loss plus cotangents.
pub fn pisco_gradient(
    partition: &SubsetPartition,
    source: &dyn ValueSource,
    cfg: &PiscoConfig,
    mode: GradientMode,
) -> Result<PiscoGradient> {
    let values = source.values_at(&partition.flat_coords())?;
    residual_gradient_from_values(partition, &values, cfg, mode)
}

/// `dc + lambda * pisco`.
pub fn combined_objective(dc_loss: f64, pisco_loss: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(dc_loss);
    }
    Ok(dc_loss + lambda * pisco_loss)
}

/// Evaluates the configured measure on one partition.
pub fn evaluate_measure(
    partition: &SubsetPartition,
    values: &Array2<Complex64>,
    cfg: &PiscoConfig,
) -> Result<f64> {
    match cfg.measure {
        Measure::Residual => residual_loss_from_values(partition, values, cfg),
        Measure::Distance => distance_loss(&subset_weights(partition, values, cfg.alpha)?),
    }
}

/// Noise-free object and coil maps a sweep corrupts.
pub struct SweepBase<'a> {
    pub image: &'a Image,
    pub sens: &'a CoilSensitivities,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub seed: u64,
    pub raw_loss: f64,
    pub normalized_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub sigmas: Vec<f64>,
    /// Mean over seeds divided by the largest mean.
    pub normalized: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

/// Loss of noise-corrupted versions of `base` as a function of noise level.
///
/// For each seed, one subset layout is sampled and reused across all noise
/// levels, so differences along the curve come from the noise only. Noise
/// for `(seed, level i)` uses seed `seed * 1000 + i`.
pub fn consistency_sweep(
    base: &SweepBase<'_>,
    sigmas: &[f64],
    domain: NoiseDomain,
    cfg: &PiscoConfig,
    seeds: &[u64],
) -> Result<SweepCurve> {
    if sigmas.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one sigma and one seed"));
    }
    if sigmas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("sigmas must be sorted ascending"));
    }
    cfg.validate()?;
    let clean = forward_grid(base.image, base.sens)?;
    let grid = clean.grid;
    let n_c = clean.n_coils();
    let mut points = Vec::with_capacity(sigmas.len() * seeds.len());
    for &seed in seeds {
        let partition =
            cfg.sample_partition(grid, n_c, cfg.geometry.orientation, &[0.0], seed)?;
        let coords = partition.flat_coords();
        for (i, &sigma) in sigmas.iter().enumerate() {
            let noise_seed = seed.wrapping_mul(1000).wrapping_add(i as u64);
            let noisy: GridKSpace = match domain {
                NoiseDomain::Kspace => {
                    let mut k = clean.clone();
                    k.values = add_kspace_noise(&clean.to_kspace(0.0), sigma, noise_seed)?.values;
                    k
                }
                NoiseDomain::Image => {
                    forward_grid(&add_image_noise(base.image, sigma, noise_seed)?, base.sens)?
                }
            };
            let values = noisy.values_at(&coords)?;
            points.push(SweepPoint {
                sigma,
                seed,
                raw_loss: evaluate_measure(&partition, &values, cfg)?,
                normalized_loss: 0.0,
            });
        }
    }
    let means: Vec<f64> = (0..sigmas.len())
        .map(|i| {
            points
                .iter()
                .skip(i)
                .step_by(sigmas.len())
                .map(|p| p.raw_loss)
                .sum::<f64>()
                / seeds.len() as f64
        })
        .collect();
    let max = means.iter().cloned().fold(0.0, f64::max);
    let norm = |v: f64| if max > 0.0 { v / max } else { 0.0 };
    for p in points.iter_mut() {
        p.normalized_loss = norm(p.raw_loss);
    }
    Ok(SweepCurve {
        sigmas: sigmas.to_vec(),
        normalized: means.into_iter().map(norm).collect(),
        points,
    })
}
