//! Completion of undersampled Cartesian k-space by direct optimisation of the
//! grid values under `L1 data consistency + lambda * residual consistency`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{normalize_for_metrics, psnr};
use crate::kspace::{
    ifft_recon_grid, CartesianGrid, CoilSensitivities, GridKSpace, MultiCoilKSpace, SamplingMask,
};
use crate::loss::{residual_gradient_from_values, PiscoConfig};
use crate::optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Epochs at the start with the consistency term switched off.
    pub precondition_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub pisco: PiscoConfig,
    pub seed: u64,
}

impl FitConfig {
    /// 500 epochs, 100 of them preconditioning, `lambda = 5e-4`, amsgrad.
    pub fn for_grid(n_fe: usize) -> Self {
        Self {
            lambda: 5e-4,
            epochs: 500,
            precondition_epochs: 100,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::AdamAmsgrad,
            pisco: PiscoConfig::for_grid(n_fe),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pisco.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.precondition_epochs > self.epochs {
            return Err(Error::invalid(format!(
                "precondition_epochs {} exceeds epochs {}",
                self.precondition_epochs, self.epochs
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitEpoch {
    pub epoch: usize,
    pub dc: f64,
    /// Zero while the consistency term is inactive.
    pub pisco: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub fitted: GridKSpace,
    /// Losses at the start of each epoch, in the units of the measurements.
    pub history: Vec<FitEpoch>,
}

/// Samples of `full` at the kept mask locations, in grid order.
pub fn undersample(full: &GridKSpace, mask: &SamplingMask, t: f64) -> Result<MultiCoilKSpace> {
    check_mask(full.grid, mask)?;
    let kept: Vec<usize> = (0..full.grid.len()).filter(|&i| mask.is_kept(i)).collect();
    let all = full.grid.coords(t);
    let coords = kept.iter().map(|&i| all[i]).collect();
    let mut values = Array2::zeros((kept.len(), full.n_coils()));
    for (row, &i) in kept.iter().enumerate() {
        values.row_mut(row).assign(&full.values.row(i));
    }
    MultiCoilKSpace::new(coords, values, full.grid.n_x)
}

fn check_mask(grid: CartesianGrid, mask: &SamplingMask) -> Result<()> {
    if mask.n_x() != grid.n_x || mask.n_y() != grid.n_y {
        return Err(Error::invalid(format!(
            "mask is {}x{} but the grid is {}x{}",
            mask.n_x(),
            mask.n_y(),
            grid.n_x,
            grid.n_y
        )));
    }
    Ok(())
}

/// Places measured samples on the mask grid with zeros elsewhere. Every kept
/// node must be measured exactly once; samples at unkept nodes are ignored.
pub fn zero_filled(measured: &MultiCoilKSpace, mask: &SamplingMask) -> Result<GridKSpace> {
    let grid = CartesianGrid::new(mask.n_x(), mask.n_y())?;
    let mut out = GridKSpace::zeros(grid, measured.n_coils());
    let mut seen = vec![false; grid.len()];
    for (i, c) in measured.coords.iter().enumerate() {
        let idx = grid
            .index_of(c)
            .ok_or_else(|| Error::invalid(format!("measured sample {i} at {c:?} is off the mask grid")))?;
        if !mask.is_kept(idx) {
            continue;
        }
        if seen[idx] {
            return Err(Error::invalid(format!("grid node {idx} measured twice")));
        }
        seen[idx] = true;
        out.values.row_mut(idx).assign(&measured.values.row(i));
    }
    let missing = (0..grid.len()).filter(|&i| mask.is_kept(i) && !seen[i]).count();
    if missing > 0 {
        return Err(Error::invalid(format!(
            "{missing} kept mask locations have no measurement"
        )));
    }
    Ok(out)
}

/// Mean complex L1 distance `|Re d| + |Im d|` over kept entries, with its
/// real-pair gradient.
fn dc_term(
    values: &Array2<Complex64>,
    target: &Array2<Complex64>,
    kept: &[usize],
) -> (f64, Array2<Complex64>) {
    let n_c = values.ncols();
    let scale = 1.0 / (kept.len() * n_c) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(values.raw_dim());
    for &i in kept {
        for c in 0..n_c {
            let d = values[[i, c]] - target[[i, c]];
            loss += d.re.abs() + d.im.abs();
            grad[[i, c]] = Complex64::new(sign(d.re), sign(d.im)) * scale;
        }
    }
    (loss * scale, grad)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Optimises every grid value starting from the zero-filled measurements.
///
/// Values are internally divided by the largest measured magnitude so the
/// learning rate is independent of the data scale. Each active epoch draws a
/// fresh subset partition with seed `seed * 1_000_003 + epoch`, alternating
/// the kernel orientation between epochs.
pub fn fit_kspace(
    measured: &MultiCoilKSpace,
    mask: &SamplingMask,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let start = zero_filled(measured, mask)?;
    let grid = start.grid;
    let n_c = start.n_coils();
    let kept: Vec<usize> = (0..grid.len()).filter(|&i| mask.is_kept(i)).collect();
    let scale = measured.max_magnitude();
    if !(scale > 0.0) {
        return Err(Error::invalid("measurements are all zero"));
    }
    let target = start.values.mapv(|v| v / scale);
    let mut values = target.clone();
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, 2 * values.len())?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (dc, mut grad) = dc_term(&values, &target, &kept);
        let mut pisco = 0.0;
        if config.lambda > 0.0 && epoch >= config.precondition_epochs {
            let orientation = if (epoch - config.precondition_epochs) % 2 == 0 {
                config.pisco.geometry.orientation
            } else {
                config.pisco.geometry.orientation.flipped()
            };
            let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
            let partition = config
                .pisco
                .sample_partition(grid, n_c, orientation, &[0.0], seed)?;
            let idx = start.indices_of(&partition.flat_coords())?;
            let mut gathered = Array2::zeros((idx.len(), n_c));
            for (row, &i) in idx.iter().enumerate() {
                gathered.row_mut(row).assign(&values.row(i));
            }
            let g = residual_gradient_from_values(
                &partition,
                &gathered,
                &config.pisco,
                config.pisco.gradient_mode,
            )?;
            pisco = g.loss;
            for (row, &i) in idx.iter().enumerate() {
                for c in 0..n_c {
                    grad[[i, c]] += g.cotangents[[row, c]] * config.lambda;
                }
            }
        }
        let total = dc + config.lambda * pisco;
        if !total.is_finite() || grad.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.push(FitEpoch {
            epoch,
            dc: dc * scale,
            pisco: pisco * scale,
            total: total * scale,
        });
        let params = values.as_slice_mut().expect("standard layout");
        opt.step_complex(params, grad.as_slice().expect("standard layout"))?;
    }
    let fitted = GridKSpace::new(grid, values.mapv(|v| v * scale))?;
    Ok(FitResult { fitted, history })
}

/// Final data-consistency loss of `fitted` against the measurements.
pub fn dc_loss(fitted: &GridKSpace, measured: &MultiCoilKSpace, mask: &SamplingMask) -> Result<f64> {
    let target = zero_filled(measured, mask)?;
    let kept: Vec<usize> = (0..target.grid.len()).filter(|&i| mask.is_kept(i)).collect();
    Ok(dc_term(&fitted.values, &target.values, &kept).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    /// `||fitted_u||^2 / ||reference_u||^2` over unsampled entries.
    pub recovered_fraction: f64,
    /// PSNR of the fitted reconstruction against the reference reconstruction.
    pub psnr: f64,
    /// Energy of the normalised difference image.
    pub difference_energy: f64,
}

pub fn fill_report(
    fitted: &GridKSpace,
    mask: &SamplingMask,
    reference: &GridKSpace,
    sens: &CoilSensitivities,
) -> Result<FillReport> {
    check_mask(fitted.grid, mask)?;
    if fitted.grid != reference.grid || fitted.n_coils() != reference.n_coils() {
        return Err(Error::invalid("fitted and reference k-space differ in shape"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (0..fitted.grid.len()).filter(|&i| !mask.is_kept(i)) {
        num += fitted.values.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>();
        den += reference.values.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    let recovered_fraction = if den > 0.0 { num / den } else { 1.0 };
    let a = normalize_for_metrics(&ifft_recon_grid(fitted, sens)?)?;
    let b = normalize_for_metrics(&ifft_recon_grid(reference, sens)?)?;
    Ok(FillReport {
        recovered_fraction,
        psnr: psnr(&a, &b)?,
        difference_energy: (&a - &b).mapv(|d| d * d).sum(),
    })
}
