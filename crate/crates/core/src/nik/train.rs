use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NikModel;
use crate::error::{Error, Result};
use crate::kspace::{ifft_recon_grid, CartesianGrid, CoilSensitivities, Coord, GridKSpace, Image, MultiCoilKSpace};
use crate::loss::{residual_gradient_from_values, PiscoConfig};
use crate::sampling::SubsetPartition;
use crate::optim::{Optimizer, OptimizerKind};

/// Acquired coordinates and their multi-coil values.
pub type AcquiredSet = MultiCoilKSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Consistency loss is active for epochs (1-based) strictly after this.
    pub e_pre: usize,
    pub lambda: f64,
    pub pisco: PiscoConfig,
    /// Relative to the median acquired magnitude.
    pub dc_epsilon: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 5000 epochs, batch 10k, lr 1e-5, consistency after epoch 1000.
    pub fn standard(n_fe: usize, lambda: f64) -> Self {
        Self {
            epochs: 5000,
            batch_size: 10_000,
            learning_rate: 1e-5,
            optimizer: OptimizerKind::AdamAmsgrad,
            e_pre: 1000,
            lambda,
            pisco: PiscoConfig::for_grid(n_fe),
            dc_epsilon: 1e-3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pisco.validate()?;
        if self.e_pre > self.epochs {
            return Err(Error::invalid(format!(
                "e_pre {} exceeds epochs {}",
                self.e_pre, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.dc_epsilon > 0.0) {
            return Err(Error::invalid("dc_epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainEpoch {
    /// 1-based.
    pub epoch: usize,
    pub dc: f64,
    /// Zero while the consistency term is inactive.
    pub pisco: f64,
}

/// Mean over entries of `|pred - target| / (|target| + epsilon)`.
pub fn dc_loss(pred: &Array2<Complex64>, target: &Array2<Complex64>, epsilon: f64) -> Result<f64> {
    Ok(dc_loss_grad(pred, target, epsilon)?.0)
}

/// [`dc_loss`] and its real-pair cotangent with respect to `pred`.
pub fn dc_loss_grad(
    pred: &Array2<Complex64>,
    target: &Array2<Complex64>,
    epsilon: f64,
) -> Result<(f64, Array2<Complex64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::invalid(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.dim(),
            target.dim()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    for ((p, t), g) in pred.iter().zip(target).zip(grad.iter_mut()) {
        let d = p - t;
        let w = 1.0 / (t.norm() + epsilon);
        let m = d.norm();
        loss += m * w;
        if m > 0.0 {
            *g = d / m * (w / n);
        }
    }
    Ok((loss / n, grad))
}

/// Distinct acquired frame times in ascending order.
pub fn frame_times(acquired: &AcquiredSet) -> Vec<f64> {
    let mut t: Vec<f64> = acquired.coords.iter().map(|c| c.t).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn gather(values: &Array2<Complex64>, rows: &[usize]) -> Array2<Complex64> {
    let mut out = Array2::zeros((rows.len(), values.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&values.row(i));
    }
    out
}

/// Consistency term of the training objective on one partition.
#[derive(Clone, Copy)]
pub struct Regularizer<'a> {
    pub partition: &'a SubsetPartition,
    pub pisco: &'a PiscoConfig,
    pub lambda: f64,
}

pub struct ObjectiveGradient {
    pub dc: f64,
    pub pisco: f64,
    /// Gradient of `dc + lambda * pisco` with respect to the parameters.
    pub grad: Vec<f64>,
}

/// Data-consistency loss on `(coords, targets)` plus the optional
/// consistency loss of the network's predictions on a partition, with the
/// parameter gradient. Consistency values are divided by the output scale
/// first; subset weights follow the configured gradient mode.
pub fn objective_gradient(
    model: &NikModel,
    coords: &[Coord],
    targets: &Array2<Complex64>,
    epsilon: f64,
    reg: Option<Regularizer<'_>>,
) -> Result<ObjectiveGradient> {
    let (pred, cache) = model.forward_cached(coords);
    let (dc, cot) = dc_loss_grad(&pred, targets, epsilon)?;
    let mut grad = model.backward(&cache, &cot)?;
    let mut pisco = 0.0;
    if let Some(r) = reg {
        let scale = model.arch.output_scale;
        let (values, cache) = model.forward_cached(&r.partition.flat_coords());
        let g = residual_gradient_from_values(
            r.partition,
            &values.mapv(|v| v / scale),
            r.pisco,
            r.pisco.gradient_mode,
        )?;
        pisco = g.loss;
        let pg = model.backward(&cache, &g.cotangents.mapv(|v| v * (r.lambda / scale)))?;
        for (a, b) in grad.iter_mut().zip(pg) {
            *a += b;
        }
    }
    Ok(ObjectiveGradient { dc, pisco, grad })
}

/// Fits `model` to the acquired samples, adding the residual consistency
/// loss of network predictions on `n_fe x n_fe` grid subsets after `e_pre`.
///
/// Consistency values are divided by the model's output scale, so `lambda`
/// weighs a loss on data normalised to the output scale. Epoch `e` draws its
/// consistency subsets with seed `seed * 1_000_003 + e`, at a time drawn
/// from the acquired frame times, and alternates the kernel orientation.
pub fn train(model: &mut NikModel, acquired: &AcquiredSet, config: &TrainConfig) -> Result<Vec<TrainEpoch>> {
    config.validate()?;
    if acquired.n_samples() == 0 {
        return Err(Error::InsufficientData {
            what: "acquired samples".into(),
            required: 1,
            available: 0,
        });
    }
    if acquired.n_coils() != model.arch.n_coils {
        return Err(Error::invalid(format!(
            "model has {} coils, data has {}",
            model.arch.n_coils,
            acquired.n_coils()
        )));
    }
    let eps = config.dc_epsilon * acquired.median_magnitude().max(f64::MIN_POSITIVE);
    let grid = CartesianGrid::new(acquired.n_fe, acquired.n_fe)?;
    let times = frame_times(acquired);
    let n_acq = acquired.n_samples();
    let batch = config.batch_size.min(n_acq);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, model.n_params())?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let rows: Vec<usize> = if batch == n_acq {
            (0..n_acq).collect()
        } else {
            let mut r = index::sample(&mut rng, n_acq, batch).into_vec();
            r.sort_unstable();
            r
        };
        let coords: Vec<Coord> = rows.iter().map(|&i| acquired.coords[i]).collect();
        let targets = gather(&acquired.values, &rows);
        let partition = if config.lambda > 0.0 && epoch > config.e_pre {
            let orientation = if (epoch - config.e_pre) % 2 == 1 {
                config.pisco.geometry.orientation
            } else {
                config.pisco.geometry.orientation.flipped()
            };
            let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
            Some(config.pisco.sample_partition(grid, model.arch.n_coils, orientation, &times, seed)?)
        } else {
            None
        };
        let reg = partition.as_ref().map(|p| Regularizer {
            partition: p,
            pisco: &config.pisco,
            lambda: config.lambda,
        });
        let ObjectiveGradient { dc, pisco, grad } = objective_gradient(model, &coords, &targets, eps, reg)?;
        let total = dc + config.lambda * pisco;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.push(TrainEpoch { epoch, dc, pisco });
        opt.step(&mut model.params, &grad)?;
    }
    Ok(history)
}

/// Network prediction on the full `n_x x n_y` grid at time `t`.
pub fn predict_grid(model: &NikModel, t: f64, n_x: usize, n_y: usize) -> Result<GridKSpace> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    let grid = CartesianGrid::new(n_x, n_y)?;
    GridKSpace::new(grid, model.forward(&grid.coords(t)))
}

/// Coil-combined image of the network's k-space at any time `t` in `[0, 1]`.
pub fn infer_frame(model: &NikModel, t: f64, n_x: usize, n_y: usize, sens: &CoilSensitivities) -> Result<Image> {
    ifft_recon_grid(&predict_grid(model, t, n_x, n_y)?, sens)
}
