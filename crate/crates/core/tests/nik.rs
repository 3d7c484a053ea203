use ndarray::Array2;
use num_complex::Complex64;
use pisco_core::kspace::*;
use pisco_core::loss::{subset_weights, residual_loss_from_values};
use pisco_core::nik::*;
use pisco_core::sampling::SubsetPartition;
use pisco_core::solver::SubsetSystem;
use pisco_core::{GradientMode, KernelGeometry, Orientation, PiscoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_arch() -> NikArchitecture {
    NikArchitecture {
        n_features: 4,
        sigma: 2.0,
        hidden: 8,
        n_layers: 2,
        omega: 20.0,
        n_coils: 1,
        output_scale: 1.5,
    }
}

fn tiny_data(rng: &mut ChaCha8Rng) -> (Vec<Coord>, Array2<Complex64>) {
    let coords: Vec<Coord> = (0..10)
        .map(|_| Coord::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0))
        .collect();
    let targets = Array2::from_shape_fn((10, 1), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    (coords, targets)
}

fn tiny_pisco() -> PiscoConfig {
    let n = 16;
    let mut cfg = PiscoConfig::for_grid(n);
    cfg.geometry = KernelGeometry::cartesian(3, 2, 1.0 / n as f64, Orientation::YMajor);
    cfg.n_s_min = 2;
    cfg.exclusion_radius = 0.0;
    cfg
}

fn partition(cfg: &PiscoConfig) -> SubsetPartition {
    cfg.sample_partition(CartesianGrid::new(16, 16).unwrap(), 1, Orientation::YMajor, &[0.0], 5)
        .unwrap()
}

/// Consistency loss with every subset's weights frozen at `frozen`.
fn frozen_residual(
    model: &NikModel,
    part: &SubsetPartition,
    frozen: &[pisco_core::WeightSet],
) -> f64 {
    let values = model.forward(&part.flat_coords()).mapv(|v| v / model.arch.output_scale);
    let stride = part.rows_per_subset();
    let mut total = 0.0;
    for (s, w) in frozen.iter().enumerate() {
        let sys = SubsetSystem::from_flat(&values, s * stride, part.pairs_per_subset, part.n_neighbors, 0.0);
        total += sys.residual(&w.weights).norm();
    }
    total / frozen.len() as f64
}

fn check_gradient(mode: GradientMode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (coords, targets) = tiny_data(&mut rng);
    let model = NikModel::new(tiny_arch(), 11).unwrap();
    let mut cfg = tiny_pisco();
    cfg.gradient_mode = mode;
    let part = partition(&cfg);
    let lambda = 0.7;
    let eps = 1e-3;
    let reg = Regularizer { partition: &part, pisco: &cfg, lambda };
    let g = objective_gradient(&model, &coords, &targets, eps, Some(reg)).unwrap();
    let values = model.forward(&part.flat_coords()).mapv(|v| v / model.arch.output_scale);
    let frozen = subset_weights(&part, &values, cfg.alpha).unwrap();
    let objective = |m: &NikModel| {
        let dc = dc_loss(&m.forward(&coords), &targets, eps).unwrap();
        let pisco = match mode {
            GradientMode::FixedWeights => frozen_residual(m, &part, &frozen),
            GradientMode::ThroughSolve => {
                let v = m.forward(&part.flat_coords()).mapv(|v| v / m.arch.output_scale);
                residual_loss_from_values(&part, &v, &cfg).unwrap()
            }
        };
        dc + lambda * pisco
    };
    let h = 1e-6;
    let mut max_err = 0.0f64;
    let mut max_fd = 0.0f64;
    for i in 0..model.n_params() {
        let mut plus = model.clone();
        plus.params[i] += h;
        let mut minus = model.clone();
        minus.params[i] -= h;
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        max_err = max_err.max((fd - g.grad[i]).abs());
        max_fd = max_fd.max(fd.abs());
    }
    max_err / max_fd
}

#[test]
fn fixed_weight_parameter_gradient_matches_finite_differences() {
    let rel = check_gradient(GradientMode::FixedWeights);
    assert!(rel <= 1e-3, "relative error {rel}");
}

#[test]
fn through_solve_parameter_gradient_matches_finite_differences() {
    let rel = check_gradient(GradientMode::ThroughSolve);
    assert!(rel <= 1e-3, "relative error {rel}");
}

#[test]
fn dc_only_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (coords, targets) = tiny_data(&mut rng);
    let mut arch = tiny_arch();
    arch.n_layers = 4;
    arch.n_coils = 2;
    let targets = ndarray::concatenate![ndarray::Axis(1), targets, targets.mapv(|v| v * 0.5)];
    let model = NikModel::new(arch, 2).unwrap();
    let g = objective_gradient(&model, &coords, &targets, 1e-3, None).unwrap();
    let h = 1e-6;
    let mut max_err = 0.0f64;
    let mut max_fd = 0.0f64;
    for i in 0..model.n_params() {
        let mut plus = model.clone();
        plus.params[i] += h;
        let mut minus = model.clone();
        minus.params[i] -= h;
        let fd = (dc_loss(&plus.forward(&coords), &targets, 1e-3).unwrap()
            - dc_loss(&minus.forward(&coords), &targets, 1e-3).unwrap())
            / (2.0 * h);
        max_err = max_err.max((fd - g.grad[i]).abs());
        max_fd = max_fd.max(fd.abs());
    }
    assert!(max_err / max_fd <= 1e-3, "relative error {}", max_err / max_fd);
}

#[test]
fn encoding_matches_its_definition() {
    let enc = FeatureEncoding::new(5, 2.0, 9).unwrap();
    let c = Coord::new(0.2, -0.3, 0.7);
    let e = enc.encode(&c);
    for i in 0..5 {
        let phase = 2.0 * std::f64::consts::PI * (enc.b[[i, 0]] * 0.2 - enc.b[[i, 1]] * 0.3 + enc.b[[i, 2]] * 0.7);
        assert!((e[i] - phase.sin()).abs() < 1e-12);
        assert!((e[5 + i] - phase.cos()).abs() < 1e-12);
    }
    assert_eq!(enc, FeatureEncoding::new(5, 2.0, 9).unwrap());
    assert_ne!(enc, FeatureEncoding::new(5, 2.0, 10).unwrap());
}

#[test]
fn model_output_is_scaled() {
    let mut arch = tiny_arch();
    let a = NikModel::new(arch.clone(), 4).unwrap();
    arch.output_scale *= 2.0;
    let b = NikModel::new(arch, 4).unwrap();
    let coords = [Coord::new(0.1, 0.2, 0.3)];
    let (ya, yb) = (a.forward(&coords), b.forward(&coords));
    assert!((ya[[0, 0]] * 2.0 - yb[[0, 0]]).norm() < 1e-12);
}

fn tiny_acquisition() -> MultiCoilKSpace {
    let n = 16;
    let spec = PhantomSpec::cardiac(n, 2);
    let sens = simulate_sensitivities(n, n, 2).unwrap();
    let coords = make_radial_trajectory(&Trajectory::golden(8, n), 4).unwrap();
    simulate_acquisition(&spec, &sens, &coords).unwrap()
}

fn tiny_run(lambda: f64, epochs: usize) -> (NikModel, Vec<TrainEpoch>) {
    let acq = tiny_acquisition();
    let mut arch = NikArchitecture::standard(2, 1.0);
    arch.n_features = 8;
    arch.hidden = 16;
    arch.output_scale = acq.max_magnitude();
    let mut model = NikModel::new(arch, 1).unwrap();
    let mut cfg = TrainConfig::standard(16, lambda);
    cfg.epochs = epochs;
    cfg.e_pre = 5;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 100;
    cfg.pisco.n_s_min = 3;
    cfg.pisco.exclusion_radius = 1.5 / 16.0;
    let h = train(&mut model, &acq, &cfg).unwrap();
    (model, h)
}

#[test]
fn training_is_deterministic() {
    let (a, ha) = tiny_run(0.1, 10);
    let (b, hb) = tiny_run(0.1, 10);
    assert_eq!(ha, hb);
    assert_eq!(a.params, b.params);
    assert!(ha[..5].iter().all(|e| e.pisco == 0.0));
    assert!(ha[5..].iter().all(|e| e.pisco > 0.0));
    assert_eq!(ha[0].epoch, 1);
}

#[test]
fn data_consistency_drops_without_regulariser() {
    let (_, h) = tiny_run(0.0, 60);
    assert!(h.last().unwrap().dc < h[0].dc, "{} !< {}", h.last().unwrap().dc, h[0].dc);
}

#[test]
fn prediction_rejects_times_outside_the_unit_interval() {
    let model = NikModel::new(tiny_arch(), 1).unwrap();
    assert!(predict_grid(&model, 1.2, 8, 8).is_err());
    assert_eq!(predict_grid(&model, 0.45, 8, 8).unwrap().values.dim(), (64, 1));
}

#[test]
fn coil_mismatch_is_rejected() {
    let acq = tiny_acquisition();
    let mut model = NikModel::new(tiny_arch(), 1).unwrap();
    let cfg = TrainConfig::standard(16, 0.0);
    assert!(matches!(train(&mut model, &acq, &cfg), Err(pisco_core::Error::InvalidArgument(_))));
}
