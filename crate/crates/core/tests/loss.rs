use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use pisco_core::kspace::*;
use pisco_core::loss::*;
use pisco_core::sampling::{KernelGeometry, Orientation, PatchPair, SubsetPartition};
use pisco_core::solver::{solve_weights, SubsetSystem, WeightSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dummy_partition(n_s: usize, n_m: usize, n_n: usize) -> SubsetPartition {
    let pair = |i: usize| PatchPair {
        target: Coord::new(0.01 * i as f64, 0.0, 0.0),
        neighbors: vec![Coord::new(0.0, 0.1, 0.0); n_n],
    };
    SubsetPartition {
        subsets: (0..n_s).map(|_| (0..n_m).map(pair).collect()).collect(),
        pairs_per_subset: n_m,
        n_neighbors: n_n,
    }
}

fn random_values(rng: &mut impl Rng, rows: usize, n_c: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, n_c), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn cfg(alpha: f64) -> PiscoConfig {
    let mut c = PiscoConfig::for_grid(64);
    c.alpha = alpha;
    c
}

/// Independent evaluation of `(1/N_s) sum ||P W_s - T||_F` with frozen weights.
fn frozen_loss(part: &SubsetPartition, values: &Array2<Complex64>, weights: &[DMatrix<Complex64>]) -> f64 {
    let stride = part.rows_per_subset();
    let mut total = 0.0;
    for (s, w) in weights.iter().enumerate() {
        let sys = SubsetSystem::from_flat(values, s * stride, part.pairs_per_subset, part.n_neighbors, 0.0);
        let mut sq = 0.0;
        for i in 0..sys.n_pairs() {
            for c in 0..sys.n_coils() {
                let mut pred = Complex64::new(0.0, 0.0);
                for j in 0..sys.n_unknowns() {
                    pred += sys.patches[(i, j)] * w[(j, c)];
                }
                sq += (pred - sys.targets[(i, c)]).norm_sqr();
            }
        }
        total += sq.sqrt();
    }
    total / weights.len() as f64
}

fn central_difference(
    values: &Array2<Complex64>,
    f: impl Fn(&Array2<Complex64>) -> f64,
    h: f64,
) -> Array2<Complex64> {
    let mut out = Array2::zeros(values.raw_dim());
    let mut v = values.clone();
    for idx in 0..values.len() {
        let (r, c) = (idx / values.ncols(), idx % values.ncols());
        let base = v[[r, c]];
        let mut parts = [0.0; 2];
        for (k, dir) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)].iter().enumerate() {
            v[[r, c]] = base + dir;
            let plus = f(&v);
            v[[r, c]] = base - dir;
            let minus = f(&v);
            parts[k] = (plus - minus) / (2.0 * h);
        }
        v[[r, c]] = base;
        out[[r, c]] = Complex64::new(parts[0], parts[1]);
    }
    out
}

fn max_rel(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    diff / b.iter().map(|y| y.norm()).fold(0.0, f64::max)
}

#[test]
fn fixed_weight_gradient_matches_finite_differences() {
    for (seed, n_c) in [(1u64, 1usize), (2, 2), (3, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_n = 6;
        let n_m = if n_c == 1 { 10 } else { 27 };
        let part = dummy_partition(2, n_m, n_n);
        let values = random_values(&mut rng, part.len() * part.rows_per_subset(), n_c);
        let c = cfg(1e-4);
        let grad = residual_gradient_from_values(&part, &values, &c, GradientMode::FixedWeights).unwrap();
        let weights: Vec<_> = subset_weights(&part, &values, c.alpha)
            .unwrap()
            .into_iter()
            .map(|w| w.weights)
            .collect();
        assert!((frozen_loss(&part, &values, &weights) - grad.loss).abs() < 1e-12);
        let fd = central_difference(&values, |v| frozen_loss(&part, v, &weights), 1e-4);
        let err = max_rel(&grad.cotangents, &fd);
        assert!(err <= 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn through_solve_gradient_matches_full_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let part = dummy_partition(2, 20, 4);
    let values = random_values(&mut rng, part.len() * part.rows_per_subset(), 2);
    // a large alpha makes the weight dependence visible
    let c = cfg(0.5);
    let grad = residual_gradient_from_values(&part, &values, &c, GradientMode::ThroughSolve).unwrap();
    let fd = central_difference(&values, |v| residual_loss_from_values(&part, v, &c).unwrap(), 1e-5);
    let err = max_rel(&grad.cotangents, &fd);
    assert!(err <= 1e-5, "relative error {err}");
    let fixed = residual_gradient_from_values(&part, &values, &c, GradientMode::FixedWeights).unwrap();
    assert!(max_rel(&fixed.cotangents, &fd) > 1e-3);
}

#[test]
fn both_modes_descend() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let part = dummy_partition(3, 15, 6);
    let values = random_values(&mut rng, part.len() * part.rows_per_subset(), 2);
    let c = cfg(1e-2);
    let l0 = residual_loss_from_values(&part, &values, &c).unwrap();
    for mode in [GradientMode::FixedWeights, GradientMode::ThroughSolve] {
        let g = residual_gradient_from_values(&part, &values, &c, mode).unwrap();
        let step = &values - &(&g.cotangents * Complex64::new(1e-3, 0.0));
        let l1 = residual_loss_from_values(&part, &step, &c).unwrap();
        assert!(l1 < l0, "{mode:?}: {l1} !< {l0}");
    }
}

/// Values where every target is exactly a fixed combination of its neighbours.
fn consistent_values(rng: &mut impl Rng, part: &SubsetPartition, n_c: usize) -> Array2<Complex64> {
    let n_n = part.n_neighbors;
    let w = DMatrix::from_fn(n_n * n_c, n_c, |_, _| {
        Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
    });
    let mut values = random_values(rng, part.len() * part.rows_per_subset(), n_c);
    for p in 0..part.len() * part.pairs_per_subset {
        let row = p * (1 + n_n);
        for c in 0..n_c {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_n {
                for cc in 0..n_c {
                    acc += values[[row + 1 + n, cc]] * w[(n * n_c + cc, c)];
                }
            }
            values[[row, c]] = acc;
        }
    }
    values
}

#[test]
fn consistent_values_have_no_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let part = dummy_partition(3, 30, 3);
    let values = consistent_values(&mut rng, &part, 2);
    let t_norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let loss = residual_loss_from_values(&part, &values, &cfg(1e-8)).unwrap();
    assert!(loss <= 1e-6 * t_norm, "loss {loss}");
    // the Frobenius norm has a kink at zero; exact round-off residuals need alpha = 0
    let c = cfg(0.0);
    let g = residual_gradient_from_values(&part, &values, &c, GradientMode::FixedWeights).unwrap();
    let gnorm = g.cotangents.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(gnorm <= 1e-8 * 1e3, "gradient norm {gnorm}");
}

#[test]
fn single_subset_loss_is_its_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let part = dummy_partition(1, 12, 4);
    let values = random_values(&mut rng, part.rows_per_subset(), 2);
    let c = cfg(1e-4);
    let sys = SubsetSystem::from_flat(&values, 0, 12, 4, 0.0);
    let w = solve_weights(&sys, 1e-4).unwrap();
    assert!((residual_loss_from_values(&part, &values, &c).unwrap() - w.residual_fro).abs() < 1e-12);
}

#[test]
fn residual_is_homogeneous_without_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let part = dummy_partition(2, 20, 3);
    let values = random_values(&mut rng, part.len() * part.rows_per_subset(), 2);
    let c = cfg(0.0);
    let scale = Complex64::new(-1.7, 2.3);
    let l = residual_loss_from_values(&part, &values, &c).unwrap();
    let ls = residual_loss_from_values(&part, &(&values * scale), &c).unwrap();
    assert!((ls - scale.norm() * l).abs() <= 1e-9 * ls);
}

fn ws(m: DMatrix<Complex64>) -> WeightSet {
    WeightSet { weights: m, alpha: 0.0, residual_fro: 0.0 }
}

#[test]
fn distance_loss_cases() {
    let a = DMatrix::from_element(3, 2, Complex64::new(0.5, -0.5));
    assert_eq!(distance_loss(&[ws(a.clone()), ws(a.clone())]).unwrap(), 0.0);
    let mut b = a.clone();
    b[(1, 0)] += Complex64::new(1.0, 0.0);
    assert!((distance_loss(&[ws(a.clone()), ws(b.clone())]).unwrap() - 0.5).abs() < 1e-15);
    assert!(distance_loss(&[ws(a.clone())]).is_err());
    assert!(distance_loss(&[ws(a), ws(DMatrix::zeros(2, 2))]).is_err());
}

#[test]
fn distance_loss_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sets: Vec<WeightSet> = (0..3)
        .map(|_| {
            ws(DMatrix::from_fn(4, 2, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }))
        })
        .collect();
    let mut brute = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                for (x, y) in sets[i].weights.iter().zip(sets[j].weights.iter()) {
                    brute += (x.re - y.re).abs() + (x.im - y.im).abs();
                }
            }
        }
    }
    brute /= 9.0;
    assert!((distance_loss(&sets).unwrap() - brute).abs() < 1e-12);
    let rev: Vec<_> = sets.iter().rev().cloned().collect();
    assert!((distance_loss(&rev).unwrap() - brute).abs() < 1e-12);
}

#[test]
fn combined_objective_cases() {
    assert_eq!(combined_objective(0.37, 12.0, 0.0).unwrap(), 0.37);
    assert!((combined_objective(1.0, 2.0, 0.05).unwrap() - 1.1).abs() < 1e-15);
    assert_eq!(combined_objective(0.0, 0.0, 0.5).unwrap(), 0.0);
    assert!(combined_objective(1.0, 1.0, -0.1).is_err());
}

fn phantom(n: usize, n_c: usize) -> (Image, CoilSensitivities) {
    let img = render_phantom(&PhantomSpec::cardiac(n, n_c), 0.0).unwrap();
    (img, simulate_sensitivities(n, n, n_c).unwrap())
}

#[test]
fn ideal_kspace_is_more_consistent_than_noisy() {
    let n = 48;
    let (img, sens) = phantom(n, 4);
    let clean = forward_grid(&img, &sens).unwrap();
    let c = PiscoConfig { n_s_min: 10, ..PiscoConfig::for_grid(n) };
    let part = c
        .sample_partition(clean.grid, 4, Orientation::YMajor, &[0.0], 1)
        .unwrap();
    let l_clean = residual_loss(&part, &clean, &c).unwrap();
    let noisy_k = add_kspace_noise(&clean.to_kspace(0.0), 0.05 * clean.to_kspace(0.0).median_magnitude(), 2).unwrap();
    let noisy = GridKSpace::from_kspace(&noisy_k, clean.grid).unwrap();
    let l_noisy = residual_loss(&part, &noisy, &c).unwrap();
    assert!(l_clean < l_noisy, "{l_clean} !< {l_noisy}");
}

#[test]
fn zero_noise_sweep_normalises_to_one() {
    let n = 32;
    let (img, sens) = phantom(n, 2);
    let c = PiscoConfig { n_s_min: 4, ..PiscoConfig::for_grid(n) };
    let curve = consistency_sweep(&SweepBase { image: &img, sens: &sens }, &[0.0], NoiseDomain::Kspace, &c, &[1]).unwrap();
    assert_eq!(curve.normalized, vec![1.0]);
    assert!(consistency_sweep(&SweepBase { image: &img, sens: &sens }, &[0.1, 0.0], NoiseDomain::Kspace, &c, &[1]).is_err());
}

#[test]
fn partition_sampling_respects_exclusion() {
    let c = PiscoConfig::for_grid(64);
    let grid = CartesianGrid::new(64, 64).unwrap();
    let part = c.sample_partition(grid, 4, Orientation::XMajor, &[0.0, 0.5, 1.0], 3).unwrap();
    assert_eq!(part.len(), 20);
    assert_eq!(part.pairs_per_subset, 106);
    let r = c.exclusion_radius;
    let d = c.geometry.delta;
    for s in &part.subsets {
        for p in s {
            assert!(p.target.radius() > r);
            assert!(p.neighbors.iter().all(|q| q.radius() > r - d * 2f64.sqrt()));
            assert!(p.neighbors.iter().all(|q| q.t == s[0].target.t));
        }
    }
    let geometry = KernelGeometry::cartesian(3, 2, d, Orientation::XMajor);
    assert_eq!(part.subsets[0][0].neighbors.len(), geometry.n_neighbors());
}
