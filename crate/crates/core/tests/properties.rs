use approx::assert_relative_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use pisco_core::eval::{percentile, spearman};
use pisco_core::kspace::*;
use pisco_core::solver::{solve_weights, SubsetSystem};
use pisco_core::{KernelGeometry, Orientation, PiscoConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_c(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_systems_are_solved(seed in any::<u64>(), n_c in 1usize..4, n_n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_m = 2 * n_n * n_c + 3;
        let p = DMatrix::from_fn(n_m, n_n * n_c, |_, _| rand_c(&mut rng));
        let w = DMatrix::from_fn(n_n * n_c, n_c, |_, _| rand_c(&mut rng));
        let sys = SubsetSystem { targets: &p * &w, patches: p, t: 0.0 };
        let est = solve_weights(&sys, 1e-10).unwrap();
        prop_assert!((&est.weights - &w).norm() / w.norm() < 1e-4);
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..20)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = spearman(&x, &y).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        assert_relative_eq!(r, spearman(&y, &x).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn percentile_is_monotone(values in prop::collection::vec(-1e6f64..1e6, 1..50), p in 0.0f64..100.0, q in 0.0f64..100.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(percentile(&values, lo).unwrap() <= percentile(&values, hi).unwrap());
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(percentile(&values, 0.0).unwrap(), min);
    }

    #[test]
    fn partitions_respect_exclusion_and_sorting(seed in any::<u64>(), excl in 0usize..6, a in 2usize..5, b in 1usize..4) {
        let n = 32;
        let mut cfg = PiscoConfig::for_grid(n);
        cfg.geometry = KernelGeometry::cartesian(a, b, 1.0 / n as f64, Orientation::YMajor);
        cfg.exclusion_radius = excl as f64 / n as f64;
        cfg.n_s_min = 4;
        let grid = CartesianGrid::new(n, n).unwrap();
        let part = cfg.sample_partition(grid, 2, Orientation::YMajor, &[0.0, 0.5], seed).unwrap();
        prop_assert_eq!(part.len(), 4);
        let mut last = f64::NEG_INFINITY;
        let mut last_t = f64::NEG_INFINITY;
        for subset in &part.subsets {
            prop_assert_eq!(subset.len(), part.pairs_per_subset);
            let t = subset[0].target.t;
            if t != last_t {
                last = f64::NEG_INFINITY;
                last_t = t;
            }
            for pair in subset {
                let r = pair.target.radius();
                prop_assert!(excl == 0 || r > cfg.exclusion_radius);
                prop_assert!(r >= last);
                last = r;
                prop_assert_eq!(pair.target.t, t);
                for q in &pair.neighbors {
                    prop_assert!(grid.index_of(q).is_some());
                    prop_assert!(*q != pair.target);
                }
            }
        }
    }

    #[test]
    fn kspace_noise_scales_linearly(seed in any::<u64>(), sigma in 0.01f64..2.0) {
        let n = 8;
        let img = render_phantom(&PhantomSpec::cardiac(n, 2), 0.0).unwrap();
        let sens = simulate_sensitivities(n, n, 2).unwrap();
        let clean = forward_grid(&img, &sens).unwrap().to_kspace(0.0);
        let a = add_kspace_noise(&clean, sigma, seed).unwrap();
        let b = add_kspace_noise(&clean, 2.0 * sigma, seed).unwrap();
        for ((x, y), c) in a.values.iter().zip(b.values.iter()).zip(clean.values.iter()) {
            assert_relative_eq!((y - c).norm(), 2.0 * (x - c).norm(), epsilon = 1e-9, max_relative = 1e-9);
        }
    }
}
