//! Per-subset Tikhonov-regularised complex least squares for neighbourhood weights.
//!
//! Column layout of the patch matrix is neighbour-major, coil-minor: neighbour
//! `n`, coil `c` sits at column `n * N_c + c`.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, Dyn, SVD};
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{CartesianGrid, MultiCoilKSpace, ValueSource};
use crate::sampling::{KernelGeometry, PatchPair};

pub type CMatrix = DMatrix<Complex64>;

/// Default Tikhonov weight.
pub const DEFAULT_ALPHA: f64 = 1e-4;
/// Default ratio of equations to unknowns per subset.
pub const DEFAULT_F_OD: f64 = 1.1;

/// One stacked system `T = P W` for a subset of target/patch pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSystem {
    /// `N_m x N_c`.
    pub targets: CMatrix,
    /// `N_m x (N_n * N_c)`.
    pub patches: CMatrix,
    pub t: f64,
}

impl SubsetSystem {
    /// Builds a system from flat per-coordinate values laid out as
    /// `[target, neighbour_0, ..]` per pair, starting at row `start`.
    pub fn from_flat(
        values: &Array2<Complex64>,
        start: usize,
        n_pairs: usize,
        n_neighbors: usize,
        t: f64,
    ) -> Self {
        let n_c = values.ncols();
        let stride = 1 + n_neighbors;
        let targets = CMatrix::from_fn(n_pairs, n_c, |i, c| values[[start + i * stride, c]]);
        let patches = CMatrix::from_fn(n_pairs, n_neighbors * n_c, |i, col| {
            let (n, c) = (col / n_c, col % n_c);
            values[[start + i * stride + 1 + n, c]]
        });
        Self { targets, patches, t }
    }

    pub fn n_pairs(&self) -> usize {
        self.targets.nrows()
    }

    pub fn n_coils(&self) -> usize {
        self.targets.ncols()
    }

    pub fn n_unknowns(&self) -> usize {
        self.patches.ncols()
    }

    /// `P W - T`.
    pub fn residual(&self, weights: &CMatrix) -> CMatrix {
        &self.patches * weights - &self.targets
    }
}

/// Weights solved for one subset.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    /// `(N_n * N_c) x N_c`.
    pub weights: CMatrix,
    pub alpha: f64,
    /// `||P W - T||_F`.
    pub residual_fro: f64,
}

/// Evaluates every coordinate of `subset` and stacks the system.
pub fn assemble_system(subset: &[PatchPair], source: &dyn ValueSource) -> Result<SubsetSystem> {
    let first = subset.first().ok_or_else(|| Error::invalid("empty subset"))?;
    let n_n = first.neighbors.len();
    if subset.iter().any(|p| p.neighbors.len() != n_n) {
        return Err(Error::invalid("patch pairs disagree on neighbour count"));
    }
    let mut coords = Vec::with_capacity(subset.len() * (1 + n_n));
    for p in subset {
        coords.push(p.target);
        coords.extend_from_slice(&p.neighbors);
    }
    let values = source.values_at(&coords)?;
    if values.nrows() != coords.len() {
        return Err(Error::invalid("value source returned the wrong number of rows"));
    }
    Ok(SubsetSystem::from_flat(&values, 0, subset.len(), n_n, first.target.t))
}

/// Factorisation of the normal matrix `P^H P + alpha I`.
pub(crate) enum NormalFactor {
    Cholesky(Cholesky<Complex64, Dyn>),
    Svd(SVD<Complex64, Dyn, Dyn>),
}

impl NormalFactor {
    pub(crate) fn new(patches: &CMatrix, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
        }
        let mut normal = patches.adjoint() * patches;
        for i in 0..normal.nrows() {
            normal[(i, i)] += Complex64::new(alpha, 0.0);
        }
        let n = patches.ncols() as f64;
        if let Some(chol) = Cholesky::new(normal.clone()) {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag
                .iter()
                .fold((f64::MAX, 0.0f64), |(lo, hi), v| (lo.min(v.re), hi.max(v.re)));
            if alpha > 0.0 || (lo / hi).powi(2) > n * f64::EPSILON {
                return Ok(NormalFactor::Cholesky(chol));
            }
        }
        let svd = SVD::new(normal, true, true);
        let s_max = svd.singular_values.max();
        let s_min = svd.singular_values.min();
        if alpha == 0.0 && (!(s_max > 0.0) || s_min <= s_max * n * f64::EPSILON) {
            return Err(Error::IllConditioned(format!(
                "normal matrix singular (sigma_min={s_min:.3e}, sigma_max={s_max:.3e}); increase alpha"
            )));
        }
        Ok(NormalFactor::Svd(svd))
    }

    pub(crate) fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        match self {
            NormalFactor::Cholesky(c) => Ok(c.solve(rhs)),
            NormalFactor::Svd(s) => {
                let eps = s.singular_values.max() * s.singular_values.len() as f64 * f64::EPSILON;
                s.solve(rhs, eps).map_err(|e| Error::IllConditioned(e.into()))
            }
        }
    }
}

/// `W = (P^H P + alpha I)^{-1} P^H T` via Cholesky, falling back to SVD.
pub fn solve_weights(system: &SubsetSystem, alpha: f64) -> Result<WeightSet> {
    let (weights, _) = solve_with_factor(system, alpha)?;
    let residual_fro = system.residual(&weights).norm();
    Ok(WeightSet {
        weights,
        alpha,
        residual_fro,
    })
}

pub(crate) fn solve_with_factor(system: &SubsetSystem, alpha: f64) -> Result<(CMatrix, NormalFactor)> {
    if system.patches.nrows() != system.targets.nrows() {
        return Err(Error::invalid("patch and target row counts differ"));
    }
    if alpha == 0.0 && system.n_pairs() <= system.n_unknowns() {
        return Err(Error::InsufficientData {
            what: "pairs for an unregularised overdetermined system".into(),
            required: system.n_unknowns() + 1,
            available: system.n_pairs(),
        });
    }
    let factor = NormalFactor::new(&system.patches, alpha)?;
    let rhs = system.patches.adjoint() * &system.targets;
    let w = factor.solve(&rhs)?;
    if w.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::IllConditioned("non-finite weights".into()));
    }
    Ok((w, factor))
}

/// GRAPPA-style calibration: one weight set from every target in a fully
/// sampled region whose whole patch is also inside the region.
///
/// `acs` samples must be nodes of the `n_fe x n_fe` grid.
pub fn calibrate_grappa(
    acs: &MultiCoilKSpace,
    geometry: &KernelGeometry,
    alpha: f64,
) -> Result<WeightSet> {
    let grid = CartesianGrid::new(acs.n_fe, acs.n_fe)?;
    let mut rows = HashMap::with_capacity(acs.n_samples());
    for (i, c) in acs.coords.iter().enumerate() {
        let idx = grid
            .index_of(c)
            .ok_or_else(|| Error::invalid(format!("ACS sample {i} is not a grid node")))?;
        rows.insert(idx, i);
    }
    let n_c = acs.n_coils();
    let mut pairs = Vec::new();
    for c in &acs.coords {
        let pair = geometry.pair(*c)?;
        if pair
            .neighbors
            .iter()
            .all(|n| grid.index_of(n).is_some_and(|i| rows.contains_key(&i)))
        {
            pairs.push(pair);
        }
    }
    let n_w = geometry.n_neighbors() * n_c * n_c;
    if pairs.len() < n_w {
        return Err(Error::InsufficientData {
            what: "ACS target/patch pairs".into(),
            required: n_w,
            available: pairs.len(),
        });
    }
    let lookup = |coord: &crate::kspace::Coord| acs.values.row(rows[&grid.index_of(coord).unwrap()]);
    let n_n = geometry.n_neighbors();
    let targets = CMatrix::from_fn(pairs.len(), n_c, |i, c| lookup(&pairs[i].target)[c]);
    let patches = CMatrix::from_fn(pairs.len(), n_n * n_c, |i, col| {
        lookup(&pairs[i].neighbors[col / n_c])[col % n_c]
    });
    solve_weights(
        &SubsetSystem {
            targets,
            patches,
            t: acs.coords[0].t,
        },
        alpha,
    )
}

/// Targets predicted from their patches: `P W`.
pub fn predict(patches: &CMatrix, weights: &WeightSet) -> CMatrix {
    patches * &weights.weights
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::Coord;
    use crate::sampling::Orientation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn assemble_shapes_and_order() {
        let pair = PatchPair {
            target: Coord::new(0.1, 0.1, 0.0),
            neighbors: (0..6).map(|i| Coord::new(0.01 * i as f64, 0.2, 0.0)).collect(),
        };
        // value encodes (neighbour index, coil) so the column layout is visible
        let source = (4usize, |coords: &[Coord]| {
            Ok(Array2::from_shape_fn((coords.len(), 4), |(r, c)| {
                Complex64::new(r as f64, c as f64)
            }))
        });
        let sys = assemble_system(&[pair], &source).unwrap();
        assert_eq!(sys.targets.shape(), (1, 4));
        assert_eq!(sys.patches.shape(), (1, 24));
        // neighbour 2 is flat row 3; coil 3
        assert_eq!(sys.patches[(0, 2 * 4 + 3)], Complex64::new(3.0, 3.0));
    }

    #[test]
    fn constant_source_gives_constant_system() {
        let c = Complex64::new(0.7, -0.2);
        let pair = PatchPair {
            target: Coord::new(0.1, 0.0, 0.0),
            neighbors: vec![Coord::new(0.2, 0.0, 0.0); 3],
        };
        let source = (2usize, move |coords: &[Coord]| Ok(Array2::from_elem((coords.len(), 2), c)));
        let sys = assemble_system(&[pair.clone(), pair], &source).unwrap();
        assert!(sys.targets.iter().chain(sys.patches.iter()).all(|v| *v == c));
    }

    #[test]
    fn constant_single_coil_uniform_weights() {
        let c = Complex64::new(0.6, 0.8);
        let (n_m, n_n, alpha) = (7usize, 6usize, 1e-6);
        let sys = SubsetSystem {
            targets: CMatrix::from_element(n_m, 1, c),
            patches: CMatrix::from_element(n_m, n_n, c),
            t: 0.0,
        };
        let w = solve_weights(&sys, alpha).unwrap();
        let expect = n_m as f64 * c.norm_sqr() / (n_m as f64 * c.norm_sqr() * n_n as f64 + alpha);
        for v in w.weights.iter() {
            assert!((v.re - expect).abs() < 1e-9 && v.im.abs() < 1e-9);
        }
        assert!((expect - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_exact_relationship() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w_true = random_matrix(&mut rng, 24, 4);
        let p = random_matrix(&mut rng, 106, 24);
        let sys = SubsetSystem {
            targets: &p * &w_true,
            patches: p,
            t: 0.0,
        };
        let w = solve_weights(&sys, 1e-8).unwrap();
        assert!((&w.weights - &w_true).norm() / w_true.norm() <= 1e-3);
        assert!(w.residual_fro < 1e-5);
    }

    #[test]
    fn huge_alpha_shrinks_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_matrix(&mut rng, 30, 6);
        let sys = SubsetSystem {
            targets: random_matrix(&mut rng, 30, 2),
            patches: p,
            t: 0.0,
        };
        let rhs = sys.patches.adjoint() * &sys.targets;
        let w = solve_weights(&sys, 1e9).unwrap();
        assert!(w.weights.norm() <= 1e-6 * rhs.norm().max(1.0));
    }

    #[test]
    fn singular_without_alpha_is_ill_conditioned() {
        let sys = SubsetSystem {
            targets: CMatrix::from_element(10, 1, Complex64::new(1.0, 0.0)),
            patches: CMatrix::from_element(10, 3, Complex64::new(1.0, 0.0)),
            t: 0.0,
        };
        assert!(matches!(solve_weights(&sys, 0.0), Err(Error::IllConditioned(_))));
        // the same system is fine once regularised
        assert!(solve_weights(&sys, 1e-4).is_ok());
    }

    #[test]
    fn alpha_zero_full_rank_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w_true = random_matrix(&mut rng, 6, 2);
        let p = random_matrix(&mut rng, 20, 6);
        let sys = SubsetSystem {
            targets: &p * &w_true,
            patches: p,
            t: 0.0,
        };
        let w = solve_weights(&sys, 0.0).unwrap();
        assert!((&w.weights - &w_true).norm() < 1e-10);
    }

    fn grid_kspace(n: usize, f: impl Fn(&Coord) -> Complex64) -> MultiCoilKSpace {
        let coords = crate::kspace::make_cartesian_grid(n, n, 0.0).unwrap();
        let values = Array2::from_shape_fn((coords.len(), 1), |(i, _)| f(&coords[i]));
        MultiCoilKSpace::new(coords, values, n).unwrap()
    }

    #[test]
    fn grappa_constant_acs() {
        let acs = grid_kspace(8, |_| Complex64::new(2.0, 0.0));
        let g = KernelGeometry::cartesian(3, 2, 1.0 / 8.0, Orientation::YMajor);
        let w = calibrate_grappa(&acs, &g, 1e-6).unwrap();
        for v in w.weights.iter() {
            assert!((v.re - 1.0 / 6.0).abs() < 1e-6);
        }
    }

    #[test]
    fn grappa_too_small_acs() {
        // 3x3 grid with a 3x2 kernel of spacing one node: only the centre
        // row's middle target has all neighbours inside.
        let acs = grid_kspace(3, |_| Complex64::new(1.0, 0.0));
        let g = KernelGeometry::cartesian(3, 2, 1.0 / 3.0, Orientation::YMajor);
        match calibrate_grappa(&acs, &g, 1e-4) {
            Err(Error::InsufficientData { required, available, .. }) => {
                assert_eq!(required, 6);
                assert_eq!(available, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
