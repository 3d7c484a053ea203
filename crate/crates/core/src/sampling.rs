//! Kernel geometries, target sampling and frequency-sorted subset partitioning.

use std::f64::consts::PI;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{CartesianGrid, Coord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Cartesian,
    Radial,
    RadialEquidistant,
}

/// Which axis carries the `a` (centred) direction of an `a x b` kernel.
///
/// `YMajor` places the `b` points along `k_y`, so a 3x2 kernel predicts a
/// target from the lines directly above and below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    XMajor,
    YMajor,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::XMajor => Orientation::YMajor,
            Orientation::YMajor => Orientation::XMajor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGeometry {
    pub kind: KernelKind,
    /// `[a, b]` point counts.
    pub shape: [usize; 2],
    /// Base neighbour distance in normalised k-space units.
    pub delta: f64,
    pub orientation: Orientation,
}

/// Symmetric 1-D offset set with `n` points.
///
/// Odd `n` includes zero with step `delta`; even `n` straddles zero with
/// step `2 delta` (`+-delta, +-3 delta, ...`), mirroring GRAPPA's skipped-line layout.
fn axis_offsets(n: usize, delta: f64) -> Vec<f64> {
    let step = if n % 2 == 1 { delta } else { 2.0 * delta };
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - mid) * step).collect()
}

impl KernelGeometry {
    pub fn cartesian(a: usize, b: usize, delta: f64, orientation: Orientation) -> Self {
        Self {
            kind: KernelKind::Cartesian,
            shape: [a, b],
            delta,
            orientation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::invalid(format!("kernel delta must be positive, got {}", self.delta)));
        }
        if self.shape[0] == 0 || self.shape[1] == 0 || self.n_neighbors() == 0 {
            return Err(Error::invalid(format!("kernel shape {:?} has no neighbours", self.shape)));
        }
        Ok(())
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    /// `N_n = a*b`, minus one when the target coincides with an offset.
    pub fn n_neighbors(&self) -> usize {
        let [a, b] = self.shape;
        a * b - usize::from(a % 2 == 1 && b % 2 == 1)
    }

    /// Conservative bound on how far any neighbour can sit from its target
    /// along either axis.
    pub fn extent(&self) -> f64 {
        let along = axis_offsets(self.shape[0], self.delta)
            .into_iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let across = axis_offsets(self.shape[1], self.delta)
            .into_iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        match self.kind {
            KernelKind::Cartesian => along.max(across),
            KernelKind::RadialEquidistant => along + across,
            KernelKind::Radial => along + std::f64::consts::FRAC_1_SQRT_2 * PI * across,
        }
    }

    /// Offsets `(dk_x, dk_y)` of every neighbour of `target`.
    ///
    /// Neighbours are ordered with the `b` index outermost and the `a` index
    /// innermost. The zero offset is never returned.
    ///
    /// Radial kernels work in polar coordinates around the origin: the `a`
    /// offsets move along the target's spoke and the `b` offsets rotate it.
    /// For [`KernelKind::Radial`] the rotation step is the fixed angle
    /// `pi * delta` (delta measured on the normalised `[0, pi)` spoke-angle
    /// axis); for [`KernelKind::RadialEquidistant`] it is `delta / |target|`,
    /// which keeps the arc length between angular neighbours at `delta`.
    pub fn kernel_offsets(&self, target: &Coord) -> Result<Vec<[f64; 2]>> {
        self.validate()?;
        let along = axis_offsets(self.shape[0], self.delta);
        let across = axis_offsets(self.shape[1], self.delta);
        let mut out = Vec::with_capacity(self.n_neighbors());
        match self.kind {
            KernelKind::Cartesian => {
                for &db in &across {
                    for &da in &along {
                        if da == 0.0 && db == 0.0 {
                            continue;
                        }
                        out.push(match self.orientation {
                            Orientation::YMajor => [da, db],
                            Orientation::XMajor => [db, da],
                        });
                    }
                }
            }
            KernelKind::Radial | KernelKind::RadialEquidistant => {
                let rho = target.radius();
                if rho < 1e-12 {
                    return Err(Error::invalid("radial kernels are undefined at the k-space origin"));
                }
                let phi = target.ky.atan2(target.kx);
                let scale = match self.kind {
                    KernelKind::Radial => PI,
                    _ => 1.0 / rho,
                };
                for &db in &across {
                    for &da in &along {
                        if da == 0.0 && db == 0.0 {
                            continue;
                        }
                        let (s, c) = (phi + db * scale).sin_cos();
                        let r = rho + da;
                        out.push([r * c - target.kx, r * s - target.ky]);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn pair(&self, target: Coord) -> Result<PatchPair> {
        let neighbors = self
            .kernel_offsets(&target)?
            .into_iter()
            .map(|[dx, dy]| target.offset(dx, dy))
            .collect();
        Ok(PatchPair { target, neighbors })
    }

    pub fn pairs(&self, targets: &[Coord]) -> Result<Vec<PatchPair>> {
        targets.iter().map(|t| self.pair(*t)).collect()
    }
}

/// A target coordinate and its neighbours, all at the target's time.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub target: Coord,
    pub neighbors: Vec<Coord>,
}

/// Pair count per subset: `ceil(f_od * N_n * N_c^2)`.
pub fn pairs_per_subset(n_neighbors: usize, n_coils: usize, f_od: f64) -> Result<usize> {
    if !(f_od > 1.0) {
        return Err(Error::invalid(format!("overdetermination factor must exceed 1, got {f_od}")));
    }
    let n_w = (n_neighbors * n_coils * n_coils) as f64;
    Ok((f_od * n_w - 1e-9).ceil() as usize)
}

/// Subsets of equal size, each drawn from a single time point.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPartition {
    pub subsets: Vec<Vec<PatchPair>>,
    pub pairs_per_subset: usize,
    pub n_neighbors: usize,
}

impl SubsetPartition {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Rows one subset contributes to [`Self::flat_coords`].
    pub fn rows_per_subset(&self) -> usize {
        self.pairs_per_subset * (1 + self.n_neighbors)
    }

    /// Every coordinate referenced, subset-major, then pair, then
    /// `[target, neighbour_0, ..., neighbour_{N_n-1}]`.
    pub fn flat_coords(&self) -> Vec<Coord> {
        let mut out = Vec::with_capacity(self.len() * self.rows_per_subset());
        for subset in &self.subsets {
            for p in subset {
                out.push(p.target);
                out.extend_from_slice(&p.neighbors);
            }
        }
        out
    }

    /// Largest max/min target-radius ratio over all subsets.
    pub fn radius_spread(&self) -> f64 {
        self.subsets
            .iter()
            .map(|s| {
                let (lo, hi) = s.iter().fold((f64::MAX, 0.0f64), |(lo, hi), p| {
                    let r = p.target.radius();
                    (lo.min(r), hi.max(r))
                });
                if lo > 0.0 { hi / lo } else { f64::INFINITY }
            })
            .fold(0.0, f64::max)
    }
}

/// Uniformly random grid nodes strictly outside `exclusion_radius` (a zero
/// radius excludes nothing), each paired with a
/// time drawn from `t_values`.
///
/// Only nodes whose neighbours (up to `margin` away along either axis) stay
/// on the grid are eligible. Up to the number of eligible nodes, targets are
/// distinct; larger requests cycle through fresh permutations.
pub fn sample_targets<R: Rng + ?Sized>(
    grid: CartesianGrid,
    count: usize,
    t_values: &[f64],
    rng: &mut R,
    exclusion_radius: f64,
    margin: f64,
) -> Result<Vec<Coord>> {
    if count == 0 {
        return Err(Error::invalid("target count must be at least 1"));
    }
    if t_values.is_empty() {
        return Err(Error::invalid("no time values to draw targets from"));
    }
    if !(exclusion_radius >= 0.0) {
        return Err(Error::invalid("exclusion radius must be >= 0"));
    }
    let tol = 1e-9;
    let hi_x = 0.5 - 1.0 / grid.n_x as f64;
    let hi_y = 0.5 - 1.0 / grid.n_y as f64;
    let eligible: Vec<Coord> = grid
        .coords(0.0)
        .into_iter()
        .filter(|c| {
            (exclusion_radius == 0.0 || c.radius() > exclusion_radius)
                && c.kx - margin >= -0.5 - tol
                && c.kx + margin <= hi_x + tol
                && c.ky - margin >= -0.5 - tol
                && c.ky + margin <= hi_y + tol
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::InsufficientData {
            what: "eligible target nodes".into(),
            required: 1,
            available: 0,
        });
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let take = (count - out.len()).min(eligible.len());
        for i in index::sample(rng, eligible.len(), take) {
            out.push(eligible[i]);
        }
    }
    for c in out.iter_mut() {
        c.t = t_values[rng.random_range(0..t_values.len())];
    }
    Ok(out)
}

fn group_by_time(pairs: Vec<PatchPair>) -> Vec<Vec<PatchPair>> {
    let mut groups: Vec<(f64, Vec<PatchPair>)> = Vec::new();
    for p in pairs {
        match groups.iter_mut().find(|(t, _)| *t == p.target.t) {
            Some((_, g)) => g.push(p),
            None => groups.push((p.target.t, vec![p])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    groups.into_iter().map(|(_, g)| g).collect()
}

fn chunk_groups(
    groups: Vec<Vec<PatchPair>>,
    n_pairs: usize,
    n_m: usize,
    n_neighbors: usize,
    n_s_min: usize,
) -> Result<SubsetPartition> {
    let mut subsets = Vec::new();
    for group in groups {
        let mut iter = group.into_iter();
        loop {
            let chunk: Vec<PatchPair> = iter.by_ref().take(n_m).collect();
            if chunk.len() < n_m {
                break;
            }
            subsets.push(chunk);
        }
    }
    if subsets.len() < n_s_min.max(1) {
        return Err(Error::InsufficientData {
            what: format!("{} subsets of {n_m} single-time pairs", n_s_min.max(1)),
            required: n_s_min.max(1) * n_m,
            available: n_pairs,
        });
    }
    Ok(SubsetPartition {
        subsets,
        pairs_per_subset: n_m,
        n_neighbors,
    })
}

fn partition_setup(pairs: &[PatchPair], n_c: usize, f_od: f64) -> Result<(usize, usize)> {
    let n_n = pairs
        .first()
        .map(|p| p.neighbors.len())
        .ok_or(Error::InsufficientData {
            what: "patch pairs".into(),
            required: 1,
            available: 0,
        })?;
    if pairs.iter().any(|p| p.neighbors.len() != n_n) {
        return Err(Error::invalid("patch pairs disagree on neighbour count"));
    }
    if pairs
        .iter()
        .any(|p| p.neighbors.iter().any(|q| q.t != p.target.t))
    {
        return Err(Error::invalid("neighbours must share their target's time"));
    }
    Ok((n_n, pairs_per_subset(n_n, n_c, f_od)?))
}

/// Groups pairs by time, sorts each group by target radius (ascending,
/// stable), and chunks it into subsets of `N_m`; remainders are dropped.
pub fn sort_and_partition(
    pairs: Vec<PatchPair>,
    n_c: usize,
    f_od: f64,
    n_s_min: usize,
) -> Result<SubsetPartition> {
    let (n_n, n_m) = partition_setup(&pairs, n_c, f_od)?;
    let n_pairs = pairs.len();
    let mut groups = group_by_time(pairs);
    for g in groups.iter_mut() {
        g.sort_by(|a, b| a.target.radius().total_cmp(&b.target.radius()));
    }
    chunk_groups(groups, n_pairs, n_m, n_n, n_s_min)
}

/// Same as [`sort_and_partition`] but with each time group shuffled instead
/// of sorted; the unsorted reference for comparing weight stability.
pub fn random_partition<R: Rng + ?Sized>(
    pairs: Vec<PatchPair>,
    n_c: usize,
    f_od: f64,
    n_s_min: usize,
    rng: &mut R,
) -> Result<SubsetPartition> {
    let (n_n, n_m) = partition_setup(&pairs, n_c, f_od)?;
    let n_pairs = pairs.len();
    let mut groups = group_by_time(pairs);
    for g in groups.iter_mut() {
        g.shuffle(rng);
    }
    chunk_groups(groups, n_pairs, n_m, n_n, n_s_min)
}
