use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A k-space sample location with an optional normalised time stamp.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coord {
    pub kx: f64,
    pub ky: f64,
    /// Normalised time in `[0, 1]`; zero for static data.
    pub t: f64,
}

impl Coord {
    pub const fn new(kx: f64, ky: f64, t: f64) -> Self {
        Self { kx, ky, t }
    }

    /// Distance from the k-space centre, ignoring time.
    pub fn radius(&self) -> f64 {
        self.kx.hypot(self.ky)
    }

    pub fn offset(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.kx + dx, self.ky + dy, self.t)
    }
}

/// Node lookup for a Cartesian grid with nodes at `m/n - 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartesianGrid {
    pub n_x: usize,
    pub n_y: usize,
}

impl CartesianGrid {
    pub fn new(n_x: usize, n_y: usize) -> Result<Self> {
        if n_x < 2 || n_y < 2 {
            return Err(Error::invalid(format!(
                "grid dimensions must be at least 2, got {n_x}x{n_y}"
            )));
        }
        Ok(Self { n_x, n_y })
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, ix: usize, iy: usize, t: f64) -> Coord {
        Coord::new(
            ix as f64 / self.n_x as f64 - 0.5,
            iy as f64 / self.n_y as f64 - 0.5,
            t,
        )
    }

    /// Row-major index of the node at `coord`, or `None` if it is off-grid.
    pub fn index_of(&self, coord: &Coord) -> Option<usize> {
        let fx = (coord.kx + 0.5) * self.n_x as f64;
        let fy = (coord.ky + 0.5) * self.n_y as f64;
        let ix = fx.round();
        let iy = fy.round();
        // loose enough for coordinates that went through f32 storage
        if (fx - ix).abs() > 1e-4 || (fy - iy).abs() > 1e-4 {
            return None;
        }
        if ix < 0.0 || iy < 0.0 || ix >= self.n_x as f64 || iy >= self.n_y as f64 {
            return None;
        }
        Some(iy as usize * self.n_x + ix as usize)
    }

    pub fn coords(&self, t: f64) -> Vec<Coord> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.n_y {
            for ix in 0..self.n_x {
                out.push(self.node(ix, iy, t));
            }
        }
        out
    }
}

/// Cartesian grid coordinates in row-major order (`k_x` fastest).
pub fn make_cartesian_grid(n_x: usize, n_y: usize, t: f64) -> Result<Vec<Coord>> {
    Ok(CartesianGrid::new(n_x, n_y)?.coords(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    CartesianGrid,
    RadialGoldenAngle,
    RadialUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub n_spokes: usize,
    pub n_fe: usize,
    /// Rotation between consecutive spokes in radians.
    pub angle_increment: f64,
}

/// Golden-angle spoke increment `pi * (sqrt(5) - 1) / 2`, about 111.246 degrees.
pub fn golden_angle() -> f64 {
    std::f64::consts::PI * (5f64.sqrt() - 1.0) / 2.0
}

impl Trajectory {
    pub fn golden(n_spokes: usize, n_fe: usize) -> Self {
        Self {
            kind: TrajectoryKind::RadialGoldenAngle,
            n_spokes,
            n_fe,
            angle_increment: golden_angle(),
        }
    }

    /// Spokes evenly covering `[0, pi)`.
    pub fn uniform(n_spokes: usize, n_fe: usize) -> Self {
        Self {
            kind: TrajectoryKind::RadialUniform,
            n_spokes,
            n_fe,
            angle_increment: std::f64::consts::PI / n_spokes.max(1) as f64,
        }
    }

    pub fn spoke_angle(&self, spoke: usize) -> f64 {
        match self.kind {
            TrajectoryKind::RadialGoldenAngle => spoke as f64 * golden_angle(),
            _ => spoke as f64 * self.angle_increment,
        }
    }
}

/// Radial spokes through the origin, assigned round-robin to `n_frames` frames.
///
/// Output is spoke-major; within a spoke, samples run from radius `-0.5`
/// towards `+0.5` in steps of `1/n_fe`. Frame `f` has `t = f / max(n_frames - 1, 1)`.
pub fn make_radial_trajectory(spec: &Trajectory, n_frames: usize) -> Result<Vec<Coord>> {
    if spec.kind == TrajectoryKind::CartesianGrid {
        return Err(Error::invalid("make_radial_trajectory needs a radial trajectory kind"));
    }
    if spec.n_spokes == 0 || spec.n_fe < 2 {
        return Err(Error::invalid(format!(
            "radial trajectory needs n_spokes >= 1 and n_fe >= 2, got {} and {}",
            spec.n_spokes, spec.n_fe
        )));
    }
    if n_frames == 0 {
        return Err(Error::invalid("n_frames must be at least 1"));
    }
    let t_den = (n_frames.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(spec.n_spokes * spec.n_fe);
    for spoke in 0..spec.n_spokes {
        let theta = spec.spoke_angle(spoke);
        let (s, c) = theta.sin_cos();
        let t = (spoke % n_frames) as f64 / t_den;
        for m in 0..spec.n_fe {
            let r = m as f64 / spec.n_fe as f64 - 0.5;
            out.push(Coord::new(r * c, r * s, t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_grid() {
        let g = make_cartesian_grid(2, 2, 0.0).unwrap();
        let expect = [(-0.5, -0.5), (0.0, -0.5), (-0.5, 0.0), (0.0, 0.0)];
        assert_eq!(g.len(), 4);
        for (c, (x, y)) in g.iter().zip(expect) {
            assert_eq!((c.kx, c.ky, c.t), (x, y, 0.0));
        }
    }

    #[test]
    fn grid_extent_and_time() {
        let g = make_cartesian_grid(64, 64, 0.0).unwrap();
        assert_eq!(g.len(), 4096);
        let max = g.iter().map(|c| c.kx.abs()).fold(0.0, f64::max);
        assert_eq!(max, 0.5);
        let max_pos = g.iter().map(|c| c.kx).fold(f64::MIN, f64::max);
        assert!((max_pos - (0.5 - 1.0 / 64.0)).abs() < 1e-15);

        let g = make_cartesian_grid(208, 208, 0.3).unwrap();
        assert_eq!(g.len(), 208 * 208);
        assert!(g.iter().all(|c| c.t == 0.3));
    }

    #[test]
    fn grid_rejects_small_dimensions() {
        assert!(make_cartesian_grid(1, 8, 0.0).is_err());
        assert!(make_cartesian_grid(8, 0, 0.0).is_err());
    }

    #[test]
    fn grid_index_roundtrip() {
        let grid = CartesianGrid::new(7, 5).unwrap();
        for (i, c) in grid.coords(0.0).iter().enumerate() {
            assert_eq!(grid.index_of(c), Some(i));
        }
        assert_eq!(grid.index_of(&Coord::new(0.01, 0.0, 0.0)), None);
        assert_eq!(grid.index_of(&Coord::new(0.5, 0.0, 0.0)), None);
    }

    #[test]
    fn single_uniform_spoke_is_collinear() {
        let c = make_radial_trajectory(&Trajectory::uniform(1, 4), 1).unwrap();
        assert_eq!(c.len(), 4);
        for p in &c {
            // angle 0: all on the k_x axis through the origin
            assert_eq!(p.ky, 0.0);
        }
        assert!(c.iter().any(|p| p.kx == 0.0));
    }

    #[test]
    fn golden_angle_spacing() {
        let reference = std::f64::consts::PI * 2.0 / (1.0 + 5f64.sqrt());
        assert!((golden_angle() - reference).abs() < 1e-14);
        assert!((golden_angle() - 1.9416).abs() < 1e-4);
        let c = make_radial_trajectory(&Trajectory::golden(2, 8), 1).unwrap();
        let a0 = c[7].ky.atan2(c[7].kx);
        let a1 = c[15].ky.atan2(c[15].kx);
        assert!(((a1 - a0) - 1.9416).abs() < 1e-4);
    }

    #[test]
    fn spokes_round_robin_over_frames() {
        let c = make_radial_trajectory(&Trajectory::golden(4900, 4), 25).unwrap();
        let mut counts = [0usize; 25];
        for spoke in c.chunks(4) {
            let f = (spoke[0].t * 24.0).round() as usize;
            assert!(spoke.iter().all(|p| p.t == spoke[0].t));
            counts[f] += 1;
        }
        assert!(counts.iter().all(|&n| n == 196));
    }
}
