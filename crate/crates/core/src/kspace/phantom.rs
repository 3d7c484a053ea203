use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

/// An ellipse whose centre and semi-axes move affinely in time.
///
/// Geometry is expressed in fractions of the field of view, so a centre of
/// `(0, 0)` is the image centre and a semi-axis of `0.25` spans a quarter of
/// the FOV width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub intensity: f64,
    #[serde(default)]
    pub phase: f64,
    pub center: [f64; 2],
    pub axes: [f64; 2],
    /// d(center)/dt.
    #[serde(default)]
    pub center_rate: [f64; 2],
    /// d(axes)/dt.
    #[serde(default)]
    pub axes_rate: [f64; 2],
}

impl Ellipse {
    pub fn disc(intensity: f64, center: [f64; 2], radius: f64) -> Self {
        Self {
            intensity,
            phase: 0.0,
            center,
            axes: [radius, radius],
            center_rate: [0.0; 2],
            axes_rate: [0.0; 2],
        }
    }

    pub fn geometry_at(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        (
            [
                self.center[0] + self.center_rate[0] * t,
                self.center[1] + self.center_rate[1] * t,
            ],
            [
                self.axes[0] + self.axes_rate[0] * t,
                self.axes[1] + self.axes_rate[1] * t,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub n_x: usize,
    pub n_y: usize,
    pub n_coils: usize,
    pub components: Vec<Ellipse>,
}

impl PhantomSpec {
    /// Checks that every component stays strictly inside the FOV on `[0, 1]`.
    ///
    /// Geometry is affine in `t`, so checking both end points suffices.
    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 || self.n_y < 2 {
            return Err(Error::invalid("phantom grid must be at least 2x2"));
        }
        if self.n_coils == 0 {
            return Err(Error::invalid("phantom needs at least one coil"));
        }
        for (i, e) in self.components.iter().enumerate() {
            for t in [0.0, 1.0] {
                let (c, a) = e.geometry_at(t);
                if a[0] <= 0.0 || a[1] <= 0.0 {
                    return Err(Error::invalid(format!(
                        "component {i} has non-positive axes at t={t}"
                    )));
                }
                if c[0].abs() + a[0] >= 0.5 || c[1].abs() + a[1] >= 0.5 {
                    return Err(Error::invalid(format!(
                        "component {i} leaves the field of view at t={t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.components
            .iter()
            .all(|e| e.center_rate == [0.0; 2] && e.axes_rate == [0.0; 2])
    }

    /// Torso-like phantom with a contracting bright disc for cardiac-like motion.
    pub fn cardiac(n: usize, n_coils: usize) -> Self {
        let mut heart = Ellipse::disc(1.0, [0.06, -0.02], 0.13);
        heart.axes_rate = [-0.05, -0.05];
        heart.center_rate = [-0.01, 0.0];
        let mut wall = Ellipse::disc(0.35, [0.06, -0.02], 0.17);
        wall.axes_rate = [-0.03, -0.03];
        wall.center_rate = [-0.01, 0.0];
        Self {
            n_x: n,
            n_y: n,
            n_coils,
            components: vec![
                Ellipse {
                    intensity: 0.3,
                    phase: 0.0,
                    center: [0.0, 0.0],
                    axes: [0.42, 0.34],
                    center_rate: [0.0; 2],
                    axes_rate: [0.0; 2],
                },
                Ellipse {
                    intensity: -0.2,
                    phase: 0.0,
                    center: [-0.2, 0.02],
                    axes: [0.12, 0.2],
                    center_rate: [0.0; 2],
                    axes_rate: [0.0; 2],
                },
                wall,
                Ellipse {
                    intensity: 0.4,
                    phase: 0.0,
                    center: [0.3, 0.12],
                    axes: [0.05, 0.07],
                    center_rate: [0.0; 2],
                    axes_rate: [0.0; 2],
                },
                heart,
                Ellipse::disc(0.5, [-0.05, 0.22], 0.04),
            ],
        }
    }

    /// Single static disc of unit intensity.
    pub fn static_disc(n: usize, n_coils: usize, radius: f64) -> Self {
        Self {
            n_x: n,
            n_y: n,
            n_coils,
            components: vec![Ellipse::disc(1.0, [0.0, 0.0], radius)],
        }
    }
}

/// Rasterises the phantom at time `t`; overlapping components add.
pub fn render_phantom(spec: &PhantomSpec, t: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    let (nx, ny) = (spec.n_x, spec.n_y);
    let mut img = Array2::<Complex64>::zeros((nx, ny));
    for e in &spec.components {
        let (c, a) = e.geometry_at(t);
        let value = Complex64::from_polar(e.intensity, e.phase);
        for ix in 0..nx {
            let px = (ix as f64 - (nx / 2) as f64) / nx as f64;
            let u = (px - c[0]) / a[0];
            if u.abs() > 1.0 {
                continue;
            }
            for iy in 0..ny {
                let py = (iy as f64 - (ny / 2) as f64) / ny as f64;
                let v = (py - c[1]) / a[1];
                if u * u + v * v <= 1.0 {
                    img[[ix, iy]] += value;
                }
            }
        }
    }
    Ok(img)
}
