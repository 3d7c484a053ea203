//! Parallel-imaging inspired self-consistency (PISCO) for multi-coil k-space.
//!
//! The crate is organised bottom-up:
//!
//! * [`kspace`] simulates multi-coil ground truth (phantoms, coil maps,
//!   trajectories, noise, masks) and maps between image and k-space.
//! * [`sampling`] draws target/patch coordinate pairs and partitions them into
//!   frequency-sorted subsets.
//! * [`solver`] assembles and solves the per-subset Tikhonov least-squares
//!   systems for neighbourhood weights.
//! * [`loss`] turns subset weights into the residual and distance consistency
//!   measures, including gradients with respect to the k-space values.
//! * [`fit`] completes an undersampled Cartesian k-space by direct optimisation.
//! * [`nik`] trains a sinusoidal coordinate network on acquired samples with
//!   optional consistency regularisation.
//! * [`eval`] implements the image-quality protocol (percentile clipping,
//!   PSNR, SSIM, temporal profiles).

pub mod error;
pub mod eval;
pub mod fit;
pub mod io;
pub mod kspace;
pub mod loss;
pub mod nik;
pub mod optim;
pub mod sampling;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
pub use kspace::{
    Coord, CoilSensitivities, GridKSpace, Image, MultiCoilKSpace, PhantomSpec, SamplingMask,
    Trajectory, TrajectoryKind,
};
pub use loss::{GradientMode, Measure, PiscoConfig};
pub use sampling::{KernelGeometry, KernelKind, Orientation, PatchPair, SubsetPartition};
pub use solver::{SubsetSystem, WeightSet};

pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
