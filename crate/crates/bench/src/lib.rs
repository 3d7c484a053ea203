//! Shared fixtures for the criterion benchmarks.

use pisco_core::kspace::{render_phantom, simulate_sensitivities};
use pisco_core::{CoilSensitivities, Image, PhantomSpec};

/// Cardiac phantom at `t = 0` with matching coil maps.
pub fn phantom(n: usize, n_coils: usize) -> (Image, CoilSensitivities) {
    let image = render_phantom(&PhantomSpec::cardiac(n, n_coils), 0.0).expect("phantom");
    let sens = simulate_sensitivities(n, n, n_coils).expect("sensitivities");
    (image, sens)
}
