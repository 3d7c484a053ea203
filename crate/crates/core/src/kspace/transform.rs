//! Exact (non-gridding) Fourier transforms between images and k-space.
//!
//! Forward model: `y_c(k) = sum_r S_c(r) x(r) exp(-2 pi i k.r)` with `r` the
//! pixel index offset by `-n/2` (integer division). The sum is evaluated
//! separably: for every sample, rows `iy` in ascending order, and within each
//! row `ix` ascending. Samples are independent, so parallel evaluation is
//! bit-reproducible.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{
    render_phantom, CartesianGrid, CoilSensitivities, Coord, GridKSpace, Image, MultiCoilKSpace,
    PhantomSpec,
};
use crate::error::{Error, Result};

const ADJOINT_CHUNK: usize = 256;

fn phase_row(k: f64, n: usize, sign: f64) -> Vec<Complex64> {
    let half = (n / 2) as f64;
    (0..n)
        .map(|i| {
            let (s, c) = (sign * 2.0 * PI * k * (i as f64 - half)).sin_cos();
            Complex64::new(c, s)
        })
        .collect()
}

fn check_shapes(image: &Image, sens: &CoilSensitivities) -> Result<()> {
    if image.dim() != (sens.n_x(), sens.n_y()) {
        return Err(Error::invalid(format!(
            "image shape {:?} does not match sensitivity grid {}x{}",
            image.dim(),
            sens.n_x(),
            sens.n_y()
        )));
    }
    Ok(())
}

/// Coil images `S_c x` laid out `[iy][ix][c]` for the row-wise inner loop.
fn coil_images(image: &Image, sens: &CoilSensitivities) -> Vec<Complex64> {
    let (nx, ny, nc) = (sens.n_x(), sens.n_y(), sens.n_coils());
    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny * nc];
    for iy in 0..ny {
        for ix in 0..nx {
            let v = image[[ix, iy]];
            for c in 0..nc {
                out[(iy * nx + ix) * nc + c] = sens.maps[[ix, iy, c]] * v;
            }
        }
    }
    out
}

/// Direct non-uniform DFT of `image` weighted by each coil map.
pub fn nudft_forward(
    image: &Image,
    sens: &CoilSensitivities,
    coords: &[Coord],
) -> Result<MultiCoilKSpace> {
    check_shapes(image, sens)?;
    if let Some(c) = coords.iter().find(|c| c.kx.abs() > 0.5 || c.ky.abs() > 0.5) {
        return Err(Error::invalid(format!("coordinate {c:?} outside [-0.5, 0.5]")));
    }
    let (nx, ny, nc) = (sens.n_x(), sens.n_y(), sens.n_coils());
    let weighted = coil_images(image, sens);
    let row_nonzero: Vec<bool> = (0..ny)
        .map(|iy| (0..nx).any(|ix| image[[ix, iy]] != Complex64::new(0.0, 0.0)))
        .collect();

    let rows: Vec<Vec<Complex64>> = coords
        .par_iter()
        .map(|k| {
            let ex = phase_row(k.kx, nx, -1.0);
            let ey = phase_row(k.ky, ny, -1.0);
            let mut out = vec![Complex64::new(0.0, 0.0); nc];
            let mut row = vec![Complex64::new(0.0, 0.0); nc];
            for iy in 0..ny {
                if !row_nonzero[iy] {
                    continue;
                }
                row.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                let base = iy * nx * nc;
                for (ix, e) in ex.iter().enumerate() {
                    let px = &weighted[base + ix * nc..base + (ix + 1) * nc];
                    for (acc, v) in row.iter_mut().zip(px) {
                        *acc += e * v;
                    }
                }
                for (o, r) in out.iter_mut().zip(&row) {
                    *o += ey[iy] * r;
                }
            }
            out
        })
        .collect();

    let mut values = Array2::<Complex64>::zeros((coords.len(), nc));
    for (i, r) in rows.into_iter().enumerate() {
        for (c, v) in r.into_iter().enumerate() {
            values[[i, c]] = v;
        }
    }
    MultiCoilKSpace::new(coords.to_vec(), values, nx)
}

/// Samples a dynamic phantom at `coords`, rendering the object at each
/// coordinate's own time. Output rows follow the input order.
pub fn simulate_acquisition(
    spec: &PhantomSpec,
    sens: &CoilSensitivities,
    coords: &[Coord],
) -> Result<MultiCoilKSpace> {
    let mut times: Vec<f64> = coords.iter().map(|c| c.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut values = Array2::<Complex64>::zeros((coords.len(), sens.n_coils()));
    for t in times {
        let rows: Vec<usize> = (0..coords.len()).filter(|&i| coords[i].t == t).collect();
        let sub: Vec<Coord> = rows.iter().map(|&i| coords[i]).collect();
        let k = nudft_forward(&render_phantom(spec, t)?, sens, &sub)?;
        for (r, &i) in rows.iter().enumerate() {
            values.row_mut(i).assign(&k.values.row(r));
        }
    }
    MultiCoilKSpace::new(coords.to_vec(), values, sens.n_x())
}

/// Forward transform onto the complete `n_x x n_y` grid of the coil maps.
///
/// Same sum as [`nudft_forward`] evaluated separably, `O(n^3)` per coil.
pub fn forward_grid(image: &Image, sens: &CoilSensitivities) -> Result<GridKSpace> {
    check_shapes(image, sens)?;
    let (nx, ny, nc) = (sens.n_x(), sens.n_y(), sens.n_coils());
    let grid = CartesianGrid::new(nx, ny)?;
    let ex: Vec<Vec<Complex64>> = (0..nx)
        .map(|m| phase_row(m as f64 / nx as f64 - 0.5, nx, -1.0))
        .collect();
    let ey: Vec<Vec<Complex64>> = (0..ny)
        .map(|m| phase_row(m as f64 / ny as f64 - 0.5, ny, -1.0))
        .collect();
    let per_coil: Vec<Array2<Complex64>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            // tmp[mx, iy] = sum_ix S x [ix, iy] e_x[mx][ix]
            let mut tmp = Array2::<Complex64>::zeros((nx, ny));
            for iy in 0..ny {
                for ix in 0..nx {
                    let v = sens.maps[[ix, iy, c]] * image[[ix, iy]];
                    if v == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for mx in 0..nx {
                        tmp[[mx, iy]] += v * ex[mx][ix];
                    }
                }
            }
            let mut out = Array2::<Complex64>::zeros((nx, ny));
            for my in 0..ny {
                for iy in 0..ny {
                    let e = ey[my][iy];
                    for mx in 0..nx {
                        out[[mx, my]] += tmp[[mx, iy]] * e;
                    }
                }
            }
            out
        })
        .collect();
    let mut values = Array2::<Complex64>::zeros((grid.len(), nc));
    for (c, k) in per_coil.iter().enumerate() {
        for my in 0..ny {
            for mx in 0..nx {
                values[[my * nx + mx, c]] = k[[mx, my]];
            }
        }
    }
    GridKSpace::new(grid, values)
}

/// Coil-combined inverse DFT of a complete Cartesian k-space.
///
/// Computes `x = sum_c conj(S_c) F^{-1} y_c` with the inverse normalised by
/// `1/(n_x n_y)`, so it exactly inverts [`nudft_forward`] on the full grid.
pub fn ifft_recon(kspace: &MultiCoilKSpace, sens: &CoilSensitivities) -> Result<Image> {
    let grid = CartesianGrid::new(sens.n_x(), sens.n_y())?;
    let gk = GridKSpace::from_kspace(kspace, grid)?;
    ifft_recon_grid(&gk, sens)
}

pub fn ifft_recon_grid(gk: &GridKSpace, sens: &CoilSensitivities) -> Result<Image> {
    let (nx, ny, nc) = (sens.n_x(), sens.n_y(), sens.n_coils());
    if gk.grid.n_x != nx || gk.grid.n_y != ny || gk.n_coils() != nc {
        return Err(Error::invalid("grid k-space does not match sensitivity maps"));
    }
    // e_x[m][ix] = exp(+2 pi i k_m r_ix)
    let ex: Vec<Vec<Complex64>> = (0..nx)
        .map(|m| phase_row(m as f64 / nx as f64 - 0.5, nx, 1.0))
        .collect();
    let ey: Vec<Vec<Complex64>> = (0..ny)
        .map(|m| phase_row(m as f64 / ny as f64 - 0.5, ny, 1.0))
        .collect();
    let scale = 1.0 / (nx * ny) as f64;

    let coil_imgs: Vec<Array2<Complex64>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            // along x: tmp[ix, my] = sum_mx y[mx, my] e_x[mx][ix]
            let mut tmp = Array2::<Complex64>::zeros((nx, ny));
            for my in 0..ny {
                for mx in 0..nx {
                    let v = gk.values[[my * nx + mx, c]];
                    if v == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for (ix, e) in ex[mx].iter().enumerate() {
                        tmp[[ix, my]] += v * e;
                    }
                }
            }
            let mut img = Array2::<Complex64>::zeros((nx, ny));
            for my in 0..ny {
                for ix in 0..nx {
                    let v = tmp[[ix, my]];
                    for (iy, e) in ey[my].iter().enumerate() {
                        img[[ix, iy]] += v * e;
                    }
                }
            }
            img
        })
        .collect();

    let mut out = Array2::<Complex64>::zeros((nx, ny));
    for (c, img) in coil_imgs.iter().enumerate() {
        for ix in 0..nx {
            for iy in 0..ny {
                out[[ix, iy]] += sens.maps[[ix, iy, c]].conj() * img[[ix, iy]] * scale;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`nudft_forward`] scaled by `1/(n_x n_y)`, without density
/// compensation (the zero-filled "inverse NUFFT" baseline).
///
/// Samples are accumulated in fixed chunks of 256 and chunk partial sums are
/// added in chunk order, so the result is independent of the thread count.
pub fn adjoint_nudft(kspace: &MultiCoilKSpace, sens: &CoilSensitivities) -> Result<Image> {
    let (nx, ny, nc) = (sens.n_x(), sens.n_y(), sens.n_coils());
    if kspace.n_coils() != nc {
        return Err(Error::invalid("coil count mismatch between k-space and maps"));
    }
    let partials: Vec<Array3<Complex64>> = kspace
        .coords
        .par_chunks(ADJOINT_CHUNK)
        .enumerate()
        .map(|(chunk, coords)| {
            let mut acc = Array3::<Complex64>::zeros((nx, ny, nc));
            for (j, k) in coords.iter().enumerate() {
                let row = kspace.values.row(chunk * ADJOINT_CHUNK + j);
                let ex = phase_row(k.kx, nx, 1.0);
                let ey = phase_row(k.ky, ny, 1.0);
                for iy in 0..ny {
                    for ix in 0..nx {
                        let e = ex[ix] * ey[iy];
                        for c in 0..nc {
                            acc[[ix, iy, c]] += row[c] * e;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let scale = 1.0 / (nx * ny) as f64;
    let mut out = Array2::<Complex64>::zeros((nx, ny));
    for p in &partials {
        for ix in 0..nx {
            for iy in 0..ny {
                for c in 0..nc {
                    out[[ix, iy]] += sens.maps[[ix, iy, c]].conj() * p[[ix, iy, c]] * scale;
                }
            }
        }
    }
    Ok(out)
}
