//! Binary k-space/image containers, model checkpoints and mask files.
//!
//! Container layout (little-endian):
//!
//! ```text
//! magic (8 bytes) | header length (u32) | JSON header | payload
//! ```
//!
//! The k-space payload is `f32` `(re, im)` pairs ordered `[sample][coil]`,
//! followed by `f32` coordinates ordered `[sample][dim]`. The checkpoint
//! payload is the model parameters as `f32` in [`NikModel`] layer order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{Coord, Image, MultiCoilKSpace, SamplingMask};
use crate::nik::{FeatureEncoding, NikArchitecture, NikModel};

pub const KSPACE_MAGIC: &[u8; 8] = b"PISCOKS1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PISCOCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub n_samples: usize,
    pub n_coils: usize,
    pub n_fe: usize,
    /// 2 for `(k_x, k_y)`, 3 for `(k_x, k_y, t)`.
    pub coord_dim: usize,
    pub dtype: String,
    /// Set when the samples form an image or a full grid, `[n_x, n_y]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 2]>,
}

fn write_framed(out: &mut impl Write, magic: &[u8; 8], header: &[u8], payload: &[u8]) -> Result<()> {
    let len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
    out.write_all(magic)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(header)?;
    out.write_all(payload)?;
    Ok(())
}

fn read_framed(bytes: &[u8], magic: &[u8; 8]) -> Result<(Vec<u8>, Vec<u8>)> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "missing {} magic",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 12 + len {
        return Err(Error::Format("truncated header".into()));
    }
    Ok((bytes[12..12 + len].to_vec(), bytes[12 + len..].to_vec()))
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn f32s(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    if payload.len() != 4 * expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            4 * expected
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

pub fn write_kspace(
    out: &mut impl Write,
    kspace: &MultiCoilKSpace,
    shape: Option<[usize; 2]>,
) -> Result<()> {
    let header = ContainerHeader {
        n_samples: kspace.n_samples(),
        n_coils: kspace.n_coils(),
        n_fe: kspace.n_fe,
        coord_dim: 3,
        dtype: "c64".into(),
        shape,
    };
    let mut payload = Vec::with_capacity(4 * kspace.n_samples() * (2 * kspace.n_coils() + 3));
    for v in kspace.values.iter() {
        push_f32(&mut payload, v.re);
        push_f32(&mut payload, v.im);
    }
    for c in &kspace.coords {
        push_f32(&mut payload, c.kx);
        push_f32(&mut payload, c.ky);
        push_f32(&mut payload, c.t);
    }
    write_framed(out, KSPACE_MAGIC, &serde_json::to_vec(&header)?, &payload)
}

pub fn read_kspace(input: &mut impl Read) -> Result<(MultiCoilKSpace, ContainerHeader)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (header, payload) = read_framed(&bytes, KSPACE_MAGIC)?;
    let header: ContainerHeader = serde_json::from_slice(&header)?;
    if header.dtype != "c64" {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if !(2..=3).contains(&header.coord_dim) {
        return Err(Error::Format(format!("coordinate dimension {}", header.coord_dim)));
    }
    let (n, nc, dim) = (header.n_samples, header.n_coils, header.coord_dim);
    let floats = f32s(&payload, n * (2 * nc + dim))?;
    let (vals, coords) = floats.split_at(2 * n * nc);
    let values = Array2::from_shape_fn((n, nc), |(i, c)| {
        let k = 2 * (i * nc + c);
        Complex64::new(vals[k], vals[k + 1])
    });
    let coords = coords
        .chunks_exact(dim)
        .map(|c| Coord::new(c[0], c[1], if dim == 3 { c[2] } else { 0.0 }))
        .collect();
    let kspace = MultiCoilKSpace::new(coords, values, header.n_fe)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((kspace, header))
}

pub fn save_kspace(path: &Path, kspace: &MultiCoilKSpace, shape: Option<[usize; 2]>) -> Result<()> {
    let mut buf = Vec::new();
    write_kspace(&mut buf, kspace, shape)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_kspace(path: &Path) -> Result<(MultiCoilKSpace, ContainerHeader)> {
    read_kspace(&mut fs::File::open(path)?)
}

/// Stores an image as a one-coil container whose coordinates are the pixel
/// positions `(ix - n_x/2, iy - n_y/2)`, row-major with `ix` fastest.
pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    let (nx, ny) = image.dim();
    let mut coords = Vec::with_capacity(nx * ny);
    let mut values = Array2::zeros((nx * ny, 1));
    for iy in 0..ny {
        for ix in 0..nx {
            coords.push(Coord::new(
                ix as f64 - (nx / 2) as f64,
                iy as f64 - (ny / 2) as f64,
                0.0,
            ));
            values[[iy * nx + ix, 0]] = image[[ix, iy]];
        }
    }
    // pixel positions exceed the k-space domain, so bypass the k-space checks
    let kspace = MultiCoilKSpace {
        coords,
        values,
        n_fe: nx,
    };
    save_kspace(path, &kspace, Some([nx, ny]))
}

pub fn load_image(path: &Path) -> Result<Image> {
    let (k, header) = load_kspace(path)?;
    let [nx, ny] = header
        .shape
        .ok_or_else(|| Error::Format("image container without shape".into()))?;
    if k.n_coils() != 1 || k.n_samples() != nx * ny {
        return Err(Error::Format("container is not a single-coil image".into()));
    }
    Ok(Array2::from_shape_fn((nx, ny), |(ix, iy)| k.values[[iy * nx + ix, 0]]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: NikArchitecture,
    pub encoding: FeatureEncoding,
    pub n_params: usize,
    pub seed: u64,
    /// Free-form training configuration, kept for provenance.
    pub config: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, model: &NikModel, seed: u64, config: serde_json::Value) -> Result<()> {
    let header = CheckpointHeader {
        arch: model.arch.clone(),
        encoding: model.encoding.clone(),
        n_params: model.n_params(),
        seed,
        config,
    };
    let mut payload = Vec::with_capacity(4 * model.n_params());
    for &p in &model.params {
        push_f32(&mut payload, p);
    }
    let mut buf = Vec::new();
    write_framed(&mut buf, CHECKPOINT_MAGIC, &serde_json::to_vec(&header)?, &payload)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Restores a model; parameters come back rounded to `f32`.
pub fn load_checkpoint(path: &Path) -> Result<(NikModel, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let (header, payload) = read_framed(&bytes, CHECKPOINT_MAGIC)?;
    let header: CheckpointHeader = serde_json::from_slice(&header)?;
    let params = f32s(&payload, header.n_params)?;
    let model = NikModel::from_parts(header.arch.clone(), header.encoding.clone(), params)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((model, header))
}

/// Line mask as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskFile {
    pub n_x: usize,
    pub n_y: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub kept_lines: Vec<usize>,
}

impl MaskFile {
    pub fn from_mask(mask: &SamplingMask) -> Self {
        Self {
            n_x: mask.n_x(),
            n_y: mask.n_y(),
            acceleration: mask.acceleration,
            center_fraction: mask.center_fraction,
            kept_lines: mask.kept_lines(),
        }
    }

    pub fn to_mask(&self) -> Result<SamplingMask> {
        if let Some(&l) = self.kept_lines.iter().find(|&&l| l >= self.n_y) {
            return Err(Error::Format(format!("kept line {l} outside 0..{}", self.n_y)));
        }
        let mut kept = Array2::from_elem((self.n_x, self.n_y), false);
        for &l in &self.kept_lines {
            kept.column_mut(l).fill(true);
        }
        Ok(SamplingMask {
            kept,
            acceleration: self.acceleration,
            center_fraction: self.center_fraction,
        })
    }
}

pub fn save_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(&MaskFile::from_mask(mask))?)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<SamplingMask> {
    let file: MaskFile = serde_json::from_slice(&fs::read(path)?)?;
    file.to_mask()
}
