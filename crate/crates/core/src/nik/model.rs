use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureEncoding;
use crate::error::{Error, Result};
use crate::kspace::{Coord, ValueSource};

/// Rows per independently processed block; fixes the gradient summation order.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NikArchitecture {
    pub n_features: usize,
    /// Standard deviation of the feature frequencies.
    pub sigma: f64,
    pub hidden: usize,
    /// Number of linear layers; all but the last are followed by `sin(omega x)`.
    pub n_layers: usize,
    pub omega: f64,
    pub n_coils: usize,
    /// Multiplies the raw network output, putting it in data units.
    pub output_scale: f64,
}

impl NikArchitecture {
    /// 256 features, 4 layers of 512 units, `omega = 20`.
    pub fn standard(n_coils: usize, sigma: f64) -> Self {
        Self {
            n_features: 256,
            sigma,
            hidden: 512,
            n_layers: 4,
            omega: 20.0,
            n_coils,
            output_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 || self.hidden == 0 || self.n_features == 0 || self.n_coils == 0 {
            return Err(Error::invalid(format!(
                "need >= 2 layers and positive sizes, got {} layers, {} hidden, {} features, {} coils",
                self.n_layers, self.hidden, self.n_features, self.n_coils
            )));
        }
        if !(self.sigma > 0.0 && self.omega > 0.0 && self.output_scale > 0.0) {
            return Err(Error::invalid("sigma, omega and output_scale must be positive"));
        }
        Ok(())
    }

    /// `(out, in)` of every linear layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.n_layers);
        let mut d_in = 2 * self.n_features;
        for l in 0..self.n_layers {
            let d_out = if l + 1 == self.n_layers { 2 * self.n_coils } else { self.hidden };
            shapes.push((d_out, d_in));
            d_in = d_out;
        }
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// Coordinate network mapping `(k_x, k_y, t)` to `N_c` complex values.
///
/// Parameters are one flat vector: per layer, the `out x in` weight matrix in
/// row-major order followed by the `out` biases. Output reals `(2c, 2c+1)`
/// are the real and imaginary part of coil `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NikModel {
    pub arch: NikArchitecture,
    pub encoding: FeatureEncoding,
    pub params: Vec<f64>,
}

/// Activations of one row block.
struct Block {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// `omega cos(omega z)` of each hidden layer's pre-activation `z`.
    slopes: Vec<Array2<f64>>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    blocks: Vec<Block>,
}

impl NikModel {
    /// Sinusoidal-network initialisation: the first layer draws weights from
    /// `U(-1/in, 1/in)`, later layers from `U(-sqrt(6/in)/omega, sqrt(6/in)/omega)`;
    /// biases from `U(-1/sqrt(in), 1/sqrt(in))`. The encoding uses `seed` and
    /// the layers `seed + 1`.
    pub fn new(arch: NikArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let encoding = FeatureEncoding::new(arch.n_features, arch.sigma, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut params = Vec::with_capacity(arch.n_params());
        for (l, (d_out, d_in)) in arch.layer_shapes().into_iter().enumerate() {
            let fan = d_in as f64;
            let w_lim = if l == 0 { 1.0 / fan } else { (6.0 / fan).sqrt() / arch.omega };
            let b_lim = 1.0 / fan.sqrt();
            params.extend((0..d_out * d_in).map(|_| rng.random_range(-w_lim..=w_lim)));
            params.extend((0..d_out).map(|_| rng.random_range(-b_lim..=b_lim)));
        }
        Ok(Self {
            arch,
            encoding,
            params,
        })
    }

    pub fn from_parts(arch: NikArchitecture, encoding: FeatureEncoding, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if encoding.n_features() != arch.n_features || encoding.b.ncols() != 3 {
            return Err(Error::invalid("encoding does not match the architecture"));
        }
        if params.len() != arch.n_params() {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, got {}",
                arch.n_params(),
                params.len()
            )));
        }
        Ok(Self {
            arch,
            encoding,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> Vec<(ArrayView2<'_, f64>, ArrayView1<'_, f64>)> {
        let mut out = Vec::new();
        let mut off = 0;
        for (d_out, d_in) in self.arch.layer_shapes() {
            let w = ArrayView2::from_shape((d_out, d_in), &self.params[off..off + d_out * d_in])
                .expect("layer shape");
            off += d_out * d_in;
            let b = ArrayView1::from(&self.params[off..off + d_out]);
            off += d_out;
            out.push((w, b));
        }
        out
    }

    fn forward_block(&self, coords: &[Coord]) -> (Array2<f64>, Block) {
        let layers = self.layers();
        let omega = self.arch.omega;
        let mut x = self.encoding.encode_batch(coords);
        let mut block = Block {
            inputs: Vec::with_capacity(layers.len()),
            slopes: Vec::with_capacity(layers.len() - 1),
        };
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = x.dot(&w.t());
            z += b;
            block.inputs.push(x);
            x = if l + 1 == layers.len() {
                z
            } else {
                block.slopes.push(z.mapv(|v| omega * (omega * v).cos()));
                z.mapv(|v| (omega * v).sin())
            };
        }
        (x, block)
    }

    fn to_complex(&self, raw: &Array2<f64>) -> Array2<Complex64> {
        let scale = self.arch.output_scale;
        Array2::from_shape_fn((raw.nrows(), self.arch.n_coils), |(i, c)| {
            Complex64::new(raw[[i, 2 * c]], raw[[i, 2 * c + 1]]) * scale
        })
    }

    pub fn forward(&self, coords: &[Coord]) -> Array2<Complex64> {
        self.forward_cached(coords).0
    }

    /// Forward pass that also returns what [`NikModel::backward`] needs.
    pub fn forward_cached(&self, coords: &[Coord]) -> (Array2<Complex64>, ForwardCache) {
        let parts: Vec<(Array2<f64>, Block)> = coords
            .par_chunks(CHUNK)
            .map(|chunk| self.forward_block(chunk))
            .collect();
        let mut out = Array2::zeros((coords.len(), self.arch.n_coils));
        let mut blocks = Vec::with_capacity(parts.len());
        for (k, (raw, block)) in parts.into_iter().enumerate() {
            let start = k * CHUNK;
            out.slice_mut(s![start..start + raw.nrows(), ..])
                .assign(&self.to_complex(&raw));
            blocks.push(block);
        }
        (out, ForwardCache { blocks })
    }

    /// Parameter gradient given real-pair cotangents `dL/dRe + i dL/dIm` of
    /// the outputs of the cached forward pass.
    ///
    /// Blocks of 256 rows are differentiated in parallel and summed in block
    /// order, so the result does not depend on the thread count.
    pub fn backward(&self, cache: &ForwardCache, cotangents: &Array2<Complex64>) -> Result<Vec<f64>> {
        let rows: usize = cache.blocks.iter().map(|b| b.inputs[0].nrows()).sum();
        if cotangents.dim() != (rows, self.arch.n_coils) {
            return Err(Error::invalid(format!(
                "cotangents {:?} do not match the cached batch ({rows}, {})",
                cotangents.dim(),
                self.arch.n_coils
            )));
        }
        let layers = self.layers();
        let scale = self.arch.output_scale;
        let partial: Vec<Vec<f64>> = cache
            .blocks
            .par_iter()
            .enumerate()
            .map(|(k, block)| {
                let n = block.inputs[0].nrows();
                let cot = cotangents.slice(s![k * CHUNK..k * CHUNK + n, ..]);
                let mut d = Array2::from_shape_fn((n, 2 * self.arch.n_coils), |(i, j)| {
                    let g = cot[[i, j / 2]];
                    scale * if j % 2 == 0 { g.re } else { g.im }
                });
                let mut grads = vec![0.0; self.params.len()];
                let mut end = self.params.len();
                for l in (0..layers.len()).rev() {
                    let (w, _) = &layers[l];
                    let (d_out, d_in) = w.dim();
                    let db = d.sum_axis(Axis(0));
                    let dw = d.t().dot(&block.inputs[l]);
                    grads[end - d_out..end].copy_from_slice(db.as_slice().expect("contiguous"));
                    end -= d_out;
                    for (g, v) in grads[end - d_out * d_in..end].iter_mut().zip(dw.iter()) {
                        *g = *v;
                    }
                    end -= d_out * d_in;
                    if l > 0 {
                        d = d.dot(w) * &block.slopes[l - 1];
                    }
                }
                grads
            })
            .collect();
        let mut total = vec![0.0; self.params.len()];
        for p in &partial {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        Ok(total)
    }
}

impl ValueSource for NikModel {
    fn n_coils(&self) -> usize {
        self.arch.n_coils
    }

    fn values_at(&self, coords: &[Coord]) -> Result<Array2<Complex64>> {
        Ok(self.forward(coords))
    }
}
