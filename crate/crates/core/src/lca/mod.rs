//! Convolutional sparse coding with the Locally Competitive Algorithm.
//!
//! An image `x` is approximated by a superposition of `K` small kernels
//! placed at every valid offset, `x ≈ Σ_k d_k ⋆ a_k`, where the code maps
//! `a_k` are found by running LCA dynamics on membrane potentials `u`:
//!
//! ```text
//! u ← u + η (b − u − (G a − a)),   a = soft(u, λ)
//! ```
//!
//! with drive `b_k = x ⊛ d_k` (valid correlation) and `G a` computed as the
//! correlation of the current reconstruction with each kernel. The rate is
//! `η = min(step, 1 / ‖D‖²)`: the requested step, clamped to the bound under
//! which the discrete dynamics cannot increase the energy. Coherent
//! dictionaries have `‖D‖² ≫ 1`, where the raw step would diverge.

mod classifier;
mod persist;
mod train;

pub use classifier::{classify_frame, pool_code, train_classifier, ClassifierConfig, FrameClassifier};
pub use persist::{load_classifier, load_dictionary, save_classifier, save_dictionary};
pub use train::{kernel_gradient, reconstruction_error, train_dictionary, DictionaryConfig, DictionaryTrainer};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued single-channel image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} patch",
                data.len()
            )));
        }
        Ok(Patch { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Patch {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Shifts to zero mean and scales to unit variance; constant images become all-zero.
pub fn normalize(image: &Patch) -> Patch {
    let n = image.data.len() as f64;
    let mean = image.data.iter().sum::<f64>() / n;
    let var = image.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-24 { 1.0 / var.sqrt() } else { 0.0 };
    Patch {
        rows: image.rows,
        cols: image.cols,
        data: image.data.iter().map(|v| (v - mean) * scale).collect(),
    }
}

/// `K` square kernels of side `s`, each with unit L2 norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    count: usize,
    side: usize,
    kernels: Vec<f64>,
    operator_norm_sq: f64,
}

impl Dictionary {
    /// Builds a dictionary, normalizing every kernel to unit norm.
    pub fn from_kernels(count: usize, side: usize, mut kernels: Vec<f64>) -> Result<Self> {
        if count == 0 || side == 0 {
            return Err(Error::invalid("dictionary", "K and s must be at least 1"));
        }
        if kernels.len() != count * side * side {
            return Err(Error::ShapeMismatch(format!(
                "{} kernel values for K={count}, s={side}",
                kernels.len()
            )));
        }
        if kernels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        for kernel in kernels.chunks_mut(side * side) {
            let norm = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid("dictionary", "kernel with zero norm"));
            }
            kernel.iter_mut().for_each(|v| *v /= norm);
        }
        let mut d = Dictionary {
            count,
            side,
            kernels,
            operator_norm_sq: 1.0,
        };
        d.operator_norm_sq = d.estimate_operator_norm_sq();
        Ok(d)
    }

    /// Seeded Gaussian kernels, normalized.
    pub fn random(count: usize, side: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernels = (0..count * side * side)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Dictionary::from_kernels(count, side, kernels)
    }

    /// Number of kernels `K`.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Kernel side `s`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn kernel(&self, k: usize) -> &[f64] {
        let n = self.side * self.side;
        &self.kernels[k * n..(k + 1) * n]
    }

    pub fn kernels(&self) -> &[f64] {
        &self.kernels
    }

    /// Largest eigenvalue of the Gram operator `DᵀD` over an unbounded domain.
    pub fn operator_norm_sq(&self) -> f64 {
        self.operator_norm_sq
    }

    /// `sup_ω Σ_k |d̂_k(ω)|²`, evaluated on a frequency grid eight times
    /// finer than the kernel. The finite-domain operator norm never exceeds it.
    fn estimate_operator_norm_sq(&self) -> f64 {
        let s = self.side;
        let n = (8 * s).max(16);
        let twiddle: Vec<(f64, f64)> = (0..n * s)
            .map(|i| {
                let (f, p) = (i / s, i % s);
                let angle = -2.0 * std::f64::consts::PI * (f * p) as f64 / n as f64;
                (angle.cos(), angle.sin())
            })
            .collect();
        let mut power = vec![0.0f64; n * n];
        let mut partial = vec![(0.0f64, 0.0f64); s * n];
        for k in 0..self.count {
            let kernel = self.kernel(k);
            // transform along columns: partial[row][fx]
            for r in 0..s {
                for fx in 0..n {
                    let (mut re, mut im) = (0.0, 0.0);
                    for c in 0..s {
                        let (cr, ci) = twiddle[fx * s + c];
                        re += kernel[r * s + c] * cr;
                        im += kernel[r * s + c] * ci;
                    }
                    partial[r * n + fx] = (re, im);
                }
            }
            for fy in 0..n {
                for fx in 0..n {
                    let (mut re, mut im) = (0.0, 0.0);
                    for r in 0..s {
                        let (tr, ti) = twiddle[fy * s + r];
                        let (pr, pi) = partial[r * n + fx];
                        re += pr * tr - pi * ti;
                        im += pr * ti + pi * tr;
                    }
                    power[fy * n + fx] += re * re + im * im;
                }
            }
        }
        power.into_iter().fold(1.0, f64::max)
    }
}

/// Sparse code: `K` maps of `(H − s + 1) x (W − s + 1)` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activations {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub code: Vec<f64>,
    pub lambda: f64,
}

impl Activations {
    pub fn zeros(count: usize, rows: usize, cols: usize, lambda: f64) -> Self {
        Activations {
            count,
            rows,
            cols,
            code: vec![0.0; count * rows * cols],
            lambda,
        }
    }

    pub fn map(&self, k: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.code[k * n..(k + 1) * n]
    }

    pub fn l1(&self) -> f64 {
        self.code.iter().map(|v| v.abs()).sum()
    }

    pub fn nonzeros(&self) -> usize {
        self.code.iter().filter(|v| **v != 0.0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcaParams {
    pub lambda: f64,
    pub step: f64,
    pub n_steps: usize,
}

impl Default for LcaParams {
    fn default() -> Self {
        LcaParams {
            lambda: 0.5,
            step: 0.1,
            n_steps: 100,
        }
    }
}

impl LcaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and > 0"));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::invalid("step", "must lie in (0, 1]"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Code-map geometry for an image under a dictionary.
fn code_shape(image: &Patch, d: &Dictionary) -> Result<(usize, usize)> {
    let s = d.side();
    if image.rows < s || image.cols < s {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} image is smaller than {s}x{s} kernels",
            image.rows, image.cols
        )));
    }
    Ok((image.rows - s + 1, image.cols - s + 1))
}

/// Valid correlation of the image with every kernel.
pub fn drive(image: &Patch, d: &Dictionary) -> Result<Activations> {
    let (rows, cols) = code_shape(image, d)?;
    let s = d.side();
    let mut out = Activations::zeros(d.count(), rows, cols, 0.0);
    for k in 0..d.count() {
        let kernel = d.kernel(k);
        let map = &mut out.code[k * rows * cols..(k + 1) * rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = 0.0;
                for p in 0..s {
                    let img = &image.data[(i + p) * image.cols + j..(i + p) * image.cols + j + s];
                    let ker = &kernel[p * s..(p + 1) * s];
                    acc += img.iter().zip(ker).map(|(x, w)| x * w).sum::<f64>();
                }
                map[i * cols + j] = acc;
            }
        }
    }
    Ok(out)
}

/// Convolutional superposition `Σ_k d_k ⋆ a_k` on the full image grid.
pub fn reconstruct(d: &Dictionary, a: &Activations) -> Result<Patch> {
    if a.count != d.count() {
        return Err(Error::ShapeMismatch(format!(
            "code has {} maps, dictionary has {} kernels",
            a.count,
            d.count()
        )));
    }
    let s = d.side();
    let (rows, cols) = (a.rows + s - 1, a.cols + s - 1);
    let mut out = Patch::zeros(rows, cols);
    for k in 0..a.count {
        let kernel = d.kernel(k);
        for (idx, &coef) in a.map(k).iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            let (i, j) = (idx / a.cols, idx % a.cols);
            for p in 0..s {
                let dst = &mut out.data[(i + p) * cols + j..(i + p) * cols + j + s];
                for (o, w) in dst.iter_mut().zip(&kernel[p * s..(p + 1) * s]) {
                    *o += coef * w;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// `½‖x − D a‖² + λ‖a‖₁`, evaluated against `image` as given.
pub fn lca_energy(image: &Patch, d: &Dictionary, a: &Activations, lambda: f64) -> Result<f64> {
    let (rows, cols) = code_shape(image, d)?;
    if (a.rows, a.cols) != (rows, cols) {
        return Err(Error::ShapeMismatch(format!(
            "code maps are {}x{}, image needs {rows}x{cols}",
            a.rows, a.cols
        )));
    }
    let recon = reconstruct(d, a)?;
    let residual: f64 = image.data.iter().zip(&recon.data).map(|(x, r)| (x - r).powi(2)).sum();
    Ok(0.5 * residual + lambda * a.l1())
}

/// Final state of an LCA run, with the energy after every step.
#[derive(Clone, Debug)]
pub struct LcaTrace {
    pub activations: Activations,
    pub potentials: Vec<f64>,
    /// `energies[t]` is the energy after step `t + 1`, against the normalized image.
    pub energies: Vec<f64>,
}

/// Sparse-codes `image` (normalized internally to zero mean, unit variance).
pub fn lca_encode(image: &Patch, d: &Dictionary, params: &LcaParams) -> Result<Activations> {
    run_lca(image, d, params, false).map(|t| t.activations)
}

/// [`lca_encode`] that also returns final potentials and the energy trace.
pub fn lca_encode_traced(image: &Patch, d: &Dictionary, params: &LcaParams) -> Result<LcaTrace> {
    run_lca(image, d, params, true)
}

fn run_lca(image: &Patch, d: &Dictionary, params: &LcaParams, trace: bool) -> Result<LcaTrace> {
    params.validate()?;
    if image.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let x = normalize(image);
    let b = drive(&x, d)?;
    let (count, rows, cols) = (b.count, b.rows, b.cols);
    let lambda = params.lambda;
    let mut a = Activations::zeros(count, rows, cols, lambda);
    let mut u = vec![0.0; b.code.len()];
    let mut energies = Vec::new();

    let x_norm_sq = x.norm_sq();
    let max_drive = b.code.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lambda >= max_drive {
        // Potentials start at zero and relax toward b without ever crossing λ.
        if trace {
            energies = vec![0.5 * x_norm_sq; params.n_steps];
        }
        return Ok(LcaTrace {
            activations: a,
            potentials: u,
            energies,
        });
    }

    let eta = params.step.min(1.0 / d.operator_norm_sq());
    for _ in 0..params.n_steps {
        // G a = Dᵀ D a, via correlating the reconstruction with each kernel.
        let gram = if a.nonzeros() > 0 {
            drive(&reconstruct(d, &a)?, d)?.code
        } else {
            vec![0.0; u.len()]
        };
        for i in 0..u.len() {
            let inhibition = gram[i] - a.code[i];
            u[i] += eta * (b.code[i] - u[i] - inhibition);
        }
        for (ai, &ui) in a.code.iter_mut().zip(&u) {
            *ai = soft_threshold(ui, lambda);
        }
        if trace {
            energies.push(lca_energy(&x, d, &a, lambda)?);
        }
    }
    Ok(LcaTrace {
        activations: a,
        potentials: u,
        energies,
    })
}
