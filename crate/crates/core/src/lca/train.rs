use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{code_shape, lca_encode, normalize, reconstruct, Activations, Dictionary, LcaParams, Patch};
use crate::error::{Error, Result};

/// Gradient of `½‖x − D a‖²` with respect to every kernel entry, `a` held fixed.
///
/// `∂/∂d_k(p, q) = −Σ_{i,j} r(i + p, j + q) a_k(i, j)` where `r = x − D a`.
pub fn kernel_gradient(image: &Patch, d: &Dictionary, a: &Activations) -> Result<Vec<f64>> {
    let (rows, cols) = code_shape(image, d)?;
    if (a.rows, a.cols, a.count) != (rows, cols, d.count()) {
        return Err(Error::ShapeMismatch("code does not match image and dictionary".into()));
    }
    let recon = reconstruct(d, a)?;
    let residual: Vec<f64> = image.data.iter().zip(&recon.data).map(|(x, r)| x - r).collect();
    let s = d.side();
    let mut grad = vec![0.0; d.count() * s * s];
    for k in 0..d.count() {
        let g = &mut grad[k * s * s..(k + 1) * s * s];
        for (idx, &coef) in a.map(k).iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            let (i, j) = (idx / cols, idx % cols);
            for p in 0..s {
                let res = &residual[(i + p) * image.cols + j..(i + p) * image.cols + j + s];
                for (gq, r) in g[p * s..(p + 1) * s].iter_mut().zip(res) {
                    *gq -= coef * r;
                }
            }
        }
    }
    Ok(grad)
}

/// Mean squared residual of the code against the normalized image.
pub fn reconstruction_error(image: &Patch, d: &Dictionary, params: &LcaParams) -> Result<f64> {
    let x = normalize(image);
    let a = lca_encode(image, d, params)?;
    let recon = reconstruct(d, &a)?;
    let sse: f64 = x.data.iter().zip(&recon.data).map(|(x, r)| (x - r).powi(2)).sum();
    Ok(sse / x.data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub kernels: usize,
    pub kernel_side: usize,
    pub lca: LcaParams,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            kernels: 32,
            kernel_side: 8,
            lca: LcaParams::default(),
            epochs: 10,
            learning_rate: 0.003,
            seed: 0,
        }
    }
}

/// Online dictionary learner: one encode and one kernel step per image.
#[derive(Clone, Debug)]
pub struct DictionaryTrainer {
    dictionary: Dictionary,
    config: DictionaryConfig,
}

impl DictionaryTrainer {
    pub fn new(config: DictionaryConfig) -> Result<Self> {
        config.lca.validate()?;
        if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be finite and >= 0"));
        }
        let dictionary = Dictionary::random(config.kernels, config.kernel_side, config.seed)?;
        Ok(DictionaryTrainer { dictionary, config })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn into_dictionary(self) -> Dictionary {
        self.dictionary
    }

    /// Encodes `image`, steps the kernels down the reconstruction gradient
    /// and renormalizes them. Returns the pre-update mean squared residual.
    pub fn update(&mut self, image: &Patch) -> Result<f64> {
        let x = normalize(image);
        let a = lca_encode(image, &self.dictionary, &self.config.lca)?;
        let recon = reconstruct(&self.dictionary, &a)?;
        let mse = x
            .data
            .iter()
            .zip(&recon.data)
            .map(|(x, r)| (x - r).powi(2))
            .sum::<f64>()
            / x.data.len() as f64;
        if a.nonzeros() > 0 {
            let grad = kernel_gradient(&x, &self.dictionary, &a)?;
            let lr = self.config.learning_rate;
            let kernels: Vec<f64> = self
                .dictionary
                .kernels()
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - lr * g)
                .collect();
            self.dictionary = Dictionary::from_kernels(self.dictionary.count(), self.dictionary.side(), kernels)?;
        }
        Ok(mse)
    }
}

/// Trains a dictionary over `images` for `config.epochs` passes in a seeded
/// order. With zero epochs the seeded random dictionary is returned.
pub fn train_dictionary(images: &[Patch], config: &DictionaryConfig) -> Result<Dictionary> {
    if images.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut trainer = DictionaryTrainer::new(config.clone())?;
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d1c7);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            trainer.update(&images[i])?;
        }
    }
    Ok(trainer.into_dictionary())
}
