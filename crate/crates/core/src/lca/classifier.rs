use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{lca_encode, Activations, Dictionary, LcaParams, Patch};
use crate::error::{Error, Result};

/// Max-abs pooling of each code map.
pub fn pool_code(a: &Activations) -> Vec<f64> {
    (0..a.count)
        .map(|k| a.map(k).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect()
}

/// Logistic frame classifier over pooled code features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl FrameClassifier {
    pub fn zeros(k: usize) -> Self {
        FrameClassifier {
            weights: vec![0.0; k],
            bias: 0.0,
        }
    }

    /// Probability of the positive class.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} features for a {}-weight classifier",
                features.len(),
                self.weights.len()
            )));
        }
        let z = self.bias + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>();
        Ok(sigmoid(z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on the standardized weights.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 500,
            learning_rate: 0.5,
            weight_decay: 1e-3,
            seed: 0,
        }
    }
}

/// Full-batch gradient descent on mean cross-entropy. Features are
/// standardized during training and the scaling is folded back into the
/// returned weights, so the classifier consumes raw pooled features.
pub fn train_classifier(features: &[Vec<f64>], labels: &[u8], config: &ClassifierConfig) -> Result<FrameClassifier> {
    if features.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature vectors, {} labels",
            features.len(),
            labels.len()
        )));
    }
    let k = features[0].len();
    if features.iter().any(|f| f.len() != k) {
        return Err(Error::ShapeMismatch("feature vectors differ in length".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels", "must be 0 or 1"));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }

    let n = features.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let var = features.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 1e-24 {
                1.0 / var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|f| (0..k).map(|j| (f[j] - mean[j]) * scale[j]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut w: Vec<f64> = (0..k).map(|_| init.sample(&mut rng)).collect();
    let mut b = 0.0;
    for _ in 0..config.epochs {
        let mut gw = vec![0.0; k];
        let mut gb = 0.0;
        for (x, &y) in standardized.iter().zip(labels) {
            let z = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            let err = sigmoid(z) - f64::from(y);
            gb += err;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * (g / n + config.weight_decay * *wi);
        }
        b -= config.learning_rate * gb / n;
    }

    let weights: Vec<f64> = w.iter().zip(&scale).map(|(wi, s)| wi * s).collect();
    let bias = b - weights.iter().zip(&mean).map(|(wi, m)| wi * m).sum::<f64>();
    Ok(FrameClassifier { weights, bias })
}

/// `sigmoid(w · pool(lca(crop)) + b)`.
pub fn classify_frame(crop: &Patch, d: &Dictionary, clf: &FrameClassifier, params: &LcaParams) -> Result<f64> {
    let a = lca_encode(crop, d, params)?;
    clf.predict(&pool_code(&a))
}
