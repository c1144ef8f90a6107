//! The sparse-coding system: nerve-region extraction, training and prediction.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate, decide_probability, sample_stride, FrameMeasurement, System, VideoPrediction, VideoVerdict};
use crate::detection::{BBox, Detector};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::lca::{
    classify_frame, lca_encode, load_classifier, load_dictionary, pool_code, reconstruction_error, save_classifier,
    save_dictionary, train_classifier, ClassifierConfig, Dictionary, DictionaryConfig, DictionaryTrainer,
    FrameClassifier, LcaParams, Patch,
};
use crate::manifest::Label;

/// Fixed physical window resampled around the nerve box center.
///
/// Sampling at a fixed millimeter pitch instead of stretching the box keeps
/// the absolute sheath width visible to the code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub rows: usize,
    pub cols: usize,
    pub pitch_mm: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            rows: 32,
            cols: 32,
            pitch_mm: 0.5,
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("region", "rows and cols must be positive"));
        }
        if !(self.pitch_mm > 0.0 && self.pitch_mm.is_finite()) {
            return Err(Error::invalid("pitch_mm", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Area-averages the frame over a `rows × cols` grid of square cells with
/// side `pitch_px`, centered on `center`. Cells past the border replicate
/// the edge pixels.
fn resample_grid(frame: &Frame, center: (f64, f64), rows: usize, cols: usize, pitch_px: f64) -> Patch {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let x_start = center.0 - cols as f64 * pitch_px / 2.0;
    let y_start = center.1 - rows as f64 * pitch_px / 2.0;
    // Pixel centers sit at i + 0.5; a cell [a, b) covers indices ceil(a - 0.5) .. ceil(b - 0.5).
    let span = |start: f64, i: usize| {
        let a = start + i as f64 * pitch_px;
        let b = a + pitch_px;
        let lo = (a - 0.5).ceil() as i64;
        let hi = ((b - 0.5).ceil() as i64).max(lo + 1);
        (lo, hi)
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (y0, y1) = span(y_start, r);
        for c in 0..cols {
            let (x0, x1) = span(x_start, c);
            let mut sum = 0.0;
            for y in y0..y1 {
                let yy = y.clamp(0, h - 1) as usize;
                for x in x0..x1 {
                    sum += frame.get(x.clamp(0, w - 1) as usize, yy);
                }
            }
            data.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    Patch { rows, cols, data }
}

/// The region classified by the sparse system for one nerve detection.
pub fn nerve_region(frame: &Frame, nerve: &BBox, config: &RegionConfig) -> Patch {
    let pitch_px = config.pitch_mm * frame.pixels_per_mm();
    resample_grid(frame, nerve.center(), config.rows, config.cols, pitch_px)
}

/// The whole frame at the region pitch, for dictionary training on full frames.
pub fn frame_region(frame: &Frame, config: &RegionConfig) -> Patch {
    let pitch_px = config.pitch_mm * frame.pixels_per_mm();
    let rows = ((frame.height() as f64 / pitch_px).round() as usize).max(1);
    let cols = ((frame.width() as f64 / pitch_px).round() as usize).max(1);
    let center = (frame.width() as f64 / 2.0, frame.height() as f64 / 2.0);
    resample_grid(frame, center, rows, cols, pitch_px)
}

/// Trained dictionary and classifier together with the settings they were trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseModel {
    pub dictionary: Dictionary,
    pub classifier: FrameClassifier,
    pub lca: LcaParams,
    pub region: RegionConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar {
    kernels: usize,
    kernel_side: usize,
    lca: LcaParams,
    region: RegionConfig,
}

impl SparseModel {
    pub fn probability(&self, region: &Patch) -> Result<f64> {
        classify_frame(region, &self.dictionary, &self.classifier, &self.lca)
    }

    /// Writes both artifacts; each sidecar records the encoding settings.
    pub fn save(&self, dictionary_path: &Path, classifier_path: &Path) -> Result<()> {
        let sidecar = ModelSidecar {
            kernels: self.dictionary.count(),
            kernel_side: self.dictionary.side(),
            lca: self.lca,
            region: self.region.clone(),
        };
        save_dictionary(dictionary_path, &self.dictionary, &sidecar)?;
        save_classifier(classifier_path, &self.classifier, &sidecar)
    }

    /// Loads both artifacts. Encoding settings come from the classifier
    /// sidecar, falling back to defaults when it is missing.
    pub fn load(dictionary_path: &Path, classifier_path: &Path) -> Result<Self> {
        let dictionary = load_dictionary(dictionary_path)?;
        let classifier = load_classifier(classifier_path)?;
        if classifier.weights.len() != dictionary.count() {
            return Err(Error::ShapeMismatch(format!(
                "classifier has {} weights for {} kernels",
                classifier.weights.len(),
                dictionary.count()
            )));
        }
        let side = classifier_path.with_extension("json");
        let (lca, region) = if side.exists() {
            let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let s: ModelSidecar = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: side.clone(),
                source,
            })?;
            (s.lca, s.region)
        } else {
            (LcaParams::default(), RegionConfig::default())
        };
        lca.validate()?;
        region.validate()?;
        Ok(SparseModel {
            dictionary,
            classifier,
            lca,
            region,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseTrainConfig {
    pub dictionary: DictionaryConfig,
    pub classifier: ClassifierConfig,
    pub region: RegionConfig,
    pub stride: usize,
    /// Learn the dictionary on whole frames instead of nerve regions.
    pub full_frames: bool,
}

impl Default for SparseTrainConfig {
    fn default() -> Self {
        SparseTrainConfig {
            dictionary: DictionaryConfig::default(),
            classifier: ClassifierConfig::default(),
            region: RegionConfig::default(),
            stride: super::DEFAULT_STRIDE,
            full_frames: false,
        }
    }
}

impl SparseTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dictionary.lca.validate()?;
        self.region.validate()?;
        if self.stride < 1 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Labeled nerve regions and dictionary images gathered video by video.
#[derive(Clone, Debug, Default)]
pub struct SparseCorpus {
    pub regions: Vec<Patch>,
    pub labels: Vec<u8>,
    pub dictionary_images: Vec<Patch>,
}

impl SparseCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the stride-sampled fit frames of one video. Returns how many regions were added.
    pub fn add_video(
        &mut self,
        frames: &[Frame],
        label: Label,
        detector: &dyn Detector,
        config: &SparseTrainConfig,
    ) -> Result<usize> {
        let mut added = 0;
        for i in sample_stride(frames.len(), config.stride)? {
            let frame = &frames[i];
            if config.full_frames {
                self.dictionary_images.push(frame_region(frame, &config.region));
            }
            let det = detector.detect(i, frame);
            let Some(nerve) = det.nerve.filter(|_| det.globe.is_some()) else {
                continue;
            };
            let region = nerve_region(frame, &nerve, &config.region);
            if !config.full_frames {
                self.dictionary_images.push(region.clone());
            }
            self.regions.push(region);
            self.labels.push(label.as_bit());
            added += 1;
        }
        Ok(added)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseTrainReport {
    pub regions: usize,
    pub dictionary_images: usize,
    /// Mean reconstruction error per dictionary epoch, starting with the untrained dictionary.
    pub reconstruction_error: Vec<f64>,
    pub training_accuracy: f64,
}

fn mean_reconstruction_error(images: &[Patch], d: &Dictionary, params: &LcaParams) -> Result<f64> {
    let mut total = 0.0;
    for image in images {
        total += reconstruction_error(image, d, params)?;
    }
    Ok(total / images.len() as f64)
}

/// Learns the dictionary on the corpus images, then fits the classifier on
/// pooled codes of the labeled regions.
pub fn train_sparse_model(
    corpus: &SparseCorpus,
    config: &SparseTrainConfig,
) -> Result<(SparseModel, SparseTrainReport)> {
    config.validate()?;
    if corpus.regions.is_empty() || corpus.dictionary_images.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lca = config.dictionary.lca;
    let mut trainer = DictionaryTrainer::new(config.dictionary.clone())?;
    let mut errors = vec![mean_reconstruction_error(
        &corpus.dictionary_images,
        trainer.dictionary(),
        &lca,
    )?];
    let mut order: Vec<usize> = (0..corpus.dictionary_images.len()).collect();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.dictionary.seed ^ 0x5eed_d1c7);
    for _ in 0..config.dictionary.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += trainer.update(&corpus.dictionary_images[i])?;
        }
        errors.push(total / order.len() as f64);
    }
    let dictionary = trainer.into_dictionary();

    let features = corpus
        .regions
        .iter()
        .map(|r| lca_encode(r, &dictionary, &lca).map(|a| pool_code(&a)))
        .collect::<Result<Vec<_>>>()?;
    let classifier = train_classifier(&features, &corpus.labels, &config.classifier)?;
    let correct = features
        .iter()
        .zip(&corpus.labels)
        .map(|(f, &y)| classifier.predict(f).map(|p| u8::from(p >= 0.5) == y))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();

    let report = SparseTrainReport {
        regions: corpus.regions.len(),
        dictionary_images: corpus.dictionary_images.len(),
        reconstruction_error: errors,
        training_accuracy: 100.0 * correct as f64 / features.len() as f64,
    };
    let model = SparseModel {
        dictionary,
        classifier,
        lca,
        region: config.region.clone(),
    };
    Ok((model, report))
}

/// Mean frame probability over stride-sampled fit frames.
pub fn predict_video_sparse(
    video_id: &str,
    frames: &[Frame],
    detector: &dyn Detector,
    model: &SparseModel,
    stride: usize,
) -> Result<VideoPrediction> {
    let mut measurements = Vec::new();
    for i in sample_stride(frames.len(), stride)? {
        let frame = &frames[i];
        let det = detector.detect(i, frame);
        let mut m = FrameMeasurement::empty(det.clone());
        if let (Some(_), Some(nerve)) = (&det.globe, &det.nerve) {
            match model.probability(&nerve_region(frame, nerve, &model.region)) {
                Ok(p) => m.probability = Some(p),
                Err(e) => m.error = Some(e.to_string()),
            }
        }
        measurements.push(m);
    }
    let probabilities: Vec<f64> = measurements.iter().filter_map(|m| m.probability).collect();
    let (mean_value, decision) = aggregate(&probabilities, decide_probability);
    Ok(VideoPrediction {
        verdict: VideoVerdict {
            video_id: video_id.to_string(),
            system: System::Sparse,
            frames_used: probabilities.len(),
            mean_value,
            decision,
            frames: measurements.iter().map(FrameMeasurement::record).collect(),
        },
        measurements,
    })
}
