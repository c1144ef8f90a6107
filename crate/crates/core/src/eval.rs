//! Grouped k-fold evaluation with video accuracy, frame accuracy and width error.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{ClassicalDetector, ClassicalDetectorConfig};
use crate::error::{Error, Result};
use crate::manifest::{Dataset, DatasetManifest};
use crate::pipeline::{
    decide_probability, decide_width, predict_video_sparse, predict_video_width, train_sparse_model, Decision,
    SparseCorpus, SparseTrainConfig, System, VideoVerdict, WidthSystemConfig,
};
use crate::segmentation::ClassicalSegmenter;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_video_ids: Vec<String>,
    pub test_video_ids: Vec<String>,
}

/// Shuffles the sorted patient ids with `seed` and deals them round-robin
/// into `k` groups; fold `i` tests the videos of group `i`. Video ids keep
/// manifest order within each list.
pub fn grouped_kfold(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::invalid("k", "must be at least 2"));
    }
    let mut patients = manifest.patients();
    if patients.len() < k {
        return Err(Error::FewerPatientsThanFolds {
            patients: patients.len(),
            k,
        });
    }
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let group: BTreeMap<&str, usize> = patients.iter().enumerate().map(|(i, p)| (*p, i % k)).collect();
    Ok((0..k)
        .map(|fold_index| {
            let (test, train): (Vec<_>, Vec<_>) = manifest
                .videos
                .iter()
                .partition(|v| group[v.patient_id.as_str()] == fold_index);
            FoldSplit {
                fold_index,
                train_video_ids: train.into_iter().map(|v| v.video_id.clone()).collect(),
                test_video_ids: test.into_iter().map(|v| v.video_id.clone()).collect(),
            }
        })
        .collect())
}

/// Percentage of frame decisions equal to the video label.
pub fn frame_accuracy(decisions: &[u8], label: u8) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::invalid("decisions", "must not be empty"));
    }
    let hits = decisions.iter().filter(|&&d| d == label).count();
    Ok(100.0 * hits as f64 / decisions.len() as f64)
}

pub fn width_mae(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} truths",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("predicted", "must not be empty"));
    }
    Ok(predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / predicted.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation over runs.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<MeanSd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanSd { mean, sd: var.sqrt() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoOutcome {
    pub video_id: String,
    pub fold_index: usize,
    pub label: u8,
    pub decision: Decision,
    pub mean_value: Option<f64>,
    pub frames_evaluated: usize,
    pub frames_correct: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub test_videos: usize,
    pub video_accuracy: f64,
    pub frame_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub video_accuracy: f64,
    pub frame_accuracy: f64,
    pub width_mae_mm: Option<f64>,
    pub folds: Vec<FoldReport>,
    pub videos: Vec<VideoOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: System,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub video_accuracy: MeanSd,
    pub frame_accuracy: MeanSd,
    pub width_mae_mm: Option<f64>,
    pub runs: Vec<RunReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// One-row table: model, video accuracy, frame accuracy (mean and sd, percent).
    pub fn to_csv(&self) -> String {
        let model = match self.system {
            System::Width => "width",
            System::Sparse => "sparse",
        };
        format!(
            "model,video_accuracy_mean,video_accuracy_sd,frame_accuracy_mean,frame_accuracy_sd\n\
             {model},{:.2},{:.2},{:.2},{:.2}\n",
            self.video_accuracy.mean, self.video_accuracy.sd, self.frame_accuracy.mean, self.frame_accuracy.sd
        )
    }
}

/// Per-frame decisions recorded in a verdict; frames that produced no value count as `None`.
fn frame_decisions(v: &VideoVerdict) -> Vec<Option<u8>> {
    v.frames
        .iter()
        .map(|f| match v.system {
            System::Width => f.width.as_ref().map(|w| decide_width(w.width_mm)),
            System::Sparse => f.probability.map(decide_probability),
        })
        .map(|d| d.and_then(Decision::as_bit))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub detector: ClassicalDetectorConfig,
    pub width: WidthSystemConfig,
    pub sparse: SparseTrainConfig,
}

/// Runs the fold protocol with a caller-supplied predictor.
///
/// `predict(seed, fold)` returns verdicts for the fold's test videos.
/// Indeterminate verdicts, and sampled frames without a decision, count as
/// incorrect. Frame accuracy pools every sampled frame of every test video.
pub fn evaluate_with<F>(
    manifest: &DatasetManifest,
    system: System,
    k: usize,
    seeds: &[u64],
    mut predict: F,
) -> Result<EvalReport>
where
    F: FnMut(u64, &FoldSplit) -> Result<Vec<VideoVerdict>>,
{
    manifest.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let folds = grouped_kfold(manifest, k, seed)?;
        let mut videos = Vec::new();
        let mut fold_reports = Vec::new();
        for fold in &folds {
            let verdicts = predict(seed, fold)?;
            let expected: HashSet<&str> = fold.test_video_ids.iter().map(String::as_str).collect();
            let got: HashSet<&str> = verdicts.iter().map(|v| v.video_id.as_str()).collect();
            if expected != got || verdicts.len() != expected.len() {
                return Err(Error::ShapeMismatch(format!(
                    "fold {} verdicts do not match its test videos",
                    fold.fold_index
                )));
            }
            let start = videos.len();
            for v in &verdicts {
                let entry = manifest.video(&v.video_id).expect("test video is in the manifest");
                let label = entry.label.as_bit();
                let decisions = frame_decisions(v);
                videos.push(VideoOutcome {
                    video_id: v.video_id.clone(),
                    fold_index: fold.fold_index,
                    label,
                    decision: v.decision,
                    mean_value: v.mean_value,
                    frames_evaluated: decisions.len(),
                    frames_correct: decisions.iter().filter(|&&d| d == Some(label)).count(),
                });
            }
            fold_reports.push(summarize_fold(fold.fold_index, &videos[start..]));
        }
        let correct = videos.iter().filter(|o| o.decision.as_bit() == Some(o.label)).count();
        let frames: usize = videos.iter().map(|o| o.frames_evaluated).sum();
        let frames_correct: usize = videos.iter().map(|o| o.frames_correct).sum();

        let mut predicted = Vec::new();
        let mut truth = Vec::new();
        if system == System::Width {
            for o in &videos {
                let gt = manifest.video(&o.video_id).and_then(|v| v.ground_truth.as_ref());
                if let (Some(mean), Some(gt)) = (o.mean_value, gt) {
                    predicted.push(mean);
                    truth.push(gt.sheath_width_mm);
                }
            }
        }
        runs.push(RunReport {
            seed,
            video_accuracy: 100.0 * correct as f64 / videos.len() as f64,
            frame_accuracy: if frames == 0 {
                0.0
            } else {
                100.0 * frames_correct as f64 / frames as f64
            },
            width_mae_mm: width_mae(&predicted, &truth).ok(),
            folds: fold_reports,
            videos,
        });
    }
    let video: Vec<f64> = runs.iter().map(|r| r.video_accuracy).collect();
    let frame: Vec<f64> = runs.iter().map(|r| r.frame_accuracy).collect();
    let maes: Vec<f64> = runs.iter().filter_map(|r| r.width_mae_mm).collect();
    Ok(EvalReport {
        system,
        k,
        seeds: seeds.to_vec(),
        video_accuracy: MeanSd::of(&video).expect("at least one run"),
        frame_accuracy: MeanSd::of(&frame).expect("at least one run"),
        width_mae_mm: MeanSd::of(&maes).map(|m| m.mean),
        runs,
    })
}

fn summarize_fold(fold_index: usize, videos: &[VideoOutcome]) -> FoldReport {
    let correct = videos.iter().filter(|o| o.decision.as_bit() == Some(o.label)).count();
    let frames: usize = videos.iter().map(|o| o.frames_evaluated).sum();
    let frames_correct: usize = videos.iter().map(|o| o.frames_correct).sum();
    FoldReport {
        fold_index,
        test_videos: videos.len(),
        video_accuracy: if videos.is_empty() {
            0.0
        } else {
            100.0 * correct as f64 / videos.len() as f64
        },
        frame_accuracy: (frames > 0).then(|| 100.0 * frames_correct as f64 / frames as f64),
    }
}

/// Evaluates either system with the classical detector and segmenter.
///
/// The width system has nothing to train, so each video is predicted once
/// and reused across folds and seeds. The sparse system trains a fresh
/// dictionary and classifier on every fold's training videos, seeding both
/// with the run seed.
pub fn evaluate(dataset: &Dataset, system: System, k: usize, seeds: &[u64], config: &EvalConfig) -> Result<EvalReport> {
    let manifest = &dataset.manifest;
    let detector = ClassicalDetector {
        config: config.detector.clone(),
    };
    match system {
        System::Width => {
            let mut cache: BTreeMap<String, VideoVerdict> = BTreeMap::new();
            evaluate_with(manifest, system, k, seeds, |_, fold| {
                fold.test_video_ids
                    .iter()
                    .map(|id| {
                        if let Some(v) = cache.get(id) {
                            return Ok(v.clone());
                        }
                        let entry = manifest.video(id).expect("fold ids come from the manifest");
                        let frames = dataset.load_video(entry)?;
                        let v =
                            predict_video_width(id, &frames, &detector, &ClassicalSegmenter::default(), &config.width)?
                                .verdict;
                        cache.insert(id.clone(), v.clone());
                        Ok(v)
                    })
                    .collect()
            })
        }
        System::Sparse => evaluate_with(manifest, system, k, seeds, |seed, fold| {
            let mut train_config = config.sparse.clone();
            train_config.dictionary.seed = seed;
            train_config.classifier.seed = seed;
            let mut corpus = SparseCorpus::new();
            for id in &fold.train_video_ids {
                let entry = manifest.video(id).expect("fold ids come from the manifest");
                let frames = dataset.load_video(entry)?;
                corpus.add_video(&frames, entry.label, &detector, &train_config)?;
            }
            let (model, _) = train_sparse_model(&corpus, &train_config)?;
            fold.test_video_ids
                .iter()
                .map(|id| {
                    let entry = manifest.video(id).expect("fold ids come from the manifest");
                    let frames = dataset.load_video(entry)?;
                    Ok(predict_video_sparse(id, &frames, &detector, &model, train_config.stride)?.verdict)
                })
                .collect()
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Label, VideoEntry};

    fn manifest(patients: &[&str]) -> DatasetManifest {
        DatasetManifest {
            videos: patients
                .iter()
                .enumerate()
                .map(|(i, p)| VideoEntry {
                    video_id: format!("v{i}"),
                    patient_id: p.to_string(),
                    frame_paths: vec![format!("v{i}/f0.pgm")],
                    pixels_per_mm: 10.0,
                    label: Label::Negative,
                    ground_truth: None,
                })
                .collect(),
        }
    }

    #[test]
    fn one_patient_per_fold() {
        let m = manifest(&["a", "a", "b", "b", "c", "c"]);
        let folds = grouped_kfold(&m, 3, 1).unwrap();
        assert_eq!(folds.len(), 3);
        for f in &folds {
            assert_eq!(f.test_video_ids.len(), 2);
            assert_eq!(f.train_video_ids.len(), 4);
        }
        assert_eq!(folds, grouped_kfold(&m, 3, 1).unwrap());
    }

    #[test]
    fn fold_errors() {
        let m = manifest(&["a", "b", "c"]);
        let err = grouped_kfold(&m, 10, 0).unwrap_err();
        assert!(err.to_string().contains("fewer patients than folds"));
        assert!(grouped_kfold(&m, 1, 0).is_err());
    }

    #[test]
    fn metric_examples() {
        assert!((frame_accuracy(&[1, 1, 0], 1).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(frame_accuracy(&[0, 0], 0).unwrap(), 100.0);
        assert_eq!(frame_accuracy(&[0], 1).unwrap(), 0.0);
        assert!(frame_accuracy(&[], 1).is_err());
        assert_eq!(width_mae(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(width_mae(&[4.0, 6.0], &[5.0, 5.0]).unwrap(), 1.0);
        assert!(width_mae(&[4.0], &[5.0, 5.0]).is_err());
    }

    #[test]
    fn single_seed_has_zero_sd() {
        assert_eq!(MeanSd::of(&[87.5]), Some(MeanSd { mean: 87.5, sd: 0.0 }));
        assert_eq!(MeanSd::of(&[80.0, 90.0]), Some(MeanSd { mean: 85.0, sd: 5.0 }));
    }
}
