//! End-to-end video systems.
//!
//! The width system measures the sheath on stride-sampled frames and
//! thresholds the mean width; the sparse system classifies the nerve region
//! of each fit frame and thresholds the mean probability.

mod render;
mod sparse;

pub use render::{render_overlay, render_overlay_with_boxes, save_rgb, BLUE, ORANGE, RED};
pub use sparse::{
    frame_region, nerve_region, predict_video_sparse, train_sparse_model, RegionConfig, SparseCorpus, SparseModel,
    SparseTrainConfig, SparseTrainReport,
};

use serde::{Deserialize, Serialize};

use crate::detection::{Detector, FrameDetections};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{build_construction, extract_oriented_crop, MeasurementConstruction, OrientedCrop};
use crate::manifest::ONSD_THRESHOLD_MM;
use crate::segmentation::{width_from_mask, CropMask, Segmenter, WidthMeasurement};

/// Default frame interval between sampled frames.
pub const DEFAULT_STRIDE: usize = 5;

/// Frame indices `0, stride, 2·stride, … < n_frames`.
pub fn sample_stride(n_frames: usize, stride: usize) -> Result<Vec<usize>> {
    if stride < 1 {
        return Err(Error::invalid("stride", "must be at least 1"));
    }
    Ok((0..n_frames).step_by(stride).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Width,
    Sparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Positive,
    Negative,
    Indeterminate,
}

impl Decision {
    /// 1 for positive, 0 for negative, `None` when indeterminate.
    pub fn as_bit(self) -> Option<u8> {
        match self {
            Decision::Positive => Some(1),
            Decision::Negative => Some(0),
            Decision::Indeterminate => None,
        }
    }
}

/// Strictly greater than 5 mm is positive.
pub fn decide_width(mean_width_mm: f64) -> Decision {
    if mean_width_mm > ONSD_THRESHOLD_MM {
        Decision::Positive
    } else {
        Decision::Negative
    }
}

/// Rounds half up: a mean probability of exactly 0.5 is positive.
pub fn decide_probability(mean_probability: f64) -> Decision {
    if mean_probability >= 0.5 {
        Decision::Positive
    } else {
        Decision::Negative
    }
}

/// All intermediate artifacts for one processed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMeasurement {
    pub frame_index: usize,
    pub detections: FrameDetections,
    pub construction: Option<MeasurementConstruction>,
    pub crop: Option<OrientedCrop>,
    pub mask: Option<CropMask>,
    pub width: Option<WidthMeasurement>,
    pub probability: Option<f64>,
    pub error: Option<String>,
}

impl FrameMeasurement {
    pub fn empty(detections: FrameDetections) -> Self {
        FrameMeasurement {
            frame_index: detections.frame_index,
            detections,
            construction: None,
            crop: None,
            mask: None,
            width: None,
            probability: None,
            error: None,
        }
    }

    pub fn record(&self) -> FrameRecord {
        FrameRecord {
            frame_index: self.frame_index,
            detections: self.detections.clone(),
            construction: self.construction.clone(),
            crop_partial: self.crop.as_ref().map(|c| c.partial),
            width: self.width.clone(),
            probability: self.probability,
            error: self.error.clone(),
        }
    }
}

/// Serializable per-frame evidence for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub detections: FrameDetections,
    pub construction: Option<MeasurementConstruction>,
    pub crop_partial: Option<bool>,
    pub width: Option<WidthMeasurement>,
    pub probability: Option<f64>,
    pub error: Option<String>,
}

/// Runs construction, crop, segmentation and width reduction for one frame.
/// Missing detections or a degenerate construction yield a record without
/// those stages; a width failing its row quorum is left absent.
pub fn measure_frame(frame: &Frame, det: &FrameDetections, segmenter: &dyn Segmenter) -> FrameMeasurement {
    let mut m = FrameMeasurement::empty(det.clone());
    let (Some(globe), Some(nerve)) = (&det.globe, &det.nerve) else {
        return m;
    };
    let construction = match build_construction(globe, nerve, frame.pixels_per_mm()) {
        Ok(c) => c,
        Err(e) => {
            m.error = Some(e.to_string());
            return m;
        }
    };
    let crop = extract_oriented_crop(frame, &construction);
    let mask = segmenter.segment(det.frame_index, &crop);
    let width = width_from_mask(&mask, frame.pixels_per_mm());
    m.construction = Some(construction);
    m.crop = Some(crop);
    m.mask = Some(mask);
    m.width = width.valid.then_some(width);
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    pub video_id: String,
    pub system: System,
    pub frames_used: usize,
    /// Mean width in mm or mean probability; `None` when no frame contributed.
    pub mean_value: Option<f64>,
    pub decision: Decision,
    pub frames: Vec<FrameRecord>,
}

impl VideoVerdict {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("verdict serializes");
        text.push('\n');
        text
    }
}

/// A verdict plus the full per-frame artifacts behind it.
#[derive(Clone, Debug)]
pub struct VideoPrediction {
    pub verdict: VideoVerdict,
    pub measurements: Vec<FrameMeasurement>,
}

/// Mean of the values and the decision it implies; indeterminate when empty.
pub fn aggregate(values: &[f64], decide: fn(f64) -> Decision) -> (Option<f64>, Decision) {
    if values.is_empty() {
        return (None, Decision::Indeterminate);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (Some(mean), decide(mean))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthSystemConfig {
    pub stride: usize,
    /// Drop widths measured on crops that ran off the frame.
    pub exclude_partial: bool,
}

impl Default for WidthSystemConfig {
    fn default() -> Self {
        WidthSystemConfig {
            stride: DEFAULT_STRIDE,
            exclude_partial: false,
        }
    }
}

pub fn predict_video_width(
    video_id: &str,
    frames: &[Frame],
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &WidthSystemConfig,
) -> Result<VideoPrediction> {
    let indices = sample_stride(frames.len(), config.stride)?;
    let measurements: Vec<FrameMeasurement> = indices
        .iter()
        .map(|&i| measure_frame(&frames[i], &detector.detect(i, &frames[i]), segmenter))
        .collect();
    let widths: Vec<f64> = measurements
        .iter()
        .filter(|m| !(config.exclude_partial && m.crop.as_ref().is_some_and(|c| c.partial)))
        .filter_map(|m| m.width.as_ref().map(|w| w.width_mm))
        .collect();
    let (mean_value, decision) = aggregate(&widths, decide_width);
    Ok(VideoPrediction {
        verdict: VideoVerdict {
            video_id: video_id.to_string(),
            system: System::Width,
            frames_used: widths.len(),
            mean_value,
            decision,
            frames: measurements.iter().map(FrameMeasurement::record).collect(),
        },
        measurements,
    })
}
