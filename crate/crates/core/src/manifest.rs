//! Dataset manifest: the list of videos, their frames on disk and labels.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::phantom::GroundTruth;

/// Sheath diameter above which a video is labeled positive for elevated ICP.
pub const ONSD_THRESHOLD_MM: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// Strict rule: exactly 5.0 mm is negative.
    pub fn from_width_mm(width_mm: f64) -> Label {
        if width_mm > ONSD_THRESHOLD_MM {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn as_bit(self) -> u8 {
        match self {
            Label::Positive => 1,
            Label::Negative => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub patient_id: String,
    /// Relative to the directory holding the manifest.
    pub frame_paths: Vec<String>,
    pub pixels_per_mm: f64,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for video in &self.videos {
            if !seen.insert(video.video_id.as_str()) {
                return Err(Error::invalid(
                    "video_id",
                    format!("duplicate video id {:?}", video.video_id),
                ));
            }
            if video.frame_paths.is_empty() {
                return Err(Error::invalid(
                    "frame_paths",
                    format!("video {:?} has no frames", video.video_id),
                ));
            }
            if !(video.pixels_per_mm > 0.0 && video.pixels_per_mm.is_finite()) {
                return Err(Error::invalid(
                    "pixels_per_mm",
                    format!("video {:?}: must be finite and > 0", video.video_id),
                ));
            }
        }
        Ok(())
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Distinct patient ids in sorted order.
    pub fn patients(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.videos.iter().map(|v| v.patient_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// A manifest together with the directory its frame paths are relative to.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: manifest_path.to_path_buf(),
            source,
        })?;
        manifest.validate()?;
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { root, manifest })
    }

    pub fn frame_path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn load_frame(&self, video: &VideoEntry, index: usize) -> Result<Frame> {
        let relative = video.frame_paths.get(index).ok_or_else(|| {
            Error::invalid(
                "frame",
                format!(
                    "video {:?} has {} frames, asked for {index}",
                    video.video_id,
                    video.frame_paths.len()
                ),
            )
        })?;
        Frame::load(&self.frame_path(relative), video.pixels_per_mm)
    }

    pub fn load_video(&self, video: &VideoEntry) -> Result<Vec<Frame>> {
        (0..video.frame_paths.len())
            .map(|i| self.load_frame(video, i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, patient: &str) -> VideoEntry {
        VideoEntry {
            video_id: id.into(),
            patient_id: patient.into(),
            frame_paths: vec!["a.pgm".into()],
            pixels_per_mm: 10.0,
            label: Label::Negative,
            ground_truth: None,
        }
    }

    #[test]
    fn label_rule_is_strict() {
        assert_eq!(Label::from_width_mm(5.0), Label::Negative);
        assert_eq!(Label::from_width_mm(5.000001), Label::Positive);
        assert_eq!(Label::from_width_mm(4.0), Label::Negative);
        assert_eq!(Label::from_width_mm(6.0), Label::Positive);
    }

    #[test]
    fn rejects_duplicate_ids_and_empty_videos() {
        let dup = DatasetManifest {
            videos: vec![entry("v", "p"), entry("v", "q")],
        };
        assert!(dup.validate().is_err());
        let mut empty = entry("v", "p");
        empty.frame_paths.clear();
        assert!(DatasetManifest { videos: vec![empty] }.validate().is_err());
    }

    #[test]
    fn patients_are_sorted_and_distinct() {
        let m = DatasetManifest {
            videos: vec![entry("a", "p2"), entry("b", "p1"), entry("c", "p2")],
        };
        assert_eq!(m.patients(), vec!["p1", "p2"]);
    }
}
