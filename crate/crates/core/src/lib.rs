//! Optic nerve sheath diameter analysis for ocular ultrasound video.
//!
//! Two systems decide whether a video shows a sheath wider than 5 mm, the
//! usual sign of elevated intracranial pressure:
//!
//! * the **width system** locates the globe and nerve, builds the 3 mm
//!   measurement construction, segments an oriented 16x128 crop and
//!   averages the measured widths;
//! * the **sparse system** codes the nerve region with a convolutional LCA
//!   dictionary and averages the probabilities of a small classifier.
//!
//! A phantom generator supplies labeled synthetic videos with exact ground
//! truth, and [`eval`] runs patient-grouped k-fold evaluation.

pub mod detection;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod lca;
pub mod manifest;
pub mod phantom;
pub mod pipeline;
pub mod segmentation;

pub use detection::{
    AnnotatedDetections, BBox, ClassicalDetector, ClassicalDetectorConfig, Detector, FrameDetections, ObjectClass,
};
pub use error::{Error, Result};
pub use eval::{evaluate, grouped_kfold, EvalConfig, EvalReport, FoldSplit};
pub use frame::Frame;
pub use geometry::{build_construction, extract_oriented_crop, MeasurementConstruction, OrientedCrop};
pub use lca::{Activations, Dictionary, FrameClassifier, LcaParams, Patch};
pub use manifest::{Dataset, DatasetManifest, Label, VideoEntry, ONSD_THRESHOLD_MM};
pub use phantom::{GroundTruth, PhantomSampler, PhantomSpec, PhantomVideo};
pub use pipeline::{
    measure_frame, predict_video_sparse, predict_video_width, Decision, FrameMeasurement, SparseModel, System,
    VideoVerdict,
};
pub use segmentation::{ClassicalSegmenter, CropMask, Segmenter, WidthMeasurement};
