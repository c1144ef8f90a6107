//! Ocular globe and optic nerve sheath localization.
//!
//! Two sources of boxes are supported: a classical threshold/morphology
//! detector that works on high-contrast frames, and a line-oriented
//! annotation file produced by any external detector.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use imageproc::distance_transform::Norm;
use imageproc::filter::box_filter;
use imageproc::morphology::{dilate, open};
use imageproc::region_labelling::{connected_components, Connectivity};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Globe,
    Nerve,
}

impl ObjectClass {
    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Globe => "globe",
            ObjectClass::Nerve => "nerve",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "globe" => Some(ObjectClass::Globe),
            "nerve" => Some(ObjectClass::Nerve),
            _ => None,
        }
    }
}

/// Half-open axis-aligned box in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class: ObjectClass,
    pub confidence: f64,
}

/// Smallest box side accepted after clamping to the frame.
pub const MIN_BOX_SIDE_PX: f64 = 2.0;

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class: ObjectClass, confidence: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max, confidence];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::invalid("bbox", "max corner must exceed min corner"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid("confidence", "must lie in [0, 1]"));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            class,
            confidence,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Clamps to `[0, width) x [0, height)`; `None` if less than 2 px remain on a side.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<BBox> {
        let clamped = BBox {
            x_min: self.x_min.clamp(0.0, width as f64),
            y_min: self.y_min.clamp(0.0, height as f64),
            x_max: self.x_max.clamp(0.0, width as f64),
            y_max: self.y_max.clamp(0.0, height as f64),
            ..*self
        };
        (clamped.width() >= MIN_BOX_SIDE_PX && clamped.height() >= MIN_BOX_SIDE_PX).then_some(clamped)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
            ..*self
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let ih = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

/// At most one box per class for one frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: usize,
    pub globe: Option<BBox>,
    pub nerve: Option<BBox>,
}

impl FrameDetections {
    pub fn empty(frame_index: usize) -> Self {
        FrameDetections {
            frame_index,
            ..Default::default()
        }
    }

    /// Keeps the higher-confidence box of each class; on ties the existing box stays.
    pub fn offer(&mut self, b: BBox) {
        let slot = match b.class {
            ObjectClass::Globe => &mut self.globe,
            ObjectClass::Nerve => &mut self.nerve,
        };
        match slot {
            Some(existing) if existing.confidence >= b.confidence => {}
            _ => *slot = Some(b),
        }
    }

    pub fn is_fit(&self) -> bool {
        self.globe.is_some() && self.nerve.is_some()
    }
}

/// Source of per-frame detections.
pub trait Detector {
    fn detect(&self, frame_index: usize, frame: &Frame) -> FrameDetections;
}

/// Indices of frames where both the globe and the nerve were found, in input order.
pub fn filter_fit_frames(detections: &[FrameDetections]) -> Vec<usize> {
    detections
        .iter()
        .filter(|d| d.is_fit())
        .map(|d| d.frame_index)
        .collect()
}

// ---------------------------------------------------------------------------
// Annotation files
// ---------------------------------------------------------------------------

/// Parses `frame_index class cx cy w h [confidence]` records with coordinates
/// normalized to the frame size. Blank lines and `#` comments are ignored.
pub fn parse_detections(text: &str, frame_size: (usize, usize)) -> Result<Vec<FrameDetections>> {
    let (fw, fh) = (frame_size.0 as f64, frame_size.1 as f64);
    let mut frames: BTreeMap<usize, FrameDetections> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if !(6..=7).contains(&fields.len()) {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 or 7 fields, found {}", fields.len()),
            });
        }
        let frame_index: usize = fields[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad frame index {:?}", fields[0]),
        })?;
        let class = ObjectClass::parse(fields[1]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown class {:?}", fields[1]),
        })?;
        let mut nums = [0.0f64; 5];
        nums[4] = 1.0;
        for (slot, field) in nums.iter_mut().zip(&fields[2..]) {
            *slot = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad number {field:?}"),
            })?;
        }
        if nums.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::CoordinateOutOfRange { line });
        }
        let [cx, cy, w, h, confidence] = nums;
        let b = BBox {
            x_min: (cx - w / 2.0) * fw,
            y_min: (cy - h / 2.0) * fh,
            x_max: (cx + w / 2.0) * fw,
            y_max: (cy + h / 2.0) * fh,
            class,
            confidence,
        }
        .clamp_to(frame_size.0, frame_size.1)
        .ok_or_else(|| Error::Parse {
            line,
            message: "box smaller than 2 px after clamping".into(),
        })?;
        frames
            .entry(frame_index)
            .or_insert_with(|| FrameDetections::empty(frame_index))
            .offer(b);
    }
    Ok(frames.into_values().collect())
}

pub fn parse_detection_file(path: &Path, frame_size: (usize, usize)) -> Result<Vec<FrameDetections>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, frame_size)
}

/// Inverse of [`parse_detections`] for the retained boxes.
pub fn format_detections(detections: &[FrameDetections], frame_size: (usize, usize)) -> String {
    let (fw, fh) = (frame_size.0 as f64, frame_size.1 as f64);
    let mut out = String::from("# frame_index class cx cy w h confidence\n");
    for d in detections {
        for b in [d.globe, d.nerve].into_iter().flatten() {
            let (cx, cy) = b.center();
            let _ = writeln!(
                out,
                "{} {} {:.9} {:.9} {:.9} {:.9} {:.6}",
                d.frame_index,
                b.class.name(),
                cx / fw,
                cy / fh,
                b.width() / fw,
                b.height() / fh,
                b.confidence
            );
        }
    }
    out
}

/// Detections read from an annotation file, served by frame index.
#[derive(Clone, Debug, Default)]
pub struct AnnotatedDetections {
    by_frame: BTreeMap<usize, FrameDetections>,
}

impl AnnotatedDetections {
    pub fn new(detections: Vec<FrameDetections>) -> Self {
        AnnotatedDetections {
            by_frame: detections.into_iter().map(|d| (d.frame_index, d)).collect(),
        }
    }

    pub fn from_file(path: &Path, frame_size: (usize, usize)) -> Result<Self> {
        parse_detection_file(path, frame_size).map(Self::new)
    }
}

impl Detector for AnnotatedDetections {
    fn detect(&self, frame_index: usize, _frame: &Frame) -> FrameDetections {
        self.by_frame
            .get(&frame_index)
            .cloned()
            .unwrap_or_else(|| FrameDetections::empty(frame_index))
    }
}

// ---------------------------------------------------------------------------
// Classical detector
// ---------------------------------------------------------------------------

/// Tunables for [`ClassicalDetector`]; lengths are in millimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDetectorConfig {
    /// Opening radius separating the globe from thin wall bands.
    pub opening_radius_mm: f64,
    /// How close the dark band must come to the globe.
    pub adjacency_mm: f64,
    /// Smallest accepted globe, as an equivalent disc radius.
    pub min_globe_radius_mm: f64,
    /// Smallest accepted dark band area, as a square side.
    pub min_band_side_mm: f64,
    /// Minimum 8-bit level separation between classes.
    pub min_contrast: u8,
    /// Fraction of the band area that touching wall pixels must reach.
    pub min_wall_fraction: f64,
}

impl Default for ClassicalDetectorConfig {
    fn default() -> Self {
        ClassicalDetectorConfig {
            opening_radius_mm: 1.0,
            adjacency_mm: 1.0,
            min_globe_radius_mm: 2.0,
            min_band_side_mm: 1.0,
            min_contrast: 25,
            min_wall_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ClassicalDetector {
    pub config: ClassicalDetectorConfig,
}

impl Detector for ClassicalDetector {
    fn detect(&self, frame_index: usize, frame: &Frame) -> FrameDetections {
        detect_with(frame, frame_index, &self.config)
    }
}

/// Runs the classical detector with default settings.
pub fn detect_classical(frame: &Frame, frame_index: usize) -> FrameDetections {
    detect_with(frame, frame_index, &ClassicalDetectorConfig::default())
}

fn mm_to_radius(mm: f64, ppm: f64) -> u8 {
    (mm * ppm).round().clamp(1.0, 255.0) as u8
}

/// Otsu threshold over the histogram bins `0..=upper`; `None` if one class is empty.
/// Returns the threshold and the two class means.
fn otsu(hist: &[u64; 256], upper: usize) -> Option<(u8, f64, f64)> {
    let total: u64 = hist[..=upper].iter().sum();
    let sum: f64 = (0..=upper).map(|i| i as f64 * hist[i] as f64).sum();
    let mut best: Option<(u8, f64, f64, f64)> = None;
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    for t in 0..upper {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1).powi(2);
        if best.is_none_or(|(_, _, _, b)| between > b) {
            best = Some((t as u8, m0, m1, between));
        }
    }
    best.map(|(t, m0, m1, _)| (t, m0, m1))
}

fn mask_from(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| Luma([if f(x, y) { 255 } else { 0 }]))
}

#[derive(Clone, Copy, Debug)]
struct Extent {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
    area: u64,
}

impl Extent {
    fn new() -> Self {
        Extent {
            x_min: u32::MAX,
            y_min: u32::MAX,
            x_max: 0,
            y_max: 0,
            area: 0,
        }
    }

    fn add(&mut self, x: u32, y: u32) {
        self.x_min = self.x_min.min(x);
        self.y_min = self.y_min.min(y);
        self.x_max = self.x_max.max(x);
        self.y_max = self.y_max.max(y);
        self.area += 1;
    }

    fn merge(&mut self, other: &Extent) {
        self.x_min = self.x_min.min(other.x_min);
        self.y_min = self.y_min.min(other.y_min);
        self.x_max = self.x_max.max(other.x_max);
        self.y_max = self.y_max.max(other.y_max);
        self.area += other.area;
    }

    fn to_bbox(self, class: ObjectClass) -> BBox {
        BBox {
            x_min: f64::from(self.x_min),
            y_min: f64::from(self.y_min),
            x_max: f64::from(self.x_max) + 1.0,
            y_max: f64::from(self.y_max) + 1.0,
            class,
            confidence: 1.0,
        }
    }
}

fn extents(labels: &image::ImageBuffer<Luma<u32>, Vec<u32>>) -> Vec<Extent> {
    let mut out: Vec<Extent> = Vec::new();
    for (x, y, p) in labels.enumerate_pixels() {
        let l = p.0[0] as usize;
        if l == 0 {
            continue;
        }
        if out.len() < l {
            out.resize(l, Extent::new());
        }
        out[l - 1].add(x, y);
    }
    out
}

fn detect_with(frame: &Frame, frame_index: usize, cfg: &ClassicalDetectorConfig) -> FrameDetections {
    let mut result = FrameDetections::empty(frame_index);
    let ppm = frame.pixels_per_mm();
    let smoothed = box_filter(&frame.to_gray8(), 1, 1);
    let (w, h) = smoothed.dimensions();

    let mut hist = [0u64; 256];
    for p in smoothed.pixels() {
        hist[p.0[0] as usize] += 1;
    }
    let Some((bright_t, dark_mean, bright_mean)) = otsu(&hist, 255) else {
        return result;
    };
    if bright_mean - dark_mean < f64::from(cfg.min_contrast) {
        return result;
    }
    let bright = mask_from(w, h, |x, y| smoothed.get_pixel(x, y).0[0] > bright_t);

    // Globe: largest bright blob once thin structures are opened away.
    let opened = open(&bright, Norm::LInf, mm_to_radius(cfg.opening_radius_mm, ppm));
    let labels = connected_components(&opened, Connectivity::Eight, Luma([0u8]));
    let blobs = extents(&labels);
    let Some((globe_idx, globe_ext)) = blobs
        .iter()
        .enumerate()
        .max_by_key(|(i, e)| (e.area, std::cmp::Reverse(*i)))
    else {
        return result;
    };
    let min_globe_area = std::f64::consts::PI * (cfg.min_globe_radius_mm * ppm).powi(2);
    if (globe_ext.area as f64) < min_globe_area {
        return result;
    }
    let globe_label = globe_idx as u32 + 1;
    let globe_box = globe_ext.to_bbox(ObjectClass::Globe);
    result.globe = Some(globe_box);
    let globe_cy = globe_box.center().1;

    let globe_mask = mask_from(w, h, |x, y| labels.get_pixel(x, y).0[0] == globe_label);
    let near_globe = dilate(&globe_mask, Norm::LInf, mm_to_radius(cfg.adjacency_mm, ppm));
    let rim = dilate(&globe_mask, Norm::LInf, 2);

    // Dark interior: second Otsu split below the bright threshold, posterior half-plane only.
    let Some((dark_t, low_mean, mid_mean)) = otsu(&hist, bright_t as usize) else {
        return result;
    };
    if mid_mean - low_mean < f64::from(cfg.min_contrast) {
        return result;
    }
    let dark = mask_from(w, h, |x, y| {
        f64::from(y) + 0.5 > globe_cy && smoothed.get_pixel(x, y).0[0] <= dark_t
    });
    let dark_labels = connected_components(&dark, Connectivity::Eight, Luma([0u8]));
    let bands = extents(&dark_labels);

    // Walls: bright pixels that are not part of the globe.
    let walls = mask_from(w, h, |x, y| {
        bright.get_pixel(x, y).0[0] > 0 && rim.get_pixel(x, y).0[0] == 0
    });
    let wall_labels = connected_components(&walls, Connectivity::Eight, Luma([0u8]));
    let wall_blobs = extents(&wall_labels);

    let mut adjacent = vec![false; bands.len()];
    for (x, y, p) in dark_labels.enumerate_pixels() {
        if p.0[0] > 0 && near_globe.get_pixel(x, y).0[0] > 0 {
            adjacent[p.0[0] as usize - 1] = true;
        }
    }

    // Which wall blobs touch which band. A blurred, anti-aliased step edge can
    // leave up to 3 px of mid levels between the two masks.
    let mut touching: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let reach = 4i64;
    for (x, y, p) in wall_labels.enumerate_pixels() {
        let wl = p.0[0];
        if wl == 0 {
            continue;
        }
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                    continue;
                }
                let bl = dark_labels.get_pixel(nx as u32, ny as u32).0[0];
                if bl > 0 {
                    let list = touching.entry(bl).or_default();
                    if !list.contains(&wl) {
                        list.push(wl);
                    }
                }
            }
        }
    }

    let min_band_area = (cfg.min_band_side_mm * ppm).powi(2);
    let best = bands
        .iter()
        .enumerate()
        .filter(|(i, e)| adjacent[*i] && e.area as f64 >= min_band_area)
        .filter_map(|(i, e)| {
            let walls = touching.get(&(i as u32 + 1))?;
            let wall_area: u64 = walls.iter().map(|&wl| wall_blobs[wl as usize - 1].area).sum();
            (wall_area as f64 >= cfg.min_wall_fraction * e.area as f64).then_some((i, e, walls))
        })
        .max_by_key(|(i, e, _)| (e.area, std::cmp::Reverse(*i)));

    if let Some((_, band, walls)) = best {
        let mut ext = *band;
        for &wl in walls {
            ext.merge(&wall_blobs[wl as usize - 1]);
        }
        result.nerve = ext.to_bbox(ObjectClass::Nerve).clamp_to(w as usize, h as usize);
    }
    result
}
