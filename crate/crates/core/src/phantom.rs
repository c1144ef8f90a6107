//! Synthetic ocular ultrasound phantoms with exactly known geometry.
//!
//! A frame shows a bright globe ellipse and, leaving it along the nerve
//! direction, a straight band made of a dark interior flanked by two bright
//! walls on a mid-gray background. Edges are anti-aliased from their signed
//! distance so the interior gap is accurate to well below a pixel.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detection::{BBox, ObjectClass};
use crate::error::{Error, Result};
use crate::frame::{quantize, Frame};
use crate::manifest::{DatasetManifest, Label, VideoEntry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub image_width: usize,
    pub image_height: usize,
    pub pixels_per_mm: f64,
    pub globe_center: (f64, f64),
    pub globe_radii: (f64, f64),
    /// Degrees from the image +y axis; 0 points straight down, positive tilts toward +x.
    pub nerve_angle: f64,
    pub sheath_width_mm: f64,
    pub sheath_wall_thickness_mm: f64,
    pub nerve_length_mm: f64,
    pub interior_intensity: f64,
    pub wall_intensity: f64,
    pub background_intensity: f64,
    pub speckle_sigma: f64,
    pub jitter_px: u32,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            image_width: 320,
            image_height: 360,
            pixels_per_mm: 10.0,
            globe_center: (160.0, 110.0),
            globe_radii: (90.0, 80.0),
            nerve_angle: 0.0,
            sheath_width_mm: 6.0,
            sheath_wall_thickness_mm: 0.8,
            nerve_length_mm: 15.0,
            interior_intensity: 0.1,
            wall_intensity: 0.85,
            background_intensity: 0.35,
            speckle_sigma: 0.0,
            jitter_px: 0,
            seed: 0,
        }
    }
}

fn check(ok: bool, field: &'static str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(field, reason))
    }
}

impl PhantomSpec {
    /// Parses and validates a JSON spec; missing fields take defaults.
    /// Errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::SpecField {
            field: "<document>".into(),
            reason: e.to_string(),
        })?;
        let Some(fields) = value.as_object() else {
            return Err(Error::SpecField {
                field: "<document>".into(),
                reason: "expected a JSON object".into(),
            });
        };
        // Deserialize one field at a time so a type error can be pinned to its key.
        for (key, v) in fields {
            let single = serde_json::Value::Object([(key.clone(), v.clone())].into_iter().collect());
            if let Err(e) = serde_json::from_value::<PhantomSpec>(single) {
                return Err(Error::SpecField {
                    field: key.clone(),
                    reason: e.to_string(),
                });
            }
        }
        let spec: PhantomSpec = serde_json::from_value(value).map_err(|e| Error::SpecField {
            field: "<document>".into(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.image_width >= 8, "image_width", "must be at least 8")?;
        check(self.image_height >= 8, "image_height", "must be at least 8")?;
        check(
            self.pixels_per_mm > 0.0 && self.pixels_per_mm.is_finite(),
            "pixels_per_mm",
            "must be finite and > 0",
        )?;
        check(
            self.sheath_width_mm > 0.0 && self.sheath_width_mm.is_finite(),
            "sheath_width_mm",
            "must be finite and > 0",
        )?;
        check(
            self.sheath_wall_thickness_mm > 0.0 && self.sheath_wall_thickness_mm.is_finite(),
            "sheath_wall_thickness_mm",
            "must be finite and > 0",
        )?;
        check(
            self.nerve_length_mm > 0.0 && self.nerve_length_mm.is_finite(),
            "nerve_length_mm",
            "must be finite and > 0",
        )?;
        check(
            self.nerve_angle.is_finite() && self.nerve_angle.abs() < 90.0,
            "nerve_angle",
            "must point posteriorly (|angle| < 90 degrees)",
        )?;
        for (field, v) in [
            ("interior_intensity", self.interior_intensity),
            ("wall_intensity", self.wall_intensity),
            ("background_intensity", self.background_intensity),
        ] {
            check((0.0..=1.0).contains(&v), field, "must lie in [0, 1]")?;
        }
        check(
            self.wall_intensity > self.background_intensity,
            "wall_intensity",
            "must exceed background_intensity",
        )?;
        check(
            self.background_intensity > self.interior_intensity,
            "background_intensity",
            "must exceed interior_intensity",
        )?;
        check(
            self.speckle_sigma >= 0.0 && self.speckle_sigma.is_finite(),
            "speckle_sigma",
            "must be finite and >= 0",
        )?;
        let (cx, cy) = self.globe_center;
        let (rx, ry) = self.globe_radii;
        check(
            rx > 0.0 && ry > 0.0 && rx.is_finite() && ry.is_finite(),
            "globe_radii",
            "must be finite and > 0",
        )?;
        check(
            cx - rx >= 0.0
                && cy - ry >= 0.0
                && cx + rx <= self.image_width as f64
                && cy + ry <= self.image_height as f64,
            "globe_center",
            "globe ellipse must lie inside the image",
        )?;
        check(
            self.half_band_px() < rx.min(ry),
            "sheath_width_mm",
            "sheath plus walls must be narrower than the globe",
        )?;
        Ok(())
    }

    fn half_width_px(&self) -> f64 {
        self.sheath_width_mm * self.pixels_per_mm / 2.0
    }

    fn wall_px(&self) -> f64 {
        self.sheath_wall_thickness_mm * self.pixels_per_mm
    }

    fn half_band_px(&self) -> f64 {
        self.half_width_px() + self.wall_px()
    }

    /// Unit vector along the nerve and its perpendicular.
    pub fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let theta = self.nerve_angle.to_radians();
        ((theta.sin(), theta.cos()), (theta.cos(), -theta.sin()))
    }

    /// Distance from the globe center to its boundary along the nerve.
    pub fn posterior_pole_distance(&self) -> f64 {
        let ((ux, uy), _) = self.axes();
        let (rx, ry) = self.globe_radii;
        1.0 / ((ux / rx).powi(2) + (uy / ry).powi(2)).sqrt()
    }

    /// The point where the nerve leaves the globe, before jitter.
    pub fn posterior_pole(&self) -> (f64, f64) {
        let ((ux, uy), _) = self.axes();
        let rho = self.posterior_pole_distance();
        (self.globe_center.0 + rho * ux, self.globe_center.1 + rho * uy)
    }

    /// Ground truth for the scene shifted by `(dx, dy)` pixels.
    fn ground_truth_at(&self, dx: f64, dy: f64) -> GroundTruth {
        let (cx, cy) = (self.globe_center.0 + dx, self.globe_center.1 + dy);
        let (rx, ry) = self.globe_radii;
        let globe_bbox = BBox {
            x_min: cx - rx,
            y_min: cy - ry,
            x_max: cx + rx,
            y_max: cy + ry,
            class: ObjectClass::Globe,
            confidence: 1.0,
        };
        let ((ux, uy), (nx, ny)) = self.axes();
        let s0 = self.posterior_pole_distance();
        let s1 = s0 + self.nerve_length_mm * self.pixels_per_mm;
        let hb = self.half_band_px();
        let corners =
            [(s0, hb), (s0, -hb), (s1, hb), (s1, -hb)].map(|(s, q)| (cx + s * ux + q * nx, cy + s * uy + q * ny));
        let fold =
            |f: fn(f64, f64) -> f64, pick: fn(&(f64, f64)) -> f64, init: f64| corners.iter().map(pick).fold(init, f);
        let nerve_bbox = BBox {
            x_min: fold(f64::min, |p| p.0, f64::INFINITY),
            y_min: fold(f64::min, |p| p.1, f64::INFINITY),
            x_max: fold(f64::max, |p| p.0, f64::NEG_INFINITY),
            y_max: fold(f64::max, |p| p.1, f64::NEG_INFINITY),
            class: ObjectClass::Nerve,
            confidence: 1.0,
        }
        .clamp_to(self.image_width, self.image_height);
        GroundTruth {
            globe_bbox,
            nerve_bbox,
            nerve_angle: self.nerve_angle,
            sheath_width_mm: self.sheath_width_mm,
            label: Label::from_width_mm(self.sheath_width_mm),
        }
    }

    /// Jitter-free ground truth shared by every frame of a video.
    pub fn ground_truth(&self) -> GroundTruth {
        self.ground_truth_at(0.0, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub globe_bbox: BBox,
    /// `None` when less than 2 px of the sheath is inside the image.
    pub nerve_bbox: Option<BBox>,
    pub nerve_angle: f64,
    pub sheath_width_mm: f64,
    pub label: Label,
}

#[inline]
fn coverage(d: f64) -> f64 {
    (d + 0.5).clamp(0.0, 1.0)
}

fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

/// Renders frame `frame_index` of the video described by `spec`, returning the
/// frame and the ground truth shifted by that frame's jitter.
pub fn render_phantom_frame(spec: &PhantomSpec, frame_index: usize) -> Result<(Frame, GroundTruth)> {
    spec.validate()?;
    let mut rng = frame_rng(spec.seed, frame_index as u64);
    let j = spec.jitter_px as i64;
    let (dx, dy) = if j > 0 {
        (rng.random_range(-j..=j), rng.random_range(-j..=j))
    } else {
        (0, 0)
    };
    let (dx, dy) = (dx as f64, dy as f64);

    let (cx, cy) = (spec.globe_center.0 + dx, spec.globe_center.1 + dy);
    let (rx, ry) = spec.globe_radii;
    let ((ux, uy), (nx, ny)) = spec.axes();
    let hw = spec.half_width_px();
    let hb = spec.half_band_px();
    let s_end = spec.posterior_pole_distance() + spec.nerve_length_mm * spec.pixels_per_mm;
    let (bg, wall, interior) = (spec.background_intensity, spec.wall_intensity, spec.interior_intensity);

    let (width, height) = (spec.image_width, spec.image_height);
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        let py = row as f64 + 0.5 - cy;
        for col in 0..width {
            let px = col as f64 + 0.5 - cx;

            // Band runs from the globe center outward; the globe covers its start.
            let s = px * ux + py * uy;
            let q = (px * nx + py * ny).abs();
            let axial = coverage(s_end - s) * coverage(s);
            let ci = coverage(hw - q);
            let cw = coverage(hb - q);
            let band = interior * ci + wall * (cw - ci) + bg * (1.0 - cw);
            let mut v = bg + axial * (band - bg);

            let (ex, ey) = (px / rx, py / ry);
            let r = (ex * ex + ey * ey).sqrt();
            let grad = ((px / (rx * rx)).powi(2) + (py / (ry * ry)).powi(2)).sqrt();
            let signed = if grad > 0.0 { (r - 1.0) * r / grad } else { -rx.min(ry) };
            let g = coverage(-signed);
            v = v * (1.0 - g) + wall * g;

            if spec.speckle_sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v *= (spec.speckle_sigma * z).exp();
            }
            pixels.push(f64::from(quantize(v)) / 255.0);
        }
    }
    let frame = Frame::new(width, height, pixels, spec.pixels_per_mm)?;
    Ok((frame, spec.ground_truth_at(dx, dy)))
}

/// Renders `n_frames` frames sharing one jitter-free ground truth.
pub fn generate_video(spec: &PhantomSpec, n_frames: usize) -> Result<(Vec<Frame>, GroundTruth)> {
    if n_frames == 0 {
        return Err(Error::invalid("n_frames", "must be at least 1"));
    }
    spec.validate()?;
    let frames = (0..n_frames)
        .map(|i| render_phantom_frame(spec, i).map(|(f, _)| f))
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, spec.ground_truth()))
}

/// One video to synthesize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomVideo {
    pub spec: PhantomSpec,
    pub patient_id: String,
    pub n_frames: usize,
}

/// Renders every video under `out_dir` as `<video_id>/frame_NNNN.pgm` and
/// writes `manifest.json` next to them.
pub fn build_dataset(videos: &[PhantomVideo], out_dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = DatasetManifest::default();
    for (i, video) in videos.iter().enumerate() {
        let video_id = format!("video_{i:04}");
        let dir = out_dir.join(&video_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (frames, truth) = generate_video(&video.spec, video.n_frames)?;
        let mut frame_paths = Vec::with_capacity(frames.len());
        for (k, frame) in frames.iter().enumerate() {
            let name = format!("frame_{k:04}.pgm");
            frame.save_pgm(&dir.join(&name))?;
            frame_paths.push(format!("{video_id}/{name}"));
        }
        manifest.videos.push(VideoEntry {
            video_id,
            patient_id: video.patient_id.clone(),
            frame_paths,
            pixels_per_mm: video.spec.pixels_per_mm,
            label: truth.label,
            ground_truth: Some(truth),
        });
    }
    manifest.validate()?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Ranges for randomly sampled phantom videos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSampler {
    pub base: PhantomSpec,
    pub width_range_mm: (f64, f64),
    /// Open interval of widths never sampled.
    pub exclude_mm: Option<(f64, f64)>,
    pub angle_range_deg: (f64, f64),
    /// Uniform offset applied to each globe center coordinate.
    pub center_offset_px: f64,
    pub n_frames: usize,
    pub videos_per_patient: usize,
}

impl Default for PhantomSampler {
    fn default() -> Self {
        PhantomSampler {
            base: PhantomSpec {
                speckle_sigma: 0.1,
                jitter_px: 2,
                ..PhantomSpec::default()
            },
            width_range_mm: (3.0, 7.0),
            exclude_mm: Some((4.8, 5.2)),
            angle_range_deg: (-20.0, 20.0),
            center_offset_px: 10.0,
            n_frames: 10,
            videos_per_patient: 2,
        }
    }
}

impl PhantomSampler {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.width_range_mm;
        check(lo > 0.0 && hi >= lo, "width_range_mm", "need 0 < min <= max")?;
        if let Some((a, b)) = self.exclude_mm {
            check(b >= a, "exclude_mm", "need min <= max")?;
            let all_excluded = if hi > lo { a < lo && hi <= b } else { a < lo && lo < b };
            check(!all_excluded, "exclude_mm", "excludes the whole width range")?;
        }
        let (a0, a1) = self.angle_range_deg;
        check(
            a1 >= a0 && a0 > -90.0 && a1 < 90.0,
            "angle_range_deg",
            "need -90 < min <= max < 90",
        )?;
        check(self.center_offset_px >= 0.0, "center_offset_px", "must be >= 0")?;
        check(self.n_frames >= 1, "n_frames", "must be at least 1")?;
        check(self.videos_per_patient >= 1, "videos_per_patient", "must be at least 1")?;
        self.base.validate()
    }

    /// Draws `count` videos deterministically from `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<PhantomVideo>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.width_range_mm;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let width = if hi > lo { rng.random_range(lo..hi) } else { lo };
            if let Some((a, b)) = self.exclude_mm {
                if width > a && width < b {
                    continue;
                }
            }
            let (a0, a1) = self.angle_range_deg;
            let angle = if a1 > a0 { rng.random_range(a0..a1) } else { a0 };
            let off = self.center_offset_px;
            let (ox, oy) = if off > 0.0 {
                (rng.random_range(-off..off), rng.random_range(-off..off))
            } else {
                (0.0, 0.0)
            };
            let spec = PhantomSpec {
                sheath_width_mm: width,
                nerve_angle: angle,
                globe_center: (self.base.globe_center.0 + ox, self.base.globe_center.1 + oy),
                seed: rng.random(),
                ..self.base.clone()
            };
            spec.validate()?;
            let i = out.len();
            out.push(PhantomVideo {
                spec,
                patient_id: format!("patient_{:04}", i / self.videos_per_patient),
                n_frames: self.n_frames,
            });
        }
        Ok(out)
    }
}
