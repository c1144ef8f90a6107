//! Measurement construction: the center line from globe to nerve, the
//! retinal point where it leaves the globe, the point 3 mm further along
//! it, and the 16x128 crop aligned with that line.
//!
//! Angles are in degrees measured from the image +y axis (0 = straight
//! down, positive toward +x), the same convention the phantom uses.

use serde::{Deserialize, Serialize};

use crate::detection::BBox;
use crate::error::{Error, Result};
use crate::frame::Frame;

/// Offset of the measurement point behind the retinal point.
pub const MEASUREMENT_DEPTH_MM: f64 = 3.0;
/// Crop samples along the nerve.
pub const CROP_ROWS: usize = 16;
/// Crop samples across the nerve.
pub const CROP_COLS: usize = 128;

pub type Point = (f64, f64);

pub fn bbox_center(b: &BBox) -> Point {
    b.center()
}

/// How the retinal point was located.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetinalSource {
    /// Ray intersection with the ellipse inscribed in the globe box.
    Ellipse,
    /// Fallback: ray intersection with the globe box edge.
    BoxEdge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConstruction {
    pub globe_center: Point,
    pub nerve_center: Point,
    pub axis_angle: f64,
    pub retinal_point: Point,
    pub measurement_point: Point,
    pub retinal_source: RetinalSource,
    pub pixels_per_mm: f64,
}

impl MeasurementConstruction {
    /// Unit vector from the globe toward the nerve.
    pub fn axis(&self) -> Point {
        let a = self.axis_angle.to_radians();
        (a.sin(), a.cos())
    }

    /// Unit vector across the nerve; +x when the axis points straight down.
    pub fn across(&self) -> Point {
        let a = self.axis_angle.to_radians();
        (a.cos(), -a.sin())
    }
}

pub fn build_construction(globe: &BBox, nerve: &BBox, pixels_per_mm: f64) -> Result<MeasurementConstruction> {
    if !(pixels_per_mm > 0.0 && pixels_per_mm.is_finite()) {
        return Err(Error::invalid("pixels_per_mm", "must be finite and > 0"));
    }
    let g = globe.center();
    let n = nerve.center();
    let (dx, dy) = (n.0 - g.0, n.1 - g.1);
    let distance = dx.hypot(dy);
    if !(distance > 1.0) {
        return Err(Error::DegenerateAxis { distance });
    }
    let (ux, uy) = (dx / distance, dy / distance);

    let (a, b) = (globe.width() / 2.0, globe.height() / 2.0);
    let t_ellipse = 1.0 / ((ux / a).powi(2) + (uy / b).powi(2)).sqrt();
    let (t, retinal_source) = if t_ellipse.is_finite() && t_ellipse > 0.0 {
        (t_ellipse, RetinalSource::Ellipse)
    } else {
        let tx = if ux != 0.0 { a / ux.abs() } else { f64::INFINITY };
        let ty = if uy != 0.0 { b / uy.abs() } else { f64::INFINITY };
        (tx.min(ty), RetinalSource::BoxEdge)
    };

    let retinal_point = (g.0 + t * ux, g.1 + t * uy);
    let depth = MEASUREMENT_DEPTH_MM * pixels_per_mm;
    let measurement_point = (retinal_point.0 + depth * ux, retinal_point.1 + depth * uy);
    Ok(MeasurementConstruction {
        globe_center: g,
        nerve_center: n,
        axis_angle: ux.atan2(uy).to_degrees(),
        retinal_point,
        measurement_point,
        retinal_source,
        pixels_per_mm,
    })
}

/// 16x128 resampling of the frame centered on the measurement point.
/// Rows step along the nerve, columns across it, one source pixel apart.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedCrop {
    pub pixels: Vec<f64>,
    pub center: Point,
    pub angle: f64,
    pub pixels_per_mm: f64,
    /// Some sample fell outside the frame and was padded with 0.
    pub partial: bool,
}

impl OrientedCrop {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * CROP_COLS + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * CROP_COLS..(row + 1) * CROP_COLS]
    }

    /// Frame position of sample `(row, col)`.
    pub fn source_point(&self, row: f64, col: f64) -> Point {
        crop_sample_point(self.center, self.angle, row, col)
    }
}

fn crop_sample_point(center: Point, angle: f64, row: f64, col: f64) -> Point {
    let a = angle.to_radians();
    let (ux, uy) = (a.sin(), a.cos());
    let (nx, ny) = (a.cos(), -a.sin());
    let r = row - (CROP_ROWS as f64 - 1.0) / 2.0;
    let c = col - (CROP_COLS as f64 - 1.0) / 2.0;
    (center.0 + c * nx + r * ux, center.1 + c * ny + r * uy)
}

/// Bilinear sample at a continuous position; `None` outside the hull of pixel centers.
pub fn sample_bilinear(frame: &Frame, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (frame.width(), frame.height());
    let fx = x - 0.5;
    let fy = y - 0.5;
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (w - 1) as f64 && fy <= (h - 1) as f64) {
        return None;
    }
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = frame.get(x0, y0) * (1.0 - tx) + frame.get(x1, y0) * tx;
    let bottom = frame.get(x0, y1) * (1.0 - tx) + frame.get(x1, y1) * tx;
    Some(top * (1.0 - ty) + bottom * ty)
}

pub fn extract_oriented_crop(frame: &Frame, c: &MeasurementConstruction) -> OrientedCrop {
    let mut pixels = Vec::with_capacity(CROP_ROWS * CROP_COLS);
    let mut partial = false;
    for row in 0..CROP_ROWS {
        for col in 0..CROP_COLS {
            let (x, y) = crop_sample_point(c.measurement_point, c.axis_angle, row as f64, col as f64);
            match sample_bilinear(frame, x, y) {
                Some(v) => pixels.push(v),
                None => {
                    partial = true;
                    pixels.push(0.0);
                }
            }
        }
    }
    OrientedCrop {
        pixels,
        center: c.measurement_point,
        angle: c.axis_angle,
        pixels_per_mm: frame.pixels_per_mm(),
        partial,
    }
}
