//! Grayscale ultrasound frames and their on-disk form.
//!
//! Continuous coordinates place the center of pixel `(i, j)` at
//! `(i + 0.5, j + 0.5)`, so a half-open box `[x_min, x_max)` spans exactly
//! the pixels it names.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, Luma};

use crate::error::{Error, Result};

/// One grayscale image with intensities in `[0, 1]` and a spatial calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    pixels_per_mm: f64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, pixels_per_mm: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame", "width and height must be nonzero"));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if !(pixels_per_mm > 0.0 && pixels_per_mm.is_finite()) {
            return Err(Error::invalid("pixels_per_mm", "must be finite and > 0"));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pixels", "intensities must lie in [0, 1]"));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            pixels_per_mm,
        })
    }

    /// A frame filled with one intensity.
    pub fn filled(width: usize, height: usize, value: f64, pixels_per_mm: f64) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height], pixels_per_mm)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_per_mm(&self) -> f64 {
        self.pixels_per_mm
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([quantize(self.get(x as usize, y as usize))])
        })
    }

    pub fn from_gray8(image: &GrayImage, pixels_per_mm: f64) -> Result<Self> {
        let pixels = image.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
        Frame::new(image.width() as usize, image.height() as usize, pixels, pixels_per_mm)
    }

    /// Reads an 8-bit grayscale PGM (or any grayscale-convertible image).
    pub fn load(path: &Path, pixels_per_mm: f64) -> Result<Self> {
        let image = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        Frame::from_gray8(&image, pixels_per_mm)
    }

    /// Writes the frame as binary PGM (P5, maxval 255).
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        write_pgm(&self.to_gray8(), path)
    }
}

/// Maps an intensity in `[0, 1]` to the nearest 8-bit level.
#[inline]
pub fn quantize(value: f64) -> u8 {
    (value.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(image.as_raw(), image.width(), image.height(), ExtendedColorType::L8)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}
