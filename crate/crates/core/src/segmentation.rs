//! Nerve masks over the oriented crop and their reduction to a width.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmSubtype};
use image::{DynamicImage, GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::write_pgm;
use crate::geometry::{OrientedCrop, CROP_COLS, CROP_ROWS};

/// Rows with a run needed for a width to count.
pub const MIN_VALID_ROWS: usize = 8;

/// Binary 16x128 mask; `true` marks nerve interior.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CropMask {
    bits: Vec<bool>,
}

impl Default for CropMask {
    fn default() -> Self {
        CropMask {
            bits: vec![false; CROP_ROWS * CROP_COLS],
        }
    }
}

impl CropMask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.len() != CROP_ROWS * CROP_COLS {
            return Err(Error::ShapeMismatch(format!(
                "{} mask cells, expected {}",
                bits.len(),
                CROP_ROWS * CROP_COLS
            )));
        }
        Ok(CropMask { bits })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * CROP_COLS + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * CROP_COLS + col] = value;
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.bits[row * CROP_COLS..(row + 1) * CROP_COLS]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(CROP_COLS as u32, CROP_ROWS as u32, |x, y| {
            Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        })
    }

    /// Writes a binary PGM (P5, maxval 255, 255 = nerve).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_pgm(&self.to_gray8(), path)
    }
}

/// Reads a 16x128 mask from PGM (nonzero = nerve) or PBM (set bit = nerve).
pub fn load_mask(path: &Path) -> Result<CropMask> {
    let image_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = PnmDecoder::new(BufReader::new(file)).map_err(image_err)?;
    // The decoder maps a set PBM bit (black) to 0.
    let bitmap = matches!(decoder.subtype(), PnmSubtype::Bitmap(_));
    let gray = DynamicImage::from_decoder(decoder).map_err(image_err)?.into_luma8();
    let (cols, rows) = (gray.width() as usize, gray.height() as usize);
    if rows != CROP_ROWS || cols != CROP_COLS {
        return Err(Error::MaskDimensions { rows, cols });
    }
    let bits = gray.pixels().map(|p| (p.0[0] != 0) != bitmap).collect();
    CropMask::from_bits(bits)
}

/// Source of nerve masks for oriented crops.
pub trait Segmenter {
    fn segment(&self, frame_index: usize, crop: &OrientedCrop) -> CropMask;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSegmenterConfig {
    /// Half-width of the window around the crop center searched for the darkest column.
    pub center_window: usize,
    /// Smallest accepted per-column intensity step at a wall edge.
    pub min_edge_contrast: f64,
}

impl Default for ClassicalSegmenterConfig {
    fn default() -> Self {
        ClassicalSegmenterConfig {
            center_window: 16,
            min_edge_contrast: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ClassicalSegmenter {
    pub config: ClassicalSegmenterConfig,
}

impl Segmenter for ClassicalSegmenter {
    fn segment(&self, _frame_index: usize, crop: &OrientedCrop) -> CropMask {
        segment_with(crop, &self.config)
    }
}

pub fn segment_classical(crop: &OrientedCrop) -> CropMask {
    segment_with(crop, &ClassicalSegmenterConfig::default())
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |best, (i, &v)| if v < best.1 { (i, v) } else { best },
        )
        .0
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

fn segment_with(crop: &OrientedCrop, cfg: &ClassicalSegmenterConfig) -> CropMask {
    let mut mask = CropMask::default();
    let center = CROP_COLS / 2;
    let lo = center.saturating_sub(cfg.center_window);
    let hi = (center + cfg.center_window).min(CROP_COLS - 1);

    for r in 0..CROP_ROWS {
        // Rows run along the nerve, so neighbours see the same edges.
        let r0 = r.saturating_sub(1);
        let r1 = (r + 1).min(CROP_ROWS - 1);
        let n = (r1 - r0 + 1) as f64;
        let row: Vec<f64> = (0..CROP_COLS)
            .map(|c| (r0..=r1).map(|rr| crop.get(rr, c)).sum::<f64>() / n)
            .collect();
        let smooth: Vec<f64> = (0..CROP_COLS)
            .map(|c| {
                let a = c.saturating_sub(1);
                let b = (c + 1).min(CROP_COLS - 1);
                row[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
            })
            .collect();
        // step[c] sits between columns c and c + 1
        let step: Vec<f64> = smooth.windows(2).map(|w| w[1] - w[0]).collect();

        let dark = lo + argmin(&smooth[lo..=hi]);
        if dark == 0 || dark >= CROP_COLS - 1 {
            continue;
        }
        let left = argmin(&step[..dark]);
        let right = dark + argmax(&step[dark..]);
        if -step[left] < cfg.min_edge_contrast || step[right] < cfg.min_edge_contrast {
            continue;
        }

        let interior = row[dark];
        let wall_left = row[left.saturating_sub(4)..=left]
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        let wall_right = row[right + 1..=(right + 5).min(CROP_COLS - 1)]
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        let thr_left = (wall_left + interior) / 2.0;
        let thr_right = (wall_right + interior) / 2.0;

        let mut a = dark;
        while a > 0 && row[a - 1] < thr_left {
            a -= 1;
        }
        let mut b = dark;
        while b + 1 < CROP_COLS && row[b + 1] < thr_right {
            b += 1;
        }
        for c in a..=b {
            mask.set(r, c, true);
        }
    }
    mask
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthMeasurement {
    pub width_mm: f64,
    pub per_row_px: Vec<Option<usize>>,
    pub valid: bool,
}

fn longest_run(row: &[bool]) -> usize {
    let mut best = 0;
    let mut current = 0;
    for &b in row {
        current = if b { current + 1 } else { 0 };
        best = best.max(current);
    }
    best
}

/// Median of the per-row longest runs, converted to millimeters.
pub fn width_from_mask(mask: &CropMask, pixels_per_mm: f64) -> WidthMeasurement {
    let per_row_px: Vec<Option<usize>> = (0..CROP_ROWS)
        .map(|r| Some(longest_run(mask.row(r))).filter(|&n| n > 0))
        .collect();
    let mut runs: Vec<usize> = per_row_px.iter().flatten().copied().collect();
    runs.sort_unstable();
    let valid = runs.len() >= MIN_VALID_ROWS && pixels_per_mm > 0.0;
    let width_mm = if valid {
        let m = runs.len() / 2;
        let median = if runs.len().is_multiple_of(2) {
            (runs[m - 1] + runs[m]) as f64 / 2.0
        } else {
            runs[m] as f64
        };
        median / pixels_per_mm
    } else {
        0.0
    };
    WidthMeasurement {
        width_mm,
        per_row_px,
        valid,
    }
}
