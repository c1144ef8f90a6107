use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageFormat, Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use super::FrameMeasurement;
use crate::detection::BBox;
use crate::error::{Error, Result};
use crate::frame::Frame;

pub const BLUE: Rgb<u8> = Rgb([0, 0, 255]);
pub const ORANGE: Rgb<u8> = Rgb([255, 165, 0]);
pub const RED: Rgb<u8> = Rgb([255, 0, 0]);
const GREEN: Rgb<u8> = Rgb([0, 200, 0]);
const YELLOW: Rgb<u8> = Rgb([255, 255, 0]);
const DOT_RADIUS: i32 = 3;

fn gray_to_rgb(frame: &Frame) -> RgbImage {
    let gray = frame.to_gray8();
    RgbImage::from_fn(gray.width(), gray.height(), |x, y| {
        let v = gray.get_pixel(x, y).0[0];
        Rgb([v, v, v])
    })
}

fn floor_point(p: (f64, f64)) -> (f32, f32) {
    (p.0.floor() as f32, p.1.floor() as f32)
}

/// Draws the measurement construction over the frame: blue retinal point to
/// measurement point, orange width segment across the nerve, red dot on the
/// measurement point. Stages missing from the record are skipped.
pub fn render_overlay(frame: &Frame, m: &FrameMeasurement) -> RgbImage {
    let mut canvas = gray_to_rgb(frame);
    let Some(c) = &m.construction else {
        return canvas;
    };
    draw_line_segment_mut(
        &mut canvas,
        floor_point(c.retinal_point),
        floor_point(c.measurement_point),
        BLUE,
    );
    if let Some(w) = &m.width {
        let half = w.width_mm * c.pixels_per_mm / 2.0;
        let (nx, ny) = c.across();
        let (mx, my) = c.measurement_point;
        draw_line_segment_mut(
            &mut canvas,
            floor_point((mx - half * nx, my - half * ny)),
            floor_point((mx + half * nx, my + half * ny)),
            ORANGE,
        );
    }
    let (mx, my) = c.measurement_point;
    draw_filled_circle_mut(&mut canvas, (mx.floor() as i32, my.floor() as i32), DOT_RADIUS, RED);
    canvas
}

fn draw_box(canvas: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let x = b.x_min.floor() as i32;
    let y = b.y_min.floor() as i32;
    let w = (b.x_max.ceil() as i32 - x).max(1) as u32;
    let h = (b.y_max.ceil() as i32 - y).max(1) as u32;
    draw_hollow_rect_mut(canvas, Rect::at(x, y).of_size(w, h), color);
}

/// `render_overlay` plus the globe (green) and nerve (yellow) boxes.
pub fn render_overlay_with_boxes(frame: &Frame, m: &FrameMeasurement) -> RgbImage {
    let mut canvas = gray_to_rgb(frame);
    if let Some(g) = &m.detections.globe {
        draw_box(&mut canvas, g, GREEN);
    }
    if let Some(n) = &m.detections.nerve {
        draw_box(&mut canvas, n, YELLOW);
    }
    let overlay = render_overlay(frame, m);
    let base = gray_to_rgb(frame);
    for (x, y, px) in overlay.enumerate_pixels() {
        if px != base.get_pixel(x, y) {
            canvas.put_pixel(x, y, *px);
        }
    }
    canvas
}

/// Saves as PNG when the extension is `png`, binary PPM otherwise.
pub fn save_rgb(image: &RgbImage, path: &Path) -> Result<()> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let wrap = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    if is_png {
        return image.save_with_format(path, ImageFormat::Png).map_err(wrap);
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder =
        PnmEncoder::new(std::io::BufWriter::new(file)).with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary));
    image.write_with_encoder(encoder).map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::FrameDetections;

    #[test]
    fn measurement_free_record_is_plain_gray() {
        let frame = Frame::filled(8, 6, 0.5, 10.0).unwrap();
        let m = FrameMeasurement::empty(FrameDetections::empty(0));
        let img = render_overlay(&frame, &m);
        assert_eq!(img.dimensions(), (8, 6));
        assert!(img.pixels().all(|p| p.0 == [128, 128, 128]));
    }

    #[test]
    fn ppm_and_png_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_pixel(3, 2, RED);
        save_rgb(&img, &dir.path().join("a.ppm")).unwrap();
        save_rgb(&img, &dir.path().join("a.png")).unwrap();
        let ppm = std::fs::read(dir.path().join("a.ppm")).unwrap();
        assert!(ppm.starts_with(b"P6"));
        assert_eq!(&ppm[ppm.len() - 3..], &[255, 0, 0]);
        assert_eq!(image::open(dir.path().join("a.png")).unwrap().to_rgb8(), img);
    }
}
