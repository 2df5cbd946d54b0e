//! Deterministic skeleton rasterization.
//!
//! Bones draw as thick segments (a pixel is painted when its squared
//! distance to the segment is at most (thickness/2)^2, evaluated in integer
//! arithmetic), keypoints as filled discs, both in a fixed palette order.
//! No anti-aliasing and no floating point in the pixel loop, so renders are
//! bit-identical across runs and platforms and golden-file tests are exact.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::skeleton::{KeypointFrame, MotionClip};
use std::path::Path;

pub type Color = [u8; 3];

/// Hue-wheel palette in the style pose renderers conventionally use,
/// one entry per body keypoint.
pub const PALETTE: [Color; 18] = [
    [255, 0, 0],
    [255, 85, 0],
    [255, 170, 0],
    [255, 255, 0],
    [170, 255, 0],
    [85, 255, 0],
    [0, 255, 0],
    [0, 255, 85],
    [0, 255, 170],
    [0, 255, 255],
    [0, 170, 255],
    [0, 85, 255],
    [0, 0, 255],
    [85, 0, 255],
    [170, 0, 255],
    [255, 0, 255],
    [255, 0, 170],
    [255, 0, 85],
];

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    /// Per-bone colors, cycled by bone index.
    pub bone_colors: Vec<Color>,
    /// Per-keypoint colors, cycled by keypoint index.
    pub keypoint_colors: Vec<Color>,
    /// Segment thickness in pixels (>= 1).
    pub thickness: u32,
    /// Keypoint disc radius in pixels.
    pub keypoint_radius: u32,
    pub background: Color,
    /// Elements with confidence at or below this are not drawn.
    pub confidence_threshold: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            bone_colors: PALETTE.to_vec(),
            keypoint_colors: PALETTE.to_vec(),
            thickness: 4,
            keypoint_radius: 4,
            background: [0, 0, 0],
            confidence_threshold: 0.0,
        }
    }
}

impl RenderStyle {
    fn validate(&self) -> Result<()> {
        if self.thickness < 1 {
            return Err(Error::InvalidConfig("line thickness must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::InvalidConfig(
                "confidence threshold must lie in [0, 1]".into(),
            ));
        }
        if self.bone_colors.is_empty() || self.keypoint_colors.is_empty() {
            return Err(Error::InvalidConfig("color tables must be non-empty".into()));
        }
        Ok(())
    }
}

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>, // row-major RGB
}

impl Raster {
    pub fn filled(width: u32, height: u32, color: Color) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> Color {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, color: Color) {
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    pub fn data(&self) -> &[u8] {
        &self.pixels
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) * 3 {
            return Err(Error::Image(format!(
                "buffer length {} does not match {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Normalized coordinate to pixel index: floor(coord * dimension), clamped.
fn to_pixel<S: Scalar>(coord: S, dimension: u32) -> i64 {
    let scaled = (coord.as_f64() * f64::from(dimension)).floor();
    let max = i64::from(dimension) - 1;
    (scaled as i64).clamp(0, max)
}

/// Paints all pixels whose squared distance to segment ab is at most
/// (thickness/2)^2. Integer arithmetic throughout: with |coords| bounded by
/// the image size, the i128 products are exact.
fn draw_segment(raster: &mut Raster, a: (i64, i64), b: (i64, i64), thickness: u32, color: Color) {
    let t2 = i128::from(thickness) * i128::from(thickness); // (2r)^2 with r = thickness/2
    let half = i64::from(thickness) / 2 + 1;
    let x0 = (a.0.min(b.0) - half).max(0);
    let x1 = (a.0.max(b.0) + half).min(i64::from(raster.width) - 1);
    let y0 = (a.1.min(b.1) - half).max(0);
    let y1 = (a.1.max(b.1) + half).min(i64::from(raster.height) - 1);
    let ab = (b.0 - a.0, b.1 - a.1);
    let ab2 = i128::from(ab.0) * i128::from(ab.0) + i128::from(ab.1) * i128::from(ab.1);
    let sq = |dx: i64, dy: i64| i128::from(dx) * i128::from(dx) + i128::from(dy) * i128::from(dy);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let ap = (x - a.0, y - a.1);
            let dot = i128::from(ap.0) * i128::from(ab.0) + i128::from(ap.1) * i128::from(ab.1);
            // Squared distance to the segment as an exact rational num/den.
            let (num, den) = if ab2 == 0 || dot <= 0 {
                (sq(ap.0, ap.1), 1)
            } else if dot >= ab2 {
                (sq(x - b.0, y - b.1), 1)
            } else {
                // perpendicular: d^2 = (|ap|^2 * |ab|^2 - dot^2) / |ab|^2
                (sq(ap.0, ap.1) * ab2 - dot * dot, ab2)
            };
            // d^2 <= (thickness/2)^2  <=>  4*num <= t2*den, exactly.
            if 4 * num <= t2 * den {
                raster.set_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn draw_disc(raster: &mut Raster, center: (i64, i64), radius: u32, color: Color) {
    let r = i64::from(radius);
    let x0 = (center.0 - r).max(0);
    let x1 = (center.0 + r).min(i64::from(raster.width) - 1);
    let y0 = (center.1 - r).max(0);
    let y1 = (center.1 + r).min(i64::from(raster.height) - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x - center.0;
            let dy = y - center.1;
            if dx * dx + dy * dy <= r * r {
                raster.set_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// Rasterizes one frame at `width` x `height` pixels: background fill, then
/// bones whose endpoint confidences both exceed the threshold, then
/// keypoint discs, in fixed index order.
pub fn render_frame<S: Scalar>(
    frame: &KeypointFrame<S>,
    topology: &crate::skeleton::SkeletonTopology,
    style: &RenderStyle,
    width: u32,
    height: u32,
) -> Result<Raster> {
    style.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("raster dimensions must be positive".into()));
    }
    if frame.len() != topology.len() {
        return Err(Error::TopologyMismatch(format!(
            "frame has {} keypoints, topology '{}' has {}",
            frame.len(),
            topology.name(),
            topology.len()
        )));
    }
    let mut raster = Raster::filled(width, height, style.background);
    let threshold = style.confidence_threshold;
    let visible = |i: usize| frame.confidence(i).as_f64() > threshold;
    let pixel_of = |i: usize| {
        (
            to_pixel(frame.position(i).x, width),
            to_pixel(frame.position(i).y, height),
        )
    };
    for (bi, bone) in topology.bones().iter().enumerate() {
        if visible(bone.parent) && visible(bone.child) {
            let color = style.bone_colors[bi % style.bone_colors.len()];
            draw_segment(
                &mut raster,
                pixel_of(bone.parent),
                pixel_of(bone.child),
                style.thickness,
                color,
            );
        }
    }
    for i in 0..topology.len() {
        if visible(i) {
            let color = style.keypoint_colors[i % style.keypoint_colors.len()];
            draw_disc(&mut raster, pixel_of(i), style.keypoint_radius, color);
        }
    }
    Ok(raster)
}

/// Renders every frame of a clip. Frames are independent, so they render in
/// parallel; order of the output matches frame order.
pub fn render_clip<S: Scalar>(
    clip: &MotionClip<S>,
    style: &RenderStyle,
    width: u32,
    height: u32,
) -> Result<Vec<Raster>> {
    use rayon::prelude::*;
    clip.frames()
        .par_iter()
        .map(|f| render_frame(f, clip.topology(), style, width, height))
        .collect()
}

/// Zero-padded frame file name: `frame_0000.png`, `frame_0001.png`, ...
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

pub fn save_png(raster: &Raster, path: &Path) -> Result<()> {
    let buffer: image::RgbImage =
        image::ImageBuffer::from_raw(raster.width(), raster.height(), raster.data().to_vec())
            .expect("raster buffer matches dimensions");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))
}

pub fn load_png(path: &Path) -> Result<Raster> {
    let img = image::open(path).map_err(|e| Error::Image(e.to_string()))?;
    let rgb = img.to_rgb8();
    Raster::from_raw(rgb.width(), rgb.height(), rgb.into_raw())
}

/// PNG bytes without touching the filesystem, for hashing and service
/// payloads.
pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut bytes);
    image::ImageEncoder::write_image(
        encoder,
        raster.data(),
        raster.width(),
        raster.height(),
        image::ColorType::Rgb8,
    )
    .map_err(|e| Error::Image(e.to_string()))?;
    Ok(bytes)
}
