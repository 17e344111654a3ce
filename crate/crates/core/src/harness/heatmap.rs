//! Red/blue saliency overlays: positive saliency in red, negative in blue,
//! zero at the neutral (white) midpoint, blended over the grayscale image.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::volume::{ImageVolume, SaliencyVolume};

pub const OVERLAY_ALPHA: f64 = 0.5;
pub const NEUTRAL: [f64; 3] = [1.0, 1.0, 1.0];

/// Symmetric blue-white-red colormap over `[-1, 1]`.
pub fn diverging(v: f64) -> [f64; 3] {
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        [1.0, 1.0 - v, 1.0 - v]
    } else {
        [1.0 + v, 1.0 + v, 1.0]
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders one RGB overlay per frame.
pub fn render_overlay(map: &SaliencyVolume, base: &ImageVolume) -> Result<Vec<RgbImage>> {
    let dims = base.dims();
    if map.dims() != dims {
        return Err(Error::Shape(format!(
            "map {} does not match image {dims}",
            map.dims()
        )));
    }
    let scale = map.max_abs();
    let gray = base.luminance();
    let mut frames = Vec::with_capacity(dims.frames);
    for n in 0..dims.frames {
        let mut img = RgbImage::new(dims.width as u32, dims.height as u32);
        for y in 0..dims.height {
            for x in 0..dims.width {
                let idx = dims.index(n, y, x);
                let s = if scale > 0.0 {
                    map.values()[idx] / scale
                } else {
                    0.0
                };
                let color = diverging(s);
                let g = gray[idx];
                let px = color.map(|c| to_u8((1.0 - OVERLAY_ALPHA) * g + OVERLAY_ALPHA * c));
                img.put_pixel(x as u32, y as u32, Rgb(px));
            }
        }
        frames.push(img);
    }
    Ok(frames)
}

/// Writes `<dir>/heatmap_<item>_<frame>.png` for every frame and returns the paths.
pub fn emit_heatmap(
    map: &SaliencyVolume,
    base: &ImageVolume,
    dir: &Path,
    item: &str,
) -> Result<Vec<PathBuf>> {
    let frames = render_overlay(map, base)?;
    let mut paths = Vec::with_capacity(frames.len());
    for (n, frame) in frames.iter().enumerate() {
        let path = dir.join(format!("heatmap_{item}_{n}.png"));
        frame.save_with_format(&path, image::ImageFormat::Png)?;
        paths.push(path);
    }
    Ok(paths)
}
