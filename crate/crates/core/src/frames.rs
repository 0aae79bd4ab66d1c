//! Directories of numbered 8-bit PNG frames.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{PixelRange, Shape, VideoTensor};

/// Lists `*.png` files in `dir`, sorted by file name bytes.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(format!(
            "frame directory {} does not exist",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Reads every frame in `dir` into a UNIT-range tensor (`v ↦ v/255`).
pub fn read_frame_dir(dir: impl AsRef<Path>) -> Result<VideoTensor> {
    let dir = dir.as_ref();
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(Error::NotFound(format!(
            "no PNG frames in {}",
            dir.display()
        )));
    }

    let mut dims: Option<(usize, u32, u32)> = None;
    let mut data = Vec::new();
    for path in &paths {
        let img =
            image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let (w, h) = (img.width(), img.height());
        let (channels, samples): (usize, Vec<u8>) = match img {
            DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
            DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().into_raw()),
            DynamicImage::ImageRgb8(rgb) => (3, rgb.into_raw()),
            DynamicImage::ImageRgba8(_) => (3, img.to_rgb8().into_raw()),
            other => {
                return Err(Error::Image(format!(
                    "{}: unsupported pixel layout {:?}, expected 8-bit gray or RGB",
                    path.display(),
                    other.color()
                )))
            }
        };
        match dims {
            None => dims = Some((channels, w, h)),
            Some(d) if d != (channels, w, h) => {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{} with {} channels, expected {}x{} with {}",
                    path.display(),
                    w,
                    h,
                    channels,
                    d.1,
                    d.2,
                    d.0
                )))
            }
            Some(_) => {}
        }
        // Interleaved HWC to planar CHW.
        let (wu, hu) = (w as usize, h as usize);
        for c in 0..channels {
            for i in 0..hu * wu {
                data.push(f32::from(samples[i * channels + c]) / 255.0);
            }
        }
    }
    let (c, w, h) = dims.expect("at least one frame");
    VideoTensor::new(
        Shape::new(paths.len(), c, h as usize, w as usize),
        PixelRange::Unit,
        data,
    )
}

/// Maps a UNIT sample to 8 bits with round-half-to-even.
pub fn quantize(x: f32) -> u8 {
    (x * 255.0).clamp(0.0, 255.0).round_ties_even() as u8
}

/// File name of frame `index` inside a written directory.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Writes one PNG per frame, converting SYMMETRIC input to UNIT first.
pub fn write_frame_dir(v: &VideoTensor, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let unit = v.convert_range(PixelRange::Unit);
    let s = unit.shape();
    let (w, h) = (s.w as u32, s.h as u32);
    let plane = s.h * s.w;
    for n in 0..s.n {
        let frame = unit.frame_data(n);
        let mut interleaved = vec![0u8; s.c * plane];
        for c in 0..s.c {
            for i in 0..plane {
                interleaved[i * s.c + c] = quantize(frame[c * plane + i]);
            }
        }
        let path = dir.join(frame_file_name(n));
        let img = if s.c == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, interleaved).expect("sized"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, interleaved).expect("sized"))
        };
        img.save_with_format(&path, ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::Io(io),
                other => Error::Image(format!("{}: {other}", path.display())),
            })?;
    }
    Ok(())
}
