//! PNG raster I/O.
//!
//! Disparity uses the Cityscapes encoding: 16-bit gray, raw `0` is missing,
//! otherwise disparity = `(raw - 1) / 256` px.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::{is_missing, DisparityMap, ImageRgb, SemanticLabeling, TransmittanceMap, MISSING};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

fn save<P, C>(path: &Path, buf: ImageBuffer<P, C>) -> Result<()>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedRaster { path: path.to_path_buf(), reason: reason.into() }
}

/// Reads an 8- or 16-bit RGB(A) or gray PNG as sRGB in `[0, 1]`.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match &img {
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_) => img.to_rgb8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => {
            img.to_rgb16().into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()
        }
        _ => return Err(unsupported(path, "expected 8- or 16-bit integer PNG")),
    };
    ImageRgb::new(w, h, data)
}

/// Writes 8-bit RGB.
pub fn write_rgb(path: impl AsRef<Path>, img: &ImageRgb) -> Result<()> {
    let raw: Vec<u8> = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path.as_ref(), buf)
}

fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(buf) => Ok((w, h, buf.into_raw())),
        DynamicImage::ImageLuma8(buf) => Ok((w, h, buf.into_raw().into_iter().map(u16::from).collect())),
        _ => Err(unsupported(path, "expected single-channel PNG")),
    }
}

pub fn read_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let (w, h, raw) = read_gray16(path.as_ref())?;
    let data = raw
        .into_iter()
        .map(|r| if r == 0 { MISSING } else { (f64::from(r) - 1.0) / 256.0 })
        .collect();
    DisparityMap::new(w, h, data)
}

pub fn write_disparity(path: impl AsRef<Path>, d: &DisparityMap) -> Result<()> {
    let raw: Vec<u16> = d
        .data()
        .iter()
        .map(|&v| if is_missing(v) { 0 } else { (v * 256.0 + 1.0).round().min(65535.0) as u16 })
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(d.width() as u32, d.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path.as_ref(), buf)
}

/// Class ids from an 8-bit (or 16-bit) gray PNG, plus an optional 16-bit
/// instance PNG of the same size.
pub fn read_labels(path: impl AsRef<Path>, instances: Option<&Path>) -> Result<SemanticLabeling> {
    let (w, h, raw) = read_gray16(path.as_ref())?;
    let labels = SemanticLabeling::new(w, h, raw.into_iter().map(u32::from).collect())?;
    match instances {
        None => Ok(labels),
        Some(ipath) => {
            let (iw, ih, iraw) = read_gray16(ipath)?;
            crate::error::check_dims("instance map", (w, h), (iw, ih))?;
            labels.with_instances(iraw.into_iter().map(u32::from).collect())
        }
    }
}

/// Writes class ids as 8-bit gray; ids above 255 are rejected.
pub fn write_labels(path: impl AsRef<Path>, labels: &SemanticLabeling) -> Result<()> {
    let path = path.as_ref();
    let raw = labels
        .labels()
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| unsupported(path, format!("label {l} does not fit 8 bits"))))
        .collect::<Result<Vec<u8>>>()?;
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(labels.width() as u32, labels.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path, buf)
}

/// 16-bit gray, `round(t * 65535)`; missing pixels are written as 0.
pub fn write_transmittance(path: impl AsRef<Path>, t: &TransmittanceMap) -> Result<()> {
    let raw: Vec<u16> = t
        .data()
        .iter()
        .map(|&v| if is_missing(v) { 0 } else { (v * 65535.0).round() as u16 })
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(t.width() as u32, t.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path.as_ref(), buf)
}

/// Dimensions from the PNG header without decoding pixels.
pub fn dimensions(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (w, h) = image::image_dimensions(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    Ok((w as usize, h as usize))
}

/// Relative paths of all `.png` files under `root`, sorted, `/`-separated.
pub fn list_pngs(root: impl AsRef<Path>) -> Result<Vec<String>> {
    let root = root.as_ref();
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into_io_error().unwrap_or_else(|| std::io::Error::other("directory walk failed")))
        })?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    out.sort();
    Ok(out)
}
