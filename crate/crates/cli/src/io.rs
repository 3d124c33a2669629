//! Image files and atomic output.
//!
//! Two raster formats, chosen by extension:
//!
//! - `.pvf`: magic `PVF1`, width and height as little-endian `u32`, then
//!   `width·height` little-endian `f64` values in row-major order. Lossless.
//! - `.pgm`: binary graymap (P5). 8- and 16-bit files are read and mapped
//!   linearly to `[0, 1]`; writes are always 16-bit, clamped to `[0, 1]`.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmEncoder, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};
use pvb::Image;

use crate::CliError;

pub const PVF_MAGIC: &[u8; 4] = b"PVF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pvf,
    Pgm,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("pvf") => Ok(Format::Pvf),
            Some("pgm") => Ok(Format::Pgm),
            _ => Err(CliError::Usage(format!(
                "{}: unknown image format (use .pvf or .pgm)",
                path.display()
            ))),
        }
    }
}

pub fn encode_pvf(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * img.len());
    out.extend_from_slice(PVF_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    for v in img.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_pvf(bytes: &[u8]) -> Result<Image, String> {
    if bytes.len() < 12 || &bytes[..4] != PVF_MAGIC {
        return Err("missing PVF1 header".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let payload = &bytes[12..];
    if payload.len() != 8 * w * h {
        return Err(format!(
            "expected {} payload bytes for {w}×{h}, found {}",
            8 * w * h,
            payload.len()
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(w, h, values).map_err(|e| e.to_string())
}

pub fn encode_pgm(img: &Image) -> Result<Vec<u8>, String> {
    let samples: Vec<u16> = img
        .values()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_header(
            GraymapHeader {
                encoding: SampleEncoding::Binary,
                width: img.width() as u32,
                height: img.height() as u32,
                maxwhite: 65535,
            }
            .into(),
        )
        .encode(
            samples.as_slice(),
            img.width() as u32,
            img.height() as u32,
            ExtendedColorType::L16,
        )
        .map_err(|e| e.to_string())?;
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image, String> {
    let decoded = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm)
        .decode()
        .map_err(|e| e.to_string())?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let values = match decoded {
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        _ => return Err("not a single-channel graymap".into()),
    };
    Image::new(w, h, values).map_err(|e| e.to_string())
}

pub fn read_image(path: &Path) -> Result<Image, CliError> {
    let format = Format::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let decoded = match format {
        Format::Pvf => decode_pvf(&bytes),
        Format::Pgm => decode_pgm(&bytes),
    };
    decoded.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn encode_image(img: &Image, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Pvf => Ok(encode_pvf(img)),
        Format::Pgm => encode_pgm(img).map_err(CliError::Usage),
    }
}

/// Checks that `path` can be created: its directory exists.
pub fn check_output(path: &Path) -> Result<(), CliError> {
    let dir = parent_dir(path);
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{}: output directory does not exist",
            path.display()
        )))
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp =
        tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
