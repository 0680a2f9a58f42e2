//! MBIF1: a minimal lossless container for multi-band `f64` images.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 5 | magic `MBIF1` |
//! | 3 | dtype `f64` |
//! | 1 | layout, `0` = band-major, row-major raster |
//! | 1 | flags, bit 0 = band centers present |
//! | 12 | bands, rows, cols as `u32` |
//! | 8·bands | band centers in nm (only with flag bit 0) |
//! | 8·bands·rows·cols | samples |

use std::path::Path;

use rfcd::{GridShape, MultiBandImage};
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"MBIF1";
const DTYPE: &[u8; 3] = b"f64";
const HEADER_LEN: usize = 5 + 3 + 1 + 1 + 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"MBIF1\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported dtype {0:?} or layout {1}")]
    Unsupported(String, u8),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing data: expected {expected} bytes, found {actual}")]
    Trailing { expected: usize, actual: usize },
    #[error("dimensions {bands}x{rows}x{cols} overflow the addressable size")]
    Overflow { bands: u32, rows: u32, cols: u32 },
    #[error("invalid image: {0}")]
    Invalid(String),
}

pub fn encode(img: &MultiBandImage) -> Result<Vec<u8>, FormatError> {
    let dims = [img.bands(), img.shape().rows(), img.shape().cols()];
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (img.as_slice().len() + img.bands()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(DTYPE);
    out.push(0);
    out.push(u8::from(img.band_centers().is_some()));
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| FormatError::Invalid(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for c in img.band_centers().unwrap_or(&[]) {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for v in img.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<MultiBandImage, FormatError> {
    if bytes.len() < 5 || &bytes[..5] != MAGIC {
        return Err(FormatError::BadMagic(bytes[..bytes.len().min(5)].to_vec()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[5..8] != DTYPE || bytes[8] != 0 {
        return Err(FormatError::Unsupported(
            String::from_utf8_lossy(&bytes[5..8]).into_owned(),
            bytes[8],
        ));
    }
    let has_centers = bytes[9] & 1 == 1;
    let u32_at = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
    let (bands, rows, cols) = (u32_at(10), u32_at(14), u32_at(18));
    let overflow = FormatError::Overflow { bands, rows, cols };
    let samples = (bands as usize)
        .checked_mul(rows as usize)
        .and_then(|v| v.checked_mul(cols as usize))
        .ok_or_else(|| overflow.clone())?;
    let centers = if has_centers { bands as usize } else { 0 };
    let expected = samples
        .checked_add(centers)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or(overflow)?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::Trailing {
            expected,
            actual: bytes.len(),
        });
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let band_centers: Vec<f64> = floats.by_ref().take(centers).collect();
    let values: Vec<f64> = floats.collect();
    let shape = GridShape::new(rows as usize, cols as usize)
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    let img = MultiBandImage::new(bands as usize, shape, values)
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    if has_centers {
        img.with_band_centers(band_centers)
            .map_err(|e| FormatError::Invalid(e.to_string()))
    } else {
        Ok(img)
    }
}

pub fn write_image(img: &MultiBandImage, path: &Path) -> crate::CliResult<()> {
    let bytes =
        encode(img).map_err(|e| crate::CliError::Data(format!("{}: {e}", path.display())))?;
    std::fs::write(path, bytes).map_err(|e| crate::CliError::io(path, e))
}

pub fn read_image(path: &Path) -> crate::CliResult<MultiBandImage> {
    let bytes = std::fs::read(path).map_err(|e| crate::CliError::io(path, e))?;
    decode(&bytes).map_err(|e| crate::CliError::Data(format!("{}: {e}", path.display())))
}
