//! Binary PGM (P5) rendering of change masks: unchanged pixels black,
//! changed pixels white.

use std::path::Path;

use rfcd::robust::ChangeMask;
use rfcd::GridShape;

use crate::{CliError, CliResult};

pub fn encode_mask(mask: &ChangeMask) -> Vec<u8> {
    let s = mask.shape();
    let mut out = format!("P5\n{} {}\n255\n", s.cols(), s.rows()).into_bytes();
    out.extend(mask.as_slice().iter().map(|&m| if m { 255u8 } else { 0 }));
    out
}

/// Reads masks written by [`encode_mask`]: any nonzero sample is changed.
/// Comments are not supported.
pub fn decode_mask(bytes: &[u8]) -> Result<ChangeMask, String> {
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5) file".into());
    }
    let mut num = |what: &str| -> Result<usize, String> {
        token()?
            .parse::<usize>()
            .map_err(|e| format!("bad PGM {what}: {e}"))
    };
    let (cols, rows, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported PGM maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes
        .get(pos + 1..)
        .ok_or("PGM file ends after the header")?;
    if data.len() != rows * cols {
        return Err(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            rows * cols
        ));
    }
    let shape = GridShape::new(rows, cols).map_err(|e| e.to_string())?;
    ChangeMask::new(data.iter().map(|&v| v != 0).collect(), shape).map_err(|e| e.to_string())
}

pub fn write_mask_pgm(mask: &ChangeMask, path: &Path) -> CliResult<()> {
    std::fs::write(path, encode_mask(mask)).map_err(|e| CliError::io(path, e))
}

pub fn read_mask_pgm(path: &Path) -> CliResult<ChangeMask> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_mask(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
