//! HSC cube files, spectral-response CSV files, and atomic file writes.
//!
//! HSC layout (little-endian): 8-byte magic `HSCUBE1\n`, `u32` height,
//! `u32` width, `u32` bands, `u32` dtype (1 = `f32`), then `H·W·C` floats
//! band-sequential and row-major within each band.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Cube, DataError, Result, SpectralResponse};

pub const HSC_MAGIC: &[u8; 8] = b"HSCUBE1\n";
pub const DTYPE_F32: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;

/// Write `bytes` to a sibling temp file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub fn encode_cube(cube: &Cube) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + cube.data().len() * 4);
    out.extend_from_slice(HSC_MAGIC);
    for v in [cube.height(), cube.width(), cube.bands()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for v in cube.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub fn decode_cube(bytes: &[u8]) -> Result<Cube> {
    if bytes.len() < 8 || &bytes[..8] != HSC_MAGIC {
        return Err(DataError::BadMagic {
            expected: HSC_MAGIC,
            found: bytes[..bytes.len().min(8)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let (h, w, c) = (u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16));
    let dtype = u32_at(bytes, 20);
    let overflow = || DataError::ExtentOverflow(h as u64, w as u64, c as u64);
    if h == 0 || w == 0 || c == 0 {
        return Err(overflow());
    }
    let count = (h as usize)
        .checked_mul(w as usize)
        .and_then(|v| v.checked_mul(c as usize))
        .ok_or_else(overflow)?;
    let payload = count.checked_mul(4).ok_or_else(overflow)?;
    if dtype != DTYPE_F32 {
        return Err(DataError::UnsupportedDtype(dtype));
    }
    let expected = HEADER_LEN.checked_add(payload).ok_or_else(overflow)?;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes(bytes.len() - expected));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Cube::new(h as usize, w as usize, c as usize, data)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<Cube> {
    decode_cube(&fs::read(path)?)
}

pub fn write_cube(path: impl AsRef<Path>, cube: &Cube) -> Result<()> {
    write_atomic(path.as_ref(), &encode_cube(cube))?;
    Ok(())
}

/// `s` lines of `S` comma-separated non-negative numbers. Rows are
/// normalized to sum to one on load.
pub fn parse_srf(text: &str) -> Result<SpectralResponse> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| DataError::Srf(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    SpectralResponse::new(rows)
}

pub fn read_srf(path: impl AsRef<Path>) -> Result<SpectralResponse> {
    parse_srf(&fs::read_to_string(path)?)
}

pub fn write_srf(path: impl AsRef<Path>, srf: &SpectralResponse) -> Result<()> {
    let mut text = String::new();
    for row in srf.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    write_atomic(path.as_ref(), text.as_bytes())?;
    Ok(())
}
