//! `QRAS` raster container: 4-byte magic, then version, channels, height and
//! width as little-endian `u32`, then the values as little-endian `f32` in
//! channel-major, row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const RASTER_MAGIC: &[u8; 4] = b"QRAS";
pub const RASTER_VERSION: u32 = 1;
pub const RASTER_HEADER_LEN: usize = 20;

pub fn encode_raster(raster: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(RASTER_HEADER_LEN + 4 * raster.len());
    out.extend_from_slice(RASTER_MAGIC);
    for v in [
        RASTER_VERSION,
        raster.channels() as u32,
        raster.height() as u32,
        raster.width() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in raster.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < RASTER_HEADER_LEN || &bytes[..4] != RASTER_MAGIC {
        return Err(Error::Format("missing QRAS header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != RASTER_VERSION {
        return Err(Error::Format(format!(
            "unsupported raster version {version}"
        )));
    }
    let (c, h, w) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format("raster dimensions overflow".into()))?;
    if bytes.len() != RASTER_HEADER_LEN + 4 * n {
        return Err(Error::Format(format!(
            "raster {c}x{h}x{w} needs {} bytes, file has {}",
            RASTER_HEADER_LEN + 4 * n,
            bytes.len()
        )));
    }
    let data = bytes[RASTER_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Raster::from_vec_unchecked(c, h, w, data)
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_raster(raster)).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes).map_err(|e| Error::data(path, e.to_string()))
}
