//! `ADF1` container: magic, `ndim: u8`, `channels: u8`, `ndim` little-endian
//! `u32` extents, then little-endian `f64` payload, channel-major and
//! row-major.

use std::fs;
use std::path::Path;

use adaframe_core::Signal;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADF1";

pub fn encode(s: &Signal) -> Result<Vec<u8>> {
    let ndim = u8::try_from(s.ndim()).map_err(|_| Error::MalformedHeader("too many axes".into()))?;
    let channels =
        u8::try_from(s.channels()).map_err(|_| Error::MalformedHeader(format!("{} channels do not fit", s.channels())))?;
    let mut out = Vec::with_capacity(6 + 4 * s.ndim() + 8 * s.data().len());
    out.extend_from_slice(MAGIC);
    out.push(ndim);
    out.push(channels);
    for &n in s.shape() {
        let n = u32::try_from(n).map_err(|_| Error::MalformedHeader(format!("extent {n} does not fit")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for v in s.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Signal> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader("missing ADF1 magic".into()));
    }
    let ndim = bytes[4] as usize;
    let channels = bytes[5] as usize;
    let header = 6 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::MalformedHeader("truncated shape".into()));
    }
    let shape: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(channels.max(1), |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() != 8 * count {
        return Err(Error::MalformedHeader(format!(
            "payload has {} bytes, shape {shape:?} with {channels} channels needs {}",
            payload.len(),
            8 * count
        )));
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(if channels > 0 {
        Signal::with_channels(shape, channels, data)?
    } else {
        Signal::new(shape, data)?
    })
}

pub fn read(path: impl AsRef<Path>) -> Result<Signal> {
    decode(&fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, s: &Signal) -> Result<()> {
    fs::write(path, encode(s)?)?;
    Ok(())
}
