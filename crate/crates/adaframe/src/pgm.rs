//! Binary 8-bit PGM (`P5`, maxval 255), values scaled to `[0, 1]`.

use std::fs;
use std::path::Path;

use adaframe_core::Signal;

use crate::error::{Error, Result};

/// Skips whitespace and `#` comments, then reads one unsigned decimal field.
fn field(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("expected a number at byte {start}")))
}

pub fn decode(bytes: &[u8]) -> Result<Signal> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::MalformedHeader("not a binary PGM (P5)".into()));
    }
    let mut pos = 2;
    let width = field(bytes, &mut pos)? as usize;
    let height = field(bytes, &mut pos)? as usize;
    let maxval = field(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::MalformedHeader("missing separator after maxval".into()));
    }
    let pixels = &bytes[pos + 1..];
    if width == 0 || height == 0 || pixels.len() != width * height {
        return Err(Error::MalformedHeader(format!(
            "{width}x{height} image with {} pixel bytes",
            pixels.len()
        )));
    }
    Ok(Signal::new(vec![height, width], pixels.iter().map(|&p| p as f64 / 255.0).collect())?)
}

pub fn encode(s: &Signal) -> Result<Vec<u8>> {
    if s.ndim() != 2 || s.channels() != 0 {
        return Err(Error::Core(adaframe_core::Error::DimensionMismatch(format!(
            "PGM holds one 2D plane, got shape {:?}",
            s.full_shape()
        ))));
    }
    if let Some(bad) = s.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Core(adaframe_core::Error::OutOfRange { value: *bad }));
    }
    let (h, w) = (s.shape()[0], s.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(s.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn read(path: impl AsRef<Path>) -> Result<Signal> {
    decode(&fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, s: &Signal) -> Result<()> {
    fs::write(path, encode(s)?)?;
    Ok(())
}
