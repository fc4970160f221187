//! Portable float map codec.
//!
//! Scanlines are stored bottom-to-top; the sign of the scale field selects
//! byte order (negative = little-endian). Invalid pixels are written as NaN and
//! any non-finite sample read back is marked invalid.

use std::path::Path;

use super::grid::{Grid, NormalGrid, ScalarGrid};
use crate::error::{Error, Result};

/// Either a grayscale (`Pf`) or a three-channel (`PF`) map.
#[derive(Debug, Clone, PartialEq)]
pub enum PfmGrid {
    Scalar(ScalarGrid),
    Vector(NormalGrid),
}

impl PfmGrid {
    pub fn into_scalar(self) -> Result<ScalarGrid> {
        match self {
            PfmGrid::Scalar(g) => Ok(g),
            PfmGrid::Vector(_) => Err(Error::format(
                "pfm",
                "expected grayscale (Pf), found color (PF)",
            )),
        }
    }

    pub fn into_vector(self) -> Result<NormalGrid> {
        match self {
            PfmGrid::Vector(g) => Ok(g),
            PfmGrid::Scalar(_) => Err(Error::format(
                "pfm",
                "expected color (PF), found grayscale (Pf)",
            )),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            PfmGrid::Scalar(g) => (g.width(), g.height()),
            PfmGrid::Vector(g) => (g.width(), g.height()),
        }
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    little_endian: bool,
    payload_offset: usize,
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::format("pfm", reason)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(malformed("header ended early"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map(str::to_owned)
        .map_err(|_| malformed("non-ascii header"))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let channels = match next_token(bytes, &mut pos)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => {
            return Err(malformed(format!(
                "unsupported type tag {other:?}; channel count must be 1 or 3"
            )))
        }
    };
    let width: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| malformed("bad width"))?;
    let height: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| malformed("bad height"))?;
    let scale: f64 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| malformed("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed("scale must be finite and nonzero"));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing header terminator"));
    }
    Ok(Header {
        channels,
        width,
        height,
        little_endian: scale < 0.0,
        payload_offset: pos + 1,
    })
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmGrid> {
    let hdr = parse_header(bytes)?;
    let n = hdr.width * hdr.height * hdr.channels;
    let payload = &bytes[hdr.payload_offset..];
    if payload.len() < n * 4 {
        return Err(malformed(format!(
            "truncated payload: need {} bytes, have {}",
            n * 4,
            payload.len()
        )));
    }
    let read = |k: usize| -> f32 {
        let b: [u8; 4] = payload[k * 4..k * 4 + 4].try_into().unwrap();
        if hdr.little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let (w, h, c) = (hdr.width, hdr.height, hdr.channels);
    // file row r holds image row h-1-r
    let sample = |x: usize, y: usize, ch: usize| read(((h - 1 - y) * w + x) * c + ch);
    Ok(match c {
        1 => PfmGrid::Scalar(Grid::from_fn(w, h, |x, y| {
            let v = sample(x, y, 0);
            v.is_finite().then_some([v as f64])
        })),
        _ => PfmGrid::Vector(Grid::from_fn(w, h, |x, y| {
            let v = [sample(x, y, 0), sample(x, y, 1), sample(x, y, 2)];
            v.iter().all(|s| s.is_finite()).then(|| v.map(f64::from))
        })),
    })
}

fn encode<const C: usize>(grid: &Grid<C>) -> Vec<u8> {
    let (w, h) = (grid.width(), grid.height());
    let tag = if C == 1 { "Pf" } else { "PF" };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * C * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            match grid.get(x, y) {
                Some(v) => v
                    .iter()
                    .for_each(|&s| out.extend_from_slice(&(s as f32).to_le_bytes())),
                None => (0..C).for_each(|_| out.extend_from_slice(&f32::NAN.to_le_bytes())),
            }
        }
    }
    out
}

pub fn encode_pfm_scalar(grid: &ScalarGrid) -> Vec<u8> {
    encode(grid)
}

pub fn encode_pfm_vector(grid: &NormalGrid) -> Vec<u8> {
    encode(grid)
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<PfmGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn save_pfm_scalar(grid: &ScalarGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm_scalar(grid)).map_err(|e| Error::io(path, e))
}

pub fn save_pfm_vector(grid: &NormalGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm_vector(grid)).map_err(|e| Error::io(path, e))
}
