//! 16-bit PNG codecs for normal maps (RGB) and soft masks (grayscale).
//!
//! Normals encode each component as `round((n + 1) / 2 * 65535)`. Decoded
//! vectors are renormalized; a decoded magnitude under `1e-3` marks the pixel
//! invalid, which is how invalid pixels are written (all channels at mid-gray).

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::grid::{normalize3, NormalGrid, ScalarGrid};
use crate::error::{Error, Result};

pub const MIN_DECODED_NORM: f64 = 1e-3;
const MID: u16 = 32768;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::format("png16", e.to_string())
}

pub fn encode_normal_channel(n: f64) -> u16 {
    ((n.clamp(-1.0, 1.0) + 1.0) * 0.5 * 65535.0).round() as u16
}

pub fn decode_normal_channel(c: u16) -> f64 {
    c as f64 / 65535.0 * 2.0 - 1.0
}

fn encode_png(width: usize, height: usize, color: ColorType, samples: &[u16]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(png_err)?;
        let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
        writer.write_image_data(&bytes).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// Decodes a 16-bit PNG, returning `(width, height, samples)` after checking the layout.
fn decode_png(bytes: &[u8], want: ColorType, channels: usize) -> Result<(usize, usize, Vec<u16>)> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.bit_depth != BitDepth::Sixteen {
        return Err(png_err(format!(
            "bit depth must be 16, found {:?}",
            info.bit_depth
        )));
    }
    if info.color_type != want {
        return Err(png_err(format!(
            "expected {channels} channel(s) ({want:?}), found {:?}",
            info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let line = frame.line_size;
    let mut samples = Vec::with_capacity(w * h * channels);
    for y in 0..h {
        let row = &buf[y * line..y * line + w * channels * 2];
        samples.extend(
            row.chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]])),
        );
    }
    Ok((w, h, samples))
}

pub fn encode_normal_png16(normals: &NormalGrid) -> Result<Vec<u8>> {
    let samples: Vec<u16> = (0..normals.len())
        .flat_map(|i| match normals.get_index(i) {
            Some(n) => n.map(encode_normal_channel),
            None => [MID; 3],
        })
        .collect();
    encode_png(normals.width(), normals.height(), ColorType::Rgb, &samples)
}

pub fn decode_normal_png16(bytes: &[u8]) -> Result<NormalGrid> {
    let (w, h, s) = decode_png(bytes, ColorType::Rgb, 3)?;
    Ok(NormalGrid::from_fn(w, h, |x, y| {
        let k = (y * w + x) * 3;
        let v = [s[k], s[k + 1], s[k + 2]].map(decode_normal_channel);
        normalize3(v, MIN_DECODED_NORM)
    }))
}

/// Soft mask in `[0, 1]` stored as `round(m * 65535)`; every pixel decodes as valid.
pub fn encode_mask_png16(mask: &ScalarGrid) -> Result<Vec<u8>> {
    let samples: Vec<u16> = (0..mask.len())
        .map(|i| {
            let m = mask.scalar_at(i).unwrap_or(0.0);
            (m.clamp(0.0, 1.0) * 65535.0).round() as u16
        })
        .collect();
    encode_png(mask.width(), mask.height(), ColorType::Grayscale, &samples)
}

pub fn decode_mask_png16(bytes: &[u8]) -> Result<ScalarGrid> {
    let (w, h, s) = decode_png(bytes, ColorType::Grayscale, 1)?;
    Ok(ScalarGrid::from_fn(w, h, |x, y| {
        Some([s[y * w + x] as f64 / 65535.0])
    }))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_normal_png16(path: impl AsRef<Path>) -> Result<NormalGrid> {
    decode_normal_png16(&read(path.as_ref())?)
}

pub fn save_normal_png16(normals: &NormalGrid, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), encode_normal_png16(normals)?)
}

pub fn load_mask_png16(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    decode_mask_png16(&read(path.as_ref())?)
}

pub fn save_mask_png16(mask: &ScalarGrid, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), encode_mask_png16(mask)?)
}
