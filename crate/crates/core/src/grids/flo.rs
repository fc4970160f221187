//! Middlebury `.flo` optical flow container.

use std::path::Path;

use super::grid::FlowGrid;
use crate::error::{Error, Result};

pub const FLO_MAGIC: f32 = 202021.25;
/// Components above this magnitude mean "unknown flow".
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;
const UNKNOWN_FLOW: f32 = 1e10;

pub fn decode_flo(bytes: &[u8]) -> Result<FlowGrid> {
    if bytes.len() < 12 {
        return Err(Error::format(
            "flo",
            format!("header needs 12 bytes, have {}", bytes.len()),
        ));
    }
    let word = |k: usize| -> [u8; 4] { bytes[k * 4..k * 4 + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::format("flo", format!("bad magic tag {magic}")));
    }
    let w = i32::from_le_bytes(word(1));
    let h = i32::from_le_bytes(word(2));
    if w < 0 || h < 0 {
        return Err(Error::format("flo", format!("negative dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + w * h * 8;
    if bytes.len() != need {
        return Err(Error::format(
            "flo",
            format!("{w}x{h} flow needs {need} bytes, file has {}", bytes.len()),
        ));
    }
    Ok(FlowGrid::from_fn(w, h, |x, y| {
        let k = 3 + (y * w + x) * 2;
        let u = f32::from_le_bytes(word(k));
        let v = f32::from_le_bytes(word(k + 1));
        let known = u.is_finite()
            && v.is_finite()
            && u.abs() <= UNKNOWN_FLOW_THRESHOLD
            && v.abs() <= UNKNOWN_FLOW_THRESHOLD;
        known.then_some([u as f64, v as f64])
    }))
}

pub fn encode_flo(flow: &FlowGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.len() * 8);
    out.extend(FLO_MAGIC.to_le_bytes());
    out.extend((flow.width() as i32).to_le_bytes());
    out.extend((flow.height() as i32).to_le_bytes());
    for i in 0..flow.len() {
        let [u, v] = flow
            .get_index(i)
            .map(|[u, v]| [u as f32, v as f32])
            .unwrap_or([UNKNOWN_FLOW, UNKNOWN_FLOW]);
        out.extend(u.to_le_bytes());
        out.extend(v.to_le_bytes());
    }
    out
}

pub fn load_flo(path: impl AsRef<Path>) -> Result<FlowGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub fn save_flo(flow: &FlowGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

/// Reads only the dimensions from a `.flo` header.
pub fn flo_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    use std::io::Read;
    let path = path.as_ref();
    let mut head = [0u8; 12];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map_err(|e| Error::io(path, e))?;
    if f32::from_le_bytes(head[..4].try_into().unwrap()) != FLO_MAGIC {
        return Err(Error::format("flo", "bad magic tag"));
    }
    let w = i32::from_le_bytes(head[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(head[8..12].try_into().unwrap());
    if w < 0 || h < 0 {
        return Err(Error::format("flo", format!("negative dimensions {w}x{h}")));
    }
    Ok((w as usize, h as usize))
}
