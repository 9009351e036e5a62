//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(buf: &[u8], path: &Path) -> Result<Header> {
    let bad = |m: &str| Error::data(path, m.to_owned());
    let channels = match buf.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(bad("not a binary PGM/PPM file (expected P5 or P6 magic)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        loop {
            match buf.get(pos) {
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("header ends early")),
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][i];
        *field = std::str::from_utf8(&buf[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(&format!("malformed {name} in header")))?;
    }
    if !buf.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad(&format!("unsupported maxval {maxval}; only 8-bit (255) files are supported")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    Ok(Header { channels, width, height, payload_start: pos + 1 })
}

/// Decodes P5/P6 bytes into a `1×C×H×W` tensor scaled to `[0, 1]`.
pub fn decode(buf: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let h = parse_header(buf, path)?;
    let plane = h.width * h.height;
    let need = plane * h.channels;
    let payload = &buf[h.payload_start.min(buf.len())..];
    if payload.len() < need {
        return Err(Error::data(
            path,
            format!("truncated payload: expected {need} bytes, found {}", payload.len()),
        ));
    }
    let mut data = vec![0f32; need];
    for (i, &b) in payload[..need].iter().enumerate() {
        let (pixel, c) = (i / h.channels, i % h.channels);
        data[c * plane + pixel] = b as f32 / 255.0;
    }
    Tensor::new([1, h.channels, h.height, h.width], data)
}

/// Encodes the first sample of a 1- or 3-channel tensor, quantising each
/// value by `round(v·255)` after clamping to `[0, 1]`.
pub fn encode(t: &Tensor<f32>) -> Result<Vec<u8>> {
    let [_, c, h, w] = t.shape();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::shape("encode", format!("need 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let data = &t.data()[..c * plane];
    for pixel in 0..plane {
        for ch in 0..c {
            out.push(quantize(data[ch * plane + pixel]));
        }
    }
    Ok(out)
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf, path)
}

pub fn save_map(map: &Tensor<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(map)?).map_err(|e| Error::io(path, e))
}
