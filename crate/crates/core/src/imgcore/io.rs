//! Binary PPM (P6, 8-bit) for display output and PFM (32-bit float) for
//! lossless intermediate buffers.
//!
//! PFM rows are stored bottom-up. Writers always emit little-endian data with
//! scale `-1.0`; readers accept either byte order. Values round-trip through
//! PFM bit-exactly when they are representable as `f32`.

use std::fs;
use std::path::Path;

use super::buffers::{ImageRgb, ScalarMap};
use crate::error::{Error, Result};

/// Byte value a channel value maps to in 8-bit output.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub fn encode_ppm(img: &ImageRgb) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn encode_pfm(img: &ImageRgb) -> Vec<u8> {
    encode_pfm_planes(img.width(), img.height(), 3, img.data())
}

/// Single-channel (`Pf`) PFM.
pub fn encode_pfm_gray(map: &ScalarMap) -> Vec<u8> {
    encode_pfm_planes(map.width(), map.height(), 1, map.data())
}

fn encode_pfm_planes(w: usize, h: usize, channels: usize, data: &[f64]) -> Vec<u8> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * channels * 4);
    for y in (0..h).rev() {
        for v in &data[y * w * channels..(y + 1) * w * channels] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Cursor over a netpbm-style header: whitespace separated tokens with `#`
/// comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::MalformedHeader(format!("non-ascii {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let t = self.token(what)?;
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::MalformedHeader(format!("bad {what}: {t:?}")))
    }

    /// Consumes the single whitespace byte that separates header and payload.
    fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::MalformedHeader("header not terminated by whitespace".into())),
        }
    }
}

fn magic(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader("file shorter than magic number".into()));
    }
    Ok(&bytes[..2])
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageRgb> {
    let m = magic(bytes)?;
    if m != b"P6" {
        return Err(Error::UnsupportedMagic(String::from_utf8_lossy(m).into_owned()));
    }
    let mut hdr = Header::new(bytes, 2);
    let w = hdr.usize("width")?;
    let h = hdr.usize("height")?;
    let maxval = hdr.usize("maxval")?;
    if maxval != 255 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} unsupported, expected 255")));
    }
    let start = hdr.end()?;
    let expected = w * h * 3;
    let payload = &bytes[start..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    ImageRgb::from_vec(w, h, data)
}

struct PfmPayload {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

fn decode_pfm_any(bytes: &[u8]) -> Result<PfmPayload> {
    let m = magic(bytes)?;
    let channels = match m {
        b"PF" => 3,
        b"Pf" => 1,
        _ => return Err(Error::UnsupportedMagic(String::from_utf8_lossy(m).into_owned())),
    };
    let mut hdr = Header::new(bytes, 2);
    let w = hdr.usize("width")?;
    let h = hdr.usize("height")?;
    let scale_tok = hdr.token("scale")?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad scale: {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("bad scale: {scale_tok:?}")));
    }
    let little = scale < 0.0;
    let start = hdr.end()?;
    let expected = w * h * channels * 4;
    let payload = &bytes[start..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let mut data = vec![0.0; w * h * channels];
    let row_len = w * channels;
    for (file_row, chunk) in payload[..expected].chunks_exact(row_len * 4).enumerate() {
        let y = h - 1 - file_row;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[y * row_len + x] = v as f64;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PFM payload".into()));
    }
    Ok(PfmPayload {
        width: w,
        height: h,
        channels,
        data,
    })
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageRgb> {
    let p = decode_pfm_any(bytes)?;
    if p.channels != 3 {
        return Err(Error::UnsupportedMagic("Pf (expected colour PF)".into()));
    }
    ImageRgb::from_vec(p.width, p.height, p.data)
}

pub fn decode_pfm_gray(bytes: &[u8]) -> Result<ScalarMap> {
    let p = decode_pfm_any(bytes)?;
    if p.channels != 1 {
        return Err(Error::UnsupportedMagic("PF (expected grayscale Pf)".into()));
    }
    ScalarMap::from_vec(p.width, p.height, p.data)
}

/// Reads a P6 PPM or colour PFM, chosen by the magic number.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let bytes = fs::read(path)?;
    match magic(&bytes)? {
        b"P6" => decode_ppm(&bytes),
        b"PF" => decode_pfm(&bytes),
        other => Err(Error::UnsupportedMagic(String::from_utf8_lossy(other).into_owned())),
    }
}

/// Writes PPM or PFM according to the file extension.
pub fn write_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => encode_ppm(img),
        Some("pfm") => encode_pfm(img),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unsupported image extension {other:?} for {}",
                path.display()
            )))
        }
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_scalar_pfm(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pfm_gray(map))?;
    Ok(())
}

pub fn read_scalar_pfm(path: impl AsRef<Path>) -> Result<ScalarMap> {
    decode_pfm_gray(&fs::read(path)?)
}
