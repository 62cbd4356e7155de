//! Binary PGM (P5) reading and writing, 8- or 16-bit.

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use std::path::Path;

/// Sample depth used when writing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Eight,
    Sixteen,
}

impl Depth {
    fn maxval(self) -> u32 {
        match self {
            Depth::Eight => 255,
            Depth::Sixteen => 65535,
        }
    }
}

pub fn encode(img: &PixelGrid, depth: Depth) -> Vec<u8> {
    let max = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), max).into_bytes();
    for &v in img.values() {
        let q = (v * max as f64).round() as u32;
        match depth {
            Depth::Eight => out.push(q as u8),
            Depth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(start as u64, format!("{what} out of range")))
    }
}

pub fn decode(buf: &[u8]) -> Result<PixelGrid> {
    match buf.get(..2) {
        Some(b"P5") => {}
        Some([b'P', b'1'..=b'6']) => {
            return Err(Error::Unsupported(format!(
                "PNM type {} (only binary P5 grayscale is supported)",
                buf[1] as char
            )))
        }
        _ => return Err(Error::format(0, "missing P5 magic")),
    }
    let mut h = Header { buf, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let at = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(at as u64, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(at as u64, format!("maxval {maxval} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match buf.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(Error::format(h.pos as u64, "expected whitespace after maxval")),
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bytes_per;
    let raster = &buf[h.pos..];
    if raster.len() < need {
        return Err(Error::format(
            buf.len() as u64,
            format!("truncated raster: {} of {need} bytes", raster.len()),
        ));
    }
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(width * height);
    for i in 0..width * height {
        let q = if bytes_per == 1 {
            raster[i] as u32
        } else {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
        };
        if q > maxval {
            return Err(Error::format(
                (h.pos + i * bytes_per) as u64,
                format!("sample {q} exceeds maxval {maxval}"),
            ));
        }
        values.push(q as f64 / scale);
    }
    PixelGrid::new(height, width, values)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PixelGrid> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

pub fn write_pgm(img: &PixelGrid, path: impl AsRef<Path>, depth: Depth) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(img, depth)).map_err(|e| Error::io(path, e))
}
