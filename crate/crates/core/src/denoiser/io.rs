//! Model weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      4 bytes  "TSDN"
//! version    u32      1
//! layers     u32      L
//! sigma      f64      training noise level
//! seed       u64      training seed
//! residual   u8       0 or 1
//! dims       L × (u32 in, u32 out, u32 kernel = 3)
//! params     for each layer: in·out·9 f64 weights [out][in][ky][kx], then out f64 biases
//! ```

use super::{ConvLayer, Denoiser};
use crate::error::{Error, Result};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"TSDN";
pub const FORMAT_VERSION: u32 = 1;
const MAX_CHANNELS: u32 = 4096;

pub fn to_bytes(model: &Denoiser) -> Vec<u8> {
    let mut out = Vec::with_capacity(29 + 12 * model.layers().len() + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    out.extend_from_slice(&model.sigma_trained().to_le_bytes());
    out.extend_from_slice(&model.seed().to_le_bytes());
    out.push(model.residual() as u8);
    for l in model.layers() {
        for d in [l.in_channels as u32, l.out_channels as u32, 3] {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    for l in model.layers() {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Denoiser> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic (expected \"TSDN\")"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let at = r.pos as u64;
    let n_layers = r.u32("layer count")?;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::format(at, format!("implausible layer count {n_layers}")));
    }
    let sigma = r.f64("sigma")?;
    let seed = r.u64("seed")?;
    let at = r.pos as u64;
    let residual = match r.take(1, "residual flag")?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::format(at, format!("residual flag must be 0 or 1, got {b}"))),
    };
    let mut layers = Vec::with_capacity(n_layers as usize);
    for i in 0..n_layers {
        let at = r.pos as u64;
        let cin = r.u32("layer dims")?;
        let cout = r.u32("layer dims")?;
        let k = r.u32("layer dims")?;
        if k != 3 || cin == 0 || cout == 0 || cin > MAX_CHANNELS || cout > MAX_CHANNELS {
            return Err(Error::format(at, format!("layer {i}: unsupported dims in={cin} out={cout} kernel={k}")));
        }
        layers.push(ConvLayer::zeros(cin as usize, cout as usize));
    }
    for l in &mut layers {
        for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *v = r.f64("parameters")?;
        }
    }
    if r.pos != buf.len() {
        return Err(Error::format(r.pos as u64, format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Denoiser::from_layers(layers, residual, sigma, seed).map_err(|e| Error::format(r.pos as u64, e.to_string()))
}

pub fn save_model(model: &Denoiser, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Denoiser> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
