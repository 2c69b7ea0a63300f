//! RBSN checkpoint codec.
//!
//! Layout, all integers little-endian: `b"RBSN"`, `u32` version (1), `u32`
//! layer count, then per layer `u32 rows`, `u32 cols`, `rows*cols` f32
//! weights (row-major) and `rows` f32 biases; finally a `u8` activation code.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{Activation, Layer, ModelWeights};

pub const MAGIC: &[u8; 4] = b"RBSN";
pub const VERSION: u32 = 1;

pub fn encode(weights: &ModelWeights<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * (weights.num_params() + 2 * weights.num_layers()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(weights.num_layers() as u32).to_le_bytes());
    for layer in weights.layers() {
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.push(weights.activation().code());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn fail(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            message,
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.fail(format!(
                "truncated checkpoint: need {n} bytes for {what}, {} left",
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.saturating_mul(4), what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

/// `path` is only used to label errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<ModelWeights<f32>> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(4, "magic")?.to_vec();
    if magic != MAGIC {
        r.pos = 0;
        return Err(r.fail(format!("bad magic: expected \"RBSN\", found {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos = 4;
        return Err(r.fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let num_layers = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(num_layers.min(1024));
    for l in 0..num_layers {
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let weight = r.f32s(rows * cols, &format!("layer {l} weights"))?;
        let bias = r.f32s(rows, &format!("layer {l} bias"))?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((rows, cols), weight).expect("length matches"),
            bias: Array1::from(bias),
        });
    }
    let code = r.take(1, "activation code")?[0];
    let activation = Activation::from_code(code)
        .ok_or_else(|| r.fail(format!("unknown activation code {code}")))?;
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    ModelWeights::new(layers, activation).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: bytes.len() as u64,
        message: e.to_string(),
    })
}

pub fn write_checkpoint(path: &Path, weights: &ModelWeights<f32>) -> Result<()> {
    fs::write(path, encode(weights)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelWeights<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
