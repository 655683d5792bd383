//! Binary model checkpoints with a JSON metadata sidecar.
//!
//! Layout, all little-endian: magic `LELPMLP\0`, `u32` format version,
//! `u32` number of layer dims, one `u64` per dim, then for each layer its
//! `fan_in × fan_out` weights (row-major) followed by its biases, as `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Dense, HeadSplit, Mlp};

const MLP_MAGIC: &[u8; 8] = b"LELPMLP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub head_split: HeadSplit,
    pub activation: Activation,
    pub seed: u64,
}

/// `model.bin` → `model.bin.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_mlp(model: &Mlp, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims = model.layer_dims();
    let mut buf = Vec::with_capacity(16 + 8 * (dims.len() + model.num_params()));
    buf.extend_from_slice(MLP_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in &dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for block in model.param_slices() {
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;

    let meta = CheckpointMetadata {
        format_version: CHECKPOINT_VERSION,
        layer_dims: dims,
        head_split: model.head_split(),
        activation: model.activation(),
        seed,
    };
    let meta_path = sidecar_path(path);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))
}

/// Loads a checkpoint and its sidecar; the two must agree on layer dims.
pub fn load_mlp(path: impl AsRef<Path>) -> Result<(Mlp, CheckpointMetadata)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    let meta: CheckpointMetadata =
        serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;

    let mut r = ByteReader::new(&bytes);
    if r.take(8)? != MLP_MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let n_dims = r.u32()? as usize;
    if n_dims < 2 {
        return Err(Error::Checkpoint("fewer than two layer dims".into()));
    }
    let dims = (0..n_dims)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims != meta.layer_dims {
        return Err(Error::Checkpoint(format!(
            "layer dims {dims:?} disagree with sidecar {:?}",
            meta.layer_dims
        )));
    }
    let mut layers = Vec::with_capacity(n_dims - 1);
    for w in dims.windows(2) {
        let weights = Matrix::from_vec(w[0], w[1], r.f64s(w[0] * w[1])?)?;
        let bias = r.f64s(w[1])?;
        layers.push(Dense { weights, bias });
    }
    r.finish()?;
    let model = Mlp::from_layers(layers, meta.head_split)?;
    Ok((model, meta))
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
