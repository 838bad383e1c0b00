//! Model checkpoint container (version 1).
//!
//! All integers and floats are little-endian.
//!
//! | field       | type                | notes                                   |
//! |-------------|---------------------|-----------------------------------------|
//! | magic       | 8 bytes             | `BISEMLP\0`                             |
//! | version     | u32                 | `1`                                     |
//! | meta_len    | u32                 | byte length of the JSON metadata        |
//! | meta        | meta_len bytes      | UTF-8 JSON [`CheckpointMeta`]           |
//! | n_layers    | u32                 |                                         |
//! | per layer:  |                     |                                         |
//! | in, out     | u32, u32            |                                         |
//! | activation  | u8                  | 0 none, 1 relu, 2 sigmoid               |
//! | weight      | in·out × f64        | row-major `[in × out]`                  |
//! | bias        | out × f64           |                                         |
//!
//! The encoding is canonical, so byte equality of two checkpoints is
//! parameter-for-parameter bitwise equality of the models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BISEMLP\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Mlp, meta: &CheckpointMeta) -> std::io::Result<()> {
    let meta = serde_json::to_vec(meta).expect("metadata serializes");
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    for layer in model.layers() {
        w.write_all(&(layer.input_dim() as u32).to_le_bytes())?;
        w.write_all(&(layer.output_dim() as u32).to_le_bytes())?;
        w.write_all(&[layer.activation.code()])?;
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Format {
            offset: self.offset,
            message: format!("truncated while reading {what}"),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(Mlp, CheckpointMeta)> {
    let mut c = Cursor { inner: r, offset: 0 };
    if c.bytes(8, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a model checkpoint".into(),
        });
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 8,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let meta_len = c.u32("metadata length")? as usize;
    let meta_offset = c.offset;
    let meta: CheckpointMeta =
        serde_json::from_slice(&c.bytes(meta_len, "metadata")?).map_err(|e| Error::Format {
            offset: meta_offset,
            message: format!("bad metadata: {e}"),
        })?;
    let n_layers = c.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let input = c.u32("layer input dim")? as usize;
        let output = c.u32("layer output dim")? as usize;
        let act_offset = c.offset;
        let code = c.bytes(1, "activation")?[0];
        let activation = Activation::from_code(code).ok_or_else(|| Error::Format {
            offset: act_offset,
            message: format!("unknown activation code {code}"),
        })?;
        let weight = Array2::from_shape_vec((input, output), c.f64s(input * output, "weights")?)
            .expect("length matches shape");
        let bias = Array1::from(c.f64s(output, "bias")?);
        layers.push(Dense::new(weight, bias, activation)?);
    }
    Ok((Mlp::from_layers(layers)?, meta))
}

pub fn save_checkpoint(path: &Path, model: &Mlp, meta: &CheckpointMeta) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), model, meta).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Mlp, CheckpointMeta)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

impl Mlp {
    /// Canonical checkpoint bytes with empty metadata.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, self, &CheckpointMeta::default()).expect("writing to memory");
        out
    }
}
