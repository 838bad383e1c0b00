//! Dataset cache container (version 1) and JSON manifest.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        8 bytes   "BISEDSET"
//! version      u32       1
//! info_len     u32       then info_len bytes of JSON generation info
//! n            u64
//! classes      u32
//! bias_classes u32
//! axes         u8        1 or 2
//! labels       n × u32
//! bias         axes × n × u32
//! kind         u8        0 dense, 1 colorized
//!   dense:     dim u32, n × dim × f64 (row-major)
//!   colorized: rows u32, cols u32, palette_len u32, palette_len × 3 × f64,
//!              n × rows × cols gray bytes, n left color bytes, n right color bytes
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BiasLabels, BiasedDataset, DatasetInfo, Features};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BISEDSET";
const VERSION: u32 = 1;

fn write_ds<W: Write>(w: &mut W, ds: &BiasedDataset) -> std::io::Result<()> {
    let info = serde_json::to_vec(&ds.info).expect("info serializes");
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(info.len() as u32).to_le_bytes())?;
    w.write_all(&info)?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&(ds.num_classes() as u32).to_le_bytes())?;
    w.write_all(&(ds.num_bias() as u32).to_le_bytes())?;
    w.write_all(&[ds.bias_axes() as u8])?;
    let u32s = |w: &mut W, v: &[usize]| -> std::io::Result<()> {
        for &x in v {
            w.write_all(&(x as u32).to_le_bytes())?;
        }
        Ok(())
    };
    u32s(w, ds.labels())?;
    for a in 0..ds.bias_axes() {
        u32s(w, ds.bias(a))?;
    }
    match ds.features() {
        Features::Dense(x) => {
            w.write_all(&[0])?;
            w.write_all(&(x.ncols() as u32).to_le_bytes())?;
            for v in x.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Features::Colorized {
            rows,
            cols,
            gray,
            left,
            right,
            palette,
        } => {
            w.write_all(&[1])?;
            w.write_all(&(*rows as u32).to_le_bytes())?;
            w.write_all(&(*cols as u32).to_le_bytes())?;
            w.write_all(&(palette.len() as u32).to_le_bytes())?;
            for v in palette.iter().flatten() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(gray)?;
            w.write_all(left)?;
            w.write_all(right)?;
        }
    }
    w.flush()
}

pub fn save_dataset(path: &Path, ds: &BiasedDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ds(&mut BufWriter::new(file), ds).map_err(|e| Error::io(path, e))
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Format {
            offset: self.offset,
            message: "truncated dataset cache".into(),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<usize>> {
        Ok(self
            .bytes(4 * n)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .bytes(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn fail(&self, message: &str) -> Error {
        Error::Format {
            offset: self.offset,
            message: message.into(),
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<BiasedDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
        offset: 0,
    };
    if r.bytes(8)? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a dataset cache".into(),
        });
    }
    if r.u32()? != VERSION {
        return Err(r.fail("unsupported dataset cache version"));
    }
    let info_len = r.u32()? as usize;
    let info: DatasetInfo =
        serde_json::from_slice(&r.bytes(info_len)?).map_err(|e| r.fail(&format!("bad info: {e}")))?;
    let n = u64::from_le_bytes(r.bytes(8)?.try_into().unwrap()) as usize;
    let classes = r.u32()? as usize;
    let bias_classes = r.u32()? as usize;
    let axes = r.bytes(1)?[0];
    let labels = r.u32s(n)?;
    let bias = match axes {
        1 => BiasLabels::Single(r.u32s(n)?),
        2 => {
            let l = r.u32s(n)?;
            BiasLabels::Pair(l, r.u32s(n)?)
        }
        _ => return Err(r.fail("bias axis count must be 1 or 2")),
    };
    let features = match r.bytes(1)?[0] {
        0 => {
            let dim = r.u32()? as usize;
            Features::Dense(Array2::from_shape_vec((n, dim), r.f64s(n * dim)?).expect("sized"))
        }
        1 => {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let plen = r.u32()? as usize;
            let flat = r.f64s(3 * plen)?;
            let palette = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            Features::Colorized {
                rows,
                cols,
                gray: r.bytes(n * rows * cols)?,
                left: r.bytes(n)?,
                right: r.bytes(n)?,
                palette,
            }
        }
        _ => return Err(r.fail("unknown feature kind")),
    };
    BiasedDataset::new(features, labels, bias, classes, bias_classes, info)
}

/// Human-readable summary written next to a cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub info: DatasetInfo,
    pub samples: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_bias: usize,
    pub aligned_fraction: Vec<f64>,
    pub group_counts: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn of(ds: &BiasedDataset) -> Self {
        Self {
            info: ds.info.clone(),
            samples: ds.len(),
            input_dim: ds.input_dim(),
            num_classes: ds.num_classes(),
            num_bias: ds.num_bias(),
            aligned_fraction: ds.aligned_fraction(),
            group_counts: ds.group_names().into_iter().zip(ds.group_sizes()).collect(),
        }
    }
}
