//! Binary checkpoint: `FCNLS1`, a little-endian `u64` header length, a JSON
//! header, then parameters, `E[g²]` and `E[Δx²]` as little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FcnModel, LayerSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"FCNLS1";

#[derive(Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerSpec>,
    seed: u64,
    param_count: usize,
}

pub fn write_checkpoint<W: Write>(model: &FcnModel, mut out: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&Header {
        layers: model.layers.clone(),
        seed: model.seed,
        param_count: model.params.len(),
    })
    .expect("header serializes");
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for v in model.params.iter().chain(&model.sq_grad).chain(&model.sq_step) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Checkpoint {
            offset: self.offset,
            message: format!("file ends inside {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            self.take(&mut b, what)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<FcnModel> {
    let mut c = Cursor { inner: input, offset: 0 };
    let mut magic = [0u8; 6];
    c.take(&mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let mut len = [0u8; 8];
    c.take(&mut len, "header length")?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(Error::Checkpoint {
            offset: 6,
            message: format!("implausible header length {len}"),
        });
    }
    let header_at = c.offset;
    let mut raw = vec![0u8; len as usize];
    c.take(&mut raw, "header")?;
    let header: Header = serde_json::from_slice(&raw).map_err(|e| Error::Checkpoint {
        offset: header_at + e.column() as u64,
        message: format!("bad header: {e}"),
    })?;
    let declared: usize = header.layers.iter().map(LayerSpec::param_count).sum();
    if declared != header.param_count {
        return Err(Error::Checkpoint {
            offset: header_at,
            message: format!("layer list needs {declared} parameters, header declares {}", header.param_count),
        });
    }
    let n = header.param_count;
    let params = c.floats(n, "parameters")?;
    let sq_grad = c.floats(n, "gradient accumulators")?;
    let sq_step = c.floats(n, "step accumulators")?;
    let end = c.offset;
    if c.inner.read(&mut [0u8; 1]).unwrap_or(0) != 0 {
        return Err(Error::Checkpoint {
            offset: end,
            message: "trailing bytes after the declared parameters".into(),
        });
    }
    FcnModel::from_parts(header.layers, params, sq_grad, sq_step, header.seed).map_err(|e| Error::Checkpoint {
        offset: header_at,
        message: e.to_string(),
    })
}

pub fn save_checkpoint(model: &FcnModel, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FcnModel> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
