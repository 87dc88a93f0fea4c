//! Single-file checkpoints: magic, format version, JSON config, then every parameter tensor in
//! declared order as little-endian f32 with its name and length.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::Transformer;

pub const MAGIC: &[u8; 8] = b"TAPGRVCK";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &Transformer<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    let tensors = model.params.tensors(model.injection_layers());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, _, data) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads the header only.
pub fn read_version(bytes: &[u8]) -> Result<u32> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    r.u32()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Transformer<f32>> {
    let version = read_version(bytes)?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len() + 4,
    };
    let n = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let mut model = Transformer::<f32>::new(config)?;
    let injection = model.injection_layers().to_vec();
    let mut tensors = model.params.tensors_mut(&injection);
    if r.u32()? as usize != tensors.len() {
        return Err(Error::Checkpoint("tensor count does not match the config".into()));
    }
    for (name, _, data) in tensors.iter_mut() {
        let len = r.u32()? as usize;
        let got = r.take(len)?;
        let n_vals = data.len();
        if got != name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(got)
            )));
        }
        if r.u64()? as usize != n_vals {
            return Err(Error::Checkpoint(format!("tensor {name} has the wrong length")));
        }
        for (v, chunk) in data.iter_mut().zip(r.take(4 * n_vals)?.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    drop(tensors);
    Ok(model)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn save(model: &Transformer<f32>, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&to_bytes(model))?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Transformer<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
