//! Parameter checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "HNTC"
//! version      u32
//! config hash  u64
//! step         u64      optimizer steps taken
//! config len   u32, followed by that many bytes of UTF-8 JSON
//! tensor count u32
//! per tensor:  u16 name length, name bytes, u32 rows, u32 cols,
//!              rows*cols f32 values (row-major)
//! ```

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor2D;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HNTC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub step: u64,
    pub config_json: String,
    pub tensors: Vec<(String, Tensor2D<f32>)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(
                format!("byte {}", self.pos),
                format!("checkpoint truncated while reading {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore<f32>, config_hash: u64, config_json: String) -> Self {
        Self {
            config_hash,
            step: store.step_count(),
            config_json,
            tensors: store
                .ids()
                .map(|id| (store.name(id).to_string(), store.value(id).clone()))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let config_hash = r.u64("config hash")?;
        let step = r.u64("step")?;
        let n = r.u32("config length")? as usize;
        let config_json = String::from_utf8(r.take(n, "config")?.to_vec())
            .map_err(|e| Error::parse("config", e.to_string()))?;
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let n = r.u16("name length")? as usize;
            let name = String::from_utf8(r.take(n, "name")?.to_vec())
                .map_err(|e| Error::parse("tensor name", e.to_string()))?;
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|v| v.checked_mul(4))
                .ok_or_else(|| Error::parse(name.clone(), "tensor too large"))?;
            let bytes = r.take(len, "tensor data")?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor2D::from_vec(rows, cols, data)?));
        }
        if r.pos != buf.len() {
            return Err(Error::parse(format!("byte {}", r.pos), "trailing bytes after checkpoint"));
        }
        Ok(Self {
            config_hash,
            step,
            config_json,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Copies values into `store` by name; every store entry must be present
    /// with the same shape.
    pub fn apply_to(&self, store: &mut ParamStore<f32>) -> Result<()> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let (_, t) = self
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter `{name}`")))?;
            if t.shape() != store.value(id).shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?} in checkpoint, model expects {:?}",
                    t.shape(),
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = t.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config_hash: 0xdead_beef_0123_4567,
            step: 42,
            config_json: "{\"a\":1}".into(),
            tensors: vec![
                ("w".into(), Tensor2D::from_vec(2, 2, vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]).unwrap()),
                ("b".into(), Tensor2D::zeros(1, 3)),
            ],
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tensors[0].1.data()[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncations_error() {
        let bytes = sample().to_bytes();
        for n in 0..bytes.len() {
            assert!(Checkpoint::from_bytes(&bytes[..n]).is_err());
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::BadMagic { .. })));
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::UnsupportedVersion(9))));
    }
}
