//! Model container: a text header with the spec (TOML) and its SHA-256, the
//! parameter layout, then the values as raw little-endian `f64`.
//!
//! ```text
//! transduce-model 1
//! spec-sha256 <hex>
//! spec <byte length>
//! <toml>
//! layout <entries>
//! <name> <offset> <rows> <cols>
//! values <count>
//! <8 * count bytes>
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::Model;
use super::params::{Parameters, TensorInfo};
use super::spec::ModelSpec;
use crate::error::{Error, Result};

pub const MODEL_TAG: &str = "transduce-model";
pub const MODEL_VERSION: u32 = 1;

pub fn spec_hash(spec_text: &str) -> String {
    hex::encode(Sha256::digest(spec_text.as_bytes()))
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.spec().to_toml();
        let mut out = format!(
            "{MODEL_TAG} {MODEL_VERSION}\nspec-sha256 {}\nspec {}\n{spec}",
            spec_hash(&spec),
            spec.len()
        );
        let layout = self.params().layout();
        out.push_str(&format!("layout {}\n", layout.entries().len()));
        for e in layout.entries() {
            out.push_str(&format!("{} {} {} {}\n", e.name, e.offset, e.rows, e.cols));
        }
        out.push_str(&format!("values {}\n", self.params().len()));
        let mut bytes = out.into_bytes();
        for v in self.params().values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = r.line()?;
        let version = header
            .strip_prefix(MODEL_TAG)
            .map(str::trim)
            .ok_or_else(|| Error::Format("not a model file".into()))?;
        if version != MODEL_VERSION.to_string() {
            return Err(Error::Version(format!("model format {version}")));
        }
        let hash = r.field("spec-sha256")?.to_string();
        let spec_len: usize = r.number("spec")?;
        let spec_text = std::str::from_utf8(r.take(spec_len)?)
            .map_err(|_| Error::Format("spec is not utf-8".into()))?
            .to_string();
        if spec_hash(&spec_text) != hash {
            return Err(Error::Format("spec hash mismatch".into()));
        }
        let spec = ModelSpec::from_toml(&spec_text)?;

        let entries: usize = r.number("layout")?;
        let mut layout = Vec::with_capacity(entries);
        for _ in 0..entries {
            let line = r.line()?;
            let f: Vec<&str> = line.split(' ').collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad layout line {line:?}")));
            if f.len() != 4 {
                return Err(Error::Format(format!("bad layout line {line:?}")));
            }
            layout.push(TensorInfo { name: f[0].to_string(), offset: num(f[1])?, rows: num(f[2])?, cols: num(f[3])? });
        }
        let expected = Model::layout_for(&spec)?;
        if !expected.same_tensors(&layout) {
            return Err(Error::Format("stored layout does not match the spec".into()));
        }
        let count: usize = r.number("values")?;
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("value count overflows".into()))?)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after values".into()));
        }
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Model::from_parameters(spec, Parameters::from_values(expected, values)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let n = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated model file".into()))?;
        let line = std::str::from_utf8(&rest[..n]).map_err(|_| Error::Format("header is not utf-8".into()))?;
        self.pos += n + 1;
        Ok(line)
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| Error::Format(format!("expected {key:?}, got {line:?}")))
    }

    fn number(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse().map_err(|_| Error::Format(format!("bad {key} count {v:?}")))
    }
}
