//! Binary checkpoint format: the magic `MWG1`, then for each tensor its name
//! length (u64), UTF-8 name, rank (u64), dims (u64 each) and data (f64 each).
//! All integers and floats are little-endian. The file ends after the last tensor.

use std::fs;
use std::path::Path;

use super::{Layer, MlpParams, Role};
use crate::autodiff::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MWG1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn push_net(&mut self, prefix: &str, net: &MlpParams) {
        for (i, l) in net.layers.iter().enumerate() {
            self.tensors.push((format!("{prefix}.{i}.weight"), l.weight.clone()));
            self.tensors.push((format!("{prefix}.{i}.bias"), l.bias.clone()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Rebuilds the network stored under `prefix`.
    pub fn net(&self, prefix: &str, role: Role) -> Result<MlpParams> {
        let mut layers = Vec::new();
        while let Some(weight) = self.get(&format!("{prefix}.{}.weight", layers.len())) {
            let name = format!("{prefix}.{}.bias", layers.len());
            let bias = self
                .get(&name)
                .ok_or_else(|| Error::Contract(format!("checkpoint is missing `{name}`")))?;
            layers.push(Layer {
                weight: weight.clone(),
                bias: bias.clone(),
            });
        }
        if layers.is_empty() {
            return Err(Error::Contract(format!("checkpoint has no network `{prefix}`")));
        }
        MlpParams::from_layers(role, layers)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        for (name, t) in &self.tensors {
            out.extend((name.len() as u64).to_le_bytes());
            out.extend(name.as_bytes());
            out.extend((t.shape().len() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend((d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected MWG1".into(),
            });
        }
        let mut tensors = Vec::new();
        while r.pos < bytes.len() {
            let start = r.pos;
            let len = r.u64("name length")?;
            let name = std::str::from_utf8(r.take_len(len, "name")?)
                .map_err(|_| r.error(start + 8, "tensor name is not UTF-8"))?
                .to_string();
            let rank_at = r.pos;
            let rank = r.u64("rank")?;
            if rank > 2 {
                return Err(r.error(rank_at, &format!("rank {rank} exceeds 2")));
            }
            let dims = (0..rank)
                .map(|_| r.u64("dim").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.error(rank_at, "tensor size overflows"))?;
            let raw = r.take_len(count as u64 * 8, "tensor data")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((name, Tensor::new(dims, data)?));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, message: &str) -> Error {
        Error::Format {
            offset: offset as u64,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(self.error(
                self.pos,
                &format!("truncated {what}: need {n} bytes, {remaining} left"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_len(&mut self, n: u64, what: &str) -> Result<&'a [u8]> {
        let n = usize::try_from(n).map_err(|_| self.error(self.pos, &format!("{what} too large")))?;
        self.take(n, what)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}
