//! Versioned binary container for model parameters.
//!
//! Layout: 8-byte magic `XMCACKPT`, `u32` format version, `u64` header
//! length, a UTF-8 JSON header, then every tensor as little-endian `f64`
//! values in header order. All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;

pub const MAGIC: &[u8; 8] = b"XMCACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub spec: TensorSpec,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_parameters<P: Parameters>(kind: &str, meta: serde_json::Value, params: &P) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|t| Tensor {
                spec: TensorSpec {
                    name: t.name,
                    shape: t.shape,
                },
                data: t.data.to_vec(),
            })
            .collect();
        Checkpoint {
            kind: kind.to_string(),
            meta,
            tensors,
        }
    }

    /// Copies tensors into `params`, checking names and sizes.
    pub fn restore_into<P: Parameters>(&self, params: &mut P) -> Result<()> {
        let targets = params.tensors_mut();
        if targets.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                targets.len(),
                self.tensors.len()
            )));
        }
        for ((name, dst), src) in targets.into_iter().zip(&self.tensors) {
            if name != src.spec.name || dst.len() != src.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` ({} values) does not fit `{name}` ({} values)",
                    src.spec.name,
                    src.data.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(&src.data);
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.spec.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|t| t.spec.clone()).collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])?;
        let mut rest = &body[header_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for spec in header.tensors {
            let n: usize = spec.shape.iter().product();
            if rest.len() < n * 8 {
                return Err(Error::Checkpoint(format!("truncated tensor `{}`", spec.name)));
            }
            let data = rest[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            rest = &rest[n * 8..];
            tensors.push(Tensor { spec, data });
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Checkpoint {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bytes_roundtrip(values in proptest::collection::vec(any::<f64>(), 0..40), lr in any::<f64>()) {
            let ck = Checkpoint {
                kind: "test".into(),
                meta: serde_json::json!({ "lr": if lr.is_finite() { lr } else { 0.0 }, "name": "x" }),
                tensors: vec![Tensor {
                    spec: TensorSpec { name: "w".into(), shape: vec![values.len()] },
                    data: values.clone(),
                }],
            };
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            for (a, b) in back.tensors[0].data.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_corruption() {
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
        let ck = Checkpoint {
            kind: "k".into(),
            meta: serde_json::Value::Null,
            tensors: vec![Tensor {
                spec: TensorSpec {
                    name: "w".into(),
                    shape: vec![2],
                },
                data: vec![1.0, 2.0],
            }],
        };
        let mut bytes = ck.to_bytes().unwrap();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        bytes.extend_from_slice(&[0, 0]);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
