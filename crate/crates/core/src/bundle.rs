//! Single-file container used by model and agent checkpoints.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32` metadata length
//! plus UTF-8 JSON metadata, `u32` section count, then per section a `u32`
//! name length, the UTF-8 name, a `u64` payload length and the payload.
//! Network payloads are [`crate::nn::Network`] checkpoints.

use crate::error::{Error, Result};

const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub magic: [u8; 8],
    pub meta: serde_json::Value,
    pub sections: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new(magic: [u8; 8], meta: serde_json::Value) -> Self {
        Self {
            magic,
            meta,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, payload: Vec<u8>) {
        self.sections.push((name.into(), payload));
    }

    pub fn section(&self, name: &str) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, payload) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], magic: &[u8; 8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .filter(|e| *e <= bytes.len())
                .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(8)? != magic {
            return Err(Error::Checkpoint(format!(
                "expected a {} file",
                String::from_utf8_lossy(magic).trim_end_matches('\0')
            )));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let meta = serde_json::from_slice(take(meta_len)?)?;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let mut sections = Vec::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("section name is not UTF-8".into()))?;
            let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            sections.push((name, take(len)?.to_vec()));
        }
        Ok(Self {
            magic: *magic,
            meta,
            sections,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut b = Bundle::new(*b"TESTBNDL", serde_json::json!({"k": [1, 2]}));
        b.push("one", vec![1, 2, 3]);
        b.push("empty", vec![]);
        let bytes = b.to_bytes().unwrap();
        let back = Bundle::from_bytes(&bytes, b"TESTBNDL").unwrap();
        assert_eq!(back, b);
        assert_eq!(back.section("one"), Some(&[1u8, 2, 3][..]));
        assert!(Bundle::from_bytes(&bytes, b"OTHERBND").is_err());
        assert!(Bundle::from_bytes(&bytes[..bytes.len() - 1], b"TESTBNDL").is_err());
    }
}
