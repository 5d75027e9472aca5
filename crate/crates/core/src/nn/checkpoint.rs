//! Network checkpoint layout (all integers little-endian):
//!
//! | bytes | content                                              |
//! |-------|------------------------------------------------------|
//! | 8     | magic `NKCKPT01`                                     |
//! | 4     | format version, `u32` (currently 1)                  |
//! | 4     | descriptor length `L`, `u32`                         |
//! | L     | UTF-8 JSON `{"spec": NetworkSpec, "parameters": [..]}` |
//! | 8     | parameter count `N`, `u64`                           |
//! | 8·N   | parameters as `f64`, in descriptor order             |

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, ParamEntry};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NKCKPT01";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    spec: NetworkSpec,
    parameters: Vec<ParamEntry>,
}

pub(super) fn encode(net: &Network) -> Result<Vec<u8>> {
    let descriptor = serde_json::to_vec(&Descriptor {
        spec: net.spec().clone(),
        parameters: net.params().entries().to_vec(),
    })?;
    let values = net.params().values();
    let mut out = Vec::with_capacity(24 + descriptor.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(&descriptor);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<Network> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a network checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = cur.u32()? as usize;
    let descriptor: Descriptor = serde_json::from_slice(cur.take(len)?)?;
    let count = cur.u64()? as usize;
    let raw = cur.take(
        count
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("bad length".into()))?,
    )?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    let net = Network::from_parts(descriptor.spec, values)?;
    if net.params().entries() != descriptor.parameters.as_slice() {
        return Err(Error::Checkpoint(
            "parameter layout does not match spec".into(),
        ));
    }
    Ok(net)
}
