//! ktest witness files: the symbolic-execution engine's binary format for
//! concrete test inputs.
//!
//! Layout (all integers 32-bit big-endian):
//! 5-byte magic, version, argc, argc length-prefixed argument strings,
//! sym-argvs count, sym-argv length, object count, then per object a
//! length-prefixed name, a byte count, and the raw bytes. Trailing garbage
//! is rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magic written by current engine versions.
pub const MAGIC_CURRENT: &[u8; 5] = b"KTEST";
/// Historical magic still accepted on read.
pub const MAGIC_LEGACY: &[u8; 5] = b"BOUT\n";
/// Version written on serialization.
pub const VERSION_CURRENT: u32 = 3;

#[derive(Debug, Error)]
pub enum KtestError {
    #[error("bad magic {0:?}")]
    BadMagic(Vec<u8>),
    #[error("truncated record at byte offset {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("string field at byte offset {offset} is not valid UTF-8")]
    NotUtf8 { offset: usize },
    #[error("{trailing} bytes of trailing garbage after last object")]
    TrailingGarbage { trailing: usize },
    #[error("duplicate object name {0:?}")]
    DuplicateObject(String),
    #[error("unreasonable length {len} at byte offset {offset}")]
    LengthOverflow { offset: usize, len: u64 },
    #[error("no witness object named {0:?}")]
    UnknownObject(String),
}

/// One symbolic object solved to concrete bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessObject {
    pub name: String,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(&text).map_err(serde::de::Error::custom)
    }
}

/// A parsed witness file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessFile {
    pub version: u32,
    pub args: Vec<String>,
    pub sym_argvs: u32,
    pub sym_argv_len: u32,
    pub objects: Vec<WitnessObject>,
}

impl Default for WitnessFile {
    fn default() -> Self {
        Self {
            version: VERSION_CURRENT,
            args: Vec::new(),
            sym_argvs: 0,
            sym_argv_len: 0,
            objects: Vec::new(),
        }
    }
}

impl WitnessFile {
    pub fn object(&self, name: &str) -> Option<&WitnessObject> {
        self.objects.iter().find(|o| o.name == name)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], KtestError> {
        if self.pos + n > self.data.len() {
            return Err(KtestError::Truncated {
                offset: self.pos,
                what,
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, KtestError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn sized(&mut self, what: &'static str) -> Result<&'a [u8], KtestError> {
        let offset = self.pos;
        let len = self.u32(what)? as usize;
        if len > self.data.len() {
            return Err(KtestError::LengthOverflow {
                offset,
                len: len as u64,
            });
        }
        self.take(len, what)
    }

    fn string(&mut self, what: &'static str) -> Result<String, KtestError> {
        let offset = self.pos;
        let bytes = self.sized(what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| KtestError::NotUtf8 { offset })
    }
}

/// Parse a ktest file. Total over arbitrary bytes: returns a value or a
/// structured error, never panics.
pub fn parse_ktest(data: &[u8]) -> Result<WitnessFile, KtestError> {
    let mut cur = Cursor { data, pos: 0 };
    let magic = cur.take(5, "magic")?;
    if magic != MAGIC_CURRENT && magic != MAGIC_LEGACY {
        return Err(KtestError::BadMagic(magic.to_vec()));
    }
    let version = cur.u32("version")?;
    let argc = cur.u32("argc")?;
    let mut args = Vec::new();
    for _ in 0..argc {
        args.push(cur.string("argument")?);
    }
    let sym_argvs = cur.u32("sym_argvs")?;
    let sym_argv_len = cur.u32("sym_argv_len")?;
    let num_objects = cur.u32("object count")?;
    let mut objects = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..num_objects {
        let name = cur.string("object name")?;
        if !seen.insert(name.clone()) {
            return Err(KtestError::DuplicateObject(name));
        }
        let bytes = cur.sized("object bytes")?.to_vec();
        objects.push(WitnessObject { name, bytes });
    }
    if cur.pos != data.len() {
        return Err(KtestError::TrailingGarbage {
            trailing: data.len() - cur.pos,
        });
    }
    Ok(WitnessFile {
        version,
        args,
        sym_argvs,
        sym_argv_len,
        objects,
    })
}

/// Serialize a witness file. `parse_ktest(serialize_ktest(w)) == w` for every
/// valid file; the current magic is always written.
pub fn serialize_ktest(wf: &WitnessFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_CURRENT);
    out.extend_from_slice(&wf.version.to_be_bytes());
    out.extend_from_slice(&(wf.args.len() as u32).to_be_bytes());
    for arg in &wf.args {
        out.extend_from_slice(&(arg.len() as u32).to_be_bytes());
        out.extend_from_slice(arg.as_bytes());
    }
    out.extend_from_slice(&wf.sym_argvs.to_be_bytes());
    out.extend_from_slice(&wf.sym_argv_len.to_be_bytes());
    out.extend_from_slice(&(wf.objects.len() as u32).to_be_bytes());
    for obj in &wf.objects {
        out.extend_from_slice(&(obj.name.len() as u32).to_be_bytes());
        out.extend_from_slice(obj.name.as_bytes());
        out.extend_from_slice(&(obj.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&obj.bytes);
    }
    out
}

/// Raw bytes of one named object, for use as a standalone fuzzing seed file.
pub fn export_fuzz_seed(wf: &WitnessFile, object_name: &str) -> Result<Vec<u8>, KtestError> {
    wf.object(object_name)
        .map(|o| o.bytes.clone())
        .ok_or_else(|| KtestError::UnknownObject(object_name.to_string()))
}
