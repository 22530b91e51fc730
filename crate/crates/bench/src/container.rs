//! Shared on-disk container for every binary artifact the harness writes.
//!
//! Layout, in order:
//!
//! ```text
//! bytes 0..7   magic "RGDPBOX"
//! byte  7      format version (currently 1)
//! text         header: one "key: value" line per field, UTF-8,
//!              starting with "kind: <artifact kind>", followed by one
//!              "block: <name> <f32|f64|u64> <count>" line per data
//!              block, terminated by an empty line
//! binary       the blocks' elements, little-endian, in declared order
//! bytes -32..  SHA-256 over everything before it
//! ```
//!
//! The header is human-readable (`head -c 400 file` shows what an
//! artifact is), the payload is compact, and the trailing digest makes
//! truncation and bit rot loud.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::{BenchError, Result};

const MAGIC: &[u8; 7] = b"RGDPBOX";
const VERSION: u8 = 1;

/// One named block of numeric data.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl BlockData {
    fn type_name(&self) -> &'static str {
        match self {
            BlockData::F32(_) => "f32",
            BlockData::F64(_) => "f64",
            BlockData::U64(_) => "u64",
        }
    }

    fn len(&self) -> usize {
        match self {
            BlockData::F32(v) => v.len(),
            BlockData::F64(v) => v.len(),
            BlockData::U64(v) => v.len(),
        }
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        match self {
            BlockData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlockData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlockData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

/// A parsed or under-construction artifact file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    fields: Vec<(String, String)>,
    blocks: Vec<(String, BlockData)>,
}

fn corrupt(msg: impl Into<String>) -> BenchError {
    BenchError::Runtime(format!("corrupt container: {}", msg.into()))
}

impl Container {
    pub fn new(kind: &str) -> Container {
        Container {
            kind: kind.to_string(),
            fields: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Appends a header field. Keys must be unique; values must be
    /// single-line.
    pub fn push_field(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        debug_assert!(!key.contains([':', '\n']) && !key.is_empty());
        debug_assert!(!value.contains('\n'));
        debug_assert!(self.fields.iter().all(|(k, _)| k != key));
        self.fields.push((key.to_string(), value));
    }

    pub fn push_block(&mut self, name: &str, data: BlockData) {
        debug_assert!(!name.contains([' ', '\n']) && !name.is_empty());
        debug_assert!(self.blocks.iter().all(|(n, _)| n != name));
        self.blocks.push((name.to_string(), data));
    }

    pub fn field(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| corrupt(format!("missing header field `{key}`")))
    }

    /// Reads and parses a header field.
    pub fn parse_field<T: FromStr>(&self, key: &str) -> Result<T> {
        self.field(key)?
            .parse()
            .map_err(|_| corrupt(format!("header field `{key}` has an unusable value")))
    }

    fn block(&self, name: &str) -> Result<&BlockData> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| corrupt(format!("missing block `{name}`")))
    }

    pub fn f32s(&self, name: &str) -> Result<&[f32]> {
        match self.block(name)? {
            BlockData::F32(v) => Ok(v),
            other => Err(corrupt(format!(
                "block `{name}` holds {}, expected f32",
                other.type_name()
            ))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.block(name)? {
            BlockData::F64(v) => Ok(v),
            other => Err(corrupt(format!(
                "block `{name}` holds {}, expected f64",
                other.type_name()
            ))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.block(name)? {
            BlockData::U64(v) => Ok(v),
            other => Err(corrupt(format!(
                "block `{name}` holds {}, expected u64",
                other.type_name()
            ))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let mut header = format!("kind: {}\n", self.kind);
        for (k, v) in &self.fields {
            header.push_str(k);
            header.push_str(": ");
            header.push_str(v);
            header.push('\n');
        }
        for (name, data) in &self.blocks {
            header.push_str(&format!(
                "block: {name} {} {}\n",
                data.type_name(),
                data.len()
            ));
        }
        header.push('\n');
        out.extend_from_slice(header.as_bytes());
        for (_, data) in &self.blocks {
            data.write_to(&mut out);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        if bytes.len() < MAGIC.len() + 1 + 32 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..7] != MAGIC {
            return Err(corrupt("bad magic bytes; not a ragdp artifact"));
        }
        if bytes[7] != VERSION {
            return Err(corrupt(format!(
                "unsupported format version {}",
                bytes[7]
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let actual = Sha256::digest(body);
        if actual.as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }

        let text_start = MAGIC.len() + 1;
        let header_end = find_header_end(&body[text_start..])
            .ok_or_else(|| corrupt("unterminated header"))?;
        let header = std::str::from_utf8(&body[text_start..text_start + header_end])
            .map_err(|_| corrupt("header is not UTF-8"))?;
        let mut payload = &body[text_start + header_end + 2..];

        let mut kind = None;
        let mut fields = Vec::new();
        let mut decls: Vec<(String, String, usize)> = Vec::new();
        for line in header.lines() {
            let (key, value) = line
                .split_once(": ")
                .ok_or_else(|| corrupt(format!("malformed header line `{line}`")))?;
            match key {
                "kind" => kind = Some(value.to_string()),
                "block" => {
                    let mut it = value.split(' ');
                    let (name, ty, count) = (it.next(), it.next(), it.next());
                    let (Some(name), Some(ty), Some(count), None) =
                        (name, ty, count, it.next())
                    else {
                        return Err(corrupt(format!("malformed block line `{line}`")));
                    };
                    let count: usize = count
                        .parse()
                        .map_err(|_| corrupt(format!("bad block count in `{line}`")))?;
                    decls.push((name.to_string(), ty.to_string(), count));
                }
                _ => fields.push((key.to_string(), value.to_string())),
            }
        }
        let kind = kind.ok_or_else(|| corrupt("missing `kind` header field"))?;

        let mut blocks = Vec::with_capacity(decls.len());
        for (name, ty, count) in decls {
            let width = if ty == "f32" { 4 } else { 8 };
            let nbytes = count * width;
            if payload.len() < nbytes {
                return Err(corrupt(format!("block `{name}` is truncated")));
            }
            let (raw, rest) = payload.split_at(nbytes);
            payload = rest;
            let data = match ty.as_str() {
                "f32" => BlockData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                "f64" => BlockData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                "u64" => BlockData::U64(
                    raw.chunks_exact(8)
                        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                other => return Err(corrupt(format!("unknown block type `{other}`"))),
            };
            blocks.push((name, data));
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing bytes after the declared blocks"));
        }

        Ok(Container {
            kind,
            fields,
            blocks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Container> {
        let bytes = fs::read(path).map_err(|e| {
            BenchError::Runtime(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            BenchError::Runtime(msg) => {
                BenchError::Runtime(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Loads and checks the artifact kind in one go.
    pub fn load_kind(path: &Path, kind: &str) -> Result<Container> {
        let c = Self::load(path)?;
        if c.kind != kind {
            return Err(BenchError::Mismatch(format!(
                "{} holds a `{}` artifact, expected `{kind}`",
                path.display(),
                c.kind
            )));
        }
        Ok(c)
    }
}

/// Index just past the header text, i.e. of the `\n\n` terminator.
fn find_header_end(text: &[u8]) -> Option<usize> {
    text.windows(2).position(|w| w == b"\n\n")
}
