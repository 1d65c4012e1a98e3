//! Versioned binary container for trained models.
//!
//! Layout (little endian): magic `NILMMDL1`, `u32` version, `u16` kind
//! length, kind (UTF-8), `u64` payload length, payload (JSON).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"NILMMDL1";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model<T: Serialize>(kind: &str, model: &T) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(model)?;
    let kind_len = u16::try_from(kind.len()).map_err(|_| Error::Format("model kind too long".into()))?;
    let mut out = Vec::with_capacity(payload.len() + kind.len() + 22);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&kind_len.to_le_bytes());
    out.extend_from_slice(kind.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated model file".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

/// Decodes a container and checks that it holds `expected_kind`.
pub fn decode_model<T: DeserializeOwned>(mut bytes: &[u8], expected_kind: &str) -> Result<T> {
    if take(&mut bytes, 8)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model file version {version}")));
    }
    let kind_len = u16::from_le_bytes(take(&mut bytes, 2)?.try_into().expect("2 bytes")) as usize;
    let kind = std::str::from_utf8(take(&mut bytes, kind_len)?)
        .map_err(|_| Error::Format("model kind is not UTF-8".into()))?;
    if kind != expected_kind {
        return Err(Error::Format(format!("model file holds '{kind}', expected '{expected_kind}'")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let payload = take(&mut bytes, len)?;
    if !bytes.is_empty() {
        return Err(Error::Format("trailing bytes after model payload".into()));
    }
    Ok(serde_json::from_slice(payload)?)
}

pub fn write_model_file<T: Serialize>(path: &Path, kind: &str, model: &T) -> Result<()> {
    let bytes = encode_model(kind, model)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model_file<T: DeserializeOwned>(path: &Path, expected_kind: &str) -> Result<T> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, expected_kind)
}
