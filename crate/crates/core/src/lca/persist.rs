//! Binary artifact files.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32` reserved,
//! `u32` K, `u32` s, then `f32` payload. Dictionaries store `K·s·s` kernel
//! values; classifiers store s = 0 and `K` weights followed by the bias.
//! A JSON sidecar with the same stem records hyperparameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Dictionary, FrameClassifier};
use crate::error::{Error, Result};

const DICTIONARY_MAGIC: &[u8; 8] = b"ONSDDICT";
const CLASSIFIER_MAGIC: &[u8; 8] = b"ONSDCLSF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn encode(magic: &[u8; 8], k: u32, s: u32, payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    bytes.extend_from_slice(&k.to_le_bytes());
    bytes.extend_from_slice(&s.to_le_bytes());
    for v in payload {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

fn decode(path: &Path, magic: &[u8; 8]) -> Result<(u32, u32, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Artifact {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < HEADER_LEN + 8 || &bytes[..8] != magic {
        return Err(bad("wrong magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(8) != VERSION {
        return Err(bad("unsupported version"));
    }
    let (k, s) = (word(16), word(20));
    let payload = &bytes[HEADER_LEN + 8..];
    if payload.len() % 4 != 0 {
        return Err(bad("truncated payload"));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok((k, s, values))
}

fn write_all(path: &Path, bytes: &[u8], sidecar: &impl Serialize) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(sidecar).map_err(|source| Error::Json {
        path: side.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Writes the dictionary and its hyperparameter sidecar (`<stem>.json`).
pub fn save_dictionary(path: &Path, d: &Dictionary, sidecar: &impl Serialize) -> Result<()> {
    let bytes = encode(
        DICTIONARY_MAGIC,
        d.count() as u32,
        d.side() as u32,
        d.kernels().iter().copied(),
    );
    write_all(path, &bytes, sidecar)
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let (k, s, values) = decode(path, DICTIONARY_MAGIC)?;
    if values.len() != (k * s * s) as usize {
        return Err(Error::Artifact {
            path: path.to_path_buf(),
            reason: format!("expected {} kernel values, found {}", k * s * s, values.len()),
        });
    }
    Dictionary::from_kernels(k as usize, s as usize, values)
}

pub fn save_classifier(path: &Path, clf: &FrameClassifier, sidecar: &impl Serialize) -> Result<()> {
    let payload = clf.weights.iter().copied().chain(std::iter::once(clf.bias));
    let bytes = encode(CLASSIFIER_MAGIC, clf.weights.len() as u32, 0, payload);
    write_all(path, &bytes, sidecar)
}

pub fn load_classifier(path: &Path) -> Result<FrameClassifier> {
    let (k, _, mut values) = decode(path, CLASSIFIER_MAGIC)?;
    if values.len() != k as usize + 1 {
        return Err(Error::Artifact {
            path: path.to_path_buf(),
            reason: format!("expected {} values, found {}", k + 1, values.len()),
        });
    }
    let bias = values.pop().expect("bias present");
    Ok(FrameClassifier { weights: values, bias })
}
