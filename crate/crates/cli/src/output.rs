//! Artifact writers. Every text artifact starts with the config hash and
//! seed of the run that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};
use wrbm_core::BitVector;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Leading comment line for CSV and PGM files.
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }

    /// Adds `config_hash` and `seed` to a JSON object.
    pub fn stamp(&self, mut value: Value) -> Value {
        if let Value::Object(m) = &mut value {
            m.insert("config_hash".into(), self.config_hash.clone().into());
            m.insert("seed".into(), self.seed.into());
        }
        value
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_csv(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    write_bytes(path, (prov.comment() + body).as_bytes())
}

/// Binary PGM of `samples` tiled `cols × rows`, each a `width × height`
/// image; set bits are white. Missing tiles stay black.
pub fn pgm_grid(
    samples: &[BitVector],
    width: usize,
    height: usize,
    cols: usize,
    rows: usize,
    prov: &Provenance,
) -> Result<Vec<u8>> {
    let (w, h) = (width * cols, height * rows);
    let mut pixels = vec![0u8; w * h];
    for (t, x) in samples.iter().take(cols * rows).enumerate() {
        ensure!(x.len() == width * height, "sample has {} bits, tiles are {width}x{height}", x.len());
        let (top, left) = (t / cols * height, t % cols * width);
        for i in 0..x.len() {
            if x.get(i) {
                pixels[(top + i / width) * w + left + i % width] = 255;
            }
        }
    }
    let mut out = format!("P5\n{}{w} {h}\n255\n", prov.comment()).into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}
