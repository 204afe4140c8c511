//! PLANTS ingestion: species presence over US states and Canadian provinces.
//!
//! Input is UTF-8 text with one species per line: the species name followed
//! by the codes of the regions where it occurs. Fields are separated by commas
//! (the UCI distribution) or, when a line has no comma, by whitespace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;
use crate::error::{Error, Result};

/// The tracked region codes, in bit order.
pub const REGION_CODES: [&str; 70] = [
    "ab", "ak", "ar", "az", "ca", "co", "ct", "de", "dc", "fl", "ga", "hi", "id", "il", "in", "ia",
    "ks", "ky", "la", "me", "md", "ma", "mi", "mn", "ms", "mo", "mt", "ne", "nv", "nh", "nj", "nm",
    "ny", "nc", "nd", "oh", "ok", "or", "pa", "pr", "ri", "sc", "sd", "tn", "tx", "ut", "vt", "va",
    "vi", "wa", "wv", "wi", "wy", "al", "bc", "mb", "nb", "lb", "nf", "nt", "ns", "nu", "on", "pe",
    "qc", "sk", "yt", "dengl", "fraspm", "gl",
];

pub const PLANTS_DIM: usize = REGION_CODES.len();

/// A species and its presence vector over [`REGION_CODES`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantRecord {
    pub name: String,
    pub presence: BitVector,
}

impl PlantRecord {
    /// Occurrence frequency: the fraction of tracked regions where present.
    pub fn frequency(&self) -> f64 {
        self.presence.count_ones() as f64 / self.presence.len() as f64
    }
}

fn region_index(code: &str) -> Option<usize> {
    REGION_CODES.iter().position(|c| *c == code)
}

/// Parses the PLANTS text format. Blank lines are skipped; an unknown region
/// code is an error naming the line.
pub fn parse_plants(text: &str) -> Result<Vec<PlantRecord>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line_offset = offset;
        offset += line.len() + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields: Box<dyn Iterator<Item = &str>> = if line.contains(',') {
            Box::new(line.split(',').map(str::trim))
        } else {
            Box::new(line.split_whitespace())
        };
        let name = fields.next().unwrap_or_default().to_string();
        let mut presence = BitVector::zeros(PLANTS_DIM);
        for code in fields.filter(|f| !f.is_empty()) {
            let idx = region_index(&code.to_ascii_lowercase()).ok_or_else(|| Error::Parse {
                offset: line_offset,
                message: format!("line {}: unknown region code {code:?}", lineno + 1),
            })?;
            presence.set(idx, true);
        }
        out.push(PlantRecord { name, presence });
    }
    Ok(out)
}

/// Probability that a record of occurrence frequency `nu` survives filtering.
pub fn keep_probability(nu: f64) -> f64 {
    (-(3.0 * (nu - 0.5)).powi(6)).exp()
}

/// Discards too-frequent and too-rare species at random, keeping each record
/// independently with [`keep_probability`] of its frequency. Order is kept.
pub fn filter_plants(records: &[PlantRecord], seed: u64) -> Result<Vec<BitVector>> {
    if let Some(bad) = records.iter().find(|r| r.presence.len() != PLANTS_DIM) {
        return Err(Error::invalid(format!(
            "record {:?} has width {}, expected {PLANTS_DIM}",
            bad.name,
            bad.presence.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .filter(|r| rng.random::<f64>() < keep_probability(r.frequency()))
        .map(|r| r.presence.clone())
        .collect())
}
