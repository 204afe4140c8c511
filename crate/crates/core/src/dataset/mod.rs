//! Binary datasets: ingestion, splitting and the on-disk container.

mod idx;
mod image;
pub mod plants;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use idx::{parse_idx, parse_idx_labels, read_maybe_gzip};
pub use image::{binarize_per_pixel_mean, downscale_2x, pixel_means, GrayImage};
pub use plants::{filter_plants, parse_plants, PlantRecord};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::ot::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Split::ALL.into_iter().find(|s| s.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Fixed-width binary rows with a train/valid/test assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    pub dim: usize,
    pub rows: Vec<BitVector>,
    pub split_of: Vec<Split>,
    /// Dataset name and preprocessing parameters.
    pub source: String,
    /// Seed used for the split.
    pub seed: u64,
    /// `(width, height)` when rows are row-major images.
    pub image_shape: Option<(usize, usize)>,
}

const MAGIC: &[u8; 8] = b"WRBMDATA";
const VERSION: u32 = 1;

/// Shuffles row indices with `seed` and assigns contiguous thirds to
/// train, valid and test. Split sizes differ by at most one.
pub fn split_three_way(rows: Vec<BitVector>, seed: u64) -> Result<BinaryDataset> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 rows to split, got {n}")));
    }
    let dim = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / 3;
    let rem = n % 3;
    let sizes = [base + (rem > 0) as usize, base + (rem > 1) as usize, base];
    let mut split_of = vec![Split::Train; n];
    let mut pos = 0;
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for &row in &order[pos..pos + size] {
            split_of[row] = split;
        }
        pos += size;
    }
    Ok(BinaryDataset {
        dim,
        rows,
        split_of,
        source: String::new(),
        seed,
        image_shape: None,
    })
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of one split, in dataset order.
    pub fn split(&self, split: Split) -> Vec<BitVector> {
        self.rows
            .iter()
            .zip(&self.split_of)
            .filter(|(_, s)| **s == split)
            .map(|(r, _)| r.clone())
            .collect()
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for s in &self.split_of {
            sizes[s.code() as usize] += 1;
        }
        sizes
    }

    /// Keeps `n` rows chosen uniformly with `seed` (in their original order)
    /// and splits them again three ways with the same seed.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<BinaryDataset> {
        if n > self.len() {
            return Err(Error::invalid(format!("cannot keep {n} of {} rows", self.len())));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a3b));
        let mut keep = order[..n].to_vec();
        keep.sort_unstable();
        let mut out = split_three_way(keep.iter().map(|&i| self.rows[i].clone()).collect(), seed)?;
        out.source = format!("{} subsample={n}", self.source);
        out.image_shape = self.image_shape;
        Ok(out)
    }

    /// Uniform empirical measure over one split (duplicates collapsed).
    pub fn measure(&self, split: Split) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::uniform(&self.split(split))
    }

    /// Serializes to the self-describing binary container.
    ///
    /// Layout (little-endian): magic `WRBMDATA`, version u32, dim u32,
    /// rows u64, seed u64, image width u32, image height u32 (0 = none),
    /// source length u32 + UTF-8 bytes, one split byte per row, then each row
    /// packed into `ceil(dim / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let (w, h) = self.image_shape.unwrap_or((0, 0));
        out.extend_from_slice(&(w as u32).to_le_bytes());
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.extend_from_slice(&(self.source.len() as u32).to_le_bytes());
        out.extend_from_slice(self.source.as_bytes());
        out.extend(self.split_of.iter().map(|s| s.code()));
        for r in &self.rows {
            out.extend(r.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: "not a dataset container".into(),
            });
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Parse {
                offset: 8,
                message: format!("unsupported container version {version}"),
            });
        }
        let dim = cur.u32()? as usize;
        let n = cur.u64()? as usize;
        let seed = cur.u64()?;
        let (w, h) = (cur.u32()? as usize, cur.u32()? as usize);
        let source_len = cur.u32()? as usize;
        let at = cur.pos;
        let source = String::from_utf8(cur.take(source_len)?.to_vec()).map_err(|_| Error::Parse {
            offset: at,
            message: "source tag is not UTF-8".into(),
        })?;
        let mut split_of = Vec::with_capacity(n.min(bytes.len()));
        for _ in 0..n {
            let at = cur.pos;
            let c = cur.take(1)?[0];
            split_of.push(Split::from_code(c).ok_or_else(|| Error::Parse {
                offset: at,
                message: format!("bad split code {c}"),
            })?);
        }
        let row_bytes = dim.div_ceil(8);
        let mut rows = Vec::with_capacity(split_of.len());
        for _ in 0..n {
            let at = cur.pos;
            let row = BitVector::from_bytes(cur.take(row_bytes)?, dim).ok_or_else(|| Error::Parse {
                offset: at,
                message: "row has bits set past its width".into(),
            })?;
            rows.push(row);
        }
        if cur.pos != bytes.len() {
            return Err(Error::Parse {
                offset: cur.pos,
                message: "trailing bytes".into(),
            });
        }
        Ok(BinaryDataset {
            dim,
            rows,
            split_of,
            source,
            seed,
            image_shape: (w > 0 && h > 0).then_some((w, h)),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Lossless CSV export: `split,bits` with bits written as a 0/1 string.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,bits\n");
        for (r, sp) in self.rows.iter().zip(&self.split_of) {
            let _ = writeln!(s, "{},{}", sp.name(), r);
        }
        s
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Parse {
            offset: self.pos,
            message: format!("truncated: need {n} bytes"),
        })?;
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

/// Summary of an MNIST ingestion.
#[derive(Debug, Clone, Serialize)]
pub struct MnistIngest {
    #[serde(skip)]
    pub dataset: BinaryDataset,
    pub digit: u8,
    pub total_images: usize,
    pub class_count: usize,
    /// Per-pixel binarization thresholds on the downscaled images.
    pub thresholds: Vec<f64>,
}

/// Selects one digit class, downsizes to 14x14, binarizes at per-pixel means
/// and splits three ways.
pub fn ingest_mnist(images: &[u8], labels: &[u8], digit: u8, seed: u64) -> Result<MnistIngest> {
    let imgs = parse_idx(images)?;
    let labels = parse_idx_labels(labels)?;
    if imgs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            imgs.len(),
            labels.len()
        )));
    }
    let small: Vec<GrayImage> = imgs
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == digit)
        .map(|(img, _)| downscale_2x(img))
        .collect::<Result<_>>()?;
    let thresholds = pixel_means(&small)?;
    let rows = binarize_per_pixel_mean(&small)?;
    let (w, h) = (small[0].width, small[0].height);
    let mut dataset = split_three_way(rows, seed)?;
    dataset.source = format!("mnist digit={digit} downscale=2x2-mean-round-half-up {w}x{h} binarize=pixel>mean");
    dataset.image_shape = Some((w, h));
    Ok(MnistIngest {
        class_count: dataset.len(),
        dataset,
        digit,
        total_images: imgs.len(),
        thresholds,
    })
}

/// Filters PLANTS records by occurrence frequency and splits three ways.
/// The same seed drives the filtering and the split.
pub fn ingest_plants(text: &str, seed: u64) -> Result<BinaryDataset> {
    let records = parse_plants(text)?;
    let rows = filter_plants(&records, seed)?;
    let mut dataset = split_three_way(rows, seed)?;
    dataset.source = format!(
        "plants regions={} records={} filter=exp(-(3(nu-0.5))^6)",
        plants::PLANTS_DIM,
        records.len()
    );
    Ok(dataset)
}

/// Parses rows of `0`/`1` characters, one example per line. Blank lines,
/// lines starting with `#`, and spaces or commas between bits are ignored.
pub fn parse_bit_rows(text: &str) -> Result<Vec<BitVector>> {
    let mut rows = Vec::new();
    let mut offset = 0;
    for line in text.lines() {
        let at = offset;
        offset += line.len() + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bits = line
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Parse {
                    offset: at,
                    message: format!("unexpected character {other:?} in bit row"),
                }),
            })
            .collect::<Result<Vec<u8>>>()?;
        if let Some(first) = rows.first().map(BitVector::len) {
            if first != bits.len() {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("row has {} bits, expected {first}", bits.len()),
                });
            }
        }
        rows.push(BitVector::from_bits(&bits));
    }
    Ok(rows)
}

/// A plain-text dataset of bit rows, split three ways.
pub fn ingest_bit_rows(text: &str, seed: u64, image_shape: Option<(usize, usize)>) -> Result<BinaryDataset> {
    let rows = parse_bit_rows(text)?;
    let mut dataset = split_three_way(rows, seed)?;
    if let Some((w, h)) = image_shape {
        if w * h != dataset.dim {
            return Err(Error::invalid(format!("image shape {w}x{h} does not match {} bits", dataset.dim)));
        }
    }
    dataset.source = "bit-rows".into();
    dataset.image_shape = image_shape;
    Ok(dataset)
}
