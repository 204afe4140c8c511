//! Binary checkpoint containers for parameters and persistent chains.
//!
//! Both files start with an 8-byte magic and a `u32` version; all integers
//! and floats are little-endian.
//!
//! Parameters: `d: u64, h: u64, a[d], W[h·d], b[h], mu[d], nu[h]` as `f64`,
//! then a length-prefixed UTF-8 JSON metadata blob.
//!
//! Chains: `d: u64, h: u64, n: u64, age: u64`, then per chain the packed
//! visible and hidden bits followed by the generator's seed (32 bytes),
//! stream (`u64`) and word position (`u128`).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GibbsState, PcdSample, RbmParams};
use crate::bits::BitVector;
use crate::error::{Error, Result};

const PARAMS_MAGIC: &[u8; 8] = b"WRBMCKPT";
const PCD_MAGIC: &[u8; 8] = b"WRBMPCDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: RbmParams,
    pub metadata: serde_json::Value,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Parse {
            offset: self.pos,
            message: format!("truncated: wanted {n} bytes"),
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

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| Error::Parse {
            offset: at,
            message: "size does not fit in memory".into(),
        })
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Parse {
            offset: self.pos,
            message: "array too large".into(),
        })?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
            });
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::Parse {
                offset: 8,
                message: format!("unsupported version {v}"),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                message: "trailing bytes".into(),
            });
        }
        Ok(())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(32 + 8 * (p.n_trainable() + p.d + p.h));
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(p.d as u64).to_le_bytes());
        out.extend_from_slice(&(p.h as u64).to_le_bytes());
        for v in p.a.iter().chain(&p.w).chain(&p.b).chain(&p.mu).chain(&p.nu) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let meta = self.metadata.to_string();
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        r.header(PARAMS_MAGIC)?;
        let d = r.usize()?;
        let h = r.usize()?;
        let hd = h.checked_mul(d).ok_or_else(|| Error::invalid("checkpoint shape overflows"))?;
        let a = r.f64s(d)?;
        let w = r.f64s(hd)?;
        let b = r.f64s(h)?;
        let mu = r.f64s(d)?;
        let nu = r.f64s(h)?;
        let len = r.usize()?;
        let at = r.pos;
        let metadata = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Parse {
            offset: at,
            message: format!("metadata: {e}"),
        })?;
        r.finish()?;
        let params = RbmParams { d, h, a, w, b, mu, nu };
        params.validate()?;
        Ok(Checkpoint { params, metadata })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

impl PcdSample {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (d, h) = self.chains.first().map_or((0, 0), |c| (c.x.len(), c.y.len()));
        let mut out = Vec::new();
        out.extend_from_slice(PCD_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [d as u64, h as u64, self.chains.len() as u64, self.age] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.chains {
            out.extend_from_slice(&c.x.to_bytes());
            out.extend_from_slice(&c.y.to_bytes());
            out.extend_from_slice(&c.rng.get_seed());
            out.extend_from_slice(&c.rng.get_stream().to_le_bytes());
            out.extend_from_slice(&c.rng.get_word_pos().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        r.header(PCD_MAGIC)?;
        let d = r.usize()?;
        let h = r.usize()?;
        let n = r.usize()?;
        let age = r.u64()?;
        let mut chains = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let at = r.pos;
            let bad = || Error::Parse {
                offset: at,
                message: "stray bits in chain state".into(),
            };
            let x = BitVector::from_bytes(r.take(d.div_ceil(8))?, d).ok_or_else(bad)?;
            let y = BitVector::from_bytes(r.take(h.div_ceil(8))?, h).ok_or_else(bad)?;
            let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
            let stream = r.u64()?;
            let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
            let mut rng = ChaCha8Rng::from_seed(seed);
            rng.set_stream(stream);
            rng.set_word_pos(word_pos);
            chains.push(GibbsState { x, y, rng });
        }
        r.finish()?;
        if chains.is_empty() {
            return Err(Error::invalid("PCD file holds no chains"));
        }
        Ok(PcdSample { chains, age })
    }
}

pub fn save_pcd(path: &Path, pcd: &PcdSample) -> Result<()> {
    std::fs::write(path, pcd.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_pcd(path: &Path) -> Result<PcdSample> {
    PcdSample::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
