//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wrbm_core::{BitVector, RbmParams};

pub fn random_rows(n: usize, d: usize, seed: u64) -> Vec<BitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| BitVector::from_bits(&(0..d).map(|_| rng.random_range(0..2u8)).collect::<Vec<_>>()))
        .collect()
}

/// A model with small random weights centered on the rows' bit means.
pub fn model_for(rows: &[BitVector], h: usize, seed: u64) -> RbmParams {
    let d = rows[0].len();
    let mu = (0..d)
        .map(|i| rows.iter().filter(|r| r.get(i)).count() as f64 / rows.len() as f64)
        .map(|m| m.clamp(0.05, 0.95))
        .collect();
    let mut p = RbmParams::init(mu, h, seed).expect("valid init");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    p.w.iter_mut().for_each(|w| *w = rng.random_range(-0.1..0.1));
    p
}
