//! Alternating Gibbs sampling and persistent chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::RbmParams;
use crate::bits::BitVector;
use crate::error::{check_dim, Error, Result};
use crate::math::{sigmoid, softplus};
use crate::ot::EmpiricalMeasure;

/// One Gibbs chain: current visible and hidden states plus its own generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub x: BitVector,
    pub y: BitVector,
    pub rng: ChaCha8Rng,
}

impl GibbsState {
    /// Chain `index` of the family seeded by `seed`: every chain gets its own
    /// ChaCha stream, so chains can be advanced in any order.
    pub fn new(x: BitVector, h: usize, seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        GibbsState {
            x,
            y: BitVector::zeros(h),
            rng,
        }
    }
}

/// Standard-form view of the parameters, laid out for sparse products with
/// bit-vectors. `beta` scales `W` (used by annealing; 1 for plain sampling).
pub(crate) struct Sampler<'a> {
    params: &'a RbmParams,
    wt: Vec<f64>,
    a_std: Vec<f64>,
    b_std: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(params: &'a RbmParams) -> Self {
        let (d, h) = (params.d, params.h);
        let mut wt = vec![0.0; d * h];
        for j in 0..h {
            for i in 0..d {
                wt[i * h + j] = params.weight(j, i);
            }
        }
        Sampler {
            params,
            wt,
            a_std: params.standard_visible_bias(),
            b_std: params.standard_hidden_bias(),
        }
    }

    pub(crate) fn a_std(&self) -> &[f64] {
        &self.a_std
    }

    pub(crate) fn b_std(&self) -> &[f64] {
        &self.b_std
    }

    /// `Σ_{i: x_i = 1} W_ji` for every `j`.
    pub(crate) fn weighted_inputs(&self, x: &BitVector, out: &mut [f64]) {
        let h = self.params.h;
        out.fill(0.0);
        for i in x.ones() {
            for (o, w) in out.iter_mut().zip(&self.wt[i * h..(i + 1) * h]) {
                *o += w;
            }
        }
    }

    /// `z = b' + W x`, the same as [`RbmParams::hidden_inputs`].
    pub(crate) fn hidden_inputs_into(&self, x: &BitVector, out: &mut [f64]) {
        self.weighted_inputs(x, out);
        for (o, b) in out.iter_mut().zip(&self.b_std) {
            *o += b;
        }
    }

    pub(crate) fn free_energy(&self, x: &BitVector, scratch: &mut Vec<f64>) -> f64 {
        let p = self.params;
        scratch.resize(p.h, 0.0);
        self.hidden_inputs_into(x, scratch);
        let vis: f64 = x.ones().map(|i| p.a[i]).sum::<f64>() - p.a.iter().zip(&p.mu).map(|(a, m)| a * m).sum::<f64>();
        let hid: f64 = scratch.iter().zip(&p.nu).map(|(&z, nu)| nu * z - softplus(z)).sum();
        hid - vis
    }

    pub(crate) fn sample_hidden(&self, x: &BitVector, y: &mut BitVector, rng: &mut ChaCha8Rng, beta: f64, scratch: &mut Vec<f64>) {
        scratch.resize(self.params.h, 0.0);
        self.weighted_inputs(x, scratch);
        for (j, s) in scratch.iter().enumerate() {
            let p = sigmoid(self.b_std[j] + beta * s);
            y.set(j, rng.random::<f64>() < p);
        }
    }

    pub(crate) fn sample_visible(&self, y: &BitVector, x: &mut BitVector, rng: &mut ChaCha8Rng, beta: f64, scratch: &mut Vec<f64>) {
        let d = self.params.d;
        scratch.resize(d, 0.0);
        scratch.fill(0.0);
        for j in y.ones() {
            for (s, w) in scratch.iter_mut().zip(self.params.w_row(j)) {
                *s += w;
            }
        }
        for (i, s) in scratch.iter().enumerate() {
            let p = sigmoid(self.a_std[i] + beta * s);
            x.set(i, rng.random::<f64>() < p);
        }
    }

    /// Hidden given visible, then visible given hidden.
    pub(crate) fn step(&self, state: &mut GibbsState, beta: f64, scratch: &mut Vec<f64>) {
        let GibbsState { x, y, rng } = state;
        self.sample_hidden(x, y, rng, beta, scratch);
        self.sample_visible(y, x, rng, beta, scratch);
    }
}

fn check_state(params: &RbmParams, state: &GibbsState) -> Result<()> {
    check_dim(params.d, state.x.len())?;
    check_dim(params.h, state.y.len())
}

impl RbmParams {
    /// One alternating Gibbs sweep `x → y → x'`.
    pub fn gibbs_step(&self, state: &GibbsState) -> Result<GibbsState> {
        check_state(self, state)?;
        let mut next = state.clone();
        Sampler::new(self).step(&mut next, 1.0, &mut Vec::new());
        Ok(next)
    }
}

/// The persistent chains approximating `p_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcdSample {
    pub chains: Vec<GibbsState>,
    pub age: u64,
}

impl PcdSample {
    /// One chain per row, started at that row.
    pub fn from_rows(rows: &[BitVector], h: usize, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("a PCD sample needs at least one chain"));
        }
        let d = rows[0].len();
        for r in rows {
            check_dim(d, r.len())?;
        }
        Ok(PcdSample {
            chains: rows
                .iter()
                .enumerate()
                .map(|(n, x)| GibbsState::new(x.clone(), h, seed, n as u64))
                .collect(),
            age: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn visible(&self) -> Vec<BitVector> {
        self.chains.iter().map(|c| c.x.clone()).collect()
    }

    /// `p̂_θ`: uniform over the chains' visible states, duplicates collapsed.
    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::uniform(&self.visible())
    }

    /// Advances every chain by one Gibbs sweep. Chains are independent, so the
    /// parallel update is bit-identical to a sequential one.
    pub fn refresh(&mut self, params: &RbmParams) -> Result<()> {
        if self.chains.is_empty() {
            return Err(Error::invalid("empty PCD sample"));
        }
        for c in &self.chains {
            check_state(params, c)?;
        }
        let sampler = Sampler::new(params);
        self.chains
            .par_iter_mut()
            .for_each_init(Vec::new, |scratch, c| sampler.step(c, 1.0, scratch));
        self.age += 1;
        Ok(())
    }
}

/// Functional form of [`PcdSample::refresh`].
pub fn pcd_refresh(params: &RbmParams, pcd: &PcdSample) -> Result<PcdSample> {
    let mut next = pcd.clone();
    next.refresh(params)?;
    Ok(next)
}
