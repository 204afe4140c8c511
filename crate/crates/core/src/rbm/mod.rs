//! Binary restricted Boltzmann machines in the centered parameterization.
//!
//! With visible offsets `mu` and hidden offsets `nu` the energy is
//!
//! ```text
//! E(x, y) = −aᵀ(x − μ) − Σ_j (y_j − ν_j) (w_jᵀ(x − μ) + b_j)
//! ```
//!
//! and summing out `y` gives the free energy
//!
//! ```text
//! F(x) = −aᵀ(x − μ) + Σ_j ν_j z_j − Σ_j softplus(z_j),   z_j = w_jᵀ(x − μ) + b_j.
//! ```
//!
//! Zero offsets recover the usual `E = −aᵀx − Σ_j y_j (w_jᵀx + b_j)`. The
//! distribution over `x` only depends on the standard-form parameters
//! `a' = a − Wᵀν`, `b' = b − Wμ` (same `W`); [`RbmParams::to_standard`] and
//! [`RbmParams::recenter`] convert between the two.

mod checkpoint;
mod sampling;

pub use checkpoint::{load_checkpoint, load_pcd, save_checkpoint, save_pcd, Checkpoint};
pub use sampling::{pcd_refresh, GibbsState, PcdSample};
pub(crate) use sampling::Sampler;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{check_dim, Error, Result};
use crate::math::{log_sum_exp, sigmoid, softplus};

/// Largest visible width accepted by exact enumeration.
pub const MAX_ENUM_BITS: usize = 20;

/// RBM parameters. `w` is row-major `h × d`, row `j` being `w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub d: usize,
    pub h: usize,
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl RbmParams {
    /// All-zero parameters and offsets: the uniform distribution.
    pub fn zeros(d: usize, h: usize) -> Self {
        RbmParams {
            d,
            h,
            a: vec![0.0; d],
            w: vec![0.0; h * d],
            b: vec![0.0; h],
            mu: vec![0.0; d],
            nu: vec![0.0; h],
        }
    }

    /// Training start point: `W ~ U[−0.01, 0.01]`, zero biases, `mu` the
    /// training bit means, `nu = 0.5`.
    pub fn init(mu: Vec<f64>, h: usize, seed: u64) -> Result<Self> {
        let d = mu.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..h * d).map(|_| rng.random_range(-0.01..=0.01)).collect();
        let p = RbmParams {
            d,
            h,
            a: vec![0.0; d],
            w,
            b: vec![0.0; h],
            mu,
            nu: vec![0.5; h],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("an RBM needs at least one visible unit"));
        }
        check_dim(self.d, self.a.len())?;
        check_dim(self.d, self.mu.len())?;
        check_dim(self.h, self.b.len())?;
        check_dim(self.h, self.nu.len())?;
        check_dim(self.h * self.d, self.w.len())?;
        let all = self.a.iter().chain(&self.w).chain(&self.b).chain(&self.mu).chain(&self.nu);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite RBM parameter".into()));
        }
        if self.mu.iter().chain(&self.nu).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("centering offsets must lie in [0, 1]"));
        }
        Ok(())
    }

    #[inline]
    pub fn w_row(&self, j: usize) -> &[f64] {
        &self.w[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.w[j * self.d + i]
    }

    /// `a' = a − Wᵀν`.
    pub fn standard_visible_bias(&self) -> Vec<f64> {
        let mut a = self.a.clone();
        for j in 0..self.h {
            for (ai, wji) in a.iter_mut().zip(self.w_row(j)) {
                *ai -= self.nu[j] * wji;
            }
        }
        a
    }

    /// `b' = b − Wμ`.
    pub fn standard_hidden_bias(&self) -> Vec<f64> {
        (0..self.h)
            .map(|j| self.b[j] - self.w_row(j).iter().zip(&self.mu).map(|(w, m)| w * m).sum::<f64>())
            .collect()
    }

    /// Equivalent parameters with zero offsets. Energies shift by the constant
    /// [`Self::energy_offset`]; the distribution is unchanged.
    pub fn to_standard(&self) -> RbmParams {
        RbmParams {
            a: self.standard_visible_bias(),
            b: self.standard_hidden_bias(),
            mu: vec![0.0; self.d],
            nu: vec![0.0; self.h],
            ..self.clone()
        }
    }

    /// Equivalent parameters with the given offsets.
    pub fn recenter(&self, mu: Vec<f64>, nu: Vec<f64>) -> Result<RbmParams> {
        check_dim(self.d, mu.len())?;
        check_dim(self.h, nu.len())?;
        let std = self.to_standard();
        let mut a = std.a;
        for j in 0..self.h {
            for (ai, wji) in a.iter_mut().zip(self.w_row(j)) {
                *ai += nu[j] * wji;
            }
        }
        let b = (0..self.h)
            .map(|j| std.b[j] + self.w_row(j).iter().zip(&mu).map(|(w, m)| w * m).sum::<f64>())
            .collect();
        let p = RbmParams {
            a,
            b,
            mu,
            nu,
            ..self.clone()
        };
        p.validate()?;
        Ok(p)
    }

    /// `E_centered(x, y) − E_standard(x, y)`, the same for every state.
    pub fn energy_offset(&self) -> f64 {
        let amu: f64 = self.a.iter().zip(&self.mu).map(|(a, m)| a * m).sum();
        amu + (0..self.h)
            .map(|j| {
                let wmu: f64 = self.w_row(j).iter().zip(&self.mu).map(|(w, m)| w * m).sum();
                self.nu[j] * (self.b[j] - wmu)
            })
            .sum::<f64>()
    }

    /// `z_j = w_jᵀ(x − μ) + b_j` for every hidden unit.
    pub fn hidden_inputs(&self, x: &BitVector) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        let mut z = self.standard_hidden_bias();
        for i in x.ones() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += self.weight(j, i);
            }
        }
        Ok(z)
    }

    pub fn energy(&self, x: &BitVector, y: &BitVector) -> Result<f64> {
        check_dim(self.h, y.len())?;
        let z = self.hidden_inputs(x)?;
        let vis: f64 = (0..self.d).map(|i| self.a[i] * (x.get(i) as u8 as f64 - self.mu[i])).sum();
        let hid: f64 = (0..self.h).map(|j| (y.get(j) as u8 as f64 - self.nu[j]) * z[j]).sum();
        Ok(-vis - hid)
    }

    pub fn free_energy(&self, x: &BitVector) -> Result<f64> {
        let z = self.hidden_inputs(x)?;
        Ok(self.free_energy_from_inputs(x, &z))
    }

    fn free_energy_from_inputs(&self, x: &BitVector, z: &[f64]) -> f64 {
        let vis: f64 = (0..self.d).map(|i| self.a[i] * (x.get(i) as u8 as f64 - self.mu[i])).sum();
        let hid: f64 = z.iter().zip(&self.nu).map(|(&zj, nu)| nu * zj - softplus(zj)).sum();
        hid - vis
    }

    /// `P(y_j = 1 | x) = σ(z_j)`.
    pub fn hidden_conditional(&self, x: &BitVector) -> Result<Vec<f64>> {
        Ok(self.hidden_inputs(x)?.into_iter().map(sigmoid).collect())
    }

    /// `P(x_i = 1 | y) = σ(a_i + Σ_j (y_j − ν_j) W_ji)`.
    pub fn visible_conditional(&self, y: &BitVector) -> Result<Vec<f64>> {
        check_dim(self.h, y.len())?;
        let mut s = self.standard_visible_bias();
        for j in y.ones() {
            for (si, w) in s.iter_mut().zip(self.w_row(j)) {
                *si += w;
            }
        }
        Ok(s.into_iter().map(sigmoid).collect())
    }

    /// Adds `weight · ∇_θ F(x)` into `(ga, gw, gb)`, laid out like `(a, w, b)`.
    pub fn add_free_energy_grad(&self, x: &BitVector, weight: f64, ga: &mut [f64], gw: &mut [f64], gb: &mut [f64]) {
        let z = self.hidden_inputs(x).expect("width checked by caller");
        let xc: Vec<f64> = (0..self.d).map(|i| x.get(i) as u8 as f64 - self.mu[i]).collect();
        for (g, v) in ga.iter_mut().zip(&xc) {
            *g -= weight * v;
        }
        for j in 0..self.h {
            let c = weight * (self.nu[j] - sigmoid(z[j]));
            gb[j] += c;
            for (g, v) in gw[j * self.d..(j + 1) * self.d].iter_mut().zip(&xc) {
                *g += c * v;
            }
        }
    }

    /// `−F(x) − log Z` for every `x ∈ {0,1}^d` in [`BitVector::from_index`]
    /// order, together with `log Z`.
    pub fn exact_log_distribution(&self) -> Result<(Vec<f64>, f64)> {
        if self.d > MAX_ENUM_BITS {
            return Err(Error::TooLarge {
                bits: self.d,
                limit: MAX_ENUM_BITS,
            });
        }
        let neg_f: Vec<f64> = (0..1u64 << self.d)
            .map(|s| self.free_energy(&BitVector::from_index(s, self.d)).map(|f| -f))
            .collect::<Result<_>>()?;
        let log_z = log_sum_exp(&neg_f);
        Ok((neg_f.into_iter().map(|v| v - log_z).collect(), log_z))
    }

    /// Normalized `p_θ` over all `2^d` visible states.
    pub fn exact_distribution(&self) -> Result<Vec<f64>> {
        Ok(self.exact_log_distribution()?.0.into_iter().map(f64::exp).collect())
    }

    /// Exact `log Z_θ` (of the free energy in this parameterization).
    pub fn exact_log_partition(&self) -> Result<f64> {
        Ok(self.exact_log_distribution()?.1)
    }

    /// Number of trainable values: `a`, `W`, `b`.
    pub fn n_trainable(&self) -> usize {
        self.d + self.h * self.d + self.h
    }

    /// Trainable values flattened as `[a, W, b]`.
    pub fn trainable(&self) -> Vec<f64> {
        self.a.iter().chain(&self.w).chain(&self.b).copied().collect()
    }

    pub fn set_trainable(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_trainable());
        let (a, rest) = theta.split_at(self.d);
        let (w, b) = rest.split_at(self.h * self.d);
        self.a.copy_from_slice(a);
        self.w.copy_from_slice(w);
        self.b.copy_from_slice(b);
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().chain(&self.w).chain(&self.b).fold(0.0, |m, v| m.max(v.abs()))
    }
}
