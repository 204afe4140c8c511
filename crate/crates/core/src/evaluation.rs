//! Model scoring: AIS estimates of `log Z`, KL to held-out data, smoothed
//! Wasserstein distance of the final PCD sample, and PCA projections.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bits::BitVector;
use crate::error::{check_dim, Error, Result};
use crate::math::{log_mean_exp, sigmoid, softplus};
use crate::ot::{cost_matrix, sinkhorn_cost, CostSpec, EmpiricalMeasure, SinkhornOptions};
use crate::rbm::{PcdSample, RbmParams, Sampler};
use crate::training::weighted_free_energy;

const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AisEstimate {
    /// Estimate of `log Z` for the parameters' own free energy.
    pub log_z: f64,
    /// Bootstrap standard error of `log_z`.
    pub se: f64,
    pub log_weights: Vec<f64>,
    pub n_runs: usize,
    pub n_temps: usize,
    pub seed: u64,
}

impl AisEstimate {
    /// The JSON report: everything but the raw weights.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "log_z": self.log_z,
            "se": self.se,
            "n_runs": self.n_runs,
            "n_temps": self.n_temps,
            "seed": self.seed,
        })
    }
}

/// `log Z` of the model with `W = 0` and the same standard-form biases:
/// `Σ_i softplus(a'_i) + Σ_j softplus(b'_j)`.
fn base_log_z(sampler: &Sampler) -> f64 {
    sampler.a_std().iter().chain(sampler.b_std()).map(|&v| softplus(v)).sum()
}

/// Annealed importance sampling from the independent model (`W` scaled by
/// `β = 0`) to the RBM (`β = 1`) along a linear schedule of `n_temps` steps,
/// with one Gibbs sweep per intermediate temperature.
pub fn ais_log_z(params: &RbmParams, n_runs: usize, n_temps: usize, seed: u64) -> Result<AisEstimate> {
    params.validate()?;
    if n_runs == 0 || n_temps == 0 {
        return Err(Error::invalid("AIS needs at least one run and one temperature"));
    }
    let sampler = Sampler::new(params);
    let (a_std, b_std) = (sampler.a_std(), sampler.b_std());
    let betas: Vec<f64> = (0..=n_temps).map(|t| t as f64 / n_temps as f64).collect();
    let log_weights: Vec<f64> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            let mut x = BitVector::zeros(params.d);
            for (i, &a) in a_std.iter().enumerate() {
                x.set(i, rng.random::<f64>() < sigmoid(a));
            }
            let mut y = BitVector::zeros(params.h);
            let mut s = vec![0.0; params.h];
            let mut scratch = Vec::new();
            let mut lw = 0.0;
            for t in 1..=n_temps {
                let (lo, hi) = (betas[t - 1], betas[t]);
                sampler.weighted_inputs(&x, &mut s);
                lw += s
                    .iter()
                    .zip(b_std)
                    .map(|(s, b)| softplus(hi * s + b) - softplus(lo * s + b))
                    .sum::<f64>();
                if t < n_temps {
                    for (j, (s, b)) in s.iter().zip(b_std).enumerate() {
                        y.set(j, rng.random::<f64>() < sigmoid(hi * s + b));
                    }
                    sampler.sample_visible(&y, &mut x, &mut rng, hi, &mut scratch);
                }
            }
            lw
        })
        .collect();
    if let Some(bad) = log_weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::Numerical(format!("AIS run {bad} produced a non-finite weight")));
    }
    let shift = base_log_z(&sampler) - params.energy_offset();
    let log_z = shift + log_mean_exp(&log_weights);
    Ok(AisEstimate {
        log_z,
        se: bootstrap_se(&log_weights, seed),
        log_weights,
        n_runs,
        n_temps,
        seed,
    })
}

/// Standard deviation of `log_mean_exp` over seeded bootstrap resamples.
fn bootstrap_se(log_weights: &[f64], seed: u64) -> f64 {
    let n = log_weights.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut buf = vec![0.0; n];
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = log_weights[rng.random_range(0..n)];
            }
            log_mean_exp(&buf)
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64).sqrt()
}

/// `⟨F⟩_p̂ + log Z − H(p̂)`, which is `KL(p̂ ‖ p_θ)` for the empirical
/// measure `p̂` when `log Z` is exact.
pub fn kl_estimate(params: &RbmParams, data: &EmpiricalMeasure, ais: &AisEstimate) -> Result<f64> {
    kl_with_log_z(params, data, ais.log_z)
}

fn kl_with_log_z(params: &RbmParams, data: &EmpiricalMeasure, log_z: f64) -> Result<f64> {
    check_dim(params.d, data.dim())?;
    Ok(weighted_free_energy(params, data.support(), data.weights())? + log_z - data.entropy())
}

/// `KL(p̂ ‖ p_θ)` with `log Z` by enumeration.
pub fn exact_kl(params: &RbmParams, data: &EmpiricalMeasure) -> Result<f64> {
    kl_with_log_z(params, data, params.exact_log_partition()?)
}

/// `W_γ(p̂_θ, p̂_test)` between the final PCD sample and a held-out split.
/// `spec.normalizer` should be the training split's mean pairwise Hamming
/// distance. Solved to `1e-9` so that the value is symmetric in its
/// arguments well below reporting precision.
pub fn wgamma_eval(pcd: &PcdSample, test: &EmpiricalMeasure, spec: &CostSpec) -> Result<f64> {
    wgamma_between(&pcd.measure()?, test, spec)
}

pub fn wgamma_between(p: &EmpiricalMeasure, q: &EmpiricalMeasure, spec: &CostSpec) -> Result<f64> {
    let cost = cost_matrix(p, q, spec)?;
    let opts = SinkhornOptions {
        tol: 1e-9,
        max_iter: 100_000,
        ..Default::default()
    };
    Ok(sinkhorn_cost(&cost, p.weights(), q.weights(), spec.gamma, &opts)?.distance)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaProjection {
    /// Two orthonormal directions of length `d`.
    pub components: [Vec<f64>; 2],
    pub projected_data: Vec<[f64; 2]>,
    pub projected_model: Vec<[f64; 2]>,
    /// Variance of the data along each component.
    pub explained_variance: [f64; 2],
    /// `explained_variance` over the total data variance.
    pub explained_ratio: [f64; 2],
}

impl PcaProjection {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,pc1,pc2\n");
        for (src, pts) in [("data", &self.projected_data), ("model", &self.projected_model)] {
            for p in pts {
                let _ = writeln!(s, "{src},{},{}", p[0], p[1]);
            }
        }
        s
    }
}

/// Projects data and model samples on the top two principal directions of
/// the data (exact eigendecomposition of the covariance). Each direction's
/// sign is fixed so that its largest-magnitude entry is positive.
pub fn pca_project(data: &[BitVector], model: &[BitVector]) -> Result<PcaProjection> {
    if data.len() < 3 {
        return Err(Error::invalid("PCA needs at least three data points"));
    }
    let d = data[0].len();
    if d < 2 {
        return Err(Error::invalid("PCA onto two components needs d >= 2"));
    }
    for x in data.iter().chain(model) {
        check_dim(d, x.len())?;
    }
    let to_row = |x: &BitVector| x.to_bits().into_iter().map(f64::from).collect::<Vec<f64>>();
    let n = data.len();
    let mut mean = vec![0.0; d];
    for x in data {
        for i in x.ones() {
            mean[i] += 1.0 / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |r, c| data[r].get(c) as u8 as f64 - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let total = cov.trace();
    if total <= 1e-12 {
        return Err(Error::invalid("data is constant: covariance has rank zero"));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let component = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [component(0), component(1)];
    let project = |x: &BitVector| {
        let row = to_row(x);
        let mut out = [0.0; 2];
        for (o, c) in out.iter_mut().zip(&components) {
            *o = row.iter().zip(&mean).zip(c).map(|((x, m), c)| (x - m) * c).sum();
        }
        out
    };
    let var = [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)];
    Ok(PcaProjection {
        projected_data: data.iter().map(project).collect(),
        projected_model: model.iter().map(project).collect(),
        explained_variance: var,
        explained_ratio: [var[0] / total, var[1] / total],
        components,
    })
}
