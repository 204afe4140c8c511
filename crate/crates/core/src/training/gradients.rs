//! KL, quadratic-containment and Wasserstein gradients with respect to the
//! trainable parameters `(a, W, b)`.
//!
//! All of them are built from expectations of `∇_θ F_θ(x)` under weighted
//! point sets. The model side is either the PCD sample (training) or the
//! exact `p_θ` by enumeration (tests and small-model checks).

use rayon::prelude::*;
use serde::Serialize;

use crate::bits::BitVector;
use crate::error::{check_dim, Error, Result};
use crate::ot::{cost_matrix, sinkhorn_cost, CostSpec, EmpiricalMeasure, SinkhornOptions, TransportPlanDual};
use crate::math::sigmoid;
use crate::rbm::{PcdSample, RbmParams, Sampler};

/// Objective values reported next to a gradient. Terms that were not
/// computed are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    pub wasserstein: Option<f64>,
    /// `⟨F⟩_data − ⟨F⟩_model`: the KL divergence up to the (constant in the
    /// sample) data entropy and the unknown `log Z` correction.
    pub kl_proxy: Option<f64>,
    pub quad: Option<f64>,
}

/// A gradient laid out like [`RbmParams`] plus the objective terms that came
/// with it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStats {
    pub grad_a: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub objective_terms: ObjectiveTerms,
    pub sinkhorn_iterations: Option<usize>,
}

impl GradStats {
    pub fn zeros(params: &RbmParams) -> Self {
        GradStats {
            grad_a: vec![0.0; params.d],
            grad_w: vec![0.0; params.h * params.d],
            grad_b: vec![0.0; params.h],
            objective_terms: ObjectiveTerms::default(),
            sinkhorn_iterations: None,
        }
    }

    /// Gradient flattened as `[a, W, b]`, matching [`RbmParams::trainable`].
    pub fn flat(&self) -> Vec<f64> {
        self.grad_a.iter().chain(&self.grad_w).chain(&self.grad_b).copied().collect()
    }

    /// `self += s · other` on the gradient entries.
    pub fn add_scaled(&mut self, s: f64, other: &GradStats) {
        for (x, y) in self
            .grad_a
            .iter_mut()
            .chain(self.grad_w.iter_mut())
            .chain(self.grad_b.iter_mut())
            .zip(other.grad_a.iter().chain(&other.grad_w).chain(&other.grad_b))
        {
            *x += s * y;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.grad_a.iter_mut().chain(self.grad_w.iter_mut()).chain(self.grad_b.iter_mut()) {
            *x *= s;
        }
    }

    /// Euclidean norms of the `a`, `W` and `b` blocks.
    pub fn norms(&self) -> (f64, f64, f64) {
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n(&self.grad_a), n(&self.grad_w), n(&self.grad_b))
    }

    pub fn is_finite(&self) -> bool {
        self.grad_a.iter().chain(&self.grad_w).chain(&self.grad_b).all(|x| x.is_finite())
    }
}

const CHUNK: usize = 64;

/// `Σ_k w_k ∇_θ F(x_k)`. Partial sums over fixed chunks are combined in
/// order, so the result does not depend on the thread count.
pub fn weighted_free_energy_grad(params: &RbmParams, points: &[BitVector], weights: &[f64]) -> Result<GradStats> {
    check_dim(points.len(), weights.len())?;
    for x in points {
        check_dim(params.d, x.len())?;
    }
    let sampler = Sampler::new(params);
    let partials: Vec<GradStats> = points
        .par_chunks(CHUNK)
        .zip(weights.par_chunks(CHUNK))
        .map(|(xs, ws)| chunk_grad(params, &sampler, xs, ws))
        .collect();
    let mut total = GradStats::zeros(params);
    for g in &partials {
        total.add_scaled(1.0, g);
    }
    Ok(total)
}

/// Accumulates `Σ w x` and `Σ c_j x` over the set bits only (with `W`
/// transposed for contiguous rows) and subtracts the `μ` terms once.
fn chunk_grad(params: &RbmParams, sampler: &Sampler, xs: &[BitVector], ws: &[f64]) -> GradStats {
    let (d, h) = (params.d, params.h);
    let mut g = GradStats::zeros(params);
    let mut wx = vec![0.0; d];
    let mut cx = vec![0.0; d * h];
    let mut c_sum = vec![0.0; h];
    let mut w_sum = 0.0;
    let mut z = vec![0.0; h];
    for (x, &w) in xs.iter().zip(ws) {
        sampler.hidden_inputs_into(x, &mut z);
        for (zj, nu) in z.iter_mut().zip(&params.nu) {
            *zj = w * (nu - sigmoid(*zj));
        }
        for (s, c) in c_sum.iter_mut().zip(&z) {
            *s += c;
        }
        for i in x.ones() {
            wx[i] += w;
            for (acc, c) in cx[i * h..(i + 1) * h].iter_mut().zip(&z) {
                *acc += c;
            }
        }
        w_sum += w;
    }
    for i in 0..d {
        g.grad_a[i] = params.mu[i] * w_sum - wx[i];
        for j in 0..h {
            g.grad_w[j * d + i] = cx[i * h + j] - params.mu[i] * c_sum[j];
        }
    }
    g.grad_b = c_sum;
    g
}

/// `Σ_k w_k F(x_k)`.
pub fn weighted_free_energy(params: &RbmParams, points: &[BitVector], weights: &[f64]) -> Result<f64> {
    check_dim(points.len(), weights.len())?;
    for x in points {
        check_dim(params.d, x.len())?;
    }
    let sampler = Sampler::new(params);
    let fs: Vec<f64> = points
        .par_iter()
        .map_init(Vec::new, |scratch, x| sampler.free_energy(x, scratch))
        .collect();
    Ok(fs.iter().zip(weights).map(|(f, w)| f * w).sum())
}

/// `p_θ` over all `2^d` states as a measure (states whose probability
/// underflows to zero are dropped).
pub fn model_measure(params: &RbmParams) -> Result<EmpiricalMeasure> {
    let p = params.exact_distribution()?;
    let states = (0..p.len() as u64).map(|s| BitVector::from_index(s, params.d)).collect();
    EmpiricalMeasure::weighted(states, p)
}

fn expectation(params: &RbmParams, m: &EmpiricalMeasure) -> Result<(GradStats, f64)> {
    Ok((
        weighted_free_energy_grad(params, m.support(), m.weights())?,
        weighted_free_energy(params, m.support(), m.weights())?,
    ))
}

fn kl_from_model(params: &RbmParams, data: &EmpiricalMeasure, model: &EmpiricalMeasure) -> Result<GradStats> {
    let (mut g, f_data) = expectation(params, data)?;
    let (g_model, f_model) = expectation(params, model)?;
    g.add_scaled(-1.0, &g_model);
    g.objective_terms.kl_proxy = Some(f_data - f_model);
    Ok(g)
}

/// `⟨∇F⟩_data − ⟨∇F⟩_pcd`, the PCD estimate of `∇_θ KL(p̂ ‖ p_θ)`.
pub fn kl_gradient(params: &RbmParams, data: &EmpiricalMeasure, pcd: &PcdSample) -> Result<GradStats> {
    kl_from_model(params, data, &pcd.measure()?)
}

/// The KL gradient with the model expectation computed by enumeration.
pub fn kl_gradient_exact(params: &RbmParams, data: &EmpiricalMeasure) -> Result<GradStats> {
    kl_from_model(params, data, &model_measure(params)?)
}

fn add_quadratic(params: &RbmParams, eta: f64, g: &mut GradStats) {
    for (ga, a) in g.grad_a.iter_mut().zip(&params.a) {
        *ga += 2.0 * eta * a;
    }
    for (gw, w) in g.grad_w.iter_mut().zip(&params.w) {
        *gw += 2.0 * eta * w;
    }
    let sq: f64 = params.a.iter().chain(&params.w).map(|x| x * x).sum();
    g.objective_terms.quad = Some(eta * sq);
}

/// Gradient of `Ω(θ) = KL(p̂ ‖ p_θ) + η (‖a‖² + Σ_j ‖w_j‖²)`; `b` is not
/// penalized.
pub fn omega_regularizer_gradient(
    params: &RbmParams,
    data: &EmpiricalMeasure,
    pcd: &PcdSample,
    eta: f64,
) -> Result<GradStats> {
    let mut g = kl_gradient(params, data, pcd)?;
    add_quadratic(params, eta, &mut g);
    Ok(g)
}

pub fn omega_gradient_exact(params: &RbmParams, data: &EmpiricalMeasure, eta: f64) -> Result<GradStats> {
    let mut g = kl_gradient_exact(params, data)?;
    add_quadratic(params, eta, &mut g);
    Ok(g)
}

fn solve(
    model: &EmpiricalMeasure,
    data: &EmpiricalMeasure,
    spec: &CostSpec,
    opts: &SinkhornOptions,
) -> Result<TransportPlanDual> {
    let cost = cost_matrix(model, data, spec)?;
    sinkhorn_cost(&cost, model.weights(), data.weights(), spec.gamma, opts)
}

/// Sampled Wasserstein gradient `−Σ_x p̂_θ(x) α*(x) ∇F(x)` with `p̂_θ` the
/// collapsed PCD sample. The `⟨α*⟩ ⟨∇F⟩` term of the exact gradient vanishes
/// because `α*` is centered under `p̂_θ`.
pub fn wasserstein_gradient(
    params: &RbmParams,
    data: &EmpiricalMeasure,
    pcd: &PcdSample,
    spec: &CostSpec,
    opts: &SinkhornOptions,
) -> Result<(GradStats, TransportPlanDual)> {
    if pcd.len() < 2 {
        return Err(Error::invalid("the Wasserstein gradient needs at least two PCD chains"));
    }
    let model = pcd.measure()?;
    wasserstein_gradient_on(params, &model, data, spec, opts)
}

/// [`wasserstein_gradient`] for an explicit model measure.
pub fn wasserstein_gradient_on(
    params: &RbmParams,
    model: &EmpiricalMeasure,
    data: &EmpiricalMeasure,
    spec: &CostSpec,
    opts: &SinkhornOptions,
) -> Result<(GradStats, TransportPlanDual)> {
    let t = solve(model, data, spec, opts)?;
    let w: Vec<f64> = model.weights().iter().zip(&t.alpha_star).map(|(p, a)| -p * a).collect();
    let mut g = weighted_free_energy_grad(params, model.support(), &w)?;
    g.objective_terms.wasserstein = Some(t.distance);
    g.sinkhorn_iterations = Some(t.iterations);
    Ok((g, t))
}

/// Exact gradient of `W_γ(p_θ, q)`:
/// `⟨α*⟩_{p_θ} ⟨∇F⟩_{p_θ} − ⟨α* ∇F⟩_{p_θ}`, with `p_θ` by enumeration.
pub fn wasserstein_gradient_exact(
    params: &RbmParams,
    data: &EmpiricalMeasure,
    spec: &CostSpec,
    opts: &SinkhornOptions,
) -> Result<(GradStats, TransportPlanDual)> {
    let model = model_measure(params)?;
    let (mut g, t) = wasserstein_gradient_on(params, &model, data, spec, opts)?;
    let mean_alpha: f64 = model.weights().iter().zip(&t.alpha_star).map(|(p, a)| p * a).sum();
    let gf = weighted_free_energy_grad(params, model.support(), model.weights())?;
    g.add_scaled(mean_alpha, &gf);
    Ok((g, t))
}

/// `W_γ(p_θ, q)` with `p_θ` by enumeration.
pub fn exact_wgamma(params: &RbmParams, data: &EmpiricalMeasure, spec: &CostSpec, opts: &SinkhornOptions) -> Result<f64> {
    Ok(solve(&model_measure(params)?, data, spec, opts)?.distance)
}
