//! Entropy-smoothed optimal transport between empirical measures on
//! bit-vectors.
//!
//! The smoothed distance is
//!
//! ```text
//! W_γ(p, q) = min_{π ∈ Π(p,q)} ⟨D, π⟩ − γ H(π),     H(π) = −Σ π log π
//! ```
//!
//! solved by Sinkhorn scaling of the Gibbs kernel `K = exp(−D/γ)`. With the
//! scalings `u, v`, the dual potentials are `α = γ log u`, `β = γ log v` up to
//! a shared constant. [`TransportPlanDual::alpha_star`] is centered to have
//! zero mean under `p`, which makes it the gradient of `W_γ` with respect to
//! `p` restricted to the simplex.
//!
//! Small `γ` (or a kernel that would underflow) switches to iterations on the
//! log-potentials with log-sum-exp reductions.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::bits::BitVector;
use crate::error::{check_dim, Error, Result};

/// Smoothing strength and the normalizer of the Hamming ground cost,
/// `D(x, x') = H(x, x') / normalizer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub gamma: f64,
    pub normalizer: f64,
}

impl CostSpec {
    pub fn new(gamma: f64, normalizer: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(Error::invalid(format!(
                "cost normalizer must be positive, got {normalizer}"
            )));
        }
        Ok(CostSpec { gamma, normalizer })
    }
}

/// A probability measure with finite support on `{0,1}^d`.
///
/// Construction collapses duplicate points (summing their weights), drops
/// zero-weight points and normalizes, so every support point is distinct
/// with strictly positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    support: Vec<BitVector>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniform measure over `rows`, i.e. `(1/N) Σ δ_{x_n}`. Repeated rows
    /// become one support point carrying their combined mass; support order is
    /// first occurrence.
    pub fn uniform(rows: &[BitVector]) -> Result<Self> {
        Self::weighted(rows.to_vec(), vec![1.0; rows.len()])
    }

    pub fn weighted(points: Vec<BitVector>, weights: Vec<f64>) -> Result<Self> {
        check_dim(points.len(), weights.len())?;
        let dim = points
            .first()
            .map(BitVector::len)
            .ok_or_else(|| Error::invalid("empty measure"))?;
        let mut merged: IndexMap<BitVector, f64> = IndexMap::new();
        for (x, w) in points.into_iter().zip(weights) {
            check_dim(dim, x.len())?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("bad weight {w}")));
            }
            *merged.entry(x).or_insert(0.0) += w;
        }
        merged.retain(|_, w| *w > 0.0);
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(Error::invalid("measure has no mass"));
        }
        let (support, weights) = merged.into_iter().map(|(x, w)| (x, w / total)).unzip();
        Ok(EmpiricalMeasure { support, weights })
    }

    pub fn support(&self) -> &[BitVector] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// Plug-in Shannon entropy `−Σ w log w`.
    pub fn entropy(&self) -> f64 {
        -self.weights.iter().map(|&w| w * w.ln()).sum::<f64>()
    }

    pub fn position(&self, x: &BitVector) -> Option<usize> {
        self.support.iter().position(|s| s == x)
    }

    /// Weighted mean of every bit.
    pub fn bit_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (x, &w) in self.support.iter().zip(&self.weights) {
            for i in x.ones() {
                m[i] += w;
            }
        }
        m
    }
}

/// `E_{x,x' ~ p⊗p} H(x, x')`, identical pairs included.
///
/// Bits are independent coordinates of the Hamming sum, so this equals
/// `Σ_i 2 m_i (1 − m_i)` with `m_i` the mean of bit `i`.
pub fn mean_pairwise_hamming(data: &EmpiricalMeasure) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::invalid(
            "mean pairwise Hamming distance of a single-point measure is zero",
        ));
    }
    Ok(data.bit_means().iter().map(|m| 2.0 * m * (1.0 - m)).sum())
}

/// Dense row-major matrix of ground costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        CostMatrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Normalized Hamming costs between the supports of `p` and `q`.
pub fn cost_matrix(p: &EmpiricalMeasure, q: &EmpiricalMeasure, spec: &CostSpec) -> Result<CostMatrix> {
    check_dim(p.dim(), q.dim())?;
    let (ps, qs) = (p.support(), q.support());
    let data: Vec<f64> = ps
        .par_iter()
        .flat_map_iter(|x| qs.iter().map(move |y| x.hamming(y) as f64 / spec.normalizer))
        .collect();
    Ok(CostMatrix {
        rows: ps.len(),
        cols: qs.len(),
        data,
    })
}

#[derive(Debug, Clone)]
pub struct SinkhornOptions {
    /// Stop when the larger marginal violation (L∞) is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// `None` picks the log-domain path automatically.
    pub log_domain: Option<bool>,
    /// Initial potentials `(f, g)` in cost units (`f = γ log u`). Ignored when
    /// the lengths do not match the problem.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            tol: 1e-6,
            max_iter: 10_000,
            log_domain: None,
            warm_start: None,
        }
    }
}

/// Converged Sinkhorn scalings, dual potentials and diagnostics.
#[derive(Debug, Clone)]
pub struct TransportPlanDual {
    pub gamma: f64,
    /// `log u`, `log v` (the scalings themselves can leave the f64 range in
    /// the log-domain regime; see [`Self::u`]).
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    /// Dual potential on the support of `p`, with `Σ p_i α_i = 0`.
    pub alpha_star: Vec<f64>,
    /// Matching potential on `q` so that `(alpha_star, beta_star)` maximizes
    /// the dual objective.
    pub beta_star: Vec<f64>,
    /// `W_γ = ⟨D⟩_π − γ H(π)` at the returned plan.
    pub distance: f64,
    /// `⟨D⟩_π`, the unregularized transport term.
    pub transport_cost: f64,
    /// `H(π)`.
    pub entropy: f64,
    pub iterations: usize,
    pub marginal_err: f64,
    pub log_domain: bool,
}

impl TransportPlanDual {
    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|x| x.exp()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|x| x.exp()).collect()
    }

    /// Potentials in cost units, usable as a warm start.
    pub fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.log_u.iter().map(|x| self.gamma * x).collect(),
            self.log_v.iter().map(|x| self.gamma * x).collect(),
        )
    }

    /// The transport plan `π_ij = u_i K_ij v_j`.
    pub fn plan(&self, cost: &CostMatrix) -> CostMatrix {
        CostMatrix::from_fn(cost.rows, cost.cols, |i, j| {
            (self.log_u[i] + self.log_v[j] - cost.get(i, j) / self.gamma).exp()
        })
    }

    /// Writes `cost.csv`, `u.csv`, `v.csv`, `alpha.csv` and `summary.csv`
    /// into `dir`.
    pub fn dump_csv_bundle(&self, cost: &CostMatrix, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        let mut d = String::new();
        for i in 0..cost.rows {
            let row: Vec<String> = cost.row(i).iter().map(|c| c.to_string()).collect();
            let _ = writeln!(d, "{}", row.join(","));
        }
        write("cost.csv", d)?;
        let column = |header: &str, xs: &[f64]| {
            let mut s = format!("{header}\n");
            for x in xs {
                let _ = writeln!(s, "{x}");
            }
            s
        };
        write("u.csv", column("u", &self.u()))?;
        write("v.csv", column("v", &self.v()))?;
        write("alpha.csv", column("alpha_star", &self.alpha_star))?;
        write(
            "summary.csv",
            format!(
                "distance,iterations,marginal_err,gamma,log_domain\n{},{},{},{},{}\n",
                self.distance, self.iterations, self.marginal_err, self.gamma, self.log_domain
            ),
        )
    }
}

/// Solves the smoothed transport problem between two empirical measures.
pub fn sinkhorn(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    spec: &CostSpec,
    tol: f64,
    max_iter: usize,
) -> Result<TransportPlanDual> {
    let cost = cost_matrix(p, q, spec)?;
    let opts = SinkhornOptions {
        tol,
        max_iter,
        ..Default::default()
    };
    sinkhorn_cost(&cost, p.weights(), q.weights(), spec.gamma, &opts)
}

/// `W_γ(p, q)` with default solver settings.
pub fn smoothed_w_distance(p: &EmpiricalMeasure, q: &EmpiricalMeasure, spec: &CostSpec) -> Result<f64> {
    let opts = SinkhornOptions::default();
    sinkhorn(p, q, spec, opts.tol, opts.max_iter).map(|t| t.distance)
}

const UNDERFLOW: f64 = 1e-300;
const LOG_DOMAIN_GAMMA: f64 = 0.05;

/// Sinkhorn on a precomputed cost matrix. `p` and `q` must be strictly
/// positive and sum to one.
pub fn sinkhorn_cost(
    cost: &CostMatrix,
    p: &[f64],
    q: &[f64],
    gamma: f64,
    opts: &SinkhornOptions,
) -> Result<TransportPlanDual> {
    check_dim(cost.rows, p.len())?;
    check_dim(cost.cols, q.len())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if p.iter().chain(q).any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("marginal weights must be strictly positive"));
    }
    if cost.data.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    let warm = opts
        .warm_start
        .as_ref()
        .filter(|(f, g)| f.len() == p.len() && g.len() == q.len());
    let use_log = opts
        .log_domain
        .unwrap_or_else(|| gamma <= LOG_DOMAIN_GAMMA || (-cost.max() / gamma).exp() < UNDERFLOW);
    if !use_log {
        match scaling_iterations(cost, p, q, gamma, opts, warm) {
            Ok(Some(res)) => return Ok(res),
            Ok(None) => {} // lost precision: redo in the log domain
            Err(e) => return Err(e),
        }
    }
    log_domain_iterations(cost, p, q, gamma, opts, warm)
}

fn finish(
    cost: &CostMatrix,
    p: &[f64],
    gamma: f64,
    log_u: Vec<f64>,
    log_v: Vec<f64>,
    iterations: usize,
    marginal_err: f64,
    log_domain: bool,
) -> TransportPlanDual {
    let (transport_cost, plogp) = (0..cost.rows)
        .into_par_iter()
        .map(|i| {
            let mut tc = 0.0;
            let mut ent = 0.0;
            for (j, &d) in cost.row(i).iter().enumerate() {
                let lp = log_u[i] + log_v[j] - d / gamma;
                let pi = lp.exp();
                if pi > 0.0 {
                    tc += pi * d;
                    ent += pi * lp;
                }
            }
            (tc, ent)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let entropy = -plogp;
    let center: f64 = p.iter().zip(&log_u).map(|(w, lu)| w * lu).sum();
    let alpha_star = log_u.iter().map(|lu| gamma * (lu - center)).collect();
    let beta_star = log_v.iter().map(|lv| gamma * (lv + center + 1.0)).collect();
    TransportPlanDual {
        gamma,
        log_u,
        log_v,
        alpha_star,
        beta_star,
        distance: transport_cost - gamma * entropy,
        transport_cost,
        entropy,
        iterations,
        marginal_err,
        log_domain,
    }
}

fn par_threshold(cost: &CostMatrix) -> bool {
    cost.rows * cost.cols >= 1 << 16
}

/// `out_i = Σ_j K_ij v_j`.
fn kernel_apply(k: &CostMatrix, v: &[f64], out: &mut [f64]) {
    let row = |(i, o): (usize, &mut f64)| {
        *o = k.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    };
    if par_threshold(k) {
        out.par_iter_mut().enumerate().for_each(row);
    } else {
        out.iter_mut().enumerate().for_each(row);
    }
}

/// Classic scaling updates on `K = exp(−D/γ)`. Returns `Ok(None)` when the
/// scalings stop being finite positive numbers.
fn scaling_iterations(
    cost: &CostMatrix,
    p: &[f64],
    q: &[f64],
    gamma: f64,
    opts: &SinkhornOptions,
    warm: Option<&(Vec<f64>, Vec<f64>)>,
) -> Result<Option<TransportPlanDual>> {
    let k = CostMatrix {
        rows: cost.rows,
        cols: cost.cols,
        data: cost.data.iter().map(|d| (-d / gamma).exp()).collect(),
    };
    if k.data.iter().any(|&x| x < UNDERFLOW) {
        return Ok(None);
    }
    let kt = k.transpose();
    let (mut u, mut v) = match warm {
        Some((f, g)) => (
            f.iter().map(|x| (x / gamma).exp()).collect::<Vec<_>>(),
            g.iter().map(|x| (x / gamma).exp()).collect::<Vec<_>>(),
        ),
        None => (vec![1.0; p.len()], vec![1.0; q.len()]),
    };
    if u.iter().chain(&v).any(|x| !(x.is_finite() && *x > 0.0)) {
        u.fill(1.0);
        v.fill(1.0);
    }
    let mut kv = vec![0.0; p.len()];
    let mut ktu = vec![0.0; q.len()];
    let mut err = f64::INFINITY;
    for it in 0..=opts.max_iter {
        kernel_apply(&k, &v, &mut kv);
        if it > 0 {
            // columns are exact after the v-update; measure the rows
            err = u.iter().zip(&kv).zip(p).map(|((u, kv), p)| (u * kv - p).abs()).fold(0.0, f64::max);
            if err <= opts.tol {
                let log_u = u.iter().map(|x| x.ln()).collect();
                let log_v = v.iter().map(|x| x.ln()).collect();
                return Ok(Some(finish(cost, p, gamma, log_u, log_v, it, err, false)));
            }
            if it == opts.max_iter {
                break;
            }
        }
        for ((u, p), kv) in u.iter_mut().zip(p).zip(&kv) {
            *u = p / kv;
        }
        kernel_apply(&kt, &u, &mut ktu);
        for ((v, q), ktu) in v.iter_mut().zip(q).zip(&ktu) {
            *v = q / ktu;
        }
        if u.iter().chain(&v).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Ok(None);
        }
    }
    Err(Error::SinkhornNotConverged {
        iterations: opts.max_iter,
        marginal_err: err,
    })
}

/// `out_i = LSE_j (g_j − D_ij) / γ`.
fn soft_min_rows(cost: &CostMatrix, g: &[f64], gamma: f64, out: &mut [f64]) {
    let row = |(i, o): (usize, &mut f64)| {
        let r = cost.row(i);
        let mut m = f64::NEG_INFINITY;
        for (d, gj) in r.iter().zip(g) {
            m = m.max((gj - d) / gamma);
        }
        let s: f64 = r.iter().zip(g).map(|(d, gj)| ((gj - d) / gamma - m).exp()).sum();
        *o = m + s.ln();
    };
    if par_threshold(cost) {
        out.par_iter_mut().enumerate().for_each(row);
    } else {
        out.iter_mut().enumerate().for_each(row);
    }
}

/// Sinkhorn on the potentials `f = γ log u`, `g = γ log v`. For `γ` small
/// against the cost range it anneals `γ` down geometrically, carrying the
/// potentials between stages.
fn log_domain_iterations(
    cost: &CostMatrix,
    p: &[f64],
    q: &[f64],
    gamma: f64,
    opts: &SinkhornOptions,
    warm: Option<&(Vec<f64>, Vec<f64>)>,
) -> Result<TransportPlanDual> {
    let cost_t = cost.transpose();
    let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|x| x.ln()).collect();
    let (mut f, mut g) = match warm {
        Some((f, g)) => (f.clone(), g.clone()),
        None => (vec![0.0; p.len()], vec![0.0; q.len()]),
    };

    let mut stages = Vec::new();
    if warm.is_none() {
        let mut eps = cost.max() / 4.0;
        while eps > 2.0 * gamma {
            stages.push(eps);
            eps /= 2.0;
        }
    }
    stages.push(gamma);

    let mut lse_rows = vec![0.0; p.len()];
    let mut lse_cols = vec![0.0; q.len()];
    let mut total_iter = 0usize;
    let mut err = f64::INFINITY;
    let last = stages.len() - 1;
    for (stage, &eps) in stages.iter().enumerate() {
        let stage_tol = if stage == last { opts.tol } else { opts.tol.max(1e-3) };
        let mut converged = false;
        for it in 0..=opts.max_iter {
            soft_min_rows(cost, &g, eps, &mut lse_rows);
            if it > 0 {
                err = f
                    .iter()
                    .zip(&lse_rows)
                    .zip(p)
                    .map(|((f, l), p)| ((f / eps + l).exp() - p).abs())
                    .fold(0.0, f64::max);
                if err <= stage_tol {
                    converged = true;
                    break;
                }
                if it == opts.max_iter {
                    break;
                }
            }
            for ((f, lp), l) in f.iter_mut().zip(&log_p).zip(&lse_rows) {
                *f = eps * (lp - l);
            }
            soft_min_rows(&cost_t, &f, eps, &mut lse_cols);
            for ((g, lq), l) in g.iter_mut().zip(&log_q).zip(&lse_cols) {
                *g = eps * (lq - l);
            }
            total_iter += 1;
        }
        if !converged && stage == last {
            return Err(Error::SinkhornNotConverged {
                iterations: total_iter,
                marginal_err: err,
            });
        }
    }
    let log_u = f.iter().map(|x| x / gamma).collect();
    let log_v = g.iter().map(|x| x / gamma).collect();
    Ok(finish(cost, p, gamma, log_u, log_v, total_iter, err, true))
}

/// The dual objective `⟨α⟩_p + ⟨β⟩_q − γ Σ_ij exp((α_i + β_j − D_ij)/γ − 1)`.
pub fn dual_objective_cost(cost: &CostMatrix, p: &[f64], q: &[f64], alpha: &[f64], beta: &[f64], gamma: f64) -> f64 {
    let lin: f64 = p.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>()
        + q.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let mut penalty = 0.0;
    for (i, a) in alpha.iter().enumerate() {
        for (j, b) in beta.iter().enumerate() {
            penalty += ((a + b - cost.get(i, j)) / gamma - 1.0).exp();
        }
    }
    lin - gamma * penalty
}

/// [`dual_objective_cost`] with the Hamming cost between the two measures.
pub fn dual_objective(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    alpha: &[f64],
    beta: &[f64],
    spec: &CostSpec,
) -> Result<f64> {
    check_dim(p.len(), alpha.len())?;
    check_dim(q.len(), beta.len())?;
    let cost = cost_matrix(p, q, spec)?;
    Ok(dual_objective_cost(&cost, p.weights(), q.weights(), alpha, beta, spec.gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVector {
        BitVector::from_bits(&s.bytes().map(|c| (c == b'1') as u8).collect::<Vec<_>>())
    }

    fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmpiricalMeasure {
        let pts: Vec<BitVector> = (0..n)
            .map(|_| BitVector::from_bits(&(0..d).map(|_| rng.random_range(0..2u8)).collect::<Vec<_>>()))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        EmpiricalMeasure::weighted(pts, w).unwrap()
    }

    #[test]
    fn mean_pairwise_hamming_examples() {
        let two = EmpiricalMeasure::uniform(&[bv("0000"), bv("1111")]).unwrap();
        assert!((mean_pairwise_hamming(&two).unwrap() - 2.0).abs() < 1e-15);
        let single = EmpiricalMeasure::uniform(&[bv("0101"), bv("0101")]).unwrap();
        assert!(mean_pairwise_hamming(&single).is_err());
        let cube = EmpiricalMeasure::uniform(&[bv("00"), bv("01"), bv("10"), bv("11")]).unwrap();
        assert!((mean_pairwise_hamming(&cube).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_pairwise_hamming_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let m = random_measure(&mut rng, 7, 9);
            let mut brute = 0.0;
            for (x, wx) in m.support().iter().zip(m.weights()) {
                for (y, wy) in m.support().iter().zip(m.weights()) {
                    brute += wx * wy * x.hamming(y) as f64;
                }
            }
            assert!((mean_pairwise_hamming(&m).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn measure_collapses_and_drops_zeros() {
        let m = EmpiricalMeasure::weighted(vec![bv("01"), bv("10"), bv("01"), bv("11")], vec![1.0, 1.0, 1.0, 0.0])
            .unwrap();
        assert_eq!(m.support(), &[bv("01"), bv("10")]);
        assert!((m.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(EmpiricalMeasure::weighted(vec![bv("0"), bv("00")], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn cost_matrix_examples() {
        let spec = CostSpec::new(0.1, 1.0).unwrap();
        let a = EmpiricalMeasure::uniform(&[bv("010")]).unwrap();
        assert_eq!(cost_matrix(&a, &a, &spec).unwrap().data, vec![0.0]);
        let z = EmpiricalMeasure::uniform(&[bv("000")]).unwrap();
        let o = EmpiricalMeasure::uniform(&[bv("111")]).unwrap();
        assert_eq!(cost_matrix(&z, &o, &spec).unwrap().data, vec![3.0]);
        let short = EmpiricalMeasure::uniform(&[bv("11")]).unwrap();
        assert!(cost_matrix(&z, &short, &spec).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_measure(&mut rng, 5, 8);
        let q = random_measure(&mut rng, 7, 8);
        let spec = CostSpec::new(0.1, 2.5).unwrap();
        assert_eq!(cost_matrix(&p, &q, &spec).unwrap().transpose(), cost_matrix(&q, &p, &spec).unwrap());
    }

    #[test]
    fn singleton_transport_is_forced() {
        for gamma in [1e-3, 0.1, 5.0] {
            let spec = CostSpec::new(gamma, 2.0).unwrap();
            let p = EmpiricalMeasure::uniform(&[bv("0000")]).unwrap();
            let q = EmpiricalMeasure::uniform(&[bv("1110")]).unwrap();
            let t = sinkhorn(&p, &q, &spec, 1e-9, 100).unwrap();
            assert!((t.distance - 1.5).abs() < 1e-12, "gamma={gamma}: {}", t.distance);
            assert_eq!(t.alpha_star, vec![0.0]);
            assert_eq!(smoothed_w_distance(&p, &p, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn identical_symmetric_measures() {
        // the full 3-cube: every point looks the same, so α* is constant → 0
        let cube: Vec<BitVector> = (0..8).map(|i| BitVector::from_index(i, 3)).collect();
        let p = EmpiricalMeasure::uniform(&cube).unwrap();
        let spec = CostSpec::new(0.1, mean_pairwise_hamming(&p).unwrap()).unwrap();
        let t = sinkhorn(&p, &p, &spec, 1e-10, 10_000).unwrap();
        assert!(t.alpha_star.iter().all(|a| a.abs() < 1e-6), "{:?}", t.alpha_star);
        assert!(t.distance <= 0.0);
        assert!(t.distance >= -2.0 * 0.1 * (8f64).ln());
    }

    #[test]
    fn marginals_and_centering() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let p = random_measure(&mut rng, 12, 10);
            let q = random_measure(&mut rng, 9, 10);
            let spec = CostSpec::new(0.1, mean_pairwise_hamming(&q).unwrap()).unwrap();
            let t = sinkhorn(&p, &q, &spec, 1e-9, 10_000).unwrap();
            let cost = cost_matrix(&p, &q, &spec).unwrap();
            let plan = t.plan(&cost);
            for i in 0..plan.rows {
                let r: f64 = plan.row(i).iter().sum();
                assert!((r - p.weights()[i]).abs() <= 1e-9);
            }
            for j in 0..plan.cols {
                let c: f64 = (0..plan.rows).map(|i| plan.get(i, j)).sum();
                assert!((c - q.weights()[j]).abs() <= 1e-12);
            }
            let mean: f64 = p.weights().iter().zip(&t.alpha_star).map(|(w, a)| w * a).sum();
            assert!(mean.abs() < 1e-10);
            let dual = dual_objective(&p, &q, &t.alpha_star, &t.beta_star, &spec).unwrap();
            assert!((dual - t.distance).abs() < 1e-8, "{dual} vs {}", t.distance);
        }
    }

    #[test]
    fn weak_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_measure(&mut rng, 6, 6);
        let q = random_measure(&mut rng, 6, 6);
        let spec = CostSpec::new(0.1, 1.0).unwrap();
        let t = sinkhorn(&p, &q, &spec, 1e-10, 10_000).unwrap();
        for _ in 0..50 {
            let a: Vec<f64> = (0..p.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..q.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(dual_objective(&p, &q, &a, &b, &spec).unwrap() <= t.distance + 1e-9);
        }
        // zero potentials against huge costs
        let far_p = EmpiricalMeasure::uniform(&[bv("0000000000")]).unwrap();
        let far_q = EmpiricalMeasure::uniform(&[bv("1111111111")]).unwrap();
        let v = dual_objective(&far_p, &far_q, &[0.0], &[0.0], &spec).unwrap();
        assert!(v <= 0.0 && v > -1e-40);
    }

    #[test]
    fn scaling_and_log_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let p = random_measure(&mut rng, 15, 12);
            let q = random_measure(&mut rng, 11, 12);
            let spec = CostSpec::new(0.2, mean_pairwise_hamming(&q).unwrap()).unwrap();
            let cost = cost_matrix(&p, &q, &spec).unwrap();
            let run = |log| {
                let opts = SinkhornOptions {
                    tol: 1e-12,
                    log_domain: Some(log),
                    ..Default::default()
                };
                sinkhorn_cost(&cost, p.weights(), q.weights(), spec.gamma, &opts).unwrap()
            };
            let (a, b) = (run(false), run(true));
            assert!(!a.log_domain && b.log_domain);
            assert!((a.distance - b.distance).abs() < 1e-8);
            for (x, y) in a.alpha_star.iter().zip(&b.alpha_star) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn underflowing_kernel_switches_to_log_domain() {
        let p = EmpiricalMeasure::uniform(&[bv("0000"), bv("1111")]).unwrap();
        let q = EmpiricalMeasure::uniform(&[bv("0011"), bv("1100")]).unwrap();
        // D/γ = 2/0.001 · … far past exp underflow
        let spec = CostSpec::new(0.06, 0.01).unwrap();
        let t = sinkhorn(&p, &q, &spec, 1e-8, 10_000).unwrap();
        assert!(t.log_domain);
        assert!(t.distance.is_finite());
    }

    #[test]
    fn warm_start_does_not_change_the_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = random_measure(&mut rng, 20, 10);
        let q = random_measure(&mut rng, 20, 10);
        let spec = CostSpec::new(0.1, mean_pairwise_hamming(&q).unwrap()).unwrap();
        let cost = cost_matrix(&p, &q, &spec).unwrap();
        let cold = sinkhorn_cost(&cost, p.weights(), q.weights(), 0.1, &SinkhornOptions::default()).unwrap();
        let opts = SinkhornOptions {
            warm_start: Some(cold.potentials()),
            ..Default::default()
        };
        let warm = sinkhorn_cost(&cost, p.weights(), q.weights(), 0.1, &opts).unwrap();
        assert!(warm.iterations <= 1);
        assert!((warm.distance - cold.distance).abs() < 1e-6);
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_measure(&mut rng, 10, 8);
        let q = random_measure(&mut rng, 10, 8);
        let spec = CostSpec::new(0.1, 1.0).unwrap();
        match sinkhorn(&p, &q, &spec, 1e-14, 2) {
            Err(Error::SinkhornNotConverged { marginal_err, .. }) => assert!(marginal_err > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_measure(&mut rng, 8, 7);
        let q = random_measure(&mut rng, 6, 7);
        let spec = CostSpec::new(0.1, 1.7).unwrap();
        let t = sinkhorn(&p, &q, &spec, 1e-11, 10_000).unwrap();
        let perm: Vec<usize> = vec![3, 0, 7, 5, 1, 6, 2, 4];
        let pp = EmpiricalMeasure::weighted(
            perm.iter().map(|&i| p.support()[i].clone()).collect(),
            perm.iter().map(|&i| p.weights()[i]).collect(),
        )
        .unwrap();
        let tp = sinkhorn(&pp, &q, &spec, 1e-11, 10_000).unwrap();
        assert!((t.distance - tp.distance).abs() < 1e-10);
        for (k, &i) in perm.iter().enumerate() {
            assert!((tp.alpha_star[k] - t.alpha_star[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_bundle_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = EmpiricalMeasure::uniform(&[bv("00"), bv("11")]).unwrap();
        let spec = CostSpec::new(0.1, 1.0).unwrap();
        let cost = cost_matrix(&p, &p, &spec).unwrap();
        let t = sinkhorn(&p, &p, &spec, 1e-9, 100).unwrap();
        t.dump_csv_bundle(&cost, dir.path()).unwrap();
        for f in ["cost.csv", "u.csv", "v.csv", "alpha.csv", "summary.csv"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
