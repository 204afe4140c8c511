//! Completion and denoising by exact enumeration of reconstructions.
//!
//! For a masked subset `h` of `k` bits the posterior over reconstructions is
//! tabulated in full: all `2^k` assignments for completion, or the `C(k, l)`
//! vectors at Hamming distance `l` from the noisy input inside the mask for
//! denoising. The expected Hamming error against the clean example splits
//! exactly into per-bit terms:
//!
//! ```text
//! E[H(x, x*)] = Σ_{i∈h} E[(x_i − x*_i)²] = Σ_{i∈h} (m_i − x*_i)² + Σ_{i∈h} m_i (1 − m_i)
//! ```
//!
//! with `m_i` the posterior mean of bit `i`; the two sums are reported as
//! bias and variance.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{check_dim, Error, Result};
use crate::math::{binomial, for_each_combination, log_sum_exp};
use crate::ot::EmpiricalMeasure;
use crate::rbm::RbmParams;

/// Largest mask accepted by the enumerating posteriors.
pub const MAX_MASK_BITS: usize = 20;

/// Anything that can score a state up to a constant: `log p̃(x)`.
pub trait ScorableModel: Sync {
    fn dim(&self) -> usize;
    fn log_unnormalized(&self, x: &BitVector) -> f64;
}

impl ScorableModel for RbmParams {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_unnormalized(&self, x: &BitVector) -> f64 {
        -self.free_energy(x).expect("state width checked against dim()")
    }
}

/// Gaussian kernel density estimate on the cube. On bits the squared
/// Euclidean distance is the Hamming distance, so
/// `log p̃(x) = log Σ_n exp(−H(x, x_n) / 2σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    points: Vec<BitVector>,
    sigma: f64,
}

impl KdeModel {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `log Σ_x p̃(x)`: every kernel sums to `(1 + e^{−1/2σ²})^d` over the
    /// cube, bit by bit.
    pub fn log_normalizer(&self) -> f64 {
        let d = self.points[0].len() as f64;
        (self.points.len() as f64).ln() + d * (-1.0 / (2.0 * self.sigma * self.sigma)).exp().ln_1p()
    }

    pub fn log_prob(&self, x: &BitVector) -> f64 {
        self.log_unnormalized(x) - self.log_normalizer()
    }
}

impl ScorableModel for KdeModel {
    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn log_unnormalized(&self, x: &BitVector) -> f64 {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let terms: Vec<f64> = self.points.iter().map(|p| -(x.hamming(p) as f64) * inv).collect();
        log_sum_exp(&terms)
    }
}

pub fn kde_model(train: &[BitVector], sigma: f64) -> Result<KdeModel> {
    if train.is_empty() {
        return Err(Error::invalid("KDE needs at least one training point"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    for x in train {
        check_dim(train[0].len(), x.len())?;
    }
    Ok(KdeModel {
        points: train.to_vec(),
        sigma,
    })
}

/// 25 log-spaced bandwidths from 0.1 to 10.
pub fn kde_sigma_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 24.0)).collect()
}

/// `KL(p̂_valid ‖ p_KDE)` with the exact normalizer.
pub fn kde_kl(model: &KdeModel, valid: &EmpiricalMeasure) -> Result<f64> {
    check_dim(model.dim(), valid.dim())?;
    let ll: f64 = valid
        .support()
        .par_iter()
        .zip(valid.weights())
        .map(|(x, w)| w * model.log_prob(x))
        .sum();
    Ok(-valid.entropy() - ll)
}

/// Picks the bandwidth in `grid` minimizing validation KL. Returns the model
/// and the `(sigma, kl)` curve.
pub fn select_kde(train: &[BitVector], valid: &EmpiricalMeasure, grid: &[f64]) -> Result<(KdeModel, Vec<(f64, f64)>)> {
    let curve = grid
        .iter()
        .map(|&s| Ok((s, kde_kl(&kde_model(train, s)?, valid)?)))
        .collect::<Result<Vec<_>>>()?;
    let best = curve
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::invalid("empty bandwidth grid"))?
        .0;
    Ok((kde_model(train, best)?, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Completion,
    Denoising,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Completion => "completion",
            TaskKind::Denoising => "denoising",
        }
    }
}

/// The masked subset and task. `l` is the number of flipped bits (zero for
/// completion).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub hidden_idx: Vec<usize>,
    pub kind: TaskKind,
    pub l: usize,
}

impl MaskSpec {
    pub fn completion(hidden_idx: Vec<usize>) -> Self {
        MaskSpec {
            hidden_idx,
            kind: TaskKind::Completion,
            l: 0,
        }
    }

    pub fn denoising(hidden_idx: Vec<usize>, l: usize) -> Self {
        MaskSpec {
            hidden_idx,
            kind: TaskKind::Denoising,
            l,
        }
    }

    pub fn k(&self) -> usize {
        self.hidden_idx.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k() > MAX_MASK_BITS {
            return Err(Error::TooLarge {
                bits: self.k(),
                limit: MAX_MASK_BITS,
            });
        }
        if self.l > self.k() {
            return Err(Error::invalid(format!("cannot flip {} of {} bits", self.l, self.k())));
        }
        let mut seen = vec![false; d];
        for &i in &self.hidden_idx {
            if i >= d || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("mask index {i} repeated or out of range")));
            }
        }
        Ok(())
    }
}

/// A normalized table of candidate reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub candidates: Vec<BitVector>,
    pub probs: Vec<f64>,
}

fn normalize(model: &dyn ScorableModel, candidates: Vec<BitVector>) -> Posterior {
    let logits: Vec<f64> = candidates.par_iter().map(|x| model.log_unnormalized(x)).collect();
    let lse = log_sum_exp(&logits);
    Posterior {
        probs: logits.iter().map(|l| (l - lse).exp()).collect(),
        candidates,
    }
}

/// `p(h | v)` over all `2^k` fillings of the masked bits. Bit `t` of the
/// table index fills `hidden_idx[t]`.
pub fn completion_posterior(model: &dyn ScorableModel, x_star: &BitVector, mask: &MaskSpec) -> Result<Posterior> {
    check_dim(model.dim(), x_star.len())?;
    mask.validate(x_star.len())?;
    let candidates = (0..1u64 << mask.k())
        .map(|s| {
            let mut x = x_star.clone();
            for (t, &i) in mask.hidden_idx.iter().enumerate() {
                x.set(i, s >> t & 1 == 1);
            }
            x
        })
        .collect();
    Ok(normalize(model, candidates))
}

/// `p(x | v, H(x, x̃) = l)` over the `C(k, l)` candidates differing from
/// `x̃` in exactly `l` masked positions, in lexicographic order of the flipped
/// subsets.
pub fn denoising_posterior(model: &dyn ScorableModel, x_tilde: &BitVector, mask: &MaskSpec) -> Result<Posterior> {
    check_dim(model.dim(), x_tilde.len())?;
    mask.validate(x_tilde.len())?;
    let mut candidates = Vec::with_capacity(binomial(mask.k(), mask.l) as usize);
    for_each_combination(mask.k(), mask.l, |flip| {
        let mut x = x_tilde.clone();
        for &t in flip {
            x.flip(mask.hidden_idx[t]);
        }
        candidates.push(x);
    });
    Ok(normalize(model, candidates))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub expected_error: f64,
    pub bias: f64,
    pub variance: f64,
}

/// Expected Hamming error of the posterior against `x_star` and its per-bit
/// bias/variance split over the mask. Candidates must agree with `x_star`
/// off the mask.
pub fn posterior_score(post: &Posterior, x_star: &BitVector, mask: &MaskSpec) -> Result<Score> {
    let total: f64 = post.probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("posterior sums to {total}, not 1")));
    }
    check_dim(post.candidates.len(), post.probs.len())?;
    let mut expected_error = 0.0;
    let mut m = vec![0.0; mask.k()];
    for (x, &p) in post.candidates.iter().zip(&post.probs) {
        check_dim(x_star.len(), x.len())?;
        expected_error += p * x.hamming(x_star) as f64;
        for (mi, &i) in m.iter_mut().zip(&mask.hidden_idx) {
            if x.get(i) {
                *mi += p;
            }
        }
    }
    let (mut bias, mut variance) = (0.0, 0.0);
    for (mi, &i) in m.iter().zip(&mask.hidden_idx) {
        let target = x_star.get(i) as u8 as f64;
        bias += (mi - target).powi(2);
        variance += mi * (1.0 - mi);
    }
    Ok(Score {
        expected_error,
        bias,
        variance,
    })
}

pub fn completion_score(post: &Posterior, x_star: &BitVector, mask: &MaskSpec) -> Result<Score> {
    posterior_score(post, x_star, mask)
}

pub fn denoising_score(post: &Posterior, x_star: &BitVector, mask: &MaskSpec) -> Result<Score> {
    posterior_score(post, x_star, mask)
}

/// Where masks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSampler {
    /// Rectangular patches in a `width × height` image (row-major pixels).
    /// Completion uses `completion_patch`; denoising picks one of
    /// `denoising_patches` by a fair draw. Patch sizes are `(rows, cols)`.
    ImagePatch {
        width: usize,
        height: usize,
        completion_patch: (usize, usize),
        denoising_patches: Vec<(usize, usize)>,
    },
    /// Uniformly random subsets of the given sizes.
    RandomSubset {
        d: usize,
        k_completion: usize,
        k_denoising: usize,
    },
}

impl MaskSampler {
    /// 3×3 completion, 4×3 or 3×4 denoising patches.
    pub fn image(width: usize, height: usize) -> Self {
        MaskSampler::ImagePatch {
            width,
            height,
            completion_patch: (3, 3),
            denoising_patches: vec![(4, 3), (3, 4)],
        }
    }

    pub fn subsets(d: usize) -> Self {
        MaskSampler::RandomSubset {
            d,
            k_completion: 9,
            k_denoising: 12,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MaskSampler::ImagePatch { width, height, .. } => width * height,
            MaskSampler::RandomSubset { d, .. } => *d,
        }
    }

    pub fn sample(&self, kind: TaskKind, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        match self {
            MaskSampler::ImagePatch {
                width,
                height,
                completion_patch,
                denoising_patches,
            } => {
                let (rows, cols) = match kind {
                    TaskKind::Completion => *completion_patch,
                    TaskKind::Denoising => {
                        if denoising_patches.is_empty() {
                            return Err(Error::invalid("no denoising patch shapes"));
                        }
                        denoising_patches[rng.random_range(0..denoising_patches.len())]
                    }
                };
                if rows == 0 || cols == 0 || rows > *height || cols > *width {
                    return Err(Error::invalid(format!("{rows}x{cols} patch does not fit {width}x{height}")));
                }
                let top = rng.random_range(0..=height - rows);
                let left = rng.random_range(0..=width - cols);
                Ok((top..top + rows)
                    .flat_map(|r| (left..left + cols).map(move |c| r * width + c))
                    .collect())
            }
            MaskSampler::RandomSubset {
                d,
                k_completion,
                k_denoising,
            } => {
                let k = match kind {
                    TaskKind::Completion => *k_completion,
                    TaskKind::Denoising => *k_denoising,
                };
                if k > *d {
                    return Err(Error::invalid(format!("cannot pick {k} of {d} variables")));
                }
                let mut idx = sample(rng, *d, k).into_vec();
                idx.sort_unstable();
                Ok(idx)
            }
        }
    }
}

/// One scored `(example, mask, noise)` instance shared by all models.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub example_id: usize,
    pub x_star: BitVector,
    pub mask: MaskSpec,
    /// The corrupted input (equal to `x_star` for completion).
    pub input: BitVector,
}

/// Draws the instance for test example `example_id` from its own stream of
/// `seed`, so every model sees the same masks and noise.
pub fn make_instance(
    example_id: usize,
    x_star: &BitVector,
    kind: TaskKind,
    l: usize,
    sampler: &MaskSampler,
    seed: u64,
) -> Result<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(example_id as u64);
    let idx = sampler.sample(kind, &mut rng)?;
    let mask = match kind {
        TaskKind::Completion => MaskSpec::completion(idx),
        TaskKind::Denoising => MaskSpec::denoising(idx, l),
    };
    mask.validate(x_star.len())?;
    let mut input = x_star.clone();
    if kind == TaskKind::Denoising {
        for t in sample(&mut rng, mask.k(), l).into_iter() {
            input.flip(mask.hidden_idx[t]);
        }
        debug_assert_eq!(input.hamming(x_star), l);
    }
    Ok(TaskInstance {
        example_id,
        x_star: x_star.clone(),
        mask,
        input,
    })
}

pub fn score_instance(model: &dyn ScorableModel, inst: &TaskInstance) -> Result<Score> {
    let post = match inst.mask.kind {
        TaskKind::Completion => completion_posterior(model, &inst.input, &inst.mask)?,
        TaskKind::Denoising => {
            let post = denoising_posterior(model, &inst.input, &inst.mask)?;
            if !post.candidates.contains(&inst.x_star) {
                return Err(Error::invalid("clean example missing from the denoising candidates"));
            }
            post
        }
    };
    posterior_score(&post, &inst.x_star, &inst.mask)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleScore {
    pub example_id: usize,
    pub mask: Vec<usize>,
    #[serde(flatten)]
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub model: String,
    pub task: TaskKind,
    pub per_example: Vec<ExampleScore>,
    /// `None` when no example was scored.
    pub mean_error: Option<f64>,
    pub mean_bias: Option<f64>,
    pub mean_variance: Option<f64>,
}

impl TaskReport {
    fn new(model: &str, task: TaskKind, per_example: Vec<ExampleScore>) -> Self {
        let n = per_example.len();
        let mean = |f: fn(&Score) -> f64| (n > 0).then(|| per_example.iter().map(|e| f(&e.score)).sum::<f64>() / n as f64);
        TaskReport {
            model: model.to_string(),
            task,
            mean_error: mean(|s| s.expected_error),
            mean_bias: mean(|s| s.bias),
            mean_variance: mean(|s| s.variance),
            per_example,
        }
    }

    /// `mean_bias / mean_error`.
    pub fn bias_fraction(&self) -> Option<f64> {
        match (self.mean_bias, self.mean_error) {
            (Some(b), Some(e)) if e > 0.0 => Some(b / e),
            _ => None,
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "task": self.task,
            "n_examples": self.per_example.len(),
            "mean_error": self.mean_error,
            "mean_bias": self.mean_bias,
            "mean_variance": self.mean_variance,
        })
    }
}

/// CSV rows `model,task,example_id,expected_error,bias,variance,mask` for a
/// set of reports (mask indices joined by `;`).
pub fn reports_to_csv(reports: &[TaskReport]) -> String {
    let mut s = String::from("model,task,example_id,expected_error,bias,variance,mask\n");
    for r in reports {
        for e in &r.per_example {
            let mask: Vec<String> = e.mask.iter().map(usize::to_string).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.model,
                r.task.name(),
                e.example_id,
                e.score.expected_error,
                e.score.bias,
                e.score.variance,
                mask.join(";")
            );
        }
    }
    s
}

/// Task parameters for [`run_task_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSettings {
    pub kind: TaskKind,
    /// Flips for denoising.
    pub l: usize,
    pub n_examples: usize,
    pub seed: u64,
}

/// Scores every model on the first `n_examples` test rows under identical
/// masks and noise.
pub fn run_task_suite(
    models: &[(&str, &dyn ScorableModel)],
    test: &[BitVector],
    sampler: &MaskSampler,
    settings: &TaskSettings,
) -> Result<Vec<TaskReport>> {
    let n = settings.n_examples.min(test.len());
    for (name, m) in models {
        if m.dim() != sampler.dim() {
            return Err(Error::invalid(format!("model {name} has width {}, masks expect {}", m.dim(), sampler.dim())));
        }
    }
    let instances = (0..n)
        .map(|e| make_instance(e, &test[e], settings.kind, settings.l, sampler, settings.seed))
        .collect::<Result<Vec<_>>>()?;
    models
        .iter()
        .map(|(name, model)| {
            let per_example = instances
                .par_iter()
                .map(|inst| {
                    Ok(ExampleScore {
                        example_id: inst.example_id,
                        mask: inst.mask.hidden_idx.clone(),
                        score: score_instance(*model, inst)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TaskReport::new(name, settings.kind, per_example))
        })
        .collect()
}
