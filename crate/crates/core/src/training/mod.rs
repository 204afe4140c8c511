//! Two-phase training: KL pretraining, then descent on `W_γ + λ Ω`.
//!
//! Phase 1 minimizes `Ω(θ) = KL(p̂ ‖ p_θ) + η (‖a‖² + ‖W‖²)` from the
//! initialization. Phase 2 follows `∇W_γ + λ ∇Ω` with learning rate
//! `lr_main · min(1, 1/λ)`. `λ = ∞` keeps minimizing `Ω` alone at `lr_main`,
//! which is the standard RBM; `λ = 0` drops `Ω`.
//!
//! Both phases refresh the persistent chains by one Gibbs sweep before each
//! gradient evaluation and use plain SGD on the full training split.

mod gradients;
mod grid;

pub use gradients::{
    exact_wgamma, kl_gradient, kl_gradient_exact, model_measure, omega_gradient_exact, omega_regularizer_gradient,
    wasserstein_gradient, wasserstein_gradient_exact, wasserstein_gradient_on, weighted_free_energy,
    weighted_free_energy_grad, GradStats, ObjectiveTerms,
};
pub use grid::{grid_search, validate_model, EvalSettings, GridCell, GridResult};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::ot::{mean_pairwise_hamming, CostSpec, EmpiricalMeasure, SinkhornOptions};
use crate::rbm::{PcdSample, RbmParams};

/// Weight of the KL regularizer in phase 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Finite(f64),
    Infinite,
}

impl Lambda {
    pub fn is_infinite(self) -> bool {
        matches!(self, Lambda::Infinite)
    }

    pub fn value(self) -> f64 {
        match self {
            Lambda::Finite(v) => v,
            Lambda::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Finite(v) => write!(f, "{v}"),
            Lambda::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Lambda::Infinite);
        }
        let v: f64 = s.parse().map_err(|_| Error::invalid(format!("bad lambda {s:?}")))?;
        Lambda::try_from(v)
    }
}

impl TryFrom<f64> for Lambda {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(Lambda::Infinite)
        } else if v >= 0.0 && v.is_finite() {
            Ok(Lambda::Finite(v))
        } else {
            Err(Error::invalid(format!("lambda must be nonnegative, got {v}")))
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Finite(v) => s.serialize_f64(*v),
            Lambda::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Lambda::try_from(v),
            Raw::Str(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lambda: Lambda,
    pub eta: f64,
    pub hidden: usize,
    pub lr_pretrain: f64,
    /// Base phase-2 rate, scaled by `min(1, 1/λ)`.
    pub lr_main: f64,
    pub steps_pretrain: usize,
    pub steps_main: usize,
    /// Number of persistent chains; `None` means one per training example.
    pub pcd_size: Option<usize>,
    pub seed: u64,
    pub tol_sinkhorn: f64,
    pub max_iter_sinkhorn: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.1,
            lambda: Lambda::Finite(1.0),
            eta: 1e-3,
            hidden: 64,
            lr_pretrain: 0.01,
            lr_main: 0.01,
            steps_pretrain: 3000,
            steps_main: 3000,
            pcd_size: None,
            seed: 0,
            tol_sinkhorn: 1e-6,
            max_iter_sinkhorn: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("gamma", self.gamma)?;
        positive("lr_pretrain", self.lr_pretrain)?;
        positive("lr_main", self.lr_main)?;
        positive("tol_sinkhorn", self.tol_sinkhorn)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if let Lambda::Finite(v) = self.lambda {
            Lambda::try_from(v)?;
        }
        if self.pcd_size.is_some_and(|n| n < 2) {
            return Err(Error::invalid(
                "pcd_size must be at least 2: a single chain gives a zero Wasserstein gradient",
            ));
        }
        if self.max_iter_sinkhorn == 0 {
            return Err(Error::invalid("max_iter_sinkhorn must be positive"));
        }
        Ok(())
    }

    /// Phase-2 step size.
    pub fn finetune_lr(&self) -> f64 {
        match self.lambda {
            Lambda::Infinite => self.lr_main,
            Lambda::Finite(l) => self.lr_main * (1.0 / l).min(1.0),
        }
    }

    fn sinkhorn_options(&self) -> SinkhornOptions {
        SinkhornOptions {
            tol: self.tol_sinkhorn,
            max_iter: self.max_iter_sinkhorn,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub phase: Phase,
    pub step: usize,
    pub wasserstein: Option<f64>,
    pub kl_proxy: Option<f64>,
    pub quad: Option<f64>,
    pub grad_norm_a: f64,
    pub grad_norm_w: f64,
    pub grad_norm_b: f64,
    pub sinkhorn_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: RbmParams,
    pub pcd: PcdSample,
    pub log: Vec<StepRecord>,
}

impl TrainedModel {
    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("log records serialize") + "\n")
            .collect()
    }
}

/// Seed of the chain family, kept apart from the weight-initialization stream.
fn chain_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn bit_means(rows: &[BitVector]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for r in rows {
        for i in r.ones() {
            m[i] += 1.0;
        }
    }
    m.iter().map(|c| c / rows.len() as f64).collect()
}

fn record(phase: Phase, step: usize, g: &GradStats) -> StepRecord {
    let (a, w, b) = g.norms();
    StepRecord {
        phase,
        step,
        wasserstein: g.objective_terms.wasserstein,
        kl_proxy: g.objective_terms.kl_proxy,
        quad: g.objective_terms.quad,
        grad_norm_a: a,
        grad_norm_w: w,
        grad_norm_b: b,
        sinkhorn_iterations: g.sinkhorn_iterations,
    }
}

fn apply(params: &mut RbmParams, g: &GradStats, lr: f64, phase: Phase, step: usize) -> Result<()> {
    if !g.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient at {phase:?} step {step}")));
    }
    for (p, d) in params
        .a
        .iter_mut()
        .chain(params.w.iter_mut())
        .chain(params.b.iter_mut())
        .zip(g.grad_a.iter().chain(&g.grad_w).chain(&g.grad_b))
    {
        *p -= lr * d;
    }
    let m = params.max_abs();
    if m > 1e6 {
        return Err(Error::Numerical(format!(
            "training diverged at {phase:?} step {step}: max |θ| = {m:.3e}"
        )));
    }
    Ok(())
}

fn check_rows(rows: &[BitVector]) -> Result<()> {
    let first = rows.first().ok_or_else(|| Error::invalid("empty training split"))?;
    for r in rows {
        crate::error::check_dim(first.len(), r.len())?;
    }
    Ok(())
}

/// Phase 1: initialize and minimize `Ω` for `steps_pretrain` steps. Depends
/// on `(seed, hidden, eta, lr_pretrain, steps_pretrain, pcd_size)` only.
pub fn pretrain(config: &TrainConfig, train_rows: &[BitVector]) -> Result<TrainedModel> {
    config.validate()?;
    check_rows(train_rows)?;
    let mut params = RbmParams::init(bit_means(train_rows), config.hidden, config.seed)?;
    let n_chains = config.pcd_size.unwrap_or(train_rows.len());
    if n_chains < 2 {
        return Err(Error::invalid("need at least two persistent chains"));
    }
    let starts: Vec<BitVector> = train_rows.iter().cycle().take(n_chains).cloned().collect();
    let mut pcd = PcdSample::from_rows(&starts, config.hidden, chain_seed(config.seed))?;
    let data = EmpiricalMeasure::uniform(train_rows)?;
    let mut log = Vec::with_capacity(config.steps_pretrain + config.steps_main);
    for step in 0..config.steps_pretrain {
        pcd.refresh(&params)?;
        let g = omega_regularizer_gradient(&params, &data, &pcd, config.eta)?;
        log.push(record(Phase::Pretrain, step, &g));
        apply(&mut params, &g, config.lr_pretrain, Phase::Pretrain, step)?;
    }
    Ok(TrainedModel { params, pcd, log })
}

/// Phase 2 from a pretrained model.
pub fn finetune(config: &TrainConfig, train_rows: &[BitVector], start: TrainedModel) -> Result<TrainedModel> {
    config.validate()?;
    check_rows(train_rows)?;
    let TrainedModel { mut params, mut pcd, mut log } = start;
    let data = EmpiricalMeasure::uniform(train_rows)?;
    let lr = config.finetune_lr();
    let spec = match config.lambda {
        Lambda::Infinite => None,
        Lambda::Finite(_) => Some(CostSpec::new(config.gamma, mean_pairwise_hamming(&data)?)?),
    };
    let mut opts = config.sinkhorn_options();
    let mut last_support: Option<Vec<BitVector>> = None;
    for step in 0..config.steps_main {
        pcd.refresh(&params)?;
        let g = match (config.lambda, &spec) {
            (Lambda::Finite(l), Some(spec)) => {
                let model = pcd.measure()?;
                // warm start only when the collapsed support is unchanged
                if last_support.as_deref() != Some(model.support()) {
                    opts.warm_start = None;
                }
                let (mut g, t) = wasserstein_gradient_on(&params, &model, &data, spec, &opts)?;
                opts.warm_start = Some(t.potentials());
                last_support = Some(model.support().to_vec());
                if l > 0.0 {
                    let om = omega_regularizer_gradient(&params, &data, &pcd, config.eta)?;
                    g.add_scaled(l, &om);
                    g.objective_terms.kl_proxy = om.objective_terms.kl_proxy;
                    g.objective_terms.quad = om.objective_terms.quad;
                }
                g
            }
            _ => omega_regularizer_gradient(&params, &data, &pcd, config.eta)?,
        };
        log.push(record(Phase::Finetune, step, &g));
        apply(&mut params, &g, lr, Phase::Finetune, step)?;
    }
    Ok(TrainedModel { params, pcd, log })
}

/// Both phases.
pub fn train(config: &TrainConfig, train_rows: &[BitVector]) -> Result<TrainedModel> {
    let pre = pretrain(config, train_rows)?;
    finetune(config, train_rows, pre)
}
