//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Oracles here are computed from first principles (brute-force sums over
//! visible and hidden states, a plain Sinkhorn loop, LP vertex enumeration)
//! rather than through the library routines under test.
//!
//! By default the process exits 0 once every criterion has been run, so a
//! failing desk-scale replication is reported without breaking
//! `cargo test`. Set `WRBM_ACCEPTANCE_STRICT=1` to exit 1 on any FAIL.
//! MNIST is read from `WRBM_MNIST_DIR`, else `<workspace>/data/mnist`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wrbm_core::dataset::{ingest_mnist, read_maybe_gzip, split_three_way};
use wrbm_core::evaluation::{ais_log_z, wgamma_eval};
use wrbm_core::ot::{mean_pairwise_hamming, sinkhorn, SinkhornOptions};
use wrbm_core::tasks::{
    completion_posterior, denoising_posterior, posterior_score, run_task_suite, MaskSampler, MaskSpec, TaskKind,
    TaskSettings,
};
use wrbm_core::training::{finetune, kl_gradient_exact, pretrain, wasserstein_gradient_exact};
use wrbm_core::{
    BinaryDataset, BitVector, CostSpec, EmpiricalMeasure, Lambda, RbmParams, ScorableModel, Split, TrainConfig,
    TrainedModel,
};

type Outcome = Result<String, String>;

fn random_params(d: usize, h: usize, scale: f64, rng: &mut ChaCha8Rng) -> RbmParams {
    let mut p = RbmParams::zeros(d, h);
    for v in p.a.iter_mut().chain(p.w.iter_mut()).chain(p.b.iter_mut()) {
        *v = rng.random_range(-scale..scale);
    }
    p.mu = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
    p.nu = (0..h).map(|_| rng.random_range(0.1..0.9)).collect();
    p
}

fn bits_of(s: u64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (s >> i & 1) as f64).collect()
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−E(x, y)` of the centered energy, written out term by term.
fn neg_energy(p: &RbmParams, x: &[f64], y: &[f64]) -> f64 {
    let xc: Vec<f64> = x.iter().zip(&p.mu).map(|(x, m)| x - m).collect();
    let mut e: f64 = p.a.iter().zip(&xc).map(|(a, v)| a * v).sum();
    for j in 0..p.h {
        let z = p.b[j] + (0..p.d).map(|i| p.w[j * p.d + i] * xc[i]).sum::<f64>();
        e += (y[j] - p.nu[j]) * z;
    }
    e
}

/// `log Σ_y exp(−E(x, y))` by summing over every hidden state.
fn brute_log_marginal(p: &RbmParams, x: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..1u64 << p.h).map(|s| neg_energy(p, x, &bits_of(s, p.h))).collect();
    lse(&terms)
}

fn brute_log_z(p: &RbmParams) -> f64 {
    let terms: Vec<f64> = (0..1u64 << p.d).map(|s| brute_log_marginal(p, &bits_of(s, p.d))).collect();
    lse(&terms)
}

/// `p_θ` over states in binary-counting order.
fn brute_distribution(p: &RbmParams) -> Vec<f64> {
    let logs: Vec<f64> = (0..1u64 << p.d).map(|s| brute_log_marginal(p, &bits_of(s, p.d))).collect();
    let z = lse(&logs);
    logs.iter().map(|l| (l - z).exp()).collect()
}

fn perturbed(p: &RbmParams, k: usize, delta: f64) -> RbmParams {
    let mut q = p.clone();
    let mut theta = q.trainable();
    theta[k] += delta;
    q.set_trainable(&theta);
    q
}

fn rel_err(analytic: f64, fd: f64, floor: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor)
}

/// Smoothed transport value `⟨D⟩_π + γ Σ π log π` by plain Sinkhorn scaling
/// run to machine precision.
fn plain_sinkhorn(cost: &[Vec<f64>], p: &[f64], q: &[f64], gamma: f64) -> f64 {
    let k: Vec<Vec<f64>> = cost.iter().map(|r| r.iter().map(|c| (-c / gamma).exp()).collect()).collect();
    let (n, m) = (p.len(), q.len());
    let (mut u, mut v) = (vec![1.0; n], vec![1.0; m]);
    for _ in 0..200_000 {
        for j in 0..m {
            v[j] = q[j] / (0..n).map(|i| k[i][j] * u[i]).sum::<f64>();
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let row: f64 = (0..m).map(|j| k[i][j] * v[j]).sum();
            err = err.max((u[i] * row - p[i]).abs());
            u[i] = p[i] / row;
        }
        if err < 1e-16 {
            break;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let pi = u[i] * k[i][j] * v[j];
            if pi > 0.0 {
                total += pi * (cost[i][j] + gamma * pi.ln());
            }
        }
    }
    total
}

fn criterion_1() -> Outcome {
    let (d, h, gamma, step) = (4, 3, 0.1, 1e-5);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let states: Vec<BitVector> = (0..1u64 << d).map(|s| BitVector::from_index(s, d)).collect();
    let spec = CostSpec::new(gamma, 2.0).unwrap();
    let cost: Vec<Vec<f64>> = states
        .iter()
        .map(|x| states.iter().map(|y| x.hamming(y) as f64 / spec.normalizer).collect())
        .collect();
    let opts = SinkhornOptions {
        tol: 1e-14,
        max_iter: 1_000_000,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let params = random_params(d, h, 1.0, &mut rng);
        let raw: Vec<f64> = (0..states.len()).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let data = EmpiricalMeasure::weighted(states.clone(), q.clone()).unwrap();
        let (g, _) = wasserstein_gradient_exact(&params, &data, &spec, &opts).map_err(|e| e.to_string())?;
        let w = |p: &RbmParams| plain_sinkhorn(&cost, &brute_distribution(p), &q, gamma);
        for (k, an) in g.flat().into_iter().enumerate() {
            let fd = (w(&perturbed(&params, k, step)) - w(&perturbed(&params, k, -step))) / (2.0 * step);
            worst = worst.max(rel_err(an, fd, 1e-4));
        }
    }
    let msg = format!("max relative error {worst:.2e} over 10 models (< 1e-4)");
    if worst < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_measure(n: usize, d: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
    let mut idx: Vec<u64> = (0..1u64 << d).collect();
    for i in 0..n {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let pts = idx[..n].iter().map(|&k| BitVector::from_index(k, d)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    EmpiricalMeasure::weighted(pts, w.iter().map(|x| x / s).collect()).unwrap()
}

/// Exact transport cost by enumerating basic feasible solutions: every
/// choice of `n + m − 1` cells whose column set is nonsingular for the
/// marginal constraints (one redundant column constraint dropped).
fn lp_by_vertex_enumeration(cost: &[Vec<f64>], p: &[f64], q: &[f64]) -> f64 {
    let (n, m) = (p.len(), q.len());
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let basis = n + m - 1;
    let rhs = DVector::from_iterator(basis, p.iter().chain(&q[..m - 1]).copied());
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..basis).collect();
    loop {
        let a = DMatrix::from_fn(basis, basis, |r, c| {
            let (i, j) = cells[pick[c]];
            let hit = if r < n { i == r } else { j == r - n };
            hit as u8 as f64
        });
        if let Some(x) = a.lu().solve(&rhs) {
            if x.iter().all(|v| *v >= -1e-12) {
                let value: f64 = pick.iter().zip(x.iter()).map(|(&c, v)| cost[cells[c].0][cells[c].1] * v).sum();
                best = best.min(value);
            }
        }
        // Next combination in lexicographic order.
        let mut t = basis;
        while t > 0 && pick[t - 1] == cells.len() - basis + t - 1 {
            t -= 1;
        }
        if t == 0 {
            return best;
        }
        pick[t - 1] += 1;
        for s in t..basis {
            pick[s] = pick[s - 1] + 1;
        }
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let spec = CostSpec::new(0.1, 4.0).unwrap();
    let (mut gap, mut marg): (f64, f64) = (0.0, 0.0);
    for t in 0..20 {
        let (n, m) = if t == 0 { (50, 50) } else { (rng.random_range(2..=50), rng.random_range(2..=50)) };
        let p = random_measure(n, 8, &mut rng);
        let q = random_measure(m, 8, &mut rng);
        let sol = sinkhorn(&p, &q, &spec, 1e-9, 1_000_000).map_err(|e| e.to_string())?;
        let d = |i: usize, j: usize| p.support()[i].hamming(&q.support()[j]) as f64 / spec.normalizer;
        let (mut primal, mut mass) = (0.0, 0.0);
        let (mut rows, mut cols) = (vec![0.0; n], vec![0.0; m]);
        for i in 0..n {
            for j in 0..m {
                let pi = (sol.log_u[i] + sol.log_v[j] - d(i, j) / spec.gamma).exp();
                rows[i] += pi;
                cols[j] += pi;
                mass += pi;
                primal += pi * (d(i, j) + spec.gamma * pi.ln());
            }
        }
        let dual = p.weights().iter().zip(&sol.alpha_star).map(|(w, a)| w * a).sum::<f64>()
            + q.weights().iter().zip(&sol.beta_star).map(|(w, b)| w * b).sum::<f64>()
            - spec.gamma * mass;
        gap = gap.max((dual - primal).abs()).max((sol.distance - primal).abs());
        for (r, w) in rows.iter().zip(p.weights()).chain(cols.iter().zip(q.weights())) {
            marg = marg.max((r - w).abs());
        }
    }

    let small = CostSpec::new(1e-3, 3.0).unwrap();
    let mut lp_gap: f64 = 0.0;
    for _ in 0..10 {
        let p = random_measure(4, 6, &mut rng);
        let q = random_measure(4, 6, &mut rng);
        let sol = sinkhorn(&p, &q, &small, 1e-9, 1_000_000).map_err(|e| e.to_string())?;
        let cost: Vec<Vec<f64>> = p
            .support()
            .iter()
            .map(|x| q.support().iter().map(|y| x.hamming(y) as f64 / small.normalizer).collect())
            .collect();
        let lp = lp_by_vertex_enumeration(&cost, p.weights(), q.weights());
        lp_gap = lp_gap.max((sol.distance - lp).abs());
    }
    let msg = format!(
        "dual-primal gap {gap:.1e} (< 1e-5), marginal error {marg:.1e} (< 1e-6), |W - LP| at gamma=1e-3 {lp_gap:.1e} (< 1e-2)"
    );
    if gap < 1e-5 && marg < 1e-6 && lp_gap < 1e-2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Outcome {
    let (d, h, step) = (3, 2, 1e-5);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let params = random_params(d, h, 1.0, &mut rng);
        let raw: Vec<f64> = (0..1 << d).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let states = (0..1u64 << d).map(|s| BitVector::from_index(s, d)).collect();
        let data = EmpiricalMeasure::weighted(states, q.clone()).unwrap();
        let g = kl_gradient_exact(&params, &data).map_err(|e| e.to_string())?;
        let kl = |p: &RbmParams| {
            let model = brute_distribution(p);
            q.iter().zip(&model).map(|(a, b)| a * (a / b).ln()).sum::<f64>()
        };
        for (k, an) in g.flat().into_iter().enumerate() {
            let fd = (kl(&perturbed(&params, k, step)) - kl(&perturbed(&params, k, -step))) / (2.0 * step);
            worst = worst.max(rel_err(an, fd, 1e-4));
        }
    }
    let msg = format!("max relative error {worst:.2e} over 10 models (< 1e-5)");
    if worst < 1e-5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut hits = 0;
    let mut worst_z: f64 = 0.0;
    for k in 0..20 {
        let params = random_params(6, 4, 1.0, &mut rng);
        let est = ais_log_z(&params, 100, 1000, 4000 + k).map_err(|e| e.to_string())?;
        let z = (est.log_z - brute_log_z(&params)).abs() / est.se;
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            hits += 1;
        }
    }
    let msg = format!("{hits}/20 within 3 SE (need 18), largest deviation {worst_z:.2} SE");
    if hits >= 18 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_bits(d: usize, rng: &mut ChaCha8Rng) -> BitVector {
    BitVector::from_bits(&(0..d).map(|_| rng.random_range(0..2u8)).collect::<Vec<_>>())
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut split_gap, mut brute_gap): (f64, f64) = (0.0, 0.0);
    for n in 0..1000 {
        let d = rng.random_range(4..=10);
        let params = random_params(d, 3, 1.5, &mut rng);
        let x_star = random_bits(d, &mut rng);
        let mut idx: Vec<usize> = (0..d).collect();
        let k = rng.random_range(1..=d.min(8));
        for i in 0..k {
            let j = rng.random_range(i..d);
            idx.swap(i, j);
        }
        idx.truncate(k);
        let denoise = n % 2 == 1;
        let (mask, post, x_in) = if denoise {
            let l = rng.random_range(1..=k);
            let mut x_tilde = x_star.clone();
            let mut order = idx.clone();
            for i in 0..l {
                let j = rng.random_range(i..k);
                order.swap(i, j);
                x_tilde.flip(order[i]);
            }
            let mask = MaskSpec::denoising(idx.clone(), l);
            let post = denoising_posterior(&params, &x_tilde, &mask).map_err(|e| e.to_string())?;
            (mask, post, x_tilde)
        } else {
            let mask = MaskSpec::completion(idx.clone());
            let post = completion_posterior(&params, &x_star, &mask).map_err(|e| e.to_string())?;
            (mask, post, x_star.clone())
        };
        let score = posterior_score(&post, &x_star, &mask).map_err(|e| e.to_string())?;
        split_gap = split_gap.max((score.expected_error - score.bias - score.variance).abs());

        // Every filling of the masked bits, weighted by the brute-force
        // model and restricted to the task's admissible set.
        let mut logs = Vec::new();
        let mut errors = Vec::new();
        for s in 0..1u64 << k {
            let mut x: Vec<f64> = (0..d).map(|i| x_in.get(i) as u8 as f64).collect();
            for (t, &i) in idx.iter().enumerate() {
                x[i] = (s >> t & 1) as f64;
            }
            if denoise {
                let flips = idx.iter().filter(|&&i| (x[i] == 1.0) != x_in.get(i)).count();
                if flips != mask.l {
                    continue;
                }
            }
            logs.push(brute_log_marginal(&params, &x));
            errors.push(idx.iter().filter(|&&i| (x[i] == 1.0) != x_star.get(i)).count() as f64);
        }
        let z = lse(&logs);
        let brute: f64 = logs.iter().zip(&errors).map(|(l, e)| (l - z).exp() * e).sum();
        brute_gap = brute_gap.max((brute - score.expected_error).abs());
    }
    let msg = format!("|E - (bias + variance)| {split_gap:.1e} (< 1e-10), |E - brute force| {brute_gap:.1e} (< 1e-12)");
    if split_gap < 1e-10 && brute_gap < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn two_prototypes() -> BinaryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let protos: Vec<Vec<u8>> = (0..2).map(|_| (0..16).map(|_| rng.random_range(0..2u8)).collect()).collect();
    let rows = (0..600)
        .map(|k| {
            let flipped: Vec<u8> = protos[k % 2].iter().map(|&b| b ^ (rng.random::<f64>() < 0.1) as u8).collect();
            BitVector::from_bits(&flipped)
        })
        .collect();
    split_three_way(rows, 0).unwrap()
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("WRBM_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn read_idx(name: &str) -> Result<Vec<u8>, String> {
    let dir = mnist_dir();
    for candidate in [dir.join(format!("{name}.gz")), dir.join(name)] {
        if candidate.is_file() {
            return read_maybe_gzip(&candidate).map_err(|e| e.to_string());
        }
    }
    Err(format!("MNIST file {name} not found under {}", dir.display()))
}

fn mnist_zero() -> Result<BinaryDataset, String> {
    let images = read_idx("train-images-idx3-ubyte")?;
    let labels = read_idx("train-labels-idx1-ubyte")?;
    Ok(ingest_mnist(&images, &labels, 0, 0).map_err(|e| e.to_string())?.dataset)
}

const FINITE: [f64; 3] = [0.1, 1.0, 10.0];

/// One seed of the λ sweep: a shared pretraining run, then each λ
/// finetuned from it. Returns models and validation `W_γ` in
/// `[0.1, 1, 10, ∞]` order.
fn sweep(ds: &BinaryDataset, cfg: &TrainConfig) -> Result<Vec<(TrainedModel, f64)>, String> {
    let rows = ds.split(Split::Train);
    let spec = CostSpec::new(cfg.gamma, mean_pairwise_hamming(&ds.measure(Split::Train).unwrap()).unwrap()).unwrap();
    let valid = ds.measure(Split::Valid).unwrap();
    let start = pretrain(cfg, &rows).map_err(|e| e.to_string())?;
    FINITE
        .iter()
        .map(|&l| Lambda::Finite(l))
        .chain([Lambda::Infinite])
        .map(|lambda| {
            let m = finetune(&TrainConfig { lambda, ..cfg.clone() }, &rows, start.clone()).map_err(|e| e.to_string())?;
            let w = wgamma_eval(&m.pcd, &valid, &spec).map_err(|e| e.to_string())?;
            Ok((m, w))
        })
        .collect()
}

fn best_finite(runs: &[(TrainedModel, f64)]) -> usize {
    (0..FINITE.len()).min_by(|&a, &b| runs[a].1.total_cmp(&runs[b].1)).unwrap()
}

fn ordering_line(name: &str, seed: u64, runs: &[(TrainedModel, f64)]) -> (bool, String) {
    let b = best_finite(runs);
    let ok = runs[b].1 < runs[3].1;
    (
        ok,
        format!("{name} seed {seed}: best lambda={} W {:.5} vs inf {:.5}", FINITE[b], runs[b].1, runs[3].1),
    )
}

fn synthetic_config(seed: u64) -> TrainConfig {
    TrainConfig {
        eta: 1e-3,
        hidden: 32,
        steps_pretrain: 1000,
        steps_main: 1000,
        lr_pretrain: 0.01,
        lr_main: 0.01,
        seed,
        ..Default::default()
    }
}

fn mnist_config(seed: u64) -> TrainConfig {
    TrainConfig {
        eta: 1e-3,
        hidden: 64,
        steps_pretrain: 3000,
        steps_main: 2000,
        lr_pretrain: 0.05,
        lr_main: 0.1,
        seed,
        ..Default::default()
    }
}

const SEEDS: [u64; 3] = [1, 2, 3];

fn criteria_6_and_7() -> (Outcome, Outcome) {
    let syn = two_prototypes();
    let mut detail = Vec::new();
    let mut syn_wins = 0;
    for seed in SEEDS {
        match sweep(&syn, &synthetic_config(seed)) {
            Ok(runs) => {
                let (ok, line) = ordering_line("synthetic", seed, &runs);
                syn_wins += ok as usize;
                detail.push(line);
            }
            Err(e) => return (Err(e.clone()), Err(e)),
        }
    }
    let mnist = match mnist_zero().and_then(|ds| ds.subsample(1000, 0).map_err(|e| e.to_string())) {
        Ok(ds) => ds,
        Err(e) => {
            let why = format!("MNIST unavailable: {e}");
            return (Err(format!("{}; {why}", detail.join("; "))), Err(why));
        }
    };
    let (w, h) = mnist.image_shape.unwrap();
    let sampler = MaskSampler::image(w, h);
    let test = mnist.split(Split::Test);
    let (mut mnist_wins, mut bias_wins) = (0, 0);
    let mut bias_detail = Vec::new();
    for seed in SEEDS {
        let runs = match sweep(&mnist, &mnist_config(seed)) {
            Ok(r) => r,
            Err(e) => return (Err(e.clone()), Err(e)),
        };
        let (ok, line) = ordering_line("mnist", seed, &runs);
        mnist_wins += ok as usize;
        detail.push(line);

        // The Wasserstein model is the λ picked by validation W_γ.
        let b = best_finite(&runs);
        let models: [(&str, &dyn ScorableModel); 2] = [("wasserstein", &runs[b].0.params), ("standard", &runs[3].0.params)];
        let settings = TaskSettings {
            kind: TaskKind::Completion,
            l: 0,
            n_examples: 100,
            seed,
        };
        match run_task_suite(&models, &test, &sampler, &settings) {
            Ok(reports) => {
                let (fw, fs) = (reports[0].bias_fraction().unwrap(), reports[1].bias_fraction().unwrap());
                bias_wins += (fw > fs) as usize;
                bias_detail.push(format!(
                    "seed {seed}: lambda={} bias fraction {fw:.3} (error {:.3}) vs standard {fs:.3} (error {:.3})",
                    FINITE[b],
                    reports[0].mean_error.unwrap(),
                    reports[1].mean_error.unwrap()
                ));
            }
            Err(e) => return (Err(e.to_string()), Err(e.to_string())),
        }
    }
    let six = format!(
        "synthetic {syn_wins}/3, mnist {mnist_wins}/3 seeds (need 2 each); {}",
        detail.join("; ")
    );
    let seven = format!("{bias_wins}/3 seeds (need 2); {}", bias_detail.join("; "));
    (
        if syn_wins >= 2 && mnist_wins >= 2 { Ok(six) } else { Err(six) },
        if bias_wins >= 2 { Ok(seven) } else { Err(seven) },
    )
}

const PIPELINE_CONFIG: &str = r#"
seed = 9

[dataset]
kind = "bits"
path = "rows.txt"
width = 4
height = 4

[train]
hidden = 6
steps_pretrain = 60
steps_main = 20

[eval]
ais_runs = 20
ais_temps = 100

[tasks]
n_examples = 10
l = 2
completion_patch = [2, 2]
denoising_patches = [[2, 2], [2, 3]]
"#;

fn artifacts(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let rows: String = (0..90)
        .map(|k| {
            let bits: String = (0..16)
                .map(|i| if ((i < 8) == (k % 2 == 0)) ^ (rng.random::<f64>() < 0.1) { '1' } else { '0' })
                .collect();
            bits + "\n"
        })
        .collect();
    fs::write(dir.path().join("rows.txt"), rows).unwrap();
    fs::write(dir.path().join("c.toml"), PIPELINE_CONFIG).unwrap();
    for out in ["run1", "run2"] {
        for cmd in [&["ingest"][..], &["train", "--retain-pcd"], &["eval"], &["tasks"]] {
            let status = Command::new(env!("CARGO_BIN_EXE_wrbm"))
                .current_dir(dir.path())
                .args(cmd)
                .args(["--config", "c.toml", "--out", out])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd:?} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
        }
    }
    let (a, b) = (artifacts(&dir.path().join("run1")), artifacts(&dir.path().join("run2")));
    if a != b {
        return Err(format!("artifact sets differ: {a:?} vs {b:?}"));
    }
    let mut text = 0;
    for f in &a {
        let x = fs::read(dir.path().join("run1").join(f)).unwrap();
        let y = fs::read(dir.path().join("run2").join(f)).unwrap();
        if x != y {
            return Err(format!("{} differs between runs", f.display()));
        }
        if matches!(f.extension().and_then(|e| e.to_str()), Some("csv" | "json" | "jsonl")) {
            text += 1;
        }
    }
    Ok(format!("{} artifacts identical across two runs ({text} CSV/JSON)", a.len()))
}

fn criterion_9() -> Outcome {
    let ds = mnist_zero().map_err(|e| format!("MNIST unavailable: {e}"))?;
    let sizes = ds.split_sizes();
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    let msg = format!("{} rows of width {}, splits {sizes:?}", ds.len(), ds.dim);
    if ds.len() == 5923 && ds.dim == 196 && spread <= 1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let strict = std::env::var("WRBM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{tag} {n} {name} [{secs:.1}s]: {msg}");
    };
    let t = Instant::now();
    report(1, "wasserstein gradient vs finite differences", t, criterion_1());
    let t = Instant::now();
    report(2, "sinkhorn duality, feasibility and LP limit", t, criterion_2());
    let t = Instant::now();
    report(3, "kl gradient vs finite differences", t, criterion_3());
    let t = Instant::now();
    report(4, "ais against exact log Z", t, criterion_4());
    let t = Instant::now();
    report(5, "expected hamming identity", t, criterion_5());
    let t = Instant::now();
    let (six, seven) = criteria_6_and_7();
    report(6, "desk-scale lambda ordering on validation W", t, six);
    report(7, "desk-scale completion bias fraction", t, seven);
    let t = Instant::now();
    report(8, "pipeline determinism", t, criterion_8());
    let t = Instant::now();
    report(9, "mnist-0 ingestion counts", t, criterion_9());
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
