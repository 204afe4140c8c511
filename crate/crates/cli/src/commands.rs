use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use wrbm_core::dataset::{ingest_bit_rows, ingest_mnist, ingest_plants, read_maybe_gzip};
use wrbm_core::evaluation::{ais_log_z, kl_estimate, pca_project, wgamma_eval};
use wrbm_core::ot::mean_pairwise_hamming;
use wrbm_core::rbm::{load_checkpoint, load_pcd, save_checkpoint, save_pcd, Checkpoint};
use wrbm_core::tasks::{kde_sigma_grid, reports_to_csv, run_task_suite, select_kde, MaskSampler, TaskSettings};
use wrbm_core::training::{grid_search, train, EvalSettings};
use wrbm_core::{BinaryDataset, CostSpec, ScorableModel, Split, TrainedModel};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::output::{pgm_grid, sha256_hex, write_bytes, write_csv, write_json, Provenance};

pub const DATASET_FILE: &str = "dataset.bin";
pub const MODEL_FILE: &str = "model.ckpt";
pub const PCD_FILE: &str = "pcd.bin";
pub const LOG_FILE: &str = "log.jsonl";

fn load_dataset(cfg: &ExperimentConfig) -> Result<BinaryDataset> {
    let path = cfg.out.join(DATASET_FILE);
    if !path.is_file() {
        bail!("dataset not found at {}; run `wrbm ingest` first", path.display());
    }
    Ok(BinaryDataset::load(&path)?)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn ingest(cfg: &ExperimentConfig) -> Result<Value> {
    cfg.validate_inputs()?;
    let prov = cfg.provenance();
    let mut report = serde_json::Map::new();
    let dataset = match &cfg.dataset {
        DatasetConfig::Mnist {
            images,
            labels,
            digit,
            subsample,
        } => {
            let images = read_maybe_gzip(images)?;
            let labels = read_maybe_gzip(labels)?;
            let ing = ingest_mnist(&images, &labels, *digit, cfg.seed)?;
            report.insert("digit".into(), json!(ing.digit));
            report.insert("total_images".into(), json!(ing.total_images));
            report.insert("class_count".into(), json!(ing.class_count));
            report.insert("thresholds".into(), json!(ing.thresholds));
            report.insert("subsample".into(), json!(subsample));
            match subsample {
                Some(n) => ing.dataset.subsample(*n, cfg.seed)?,
                None => ing.dataset,
            }
        }
        DatasetConfig::Plants { path } => ingest_plants(&read_text(path)?, cfg.seed)?,
        DatasetConfig::Bits { path, width, height } => {
            let shape = width.zip(*height);
            ingest_bit_rows(&read_text(path)?, cfg.seed, shape)?
        }
    };
    let bytes = dataset.to_bytes();
    write_bytes(&cfg.out.join(DATASET_FILE), &bytes)?;
    report.insert("source".into(), json!(dataset.source));
    report.insert("rows".into(), json!(dataset.len()));
    report.insert("dim".into(), json!(dataset.dim));
    report.insert("split_sizes".into(), json!(dataset.split_sizes()));
    report.insert("image_shape".into(), json!(dataset.image_shape));
    report.insert("dataset_sha256".into(), json!(sha256_hex(&bytes)));
    let report = prov.stamp(Value::Object(report));
    write_json(&cfg.out.join("ingest_report.json"), &report)?;
    Ok(report)
}

/// Writes `model.ckpt`, `log.jsonl` and, when asked, `pcd.bin` into `dir`.
/// A stale chain file from an earlier run is removed otherwise.
fn save_model(dir: &Path, model: &TrainedModel, metadata: Value, prov: &Provenance, retain_pcd: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_checkpoint(
        &dir.join(MODEL_FILE),
        &Checkpoint {
            params: model.params.clone(),
            metadata: prov.stamp(metadata),
        },
    )?;
    let header = prov.stamp(json!({ "record": "header", "steps": model.log.len() }));
    write_bytes(&dir.join(LOG_FILE), format!("{header}\n{}", model.log_jsonl()).as_bytes())?;
    let pcd_path = dir.join(PCD_FILE);
    if retain_pcd {
        save_pcd(&pcd_path, &model.pcd)?;
    } else if pcd_path.exists() {
        fs::remove_file(&pcd_path).with_context(|| format!("removing stale {}", pcd_path.display()))?;
    }
    Ok(())
}

fn dataset_digest(ds: &BinaryDataset) -> String {
    sha256_hex(&ds.to_bytes())
}

pub fn train_cmd(cfg: &ExperimentConfig, retain_pcd: bool) -> Result<Value> {
    let ds = load_dataset(cfg)?;
    let model = train(&cfg.train, &ds.split(Split::Train))?;
    let last = model.log.last().map(|r| serde_json::to_value(r).expect("record serializes"));
    let meta = json!({
        "train": cfg.train,
        "dataset_sha256": dataset_digest(&ds),
        "final_record": last,
    });
    let dir = cfg.out.join("train");
    save_model(&dir, &model, meta.clone(), &cfg.provenance(), retain_pcd)?;
    Ok(json!({ "checkpoint": dir.join(MODEL_FILE), "retained_pcd": retain_pcd, "final_record": meta["final_record"] }))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn grid_cmd(cfg: &ExperimentConfig, retain_pcd: bool) -> Result<Value> {
    let prov = cfg.provenance();
    let ds = load_dataset(cfg)?;
    let eval = EvalSettings {
        ais_runs: cfg.eval.ais_runs,
        ais_temps: cfg.eval.ais_temps,
        seed: cfg.seed,
    };
    let result = grid_search(&cfg.train, &ds, &cfg.grid.etas, &cfg.grid.lambdas, &eval)?;
    let digest = dataset_digest(&ds);
    let mut csv = String::from("lambda,eta,kl_validation,wgamma_validation,checkpoint_path\n");
    let mut cells = Vec::new();
    for cell in &result.cells {
        let rel = PathBuf::from("grid").join("cells").join(format!("eta={}_lambda={}", cell.eta, cell.lambda));
        let checkpoint = match &cell.model {
            Some(model) => {
                let train_cfg = wrbm_core::TrainConfig {
                    eta: cell.eta,
                    lambda: cell.lambda,
                    ..cfg.train.clone()
                };
                let meta = json!({ "train": train_cfg, "dataset_sha256": digest });
                save_model(&cfg.out.join(&rel), model, meta, &prov, retain_pcd)?;
                rel.join(MODEL_FILE).display().to_string()
            }
            None => {
                eprintln!(
                    "grid cell eta={} lambda={} failed: {}",
                    cell.eta,
                    cell.lambda,
                    cell.error.as_deref().unwrap_or("unknown error")
                );
                String::new()
            }
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            cell.lambda,
            cell.eta,
            fmt_opt(cell.kl_validation),
            fmt_opt(cell.wgamma_validation),
            checkpoint
        ));
        cells.push(json!({
            "lambda": cell.lambda,
            "eta": cell.eta,
            "kl_validation": cell.kl_validation,
            "kl_se": cell.kl_se,
            "wgamma_validation": cell.wgamma_validation,
            "checkpoint": (!checkpoint.is_empty()).then_some(checkpoint),
            "error": cell.error,
        }));
    }
    write_csv(&cfg.out.join("grid").join("contour.csv"), &prov, &csv)?;
    let pick = |i: Option<usize>| i.map(|i| cells[i].clone());
    let summary = prov.stamp(json!({
        "best_kl": pick(result.best_kl),
        "best_wgamma": pick(result.best_wgamma),
        "failed": result.cells.iter().filter(|c| c.error.is_some()).count(),
        "cells": cells,
    }));
    write_json(&cfg.out.join("grid").join("summary.json"), &summary)?;
    Ok(summary)
}

/// Locations of a trained model and its retained chains.
#[derive(Debug, Clone)]
pub struct ModelPaths {
    pub checkpoint: PathBuf,
    pub pcd: PathBuf,
}

impl ModelPaths {
    pub fn default_for(cfg: &ExperimentConfig) -> Self {
        Self::beside(cfg.out.join("train").join(MODEL_FILE))
    }

    /// The chain file sits next to the checkpoint.
    pub fn beside(checkpoint: PathBuf) -> Self {
        let pcd = checkpoint.with_file_name(PCD_FILE);
        ModelPaths { checkpoint, pcd }
    }
}

fn read_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let digest = sha256_hex(&bytes);
    Ok((load_checkpoint(path)?, digest))
}

pub fn eval_cmd(cfg: &ExperimentConfig, paths: &ModelPaths) -> Result<Value> {
    let prov = cfg.provenance();
    let ds = load_dataset(cfg)?;
    let (ckpt, ckpt_digest) = read_checkpoint(&paths.checkpoint)?;
    if !paths.pcd.is_file() {
        bail!(
            "no persistent chain sample at {}; train with --retain-pcd to keep it",
            paths.pcd.display()
        );
    }
    let pcd = load_pcd(&paths.pcd)?;
    let params = &ckpt.params;
    if params.d != ds.dim {
        bail!("checkpoint has {} visible units but the dataset rows have {} bits", params.d, ds.dim);
    }
    let split = cfg.eval.split;
    let target = ds.measure(split)?;
    let ais = ais_log_z(params, cfg.eval.ais_runs, cfg.eval.ais_temps, cfg.seed)?;
    let kl = kl_estimate(params, &target, &ais)?;
    let spec = CostSpec::new(cfg.train.gamma, mean_pairwise_hamming(&ds.measure(Split::Train)?)?)?;
    let wgamma = wgamma_eval(&pcd, &target, &spec)?;
    let pca = pca_project(&ds.split(split), &pcd.visible())?;

    let dir = cfg.out.join("eval");
    let metrics = prov.stamp(json!({
        "checkpoint_sha256": ckpt_digest,
        "split": split,
        "log_z": ais.log_z,
        "log_z_se": ais.se,
        "kl": kl,
        "wgamma": wgamma,
        "gamma": cfg.train.gamma,
        "pcd_size": pcd.len(),
        "pca_explained_ratio": pca.explained_ratio,
    }));
    write_json(&dir.join("metrics.json"), &metrics)?;
    let mut ais_report = ais.report();
    ais_report["log_weights"] = json!(ais.log_weights);
    write_json(&dir.join("ais.json"), &prov.stamp(ais_report))?;
    write_csv(&dir.join("pca.csv"), &prov, &pca.to_csv())?;
    if let Some((w, h)) = ds.image_shape {
        let pgm = pgm_grid(&pcd.visible(), w, h, 10, 10, &prov)?;
        write_bytes(&dir.join("samples.pgm"), &pgm)?;
    }
    Ok(metrics)
}

/// Parses `name=path` or a bare path named after its position.
pub fn parse_model_arg(arg: &str, index: usize) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !name.contains(['/', '\\']) => (name.to_string(), PathBuf::from(path)),
        _ => (format!("rbm{index}"), PathBuf::from(arg)),
    }
}

pub fn tasks_cmd(cfg: &ExperimentConfig, models: &[(String, PathBuf)]) -> Result<Value> {
    let prov = cfg.provenance();
    let ds = load_dataset(cfg)?;
    let t = &cfg.tasks;
    let default = [("rbm".to_string(), ModelPaths::default_for(cfg).checkpoint)];
    let models = if models.is_empty() { &default[..] } else { models };

    let mut loaded = Vec::new();
    for (name, path) in models {
        if name == "kde" && t.kde {
            bail!("model name `kde` is reserved for the kernel density baseline");
        }
        let (ckpt, digest) = read_checkpoint(path)?;
        loaded.push((name.clone(), ckpt.params, digest));
    }
    let mut scorable: Vec<(&str, &dyn ScorableModel)> = Vec::new();
    let kde = if t.kde {
        let train_rows = ds.split(Split::Train);
        Some(select_kde(&train_rows, &ds.measure(Split::Valid)?, &kde_sigma_grid())?)
    } else {
        None
    };
    if let Some((k, _)) = &kde {
        scorable.push(("kde", k));
    }
    for (name, params, _) in &loaded {
        scorable.push((name, params));
    }

    let sampler = match ds.image_shape {
        Some((width, height)) => MaskSampler::ImagePatch {
            width,
            height,
            completion_patch: t.completion_patch,
            denoising_patches: t.denoising_patches.clone(),
        },
        None => MaskSampler::RandomSubset {
            d: ds.dim,
            k_completion: t.k_completion,
            k_denoising: t.k_denoising,
        },
    };
    let test = ds.split(Split::Test);
    let mut reports = Vec::new();
    for &kind in &t.kinds {
        let settings = TaskSettings {
            kind,
            l: t.l,
            n_examples: t.n_examples,
            seed: cfg.seed,
        };
        reports.extend(run_task_suite(&scorable, &test, &sampler, &settings)?);
    }
    let dir = cfg.out.join("tasks");
    write_csv(&dir.join("tasks.csv"), &prov, &reports_to_csv(&reports))?;
    let summaries: Vec<Value> = reports
        .iter()
        .map(|r| {
            let mut s = r.summary();
            s["bias_fraction"] = json!(r.bias_fraction());
            s
        })
        .collect();
    let summary = prov.stamp(json!({
        "models": loaded.iter().map(|(n, _, d)| json!({ "name": n, "checkpoint_sha256": d })).collect::<Vec<_>>(),
        "kde": kde.as_ref().map(|(k, curve)| json!({ "sigma": k.sigma(), "validation_kl": curve })),
        "reports": summaries,
    }));
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
