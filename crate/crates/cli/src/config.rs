//! Experiment configuration files.
//!
//! A config is a TOML file with a top-level `seed` and `out` and the
//! sections `[dataset]`, `[train]`, `[grid]`, `[eval]` and `[tasks]`.
//! Relative paths inside the file resolve against the file's directory.
//!
//! ```toml
//! seed = 7
//! out = "runs/mnist0"
//!
//! [dataset]
//! kind = "mnist"
//! images = "data/train-images-idx3-ubyte.gz"
//! labels = "data/train-labels-idx1-ubyte.gz"
//! digit = 0
//! subsample = 1000
//!
//! [train]
//! gamma = 0.1
//! lambda = 1.0
//! eta = 0.001
//! hidden = 64
//!
//! [grid]
//! etas = [1e-4, 1e-3, 1e-2]
//! lambdas = [0, 0.1, 1, 10, "inf"]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use wrbm_core::tasks::TaskKind;
use wrbm_core::{Lambda, Split, TrainConfig};

use crate::output::{sha256_hex, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX image and label files, optionally gzipped.
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        digit: u8,
        /// Keep this many rows (seeded) before splitting.
        #[serde(default)]
        subsample: Option<usize>,
    },
    /// The PLANTS `name,region,...` file.
    Plants { path: PathBuf },
    /// One row of `0`/`1` characters per line; `width`/`height` mark rows
    /// as images.
    Bits {
        path: PathBuf,
        #[serde(default)]
        width: Option<usize>,
        #[serde(default)]
        height: Option<usize>,
    },
}

impl DatasetConfig {
    fn paths(&self) -> Vec<&Path> {
        match self {
            DatasetConfig::Mnist { images, labels, .. } => vec![images, labels],
            DatasetConfig::Plants { path } | DatasetConfig::Bits { path, .. } => vec![path],
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetConfig::Mnist { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
            DatasetConfig::Plants { path } | DatasetConfig::Bits { path, .. } => fix(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub etas: Vec<f64>,
    pub lambdas: Vec<Lambda>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            etas: vec![1e-4, 1e-3, 1e-2],
            lambdas: vec![
                Lambda::Finite(0.0),
                Lambda::Finite(0.1),
                Lambda::Finite(1.0),
                Lambda::Finite(10.0),
                Lambda::Infinite,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ais_runs: usize,
    pub ais_temps: usize,
    /// Split scored by `eval`.
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ais_runs: 100,
            ais_temps: 1000,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TasksConfig {
    pub kinds: Vec<TaskKind>,
    pub n_examples: usize,
    /// Flipped bits per denoising example.
    pub l: usize,
    /// Include the kernel density baseline.
    pub kde: bool,
    /// `(rows, cols)` patch shapes, used when the dataset rows are images.
    pub completion_patch: (usize, usize),
    pub denoising_patches: Vec<(usize, usize)>,
    /// Subset sizes, used otherwise.
    pub k_completion: usize,
    pub k_denoising: usize,
}

impl Default for TasksConfig {
    fn default() -> Self {
        TasksConfig {
            kinds: vec![TaskKind::Completion, TaskKind::Denoising],
            n_examples: 100,
            l: 4,
            kde: true,
            completion_patch: (3, 3),
            denoising_patches: vec![(4, 3), (3, 4)],
            k_completion: 9,
            k_denoising: 12,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    /// Its `seed` is always the top-level one.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub tasks: TasksConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// `[train]` keys must name `TrainConfig` fields; serde alone would drop
/// typos silently since the struct fills defaults.
fn check_train_keys(doc: &toml::Table) -> Result<()> {
    let Some(train) = doc.get("train") else {
        return Ok(());
    };
    let table = train.as_table().context("[train] must be a table")?;
    let known: BTreeSet<String> = match serde_json::to_value(TrainConfig::default())? {
        serde_json::Value::Object(m) => m.keys().cloned().collect(),
        _ => unreachable!("TrainConfig serializes to an object"),
    };
    for key in table.keys() {
        if key == "seed" {
            bail!("[train] seed is not allowed: set the top-level `seed`");
        }
        if !known.contains(key) {
            bail!("unknown key `{key}` in [train]");
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let doc: toml::Table = toml::from_str(text).context("invalid TOML")?;
        check_train_keys(&doc)?;
        let mut cfg: ExperimentConfig = doc.try_into().context("invalid experiment config")?;
        cfg.dataset.resolve(base_dir);
        if cfg.out.is_relative() {
            cfg.out = base_dir.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.out = out.clone();
        }
        self.train.seed = self.seed;
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        ensure!(!self.grid.etas.is_empty() && !self.grid.lambdas.is_empty(), "grid etas and lambdas must be non-empty");
        for &eta in &self.grid.etas {
            ensure!(eta >= 0.0 && eta.is_finite(), "grid eta must be nonnegative, got {eta}");
        }
        ensure!(self.eval.ais_runs >= 1 && self.eval.ais_temps >= 1, "AIS needs ais_runs >= 1 and ais_temps >= 1");
        let t = &self.tasks;
        ensure!(!t.kinds.is_empty(), "tasks.kinds must be non-empty");
        ensure!(t.n_examples >= 1, "tasks.n_examples must be at least 1");
        ensure!(t.k_completion >= 1 && t.k_denoising >= 1, "task subset sizes must be positive");
        ensure!(t.l <= t.k_denoising, "tasks.l = {} exceeds k_denoising = {}", t.l, t.k_denoising);
        for &(r, c) in &t.denoising_patches {
            ensure!(t.l <= r * c, "tasks.l = {} exceeds the {r}x{c} denoising patch", t.l);
        }
        match &self.dataset {
            DatasetConfig::Mnist { digit, subsample, .. } => {
                ensure!(*digit <= 9, "dataset.digit must be 0..=9, got {digit}");
                ensure!(subsample.is_none_or(|n| n >= 3), "dataset.subsample must be at least 3");
            }
            DatasetConfig::Bits { width, height, .. } => {
                ensure!(width.is_some() == height.is_some(), "set both dataset.width and dataset.height or neither");
            }
            DatasetConfig::Plants { .. } => {}
        }
        Ok(())
    }

    /// Raw inputs exist; checked before ingestion.
    pub fn validate_inputs(&self) -> Result<()> {
        for p in self.dataset.paths() {
            ensure!(p.is_file(), "dataset file not found: {}", p.display());
        }
        Ok(())
    }

    /// SHA-256 of the effective config without the output directory, so a
    /// run reproduced elsewhere carries the same hash.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("out");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config_hash(),
            seed: self.seed,
        }
    }
}
