//! Hyperparameter grid over `(λ, η)` with holdout validation.
//!
//! Pretraining does not depend on `λ`, so each `η` row is pretrained once and
//! every `λ` cell finetunes a copy. All cells share the base seed, which
//! makes the `λ = ∞` column identical to a separately trained baseline.

use serde::Serialize;

use super::{finetune, pretrain, Lambda, TrainConfig, TrainedModel};
use crate::dataset::{BinaryDataset, Split};
use crate::evaluation::{ais_log_z, kl_estimate, wgamma_eval};
use crate::ot::{mean_pairwise_hamming, CostSpec};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSettings {
    pub ais_runs: usize,
    pub ais_temps: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            ais_runs: 100,
            ais_temps: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub lambda: Lambda,
    pub eta: f64,
    pub kl_validation: Option<f64>,
    pub kl_se: Option<f64>,
    pub wgamma_validation: Option<f64>,
    /// Why the cell produced no model, if it failed.
    pub error: Option<String>,
    pub model: Option<TrainedModel>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index of the successful cell with the lowest validation KL.
    pub best_kl: Option<usize>,
    /// Index of the successful cell with the lowest validation `W_γ`.
    pub best_wgamma: Option<usize>,
}

fn argmin(cells: &[GridCell], key: impl Fn(&GridCell) -> Option<f64>) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| key(c).filter(|v| v.is_finite()).map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Validation KL (by AIS) and `W_γ` of a trained model.
pub fn validate_model(
    model: &TrainedModel,
    dataset: &BinaryDataset,
    gamma: f64,
    eval: &EvalSettings,
) -> Result<(f64, f64, f64)> {
    let train = dataset.measure(Split::Train)?;
    let valid = dataset.measure(Split::Valid)?;
    let ais = ais_log_z(&model.params, eval.ais_runs, eval.ais_temps, eval.seed)?;
    let kl = kl_estimate(&model.params, &valid, &ais)?;
    let spec = CostSpec::new(gamma, mean_pairwise_hamming(&train)?)?;
    let w = wgamma_eval(&model.pcd, &valid, &spec)?;
    Ok((kl, ais.se, w))
}

/// Trains and validates one model per `(η, λ)` cell, row-major in `eta`.
/// Cell failures are recorded and do not stop the grid.
pub fn grid_search(
    base: &TrainConfig,
    dataset: &BinaryDataset,
    etas: &[f64],
    lambdas: &[Lambda],
    eval: &EvalSettings,
) -> Result<GridResult> {
    if etas.is_empty() || lambdas.is_empty() {
        return Err(crate::Error::invalid("empty hyperparameter grid"));
    }
    let rows = dataset.split(Split::Train);
    let mut cells = Vec::with_capacity(etas.len() * lambdas.len());
    for &eta in etas {
        let pre_cfg = TrainConfig { eta, ..base.clone() };
        let pre = pretrain(&pre_cfg, &rows);
        for &lambda in lambdas {
            let cfg = TrainConfig { lambda, ..pre_cfg.clone() };
            let outcome = pre
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|p| finetune(&cfg, &rows, p.clone()).map_err(|e| e.to_string()))
                .and_then(|m| {
                    validate_model(&m, dataset, cfg.gamma, eval)
                        .map(|v| (m, v))
                        .map_err(|e| e.to_string())
                });
            cells.push(match outcome {
                Ok((m, (kl, se, w))) => GridCell {
                    lambda,
                    eta,
                    kl_validation: Some(kl),
                    kl_se: Some(se),
                    wgamma_validation: Some(w),
                    error: None,
                    model: Some(m),
                },
                Err(e) => GridCell {
                    lambda,
                    eta,
                    kl_validation: None,
                    kl_se: None,
                    wgamma_validation: None,
                    error: Some(e),
                    model: None,
                },
            });
        }
    }
    Ok(GridResult {
        best_kl: argmin(&cells, |c| c.kl_validation),
        best_wgamma: argmin(&cells, |c| c.wgamma_validation),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitVector;
    use crate::dataset::split_three_way;
    use crate::training::train;

    fn dataset() -> BinaryDataset {
        let rows = (0..60)
            .map(|k| BitVector::from_bits(&(0..8).map(|i| ((i < 4) == (k % 2 == 0)) as u8 ^ ((k * 7 + i) % 11 == 0) as u8).collect::<Vec<_>>()))
            .collect();
        split_three_way(rows, 1).unwrap()
    }

    fn base() -> TrainConfig {
        TrainConfig {
            hidden: 4,
            steps_pretrain: 30,
            steps_main: 10,
            seed: 2,
            ..Default::default()
        }
    }

    fn eval() -> EvalSettings {
        EvalSettings {
            ais_runs: 10,
            ais_temps: 50,
            seed: 0,
        }
    }

    #[test]
    fn single_cell_grid() {
        let ds = dataset();
        let g = grid_search(&base(), &ds, &[1e-3], &[Lambda::Finite(1.0)], &eval()).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.best_kl, Some(0));
        assert_eq!(g.best_wgamma, Some(0));
        let m = train(
            &TrainConfig {
                eta: 1e-3,
                lambda: Lambda::Finite(1.0),
                ..base()
            },
            &ds.split(Split::Train),
        )
        .unwrap();
        assert_eq!(g.cells[0].model.as_ref().unwrap(), &m);
    }

    #[test]
    fn infinite_lambda_column_is_the_baseline() {
        let ds = dataset();
        let g = grid_search(&base(), &ds, &[1e-4, 1e-2], &[Lambda::Finite(0.1), Lambda::Infinite], &eval()).unwrap();
        assert_eq!(g.cells.len(), 4);
        for c in g.cells.iter().filter(|c| c.lambda.is_infinite()) {
            let baseline = train(
                &TrainConfig {
                    eta: c.eta,
                    lambda: Lambda::Infinite,
                    ..base()
                },
                &ds.split(Split::Train),
            )
            .unwrap();
            assert_eq!(c.model.as_ref().unwrap(), &baseline);
        }
    }

    #[test]
    fn failing_cells_are_recorded() {
        let ds = dataset();
        let cfg = TrainConfig {
            lr_main: 1e12,
            ..base()
        };
        let g = grid_search(&cfg, &ds, &[1e-3], &[Lambda::Finite(0.0), Lambda::Infinite], &eval()).unwrap();
        assert!(g.cells.iter().any(|c| c.error.is_some()));
        assert!(g.cells.iter().all(|c| c.error.is_some() == c.model.is_none()));
    }
}
