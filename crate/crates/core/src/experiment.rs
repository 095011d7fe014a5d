//! Consistency-on versus sparse-only training on one synthetic corpus.
//!
//! Both arms start from the same initial state, see the same batches in the
//! same order, and differ only in the loss: the sparse arm minimizes
//! `α·silog` against LiDAR labels alone, the consistency arm adds the dense
//! SiLog and consistency terms on stereo samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossMode;
use crate::metrics::{render_table, MetricsReport, TableRow};
use crate::simdata::{generate_split, DatasetProfile, LidarPattern, SampleRecord, SimConfig};
use crate::train::{fit, initial_state, with_mode, FitOptions, TrainConfig, TrainData, ValidationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbConfig {
    pub sim: SimConfig,
    pub sparse_profile: DatasetProfile,
    pub dense_profile: DatasetProfile,
    pub train_sparse: usize,
    pub train_dense: usize,
    pub val_sparse: usize,
    pub val_dense: usize,
    pub train: TrainConfig,
    /// Required relative dense-mask RMSE reduction of the consistency arm.
    pub min_dense_rmse_gain: f64,
    /// Allowed relative change in sparse-mask δ₁.
    pub max_sparse_delta1_change: f64,
}

impl Default for AbConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig {
                width: 80,
                height: 80,
                supersample: 2,
                ..SimConfig::default()
            },
            sparse_profile: DatasetProfile {
                lidar_pattern: LidarPattern::desk(),
                ..DatasetProfile::orchard(60.0)
            },
            dense_profile: DatasetProfile {
                lidar_pattern: LidarPattern::desk(),
                ..DatasetProfile::stereo(68.0, 0.2)
            },
            train_sparse: 100,
            train_dense: 100,
            val_sparse: 48,
            val_dense: 48,
            train: TrainConfig::desk(),
            min_dense_rmse_gain: 0.10,
            max_sparse_delta1_change: 0.02,
        }
    }
}

/// Training and validation splits for one seed.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train_dense: Vec<SampleRecord>,
    pub train_sparse: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
}

impl Corpus {
    pub fn generate(cfg: &AbConfig, seed: u64) -> Result<Self> {
        let nd = cfg.train_dense;
        let ns = cfg.train_sparse;
        let train_dense = generate_split(&cfg.sim, &cfg.dense_profile, seed, 0..nd)?;
        let train_sparse = generate_split(&cfg.sim, &cfg.sparse_profile, seed, 0..ns)?;
        let mut val = generate_split(&cfg.sim, &cfg.dense_profile, seed, nd..nd + cfg.val_dense)?;
        val.extend(generate_split(&cfg.sim, &cfg.sparse_profile, seed, ns..ns + cfg.val_sparse)?);
        Ok(Self {
            train_dense,
            train_sparse,
            val,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbRow {
    pub mode: LossMode,
    pub sparse: MetricsReport,
    pub dense: MetricsReport,
    /// Against the exact render depth; informational.
    pub exact: Option<MetricsReport>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbOutcome {
    pub seed: u64,
    pub baseline: AbRow,
    pub consistency: AbRow,
    /// `1 − rmse_on/rmse_off` on the dense mask.
    pub dense_rmse_gain: f64,
    /// `δ₁_on/δ₁_off − 1` on the sparse mask.
    pub sparse_delta1_change: f64,
    pub passed: bool,
}

impl AbOutcome {
    /// Both arms on each validation set, grouped by set.
    pub fn table(&self) -> String {
        let arms = [("silog", &self.baseline), ("consistency", &self.consistency)];
        let mut rows = Vec::new();
        for (name, a) in arms {
            rows.push(TableRow { data: "sparse", label: name, report: &a.sparse });
        }
        for (name, a) in arms {
            rows.push(TableRow { data: "dense", label: name, report: &a.dense });
        }
        for (name, a) in arms {
            if let Some(e) = &a.exact {
                rows.push(TableRow { data: "exact", label: name, report: e });
            }
        }
        render_table(&rows)
    }
}

fn row(mode: LossMode, v: Option<ValidationReport>, final_loss: f64) -> Result<AbRow> {
    let v = v.ok_or_else(|| Error::invalid("no validation report"))?;
    match (v.sparse, v.dense) {
        (Some(sparse), Some(dense)) => Ok(AbRow {
            mode,
            sparse,
            dense,
            exact: v.exact,
            final_loss,
        }),
        _ => Err(Error::EmptyOverlap("validation split has no valid pixels".into())),
    }
}

/// Trains both arms on `corpus` with `seed` and compares them.
pub fn run_ab(cfg: &AbConfig, corpus: &Corpus, seed: u64) -> Result<AbOutcome> {
    let data = TrainData {
        dense: &corpus.train_dense,
        sparse: &corpus.train_sparse,
    };
    let base = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let mut rows = Vec::new();
    for mode in [LossMode::SparseSilog, LossMode::Consistency] {
        let tc = with_mode(&base, mode);
        let start = initial_state(data, &tc)?;
        let out = fit(
            start,
            data,
            &tc,
            FitOptions {
                validation: &corpus.val,
                ..FitOptions::default()
            },
        )?;
        let last = out.epochs.last().ok_or_else(|| Error::invalid("no epochs ran"))?;
        log::info!("ab seed {seed} {mode:?}: mean loss {:.4}", last.mean_loss);
        rows.push(row(mode, last.validation, last.mean_loss)?);
    }
    let (baseline, consistency) = (rows[0], rows[1]);
    let dense_rmse_gain = 1.0 - consistency.dense.rmse / baseline.dense.rmse;
    let sparse_delta1_change = consistency.sparse.delta1 / baseline.sparse.delta1 - 1.0;
    let passed = dense_rmse_gain >= cfg.min_dense_rmse_gain && sparse_delta1_change.abs() <= cfg.max_sparse_delta1_change;
    Ok(AbOutcome {
        seed,
        baseline,
        consistency,
        dense_rmse_gain,
        sparse_delta1_change,
        passed,
    })
}
