//! Training loop: mixed-source batches, augmentation, the composite loss,
//! global-norm clipping, AdamW with cosine annealing, per-epoch checkpoints
//! and validation.

pub mod augment;
pub mod optim;
pub mod sampler;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::geom::{mean_focal, CanonicalSpace};
use crate::loss::{final_loss, LossConfig, LossMode, LossReport, LossWeights, Targets};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::model::{Checkpoint, DepthNet, ModelConfig};
use crate::rng::{mix64, Stream};
use crate::simdata::{DatasetTag, SampleRecord};

pub use augment::{augment, AugmentParams, TrainSample};
pub use optim::{adamw_step, clip_grad_norm, cosine_lr, grad_norm, AdamState, AdamWConfig};
pub use sampler::{Batch, MixedSampler};

/// What the cosine schedule counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleUnit {
    Epoch,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Cosine period, in units of `schedule`.
    pub t_max: f64,
    pub eta_min: f64,
    pub schedule: ScheduleUnit,
    /// L2 norm over all trainable gradients, loss weights included.
    pub max_grad_norm: f64,
    pub resize_scale_range: [f64; 2],
    /// Square crop side; 518 at full scale.
    pub crop: usize,
    pub epochs: usize,
    pub seed: u64,
    pub freeze_encoder: bool,
    pub freeze_weights: bool,
    /// The run aborts when more than this fraction of batches has no valid label.
    pub max_skip_fraction: f64,
    pub loss: LossConfig,
    pub weights: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// The full-scale recipe. Its 518-pixel crop is 37 patches of 14 for a
    /// ViT encoder and is not a multiple of this network's stride, so
    /// [`Self::validate`] rejects it until `crop` is changed.
    pub fn full_scale() -> Self {
        Self {
            lr: 1e-5,
            batch_size: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            t_max: 35.0,
            eta_min: 1e-8,
            schedule: ScheduleUnit::Epoch,
            max_grad_norm: 1.0,
            resize_scale_range: [0.85, 1.15],
            crop: 518,
            epochs: 35,
            seed: 0,
            freeze_encoder: false,
            freeze_weights: false,
            max_skip_fraction: 0.1,
            loss: LossConfig::default(),
            weights: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }

    /// Desk scale: 64-pixel crops, batches of 4, a three-level encoder, and a
    /// learning rate suited to a small network trained from scratch for a few
    /// epochs.
    pub fn desk() -> Self {
        Self {
            lr: 2e-3,
            batch_size: 4,
            crop: 64,
            epochs: 12,
            t_max: 12.0,
            model: ModelConfig {
                widths: vec![16, 32, 64],
                ..ModelConfig::default()
            },
            ..Self::full_scale()
        }
    }

    pub fn adam(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0) || !(self.eta_min >= 0.0) || !(self.t_max > 0.0) {
            return bad(format!("lr={}, eta_min={}, t_max={} out of range", self.lr, self.eta_min, self.t_max));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("weight_decay must be >= 0 and max_grad_norm > 0".into());
        }
        let [lo, hi] = self.resize_scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("resize_scale_range [{lo}, {hi}] is not a positive interval"));
        }
        if self.crop == 0 || self.crop % self.model.stride() != 0 {
            return bad(format!("crop {} must be a positive multiple of {}", self.crop, self.model.stride()));
        }
        if !(0.0..=1.0).contains(&self.max_skip_fraction) {
            return bad("max_skip_fraction must lie in [0, 1]".into());
        }
        if !(self.loss.sparse_cap > 0.0 && self.loss.dense_cap > 0.0) {
            return bad("depth caps must be positive".into());
        }
        self.weights.validate()?;
        self.model.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Learning rate at `epoch` (and global `step` when stepping per iteration).
    pub fn lr_at(&self, epoch: usize, step: u64) -> f64 {
        let t = match self.schedule {
            ScheduleUnit::Epoch => epoch as f64,
            ScheduleUnit::Step => step as f64,
        };
        cosine_lr(t, self.lr, self.eta_min, self.t_max)
    }
}

/// The two training sources.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub dense: &'a [SampleRecord],
    pub sparse: &'a [SampleRecord],
}

impl TrainData<'_> {
    fn get(&self, tag: DatasetTag, i: usize) -> &SampleRecord {
        match tag {
            DatasetTag::DenseAndSparse => &self.dense[i],
            DatasetTag::SparseOnly => &self.sparse[i],
        }
    }

    /// Canonical space over one camera per non-empty source.
    pub fn canonical_space(&self) -> Result<CanonicalSpace> {
        let focals: Vec<f64> = [self.dense, self.sparse]
            .iter()
            .filter_map(|d| d.first())
            .map(|r| r.intrinsics.focal())
            .collect();
        mean_focal(&focals)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateMeta {
    model: ModelConfig,
    weights: LossWeights,
    space: CanonicalSpace,
    epoch: usize,
    step: u64,
    adam_t: u64,
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: DepthNet,
    pub weights: LossWeights,
    pub space: CanonicalSpace,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
}

const WEIGHT_NAMES: [&str; 3] = ["alpha", "beta", "gamma"];

impl TrainState {
    pub fn new(model: DepthNet, weights: LossWeights, space: CanonicalSpace) -> Self {
        let mut shapes: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        shapes.extend((0..3).map(|_| Tensor::zeros(&[1])));
        Self {
            adam: AdamState::new(&shapes.iter().collect::<Vec<_>>()),
            model,
            weights,
            space,
            epoch: 0,
            step: 0,
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = StateMeta {
            model: self.model.config.clone(),
            weights: self.weights,
            space: self.space.clone(),
            epoch: self.epoch,
            step: self.step,
            adam_t: self.adam.t,
        };
        let mut ck = self.model.to_checkpoint()?;
        ck.meta = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        let names = self.model.params.iter().map(|p| p.name.as_str()).chain(WEIGHT_NAMES);
        for (i, name) in names.enumerate() {
            ck.tensors.push((format!("adam.m.{name}"), self.adam.m[i].clone()));
            ck.tensors.push((format!("adam.v.{name}"), self.adam.v[i].clone()));
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: StateMeta = toml::from_str(&ck.meta).map_err(|e| Error::Config(e.to_string()))?;
        let model = DepthNet::from_checkpoint(&Checkpoint {
            meta: toml::to_string(&meta.model).map_err(|e| Error::Config(e.to_string()))?,
            tensors: ck.tensors.clone(),
        })?;
        let mut state = TrainState::new(model, meta.weights, meta.space);
        let names: Vec<String> = state
            .model
            .params
            .iter()
            .map(|p| p.name.clone())
            .chain(WEIGHT_NAMES.iter().map(|s| s.to_string()))
            .collect();
        for (i, name) in names.iter().enumerate() {
            for (slot, kind) in [(&mut state.adam.m[i], "m"), (&mut state.adam.v[i], "v")] {
                let t = ck
                    .get(&format!("adam.{kind}.{name}"))
                    .ok_or_else(|| Error::Config(format!("checkpoint lacks optimizer state for `{name}`")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Config(format!("optimizer state for `{name}` has shape {:?}", t.shape())));
                }
                *slot = t.clone();
            }
        }
        state.adam.t = meta.adam_t;
        state.epoch = meta.epoch;
        state.step = meta.step;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Depth in the acquisition camera of each record, one vector per record.
    pub fn predict(&self, records: &[&SampleRecord]) -> Result<Vec<Vec<f64>>> {
        let images: Vec<_> = records.iter().map(|r| &r.image).collect();
        let mut out = self.model.predict(&images)?;
        for (o, r) in out.iter_mut().zip(records) {
            let k = self.space.factor_from(r.intrinsics.focal())?;
            o.iter_mut().for_each(|d| *d *= k);
        }
        Ok(out)
    }
}

/// Held-out accuracy against sparse labels, dense labels and exact depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sparse: Option<MetricsReport>,
    /// Against the stereo labels, at their valid pixels.
    pub dense: Option<MetricsReport>,
    /// Against the exact render depth; only synthetic records carry one.
    #[serde(default)]
    pub exact: Option<MetricsReport>,
}

/// Pooled metrics over `records`: sparse labels capped at `sparse_cap`; dense
/// labels and exact depth capped at `dense_cap`.
pub fn validate(state: &TrainState, records: &[SampleRecord], sparse_cap: f64, dense_cap: f64) -> Result<ValidationReport> {
    let mut sp = MetricsAccumulator::default();
    let mut de = MetricsAccumulator::default();
    let mut ex = MetricsAccumulator::default();
    for chunk in records.chunks(8) {
        let refs: Vec<&SampleRecord> = chunk.iter().collect();
        for (pred, r) in state.predict(&refs)?.iter().zip(chunk) {
            sp.add(pred, &r.sparse.values, sparse_cap)?;
            if let Some(d) = &r.dense {
                de.add(pred, &d.values, dense_cap)?;
            }
            if let Some(e) = &r.exact {
                ex.add(pred, &e.values, dense_cap)?;
            }
        }
    }
    Ok(ValidationReport {
        sparse: sp.finish().ok(),
        dense: de.finish().ok(),
        exact: ex.finish().ok(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: u64,
    pub tag: DatasetTag,
    pub lr: f64,
    /// Norm before clipping.
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub loss: f64,
    pub l_silog_sparse: f64,
    pub l_silog_dense: Option<f64>,
    pub l_con: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub batches: usize,
    pub skipped: usize,
    pub validation: Option<ValidationReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Step(StepLog),
    Skip { epoch: usize, tag: DatasetTag, reason: String },
    Epoch(EpochLog),
}

#[derive(Default)]
pub struct FitOptions<'a> {
    pub validation: &'a [SampleRecord],
    /// Checkpoints `epoch_NNN.ckpt` are written here after every epoch.
    pub checkpoint_dir: Option<&'a Path>,
    /// One JSON object per line.
    pub log: Option<&'a mut dyn Write>,
    /// Stop after this many completed epochs instead of `config.epochs`.
    pub until_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: TrainState,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

fn epoch_stream(seed: u64, epoch: usize) -> Stream {
    Stream::new(mix64(seed ^ mix64(0xe90c ^ epoch as u64)))
}

/// One optimization step on `batch`. `Ok(None)` means no sample in the
/// batch had a valid label.
fn train_step(
    state: &mut TrainState,
    samples: &[TrainSample],
    config: &TrainConfig,
    lr: f64,
) -> Result<Option<(LossReport, f64, f64, usize)>> {
    let model = &state.model;
    let mut tape = Tape::new();
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let x = tape.constant(model.input_tensor(&images)?);
    let bound = model.bind(&mut tape, config.freeze_encoder);
    let pred = model.forward(&mut tape, &bound, x)?;
    let wv = state.weights.bind(&mut tape, config.freeze_weights);

    let mut total = None;
    let mut parts = LossReport {
        l_silog_sparse: 0.0,
        l_silog_dense: None,
        l_con: None,
        l_final: 0.0,
        n_valid_sparse: 0,
        n_valid_dense: 0,
        alpha: state.weights.alpha,
        beta: state.weights.beta,
        gamma: state.weights.gamma,
    };
    let mut used = 0;
    for (i, s) in samples.iter().enumerate() {
        let targets = Targets {
            f_gt: s.f_gt,
            sparse: &s.sparse,
            dense: s.dense.as_ref(),
        };
        let (l, rep) = match final_loss(&mut tape, pred, i, &state.space, targets, &wv, &config.loss) {
            Ok(v) => v,
            Err(Error::EmptyOverlap(_)) => continue,
            Err(e) => return Err(e),
        };
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l)?,
        });
        used += 1;
        parts.l_silog_sparse += rep.l_silog_sparse;
        parts.n_valid_sparse += rep.n_valid_sparse;
        parts.n_valid_dense += rep.n_valid_dense;
        if let (Some(d), Some(c)) = (rep.l_silog_dense, rep.l_con) {
            parts.l_silog_dense = Some(parts.l_silog_dense.unwrap_or(0.0) + d);
            parts.l_con = Some(parts.l_con.unwrap_or(0.0) + c);
        }
    }
    let Some(total) = total else { return Ok(None) };
    let k = 1.0 / used as f64;
    let loss = tape.scale(total, k);
    parts.l_final = tape.scalar(loss);
    parts.l_silog_sparse *= k;
    parts.l_silog_dense = parts.l_silog_dense.map(|d| d * k);
    parts.l_con = parts.l_con.map(|c| c * k);

    let mut grads = tape.backward(loss)?;
    let mut owned: Vec<Option<Tensor>> = bound.vars.iter().map(|&v| grads.take(v)).collect();
    for v in [wv.alpha, wv.beta, wv.gamma] {
        owned.push(grads.take(v).map(|g| g.reshaped(vec![1]).expect("scalar")));
    }
    let norm = {
        let mut live: Vec<&mut Tensor> = owned.iter_mut().flatten().collect();
        clip_grad_norm(&mut live, config.max_grad_norm)
    };
    let clipped = grad_norm(&owned.iter().flatten().collect::<Vec<_>>());

    let mut wt: Vec<Tensor> = [state.weights.alpha, state.weights.beta, state.weights.gamma]
        .iter()
        .map(|&w| Tensor::new(vec![1], vec![w]).expect("scalar"))
        .collect();
    {
        let mut params: Vec<&mut Tensor> = state.model.params.iter_mut().map(|p| &mut p.value).collect();
        params.extend(wt.iter_mut());
        let grad_refs: Vec<Option<&Tensor>> = owned.iter().map(Option::as_ref).collect();
        adamw_step(&mut params, &grad_refs, &mut state.adam, &config.adam(), lr)?;
    }
    state.weights.alpha = wt[0].item();
    state.weights.beta = wt[1].item();
    state.weights.gamma = wt[2].item();
    state.weights.clamp();
    Ok(Some((parts, norm, clipped, used)))
}

fn emit(log: &mut Option<&mut dyn Write>, line: &LogLine) -> Result<()> {
    if let Some(w) = log.as_mut() {
        let s = serde_json::to_string(line).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(w, "{s}").map_err(|e| Error::io("<training log>", e))?;
    }
    Ok(())
}

/// Trains from `state` until `config.epochs` (or `options.until_epoch`) epochs are complete.
pub fn fit(mut state: TrainState, data: TrainData<'_>, config: &TrainConfig, mut options: FitOptions<'_>) -> Result<FitOutcome> {
    config.validate()?;
    if data.dense.is_empty() && data.sparse.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    if data.dense.iter().any(|r| r.dense.is_none()) {
        return Err(Error::invalid("dense-and-sparse dataset contains a sample without a dense label"));
    }
    let sampler = MixedSampler::new(data.dense.len(), data.sparse.len(), config.batch_size);
    let last = options.until_epoch.unwrap_or(config.epochs).min(config.epochs);
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let (mut total_batches, mut total_skipped) = (0usize, 0usize);

    while state.epoch < last {
        let epoch = state.epoch;
        let mut rng = epoch_stream(config.seed, epoch);
        let batches = sampler.epoch(&mut rng);
        let mut aug_rng = rng.split();
        let (mut loss_sum, mut ran, mut skipped) = (0.0, 0usize, 0usize);
        let epoch_lr = config.lr_at(epoch, state.step);
        for batch in &batches {
            let samples = batch
                .indices
                .iter()
                .map(|&i| {
                    let s = TrainSample::from_record(data.get(batch.tag, i));
                    augment(&s, config.resize_scale_range, config.crop, &mut aug_rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let lr = config.lr_at(epoch, state.step);
            match train_step(&mut state, &samples, config, lr)? {
                Some((parts, norm, clipped, used)) => {
                    state.step += 1;
                    loss_sum += parts.l_final;
                    ran += 1;
                    let s = StepLog {
                        epoch,
                        step: state.step,
                        tag: batch.tag,
                        lr,
                        grad_norm: norm,
                        clipped_norm: clipped,
                        loss: parts.l_final,
                        l_silog_sparse: parts.l_silog_sparse,
                        l_silog_dense: parts.l_silog_dense,
                        l_con: parts.l_con,
                        alpha: state.weights.alpha,
                        beta: state.weights.beta,
                        gamma: state.weights.gamma,
                        samples: used,
                    };
                    emit(&mut options.log, &LogLine::Step(s.clone()))?;
                    steps.push(s);
                }
                None => {
                    skipped += 1;
                    log::warn!("epoch {epoch}: skipped a {} batch with no valid label", batch.tag.as_str());
                    emit(
                        &mut options.log,
                        &LogLine::Skip {
                            epoch,
                            tag: batch.tag,
                            reason: "empty overlap".into(),
                        },
                    )?;
                }
            }
        }
        total_batches += batches.len();
        total_skipped += skipped;
        if total_skipped as f64 > config.max_skip_fraction * total_batches as f64 {
            return Err(Error::Aborted(format!(
                "{total_skipped} of {total_batches} batches had no valid label"
            )));
        }
        state.epoch += 1;
        let validation = if options.validation.is_empty() {
            None
        } else {
            Some(validate(&state, options.validation, config.loss.sparse_cap, config.loss.dense_cap)?)
        };
        let e = EpochLog {
            epoch,
            lr: epoch_lr,
            mean_loss: if ran > 0 { loss_sum / ran as f64 } else { f64::NAN },
            batches: batches.len(),
            skipped,
            validation,
        };
        log::info!("epoch {epoch}: mean loss {:.5}, lr {:.3e}", e.mean_loss, e.lr);
        emit(&mut options.log, &LogLine::Epoch(e.clone()))?;
        epochs.push(e);
        if let Some(dir) = options.checkpoint_dir {
            state.save(&dir.join(format!("epoch_{:03}.ckpt", state.epoch)))?;
        }
    }
    Ok(FitOutcome { state, steps, epochs })
}

/// Fresh state for `config`: seeded model, initial loss weights and the
/// canonical space of `data`.
pub fn initial_state(data: TrainData<'_>, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let model = DepthNet::init(config.model.clone(), mix64(config.seed ^ 0x0de1))?;
    Ok(TrainState::new(model, config.weights, data.canonical_space()?))
}

/// Convenience for the common case with the given loss mode.
pub fn with_mode(config: &TrainConfig, mode: LossMode) -> TrainConfig {
    let mut c = config.clone();
    c.loss.mode = mode;
    c
}
