//! L1 training with Adam, a step-halving learning-rate schedule,
//! periodic validation, checkpointing and exact resumption.
//!
//! A run directory holds `train_log.csv` (one row per optimizer step),
//! `last.safetensors`, `best.safetensors` and, if training aborts on a
//! non-finite loss, `abort_step<N>.json`.

mod config;
mod optim;

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::datasets::{
    load_split, sample_batch, DatasetIndex, Sample, ScenePair, Split, SplitManifest,
};
use crate::error::{Error, Result};
use crate::eval::psnr_y;
use crate::lightfield::LightField;
use crate::model::{
    lightfields_to_tensor, load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, Ctx,
    ModelConfig, OfpNet,
};

pub use config::{lr_at, Phase, TrainConfig};
pub use optim::{grad_norm, Adam};

pub const LOG_FILE: &str = "train_log.csv";
pub const LAST_CHECKPOINT: &str = "last.safetensors";
pub const BEST_CHECKPOINT: &str = "best.safetensors";

/// Mean absolute difference over all views, pixels and channels.
pub fn l1_loss(pred: &LightField, gt: &LightField) -> Result<f64> {
    if pred.data().dim() != gt.data().dim() || pred.colorspace() != gt.colorspace() {
        return Err(Error::size(format!(
            "l1: {:?} {:?} vs {:?} {:?}",
            pred.data().dim(),
            pred.colorspace(),
            gt.data().dim(),
            gt.colorspace()
        )));
    }
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(total / pred.as_slice().len() as f64)
}

/// Everything besides parameters and moments needed to continue a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Epoch of the next step.
    pub epoch: u64,
    pub global_step: u64,
    /// Updates applied by the current optimizer instance.
    pub adam_step: u64,
    pub rng_state: ChaCha8Rng,
    pub best_val_psnr: Option<f64>,
    pub config: TrainConfig,
}

/// Training and validation scenes in Y.
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub train: Vec<ScenePair>,
    pub val: Vec<ScenePair>,
}

impl TrainData {
    pub fn load(index: &DatasetIndex, manifest: &SplitManifest, scale: u32) -> Result<Self> {
        Ok(Self {
            train: load_split(index, manifest, Split::Train, scale)?,
            val: load_split(index, manifest, Split::Val, scale)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub last: PathBuf,
    pub best: PathBuf,
    pub log: PathBuf,
    pub steps: u64,
    /// Mean loss over the first and the final epoch run by this call.
    pub first_epoch_loss: f64,
    pub last_epoch_loss: f64,
    pub best_val_psnr: Option<f64>,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    step: u64,
    epoch: u64,
    lr: f64,
    loss: f64,
    grad_norm: f64,
    reason: &'a str,
    batch: Vec<SampleInfo<'a>>,
    nonfinite_params: Vec<&'a str>,
}

#[derive(Serialize)]
struct SampleInfo<'a> {
    scene_id: &'a str,
    y0: usize,
    x0: usize,
    patch: (usize, usize),
    lr_finite: bool,
    gt_finite: bool,
    lr_range: (f32, f32),
    gt_range: (f32, f32),
}

fn value_range(lf: &LightField) -> (f32, f32) {
    lf.as_slice()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

#[derive(Serialize)]
struct LogRow {
    step: u64,
    epoch: u64,
    lr: f64,
    train_l1: f64,
    val_psnr: Option<f64>,
}

/// Owns the model, optimizer and run state; one instance is the only
/// writer of its parameters.
pub struct Trainer {
    model: OfpNet<f32>,
    adam: Adam,
    state: TrainState,
    diag_dir: PathBuf,
}

impl Trainer {
    pub fn new(model: OfpNet<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(model.params(), config.beta1, config.beta2, config.eps);
        Ok(Self {
            model,
            adam,
            state: TrainState {
                epoch: 0,
                global_step: 0,
                adam_step: 0,
                rng_state: ChaCha8Rng::seed_from_u64(config.seed),
                best_val_psnr: None,
                config,
            },
            diag_dir: std::env::temp_dir(),
        })
    }

    /// Continues the run stored in a checkpoint written by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let raw = ckpt
            .state
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no training state".into()))?;
        let state: TrainState = serde_json::from_value(raw)?;
        state.config.validate()?;
        let c = &state.config;
        let adam = match ckpt.moments {
            Some(m) => Adam::restore(
                ckpt.model.params(),
                c.beta1,
                c.beta2,
                c.eps,
                state.adam_step,
                m,
            )?,
            None => Adam::new(ckpt.model.params(), c.beta1, c.beta2, c.eps),
        };
        Ok(Self {
            model: ckpt.model,
            adam,
            state,
            diag_dir: std::env::temp_dir(),
        })
    }

    /// Directory that receives abort diagnostics.
    pub fn set_diagnostics_dir(&mut self, dir: impl Into<PathBuf>) {
        self.diag_dir = dir.into();
    }

    pub fn model(&self) -> &OfpNet<f32> {
        &self.model
    }

    pub fn into_model(self) -> OfpNet<f32> {
        self.model
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.state.config
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            moments: Some(self.adam.moments().clone()),
            state: Some(serde_json::to_value(&self.state).expect("train state serializes")),
        }
    }

    /// One optimizer step on `batch` at learning rate `lr`; returns the
    /// batch loss before the update. A non-finite loss or gradient leaves
    /// the parameters untouched, writes diagnostics and fails with
    /// [`Error::Abort`].
    pub fn step(&mut self, batch: &[Sample], lr: f64) -> Result<f64> {
        let lrs: Vec<&LightField> = batch.iter().map(|s| &s.lr).collect();
        let gts: Vec<&LightField> = batch.iter().map(|s| &s.gt).collect();
        let x = lightfields_to_tensor::<f32>(&lrs)?;
        let target = lightfields_to_tensor::<f32>(&gts)?;
        let vars = self.model.params().vars(true);
        let ctx = Ctx::new(&vars, self.model.grid());
        let pred = self.model.forward_var(&ctx, &Var::constant(x))?;
        let loss_var = pred.l1_loss(&target)?;
        let loss = loss_var.value().data()[0] as f64;
        if !loss.is_finite() {
            return Err(self.abort(batch, lr, loss, f64::NAN, "non-finite loss"));
        }
        let grads = loss_var.backward()?;
        drop(loss_var);
        drop(pred);
        let norm = grad_norm(self.model.params(), &grads);
        if !norm.is_finite() {
            return Err(self.abort(batch, lr, loss, norm, "non-finite gradient"));
        }
        let scale = match self.state.config.grad_clip {
            Some(clip) if norm > clip => clip / norm,
            _ => 1.0,
        };
        self.adam.step(self.model.params_mut(), &grads, lr, scale);
        self.state.adam_step = self.adam.t;
        self.state.global_step += 1;
        self.state.epoch = self.state.global_step / self.state.config.iters_per_epoch;
        Ok(loss)
    }

    /// Samples the next batch from `train` and steps at the scheduled rate.
    pub fn advance(&mut self, train: &[ScenePair]) -> Result<f64> {
        let c = &self.state.config;
        let lr = lr_at(self.state.epoch, c)?;
        let batch = sample_batch(train, c.patch, c.batch, &mut self.state.rng_state)?;
        self.step(&batch, lr)
    }

    fn abort(&self, batch: &[Sample], lr: f64, loss: f64, norm: f64, reason: &str) -> Error {
        let nonfinite_params = self
            .model
            .params()
            .iter()
            .filter(|p| p.value.data().iter().any(|x| !x.is_finite()))
            .map(|p| p.name.as_str())
            .collect();
        let diag = Diagnostics {
            step: self.state.global_step,
            epoch: self.state.epoch,
            lr,
            loss,
            grad_norm: norm,
            reason,
            batch: batch
                .iter()
                .map(|s| SampleInfo {
                    scene_id: &s.scene_id,
                    y0: s.y0,
                    x0: s.x0,
                    patch: s.gt.spatial_size(),
                    lr_finite: s.lr.is_finite(),
                    gt_finite: s.gt.is_finite(),
                    lr_range: value_range(&s.lr),
                    gt_range: value_range(&s.gt),
                })
                .collect(),
            nonfinite_params,
        };
        let path = self
            .diag_dir
            .join(format!("abort_step{}.json", self.state.global_step));
        // JSON cannot hold NaN, so non-finite numbers are written as null.
        let written = std::fs::create_dir_all(&self.diag_dir)
            .map_err(Error::from)
            .and_then(|_| Ok(serde_json::to_vec_pretty(&diag)?))
            .and_then(|bytes| Ok(std::fs::write(&path, bytes)?));
        if let Err(e) = written {
            log::error!(
                "could not write abort diagnostics to {}: {e}",
                path.display()
            );
        }
        Error::Abort {
            step: self.state.global_step,
            reason: reason.to_string(),
            diagnostics: path,
        }
    }

    /// Runs the remaining schedule, validating every `val_every` epochs and
    /// at the end. With an empty validation split the best checkpoint
    /// follows the last one.
    pub fn run(&mut self, data: &TrainData, out_dir: &Path) -> Result<TrainOutcome> {
        if data.train.is_empty() {
            return Err(Error::Split("the training split is empty".into()));
        }
        std::fs::create_dir_all(out_dir)?;
        self.diag_dir = out_dir.to_path_buf();
        let log_path = out_dir.join(LOG_FILE);
        let fresh = std::fs::metadata(&log_path)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        let mut log = csv::WriterBuilder::new()
            .has_headers(fresh)
            .from_writer(file);
        let last = out_dir.join(LAST_CHECKPOINT);
        let best = out_dir.join(BEST_CHECKPOINT);
        let (iters, total) = (self.config().iters_per_epoch, self.config().total_steps());
        let val_every = self.config().val_every;
        let start = self.state.global_step;
        let mut epoch_losses: Vec<f64> = Vec::new();
        let (mut first_epoch_loss, mut last_epoch_loss) = (None, f64::NAN);
        while self.state.global_step < total {
            let epoch = self.state.epoch;
            let lr = lr_at(epoch, self.config())?;
            let loss = self.advance(&data.train)?;
            epoch_losses.push(loss);
            let epoch_done = self.state.global_step.is_multiple_of(iters);
            let mut val_psnr = None;
            if epoch_done {
                let mean = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
                first_epoch_loss.get_or_insert(mean);
                last_epoch_loss = mean;
                epoch_losses.clear();
                let finished = epoch + 1;
                if finished.is_multiple_of(val_every) || self.state.global_step == total {
                    val_psnr = validate(&self.model, &data.val)?;
                }
            }
            log.serialize(LogRow {
                step: self.state.global_step,
                epoch,
                lr,
                train_l1: loss,
                val_psnr,
            })
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            log.flush()?;
            if epoch_done {
                let improved = match (val_psnr, self.state.best_val_psnr) {
                    (Some(v), Some(b)) => v > b,
                    (Some(_), None) => true,
                    (None, _) => false,
                };
                if improved {
                    self.state.best_val_psnr = val_psnr;
                }
                let ckpt = self.checkpoint();
                save_checkpoint(&last, &ckpt)?;
                if improved || data.val.is_empty() {
                    save_checkpoint(&best, &ckpt)?;
                }
            }
        }
        if !last.exists() {
            save_checkpoint(&last, &self.checkpoint())?;
        }
        if !best.exists() {
            std::fs::copy(&last, &best)?;
        }
        if !epoch_losses.is_empty() {
            last_epoch_loss = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
        }
        Ok(TrainOutcome {
            last,
            best,
            log: log_path,
            steps: self.state.global_step - start,
            first_epoch_loss: first_epoch_loss.unwrap_or(last_epoch_loss),
            last_epoch_loss,
            best_val_psnr: self.state.best_val_psnr,
        })
    }
}

/// Mean Y PSNR of clamped whole-scene predictions, or `None` for no scenes.
pub fn validate(model: &OfpNet<f32>, scenes: &[ScenePair]) -> Result<Option<f64>> {
    if scenes.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for s in scenes {
        let mut sr = model.forward(&s.lr)?;
        sr.clamp_unit();
        total += psnr_y(&sr, &s.gt)?;
    }
    Ok(Some(total / scenes.len() as f64))
}

/// Trains `model` from scratch for the full schedule of a train-phase config.
pub fn train(
    model: OfpNet<f32>,
    data: &TrainData,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    if config.phase != Phase::Train {
        return Err(Error::config("train needs train.phase = train"));
    }
    Trainer::new(model, config.clone())?.run(data, out_dir)
}

/// Adapts a checkpoint written for `model_config` with fresh optimizer
/// moments and a restarted finetune schedule.
pub fn finetune(
    checkpoint: &Path,
    model_config: &ModelConfig,
    data: &TrainData,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    if config.phase != Phase::Finetune {
        return Err(Error::config("finetune needs train.phase = finetune"));
    }
    let ckpt = load_checkpoint(checkpoint, model_config)?;
    Trainer::new(ckpt.model, config.clone())?.run(data, out_dir)
}

/// Finishes the run saved in `checkpoint`, appending to the log in `out_dir`.
pub fn resume(checkpoint: &Path, data: &TrainData, out_dir: &Path) -> Result<TrainOutcome> {
    Trainer::from_checkpoint(read_checkpoint(checkpoint)?)?.run(data, out_dir)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverfitReport {
    /// L1 of the final model on the pair.
    pub final_loss: f64,
    /// Y PSNR of the clamped final prediction.
    pub patch_psnr: f64,
    /// Pre-update loss of every step.
    pub losses: Vec<f64>,
}

/// Fits `model` to one fixed `(lr, gt)` pair for `steps` steps at the
/// constant rate `config.lr0`.
pub fn overfit_smoke(
    model: OfpNet<f32>,
    lr: &LightField,
    gt: &LightField,
    steps: usize,
    config: &TrainConfig,
) -> Result<(OfpNet<f32>, OverfitReport)> {
    if steps == 0 {
        return Err(Error::config("overfit_smoke needs at least one step"));
    }
    let mut trainer = Trainer::new(model, config.clone())?;
    let batch = [Sample {
        scene_id: "overfit".into(),
        y0: 0,
        x0: 0,
        lr: lr.clone(),
        gt: gt.clone(),
    }];
    let lr0 = trainer.config().lr0;
    let losses = (0..steps)
        .map(|_| trainer.step(&batch, lr0))
        .collect::<Result<Vec<_>>>()?;
    let model = trainer.into_model();
    let pred = model.forward(lr)?;
    let final_loss = l1_loss(&pred, gt)?;
    let mut clamped = pred;
    clamped.clamp_unit();
    let patch_psnr = psnr_y(&clamped, gt)?;
    Ok((
        model,
        OverfitReport {
            final_loss,
            patch_psnr,
            losses,
        },
    ))
}
