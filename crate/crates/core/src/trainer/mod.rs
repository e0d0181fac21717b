//! Mini-batch training of the classifier with class-weighted cross-entropy,
//! Adam updates and reduce-on-plateau learning-rate decay.
//!
//! All randomness comes from one generator seeded with `TrainConfig::seed`,
//! drawn in this order: head initialisation, then for every epoch the
//! training-set shuffle followed by one dropout mask per sample in batch order.

mod adam;
mod plateau;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use plateau::{plateau_schedule, Plateau};

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_sample, DatasetManifest, SampleRecord, Split};
use crate::imbalance::ClassWeights;
use crate::metrics::predict_label;
use crate::nn::{softmax, Backbone, Classifier, Gradients, Head, HeadConfig};
use crate::{Error, Label, Result, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub seed: u64,
    pub monitor: Monitor,
    /// Update backbone parameters too; by default only the head trains.
    pub fine_tune: bool,
}

impl TrainConfig {
    pub fn new(max_epochs: usize) -> Self {
        Self {
            lr0: 1e-3,
            batch_size: 16,
            max_epochs,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_lr: 1e-6,
            seed: 0,
            monitor: Monitor::ValLoss,
            fine_tune: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr0 >= 0.0) {
            problems.push(format!("lr0 must be non-negative, got {}", self.lr0));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be positive".to_string());
        }
        if self.plateau_patience == 0 {
            problems.push("plateau_patience must be positive".to_string());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            problems.push(format!("plateau_factor must lie in (0, 1), got {}", self.plateau_factor));
        }
        if !(self.min_lr >= 0.0) {
            problems.push(format!("min_lr must be non-negative, got {}", self.min_lr));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch.checked_sub(1)?).map(|e| e.val_loss)
    }

    /// `epoch,train_loss,val_loss,val_acc,lr`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_acc, e.lr));
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Labelled images addressable by index.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> Label;

    fn image(&self, i: usize) -> Result<Tensor3>;
}

impl SampleSource for Vec<(Tensor3, Label)> {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn label(&self, i: usize) -> Label {
        self[i].1
    }

    fn image(&self, i: usize) -> Result<Tensor3> {
        Ok(self[i].0.clone())
    }
}

impl SampleSource for Vec<SampleRecord> {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn label(&self, i: usize) -> Label {
        self[i].label
    }

    fn image(&self, i: usize) -> Result<Tensor3> {
        let path = self[i]
            .tensor_path
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("sample `{}` has no tensor", self[i].sample_id)))?;
        load_sample(path)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel<B: Backbone> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Classifier<B>,
    pub history: TrainHistory,
}

/// Trains on the manifest's train split, validating on its val split.
pub fn train<B: Backbone + Clone>(
    manifest: &DatasetManifest,
    backbone: B,
    head_cfg: &HeadConfig,
    cfg: &TrainConfig,
    weights: &ClassWeights,
) -> Result<TrainedModel<B>> {
    let train_set: Vec<SampleRecord> = manifest.split(Split::Train).cloned().collect();
    let val_set: Vec<SampleRecord> = manifest.split(Split::Val).cloned().collect();
    train_on(&train_set, &val_set, backbone, head_cfg, cfg, weights)
}

/// Inputs to the head for one sample: cached pooled features when the
/// backbone is frozen, the image otherwise.
enum Cache {
    Pooled(Vec<Vec<f64>>),
    Images,
}

fn pooled_all<B: Backbone>(model: &Classifier<B>, data: &dyn SampleSource) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| Ok(model.pooled_features(&data.image(i)?)))
        .collect()
}

pub fn train_on<B: Backbone + Clone>(
    train_set: &dyn SampleSource,
    val_set: &dyn SampleSource,
    backbone: B,
    head_cfg: &HeadConfig,
    cfg: &TrainConfig,
    weights: &ClassWeights,
) -> Result<TrainedModel<B>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training needs non-empty train and val splits"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = Head::init(backbone.feature_channels(), head_cfg, &mut rng)?;
    let mut model = Classifier::new(backbone, head)?;

    let (train_cache, val_cache) = if cfg.fine_tune {
        (Cache::Images, Cache::Images)
    } else {
        (
            Cache::Pooled(pooled_all(&model, train_set)?),
            Cache::Pooled(pooled_all(&model, val_set)?),
        )
    };

    let adam = AdamConfig::default();
    let shapes = Gradients::zeros_like(&model, cfg.fine_tune);
    let mut states: Vec<AdamState> = shapes.iter().map(|g| AdamState::new(g.len())).collect();
    let mut plateau = Plateau::new(cfg.lr0, cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr);
    let mut lr = cfg.lr0;
    let mut step: u64 = 0;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Classifier<B>)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let masks: Vec<Vec<f64>> = batch.iter().map(|_| model.head.dropout_mask(&mut rng)).collect();
            let per_sample: Vec<(f64, Gradients)> = batch
                .par_iter()
                .zip(&masks)
                .map(|(&i, mask)| sample_gradients(&model, &train_cache, train_set, i, weights, mask, cfg.fine_tune))
                .collect::<Result<_>>()?;
            let mut grads = Gradients::zeros_like(&model, cfg.fine_tune);
            let mut batch_loss = 0.0;
            for (loss, g) in &per_sample {
                batch_loss += loss;
                grads.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            loss_sum += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            step += 1;
            let params = model
                .head
                .params_mut()
                .into_iter()
                .chain(if cfg.fine_tune { model.backbone.params_mut() } else { Vec::new() });
            for ((p, g), s) in params.zip(grads.iter()).zip(&mut states) {
                adam_step(p, g, s, lr, &adam, step);
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_acc) = validate(&model, &val_cache, val_set, weights)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0 });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            lr,
        });
        log::info!("epoch {epoch}: train_loss={train_loss:.5} val_loss={val_loss:.5} val_acc={val_acc:.4} lr={lr:e}");
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            history.best_epoch = epoch;
        }
        lr = plateau.observe(val_loss);
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok(TrainedModel { model, history })
}

fn sample_gradients<B: Backbone>(
    model: &Classifier<B>,
    cache: &Cache,
    data: &dyn SampleSource,
    i: usize,
    weights: &ClassWeights,
    mask: &[f64],
    fine_tune: bool,
) -> Result<(f64, Gradients)> {
    match cache {
        Cache::Pooled(pooled) => {
            let mut g = Gradients::zeros_like(model, false);
            let loss = model.head_loss_and_gradients(&pooled[i], data.label(i), weights, Some(mask), &mut g, |_, _| {})?;
            Ok((loss, g))
        }
        Cache::Images => model.loss_and_gradients(&data.image(i)?, data.label(i), weights, Some(mask), fine_tune),
    }
}

/// Mean weighted loss and accuracy in evaluation mode.
fn validate<B: Backbone>(
    model: &Classifier<B>,
    cache: &Cache,
    data: &dyn SampleSource,
    weights: &ClassWeights,
) -> Result<(f64, f64)> {
    let results: Vec<(f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let pooled = match cache {
                Cache::Pooled(p) => p[i].clone(),
                Cache::Images => model.pooled_features(&data.image(i)?),
            };
            let logits = model.head.forward(&pooled, None).logits;
            let probs = softmax(&logits);
            let label = data.label(i);
            let loss = crate::imbalance::weighted_cross_entropy(&probs, label, weights)?;
            Ok((loss, predict_label(&probs) == label))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = results.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}
