use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::AdamW;
use super::checkpoint::Checkpoint;
use super::metrics::{regression_metrics, EpochMetrics, MetricsLog, Predictions, TestMetrics};
use super::model::{
    stream_rng, ModelBundle, ModelConfig, Normalizer, DROPOUT_STREAM, SHUFFLE_STREAM,
};
use super::schedule::{LrSchedule, MIN_LR, WARMUP_EPOCHS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Mode, Tape};

/// Batch size used for evaluation passes; it does not affect results.
const EVAL_BATCH: usize = 32;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Scratch,
    /// Backbone weights from a checkpoint header path; the head stays
    /// randomly initialized.
    Checkpoint(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_backbone: f64,
    /// 0 freezes the head.
    pub lr_tsh: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub min_lr: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr_backbone: 1e-4,
            lr_tsh: 1e-5,
            weight_decay: 0.01,
            warmup_epochs: WARMUP_EPOCHS,
            min_lr: MIN_LR,
            seed: 0,
            init: Init::Scratch,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: 50 epochs and a head learning rate raised to the
    /// backbone's 1e-4. With the default 1e-5 the head is still far from
    /// converged after 50 epochs at this data size.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 50,
            lr_tsh: 1e-4,
            ..TrainConfig::default()
        }
    }

    pub fn schedules(&self) -> Result<(LrSchedule, LrSchedule)> {
        Ok((
            LrSchedule::new(
                self.lr_backbone,
                self.min_lr,
                self.warmup_epochs,
                self.epochs,
            )?,
            LrSchedule::new(self.lr_tsh, self.min_lr, self.warmup_epochs, self.epochs)?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay {} must be >= 0",
                self.weight_decay
            )));
        }
        self.schedules().map(|_| ())
    }
}

/// What the loop optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// `L_rec + L_reg`, one backward pass, per-group optimizers.
    Joint,
    /// `L_rec` only; the head is neither run nor updated.
    Reconstruction,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State after the final epoch.
    pub model: ModelBundle,
    /// State after the epoch with the lowest validation objective.
    pub best: ModelBundle,
    pub best_epoch: usize,
    pub log: MetricsLog,
    pub optimizers: (AdamW, AdamW),
    /// Shuffle generator after the final epoch.
    pub rng: ChaCha8Rng,
}

impl TrainOutcome {
    pub fn last_checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        Checkpoint::from_model(
            &self.model,
            self.log.rows.len(),
            Some(cfg),
            Some((&self.optimizers.0, &self.optimizers.1)),
            Some(&self.rng),
        )
    }

    pub fn best_checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        Checkpoint::from_model(&self.best, self.best_epoch + 1, Some(cfg), None, None)
    }
}

/// Build the model a run starts from: normalizer fitted on `train`, random
/// weights from the run seed, and the backbone replaced by checkpoint
/// weights when `cfg.init` asks for it.
pub fn initialize_model(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train: &Dataset,
) -> Result<ModelBundle> {
    let normalizer = Normalizer::fit(train, &model_cfg.tsh.target_indices())?;
    let mut model = ModelBundle::new(model_cfg.clone(), train.size(), normalizer, cfg.seed)?;
    if let Init::Checkpoint(path) = &cfg.init {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.header.image_size != train.size()
            || ckpt.header.model.backbone != model_cfg.backbone
        {
            return Err(Error::Config(format!(
                "checkpoint {} was trained with a different backbone or image size",
                path.display()
            )));
        }
        ckpt.load_backbone_into(&mut model)?;
    }
    Ok(model)
}

fn non_finite(epoch: usize, batch: usize, rec: f64, reg: f64) -> Error {
    Error::NonFiniteLoss {
        epoch,
        batch,
        reconstruction: rec,
        regression: reg,
    }
}

/// Mean reconstruction and regression losses over `data` in eval mode.
fn validation_losses(model: &ModelBundle, data: &Dataset, with_head: bool) -> Result<(f64, f64)> {
    let (mut rec, mut reg) = (0.0, 0.0);
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream_rng(0, DROPOUT_STREAM);
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = model.batch(data, chunk)?;
        let mut tape = Tape::new();
        let pb = model.backbone.params.bind_frozen(&mut tape)?;
        let ph = model.head.params.bind_frozen(&mut tape)?;
        let out = model.forward(&mut tape, &pb, &ph, &batch, with_head, Mode::Eval, &mut rng)?;
        let w = chunk.len() as f64;
        rec += w * tape.value(out.reconstruction).item();
        if let Some(r) = out.regression {
            reg += w * tape.value(r).item();
        }
    }
    let n = data.len() as f64;
    Ok((rec / n, if with_head { reg / n } else { f64::NAN }))
}

/// Shared loop behind [`train_joint`] and [`pretrain_backbone`].
pub fn fit(
    mut model: ModelBundle,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    objective: Objective,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Parameter(
            "train and validation splits must be non-empty".into(),
        ));
    }
    let with_head = objective == Objective::Joint;
    let (sched_b, sched_h) = cfg.schedules()?;
    let mut opt_b = AdamW::new(&model.backbone.params, cfg.weight_decay);
    let mut opt_h = AdamW::new(&model.head.params, cfg.weight_decay);
    model.backbone.params.zero_grad();
    model.head.params.zero_grad();
    let mut shuffle_rng = stream_rng(cfg.seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream_rng(cfg.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = MetricsLog::default();
    let mut best: Option<(f64, usize, ModelBundle)> = None;

    for epoch in 0..cfg.epochs {
        let lr_b = sched_b.lr_at(epoch)?;
        let lr_h = if with_head {
            sched_h.lr_at(epoch)?
        } else {
            0.0
        };
        order.shuffle(&mut shuffle_rng);
        let (mut rec_sum, mut reg_sum) = (0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = model.batch(train, chunk)?;
            let mut tape = Tape::new();
            let pb = model.backbone.params.bind(&mut tape)?;
            let ph = if with_head {
                model.head.params.bind(&mut tape)?
            } else {
                model.head.params.bind_frozen(&mut tape)?
            };
            let out = model
                .forward(
                    &mut tape,
                    &pb,
                    &ph,
                    &batch,
                    with_head,
                    Mode::Train,
                    &mut dropout_rng,
                )
                .map_err(|e| match e {
                    Error::Numerical(_) => non_finite(epoch, b, f64::NAN, f64::NAN),
                    other => other,
                })?;
            let rec = tape.value(out.reconstruction).item();
            let (loss, reg) = match out.regression {
                Some(r) => (tape.add(out.reconstruction, r), tape.value(r).item()),
                None => (Ok(out.reconstruction), 0.0),
            };
            let loss = loss.map_err(|_| non_finite(epoch, b, rec, reg))?;
            if !rec.is_finite() || !reg.is_finite() {
                return Err(non_finite(epoch, b, rec, reg));
            }
            tape.backward(loss)
                .map_err(|_| non_finite(epoch, b, rec, reg))?;
            model.backbone.params.accumulate_grads(&tape, &pb);
            opt_b.step(&mut model.backbone.params, lr_b)?;
            if with_head {
                model.head.params.accumulate_grads(&tape, &ph);
                opt_h.step(&mut model.head.params, lr_h)?;
            }
            let w = chunk.len() as f64;
            rec_sum += w * rec;
            reg_sum += w * reg;
        }
        let n = train.len() as f64;
        let (rec_val, reg_val) = validation_losses(&model, val, with_head)?;
        log.rows.push(EpochMetrics {
            epoch,
            lr_backbone: lr_b,
            lr_tsh: lr_h,
            backbone_train_mse: rec_sum / n,
            backbone_val_mse: rec_val,
            tsh_train_mse: if with_head { reg_sum / n } else { f64::NAN },
            tsh_val_mse: reg_val,
        });
        let score = if with_head {
            rec_val + reg_val
        } else {
            rec_val
        };
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (best_epoch, best) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model.clone()),
    };
    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        log,
        optimizers: (opt_b, opt_h),
        rng: shuffle_rng,
    })
}

/// Joint training on `L_rec + L_reg`.
pub fn train_joint(
    model: ModelBundle,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    fit(model, train, val, cfg, Objective::Joint)
}

/// Reconstruction-only training of the backbone; the head is untouched.
pub fn pretrain_backbone(
    model: ModelBundle,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    fit(model, train, val, cfg, Objective::Reconstruction)
}

/// Eval-mode reconstruction MSE over all pixels and the head's raw-unit
/// predictions.
pub fn predict(model: &ModelBundle, data: &Dataset) -> Result<(f64, Predictions)> {
    if data.is_empty() {
        return Err(Error::Parameter("cannot evaluate an empty split".into()));
    }
    let targets = model.targets();
    let m = targets.len();
    let mut rec = 0.0;
    let mut truth = Vec::with_capacity(data.len() * m);
    let mut predicted = Vec::with_capacity(data.len() * m);
    let mut rng = stream_rng(0, DROPOUT_STREAM);
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = model.batch(data, chunk)?;
        let mut tape = Tape::new();
        let pb = model.backbone.params.bind_frozen(&mut tape)?;
        let ph = model.head.params.bind_frozen(&mut tape)?;
        let out = model.forward(&mut tape, &pb, &ph, &batch, true, Mode::Eval, &mut rng)?;
        rec += chunk.len() as f64 * tape.value(out.reconstruction).item();
        let pred = tape.value(out.prediction.expect("head ran")).data();
        for (r, &i) in chunk.iter().enumerate() {
            let x = data.params(i);
            for (j, &t) in targets.iter().enumerate() {
                truth.push(x[t]);
                predicted.push(model.normalizer.untarget(j, pred[r * m + j]));
            }
        }
    }
    Ok((
        rec / data.len() as f64,
        Predictions {
            targets,
            truth,
            predicted,
        },
    ))
}

pub fn evaluate(model: &ModelBundle, data: &Dataset) -> Result<TestMetrics> {
    let (recon_mse, pred) = predict(model, data)?;
    metrics_from_predictions(recon_mse, &pred, &model.normalizer)
}

pub fn metrics_from_predictions(
    recon_mse: f64,
    pred: &Predictions,
    normalizer: &Normalizer,
) -> Result<TestMetrics> {
    let (r2, rel_l2, reg_mse) =
        regression_metrics(pred, &normalizer.target_mean, &normalizer.target_std)?;
    Ok(TestMetrics {
        recon_mse,
        reg_mse,
        targets: pred.targets.clone(),
        r2,
        rel_l2,
    })
}
