//! Fine-tuning of the adapter projections and the fusion weight.
//!
//! Each step embeds a batch through the current adapters, scores it, and
//! descends the batch-mean absolute error with decoupled-weight-decay Adam
//! under a cosine-annealed learning rate. Sentence and word embeddings are
//! re-projected every step since the text-tower adapter is trainable; the
//! frozen backbone features are extracted once per run.

mod checkpoint;
mod grad;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use grad::{ModelParams, ParamGrads, SampleFeatures};
pub use optim::{cosine_annealing_lr, AdamW};

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::encoder::{crop_patches, AdapterEncoder, FeatureExtractor, ImageInput};
use crate::error::{Error, Result};
use crate::metrics::{plcc, srcc, EvalResult};
use crate::pipeline::{score_sample, ImageInputMode, ScoringConfig};
use crate::prompting::TaskKind;
use crate::regression::{AlphaMode, AlphaPolicy, QualityScore};
use crate::similarity::SimilarityReport;

use grad::{accumulate_sample_grads, predict_sample, ForwardSettings};

/// Which epoch's parameters the returned model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    /// Highest validation SRCC. Validation is the held-out test split of the
    /// current repetition, so this is model selection on test; reports flag it.
    #[default]
    BestValSrcc,
    /// Last epoch, no selection on the held-out split.
    LastEpoch,
}

/// Training recipe. Defaults follow the reference fine-tuning setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scoring: ScoringConfig,
    pub alpha_mode: AlphaMode,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cosine-annealing restart period, in epochs.
    pub scheduler_period: usize,
    pub seed: u64,
    pub freeze_image_tower: bool,
    pub freeze_text_tower: bool,
    pub model_selection: ModelSelection,
}

impl TrainConfig {
    pub fn new(scoring: ScoringConfig) -> Self {
        TrainConfig {
            scoring,
            alpha_mode: AlphaMode::Learned,
            learning_rate: 5e-6,
            weight_decay: 5e-4,
            epochs: 20,
            batch_size: 16,
            scheduler_period: 5,
            seed: 0,
            freeze_image_tower: false,
            freeze_text_tower: false,
            model_selection: ModelSelection::BestValSrcc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.scheduler_period == 0 {
            return Err(Error::Config("scheduler_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the per-epoch metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mae: f64,
    /// NaN when the validation correlation was undefined that epoch.
    pub val_srcc: f64,
    pub val_plcc: f64,
}

/// A trained (or zero-shot) scoring model: adapters over a frozen backbone
/// plus the fusion weight and the scoring configuration.
#[derive(Debug, Clone)]
pub struct QualityModel<F: FeatureExtractor> {
    pub encoder: AdapterEncoder<F>,
    pub alpha_mode: AlphaMode,
    pub alpha_theta: f64,
    pub scoring: ScoringConfig,
}

impl<F: FeatureExtractor> QualityModel<F> {
    /// Identity adapters and the 0.5-initialized alpha: the pretrained
    /// backbone's behavior without any fine-tuning.
    pub fn zero_shot(base: F, scoring: ScoringConfig, alpha_mode: AlphaMode) -> Self {
        QualityModel {
            encoder: AdapterEncoder::identity(base),
            alpha_mode,
            alpha_theta: 0.0,
            scoring,
        }
    }

    pub fn from_params(base: F, params: &ModelParams, scoring: ScoringConfig, alpha_mode: AlphaMode) -> Result<Self> {
        let encoder =
            AdapterEncoder::with_weights(base, params.w_image.clone(), params.w_text.clone())?;
        Ok(QualityModel { encoder, alpha_mode, alpha_theta: params.alpha_theta, scoring })
    }

    pub fn alpha_policy(&self) -> AlphaPolicy {
        AlphaPolicy::from_mode(self.alpha_mode, self.alpha_theta)
    }

    /// Scores one image against its initial prompt.
    pub fn score(&self, img: &ImageInput, initial_prompt: &str) -> Result<(SimilarityReport, QualityScore)> {
        score_sample(&self.encoder, img, initial_prompt, self.alpha_policy(), &self.scoring)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            w_image: self.encoder.w_image().clone(),
            w_text: self.encoder.w_text().clone(),
            alpha_theta: self.alpha_theta,
        }
    }
}

/// Result of one training run.
#[derive(Debug)]
pub struct TrainOutcome<F: FeatureExtractor> {
    pub model: QualityModel<F>,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters the model carries.
    pub selected_epoch: usize,
    /// Best validation SRCC seen (NaN when never defined).
    pub best_val_srcc: f64,
}

/// Extracts frozen backbone features for every sample, memoizing text
/// features by content so shared prompts are embedded once.
pub fn extract_features<F: FeatureExtractor>(
    base: &F,
    samples: &[Sample],
    scoring: &ScoringConfig,
) -> Result<Vec<SampleFeatures>> {
    let mut sentence_memo: HashMap<String, ndarray::Array1<f64>> = HashMap::new();
    let mut word_memo: HashMap<String, Array2<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let target = sample.target(scoring.task).ok_or_else(|| {
            Error::Dataset(format!(
                "sample {} has no normalized MOS for task {}; normalize the dataset first",
                sample.name, scoring.task
            ))
        })?;
        let img = ImageInput::from_path(&sample.image_path)?;
        let image = base.image_features(&img)?;
        let patches = crop_patches(&img, scoring.patches_n)?;
        let mut patch_rows = Array2::zeros((patches.len(), base.feature_dim()));
        for (i, patch) in patches.iter().enumerate() {
            patch_rows.row_mut(i).assign(&base.image_features(patch)?);
        }
        let prompts = scoring.prompts_for(&sample.initial_prompt)?;
        let mut sentences = Array2::zeros((prompts.sentences.len(), base.feature_dim()));
        for (i, sentence) in prompts.sentences.iter().enumerate() {
            let row = match sentence_memo.get(sentence) {
                Some(row) => row.clone(),
                None => {
                    let row = base.sentence_features(sentence)?;
                    sentence_memo.insert(sentence.clone(), row.clone());
                    row
                }
            };
            sentences.row_mut(i).assign(&row);
        }
        let words = match word_memo.get(&sample.initial_prompt) {
            Some(mat) => mat.clone(),
            None => {
                let mat = base.word_features(&sample.initial_prompt)?;
                word_memo.insert(sample.initial_prompt.clone(), mat.clone());
                mat
            }
        };
        out.push(SampleFeatures {
            name: sample.name.clone(),
            image,
            patches: patch_rows,
            sentences,
            words,
            target,
        });
    }
    Ok(out)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

fn validation_metrics(
    params: &ModelParams,
    val: &[SampleFeatures],
    settings: &ForwardSettings,
) -> Result<(f64, f64)> {
    let mut preds = Vec::with_capacity(val.len());
    let mut targets = Vec::with_capacity(val.len());
    for f in val {
        preds.push(predict_sample(params, f, settings)?);
        targets.push(f.target);
    }
    let s = srcc(&preds, &targets).unwrap_or(f64::NAN);
    let p = plcc(&preds, &targets).unwrap_or(f64::NAN);
    Ok((s, p))
}

fn dump_nonfinite_batch(
    dump_dir: Option<&Path>,
    epoch: usize,
    names: &[&str],
    targets: &[f64],
) -> String {
    let dump = serde_json::json!({
        "reason": "non-finite loss",
        "epoch": epoch,
        "batch_samples": names,
        "targets": targets,
    });
    if let Some(dir) = dump_dir {
        let path = dir.join("nonfinite_batch.json");
        if std::fs::create_dir_all(dir).is_ok() && std::fs::write(&path, dump.to_string()).is_ok() {
            return format!("non-finite loss at epoch {epoch}; batch dumped to {}", path.display());
        }
    }
    format!("non-finite loss at epoch {epoch}; offending batch: {dump}")
}

/// Fine-tunes adapters and alpha on `train_set`, tracking validation metrics
/// on `val_set` each epoch.
///
/// `dump_dir`, when given, receives a diagnostic JSON dump if a batch produces
/// a non-finite loss.
pub fn train<F: FeatureExtractor>(
    base: F,
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    dump_dir: Option<&Path>,
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Input(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    let train_feats = extract_features(&base, train_set, &cfg.scoring)?;
    let val_feats = extract_features(&base, val_set, &cfg.scoring)?;

    let dim = base.feature_dim();
    let mut params = ModelParams::identity(dim);
    let settings = ForwardSettings {
        tau: cfg.scoring.tau(base.logit_scale()),
        mode: cfg.scoring.image_input,
        alpha_mode: cfg.alpha_mode,
        task: cfg.scoring.task,
    };
    let learn_alpha =
        cfg.alpha_mode == AlphaMode::Learned && cfg.scoring.image_input == ImageInputMode::Both;
    let mut optimizer = AdamW::new(&[dim * dim, dim * dim, 1], cfg.weight_decay);
    let mut grads = ParamGrads::zeros_like(&params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cosine_annealing_lr(cfg.learning_rate, epoch, cfg.scheduler_period);
        let mut order: Vec<usize> = (0..train_feats.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_ok = true;
            for &i in batch {
                let feats = &train_feats[i];
                let (loss, q) =
                    accumulate_sample_grads(&params, feats, &settings, &mut grads, scale)?;
                if !loss.is_finite() || !q.is_finite() {
                    batch_ok = false;
                }
                loss_sum += loss;
            }
            if !batch_ok || !grads.w_image.iter().all(|g| g.is_finite()) {
                let names: Vec<&str> =
                    batch.iter().map(|&i| train_feats[i].name.as_str()).collect();
                let targets: Vec<f64> = batch.iter().map(|&i| train_feats[i].target).collect();
                return Err(Error::Train(dump_nonfinite_batch(
                    dump_dir, epoch, &names, &targets,
                )));
            }
            let active = [
                !cfg.freeze_image_tower,
                !cfg.freeze_text_tower,
                learn_alpha,
            ];
            let g_image = grads.w_image.as_slice().expect("standard layout");
            let g_text = grads.w_text.as_slice().expect("standard layout");
            let g_theta = [grads.alpha_theta];
            let (w_image, w_text) = (&mut params.w_image, &mut params.w_text);
            optimizer.step(
                lr,
                &mut [
                    w_image.as_slice_mut().expect("standard layout"),
                    w_text.as_slice_mut().expect("standard layout"),
                    std::slice::from_mut(&mut params.alpha_theta),
                ],
                &[g_image, g_text, &g_theta],
                &active,
            );
        }
        let train_mae = loss_sum / train_feats.len() as f64;
        let (val_srcc, val_plcc) = validation_metrics(&params, &val_feats, &settings)?;
        log.push(EpochRecord { epoch, lr, train_mae, val_srcc, val_plcc });
        log::debug!(
            "epoch {epoch}: lr {lr:.3e} train_mae {train_mae:.4} val_srcc {val_srcc:.4}"
        );
        if val_srcc.is_finite() && best.as_ref().map_or(true, |(_, s, _)| val_srcc > *s) {
            best = Some((epoch, val_srcc, params.clone()));
        }
    }

    let best_val_srcc = best.as_ref().map_or(f64::NAN, |(_, s, _)| *s);
    let (selected_epoch, selected) = match (cfg.model_selection, best) {
        (ModelSelection::BestValSrcc, Some((epoch, _, params))) => (epoch, params),
        _ => (cfg.epochs - 1, params),
    };
    let model = QualityModel::from_params(base, &selected, cfg.scoring.clone(), cfg.alpha_mode)?;
    Ok(TrainOutcome { model, log, selected_epoch, best_val_srcc })
}

/// Forward-only scoring of every sample in `test_set` against its normalized
/// MOS, via the full image pipeline.
pub fn evaluate<F: FeatureExtractor>(
    model: &QualityModel<F>,
    test_set: &[Sample],
    task: TaskKind,
) -> Result<EvalResult> {
    if model.scoring.task != task {
        return Err(Error::Config(format!(
            "model was trained for task {} but evaluation asked for {task}",
            model.scoring.task
        )));
    }
    let mut predictions = Vec::with_capacity(test_set.len());
    let mut targets = Vec::with_capacity(test_set.len());
    for sample in test_set {
        let img = ImageInput::from_path(&sample.image_path)?;
        let (_, score) = model.score(&img, &sample.initial_prompt)?;
        let target = sample.target(task).ok_or_else(|| {
            Error::Dataset(format!("sample {} has no normalized MOS for {task}", sample.name))
        })?;
        predictions.push(score.q_final);
        targets.push(target);
    }
    EvalResult::new(predictions, targets, task)
}

/// Fast evaluation on pre-extracted features; numerically equivalent to
/// [`evaluate`] and used for per-epoch validation.
pub fn evaluate_features(
    params: &ModelParams,
    feats: &[SampleFeatures],
    settings_scoring: &ScoringConfig,
    alpha_mode: AlphaMode,
    logit_scale: f64,
    task: TaskKind,
) -> Result<EvalResult> {
    let settings = ForwardSettings {
        tau: settings_scoring.tau(logit_scale),
        mode: settings_scoring.image_input,
        alpha_mode,
        task,
    };
    let mut predictions = Vec::with_capacity(feats.len());
    let mut targets = Vec::with_capacity(feats.len());
    for f in feats {
        predictions.push(predict_sample(params, f, &settings)?);
        targets.push(f.target);
    }
    EvalResult::new(predictions, targets, task)
}

/// Batch-mean loss and parameter gradients at the given parameters; exposed
/// so gradient checks can compare against finite differences of
/// [`forward_loss`].
pub fn batch_gradients(
    params: &ModelParams,
    feats: &[SampleFeatures],
    scoring: &ScoringConfig,
    alpha_mode: AlphaMode,
    logit_scale: f64,
) -> Result<(f64, ParamGrads)> {
    let settings = ForwardSettings {
        tau: scoring.tau(logit_scale),
        mode: scoring.image_input,
        alpha_mode,
        task: scoring.task,
    };
    let mut grads = ParamGrads::zeros_like(params);
    let scale = 1.0 / feats.len() as f64;
    let mut loss = 0.0;
    for f in feats {
        let (l, _) = accumulate_sample_grads(params, f, &settings, &mut grads, scale)?;
        loss += l * scale;
    }
    Ok((loss, grads))
}

/// Batch-mean forward loss on pre-extracted features, used as an oracle
/// reference in tests.
pub fn forward_loss(
    params: &ModelParams,
    feats: &[SampleFeatures],
    scoring: &ScoringConfig,
    alpha_mode: AlphaMode,
    logit_scale: f64,
) -> Result<f64> {
    let settings = ForwardSettings {
        tau: scoring.tau(logit_scale),
        mode: scoring.image_input,
        alpha_mode,
        task: scoring.task,
    };
    let mut sum = 0.0;
    for f in feats {
        sum += (predict_sample(params, f, &settings)? - f.target).abs();
    }
    Ok(sum / feats.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_recipe() {
        let cfg = TrainConfig::new(ScoringConfig::new(
            TaskKind::Perception,
            crate::prompting::PromptScheme::Adjective,
        ));
        assert_eq!(cfg.learning_rate, 5e-6);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.scheduler_period, 5);
        assert_eq!(cfg.alpha_mode, AlphaMode::Learned);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_rejects_zero_epochs_and_batches() {
        let mut cfg = TrainConfig::new(ScoringConfig::new(
            TaskKind::Perception,
            crate::prompting::PromptScheme::Antonym,
        ));
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }
}
