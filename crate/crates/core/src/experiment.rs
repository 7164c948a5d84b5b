//! Repetition driver: split, train, evaluate, aggregate.
//!
//! A benchmark run repeats the split/train/evaluate cycle over distinct
//! deterministic splits and reports the arithmetic mean of the per-repetition
//! correlations, which is the reporting convention for these corpora.

use serde::{Deserialize, Serialize};

use crate::dataset::{split, Sample, SplitOutcome, SplitSpec};
use crate::encoder::FeatureExtractor;
use crate::error::Result;
use crate::metrics::EvalResult;
use crate::training::{evaluate, train, EpochRecord, QualityModel, TrainConfig, TrainOutcome};

/// Benchmark recipe: the training configuration plus the repetition schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Train fraction per repetition.
    pub split_ratio: f64,
    pub repetitions: u32,
    /// Skip fine-tuning and evaluate the pretrained behavior directly.
    pub zero_shot: bool,
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig) -> Self {
        ExperimentConfig { train, split_ratio: 0.8, repetitions: 10, zero_shot: false }
    }
}

/// One repetition's split, training trace and held-out evaluation.
#[derive(Debug)]
pub struct RepetitionOutcome {
    pub repetition: u32,
    pub split: SplitOutcome,
    pub eval: EvalResult,
    pub log: Vec<EpochRecord>,
    pub selected_epoch: usize,
}

/// All repetitions plus their aggregate means.
#[derive(Debug)]
pub struct BenchmarkRun {
    pub repetitions: Vec<RepetitionOutcome>,
    pub mean_srcc: f64,
    pub mean_plcc: f64,
}

impl BenchmarkRun {
    fn aggregate(repetitions: Vec<RepetitionOutcome>) -> Self {
        let n = repetitions.len() as f64;
        let mean_srcc = repetitions.iter().map(|r| r.eval.srcc).sum::<f64>() / n;
        let mean_plcc = repetitions.iter().map(|r| r.eval.plcc).sum::<f64>() / n;
        BenchmarkRun { repetitions, mean_srcc, mean_plcc }
    }
}

/// Runs one repetition: deterministic split, optional fine-tuning (the test
/// split doubles as the validation set), and held-out evaluation.
pub fn run_repetition<F: FeatureExtractor + Clone>(
    base: &F,
    cfg: &ExperimentConfig,
    samples: &[Sample],
    repetition: u32,
) -> Result<RepetitionOutcome> {
    let spec = SplitSpec {
        ratio: cfg.split_ratio,
        seed: cfg.train.seed,
        repetition_index: repetition,
    };
    let outcome = split(samples, &spec)?;
    let (model, log, selected_epoch): (QualityModel<F>, Vec<EpochRecord>, usize) = if cfg.zero_shot
    {
        (
            QualityModel::zero_shot(base.clone(), cfg.train.scoring.clone(), cfg.train.alpha_mode),
            Vec::new(),
            0,
        )
    } else {
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = cfg.train.seed.wrapping_add(repetition as u64);
        let TrainOutcome { model, log, selected_epoch, .. } =
            train(base.clone(), &train_cfg, &outcome.train, &outcome.test, None)?;
        (model, log, selected_epoch)
    };
    let eval = evaluate(&model, &outcome.test, cfg.train.scoring.task)?;
    Ok(RepetitionOutcome { repetition, split: outcome, eval, log, selected_epoch })
}

/// Runs every repetition sequentially and aggregates the correlations.
pub fn run_benchmark<F: FeatureExtractor + Clone>(
    base: &F,
    cfg: &ExperimentConfig,
    samples: &[Sample],
) -> Result<BenchmarkRun> {
    let mut repetitions = Vec::with_capacity(cfg.repetitions as usize);
    for rep in 0..cfg.repetitions {
        log::info!("repetition {rep}/{}", cfg.repetitions);
        repetitions.push(run_repetition(base, cfg, samples, rep)?);
    }
    Ok(BenchmarkRun::aggregate(repetitions))
}
