//! Full benchmark: repeated split/train/evaluate over every task the dataset
//! carries, with per-repetition CSVs, split manifests, training logs, scatter
//! plots and one summary row per (dataset, task).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use tspmgs_core::dataset::write_split_manifest;
use tspmgs_core::experiment::{run_benchmark, BenchmarkRun};
use tspmgs_core::metrics::plcc_logistic;
use tspmgs_core::training::EpochRecord;
use tspmgs_core::{PromptScheme, TaskKind};

use crate::backend::build_backend;
use crate::config::RunConfig;
use crate::plot::scatter_png;

use super::{ensure_dir, load_normalized};

/// One line of `benchmark_summary.csv`.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub dataset: String,
    pub task: TaskKind,
    pub scheme: PromptScheme,
    pub repetitions: u32,
    pub zero_shot: bool,
    pub seed: u64,
    pub mean_srcc: f64,
    pub mean_plcc: f64,
    pub mean_logistic_plcc: Option<f64>,
    pub config_hash: String,
}

#[derive(Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<SummaryRow>,
    pub output_dir: PathBuf,
}

fn default_scheme(task: TaskKind) -> PromptScheme {
    match task {
        TaskKind::Perception => PromptScheme::Adjective,
        TaskKind::Alignment => PromptScheme::Adverb,
    }
}

fn write_epoch_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["epoch", "lr", "train_mae", "val_srcc", "val_plcc"])?;
    for r in log {
        writer.write_record([
            r.epoch.to_string(),
            r.lr.to_string(),
            r.train_mae.to_string(),
            r.val_srcc.to_string(),
            r.val_plcc.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn run_task(
    cfg: &RunConfig,
    task: TaskKind,
    scheme: PromptScheme,
    out_dir: &Path,
    dataset: &str,
) -> Result<(SummaryRow, BenchmarkRun)> {
    let mut task_cfg = cfg.clone();
    task_cfg.run.task = task;
    task_cfg.run.scheme = scheme;
    let samples = load_normalized(&task_cfg, task_cfg.levels())?;
    let samples: Vec<_> = samples
        .into_iter()
        .filter(|s| s.target(task).is_some())
        .collect();
    let backend = build_backend(&task_cfg.backend)?;
    let run = run_benchmark(&backend, &task_cfg.experiment(), &samples)?;

    // per-repetition metrics
    let reps_path = out_dir.join(format!("benchmark_{task}_repetitions.csv"));
    let mut writer = csv::Writer::from_path(&reps_path)?;
    let mut header = vec![
        "repetition",
        "srcc",
        "plcc",
        "selected_epoch",
        "train_size",
        "test_size",
        "prompt_leakage",
    ];
    if cfg.metrics.logistic_plcc {
        header.insert(3, "logistic_plcc");
    }
    writer.write_record(&header)?;
    let mut logistic_sum = 0.0;
    let splits_dir = out_dir.join("splits");
    let logs_dir = out_dir.join("logs");
    ensure_dir(&splits_dir)?;
    ensure_dir(&logs_dir)?;
    for rep in &run.repetitions {
        let mut record = vec![
            rep.repetition.to_string(),
            rep.eval.srcc.to_string(),
            rep.eval.plcc.to_string(),
        ];
        if cfg.metrics.logistic_plcc {
            let lp = plcc_logistic(&rep.eval.predictions, &rep.eval.targets)?;
            logistic_sum += lp;
            record.push(lp.to_string());
        }
        record.push(rep.selected_epoch.to_string());
        record.push(rep.split.train.len().to_string());
        record.push(rep.split.test.len().to_string());
        record.push(rep.split.prompt_leakage.to_string());
        writer.write_record(&record)?;

        write_split_manifest(
            &splits_dir.join(format!("{task}_rep{}.csv", rep.repetition)),
            &rep.split,
            rep.repetition,
        )?;
        if !rep.log.is_empty() {
            write_epoch_log(
                &logs_dir.join(format!("{task}_rep{}_metrics.csv", rep.repetition)),
                &rep.log,
            )?;
        }
    }
    writer.flush()?;

    // pooled prediction-vs-MOS scatter over all repetitions
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for rep in &run.repetitions {
        preds.extend_from_slice(&rep.eval.predictions);
        targets.extend_from_slice(&rep.eval.targets);
    }
    scatter_png(&out_dir.join(format!("scatter_{task}.png")), &targets, &preds)?;

    let row = SummaryRow {
        dataset: dataset.to_string(),
        task,
        scheme,
        repetitions: task_cfg.train.repetitions,
        zero_shot: task_cfg.run.zero_shot,
        seed: task_cfg.run.seed,
        mean_srcc: run.mean_srcc,
        mean_plcc: run.mean_plcc,
        mean_logistic_plcc: cfg
            .metrics
            .logistic_plcc
            .then(|| logistic_sum / run.repetitions.len() as f64),
        config_hash: cfg.hash(),
    };
    Ok((row, run))
}

/// Runs the benchmark for every task present in the manifest and writes all
/// artifacts under the configured output directory.
pub fn cmd_benchmark(cfg: &RunConfig) -> Result<BenchmarkReport> {
    cfg.validate(true)?;
    let out_dir = cfg.data.output_dir.clone();
    ensure_dir(&out_dir)?;
    let dataset = cfg
        .data
        .manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());

    // probe which MOS columns exist
    let probe = tspmgs_core::dataset::load_dataset(&cfg.data.manifest, &cfg.data.image_dir)?;
    let has_perception = probe.samples.iter().any(|s| s.mos_perception.is_some());
    let has_alignment = probe.samples.iter().any(|s| s.mos_alignment.is_some());
    drop(probe);

    let mut rows = Vec::new();
    for task in [TaskKind::Perception, TaskKind::Alignment] {
        let present = match task {
            TaskKind::Perception => has_perception,
            TaskKind::Alignment => has_alignment,
        };
        if !present {
            continue;
        }
        let scheme = if task == cfg.run.task {
            cfg.run.scheme
        } else {
            default_scheme(task)
        };
        log::info!("benchmarking task {task} with {scheme} prompts");
        let (row, _) = run_task(cfg, task, scheme, &out_dir, &dataset)?;
        rows.push(row);
    }

    let summary_path = out_dir.join("benchmark_summary.csv");
    let mut writer = csv::Writer::from_path(&summary_path)?;
    let mut header = vec![
        "dataset",
        "task",
        "scheme",
        "repetitions",
        "zero_shot",
        "seed",
        "mean_srcc",
        "mean_plcc",
    ];
    if cfg.metrics.logistic_plcc {
        header.push("mean_logistic_plcc");
    }
    header.push("config_hash");
    writer.write_record(&header)?;
    for row in &rows {
        let mut record = vec![
            row.dataset.clone(),
            row.task.to_string(),
            row.scheme.to_string(),
            row.repetitions.to_string(),
            row.zero_shot.to_string(),
            row.seed.to_string(),
            row.mean_srcc.to_string(),
            row.mean_plcc.to_string(),
        ];
        if let Some(lp) = row.mean_logistic_plcc {
            record.push(lp.to_string());
        }
        record.push(row.config_hash.clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let meta = serde_json::json!({
        "config_hash": cfg.hash(),
        "seed": cfg.run.seed,
        "zero_shot": cfg.run.zero_shot,
        "deterministic": cfg.run.deterministic,
        // best-epoch selection uses the held-out split of each repetition
        "model_selection_on_test": matches!(
            cfg.train.model_selection,
            tspmgs_core::training::ModelSelection::BestValSrcc
        ) && !cfg.run.zero_shot,
        "config": cfg,
    });
    std::fs::write(
        out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta).context("serializing run metadata")?,
    )?;

    Ok(BenchmarkReport { rows, output_dir: out_dir })
}

/// Plain-text summary table.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12} {:<11} {:<10} {:>4} {:>10} {:>10}\n",
        "dataset", "task", "scheme", "reps", "mean_srcc", "mean_plcc"
    ));
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:<11} {:<10} {:>4} {:>10.4} {:>10.4}\n",
            r.dataset,
            r.task.to_string(),
            r.scheme.to_string(),
            r.repetitions,
            r.mean_srcc,
            r.mean_plcc
        ));
    }
    s
}
