//! Ablation runs: sweep one axis, train and evaluate each setting, and emit a
//! comparison table.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Result};

use tspmgs_core::experiment::run_benchmark;
use tspmgs_core::pipeline::ImageInputMode;
use tspmgs_core::{AlphaMode, PromptScheme};

use crate::backend::build_backend;
use crate::config::RunConfig;

use super::{ensure_dir, load_normalized};

/// Sweepable configuration axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblateAxis {
    PromptScheme,
    ImageInput,
    Alpha,
}

impl fmt::Display for AblateAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AblateAxis::PromptScheme => write!(f, "prompt_scheme"),
            AblateAxis::ImageInput => write!(f, "image_input"),
            AblateAxis::Alpha => write!(f, "alpha"),
        }
    }
}

impl FromStr for AblateAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prompt_scheme" => Ok(AblateAxis::PromptScheme),
            "image_input" => Ok(AblateAxis::ImageInput),
            "alpha" => Ok(AblateAxis::Alpha),
            other => bail!("unknown ablation axis {other:?} (expected prompt_scheme|image_input|alpha)"),
        }
    }
}

/// One evaluated setting of the swept axis.
#[derive(Debug, Clone)]
pub struct AblateRow {
    pub setting: String,
    pub mean_srcc: f64,
    pub mean_plcc: f64,
}

#[derive(Debug)]
pub struct AblateReport {
    pub axis: AblateAxis,
    pub rows: Vec<AblateRow>,
    pub output_path: PathBuf,
}

fn variants(cfg: &RunConfig, axis: AblateAxis) -> Vec<(String, RunConfig)> {
    match axis {
        AblateAxis::PromptScheme => PromptScheme::for_task(cfg.run.task)
            .into_iter()
            .map(|scheme| {
                let mut v = cfg.clone();
                v.run.scheme = scheme;
                (scheme.to_string(), v)
            })
            .collect(),
        AblateAxis::ImageInput => [
            ImageInputMode::OnlyImage,
            ImageInputMode::OnlyPatches,
            ImageInputMode::Both,
        ]
        .into_iter()
        .map(|mode| {
            let mut v = cfg.clone();
            v.run.image_input = mode;
            (mode.to_string(), v)
        })
        .collect(),
        AblateAxis::Alpha => [AlphaMode::Fixed0, AlphaMode::Fixed1, AlphaMode::Learned]
            .into_iter()
            .map(|mode| {
                let mut v = cfg.clone();
                v.run.alpha_mode = mode;
                (mode.to_string(), v)
            })
            .collect(),
    }
}

/// Trains and evaluates every setting along the axis, writing
/// `ablate_<axis>.csv` into the output directory.
pub fn cmd_ablate(cfg: &RunConfig, axis: AblateAxis) -> Result<AblateReport> {
    cfg.validate(true)?;
    ensure_dir(&cfg.data.output_dir)?;
    let mut rows = Vec::new();
    for (setting, variant) in variants(cfg, axis) {
        log::info!("ablation {axis}: setting {setting}");
        let samples = load_normalized(&variant, variant.levels())?;
        let samples: Vec<_> = samples
            .into_iter()
            .filter(|s| s.target(variant.run.task).is_some())
            .collect();
        let backend = build_backend(&variant.backend)?;
        let run = run_benchmark(&backend, &variant.experiment(), &samples)?;
        rows.push(AblateRow {
            setting,
            mean_srcc: run.mean_srcc,
            mean_plcc: run.mean_plcc,
        });
    }

    let output_path = cfg.data.output_dir.join(format!("ablate_{axis}.csv"));
    let mut writer = csv::Writer::from_path(&output_path)?;
    writer.write_record([
        "axis",
        "setting",
        "task",
        "repetitions",
        "mean_srcc",
        "mean_plcc",
        "config_hash",
    ])?;
    for row in &rows {
        writer.write_record([
            axis.to_string(),
            row.setting.clone(),
            cfg.run.task.to_string(),
            cfg.train.repetitions.to_string(),
            row.mean_srcc.to_string(),
            row.mean_plcc.to_string(),
            cfg.hash(),
        ])?;
    }
    writer.flush()?;
    Ok(AblateReport { axis, rows, output_path })
}

/// Plain-text comparison table.
pub fn render_ablation(report: &AblateReport) -> String {
    let mut s = format!("{:<14} {:>10} {:>10}\n", report.axis.to_string(), "mean_srcc", "mean_plcc");
    for row in &report.rows {
        s.push_str(&format!(
            "{:<14} {:>10.4} {:>10.4}\n",
            row.setting, row.mean_srcc, row.mean_plcc
        ));
    }
    s
}
