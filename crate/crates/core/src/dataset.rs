//! Dataset manifests, MOS normalization and reproducible splits.
//!
//! Input corpora are described by a CSV manifest with header columns
//! `name, prompt, mos_quality[, mos_align][, generator]`, where `name` is an
//! image path relative to the image directory. Splits are deterministic
//! functions of `(seed, repetition_index)` and serialize to their own CSV
//! manifests (`name, partition, repetition_index`) for round-tripping.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::TaskKind;

/// One corpus row: an image, its generation prompt, and its subjective scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Manifest `name` column, also the key in split manifests.
    pub name: String,
    pub image_path: PathBuf,
    pub initial_prompt: String,
    /// Raw perception MOS as read from the manifest.
    pub mos_perception: Option<f64>,
    /// Raw alignment MOS as read from the manifest.
    pub mos_alignment: Option<f64>,
    pub generator_id: Option<String>,
    /// Min-max normalized perception MOS; filled by [`normalize_mos`].
    pub norm_perception: Option<f64>,
    /// Min-max normalized alignment MOS; filled by [`normalize_mos`].
    pub norm_alignment: Option<f64>,
}

impl Sample {
    /// Normalized regression target for a task.
    pub fn target(&self, task: TaskKind) -> Option<f64> {
        match task {
            TaskKind::Perception => self.norm_perception,
            TaskKind::Alignment => self.norm_alignment,
        }
    }

    /// Raw MOS for a task.
    pub fn raw_mos(&self, task: TaskKind) -> Option<f64> {
        match task {
            TaskKind::Perception => self.mos_perception,
            TaskKind::Alignment => self.mos_alignment,
        }
    }
}

/// Load result: parsed samples plus the names of rows skipped because their
/// image file is missing.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub samples: Vec<Sample>,
    pub skipped: Vec<String>,
}

fn parse_mos(field: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed.parse::<f64>().map(Some).map_err(|_| {
        Error::Dataset(format!(
            "row {row}: column `{column}` is not numeric: {trimmed:?}"
        ))
    })
}

/// Reads a manifest CSV and resolves image paths against `image_dir`.
///
/// Rows whose image file does not exist are skipped and reported; a missing
/// manifest, malformed CSV or non-numeric MOS is an error.
pub fn load_dataset(manifest: &Path, image_dir: &Path) -> Result<LoadedDataset> {
    if !manifest.exists() {
        return Err(Error::Dataset(format!(
            "manifest not found: {}",
            manifest.display()
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(manifest)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let name_idx = col("name")
        .ok_or_else(|| Error::Dataset("manifest is missing the `name` column".into()))?;
    let prompt_idx = col("prompt")
        .ok_or_else(|| Error::Dataset("manifest is missing the `prompt` column".into()))?;
    let quality_idx = col("mos_quality")
        .ok_or_else(|| Error::Dataset("manifest is missing the `mos_quality` column".into()))?;
    let align_idx = col("mos_align");
    let generator_idx = col("generator");

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header
        let name = record
            .get(name_idx)
            .ok_or_else(|| Error::Dataset(format!("row {row}: missing name field")))?
            .to_string();
        let prompt = record.get(prompt_idx).unwrap_or_default().to_string();
        if prompt.trim().is_empty() {
            return Err(Error::Dataset(format!("row {row}: empty prompt")));
        }
        let mos_perception = parse_mos(record.get(quality_idx).unwrap_or_default(), row, "mos_quality")?;
        let mos_alignment = match align_idx {
            Some(idx) => parse_mos(record.get(idx).unwrap_or_default(), row, "mos_align")?,
            None => None,
        };
        if mos_perception.is_none() && mos_alignment.is_none() {
            return Err(Error::Dataset(format!("row {row}: no MOS value present")));
        }
        let image_path = image_dir.join(&name);
        if !image_path.exists() {
            skipped.push(name);
            continue;
        }
        samples.push(Sample {
            name,
            image_path,
            initial_prompt: prompt,
            mos_perception,
            mos_alignment,
            generator_id: generator_idx
                .and_then(|idx| record.get(idx))
                .filter(|s| !s.is_empty())
                .map(str::to_string),
            norm_perception: None,
            norm_alignment: None,
        });
    }
    if !skipped.is_empty() {
        log::warn!(
            "skipped {} manifest rows with missing image files",
            skipped.len()
        );
    }
    if samples.is_empty() && skipped.is_empty() {
        log::warn!("manifest {} has an empty body", manifest.display());
    }
    Ok(LoadedDataset { samples, skipped })
}

fn minmax(values: &[f64]) -> Result<(f64, f64)> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min.is_finite() && max.is_finite()) || values.len() < 2 {
        return Err(Error::Dataset("need at least 2 MOS values".into()));
    }
    if min == max {
        return Err(Error::Dataset(
            "constant MOS column cannot be normalized".into(),
        ));
    }
    Ok((min, max))
}

/// Min-max maps each present MOS column onto `target_range`, keeping the raw
/// values alongside. Errors on a constant column.
pub fn normalize_mos(mut samples: Vec<Sample>, target_range: (f64, f64)) -> Result<Vec<Sample>> {
    let (lo, hi) = target_range;
    if !(lo < hi) {
        return Err(Error::Config(format!(
            "invalid target range ({lo}, {hi})"
        )));
    }
    for task in [TaskKind::Perception, TaskKind::Alignment] {
        let values: Vec<f64> = samples.iter().filter_map(|s| s.raw_mos(task)).collect();
        if values.is_empty() {
            continue;
        }
        let (min, max) = minmax(&values)?;
        let scale = (hi - lo) / (max - min);
        for s in samples.iter_mut() {
            let mapped = s.raw_mos(task).map(|v| lo + (v - min) * scale);
            match task {
                TaskKind::Perception => s.norm_perception = mapped,
                TaskKind::Alignment => s.norm_alignment = mapped,
            }
        }
    }
    Ok(samples)
}

/// Deterministic split recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train fraction, strictly between 0 and 1.
    pub ratio: f64,
    pub seed: u64,
    pub repetition_index: u32,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { ratio: 0.8, seed: 0, repetition_index: 0 }
    }
}

impl SplitSpec {
    /// RNG stream keyed by `(seed, repetition_index)`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mixed = self
            .seed
            .wrapping_add((self.repetition_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

/// A train/test partition plus the count of prompts that appear on both sides.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Distinct prompts with images in both partitions. Reported, not fatal.
    pub prompt_leakage: usize,
}

/// Shuffles deterministically and takes `round(ratio * M)` samples for train.
pub fn split(samples: &[Sample], spec: &SplitSpec) -> Result<SplitOutcome> {
    if !(spec.ratio > 0.0 && spec.ratio < 1.0) {
        return Err(Error::Config(format!(
            "split ratio must be in (0, 1), got {}",
            spec.ratio
        )));
    }
    let m = samples.len();
    if m < 2 {
        return Err(Error::Dataset(format!(
            "cannot split {m} samples into two non-empty partitions"
        )));
    }
    let n_train = ((spec.ratio * m as f64).round() as usize).clamp(1, m - 1);
    let mut indices: Vec<usize> = (0..m).collect();
    indices.shuffle(&mut spec.rng());
    let train: Vec<Sample> = indices[..n_train].iter().map(|&i| samples[i].clone()).collect();
    let test: Vec<Sample> = indices[n_train..].iter().map(|&i| samples[i].clone()).collect();

    let train_prompts: HashSet<&str> = train.iter().map(|s| s.initial_prompt.as_str()).collect();
    let leakage = test
        .iter()
        .map(|s| s.initial_prompt.as_str())
        .collect::<HashSet<_>>()
        .intersection(&train_prompts)
        .count();
    if leakage > 0 {
        log::warn!("{leakage} prompts appear in both train and test partitions");
    }
    Ok(SplitOutcome { train, test, prompt_leakage: leakage })
}

/// Writes a split as CSV rows `name, partition, repetition_index`.
pub fn write_split_manifest(path: &Path, outcome: &SplitOutcome, repetition_index: u32) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["name", "partition", "repetition_index"])?;
    for s in &outcome.train {
        writer.write_record([s.name.as_str(), "train", &repetition_index.to_string()])?;
    }
    for s in &outcome.test {
        writer.write_record([s.name.as_str(), "test", &repetition_index.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a split manifest back into `(name, partition, repetition_index)` rows.
pub fn read_split_manifest(path: &Path) -> Result<Vec<(String, String, u32)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let rep: u32 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Dataset("bad repetition_index in split manifest".into()))?;
        rows.push((
            record.get(0).unwrap_or_default().to_string(),
            record.get(1).unwrap_or_default().to_string(),
            rep,
        ));
    }
    Ok(rows)
}

/// Rebuilds a split from its manifest rows, by sample name.
pub fn apply_split_manifest(
    samples: &[Sample],
    rows: &[(String, String, u32)],
) -> Result<SplitOutcome> {
    let lookup: std::collections::HashMap<&str, &Sample> =
        samples.iter().map(|s| (s.name.as_str(), s)).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (name, partition, _) in rows {
        let sample = lookup
            .get(name.as_str())
            .ok_or_else(|| Error::Dataset(format!("split manifest names unknown sample {name}")))?;
        match partition.as_str() {
            "train" => train.push((*sample).clone()),
            "test" => test.push((*sample).clone()),
            other => {
                return Err(Error::Dataset(format!(
                    "unknown partition label {other:?} in split manifest"
                )))
            }
        }
    }
    Ok(SplitOutcome { train, test, prompt_leakage: 0 })
}
