pub mod ablate;
pub mod benchmark;
pub mod score;
pub mod synth;

use anyhow::{Context, Result};
use std::path::Path;

use tspmgs_core::dataset::{load_dataset, normalize_mos, Sample};

use crate::config::RunConfig;

/// Loads the manifest, reports skipped rows and min-max normalizes the MOS
/// columns onto `[0, L]` for the given level count.
pub(crate) fn load_normalized(cfg: &RunConfig, levels: usize) -> Result<Vec<Sample>> {
    let loaded = load_dataset(&cfg.data.manifest, &cfg.data.image_dir)
        .with_context(|| format!("loading {}", cfg.data.manifest.display()))?;
    if !loaded.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} rows with missing image files",
            loaded.skipped.len()
        );
    }
    Ok(normalize_mos(loaded.samples, (0.0, levels as f64))?)
}

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
}
