//! Synthetic corpus generation plus a ready-to-run config file.

use std::path::{Path, PathBuf};

use anyhow::Result;

use tspmgs_core::encoder::BackendConfig;
use tspmgs_core::synth::{generate_toy_corpus, ToyCorpusOptions};

use crate::config::RunConfig;

/// Writes a toy corpus under `out` and a matching `toy_config.toml` so the
/// benchmark and ablation commands can run without any external dataset.
pub fn cmd_synth(out: &Path, samples: usize, seed: u64, joint_dim: usize) -> Result<PathBuf> {
    let opts = ToyCorpusOptions {
        samples,
        seed,
        backend: BackendConfig::stub(joint_dim),
        ..Default::default()
    };
    let manifest = generate_toy_corpus(out, &opts)?;

    let mut cfg = RunConfig::default();
    cfg.backend = BackendConfig::stub(joint_dim);
    cfg.run.seed = seed;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 16;
    cfg.train.repetitions = 10;
    cfg.data.manifest = manifest;
    cfg.data.image_dir = out.to_path_buf();
    cfg.data.output_dir = out.join("results");

    let config_path = out.join("toy_config.toml");
    std::fs::write(&config_path, toml::to_string_pretty(&cfg)?)?;
    Ok(config_path)
}
