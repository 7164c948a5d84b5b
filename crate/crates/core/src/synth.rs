//! Synthetic corpus generation for smoke tests and determinism checks.
//!
//! Images are seeded noise; each MOS column is the zero-shot prediction of
//! the stub pipeline on that image, so a run configured the same way can
//! recover the ranking exactly and correlation metrics have a known target.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{BackendConfig, ImageInput, StubEncoder};
use crate::error::Result;
use crate::pipeline::{score_sample, ImageInputMode, ScoringConfig};
use crate::prompting::{PromptScheme, TaskKind};
use crate::regression::AlphaPolicy;

const WORD_BANK: [&str; 24] = [
    "crimson", "azure", "golden", "weathered", "gleaming", "foggy", "ancient", "tiny",
    "fox", "lighthouse", "orchard", "glacier", "violin", "lantern", "bridge", "meadow",
    "sketch", "photograph", "painting", "sculpture", "mosaic", "render", "print", "collage",
];

/// Recipe for a synthetic corpus.
#[derive(Debug, Clone)]
pub struct ToyCorpusOptions {
    pub samples: usize,
    pub seed: u64,
    /// Side length of the generated noise images.
    pub image_size: u32,
    pub backend: BackendConfig,
    pub patches_n: usize,
    pub temperature: Option<f64>,
}

impl Default for ToyCorpusOptions {
    fn default() -> Self {
        ToyCorpusOptions {
            samples: 50,
            seed: 7,
            image_size: 96,
            backend: BackendConfig::stub(32),
            patches_n: 5,
            temperature: None,
        }
    }
}

fn noise_image(rng: &mut ChaCha8Rng, size: u32) -> RgbImage {
    let mut img = RgbImage::new(size, size);
    for pixel in img.pixels_mut() {
        *pixel = Rgb([rng.gen(), rng.gen(), rng.gen()]);
    }
    img
}

fn toy_prompt(rng: &mut ChaCha8Rng) -> String {
    let n_words = rng.gen_range(3..=5);
    (0..n_words)
        .map(|_| WORD_BANK[rng.gen_range(0..WORD_BANK.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn scoring(task: TaskKind, scheme: PromptScheme, opts: &ToyCorpusOptions) -> ScoringConfig {
    ScoringConfig {
        task,
        scheme,
        custom_levels: None,
        patches_n: opts.patches_n,
        temperature: opts.temperature,
        image_input: ImageInputMode::Both,
    }
}

/// Writes `opts.samples` noise images plus a `manifest.csv` whose MOS columns
/// equal the zero-shot stub predictions (perception via the adjective scheme,
/// alignment via the adverb scheme, alpha 0.5). Returns the manifest path.
pub fn generate_toy_corpus(dir: &Path, opts: &ToyCorpusOptions) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let encoder = StubEncoder::new(opts.backend.clone())?;
    let perception = scoring(TaskKind::Perception, PromptScheme::Adjective, opts);
    let alignment = scoring(TaskKind::Alignment, PromptScheme::Adverb, opts);
    let alpha = AlphaPolicy::learned(0.0);

    let manifest = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest)?;
    writer.write_record(["name", "prompt", "mos_quality", "mos_align"])?;
    for i in 0..opts.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(
            opts.seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let name = format!("toy_{i:03}.png");
        let pixels = noise_image(&mut rng, opts.image_size);
        pixels.save(dir.join(&name))?;
        let prompt = toy_prompt(&mut rng);
        let img = ImageInput::new(pixels, name.clone());
        let (_, q_perc) = score_sample(&encoder, &img, &prompt, alpha, &perception)?;
        let (_, q_align) = score_sample(&encoder, &img, &prompt, alpha, &alignment)?;
        writer.write_record([
            name.as_str(),
            prompt.as_str(),
            &q_perc.q_final.to_string(),
            &q_align.q_final.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(manifest)
}
