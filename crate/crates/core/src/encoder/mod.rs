//! Dual-encoder abstraction: image/text towers mapping into one joint space.
//!
//! Everything downstream consumes unit-norm vectors, so cosine similarity
//! reduces to a dot product. Normalization is enforced here, at the backend
//! boundary, via [`EmbeddingBundle::new`].
//!
//! Concurrency contract: every [`Encoder`] is `Send + Sync` and inference is
//! read-only, so one instance may serve concurrent scoring. Trainable
//! adapters ([`AdapterEncoder`]) are mutated through `&mut` by the trainer,
//! which makes them single-owner during training by construction.

mod adapter;
mod crops;
mod stub;

pub use adapter::{AdapterEncoder, FeatureExtractor};
pub use crops::crop_patches;
pub use stub::{whitespace_tokens, StubEncoder, MAX_TEXT_TOKENS};

use image::imageops::FilterType;
use image::RgbImage;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum side length an image is upscaled to during preparation.
pub const MIN_PREPARED_SIDE: u32 = 224;

/// Tolerance on the unit-norm invariant of emitted embeddings.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// Default multiplier applied to cosine logits before the softmax, matching
/// the learned scaling of common pretrained dual encoders. The softmax
/// temperature defaults to its reciprocal.
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

/// An RGB image plus an opaque identifier, prepared so both sides are at
/// least [`MIN_PREPARED_SIDE`] pixels.
#[derive(Debug, Clone)]
pub struct ImageInput {
    pub pixels: RgbImage,
    pub id: String,
}

impl ImageInput {
    /// Wraps an image, upscaling (aspect preserved) when a side is below the
    /// minimum.
    pub fn new(pixels: RgbImage, id: impl Into<String>) -> Self {
        let (w, h) = pixels.dimensions();
        let short = w.min(h);
        let pixels = if short < MIN_PREPARED_SIDE {
            let scale = MIN_PREPARED_SIDE as f64 / short as f64;
            let nw = (w as f64 * scale).round() as u32;
            let nh = (h as f64 * scale).round() as u32;
            image::imageops::resize(
                &pixels,
                nw.max(MIN_PREPARED_SIDE),
                nh.max(MIN_PREPARED_SIDE),
                FilterType::CatmullRom,
            )
        } else {
            pixels
        };
        ImageInput { pixels, id: id.into() }
    }

    /// Decodes an image file as RGB.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Input(format!("cannot decode image {}: {e}", path.display())))?
            .to_rgb8();
        Ok(Self::new(img, path.display().to_string()))
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    /// Square resize to `size` x `size`. A no-op (identical pixels) when the
    /// image already has exactly that shape, so resizing is idempotent at the
    /// target size.
    pub fn resized_exact(&self, size: u32) -> ImageInput {
        if self.pixels.dimensions() == (size, size) {
            return self.clone();
        }
        ImageInput {
            pixels: image::imageops::resize(&self.pixels, size, size, FilterType::CatmullRom),
            id: self.id.clone(),
        }
    }

    /// Resize so the shorter side equals `target` (aspect preserved).
    pub(crate) fn resized_shorter_side(&self, target: u32) -> ImageInput {
        let (w, h) = self.pixels.dimensions();
        let short = w.min(h);
        if short == target {
            return self.clone();
        }
        let scale = target as f64 / short as f64;
        let nw = ((w as f64 * scale).round() as u32).max(target);
        let nh = ((h as f64 * scale).round() as u32).max(target);
        ImageInput {
            pixels: image::imageops::resize(&self.pixels, nw, nh, FilterType::CatmullRom),
            id: self.id.clone(),
        }
    }
}

/// Word-feature extraction strategy for the text tower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordMode {
    /// One text-tower pass over the prompt; per-token contextual embeddings
    /// are projected like the sentence embedding. Cheaper, keeps context.
    #[default]
    Contextual,
    /// Each word encoded separately as its own text input.
    PerWord,
}

/// Backend selection and geometry of the joint space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Model identifier or weights path; "stub" selects the hash backend.
    pub model_name: String,
    /// Square input resolution of the image tower.
    pub input_size: u32,
    /// Dimension of the shared joint space.
    pub joint_dim: usize,
    pub device: String,
    pub word_mode: WordMode,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            model_name: "stub".into(),
            input_size: 224,
            joint_dim: 512,
            device: "cpu".into(),
            word_mode: WordMode::Contextual,
        }
    }
}

impl BackendConfig {
    /// Stub backend with a given joint dimension.
    pub fn stub(joint_dim: usize) -> Self {
        BackendConfig { joint_dim, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be > 0".into()));
        }
        if self.joint_dim == 0 {
            return Err(Error::Config("joint_dim must be > 0".into()));
        }
        Ok(())
    }
}

/// All joint-space embeddings for one image/prompt pair: the full image, its
/// patches, the task-specific sentences and the initial-prompt words.
#[derive(Debug, Clone)]
pub struct EmbeddingBundle {
    pub image_embedding: Array1<f64>,
    /// N x D, one row per patch.
    pub patch_embeddings: Array2<f64>,
    /// L x D, one row per quality level, worst first.
    pub sentence_embeddings: Array2<f64>,
    /// K x D, one row per retained word token of the initial prompt.
    pub word_embeddings: Array2<f64>,
}

fn check_unit_rows(mat: &Array2<f64>, what: &str) -> Result<()> {
    for (i, row) in mat.axis_iter(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Backend(format!(
                "{what} row {i} is not unit-norm (norm = {norm})"
            )));
        }
    }
    Ok(())
}

impl EmbeddingBundle {
    /// Validates dimensions and the unit-norm invariant of every row.
    pub fn new(
        image_embedding: Array1<f64>,
        patch_embeddings: Array2<f64>,
        sentence_embeddings: Array2<f64>,
        word_embeddings: Array2<f64>,
    ) -> Result<Self> {
        let dim = image_embedding.len();
        for (name, mat) in [
            ("patch", &patch_embeddings),
            ("sentence", &sentence_embeddings),
            ("word", &word_embeddings),
        ] {
            if mat.ncols() != dim {
                return Err(Error::Backend(format!(
                    "{name} embeddings have dim {} but the image embedding has dim {dim}",
                    mat.ncols()
                )));
            }
        }
        if patch_embeddings.nrows() < 1 {
            return Err(Error::Backend("need at least one patch embedding".into()));
        }
        if sentence_embeddings.nrows() < 2 {
            return Err(Error::Backend(
                "need at least two sentence embeddings".into(),
            ));
        }
        if word_embeddings.nrows() < 1 {
            return Err(Error::Backend("need at least one word embedding".into()));
        }
        let norm = image_embedding.dot(&image_embedding).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Backend(format!(
                "image embedding is not unit-norm (norm = {norm})"
            )));
        }
        check_unit_rows(&patch_embeddings, "patch")?;
        check_unit_rows(&sentence_embeddings, "sentence")?;
        check_unit_rows(&word_embeddings, "word")?;
        Ok(EmbeddingBundle {
            image_embedding,
            patch_embeddings,
            sentence_embeddings,
            word_embeddings,
        })
    }

    pub fn joint_dim(&self) -> usize {
        self.image_embedding.len()
    }

    pub fn patch_count(&self) -> usize {
        self.patch_embeddings.nrows()
    }

    pub fn levels(&self) -> usize {
        self.sentence_embeddings.nrows()
    }

    pub fn word_count(&self) -> usize {
        self.word_embeddings.nrows()
    }
}

/// A dual encoder producing joint-space embeddings.
///
/// Implementations must be deterministic in deterministic mode: the same
/// input bytes yield the same vector.
pub trait Encoder: Send + Sync {
    fn config(&self) -> &BackendConfig;

    fn joint_dim(&self) -> usize {
        self.config().joint_dim
    }

    /// Multiplier for cosine logits; the coarse-similarity softmax defaults
    /// its temperature to the reciprocal of this value.
    fn logit_scale(&self) -> f64 {
        DEFAULT_LOGIT_SCALE
    }

    /// Unit-norm joint-space vector of the image resized to the backend's
    /// input resolution.
    fn encode_image(&self, img: &ImageInput) -> Result<Array1<f64>>;

    /// Row-wise [`Encoder::encode_image`] over a patch list.
    fn encode_patches(&self, patches: &[ImageInput]) -> Result<Array2<f64>> {
        if patches.is_empty() {
            return Err(Error::Input("empty patch list".into()));
        }
        let dim = self.joint_dim();
        let mut out = Array2::zeros((patches.len(), dim));
        for (i, patch) in patches.iter().enumerate() {
            out.row_mut(i).assign(&self.encode_image(patch)?);
        }
        Ok(out)
    }

    /// Unit-norm rows, one per sentence. Over-length sentences are truncated
    /// with a warning.
    fn encode_sentences(&self, sentences: &[String]) -> Result<Array2<f64>>;

    /// Per-word joint-space vectors for the initial prompt; special/padding
    /// tokens excluded.
    fn encode_words(&self, initial_prompt: &str) -> Result<Array2<f64>>;
}

/// Normalizes a vector to unit length.
pub(crate) fn normalize(mut v: Array1<f64>) -> Result<Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    if norm < 1e-12 || !norm.is_finite() {
        return Err(Error::Numeric(
            "cannot normalize a zero or non-finite vector".into(),
        ));
    }
    v.mapv_inplace(|x| x / norm);
    Ok(v)
}
