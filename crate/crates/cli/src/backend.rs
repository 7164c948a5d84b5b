//! Backend selection from the run configuration.

use anyhow::{bail, Result};
use ndarray::{Array1, Array2};

use tspmgs_core::encoder::{BackendConfig, FeatureExtractor, ImageInput, StubEncoder};

/// A concrete frozen backbone chosen at runtime.
#[derive(Debug, Clone)]
pub enum Backend {
    Stub(StubEncoder),
}

/// Builds the backbone named by the config. `model_name = "stub"` selects the
/// deterministic hash backend; anything else is rejected until a pretrained
/// backend is compiled in.
pub fn build_backend(cfg: &BackendConfig) -> Result<Backend> {
    match cfg.model_name.as_str() {
        "stub" => Ok(Backend::Stub(StubEncoder::new(cfg.clone())?)),
        other => bail!(
            "unknown backend {other:?}; this build supports \"stub\" \
             (pretrained dual-encoder weights plug in through the FeatureExtractor interface)"
        ),
    }
}

impl FeatureExtractor for Backend {
    fn feature_dim(&self) -> usize {
        match self {
            Backend::Stub(s) => s.feature_dim(),
        }
    }

    fn logit_scale(&self) -> f64 {
        match self {
            Backend::Stub(s) => FeatureExtractor::logit_scale(s),
        }
    }

    fn backend_config(&self) -> &BackendConfig {
        match self {
            Backend::Stub(s) => s.backend_config(),
        }
    }

    fn image_features(&self, img: &ImageInput) -> tspmgs_core::Result<Array1<f64>> {
        match self {
            Backend::Stub(s) => s.image_features(img),
        }
    }

    fn sentence_features(&self, sentence: &str) -> tspmgs_core::Result<Array1<f64>> {
        match self {
            Backend::Stub(s) => s.sentence_features(sentence),
        }
    }

    fn word_features(&self, prompt: &str) -> tspmgs_core::Result<Array2<f64>> {
        match self {
            Backend::Stub(s) => s.word_features(prompt),
        }
    }
}
