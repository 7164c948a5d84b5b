//! Trainable projection adapters over a frozen feature extractor.
//!
//! Fine-tuning works on a linear map per tower: raw features from the base
//! extractor are multiplied by a trainable matrix and re-normalized. With the
//! identity initialization the adapter reproduces the base embeddings, so
//! training starts from the pretrained behavior.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

use super::{normalize, BackendConfig, Encoder, ImageInput};

/// Raw (pre-adapter) features from a frozen backbone, one vector per input.
///
/// Implementations must be deterministic. `word_features` must return one row
/// per retained word token, special tokens excluded.
pub trait FeatureExtractor: Send + Sync {
    /// Dimension of the raw feature vectors.
    fn feature_dim(&self) -> usize;

    /// Logit multiplier of the backbone (see [`super::DEFAULT_LOGIT_SCALE`]).
    fn logit_scale(&self) -> f64 {
        super::DEFAULT_LOGIT_SCALE
    }

    fn backend_config(&self) -> &BackendConfig;

    fn image_features(&self, img: &ImageInput) -> Result<Array1<f64>>;

    fn sentence_features(&self, sentence: &str) -> Result<Array1<f64>>;

    /// K x R matrix of per-word features for the initial prompt.
    fn word_features(&self, prompt: &str) -> Result<Array2<f64>>;
}

impl<F: FeatureExtractor + ?Sized> FeatureExtractor for &F {
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn logit_scale(&self) -> f64 {
        (**self).logit_scale()
    }
    fn backend_config(&self) -> &BackendConfig {
        (**self).backend_config()
    }
    fn image_features(&self, img: &ImageInput) -> Result<Array1<f64>> {
        (**self).image_features(img)
    }
    fn sentence_features(&self, sentence: &str) -> Result<Array1<f64>> {
        (**self).sentence_features(sentence)
    }
    fn word_features(&self, prompt: &str) -> Result<Array2<f64>> {
        (**self).word_features(prompt)
    }
}

/// A dual encoder formed by one trainable linear map per tower on top of a
/// frozen [`FeatureExtractor`], with re-normalization after projection.
#[derive(Debug, Clone)]
pub struct AdapterEncoder<F: FeatureExtractor> {
    base: F,
    cfg: BackendConfig,
    /// Image-tower projection, `joint_dim x feature_dim`.
    w_image: Array2<f64>,
    /// Text-tower projection, `joint_dim x feature_dim`.
    w_text: Array2<f64>,
}

impl<F: FeatureExtractor> AdapterEncoder<F> {
    /// Identity-initialized adapters; the encoder initially reproduces the
    /// base features (up to re-normalization).
    pub fn identity(base: F) -> Self {
        let dim = base.feature_dim();
        let mut cfg = base.backend_config().clone();
        cfg.joint_dim = dim;
        AdapterEncoder {
            base,
            cfg,
            w_image: Array2::eye(dim),
            w_text: Array2::eye(dim),
        }
    }

    /// Adapter with explicit projection matrices (rows = joint dim).
    pub fn with_weights(base: F, w_image: Array2<f64>, w_text: Array2<f64>) -> Result<Self> {
        let raw = base.feature_dim();
        if w_image.ncols() != raw || w_text.ncols() != raw {
            return Err(Error::Config(format!(
                "adapter columns must match the base feature dim {raw}"
            )));
        }
        if w_image.nrows() != w_text.nrows() {
            return Err(Error::Config(
                "image and text adapters must share the joint dimension".into(),
            ));
        }
        let mut cfg = base.backend_config().clone();
        cfg.joint_dim = w_image.nrows();
        Ok(AdapterEncoder { base, cfg, w_image, w_text })
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    pub fn w_image(&self) -> &Array2<f64> {
        &self.w_image
    }

    pub fn w_text(&self) -> &Array2<f64> {
        &self.w_text
    }

    /// Replaces both projections; used by the trainer and checkpoint loader.
    pub fn set_weights(&mut self, w_image: Array2<f64>, w_text: Array2<f64>) -> Result<()> {
        let raw = self.base.feature_dim();
        if w_image.ncols() != raw || w_text.ncols() != raw || w_image.nrows() != w_text.nrows() {
            return Err(Error::Config("adapter shape mismatch".into()));
        }
        self.cfg.joint_dim = w_image.nrows();
        self.w_image = w_image;
        self.w_text = w_text;
        Ok(())
    }

    fn project(&self, w: &Array2<f64>, raw: &Array1<f64>) -> Result<Array1<f64>> {
        normalize(w.dot(raw))
    }
}

impl<F: FeatureExtractor> Encoder for AdapterEncoder<F> {
    fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn logit_scale(&self) -> f64 {
        self.base.logit_scale()
    }

    fn encode_image(&self, img: &ImageInput) -> Result<Array1<f64>> {
        let raw = self.base.image_features(img)?;
        self.project(&self.w_image, &raw)
    }

    fn encode_sentences(&self, sentences: &[String]) -> Result<Array2<f64>> {
        if sentences.is_empty() {
            return Err(Error::Input("empty sentence list".into()));
        }
        let mut out = Array2::zeros((sentences.len(), self.cfg.joint_dim));
        for (i, s) in sentences.iter().enumerate() {
            let raw = self.base.sentence_features(s)?;
            out.row_mut(i).assign(&self.project(&self.w_text, &raw)?);
        }
        Ok(out)
    }

    fn encode_words(&self, initial_prompt: &str) -> Result<Array2<f64>> {
        let raws = self.base.word_features(initial_prompt)?;
        let mut out = Array2::zeros((raws.nrows(), self.cfg.joint_dim));
        for (i, row) in raws.axis_iter(Axis(0)).enumerate() {
            out.row_mut(i)
                .assign(&self.project(&self.w_text, &row.to_owned())?);
        }
        Ok(out)
    }
}
