//! Deterministic hash-based encoder for tests, toy benchmarks and CI.
//!
//! Features are unit vectors drawn from a ChaCha stream seeded by a SHA-256
//! digest of the input bytes, so the same input always maps to the same
//! vector and distinct inputs map to (almost surely) distinct vectors. No
//! weights, no network, no GPU.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{normalize, BackendConfig, Encoder, FeatureExtractor, ImageInput, WordMode};

/// Text-tower context length budget, mirroring common dual encoders.
pub const CONTEXT_LENGTH: usize = 77;

/// Maximum retained word tokens: the context length minus the two special
/// tokens framing the sequence.
pub const MAX_TEXT_TOKENS: usize = CONTEXT_LENGTH - 2;

/// Whitespace tokenization with the context-length budget applied.
///
/// Returns the retained tokens and whether truncation happened. Tokens split
/// by whitespace are the "words"; punctuation stays attached.
pub fn whitespace_tokens(text: &str) -> (Vec<&str>, bool) {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let truncated = tokens.len() > MAX_TEXT_TOKENS;
    let kept = if truncated {
        tokens[..MAX_TEXT_TOKENS].to_vec()
    } else {
        tokens
    };
    (kept, truncated)
}

/// Hash-based stand-in for a pretrained dual encoder.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    cfg: BackendConfig,
}

impl StubEncoder {
    pub fn new(cfg: BackendConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(StubEncoder { cfg })
    }

    /// Unit vector derived deterministically from `(domain, payload)`.
    fn feature(&self, domain: &str, payload: &[u8]) -> Array1<f64> {
        let mut hasher = Sha256::new();
        hasher.update(domain.as_bytes());
        hasher.update([0u8]);
        hasher.update(payload);
        let digest = hasher.finalize();
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let mut v = Array1::zeros(self.cfg.joint_dim);
        for x in v.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        normalize(v).unwrap_or_else(|_| {
            // all-zero draw has probability ~0; fall back to a basis vector
            let mut e = Array1::zeros(self.cfg.joint_dim);
            e[0] = 1.0;
            e
        })
    }

    fn image_payload(&self, img: &ImageInput) -> Vec<u8> {
        let resized = img.resized_exact(self.cfg.input_size);
        let (w, h) = resized.pixels.dimensions();
        let mut payload = Vec::with_capacity(8 + resized.pixels.as_raw().len());
        payload.extend_from_slice(&w.to_le_bytes());
        payload.extend_from_slice(&h.to_le_bytes());
        payload.extend_from_slice(resized.pixels.as_raw());
        payload
    }

    /// Sentence text after the context-length budget, joined back with single
    /// spaces so over-length inputs collide with their truncation.
    fn effective_text(&self, text: &str) -> Result<String> {
        let (tokens, truncated) = whitespace_tokens(text);
        if tokens.is_empty() {
            return Err(Error::Input("text input must contain at least one word".into()));
        }
        if truncated {
            log::warn!(
                "text exceeds the {MAX_TEXT_TOKENS}-token budget and was truncated: {:?}...",
                &text[..text.len().min(48)]
            );
        }
        Ok(tokens.join(" "))
    }
}

impl Encoder for StubEncoder {
    fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn encode_image(&self, img: &ImageInput) -> Result<Array1<f64>> {
        Ok(self.feature("image", &self.image_payload(img)))
    }

    fn encode_sentences(&self, sentences: &[String]) -> Result<Array2<f64>> {
        if sentences.is_empty() {
            return Err(Error::Input("empty sentence list".into()));
        }
        let mut out = Array2::zeros((sentences.len(), self.cfg.joint_dim));
        for (i, s) in sentences.iter().enumerate() {
            let text = self.effective_text(s)?;
            out.row_mut(i).assign(&self.feature("text", text.as_bytes()));
        }
        Ok(out)
    }

    fn encode_words(&self, initial_prompt: &str) -> Result<Array2<f64>> {
        self.word_features(initial_prompt)
    }
}

impl FeatureExtractor for StubEncoder {
    fn feature_dim(&self) -> usize {
        self.cfg.joint_dim
    }

    fn backend_config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn image_features(&self, img: &ImageInput) -> Result<Array1<f64>> {
        self.encode_image(img)
    }

    fn sentence_features(&self, sentence: &str) -> Result<Array1<f64>> {
        let text = self.effective_text(sentence)?;
        Ok(self.feature("text", text.as_bytes()))
    }

    fn word_features(&self, prompt: &str) -> Result<Array2<f64>> {
        let text = self.effective_text(prompt)?;
        let tokens: Vec<&str> = text.split(' ').collect();
        let mut out = Array2::zeros((tokens.len(), self.cfg.joint_dim));
        for (k, token) in tokens.iter().enumerate() {
            let row = match self.cfg.word_mode {
                // one pass over the whole prompt: token vectors depend on
                // their context and position
                WordMode::Contextual => {
                    let payload = format!("{text}\u{1}{k}");
                    self.feature("word-ctx", payload.as_bytes())
                }
                // each word encoded on its own, context-free
                WordMode::PerWord => self.feature("word", token.as_bytes()),
            };
            out.row_mut(k).assign(&row);
        }
        Ok(out)
    }
}
