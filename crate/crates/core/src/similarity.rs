//! Multi-granularity image-text similarity.
//!
//! Coarse-grained: cosine similarity between an image (or mean patch) feature
//! and each quality-level sentence feature, turned into a probability over
//! levels by a temperature softmax. Fine-grained: mean cosine similarity
//! between an image (or mean patch) feature and the per-word features of the
//! initial prompt.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse-grained level probabilities and fine-grained word-mean similarities
/// for one image, from both the full-image and the patch pathway.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Probability per quality level from the full-image feature.
    pub p_image: Vec<f64>,
    /// Probability per quality level from the mean patch feature.
    pub p_patch: Vec<f64>,
    /// Mean image-word cosine similarity, in [-1, 1].
    pub w_image: f64,
    /// Mean patch-word cosine similarity, in [-1, 1].
    pub w_patch: f64,
    /// Softmax temperature the probabilities were computed with.
    pub temperature: f64,
}

/// Cosine similarity between two vectors.
///
/// Equals the plain dot product when both inputs are unit-norm. The result is
/// clamped into [-1, 1] to absorb floating-point drift.
pub fn cosine(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Input(format!(
            "cosine: dimension mismatch ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Numeric(
            "cosine undefined for zero or non-finite vectors".into(),
        ));
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Numerically stable softmax of `logits`.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Probability per quality level from one image feature.
///
/// Each sentence row is scored by `cosine(img, sentence) / tau` and the scores
/// are softmaxed. `tau` is the softmax temperature; pass
/// `1.0 / logit_scale` to reproduce the backbone's learned scaling.
pub fn coarse_grained(
    img_emb: ArrayView1<'_, f64>,
    sentence_embs: ArrayView2<'_, f64>,
    tau: f64,
) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    let levels = sentence_embs.nrows();
    if levels < 2 {
        return Err(Error::Input(format!(
            "coarse-grained similarity needs at least 2 quality levels, got {levels}"
        )));
    }
    let mut logits = Vec::with_capacity(levels);
    for row in sentence_embs.axis_iter(Axis(0)) {
        logits.push(cosine(img_emb, row)? / tau);
    }
    Ok(softmax(&logits))
}

/// Mean of the patch embedding rows. Not re-normalized: cosine divides by the
/// norm anyway, so re-normalizing here would be a silent double step.
pub fn mean_patch_feature(patch_embs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if patch_embs.nrows() == 0 {
        return Err(Error::Input("empty patch set".into()));
    }
    Ok(patch_embs
        .mean_axis(Axis(0))
        .expect("nrows > 0 checked above"))
}

/// [`coarse_grained`] applied to the mean patch feature.
pub fn coarse_grained_patches(
    patch_embs: ArrayView2<'_, f64>,
    sentence_embs: ArrayView2<'_, f64>,
    tau: f64,
) -> Result<Vec<f64>> {
    let mean = mean_patch_feature(patch_embs)?;
    coarse_grained(mean.view(), sentence_embs, tau)
}

/// Mean cosine similarity between one image feature and each word feature.
pub fn fine_grained(
    img_emb: ArrayView1<'_, f64>,
    word_embs: ArrayView2<'_, f64>,
) -> Result<f64> {
    let k = word_embs.nrows();
    if k == 0 {
        return Err(Error::Input(
            "fine-grained similarity needs at least one word".into(),
        ));
    }
    let mut sum = 0.0;
    for row in word_embs.axis_iter(Axis(0)) {
        sum += cosine(img_emb, row)?;
    }
    Ok(sum / k as f64)
}

/// [`fine_grained`] applied to the mean patch feature.
pub fn fine_grained_patches(
    patch_embs: ArrayView2<'_, f64>,
    word_embs: ArrayView2<'_, f64>,
) -> Result<f64> {
    let mean = mean_patch_feature(patch_embs)?;
    fine_grained(mean.view(), word_embs)
}
