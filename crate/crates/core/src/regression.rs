//! Quality regression: level probabilities and word similarities become
//! scalar scores, which are fused into one quality prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::TaskKind;

/// How the image-level vs patch-level coarse scores are balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Only the patch-level coarse score contributes.
    Fixed0,
    /// Only the image-level coarse score contributes.
    Fixed1,
    /// Alpha is a trainable parameter, kept in [0, 1] by a sigmoid.
    Learned,
}

impl std::fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlphaMode::Fixed0 => write!(f, "fixed_0"),
            AlphaMode::Fixed1 => write!(f, "fixed_1"),
            AlphaMode::Learned => write!(f, "learned"),
        }
    }
}

/// Balance weight between image- and patch-level coarse scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPolicy {
    pub mode: AlphaMode,
    /// Current alpha value in [0, 1]; pinned to 0 or 1 by the fixed modes.
    pub value: f64,
}

impl AlphaPolicy {
    pub fn fixed_0() -> Self {
        AlphaPolicy { mode: AlphaMode::Fixed0, value: 0.0 }
    }

    pub fn fixed_1() -> Self {
        AlphaPolicy { mode: AlphaMode::Fixed1, value: 1.0 }
    }

    /// Learned alpha from its unconstrained logit: `alpha = sigmoid(theta)`.
    /// `theta = 0` gives the 0.5 initialization.
    pub fn learned(theta: f64) -> Self {
        AlphaPolicy { mode: AlphaMode::Learned, value: sigmoid(theta) }
    }

    pub fn from_mode(mode: AlphaMode, theta: f64) -> Self {
        match mode {
            AlphaMode::Fixed0 => Self::fixed_0(),
            AlphaMode::Fixed1 => Self::fixed_1(),
            AlphaMode::Learned => Self::learned(theta),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.value) || !self.value.is_finite() {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.value
            )));
        }
        match self.mode {
            AlphaMode::Fixed0 if self.value != 0.0 => Err(Error::Config(
                "alpha mode fixed_0 pins the value to 0".into(),
            )),
            AlphaMode::Fixed1 if self.value != 1.0 => Err(Error::Config(
                "alpha mode fixed_1 pins the value to 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Component and fused quality scores for one image on one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityScore {
    /// Coarse score from the full image, in [0, L].
    pub q_cg_image: f64,
    /// Coarse score from the mean patch feature, in [0, L].
    pub q_cg_patch: f64,
    /// Fine-grained score, in [-L, L].
    pub q_fg: f64,
    /// Fused prediction.
    pub q_final: f64,
    /// Alpha used for the fusion.
    pub alpha: f64,
    pub task: TaskKind,
}

/// Expected quality level mapped onto [0, L].
///
/// `L/(L-1) * (sum_j j * p_j - 1)` with 1-based level index j: a one-hot at
/// the worst level scores 0, at the best level scores L.
pub fn coarse_score(p: &[f64]) -> Result<f64> {
    let levels = p.len();
    if levels < 2 {
        return Err(Error::Config(format!(
            "coarse score needs at least 2 levels, got {levels}"
        )));
    }
    let expected: f64 = p
        .iter()
        .enumerate()
        .map(|(idx, &pj)| (idx + 1) as f64 * pj)
        .sum();
    let l = levels as f64;
    Ok(l / (l - 1.0) * (expected - 1.0))
}

/// Fine-grained score `((w_image + w_patch) / 2) * L`.
pub fn fine_score(w_image: f64, w_patch: f64, levels: usize) -> f64 {
    (w_image + w_patch) / 2.0 * levels as f64
}

/// Fuses the component scores: `alpha * q_cg_image + (1 - alpha) * q_cg_patch + q_fg`.
///
/// The fixed alpha endpoints drop the opposite coarse term exactly instead of
/// multiplying by zero, so the unused pathway cannot leak rounding artifacts.
pub fn fuse(
    q_cg_image: f64,
    q_cg_patch: f64,
    q_fg: f64,
    policy: AlphaPolicy,
    task: TaskKind,
) -> Result<QualityScore> {
    policy.validate()?;
    let alpha = policy.value;
    let q_final = if alpha == 1.0 {
        q_cg_image + q_fg
    } else if alpha == 0.0 {
        q_cg_patch + q_fg
    } else {
        alpha * q_cg_image + (1.0 - alpha) * q_cg_patch + q_fg
    };
    Ok(QualityScore {
        q_cg_image,
        q_cg_patch,
        q_fg,
        q_final,
        alpha,
        task,
    })
}

/// Absolute error between a prediction and its subjective score.
pub fn mae_loss(q: f64, mos: f64) -> Result<f64> {
    if !q.is_finite() || !mos.is_finite() {
        return Err(Error::Numeric(format!(
            "mae loss needs finite inputs, got q={q}, mos={mos}"
        )));
    }
    Ok((q - mos).abs())
}

/// Mean absolute error over prediction/target pairs.
pub fn mae_loss_batch(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Input("mae batch must not be empty".into()));
    }
    let mut sum = 0.0;
    for &(q, mos) in pairs {
        sum += mae_loss(q, mos)?;
    }
    Ok(sum / pairs.len() as f64)
}
