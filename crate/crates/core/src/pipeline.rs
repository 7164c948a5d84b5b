//! End-to-end scoring pipeline: prompts -> embeddings -> similarities -> score.

use serde::{Deserialize, Serialize};

use crate::encoder::{crop_patches, EmbeddingBundle, Encoder, ImageInput};
use crate::error::{Error, Result};
use crate::prompting::{build_prompts_with_levels, PromptScheme, PromptSet, TaskKind};
use crate::regression::{coarse_score, fine_score, fuse, AlphaPolicy, QualityScore};
use crate::similarity::{
    coarse_grained, coarse_grained_patches, fine_grained, fine_grained_patches, SimilarityReport,
};

/// Which image-tower inputs feed the similarity measurement.
///
/// The reduced modes alias the missing pathway to the present one and pin
/// alpha accordingly, so the fused score depends only on the selected input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageInputMode {
    /// Resized full image only; alpha pinned to 1.
    OnlyImage,
    /// Patches only; alpha pinned to 0.
    OnlyPatches,
    /// Full image and patches, balanced by alpha.
    #[default]
    Both,
}

impl std::fmt::Display for ImageInputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImageInputMode::OnlyImage => write!(f, "only_image"),
            ImageInputMode::OnlyPatches => write!(f, "only_patches"),
            ImageInputMode::Both => write!(f, "both"),
        }
    }
}

/// Everything the forward pass needs besides the encoder and the sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub task: TaskKind,
    pub scheme: PromptScheme,
    /// Optional custom quality-level words (ascending); L inferred from length.
    pub custom_levels: Option<Vec<String>>,
    /// Number of patches to crop.
    pub patches_n: usize,
    /// Softmax temperature; `None` uses the encoder's `1 / logit_scale`.
    pub temperature: Option<f64>,
    pub image_input: ImageInputMode,
}

impl ScoringConfig {
    pub fn new(task: TaskKind, scheme: PromptScheme) -> Self {
        ScoringConfig {
            task,
            scheme,
            custom_levels: None,
            patches_n: 5,
            temperature: None,
            image_input: ImageInputMode::Both,
        }
    }

    /// Validates the scheme/task pairing and basic numeric sanity.
    pub fn validate(&self) -> Result<()> {
        if !self.scheme.valid_for(self.task) {
            return Err(Error::Config(format!(
                "prompt scheme `{}` is not valid for task `{}`",
                self.scheme, self.task
            )));
        }
        if self.patches_n == 0 {
            return Err(Error::Config("patches_n must be at least 1".into()));
        }
        if let Some(t) = self.temperature {
            if t <= 0.0 || !t.is_finite() {
                return Err(Error::Config(format!("temperature must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Task-specific prompt set for one initial prompt.
    pub fn prompts_for(&self, initial_prompt: &str) -> Result<PromptSet> {
        build_prompts_with_levels(
            self.task,
            self.scheme,
            initial_prompt,
            self.custom_levels.as_deref(),
        )
    }

    /// Effective softmax temperature for a given encoder logit scale.
    pub fn tau(&self, logit_scale: f64) -> f64 {
        self.temperature.unwrap_or(1.0 / logit_scale)
    }
}

/// Encodes the image, its patches, the prompt sentences and the initial
/// prompt's words into one validated bundle.
pub fn embed_sample(
    encoder: &dyn Encoder,
    img: &ImageInput,
    prompts: &PromptSet,
    patches_n: usize,
) -> Result<EmbeddingBundle> {
    let image_embedding = encoder.encode_image(img)?;
    let patches = crop_patches(img, patches_n)?;
    let patch_embeddings = encoder.encode_patches(&patches)?;
    let sentence_embeddings = encoder.encode_sentences(&prompts.sentences)?;
    let word_embeddings = encoder.encode_words(&prompts.initial_prompt)?;
    EmbeddingBundle::new(
        image_embedding,
        patch_embeddings,
        sentence_embeddings,
        word_embeddings,
    )
}

/// Computes the coarse probabilities and fine-grained similarities for a
/// bundle, honoring the input mode's aliasing.
pub fn measure(
    bundle: &EmbeddingBundle,
    tau: f64,
    mode: ImageInputMode,
) -> Result<SimilarityReport> {
    let sents = bundle.sentence_embeddings.view();
    let words = bundle.word_embeddings.view();
    match mode {
        ImageInputMode::Both => {
            let p_image = coarse_grained(bundle.image_embedding.view(), sents, tau)?;
            let p_patch = coarse_grained_patches(bundle.patch_embeddings.view(), sents, tau)?;
            let w_image = fine_grained(bundle.image_embedding.view(), words)?;
            let w_patch = fine_grained_patches(bundle.patch_embeddings.view(), words)?;
            Ok(SimilarityReport { p_image, p_patch, w_image, w_patch, temperature: tau })
        }
        ImageInputMode::OnlyImage => {
            let p_image = coarse_grained(bundle.image_embedding.view(), sents, tau)?;
            let w_image = fine_grained(bundle.image_embedding.view(), words)?;
            Ok(SimilarityReport {
                p_patch: p_image.clone(),
                p_image,
                w_patch: w_image,
                w_image,
                temperature: tau,
            })
        }
        ImageInputMode::OnlyPatches => {
            let p_patch = coarse_grained_patches(bundle.patch_embeddings.view(), sents, tau)?;
            let w_patch = fine_grained_patches(bundle.patch_embeddings.view(), words)?;
            Ok(SimilarityReport {
                p_image: p_patch.clone(),
                p_patch,
                w_image: w_patch,
                w_patch,
                temperature: tau,
            })
        }
    }
}

/// Effective alpha for a mode: reduced input modes pin alpha so the absent
/// pathway drops out of the fusion exactly.
pub fn effective_alpha(policy: AlphaPolicy, mode: ImageInputMode) -> AlphaPolicy {
    match mode {
        ImageInputMode::OnlyImage => AlphaPolicy::fixed_1(),
        ImageInputMode::OnlyPatches => AlphaPolicy::fixed_0(),
        ImageInputMode::Both => policy,
    }
}

/// Turns a similarity report into component and fused quality scores.
pub fn score_from_report(
    report: &SimilarityReport,
    policy: AlphaPolicy,
    task: TaskKind,
    mode: ImageInputMode,
) -> Result<QualityScore> {
    let levels = report.p_image.len();
    let q_cg_image = coarse_score(&report.p_image)?;
    let q_cg_patch = coarse_score(&report.p_patch)?;
    let q_fg = fine_score(report.w_image, report.w_patch, levels);
    fuse(q_cg_image, q_cg_patch, q_fg, effective_alpha(policy, mode), task)
}

/// Full forward pass for one image and its initial prompt.
pub fn score_sample(
    encoder: &dyn Encoder,
    img: &ImageInput,
    initial_prompt: &str,
    policy: AlphaPolicy,
    cfg: &ScoringConfig,
) -> Result<(SimilarityReport, QualityScore)> {
    cfg.validate()?;
    let prompts = cfg.prompts_for(initial_prompt)?;
    let bundle = embed_sample(encoder, img, &prompts, cfg.patches_n)?;
    let tau = cfg.tau(encoder.logit_scale());
    let report = measure(&bundle, tau, cfg.image_input)?;
    let score = score_from_report(&report, policy, cfg.task, cfg.image_input)?;
    Ok((report, score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{BackendConfig, StubEncoder};
    use image::{Rgb, RgbImage};

    fn test_image(seed: u8) -> ImageInput {
        let img = RgbImage::from_fn(280, 280, |x, y| {
            Rgb([(x as u8) ^ seed, (y as u8).wrapping_add(seed), seed])
        });
        ImageInput::new(img, format!("img{seed}"))
    }

    fn stub() -> StubEncoder {
        StubEncoder::new(BackendConfig::stub(32)).unwrap()
    }

    #[test]
    fn bundle_shapes_follow_scheme_and_patches() {
        let enc = stub();
        let cfg = ScoringConfig::new(TaskKind::Alignment, PromptScheme::Adverb);
        let prompts = cfg.prompts_for("red cat on a mat").unwrap();
        let bundle = embed_sample(&enc, &test_image(1), &prompts, 5).unwrap();
        assert_eq!(bundle.levels(), 5);
        assert_eq!(bundle.patch_count(), 5);
        assert_eq!(bundle.word_count(), 5);
        assert_eq!(bundle.joint_dim(), 32);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let enc = stub();
        let cfg = ScoringConfig::new(TaskKind::Perception, PromptScheme::Adjective);
        let (report, _) = score_sample(
            &enc,
            &test_image(2),
            "a small boat",
            AlphaPolicy::learned(0.0),
            &cfg,
        )
        .unwrap();
        let sum_i: f64 = report.p_image.iter().sum();
        let sum_p: f64 = report.p_patch.iter().sum();
        assert!((sum_i - 1.0).abs() < 1e-6);
        assert!((sum_p - 1.0).abs() < 1e-6);
        assert!(report.w_image.abs() <= 1.0);
        assert!(report.w_patch.abs() <= 1.0);
    }

    #[test]
    fn fused_score_is_exact_affine_combination() {
        let enc = stub();
        let cfg = ScoringConfig::new(TaskKind::Perception, PromptScheme::Antonym);
        let (_, score) = score_sample(
            &enc,
            &test_image(3),
            "a tree",
            AlphaPolicy::learned(0.4),
            &cfg,
        )
        .unwrap();
        let expected =
            score.alpha * score.q_cg_image + (1.0 - score.alpha) * score.q_cg_patch + score.q_fg;
        assert_eq!(score.q_final, expected);
    }

    #[test]
    fn only_image_mode_ignores_patches() {
        let enc = stub();
        let mut cfg = ScoringConfig::new(TaskKind::Perception, PromptScheme::Adjective);
        cfg.image_input = ImageInputMode::OnlyImage;
        let img = test_image(4);
        cfg.patches_n = 1;
        let (_, a) = score_sample(&enc, &img, "x y", AlphaPolicy::learned(0.0), &cfg).unwrap();
        cfg.patches_n = 5;
        let (_, b) = score_sample(&enc, &img, "x y", AlphaPolicy::learned(0.0), &cfg).unwrap();
        assert_eq!(a.q_final, b.q_final);
        assert_eq!(a.alpha, 1.0);
    }

    #[test]
    fn only_patches_mode_pins_alpha_to_zero() {
        let enc = stub();
        let mut cfg = ScoringConfig::new(TaskKind::Perception, PromptScheme::Adjective);
        cfg.image_input = ImageInputMode::OnlyPatches;
        let (report, score) =
            score_sample(&enc, &test_image(5), "x", AlphaPolicy::learned(0.0), &cfg).unwrap();
        assert_eq!(score.alpha, 0.0);
        assert_eq!(report.p_image, report.p_patch);
        assert_eq!(score.q_fg, report.w_patch * 5.0);
    }

    #[test]
    fn scoring_is_deterministic() {
        let enc = stub();
        let cfg = ScoringConfig::new(TaskKind::Alignment, PromptScheme::Adverb);
        let img = test_image(6);
        let (_, a) = score_sample(&enc, &img, "blue sky", AlphaPolicy::fixed_1(), &cfg).unwrap();
        let (_, b) = score_sample(&enc, &img, "blue sky", AlphaPolicy::fixed_1(), &cfg).unwrap();
        assert_eq!(a.q_final, b.q_final);
    }

    #[test]
    fn config_validation_rejects_mismatched_scheme() {
        let cfg = ScoringConfig::new(TaskKind::Alignment, PromptScheme::Antonym);
        assert!(cfg.validate().is_err());
    }
}
