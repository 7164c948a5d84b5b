//! Quality assessment of AI-generated images from task-specific prompts and
//! multi-granularity image-text similarity.
//!
//! The pipeline scores an image on two tasks, perception quality and
//! text-image alignment, by (1) building task-specific quality-level
//! sentences plus the image's own generation prompt, (2) embedding the image,
//! its patches, the sentences and the prompt words with a dual encoder,
//! (3) softmaxing sentence-level cosine similarities into level probabilities
//! and averaging word-level similarities, and (4) regressing the similarities
//! into a fused quality score. Fine-tuning minimizes the mean absolute error
//! against subjective scores; evaluation reports Spearman and Pearson
//! correlations over reproducible dataset splits.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod regression;
pub mod similarity;
pub mod synth;
pub mod training;

pub use dataset::{load_dataset, normalize_mos, split, Sample, SplitOutcome, SplitSpec};
pub use encoder::{
    crop_patches, AdapterEncoder, BackendConfig, EmbeddingBundle, Encoder, FeatureExtractor,
    ImageInput, StubEncoder, WordMode,
};
pub use error::{Error, Result};
pub use metrics::{plcc, plcc_logistic, srcc, EvalResult};
pub use pipeline::{score_sample, ImageInputMode, ScoringConfig};
pub use prompting::{build_prompts, PromptScheme, PromptSet, TaskKind};
pub use regression::{
    coarse_score, fine_score, fuse, mae_loss, AlphaMode, AlphaPolicy, QualityScore,
};
pub use similarity::{
    coarse_grained, coarse_grained_patches, cosine, fine_grained, fine_grained_patches,
    SimilarityReport,
};
pub use training::{evaluate, train, Checkpoint, EpochRecord, TrainConfig, TrainOutcome};
