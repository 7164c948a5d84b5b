//! Score one image against its initial prompt.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tspmgs_core::encoder::ImageInput;
use tspmgs_core::training::{load_checkpoint, QualityModel};
use tspmgs_core::{Error as CoreError, PromptScheme, TaskKind};

use crate::backend::{build_backend, Backend};
use crate::config::RunConfig;

/// Machine-readable score report; the documented JSON schema of `score`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub image: String,
    pub prompt: String,
    pub task: TaskKind,
    pub scheme: PromptScheme,
    pub levels: usize,
    pub p_image: Vec<f64>,
    pub p_patch: Vec<f64>,
    pub w_image: f64,
    pub w_patch: f64,
    pub q_cg_image: f64,
    pub q_cg_patch: f64,
    pub q_fg: f64,
    pub q_final: f64,
    pub alpha: f64,
    pub temperature: f64,
    pub zero_shot: bool,
    pub config_hash: String,
}

/// Runs the forward pass for one image/prompt pair. Requires either a
/// checkpoint directory or the explicit zero-shot flag.
pub fn cmd_score(
    cfg: &RunConfig,
    image: &Path,
    prompt: &str,
    checkpoint: Option<&Path>,
) -> Result<ScoreOutput> {
    cfg.validate(false)?;
    if !image.exists() {
        return Err(CoreError::Input(format!("image not found: {}", image.display())).into());
    }
    let backend = build_backend(&cfg.backend)?;
    let (model, zero_shot): (QualityModel<Backend>, bool) = match checkpoint {
        Some(dir) => {
            let ckpt = load_checkpoint(dir)
                .with_context(|| format!("loading checkpoint {}", dir.display()))?;
            (ckpt.into_model(backend)?, false)
        }
        None if cfg.run.zero_shot => (
            QualityModel::zero_shot(backend, cfg.scoring(), cfg.run.alpha_mode),
            true,
        ),
        None => bail!("no checkpoint given; pass --checkpoint DIR or --zero-shot"),
    };

    let img = ImageInput::from_path(image)?;
    let (report, score) = model.score(&img, prompt)?;
    Ok(ScoreOutput {
        image: image.display().to_string(),
        prompt: prompt.to_string(),
        task: model.scoring.task,
        scheme: model.scoring.scheme,
        levels: report.p_image.len(),
        p_image: report.p_image,
        p_patch: report.p_patch,
        w_image: report.w_image,
        w_patch: report.w_patch,
        q_cg_image: score.q_cg_image,
        q_cg_patch: score.q_cg_patch,
        q_fg: score.q_fg,
        q_final: score.q_final,
        alpha: score.alpha,
        temperature: report.temperature,
        zero_shot,
        config_hash: cfg.hash(),
    })
}

/// Human-readable rendering for stderr.
pub fn render_score(out: &ScoreOutput) -> String {
    let mut s = String::new();
    s.push_str(&format!("image:  {}\n", out.image));
    s.push_str(&format!("prompt: {}\n", out.prompt));
    s.push_str(&format!("task:   {} ({} scheme, L={})\n", out.task, out.scheme, out.levels));
    s.push_str("level probabilities (worst -> best):\n");
    let fmt_probs = |p: &[f64]| {
        p.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
    };
    s.push_str(&format!("  image:   {}\n", fmt_probs(&out.p_image)));
    s.push_str(&format!("  patches: {}\n", fmt_probs(&out.p_patch)));
    s.push_str(&format!(
        "fine-grained: w_image {:.4}, w_patch {:.4}\n",
        out.w_image, out.w_patch
    ));
    s.push_str(&format!(
        "scores: coarse(image) {:.4}, coarse(patches) {:.4}, fine {:.4}, alpha {:.3}\n",
        out.q_cg_image, out.q_cg_patch, out.q_fg, out.alpha
    ));
    s.push_str(&format!("Q = {:.4}\n", out.q_final));
    s
}
