//! Exact gradients of the per-sample loss with respect to the adapter
//! projections and the alpha logit.
//!
//! The forward pass here mirrors the scoring pipeline on cached raw features:
//! project, normalize, cosine logits, temperature softmax, expected-level
//! coarse score, word-mean fine score, alpha fusion, absolute error. The
//! backward pass chains the closed-form derivatives of each stage; it is
//! checked against central finite differences in the tests.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::pipeline::ImageInputMode;
use crate::regression::{coarse_score, fine_score, fuse, AlphaMode, AlphaPolicy};
use crate::prompting::TaskKind;
use crate::similarity::softmax;

/// Frozen raw features for one sample, extracted once per run.
#[derive(Debug, Clone)]
pub struct SampleFeatures {
    pub name: String,
    /// Raw image feature, length R.
    pub image: Array1<f64>,
    /// Raw patch features, N x R.
    pub patches: Array2<f64>,
    /// Raw sentence features for this sample's prompt set, L x R.
    pub sentences: Array2<f64>,
    /// Raw word features of the initial prompt, K x R.
    pub words: Array2<f64>,
    /// Normalized MOS target.
    pub target: f64,
}

/// Trainable parameters: one projection per tower plus the alpha logit.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub w_image: Array2<f64>,
    pub w_text: Array2<f64>,
    pub alpha_theta: f64,
}

impl ModelParams {
    pub fn identity(dim: usize) -> Self {
        ModelParams {
            w_image: Array2::eye(dim),
            w_text: Array2::eye(dim),
            alpha_theta: 0.0,
        }
    }

    /// Current alpha policy implied by the parameters and the configured mode.
    pub fn alpha_policy(&self, mode: AlphaMode) -> AlphaPolicy {
        AlphaPolicy::from_mode(mode, self.alpha_theta)
    }
}

/// Gradient accumulators matching [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub w_image: Array2<f64>,
    pub w_text: Array2<f64>,
    pub alpha_theta: f64,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ParamGrads {
            w_image: Array2::zeros(params.w_image.raw_dim()),
            w_text: Array2::zeros(params.w_text.raw_dim()),
            alpha_theta: 0.0,
        }
    }

    pub fn fill_zero(&mut self) {
        self.w_image.fill(0.0);
        self.w_text.fill(0.0);
        self.alpha_theta = 0.0;
    }
}

/// Fixed settings of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardSettings {
    pub tau: f64,
    pub mode: ImageInputMode,
    pub alpha_mode: AlphaMode,
    pub task: TaskKind,
}

/// A projected, normalized vector plus what the backward pass needs.
struct Projected {
    /// Unit vector.
    e: Array1<f64>,
    /// Norm of the pre-normalization projection.
    norm: f64,
}

fn project(w: &Array2<f64>, raw: &Array1<f64>, what: &str) -> Result<Projected> {
    let h = w.dot(raw);
    let norm = h.dot(&h).sqrt();
    if norm < 1e-12 || !norm.is_finite() {
        return Err(Error::Numeric(format!(
            "projection of {what} collapsed to a zero or non-finite vector"
        )));
    }
    Ok(Projected { e: h / norm, norm })
}

/// Backward through `e = h / |h|`: returns the gradient w.r.t. `h`.
fn normalize_backward(g_e: &Array1<f64>, p: &Projected) -> Array1<f64> {
    let dot = g_e.dot(&p.e);
    (g_e - &(dot * &p.e)) / p.norm
}

/// Rank-1 accumulate `g_w += g_h * raw^T`.
fn outer_accumulate(g_w: &mut Array2<f64>, g_h: &Array1<f64>, raw: &Array1<f64>) {
    for (i, &gh) in g_h.iter().enumerate() {
        if gh == 0.0 {
            continue;
        }
        let mut row = g_w.row_mut(i);
        for (j, &r) in raw.iter().enumerate() {
            row[j] += gh * r;
        }
    }
}

struct ForwardState {
    image: Option<Projected>,
    patches: Vec<Projected>,
    /// Mean of the normalized patch rows and its norm.
    patch_mean: Option<(Array1<f64>, f64)>,
    sentences: Vec<Projected>,
    words: Vec<Projected>,
    /// Mean of the normalized word rows.
    word_mean: Array1<f64>,
    p_image: Vec<f64>,
    p_patch: Vec<f64>,
    q_cg_image: f64,
    q_cg_patch: f64,
    alpha: f64,
    q_final: f64,
}

fn forward_state(
    params: &ModelParams,
    feats: &SampleFeatures,
    settings: &ForwardSettings,
) -> Result<ForwardState> {
    let levels = feats.sentences.nrows();
    let k = feats.words.nrows();

    let sentences: Vec<Projected> = feats
        .sentences
        .axis_iter(Axis(0))
        .map(|row| project(&params.w_text, &row.to_owned(), "a sentence"))
        .collect::<Result<_>>()?;
    let words: Vec<Projected> = feats
        .words
        .axis_iter(Axis(0))
        .map(|row| project(&params.w_text, &row.to_owned(), "a word"))
        .collect::<Result<_>>()?;
    let mut word_mean = Array1::zeros(words[0].e.len());
    for w in &words {
        word_mean += &w.e;
    }
    word_mean /= k as f64;

    let need_image = settings.mode != ImageInputMode::OnlyPatches;
    let need_patches = settings.mode != ImageInputMode::OnlyImage;

    let image = if need_image {
        Some(project(&params.w_image, &feats.image, "the image")?)
    } else {
        None
    };
    let (patches, patch_mean) = if need_patches {
        let patches: Vec<Projected> = feats
            .patches
            .axis_iter(Axis(0))
            .map(|row| project(&params.w_image, &row.to_owned(), "a patch"))
            .collect::<Result<_>>()?;
        let mut mean = Array1::zeros(patches[0].e.len());
        for p in &patches {
            mean += &p.e;
        }
        mean /= patches.len() as f64;
        let norm = mean.dot(&mean).sqrt();
        if norm < 1e-12 || !norm.is_finite() {
            return Err(Error::Numeric(
                "mean patch feature is a zero vector".into(),
            ));
        }
        (patches, Some((mean, norm)))
    } else {
        (Vec::new(), None)
    };

    let image_side = image.as_ref().map(|img| {
        let logits: Vec<f64> = sentences
            .iter()
            .map(|s| img.e.dot(&s.e) / settings.tau)
            .collect();
        let p = softmax(&logits);
        let w = img.e.dot(&word_mean);
        (p, w)
    });
    let patch_side = patch_mean.as_ref().map(|(mean, norm)| {
        let m_hat = mean / *norm;
        let logits: Vec<f64> = sentences
            .iter()
            .map(|s| m_hat.dot(&s.e) / settings.tau)
            .collect();
        let p = softmax(&logits);
        let w = m_hat.dot(&word_mean);
        (p, w)
    });

    // reduced input modes alias the missing side to the present one
    let ((p_image, w_image), (p_patch, w_patch)) = match (image_side, patch_side) {
        (Some(i), Some(p)) => (i, p),
        (Some(i), None) => (i.clone(), i),
        (None, Some(p)) => (p.clone(), p),
        (None, None) => unreachable!("at least one pathway is always active"),
    };

    let q_cg_image = coarse_score(&p_image)?;
    let q_cg_patch = coarse_score(&p_patch)?;
    let q_fg = fine_score(w_image, w_patch, levels);
    let policy = match settings.mode {
        ImageInputMode::OnlyImage => AlphaPolicy::fixed_1(),
        ImageInputMode::OnlyPatches => AlphaPolicy::fixed_0(),
        ImageInputMode::Both => params.alpha_policy(settings.alpha_mode),
    };
    let score = fuse(q_cg_image, q_cg_patch, q_fg, policy, settings.task)?;

    Ok(ForwardState {
        image,
        patches,
        patch_mean,
        sentences,
        words,
        word_mean,
        p_image,
        p_patch,
        q_cg_image,
        q_cg_patch,
        alpha: score.alpha,
        q_final: score.q_final,
    })
}

/// Forward-only prediction for one sample.
pub fn predict_sample(
    params: &ModelParams,
    feats: &SampleFeatures,
    settings: &ForwardSettings,
) -> Result<f64> {
    Ok(forward_state(params, feats, settings)?.q_final)
}

/// Softmax backward with temperature: given dL/dp returns dL/dS where
/// `p = softmax(S / tau)`.
fn softmax_backward(g_p: &[f64], p: &[f64], tau: f64) -> Vec<f64> {
    let weighted: f64 = g_p.iter().zip(p).map(|(g, pi)| g * pi).sum();
    g_p.iter()
        .zip(p)
        .map(|(g, pi)| pi * (g - weighted) / tau)
        .collect()
}

/// Computes the loss for one sample and accumulates `scale *` its parameter
/// gradients into `grads`. Returns `(loss, prediction)`.
pub fn accumulate_sample_grads(
    params: &ModelParams,
    feats: &SampleFeatures,
    settings: &ForwardSettings,
    grads: &mut ParamGrads,
    scale: f64,
) -> Result<(f64, f64)> {
    let state = forward_state(params, feats, settings)?;
    let levels = state.p_image.len();
    let l = levels as f64;
    let diff = state.q_final - feats.target;
    let loss = diff.abs();
    // subgradient 0 exactly at the kink
    let g_q = if diff > 0.0 {
        scale
    } else if diff < 0.0 {
        -scale
    } else {
        0.0
    };
    if g_q == 0.0 {
        return Ok((loss, state.q_final));
    }

    // fusion backward
    let (g_q_image, g_q_patch, g_fg) = match settings.mode {
        ImageInputMode::OnlyImage => (g_q, 0.0, g_q),
        ImageInputMode::OnlyPatches => (0.0, g_q, g_q),
        ImageInputMode::Both => (g_q * state.alpha, g_q * (1.0 - state.alpha), g_q),
    };
    if settings.mode == ImageInputMode::Both && settings.alpha_mode == AlphaMode::Learned {
        let a = state.alpha;
        grads.alpha_theta += g_q * (state.q_cg_image - state.q_cg_patch) * a * (1.0 - a);
    }
    // fine score backward; aliased sides both flow into the live pathway
    let (g_w_image_scalar, g_w_patch_scalar) = match settings.mode {
        ImageInputMode::OnlyImage => (g_fg * l, 0.0),
        ImageInputMode::OnlyPatches => (0.0, g_fg * l),
        ImageInputMode::Both => (g_fg * l / 2.0, g_fg * l / 2.0),
    };

    // coarse score backward: d q_cg / d p_j = L/(L-1) * (j+1)
    let coarse_coeff = l / (l - 1.0);
    let g_p_image: Vec<f64> = (0..levels)
        .map(|j| g_q_image * coarse_coeff * (j + 1) as f64)
        .collect();
    let g_p_patch: Vec<f64> = (0..levels)
        .map(|j| g_q_patch * coarse_coeff * (j + 1) as f64)
        .collect();
    let g_s_image = softmax_backward(&g_p_image, &state.p_image, settings.tau);
    let g_s_patch = softmax_backward(&g_p_patch, &state.p_patch, settings.tau);

    let dim = params.w_image.nrows();
    let use_image = settings.mode != ImageInputMode::OnlyPatches;
    let use_patches = settings.mode != ImageInputMode::OnlyImage;

    // image embedding gradient
    if use_image {
        let img = state.image.as_ref().expect("image pathway active");
        let mut g_e = Array1::<f64>::zeros(dim);
        for (j, s) in state.sentences.iter().enumerate() {
            if g_s_image[j] != 0.0 {
                g_e.scaled_add(g_s_image[j], &s.e);
            }
        }
        g_e.scaled_add(g_w_image_scalar, &state.word_mean);
        let g_h = normalize_backward(&g_e, img);
        outer_accumulate(&mut grads.w_image, &g_h, &feats.image);
    }

    // patch pathway gradient through the mean of normalized rows
    let mut m_hat = None;
    if use_patches {
        let (mean, norm) = state.patch_mean.as_ref().expect("patch pathway active");
        let mh = mean / *norm;
        let mut g_mh = Array1::<f64>::zeros(dim);
        for (j, s) in state.sentences.iter().enumerate() {
            if g_s_patch[j] != 0.0 {
                g_mh.scaled_add(g_s_patch[j], &s.e);
            }
        }
        g_mh.scaled_add(g_w_patch_scalar, &state.word_mean);
        // backward through m_hat = m / |m|
        let dot = g_mh.dot(&mh);
        let g_mean = (&g_mh - &(dot * &mh)) / *norm;
        let per_patch = &g_mean / state.patches.len() as f64;
        for (i, p) in state.patches.iter().enumerate() {
            let g_h = normalize_backward(&per_patch, p);
            outer_accumulate(&mut grads.w_image, &g_h, &feats.patches.row(i).to_owned());
        }
        m_hat = Some(mh);
    }

    // sentence gradients
    for (j, s) in state.sentences.iter().enumerate() {
        let mut g_e = Array1::<f64>::zeros(dim);
        if use_image && g_s_image[j] != 0.0 {
            g_e.scaled_add(g_s_image[j], &state.image.as_ref().unwrap().e);
        }
        if use_patches && g_s_patch[j] != 0.0 {
            g_e.scaled_add(g_s_patch[j], m_hat.as_ref().unwrap());
        }
        if g_e.iter().all(|&x| x == 0.0) {
            continue;
        }
        let g_h = normalize_backward(&g_e, s);
        outer_accumulate(&mut grads.w_text, &g_h, &feats.sentences.row(j).to_owned());
    }

    // word gradients: w = mean_k e_img . e_word_k
    let k = state.words.len() as f64;
    for (idx, w) in state.words.iter().enumerate() {
        let mut g_e = Array1::<f64>::zeros(dim);
        if use_image && g_w_image_scalar != 0.0 {
            g_e.scaled_add(g_w_image_scalar / k, &state.image.as_ref().unwrap().e);
        }
        if use_patches && g_w_patch_scalar != 0.0 {
            g_e.scaled_add(g_w_patch_scalar / k, m_hat.as_ref().unwrap());
        }
        if g_e.iter().all(|&x| x == 0.0) {
            continue;
        }
        let g_h = normalize_backward(&g_e, w);
        outer_accumulate(&mut grads.w_text, &g_h, &feats.words.row(idx).to_owned());
    }

    Ok((loss, state.q_final))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
        let v: Array1<f64> = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
        let n = v.dot(&v).sqrt();
        v / n
    }

    fn toy_features(seed: u64, dim: usize) -> SampleFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleFeatures {
            name: format!("toy{seed}"),
            image: random_unit(&mut rng, dim),
            patches: ndarray::stack(
                Axis(0),
                &(0..3)
                    .map(|_| random_unit(&mut rng, dim))
                    .collect::<Vec<_>>()
                    .iter()
                    .map(|v| v.view())
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
            sentences: ndarray::stack(
                Axis(0),
                &(0..5)
                    .map(|_| random_unit(&mut rng, dim))
                    .collect::<Vec<_>>()
                    .iter()
                    .map(|v| v.view())
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
            words: ndarray::stack(
                Axis(0),
                &(0..4)
                    .map(|_| random_unit(&mut rng, dim))
                    .collect::<Vec<_>>()
                    .iter()
                    .map(|v| v.view())
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
            target: 3.7,
        }
    }

    fn perturbed_params(seed: u64, dim: usize) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::identity(dim);
        for w in [&mut params.w_image, &mut params.w_text] {
            for x in w.iter_mut() {
                *x += rng.gen_range(-0.05..0.05);
            }
        }
        params.alpha_theta = 0.3;
        params
    }

    fn settings(mode: ImageInputMode, alpha_mode: AlphaMode) -> ForwardSettings {
        ForwardSettings { tau: 0.5, mode, alpha_mode, task: TaskKind::Perception }
    }

    fn batch_loss(
        params: &ModelParams,
        batch: &[SampleFeatures],
        s: &ForwardSettings,
    ) -> f64 {
        batch
            .iter()
            .map(|f| (predict_sample(params, f, s).unwrap() - f.target).abs())
            .sum::<f64>()
            / batch.len() as f64
    }

    fn check_grads(mode: ImageInputMode, alpha_mode: AlphaMode) {
        let dim = 6;
        let batch: Vec<SampleFeatures> = (0..4).map(|i| toy_features(100 + i, dim)).collect();
        let params = perturbed_params(7, dim);
        let s = settings(mode, alpha_mode);

        let mut grads = ParamGrads::zeros_like(&params);
        for f in &batch {
            accumulate_sample_grads(&params, f, &s, &mut grads, 1.0 / batch.len() as f64)
                .unwrap();
        }

        let h = 1e-6;
        let fd = |params: &ModelParams| batch_loss(params, &batch, &s);
        // finite differences over every projection entry
        for tensor in [0usize, 1] {
            let analytic = if tensor == 0 { &grads.w_image } else { &grads.w_text };
            for i in 0..dim {
                for j in 0..dim {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    {
                        let (wp, wm) = if tensor == 0 {
                            (&mut plus.w_image, &mut minus.w_image)
                        } else {
                            (&mut plus.w_text, &mut minus.w_text)
                        };
                        wp[[i, j]] += h;
                        wm[[i, j]] -= h;
                    }
                    let numeric = (fd(&plus) - fd(&minus)) / (2.0 * h);
                    let a = analytic[[i, j]];
                    assert!(
                        (a - numeric).abs() <= 1e-6 * a.abs().max(1.0),
                        "tensor {tensor} [{i},{j}]: analytic {a}, numeric {numeric}"
                    );
                }
            }
        }
        // alpha logit
        let mut plus = params.clone();
        plus.alpha_theta += h;
        let mut minus = params.clone();
        minus.alpha_theta -= h;
        let numeric = (fd(&plus) - fd(&minus)) / (2.0 * h);
        assert!(
            (grads.alpha_theta - numeric).abs() <= 1e-6,
            "alpha: analytic {}, numeric {numeric}",
            grads.alpha_theta
        );
    }

    #[test]
    fn gradients_match_finite_differences_both() {
        check_grads(ImageInputMode::Both, AlphaMode::Learned);
    }

    #[test]
    fn gradients_match_finite_differences_fixed_alpha() {
        check_grads(ImageInputMode::Both, AlphaMode::Fixed0);
        check_grads(ImageInputMode::Both, AlphaMode::Fixed1);
    }

    #[test]
    fn gradients_match_finite_differences_reduced_modes() {
        check_grads(ImageInputMode::OnlyImage, AlphaMode::Learned);
        check_grads(ImageInputMode::OnlyPatches, AlphaMode::Learned);
    }

    #[test]
    fn sigmoid_alpha_stays_in_unit_interval_during_descent() {
        // even huge logits give a valid alpha
        for theta in [-200.0, -5.0, 0.0, 5.0, 200.0] {
            let a = sigmoid(theta);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let dim = 5;
        let mut feats = toy_features(42, dim);
        let params = perturbed_params(3, dim);
        let s = settings(ImageInputMode::Both, AlphaMode::Learned);
        feats.target = predict_sample(&params, &feats, &s).unwrap();
        let mut grads = ParamGrads::zeros_like(&params);
        let (loss, _) =
            accumulate_sample_grads(&params, &feats, &s, &mut grads, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.w_image.iter().all(|&g| g == 0.0));
        assert!(grads.w_text.iter().all(|&g| g == 0.0));
        assert_eq!(grads.alpha_theta, 0.0);
    }
}
