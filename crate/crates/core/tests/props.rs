//! Property tests for the similarity, regression and metrics invariants.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use tspmgs_core::regression::mae_loss;
use tspmgs_core::{
    coarse_grained, coarse_score, cosine, fine_grained, fine_score, fuse, plcc, srcc, AlphaPolicy,
    TaskKind,
};

fn unit_vec(values: Vec<f64>) -> Option<Array1<f64>> {
    let v = Array1::from_vec(values);
    let n = v.dot(&v).sqrt();
    (n > 1e-9).then(|| v / n)
}

fn rows(vectors: &[Array1<f64>]) -> Array2<f64> {
    let dim = vectors[0].len();
    let mut m = Array2::zeros((vectors.len(), dim));
    for (i, v) in vectors.iter().enumerate() {
        m.row_mut(i).assign(v);
    }
    m
}

prop_compose! {
    fn arb_unit(dim: usize)(values in prop::collection::vec(-1.0f64..1.0, dim)) -> Option<Array1<f64>> {
        unit_vec(values)
    }
}

proptest! {
    #[test]
    fn coarse_probabilities_form_a_distribution(
        img in arb_unit(8),
        sents in prop::collection::vec(arb_unit(8), 2..6),
        tau in 0.05f64..2.0,
    ) {
        let (Some(img), sents) = (img, sents.into_iter().flatten().collect::<Vec<_>>()) else { return Ok(()); };
        prop_assume!(sents.len() >= 2);
        let p = coarse_grained(img.view(), rows(&sents).view(), tau).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        for &pi in &p {
            prop_assert!(pi > 0.0 && pi < 1.0);
        }
    }

    #[test]
    fn coarse_is_invariant_to_positive_rescaling(
        img in arb_unit(6),
        sents in prop::collection::vec(arb_unit(6), 3..5),
        scale in 0.01f64..100.0,
    ) {
        let (Some(img), sents) = (img, sents.into_iter().flatten().collect::<Vec<_>>()) else { return Ok(()); };
        prop_assume!(sents.len() >= 2);
        let mat = rows(&sents);
        let p = coarse_grained(img.view(), mat.view(), 0.3).unwrap();
        let scaled = &img * scale;
        let q = coarse_grained(scaled.view(), mat.view(), 0.3).unwrap();
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(argmax(&p), argmax(&q));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn raising_one_similarity_raises_its_probability(
        cosines in prop::collection::vec(-0.99f64..0.99, 3..6),
        bump in 0.001f64..0.01,
        idx in 0usize..6,
    ) {
        // embed prescribed cosines in 2-d: img = e1, sentence_j = (c_j, sqrt(1 - c_j^2))
        let idx = idx % cosines.len();
        prop_assume!(cosines[idx] + bump < 1.0);
        let img = Array1::from_vec(vec![1.0, 0.0]);
        let build = |cs: &[f64]| {
            let vecs: Vec<Array1<f64>> = cs
                .iter()
                .map(|&c| Array1::from_vec(vec![c, (1.0 - c * c).sqrt()]))
                .collect();
            rows(&vecs)
        };
        let p = coarse_grained(img.view(), build(&cosines).view(), 0.5).unwrap();
        let mut bumped = cosines.clone();
        bumped[idx] += bump;
        let q = coarse_grained(img.view(), build(&bumped).view(), 0.5).unwrap();
        prop_assert!(q[idx] > p[idx]);
    }

    #[test]
    fn fine_grained_matches_loop_oracle(
        img in arb_unit(10),
        words in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 10), 1..9),
    ) {
        let Some(img) = img else { return Ok(()); };
        let word_vecs: Vec<Array1<f64>> = words
            .into_iter()
            .filter_map(unit_vec)
            .collect();
        prop_assume!(!word_vecs.is_empty());
        let mat = rows(&word_vecs);
        let got = fine_grained(img.view(), mat.view()).unwrap();
        // independent oracle: explicit per-word cosine, explicit mean
        let mut oracle = 0.0;
        for w in &word_vecs {
            let dot: f64 = img.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let ni: f64 = img.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nw: f64 = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            oracle += dot / (ni * nw);
        }
        oracle /= word_vecs.len() as f64;
        prop_assert!((got - oracle).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&got));
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        a in prop::collection::vec(-3.0f64..3.0, 6),
        b in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let (Some(a), Some(b)) = (unit_vec(a), unit_vec(b)) else { return Ok(()); };
        let ab = cosine(a.view(), b.view()).unwrap();
        let ba = cosine(b.view(), a.view()).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn coarse_score_stays_in_range_and_rewards_upward_mass(
        raw in prop::collection::vec(0.01f64..1.0, 2..6),
        from in 0usize..6,
        eps_frac in 0.1f64..0.9,
    ) {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let levels = p.len();
        let score = coarse_score(&p).unwrap();
        prop_assert!((-1e-12..=levels as f64 + 1e-12).contains(&score));

        // move mass from a lower level to a strictly higher one
        let from = from % levels;
        prop_assume!(from + 1 < levels);
        let eps = p[from] * eps_frac;
        let mut moved = p.clone();
        moved[from] -= eps;
        moved[levels - 1] += eps;
        let moved_score = coarse_score(&moved).unwrap();
        prop_assert!(moved_score > score);
    }

    #[test]
    fn fuse_is_linear_in_each_argument(
        qi in -5.0f64..5.0,
        qp in -5.0f64..5.0,
        qf in -5.0f64..5.0,
        alpha in 0.0f64..1.0,
        delta in 0.1f64..2.0,
    ) {
        let policy = AlphaPolicy { mode: tspmgs_core::AlphaMode::Learned, value: alpha };
        let base = fuse(qi, qp, qf, policy, TaskKind::Perception).unwrap().q_final;
        let di = fuse(qi + delta, qp, qf, policy, TaskKind::Perception).unwrap().q_final;
        let dp = fuse(qi, qp + delta, qf, policy, TaskKind::Perception).unwrap().q_final;
        let df = fuse(qi, qp, qf + delta, policy, TaskKind::Perception).unwrap().q_final;
        prop_assert!((di - base - alpha * delta).abs() < 1e-9);
        prop_assert!((dp - base - (1.0 - alpha) * delta).abs() < 1e-9);
        prop_assert!((df - base - delta).abs() < 1e-9);
    }

    #[test]
    fn fine_score_is_the_scaled_midpoint(
        wi in -1.0f64..1.0,
        wp in -1.0f64..1.0,
        levels in 2usize..8,
    ) {
        let got = fine_score(wi, wp, levels);
        prop_assert!((got - (wi + wp) / 2.0 * levels as f64).abs() < 1e-12);
        prop_assert!(got.abs() <= levels as f64 + 1e-12);
    }

    #[test]
    fn mae_gradient_matches_finite_differences_away_from_kink(
        q in -10.0f64..10.0,
        mos in -10.0f64..10.0,
    ) {
        prop_assume!((q - mos).abs() > 1e-3);
        let h = 1e-6;
        let numeric = (mae_loss(q + h, mos).unwrap() - mae_loss(q - h, mos).unwrap()) / (2.0 * h);
        let analytic = (q - mos).signum();
        prop_assert!((numeric - analytic).abs() < 1e-6);
    }

    #[test]
    fn plcc_is_invariant_to_positive_affine_maps(
        base in prop::collection::vec(-10.0f64..10.0, 3..20),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let deduped: Vec<f64> = base.iter().enumerate().map(|(i, &x)| x + i as f64 * 1e-6).collect();
        let target: Vec<f64> = deduped.iter().map(|&x| x * 1.7 - 0.3).collect();
        prop_assume!(plcc(&deduped, &target).is_ok());
        let r0 = plcc(&deduped, &target).unwrap();
        let mapped: Vec<f64> = deduped.iter().map(|&x| scale * x + shift).collect();
        let r1 = plcc(&mapped, &target).unwrap();
        prop_assert!((r0 - r1).abs() < 1e-9);
    }

    #[test]
    fn srcc_is_invariant_to_strictly_monotone_transforms(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20),
    ) {
        let pred: Vec<f64> = pairs.iter().enumerate().map(|(i, &(x, _))| x + i as f64 * 1e-9).collect();
        let tgt: Vec<f64> = pairs.iter().enumerate().map(|(i, &(_, y))| y + i as f64 * 1e-9).collect();
        prop_assume!(srcc(&pred, &tgt).is_ok());
        let r0 = srcc(&pred, &tgt).unwrap();
        // strictly increasing transform of predictions
        let mapped: Vec<f64> = pred.iter().map(|&x| x.exp() + x.powi(3)).collect();
        let r1 = srcc(&mapped, &tgt).unwrap();
        prop_assert!((r0 - r1).abs() < 1e-9);
    }

    #[test]
    fn srcc_rank_path_equals_closed_form_without_ties(
        base in prop::collection::vec(-100.0f64..100.0, 3..30),
        shuffle_seed in 0u64..1000,
    ) {
        // build tie-free vectors by construction
        let mut pred: Vec<f64> = base.iter().enumerate().map(|(i, &x)| x + i as f64 * 1e-3).collect();
        let mut tgt = pred.clone();
        // deterministic pseudo-shuffle of the target
        let n = tgt.len();
        for i in 0..n {
            let j = ((shuffle_seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
            tgt.swap(i, j);
        }
        pred.dedup_by(|a, b| a == b);
        prop_assume!(pred.len() == n);
        let general = srcc(&pred, &tgt).unwrap();
        let closed = tspmgs_core::metrics::srcc_closed_form(&pred, &tgt).unwrap();
        prop_assert!((general - closed).abs() < 1e-12);
    }
}
