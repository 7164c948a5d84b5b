//! Rank and linear correlation metrics for prediction-vs-MOS evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::TaskKind;

/// Per-image predictions, targets and their aggregate correlations for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
    pub srcc: f64,
    pub plcc: f64,
    pub task: TaskKind,
}

impl EvalResult {
    /// Computes both correlations for the given prediction/target pairs.
    pub fn new(predictions: Vec<f64>, targets: Vec<f64>, task: TaskKind) -> Result<Self> {
        let srcc = srcc(&predictions, &targets)?;
        let plcc = plcc(&predictions, &targets)?;
        Ok(EvalResult { predictions, targets, srcc, plcc, task })
    }
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Input(format!(
            "prediction/target length mismatch ({} vs {})",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 points, got {}",
            pred.len()
        )));
    }
    Ok(())
}

/// Fractional (average) ranks, 1-based. Tied values share the mean of the
/// positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation.
///
/// Ranks are fractional (ties get average ranks) and the correlation is the
/// Pearson correlation of the two rank vectors, which reduces to the
/// rank-difference closed form when no ties exist.
pub fn srcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let rp = average_ranks(pred);
    let rt = average_ranks(target);
    pearson(&rp, &rt).map_err(|_| {
        Error::UndefinedCorrelation(
            "rank correlation undefined for a constant input vector".into(),
        )
    })
}

/// Tie-free Spearman closed form `1 - 6 * sum d_m^2 / (M (M^2 - 1))`.
///
/// Returns an error when either vector contains ties; use [`srcc`] for the
/// general case. Kept as a second algebraic route for cross-checking.
pub fn srcc_closed_form(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let rp = average_ranks(pred);
    let rt = average_ranks(target);
    let has_ties = |r: &[f64]| r.iter().any(|x| x.fract() != 0.0);
    if has_ties(&rp) || has_ties(&rt) {
        return Err(Error::UndefinedCorrelation(
            "closed-form rank correlation requires tie-free data".into(),
        ));
    }
    let m = pred.len() as f64;
    let sum_d2: f64 = rp
        .iter()
        .zip(&rt)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(1.0 - 6.0 * sum_d2 / (m * (m * m - 1.0)))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "linear correlation undefined for zero-variance input".into(),
        ));
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson linear correlation.
pub fn plcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    pearson(pred, target)
}

/// PLCC after a four-parameter logistic remap of the predictions.
///
/// Some quality-assessment evaluations fit `f(x) = b2 + (b1 - b2) / (1 +
/// exp(-(x - b3) / |b4|))` to the targets before computing PLCC. Off by
/// default in reporting; provided for cross-comparison.
pub fn plcc_logistic(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let params = fit_logistic(pred, target)?;
    let mapped: Vec<f64> = pred.iter().map(|&x| logistic4(x, &params)).collect();
    // fall back to the raw PLCC when the fit collapsed to a constant
    match pearson(&mapped, target) {
        Ok(r) => Ok(r),
        Err(_) => pearson(pred, target),
    }
}

fn logistic4(x: f64, b: &[f64; 4]) -> f64 {
    b[1] + (b[0] - b[1]) / (1.0 + (-(x - b[2]) / b[3].abs().max(1e-12)).exp())
}

/// Least-squares fit of the 4-parameter logistic by Nelder-Mead.
fn fit_logistic(pred: &[f64], target: &[f64]) -> Result<[f64; 4]> {
    let mse = |b: &[f64; 4]| -> f64 {
        pred.iter()
            .zip(target)
            .map(|(&x, &y)| {
                let e = logistic4(x, b) - y;
                e * e
            })
            .sum::<f64>()
            / pred.len() as f64
    };
    let tmax = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tmin = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let pmean = pred.iter().sum::<f64>() / pred.len() as f64;
    let pstd = (pred.iter().map(|&x| (x - pmean) * (x - pmean)).sum::<f64>()
        / pred.len() as f64)
        .sqrt();
    if pstd == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "logistic fit undefined for constant predictions".into(),
        ));
    }
    let init = [tmax, tmin, pmean, (pstd / 4.0).max(1e-6)];

    // standard Nelder-Mead with fixed coefficients
    let n = 4;
    let mut simplex: Vec<[f64; 4]> = vec![init];
    for i in 0..n {
        let mut v = init;
        v[i] += if v[i].abs() > 1e-8 { 0.1 * v[i].abs() } else { 0.1 };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(mse).collect();
    for _ in 0..400 {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let best = idx[0];
        let worst = idx[n];
        let second_worst = idx[n - 1];
        if (fvals[worst] - fvals[best]).abs() < 1e-14 {
            break;
        }
        let mut centroid = [0.0; 4];
        for &i in idx.iter().take(n) {
            for d in 0..4 {
                centroid[d] += simplex[i][d] / n as f64;
            }
        }
        let shifted = |coef: f64| -> [f64; 4] {
            let mut v = [0.0; 4];
            for d in 0..4 {
                v[d] = centroid[d] + coef * (centroid[d] - simplex[worst][d]);
            }
            v
        };
        let reflected = shifted(1.0);
        let fr = mse(&reflected);
        if fr < fvals[best] {
            let expanded = shifted(2.0);
            let fe = mse(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                fvals[worst] = fe;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = fr;
            }
        } else if fr < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = fr;
        } else {
            let contracted = shifted(-0.5);
            let fc = mse(&contracted);
            if fc < fvals[worst] {
                simplex[worst] = contracted;
                fvals[worst] = fc;
            } else {
                for &i in idx.iter().skip(1) {
                    for d in 0..4 {
                        simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
                    }
                    fvals[i] = mse(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| fvals[a].total_cmp(&fvals[b]))
        .expect("non-empty simplex");
    Ok(simplex[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn srcc_perfect_agreement() {
        let v = vec![1.0, 3.0, 2.0, 5.0, 4.0];
        assert_abs_diff_eq!(srcc(&v, &v).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn srcc_perfect_inversion() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(srcc(&a, &b).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn srcc_hand_example_is_exactly_point_nine() {
        let pred = vec![1.0, 2.0, 3.0, 5.0, 4.0];
        let target = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let r = srcc(&pred, &target).unwrap();
        assert!((r - 0.9).abs() < 1e-12, "got {r}");
        let closed = srcc_closed_form(&pred, &target).unwrap();
        assert!((closed - 0.9).abs() < 1e-12, "got {closed}");
    }

    #[test]
    fn srcc_ties_use_average_ranks() {
        // values (1, 1, 2): ranks (1.5, 1.5, 3)
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        let pred = vec![1.0, 1.0, 2.0, 3.0];
        let target = vec![0.0, 1.0, 2.0, 3.0];
        assert!(srcc(&pred, &target).unwrap() > 0.9);
        assert!(matches!(
            srcc_closed_form(&pred, &target),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn srcc_constant_vector_is_undefined() {
        let a = vec![2.0, 2.0, 2.0];
        let b = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            srcc(&a, &b),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn srcc_too_short_is_undefined() {
        assert!(matches!(
            srcc(&[1.0], &[1.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn plcc_affine_map_is_one() {
        let target = vec![0.5, 1.0, 2.5, 4.0, 3.0];
        let pred: Vec<f64> = target.iter().map(|&t| 2.0 * t + 3.0).collect();
        assert_abs_diff_eq!(plcc(&pred, &target).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn plcc_negation_is_minus_one() {
        let target = vec![1.0, 2.0, 3.0];
        let pred: Vec<f64> = target.iter().map(|&t| -t).collect();
        assert_abs_diff_eq!(plcc(&pred, &target).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn plcc_hand_example() {
        let pred = vec![1.0, 2.0, 4.0];
        let target = vec![1.0, 2.0, 3.0];
        // cov = 3, var_pred = 42/9, var_target = 2
        let expected = 3.0 / ((42.0 / 9.0f64).sqrt() * 2.0f64.sqrt());
        let r = plcc(&pred, &target).unwrap();
        assert_abs_diff_eq!(r, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.9820, epsilon = 1e-4);
    }

    #[test]
    fn plcc_zero_variance_is_undefined() {
        assert!(matches!(
            plcc(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn logistic_plcc_recovers_sigmoid_distortion() {
        // target = sigmoid-shaped function of pred; the remap should get
        // close to 1 while staying a valid correlation.
        let pred: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let target: Vec<f64> = pred
            .iter()
            .map(|&x| 4.0 / (1.0 + (-(x - 5.0)).exp()) + 1.0)
            .collect();
        let raw = plcc(&pred, &target).unwrap();
        let remapped = plcc_logistic(&pred, &target).unwrap();
        assert!(remapped > raw - 1e-9, "remapped {remapped} < raw {raw}");
        assert!(remapped > 0.999, "remapped {remapped}");
    }

    #[test]
    fn eval_result_carries_both_metrics() {
        let r = EvalResult::new(
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.5, 2.9],
            TaskKind::Perception,
        )
        .unwrap();
        assert_abs_diff_eq!(r.srcc, 1.0, epsilon = 1e-12);
        assert!(r.plcc > 0.9);
    }
}
