//! Class weights for cost-sensitive training.
//!
//! Weights follow the balanced heuristic `w_c = N / (K · n_c)`: a class's total
//! loss mass `n_c · w_c` is the same for every class, so minority classes are
//! up-weighted in proportion to their scarcity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nn::softmax;
use crate::{Error, Label, Result};

/// Probabilities are clipped to at least this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights {
    pub weights: BTreeMap<Label, f64>,
}

impl ClassWeights {
    /// Weight 1 for every class.
    pub fn uniform() -> Self {
        Self {
            weights: Label::ALL.iter().map(|&l| (l, 1.0)).collect(),
        }
    }

    pub fn get(&self, label: Label) -> Result<f64> {
        self.weights
            .get(&label)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no class weight for `{label}`")))
    }
}

pub fn class_weights(counts: &BTreeMap<Label, usize>) -> Result<ClassWeights> {
    if counts.len() < 2 {
        return Err(Error::invalid(format!(
            "class weights need at least 2 classes, got {}",
            counts.len()
        )));
    }
    if let Some((label, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(Error::invalid(format!("class `{label}` has zero samples")));
    }
    let total: usize = counts.values().sum();
    let k = counts.len() as f64;
    Ok(ClassWeights {
        weights: counts
            .iter()
            .map(|(&label, &n)| (label, total as f64 / (k * n as f64)))
            .collect(),
    })
}

/// `-w_label · ln(p_label)` with `p` clipped to `[PROB_FLOOR, 1]`.
pub fn weighted_cross_entropy(probs: &[f64], label: Label, weights: &ClassWeights) -> Result<f64> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    let p = *probs
        .get(label.index())
        .ok_or_else(|| Error::invalid(format!("no probability for class `{label}`")))?;
    let w = weights.get(label)?;
    Ok(-w * p.clamp(PROB_FLOOR, 1.0).ln())
}

/// Weighted cross-entropy of `softmax(logits)` and its gradient with respect
/// to the logits, `w · (softmax − onehot)`.
pub fn weighted_cross_entropy_with_logits(
    logits: &[f64],
    label: Label,
    weights: &ClassWeights,
) -> Result<(f64, Vec<f64>)> {
    let probs = softmax(logits);
    let loss = weighted_cross_entropy(&probs, label, weights)?;
    let w = weights.get(label)?;
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| w * (p - if i == label.index() { 1.0 } else { 0.0 }))
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(real: usize, fake: usize) -> BTreeMap<Label, usize> {
        BTreeMap::from([(Label::Real, real), (Label::Fake, fake)])
    }

    #[test]
    fn balanced_counts_give_unit_weights() {
        let w = class_weights(&counts(100, 100)).unwrap();
        assert_eq!(w.weights[&Label::Real], 1.0);
        assert_eq!(w.weights[&Label::Fake], 1.0);
    }

    #[test]
    fn reported_training_distributions() {
        // 11378 / (2 · 8995) and 11378 / (2 · 2383).
        let w = class_weights(&counts(2383, 8995)).unwrap();
        assert!((w.weights[&Label::Fake] - 0.632_462_479_155_086_1).abs() < 1e-12);
        assert!((w.weights[&Label::Real] - 2.387_326_898_866_974_5).abs() < 1e-12);
        // 10575 / (2 · 6728) and 10575 / (2 · 3847).
        let w = class_weights(&counts(3847, 6728)).unwrap();
        assert!((w.weights[&Label::Fake] - 0.785_894_768_133_174_8).abs() < 1e-12);
        assert!((w.weights[&Label::Real] - 1.374_447_621_523_264_8).abs() < 1e-12);
    }

    #[test]
    fn invalid_counts() {
        assert!(class_weights(&counts(0, 5)).is_err());
        assert!(class_weights(&BTreeMap::from([(Label::Fake, 5)])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let unit = ClassWeights::uniform();
        let l = weighted_cross_entropy(&[0.5, 0.5], Label::Fake, &unit).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let double = ClassWeights {
            weights: BTreeMap::from([(Label::Real, 2.0), (Label::Fake, 1.0)]),
        };
        let l = weighted_cross_entropy(&[0.5, 0.5], Label::Real, &double).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        // Clipping keeps a zero probability finite.
        let l = weighted_cross_entropy(&[1.0, 0.0], Label::Fake, &unit).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_errors() {
        let partial = ClassWeights {
            weights: BTreeMap::from([(Label::Fake, 1.0)]),
        };
        assert!(weighted_cross_entropy(&[0.5, 0.5], Label::Real, &partial).is_err());
        assert!(weighted_cross_entropy(&[0.5, 0.6], Label::Real, &ClassWeights::uniform()).is_err());
    }

    proptest! {
        #[test]
        fn weights_conserve_mass(real in 1usize..100_000, fake in 1usize..100_000, scale in 1usize..50) {
            let w = class_weights(&counts(real, fake)).unwrap();
            let mass = real as f64 * w.weights[&Label::Real] + fake as f64 * w.weights[&Label::Fake];
            prop_assert!((mass - (real + fake) as f64).abs() <= 1e-9 * (real + fake) as f64);
            let scaled = class_weights(&counts(real * scale, fake * scale)).unwrap();
            for l in Label::ALL {
                prop_assert!((scaled.weights[&l] - w.weights[&l]).abs() <= 1e-12 * w.weights[&l]);
            }
            if real < fake {
                prop_assert!(w.weights[&Label::Real] >= w.weights[&Label::Fake]);
            }
        }

        #[test]
        fn logit_gradient_matches_central_differences(
            a in -6.0f64..6.0, b in -6.0f64..6.0, wr in 0.1f64..5.0, wf in 0.1f64..5.0, fake in any::<bool>()
        ) {
            let weights = ClassWeights { weights: BTreeMap::from([(Label::Real, wr), (Label::Fake, wf)]) };
            let label = if fake { Label::Fake } else { Label::Real };
            let logits = [a, b];
            let (_, grad) = weighted_cross_entropy_with_logits(&logits, label, &weights).unwrap();
            let h = 1e-6;
            for i in 0..2 {
                let mut up = logits;
                up[i] += h;
                let mut down = logits;
                down[i] -= h;
                let fd = (weighted_cross_entropy_with_logits(&up, label, &weights).unwrap().0
                    - weighted_cross_entropy_with_logits(&down, label, &weights).unwrap().0) / (2.0 * h);
                let scale = fd.abs().max(grad[i].abs()).max(1e-3);
                prop_assert!((fd - grad[i]).abs() / scale <= 1e-5, "i={} fd={} analytic={}", i, fd, grad[i]);
            }
        }

        #[test]
        fn loss_matches_high_precision_oracle(p in 1e-9f64..1.0, w in 0.01f64..50.0, fake in any::<bool>()) {
            use astro_float::{BigFloat, Consts, RoundingMode};
            let label = if fake { Label::Fake } else { Label::Real };
            let mut probs = [1.0 - p, 1.0 - p];
            probs[label.index()] = p;
            let weights = ClassWeights { weights: BTreeMap::from([(Label::Real, w), (Label::Fake, w)]) };
            let ours = weighted_cross_entropy(&probs, label, &weights).unwrap();
            let (prec, rm) = (256, RoundingMode::ToEven);
            let mut cc = Consts::new().unwrap();
            let oracle = BigFloat::from_f64(p, prec).ln(prec, rm, &mut cc).mul(&BigFloat::from_f64(w, prec), prec, rm).neg();
            let diff = oracle.sub(&BigFloat::from_f64(ours, prec), prec, rm).abs();
            let tol = BigFloat::from_f64(1e-12 * ours.abs().max(1.0), prec);
            prop_assert!(diff.cmp(&tol).is_some_and(|c| c <= 0), "p={} w={} ours={}", p, w, ours);
        }
    }
}
