//! Classifier building blocks: a pluggable convolutional backbone, the
//! pooling/dense/dropout/softmax head, and the gradient queries explainers use.

mod backbone;
mod classifier;
mod head;

pub use backbone::{Backbone, ConvStage, TinyBackbone};
pub use classifier::{Classifier, Gradients};
pub use head::{Head, HeadConfig, HeadTrace};

use serde::{Deserialize, Serialize};

use crate::{Result, Tensor3};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A parameter tensor with a name, used for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub dims: (usize, usize, usize),
    pub data: Vec<f64>,
}

/// Activations of one layer together with d(class score)/d(activations).
#[derive(Debug, Clone)]
pub struct LayerGradient {
    pub activations: Tensor3,
    pub gradients: Tensor3,
}

/// What gradient-based explainers need from a model.
///
/// The class score is the pre-softmax logit.
pub trait GradientModel: Sync {
    fn num_classes(&self) -> usize;

    /// Layers whose activations can be explained; the last is the default.
    fn layer_names(&self) -> Vec<String>;

    fn logits(&self, x: &Tensor3) -> Vec<f64>;

    fn probabilities(&self, x: &Tensor3) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// d(logit[class]) / d(x).
    fn input_gradient(&self, x: &Tensor3, class: usize) -> Tensor3;

    /// Activations of `layer` and d(logit[class]) / d(activations). Unknown
    /// layer names are an invalid-argument error.
    fn layer_gradient(&self, x: &Tensor3, class: usize, layer: &str) -> Result<LayerGradient>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let q = softmax(&[1.0, 2.0, 3.0]);
        let r = softmax(&[-9.0, -8.0, -7.0]);
        for (a, b) in q.iter().zip(&r) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
