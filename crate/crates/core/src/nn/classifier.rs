use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{softmax, Backbone, GradientModel, Head, LayerGradient, NamedTensor, TinyBackbone};
use crate::dataset::{read_tensor, write_tensor};
use crate::imbalance::{weighted_cross_entropy_with_logits, ClassWeights};
use crate::{Error, Label, Result, Tensor3};

/// Backbone, global average pooling and head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<B: Backbone = TinyBackbone> {
    pub backbone: B,
    pub head: Head,
}

/// Parameter gradients, laid out like [`Head::params`] and
/// [`Backbone::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub head: Vec<Vec<f64>>,
    /// Empty when the backbone is frozen.
    pub backbone: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like<B: Backbone>(model: &Classifier<B>, with_backbone: bool) -> Self {
        let zeros = |ps: Vec<&[f64]>| ps.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            head: zeros(model.head.params()),
            backbone: if with_backbone {
                zeros(model.backbone.params())
            } else {
                Vec::new()
            },
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x *= s));
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.head.iter().chain(&self.backbone)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.head.iter_mut().chain(self.backbone.iter_mut())
    }
}

/// Spatial mean of every channel.
pub(crate) fn global_average_pool(features: &Tensor3) -> Vec<f64> {
    features.spatial_mean()
}

fn unpool(dpooled: &[f64], h: usize, w: usize) -> Tensor3 {
    let n = (h * w) as f64;
    Tensor3::from_fn(h, w, dpooled.len(), |_, _, k| dpooled[k] / n)
}

impl<B: Backbone> Classifier<B> {
    pub fn new(backbone: B, head: Head) -> Result<Self> {
        if head.in_dim != backbone.feature_channels() {
            return Err(Error::invalid(format!(
                "head expects {} features, backbone produces {}",
                head.in_dim,
                backbone.feature_channels()
            )));
        }
        Ok(Self { backbone, head })
    }

    /// Pooled backbone features.
    pub fn pooled_features(&self, x: &Tensor3) -> Vec<f64> {
        let acts = self.backbone.forward(x);
        global_average_pool(acts.last().expect("backbone has stages"))
    }

    /// Evaluation-mode class probabilities.
    pub fn predict_proba(&self, x: &Tensor3) -> Vec<f64> {
        softmax(&self.head.forward(&self.pooled_features(x), None).logits)
    }

    /// Weighted cross-entropy of one sample and its parameter gradients.
    /// `mask` is the dropout mask (`None` for evaluation mode); backbone
    /// gradients are computed only when `with_backbone` is set.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor3,
        label: Label,
        weights: &ClassWeights,
        mask: Option<&[f64]>,
        with_backbone: bool,
    ) -> Result<(f64, Gradients)> {
        let acts = self.backbone.forward(x);
        let features = acts.last().expect("backbone has stages");
        let pooled = global_average_pool(features);
        let mut grads = Gradients::zeros_like(self, with_backbone);
        let loss = self.head_loss_and_gradients(&pooled, label, weights, mask, &mut grads, |dpooled, grads| {
            if with_backbone {
                let g = unpool(dpooled, features.height(), features.width());
                self.backbone.backward(x, &acts, g, None, Some(&mut grads.backbone));
            }
        })?;
        Ok((loss, grads))
    }

    /// Head-only variant for cached pooled features; accumulates into `grads`.
    pub(crate) fn head_loss_and_gradients(
        &self,
        pooled: &[f64],
        label: Label,
        weights: &ClassWeights,
        mask: Option<&[f64]>,
        grads: &mut Gradients,
        below: impl FnOnce(&[f64], &mut Gradients),
    ) -> Result<f64> {
        let trace = self.head.forward(pooled, mask);
        let (loss, dlogits) = weighted_cross_entropy_with_logits(&trace.logits, label, weights)?;
        let dpooled = self.head.backward(pooled, &trace, &dlogits, Some(&mut grads.head));
        below(&dpooled, grads);
        Ok(loss)
    }

    fn class_onehot(&self, class: usize) -> Vec<f64> {
        (0..self.head.classes).map(|i| if i == class { 1.0 } else { 0.0 }).collect()
    }

    fn score_gradient_at_features(&self, acts: &[Tensor3], class: usize) -> Tensor3 {
        let features = acts.last().expect("backbone has stages");
        let pooled = global_average_pool(features);
        let trace = self.head.forward(&pooled, None);
        let dpooled = self.head.backward(&pooled, &trace, &self.class_onehot(class), None);
        unpool(&dpooled, features.height(), features.width())
    }
}

impl<B: Backbone> GradientModel for Classifier<B> {
    fn num_classes(&self) -> usize {
        self.head.classes
    }

    fn layer_names(&self) -> Vec<String> {
        self.backbone.layer_names()
    }

    fn logits(&self, x: &Tensor3) -> Vec<f64> {
        self.head.forward(&self.pooled_features(x), None).logits
    }

    fn input_gradient(&self, x: &Tensor3, class: usize) -> Tensor3 {
        let acts = self.backbone.forward(x);
        let g = self.score_gradient_at_features(&acts, class);
        self.backbone.backward(x, &acts, g, None, None)
    }

    fn layer_gradient(&self, x: &Tensor3, class: usize, layer: &str) -> Result<LayerGradient> {
        let names = self.backbone.layer_names();
        let idx = names.iter().position(|n| n == layer).ok_or_else(|| {
            Error::invalid(format!("unknown layer `{layer}`; available: {}", names.join(", ")))
        })?;
        let mut acts = self.backbone.forward(x);
        let g = self.score_gradient_at_features(&acts, class);
        let gradients = self.backbone.backward(x, &acts, g, Some(idx), None);
        Ok(LayerGradient {
            activations: acts.swap_remove(idx),
            gradients,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointIndex {
    backbone: String,
    dropout_rate: f64,
    params: Vec<CheckpointEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    dims: (usize, usize, usize),
    file: String,
}

impl Classifier<TinyBackbone> {
    /// Writes every parameter as a tensor file plus `index.json`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut params = Vec::new();
        for p in self.backbone.export_params().into_iter().chain(self.head.export_params()) {
            let file = format!("{}.tensor", p.name);
            let data: Vec<f32> = p.data.iter().map(|&v| v as f32).collect();
            write_tensor(&dir.join(&file), p.dims, &data)?;
            params.push(CheckpointEntry {
                name: p.name,
                dims: p.dims,
                file,
            });
        }
        let index = CheckpointIndex {
            backbone: "tiny".into(),
            dropout_rate: self.head.dropout_rate,
            params,
        };
        let path = dir.join("index.json");
        fs::write(&path, serde_json::to_vec_pretty(&index)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let path = dir.join("index.json");
        let index: CheckpointIndex =
            serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        if index.backbone != "tiny" {
            return Err(Error::invalid(format!("unsupported backbone `{}`", index.backbone)));
        }
        let params = index
            .params
            .iter()
            .map(|entry| {
                let (dims, data) = read_tensor(&dir.join(&entry.file))?;
                if dims != entry.dims {
                    return Err(Error::invalid(format!("{} has dims {dims:?}, index says {:?}", entry.name, entry.dims)));
                }
                Ok(NamedTensor {
                    name: entry.name.clone(),
                    dims,
                    data: data.into_iter().map(f64::from).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut backbone = TinyBackbone::from_stages(Vec::new());
        backbone.import_params(&params)?;
        let head = Head::from_params(&params, index.dropout_rate)?;
        Classifier::new(backbone, head)
    }
}
