use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NamedTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub dense_units: usize,
    /// Applied only in training mode.
    pub dropout_rate: f64,
    pub classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            dense_units: 256,
            dropout_rate: 0.5,
            classes: 2,
        }
    }
}

/// Global average pooling → dense + ReLU → dropout → dense → softmax.
///
/// The head works on already pooled feature vectors; pooling lives in the
/// classifier so it can be cached when the backbone is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub in_dim: usize,
    pub units: usize,
    pub classes: usize,
    pub dropout_rate: f64,
    /// `[in_dim][units]`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `[units][classes]`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediate values of one head forward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    /// ReLU output before dropout.
    pub hidden: Vec<f64>,
    /// Dropout multipliers (all 1 in evaluation mode).
    pub mask: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Head {
    pub fn zeros(in_dim: usize, cfg: &HeadConfig) -> Self {
        Self {
            in_dim,
            units: cfg.dense_units,
            classes: cfg.classes,
            dropout_rate: cfg.dropout_rate,
            w1: vec![0.0; in_dim * cfg.dense_units],
            b1: vec![0.0; cfg.dense_units],
            w2: vec![0.0; cfg.dense_units * cfg.classes],
            b2: vec![0.0; cfg.classes],
        }
    }

    /// He-normal first layer, Glorot-normal output layer, zero biases.
    /// Draws `w1` then `w2`, both row-major.
    pub fn init(in_dim: usize, cfg: &HeadConfig, rng: &mut impl Rng) -> Result<Self> {
        if in_dim == 0 || cfg.dense_units == 0 || cfg.classes < 2 {
            return Err(Error::invalid(format!(
                "head needs positive feature width and units and ≥2 classes, got {in_dim}/{}/{}",
                cfg.dense_units, cfg.classes
            )));
        }
        if !(0.0..1.0).contains(&cfg.dropout_rate) {
            return Err(Error::invalid(format!("dropout rate {} outside [0, 1)", cfg.dropout_rate)));
        }
        let mut head = Self::zeros(in_dim, cfg);
        let he = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).expect("positive std");
        head.w1.iter_mut().for_each(|w| *w = he.sample(rng));
        let glorot = Normal::new(0.0, (2.0 / (cfg.dense_units + cfg.classes) as f64).sqrt()).expect("positive std");
        head.w2.iter_mut().for_each(|w| *w = glorot.sample(rng));
        Ok(head)
    }

    /// Inverted-dropout multipliers: 0 with probability `rate`, else
    /// `1 / (1 − rate)`. Draws exactly `units` uniforms.
    pub fn dropout_mask(&self, rng: &mut impl Rng) -> Vec<f64> {
        let keep = 1.0 - self.dropout_rate;
        (0..self.units)
            .map(|_| {
                let u: f64 = rng.random();
                if u < self.dropout_rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect()
    }

    /// `mask = None` is evaluation mode.
    pub fn forward(&self, pooled: &[f64], mask: Option<&[f64]>) -> HeadTrace {
        debug_assert_eq!(pooled.len(), self.in_dim);
        let mut hidden = self.b1.clone();
        for (i, &p) in pooled.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &self.w1[i * self.units..(i + 1) * self.units];
            hidden.iter_mut().zip(row).for_each(|(h, w)| *h += p * w);
        }
        hidden.iter_mut().for_each(|h| *h = h.max(0.0));
        let mask = mask.map_or_else(|| vec![1.0; self.units], <[f64]>::to_vec);
        let mut logits = self.b2.clone();
        for (j, (&h, &m)) in hidden.iter().zip(&mask).enumerate() {
            let a = h * m;
            if a == 0.0 {
                continue;
            }
            let row = &self.w2[j * self.classes..(j + 1) * self.classes];
            logits.iter_mut().zip(row).for_each(|(z, w)| *z += a * w);
        }
        HeadTrace { hidden, mask, logits }
    }

    /// Backpropagates d/d(logits); returns d/d(pooled). Parameter gradients
    /// are accumulated into `grads` (`[w1, b1, w2, b2]`) when given.
    pub fn backward(
        &self,
        pooled: &[f64],
        trace: &HeadTrace,
        dlogits: &[f64],
        grads: Option<&mut [Vec<f64>]>,
    ) -> Vec<f64> {
        let mut dhidden = vec![0.0; self.units];
        for (j, dh) in dhidden.iter_mut().enumerate() {
            if trace.hidden[j] <= 0.0 || trace.mask[j] == 0.0 {
                continue;
            }
            let row = &self.w2[j * self.classes..(j + 1) * self.classes];
            *dh = trace.mask[j] * row.iter().zip(dlogits).map(|(w, d)| w * d).sum::<f64>();
        }
        if let Some(g) = grads {
            for j in 0..self.units {
                let a = trace.hidden[j] * trace.mask[j];
                if a != 0.0 {
                    let row = &mut g[2][j * self.classes..(j + 1) * self.classes];
                    row.iter_mut().zip(dlogits).for_each(|(gw, d)| *gw += a * d);
                }
            }
            g[3].iter_mut().zip(dlogits).for_each(|(gb, d)| *gb += d);
            g[1].iter_mut().zip(&dhidden).for_each(|(gb, d)| *gb += d);
            for (i, &p) in pooled.iter().enumerate() {
                if p != 0.0 {
                    let row = &mut g[0][i * self.units..(i + 1) * self.units];
                    row.iter_mut().zip(&dhidden).for_each(|(gw, d)| *gw += p * d);
                }
            }
        }
        (0..self.in_dim)
            .map(|i| {
                self.w1[i * self.units..(i + 1) * self.units]
                    .iter()
                    .zip(&dhidden)
                    .map(|(w, d)| w * d)
                    .sum()
            })
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn export_params(&self) -> Vec<NamedTensor> {
        let t = |name: &str, dims, data: &Vec<f64>| NamedTensor {
            name: name.into(),
            dims,
            data: data.clone(),
        };
        vec![
            t("head.dense1.weight", (self.in_dim, self.units, 1), &self.w1),
            t("head.dense1.bias", (self.units, 1, 1), &self.b1),
            t("head.dense2.weight", (self.units, self.classes, 1), &self.w2),
            t("head.dense2.bias", (self.classes, 1, 1), &self.b2),
        ]
    }

    pub fn from_params(params: &[NamedTensor], dropout_rate: f64) -> Result<Self> {
        let find = |name: &str| {
            params
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks `{name}`")))
        };
        let (w1, b1, w2, b2) = (
            find("head.dense1.weight")?,
            find("head.dense1.bias")?,
            find("head.dense2.weight")?,
            find("head.dense2.bias")?,
        );
        let (in_dim, units, _) = w1.dims;
        let (_, classes, _) = w2.dims;
        let consistent = w1.data.len() == in_dim * units
            && b1.data.len() == units
            && w2.dims.0 == units
            && w2.data.len() == units * classes
            && b2.data.len() == classes;
        if !consistent {
            return Err(Error::invalid("head parameters have inconsistent shapes"));
        }
        Ok(Self {
            in_dim,
            units,
            classes,
            dropout_rate,
            w1: w1.data.clone(),
            b1: b1.data.clone(),
            w2: w2.data.clone(),
            b2: b2.data.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;
    use rand::SeedableRng;

    #[test]
    fn zero_head_is_indifferent() {
        let head = Head::zeros(32, &HeadConfig::default());
        let trace = head.forward(&[0.7; 32], None);
        assert_eq!(softmax(&trace.logits), vec![0.5, 0.5]);
    }

    #[test]
    fn dropout_mask_statistics() {
        let head = Head::zeros(4, &HeadConfig::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let masks: Vec<f64> = (0..40).flat_map(|_| head.dropout_mask(&mut rng)).collect();
        let dropped = masks.iter().filter(|&&m| m == 0.0).count() as f64 / masks.len() as f64;
        assert!((dropped - 0.5).abs() < 0.03, "dropped fraction {dropped}");
        assert!(masks.iter().all(|&m| m == 0.0 || m == 2.0));
    }

    #[test]
    fn evaluation_forward_is_repeatable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let head = Head::init(8, &HeadConfig::default(), &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        assert_eq!(head.forward(&x, None).logits, head.forward(&x, None).logits);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let bad = HeadConfig {
            dropout_rate: 1.0,
            ..HeadConfig::default()
        };
        assert!(Head::init(8, &bad, &mut rng).is_err());
        assert!(Head::init(0, &HeadConfig::default(), &mut rng).is_err());
    }
}
