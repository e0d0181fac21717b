use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NamedTensor;
use crate::{Error, Result, Tensor3};

/// A convolutional feature extractor.
///
/// Stage outputs are the explainable layers; the last stage's output is the
/// feature map the head pools.
pub trait Backbone: Send + Sync {
    fn layer_names(&self) -> Vec<String>;

    fn feature_channels(&self) -> usize;

    /// Output of every stage, in order.
    fn forward(&self, x: &Tensor3) -> Vec<Tensor3>;

    /// Backpropagates `grad` (w.r.t. the final stage output) through the
    /// stages. With `stop_at = Some(l)` returns the gradient w.r.t. the output
    /// of stage `l`; with `None`, w.r.t. the input. Parameter gradients of the
    /// traversed stages are accumulated into `param_grads` when given, laid
    /// out as [`Backbone::params`].
    fn backward(
        &self,
        x: &Tensor3,
        acts: &[Tensor3],
        grad: Tensor3,
        stop_at: Option<usize>,
        param_grads: Option<&mut [Vec<f64>]>,
    ) -> Tensor3;

    fn params(&self) -> Vec<&[f64]>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn export_params(&self) -> Vec<NamedTensor>;

    fn import_params(&mut self, params: &[NamedTensor]) -> Result<()>;
}

/// 3×3 convolution (stride 2, padding 1) followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Layout `[out][ky][kx][in]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

const K: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

fn out_size(n: usize) -> usize {
    (n + 2 * PAD - K) / STRIDE + 1
}

impl ConvStage {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * K * K * in_channels],
            bias: vec![0.0; out_channels],
        }
    }

    /// He-normal weights, zero bias.
    pub fn random(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (K * K * in_channels) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut stage = Self::zeros(in_channels, out_channels);
        stage.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        stage
    }

    #[inline]
    fn taps(&self, o: usize, n: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..K).filter_map(move |k| {
            let i = (o * STRIDE + k).checked_sub(PAD)?;
            (i < n).then_some((k, i))
        })
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let (h, w, c) = x.dims();
        assert_eq!(c, self.in_channels, "channel mismatch");
        let (oh, ow) = (out_size(h), out_size(w));
        let mut out = Tensor3::zeros(oh, ow, self.out_channels);
        let xd = x.data();
        let od = out.data_mut();
        let kstride = K * K * c;
        for oy in 0..oh {
            for ox in 0..ow {
                let acc = &mut od[(oy * ow + ox) * self.out_channels..][..self.out_channels];
                acc.copy_from_slice(&self.bias);
                for (ky, iy) in self.taps(oy, h) {
                    for (kx, ix) in self.taps(ox, w) {
                        let px = &xd[(iy * w + ix) * c..][..c];
                        let wo = (ky * K + kx) * c;
                        for (oc, a) in acc.iter_mut().enumerate() {
                            let wk = &self.weights[oc * kstride + wo..][..c];
                            *a += wk.iter().zip(px).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                }
                acc.iter_mut().for_each(|a| *a = a.max(0.0));
            }
        }
        out
    }

    /// Given the stage input, its (post-ReLU) output and d/d(output), returns
    /// d/d(input) and optionally accumulates weight and bias gradients.
    pub fn backward(
        &self,
        x: &Tensor3,
        out: &Tensor3,
        grad_out: &Tensor3,
        mut param_grads: Option<(&mut [f64], &mut [f64])>,
        want_input: bool,
    ) -> Option<Tensor3> {
        let (h, w, c) = x.dims();
        let (oh, ow, oc_n) = out.dims();
        let kstride = K * K * c;
        let mut gx = want_input.then(|| Tensor3::zeros(h, w, c));
        let xd = x.data();
        let mut pre = vec![0.0; oc_n];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (oy * ow + ox) * oc_n;
                let mut any = false;
                for oc in 0..oc_n {
                    // ReLU gate: zero outputs pass no gradient.
                    pre[oc] = if out.data()[base + oc] > 0.0 {
                        grad_out.data()[base + oc]
                    } else {
                        0.0
                    };
                    any |= pre[oc] != 0.0;
                }
                if !any {
                    continue;
                }
                if let Some((_, gb)) = param_grads.as_mut() {
                    gb.iter_mut().zip(&pre).for_each(|(g, p)| *g += p);
                }
                for (ky, iy) in self.taps(oy, h) {
                    for (kx, ix) in self.taps(ox, w) {
                        let po = (iy * w + ix) * c;
                        let wo = (ky * K + kx) * c;
                        for (oc, &g) in pre.iter().enumerate() {
                            if g == 0.0 {
                                continue;
                            }
                            let woff = oc * kstride + wo;
                            if let Some(gx) = gx.as_mut() {
                                let dst = &mut gx.data_mut()[po..po + c];
                                dst.iter_mut()
                                    .zip(&self.weights[woff..woff + c])
                                    .for_each(|(d, wk)| *d += wk * g);
                            }
                            if let Some((gw, _)) = param_grads.as_mut() {
                                gw[woff..woff + c]
                                    .iter_mut()
                                    .zip(&xd[po..po + c])
                                    .for_each(|(d, xv)| *d += xv * g);
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

/// Small reference backbone for desk-scale work: three conv stages with
/// 8, 16 and 32 channels, each halving the resolution (224 → 28).
#[derive(Debug, Clone, PartialEq)]
pub struct TinyBackbone {
    pub stages: Vec<ConvStage>,
}

impl TinyBackbone {
    pub const CHANNELS: [usize; 3] = [8, 16, 32];

    pub fn new(rng: &mut impl Rng) -> Self {
        let mut in_c = 3;
        let stages = Self::CHANNELS
            .iter()
            .map(|&out_c| {
                let s = ConvStage::random(in_c, out_c, rng);
                in_c = out_c;
                s
            })
            .collect();
        Self { stages }
    }

    pub fn seeded(seed: u64) -> Self {
        use rand::SeedableRng;
        Self::new(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_stages(stages: Vec<ConvStage>) -> Self {
        Self { stages }
    }
}

impl Backbone for TinyBackbone {
    fn layer_names(&self) -> Vec<String> {
        (1..=self.stages.len()).map(|i| format!("stage{i}")).collect()
    }

    fn feature_channels(&self) -> usize {
        self.stages.last().map_or(0, |s| s.out_channels)
    }

    fn forward(&self, x: &Tensor3) -> Vec<Tensor3> {
        let mut acts: Vec<Tensor3> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let input = acts.last().unwrap_or(x);
            acts.push(stage.forward(input));
        }
        acts
    }

    fn backward(
        &self,
        x: &Tensor3,
        acts: &[Tensor3],
        mut grad: Tensor3,
        stop_at: Option<usize>,
        mut param_grads: Option<&mut [Vec<f64>]>,
    ) -> Tensor3 {
        let last = self.stages.len() - 1;
        for s in (0..=last).rev() {
            if stop_at == Some(s) {
                return grad;
            }
            let input = if s == 0 { x } else { &acts[s - 1] };
            let pg = param_grads.as_mut().map(|g| {
                let (w, b) = g[2 * s..2 * s + 2].split_at_mut(1);
                (w[0].as_mut_slice(), b[0].as_mut_slice())
            });
            let want_input = s > 0 || stop_at.is_none();
            match self.stages[s].backward(input, &acts[s], &grad, pg, want_input) {
                Some(g) => grad = g,
                None => return grad,
            }
        }
        grad
    }

    fn params(&self) -> Vec<&[f64]> {
        self.stages
            .iter()
            .flat_map(|s| [s.weights.as_slice(), s.bias.as_slice()])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.stages
            .iter_mut()
            .flat_map(|s| [s.weights.as_mut_slice(), s.bias.as_mut_slice()])
            .collect()
    }

    fn export_params(&self) -> Vec<NamedTensor> {
        self.stages
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                [
                    NamedTensor {
                        name: format!("stage{}.weight", i + 1),
                        dims: (s.out_channels, K * K, s.in_channels),
                        data: s.weights.clone(),
                    },
                    NamedTensor {
                        name: format!("stage{}.bias", i + 1),
                        dims: (s.out_channels, 1, 1),
                        data: s.bias.clone(),
                    },
                ]
            })
            .collect()
    }

    fn import_params(&mut self, params: &[NamedTensor]) -> Result<()> {
        let mut stages = Vec::new();
        let mut i = 1;
        while let Some(w) = params.iter().find(|p| p.name == format!("stage{i}.weight")) {
            let b = params
                .iter()
                .find(|p| p.name == format!("stage{i}.bias"))
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks stage{i}.bias")))?;
            let (out_c, kk, in_c) = w.dims;
            if kk != K * K || b.data.len() != out_c || w.data.len() != out_c * kk * in_c {
                return Err(Error::invalid(format!("stage{i} parameters have inconsistent shapes")));
            }
            stages.push(ConvStage {
                in_channels: in_c,
                out_channels: out_c,
                weights: w.data.clone(),
                bias: b.data.clone(),
            });
            i += 1;
        }
        if stages.is_empty() {
            return Err(Error::invalid("checkpoint has no backbone stages"));
        }
        self.stages = stages;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CROP_SIZE;

    #[test]
    fn reference_geometry() {
        let bb = TinyBackbone::seeded(1);
        let x = Tensor3::filled(CROP_SIZE, CROP_SIZE, 3, 0.5);
        let acts = bb.forward(&x);
        let dims: Vec<_> = acts.iter().map(Tensor3::dims).collect();
        assert_eq!(dims, vec![(112, 112, 8), (56, 56, 16), (28, 28, 32)]);
        assert_eq!(bb.layer_names(), vec!["stage1", "stage2", "stage3"]);
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let stage = ConvStage::random(2, 3, &mut rng);
        let x = Tensor3::from_fn(5, 6, 2, |y, x, k| ((y * 7 + x * 3 + k * 5) % 11) as f64 / 11.0 - 0.3);
        let out = stage.forward(&x);
        assert_eq!(out.dims(), (3, 3, 3));
        for oy in 0..3 {
            for ox in 0..3 {
                for oc in 0..3 {
                    let mut acc = stage.bias[oc];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy >= 5 || ix >= 6 {
                                continue;
                            }
                            for ci in 0..2 {
                                acc += stage.weights[((oc * 3 + ky) * 3 + kx) * 2 + ci]
                                    * x.get(iy as usize, ix as usize, ci);
                            }
                        }
                    }
                    assert!((out.get(oy, ox, oc) - acc.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn params_export_import_round_trip() {
        let a = TinyBackbone::seeded(4);
        let mut b = TinyBackbone::seeded(5);
        assert_ne!(a, b);
        b.import_params(&a.export_params()).unwrap();
        assert_eq!(a, b);
    }
}
