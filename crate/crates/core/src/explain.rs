//! Gradient-based relevance heatmaps: SmoothGrad, Grad-CAM, Grad-CAM++ and
//! Faster Score-CAM.
//!
//! Every heatmap is min-max normalised to `[0, 1]` at the input resolution; a
//! constant raw map normalises to all zeros. CAM maps are upsampled
//! bilinearly with aligned corners before normalisation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::write_tensor;
use crate::media::Frame;
use crate::nn::{GradientModel, LayerGradient};
use crate::{Error, Label, Result, Tensor3};

pub const DEFAULT_SAMPLES: usize = 25;
pub const DEFAULT_SIGMA: f64 = 0.10;
pub const DEFAULT_TOP_K: usize = 8;
/// Heatmap opacity in overlays.
pub const OVERLAY_ALPHA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Smoothgrad,
    Gradcam,
    GradcamPp,
    FasterScorecam,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smoothgrad, Method::Gradcam, Method::GradcamPp, Method::FasterScorecam];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Smoothgrad => "smoothgrad",
            Method::Gradcam => "gradcam",
            Method::GradcamPp => "gradcam_pp",
            Method::FasterScorecam => "faster_scorecam",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown explanation method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// `h × w × 1`, values in `[0, 1]`.
    pub values: Tensor3,
    pub method: Method,
    pub target_class: Label,
}

impl Heatmap {
    fn from_raw(raw: &Tensor3, method: Method, target_class: Label) -> Self {
        Self {
            values: raw.normalized(),
            method,
            target_class,
        }
    }

    /// Position of the largest value (first in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let data = self.values.data();
        let i = data
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > data[best] { i } else { best });
        (i / self.values.width(), i % self.values.width())
    }

    /// Raw values in the tensor file format.
    pub fn save_tensor(&self, path: &Path) -> Result<()> {
        let data: Vec<f32> = self.values.data().iter().map(|&v| v as f32).collect();
        write_tensor(path, self.values.dims(), &data)
    }
}

/// |d score / d x|, reduced over channels by max.
pub fn saliency(model: &dyn GradientModel, x: &Tensor3, class: Label) -> Tensor3 {
    let g = model.input_gradient(x, class.index());
    Tensor3::from_fn(g.height(), g.width(), 1, |y, px, _| {
        (0..g.channels()).map(|k| g.get(y, px, k).abs()).fold(0.0, f64::max)
    })
}

/// `x` plus i.i.d. Gaussian noise with standard deviation
/// `sigma · (max(x) − min(x))`, drawn in storage order.
pub fn perturb(x: &Tensor3, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor3 {
    let std = sigma * (x.max() - x.min());
    let mut out = x.clone();
    for v in out.data_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += std * z;
    }
    out
}

/// Mean saliency over `n` noisy copies of `x`. The noise generator is seeded
/// per call; with `sigma = 0` the copies coincide and the plain saliency map
/// is returned.
pub fn smoothgrad(
    model: &dyn GradientModel,
    x: &Tensor3,
    class: Label,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Heatmap> {
    if n == 0 {
        return Err(Error::invalid("smoothgrad needs at least one sample"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise level must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(Heatmap::from_raw(&saliency(model, x, class), Method::Smoothgrad, class));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<Tensor3> = (0..n).map(|_| perturb(x, sigma, &mut rng)).collect();
    let maps: Vec<Tensor3> = noisy.par_iter().map(|xn| saliency(model, xn, class)).collect();
    let mut mean = Tensor3::zeros(x.height(), x.width(), 1);
    for m in &maps {
        mean.data_mut().iter_mut().zip(m.data()).for_each(|(a, b)| *a += b);
    }
    let mean = mean.map(|v| v / n as f64);
    Ok(Heatmap::from_raw(&mean, Method::Smoothgrad, class))
}

fn layer_or_default(model: &dyn GradientModel, layer: Option<&str>) -> Result<String> {
    match layer {
        Some(l) => Ok(l.to_string()),
        None => model
            .layer_names()
            .pop()
            .ok_or_else(|| Error::invalid("model exposes no layers")),
    }
}

/// `ReLU(Σ_k w_k A^k)` at feature resolution.
fn weighted_activation_sum(acts: &Tensor3, channel_weights: &[f64]) -> Tensor3 {
    Tensor3::from_fn(acts.height(), acts.width(), 1, |y, x, _| {
        let s: f64 = channel_weights.iter().enumerate().map(|(k, w)| w * acts.get(y, x, k)).sum();
        s.max(0.0)
    })
}

fn finish_cam(raw: &Tensor3, x: &Tensor3, method: Method, class: Label) -> Heatmap {
    Heatmap::from_raw(&raw.resize_bilinear(x.height(), x.width()), method, class)
}

/// Grad-CAM: channel weights are the spatial means of the score gradient.
/// `layer = None` picks the model's last layer.
pub fn gradcam(model: &dyn GradientModel, x: &Tensor3, class: Label, layer: Option<&str>) -> Result<Heatmap> {
    let layer = layer_or_default(model, layer)?;
    let LayerGradient {
        activations,
        gradients,
    } = model.layer_gradient(x, class.index(), &layer)?;
    let alphas = gradients.spatial_mean();
    let raw = weighted_activation_sum(&activations, &alphas);
    Ok(finish_cam(&raw, x, Method::Gradcam, class))
}

/// Grad-CAM++ channel weights from elementwise powers of the gradient `g`:
/// `α = g² / (2g² + Σ_ab A_ab · g³ + 1e-12)`, `w_k = Σ_ij α_ij · ReLU(g_ij)`.
pub fn gradcam_pp_weights(activations: &Tensor3, gradients: &Tensor3) -> Vec<f64> {
    let sums = {
        let n = (activations.height() * activations.width()) as f64;
        activations.spatial_mean().into_iter().map(|m| m * n).collect::<Vec<_>>()
    };
    let mut weights = vec![0.0; activations.channels()];
    for g_px in gradients.data().chunks_exact(activations.channels()) {
        for (k, &g) in g_px.iter().enumerate() {
            let g2 = g * g;
            let alpha = g2 / (2.0 * g2 + sums[k] * g2 * g + 1e-12);
            weights[k] += alpha * g.max(0.0);
        }
    }
    weights
}

pub fn gradcam_pp(model: &dyn GradientModel, x: &Tensor3, class: Label, layer: Option<&str>) -> Result<Heatmap> {
    let layer = layer_or_default(model, layer)?;
    let LayerGradient {
        activations,
        gradients,
    } = model.layer_gradient(x, class.index(), &layer)?;
    let weights = gradcam_pp_weights(&activations, &gradients);
    let raw = weighted_activation_sum(&activations, &weights);
    Ok(finish_cam(&raw, x, Method::GradcamPp, class))
}

/// Population standard deviation of each channel over space.
pub fn channel_spread(acts: &Tensor3) -> Vec<f64> {
    let means = acts.spatial_mean();
    let mut var = vec![0.0; acts.channels()];
    for px in acts.data().chunks_exact(acts.channels()) {
        for ((v, &a), m) in var.iter_mut().zip(px).zip(&means) {
            *v += (a - m) * (a - m);
        }
    }
    let n = (acts.height() * acts.width()) as f64;
    var.into_iter().map(|v| (v / n).sqrt()).collect()
}

/// `x ⊙ mask`, with the single-channel mask broadcast over channels.
pub fn apply_mask(x: &Tensor3, mask: &Tensor3) -> Tensor3 {
    Tensor3::from_fn(x.height(), x.width(), x.channels(), |y, px, k| x.get(y, px, k) * mask.get(y, px, 0))
}

/// Faster Score-CAM: the `top_k` channels with the largest spatial standard
/// deviation become input masks (upsampled, min-max normalised); each mask is
/// weighted by the target-class probability of the masked input.
pub fn faster_scorecam(
    model: &dyn GradientModel,
    x: &Tensor3,
    class: Label,
    layer: Option<&str>,
    top_k: usize,
) -> Result<Heatmap> {
    let layer = layer_or_default(model, layer)?;
    let acts = model.layer_gradient(x, class.index(), &layer)?.activations;
    let c = acts.channels();
    if top_k == 0 || top_k > c {
        return Err(Error::invalid(format!("top_k must lie in 1..={c}, got {top_k}")));
    }
    let spread = channel_spread(&acts);
    let mut ranked: Vec<usize> = (0..c).collect();
    ranked.sort_by(|&a, &b| spread[b].total_cmp(&spread[a]).then(a.cmp(&b)));
    ranked.truncate(top_k);
    let terms: Vec<(f64, Tensor3)> = ranked
        .par_iter()
        .map(|&k| {
            let mask = acts.channel(k).resize_bilinear(x.height(), x.width()).normalized();
            let score = model.probabilities(&apply_mask(x, &mask))[class.index()];
            (score, mask)
        })
        .collect();
    let mut raw = Tensor3::zeros(x.height(), x.width(), 1);
    for (score, mask) in &terms {
        raw.data_mut().iter_mut().zip(mask.data()).for_each(|(r, m)| *r += score * m);
    }
    Ok(Heatmap::from_raw(&raw.map(|v| v.max(0.0)), Method::FasterScorecam, class))
}

/// Dispatches on `method` with the given parameters.
#[derive(Debug, Clone)]
pub struct ExplainParams {
    pub samples: usize,
    pub sigma: f64,
    pub top_k: usize,
    pub seed: u64,
    pub layer: Option<String>,
}

impl Default for ExplainParams {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            sigma: DEFAULT_SIGMA,
            top_k: DEFAULT_TOP_K,
            seed: 0,
            layer: None,
        }
    }
}

pub fn explain(
    model: &dyn GradientModel,
    x: &Tensor3,
    class: Label,
    method: Method,
    params: &ExplainParams,
) -> Result<Heatmap> {
    let layer = params.layer.as_deref();
    match method {
        Method::Smoothgrad => smoothgrad(model, x, class, params.samples, params.sigma, params.seed),
        Method::Gradcam => gradcam(model, x, class, layer),
        Method::GradcamPp => gradcam_pp(model, x, class, layer),
        Method::FasterScorecam => faster_scorecam(model, x, class, layer, params.top_k),
    }
}

const COLORMAP_ANCHORS: [[f64; 3]; 5] = [
    [0.0, 0.0, 255.0],
    [0.0, 255.0, 255.0],
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 0.0],
];

/// 256-entry colour table running blue → cyan → green → yellow → red, linear
/// between the five anchors at 0, 0.25, 0.5, 0.75 and 1.
pub fn colormap_lut() -> [[u8; 3]; 256] {
    let mut lut = [[0u8; 3]; 256];
    for (i, entry) in lut.iter_mut().enumerate() {
        let t = i as f64 / 255.0 * 4.0;
        let seg = (t.floor() as usize).min(3);
        let f = t - seg as f64;
        for ch in 0..3 {
            let (a, b) = (COLORMAP_ANCHORS[seg][ch], COLORMAP_ANCHORS[seg + 1][ch]);
            entry[ch] = (a + (b - a) * f).round() as u8;
        }
    }
    lut
}

/// Colour for a heatmap value in `[0, 1]`.
pub fn colormap(v: f64) -> [u8; 3] {
    colormap_lut()[(v.clamp(0.0, 1.0) * 255.0).round() as usize]
}

/// `round((1 − α) · crop + α · colormap(heat))` per pixel with `α = 0.4`.
pub fn overlay(heatmap: &Heatmap, crop: &Frame) -> Result<Frame> {
    let (h, w, _) = heatmap.values.dims();
    if crop.height() != h || crop.width() != w || crop.channels() != 3 {
        return Err(Error::invalid(format!(
            "heatmap is {h}x{w} but crop is {}x{}x{}",
            crop.height(),
            crop.width(),
            crop.channels()
        )));
    }
    let lut = colormap_lut();
    let mut out = crop.clone();
    for y in 0..h {
        for x in 0..w {
            let color = lut[(heatmap.values.get(y, x, 0).clamp(0.0, 1.0) * 255.0).round() as usize];
            for (o, c) in out.pixel_mut(y, x).iter_mut().zip(color) {
                *o = ((1.0 - OVERLAY_ALPHA) * f64::from(*o) + OVERLAY_ALPHA * f64::from(c)).round() as u8;
            }
        }
    }
    Ok(out)
}

/// Renders a `[0, 1]` image tensor back to 8-bit pixels.
pub fn tensor_to_frame(x: &Tensor3) -> Result<Frame> {
    Frame::new(
        x.width(),
        x.height(),
        x.channels(),
        x.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [0, 0, 255]);
        assert_eq!(colormap(1.0), [255, 0, 0]);
    }

    #[test]
    fn overlay_of_uniform_heatmaps() {
        let crop = Frame::new(4, 4, 3, (0..48).map(|i| (i * 5) as u8).collect()).unwrap();
        for (value, color) in [(0.0, colormap(0.0)), (1.0, colormap(1.0))] {
            let heat = Heatmap {
                values: Tensor3::filled(4, 4, 1, value),
                method: Method::Gradcam,
                target_class: Label::Fake,
            };
            let out = overlay(&heat, &crop).unwrap();
            for (i, (&o, &c)) in out.data().iter().zip(crop.data()).enumerate() {
                let expected = (0.6 * f64::from(c) + 0.4 * f64::from(color[i % 3])).round() as u8;
                assert_eq!(o, expected);
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }

    #[test]
    fn channel_spread_is_population_std() {
        let t = Tensor3::from_vec(1, 2, 2, vec![0.0, 5.0, 2.0, 5.0]);
        assert_eq!(channel_spread(&t), vec![1.0, 0.0]);
    }
    /// Linear score `logit_c = Σ w_c ⊙ x`; its single layer reports fixed
    /// activations and gradients.
    struct Stub {
        w: [Tensor3; 2],
        acts: Tensor3,
        grads: Tensor3,
    }

    impl Stub {
        fn linear(w_fake: Tensor3) -> Self {
            let zeros = Tensor3::zeros(w_fake.height(), w_fake.width(), w_fake.channels());
            Self {
                acts: zeros.clone(),
                grads: zeros.clone(),
                w: [zeros, w_fake],
            }
        }

        fn cam(size: usize, acts: Tensor3, grads: Tensor3) -> Self {
            let mut s = Self::linear(Tensor3::zeros(size, size, 1));
            s.acts = acts;
            s.grads = grads;
            s
        }
    }

    impl GradientModel for Stub {
        fn num_classes(&self) -> usize {
            2
        }

        fn layer_names(&self) -> Vec<String> {
            vec!["feat".to_string()]
        }

        fn logits(&self, x: &Tensor3) -> Vec<f64> {
            self.w.iter().map(|w| w.data().iter().zip(x.data()).map(|(a, b)| a * b).sum()).collect()
        }

        fn input_gradient(&self, _: &Tensor3, class: usize) -> Tensor3 {
            self.w[class].clone()
        }

        fn layer_gradient(&self, _: &Tensor3, _: usize, layer: &str) -> Result<LayerGradient> {
            if layer != "feat" {
                return Err(Error::invalid(format!("no layer `{layer}`")));
            }
            Ok(LayerGradient {
                activations: self.acts.clone(),
                gradients: self.grads.clone(),
            })
        }
    }

    fn close(a: &Tensor3, b: &[f64]) -> bool {
        a.data().len() == b.len() && a.data().iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn saliency_of_linear_model_is_weight_magnitude() {
        let model = Stub::linear(Tensor3::from_vec(2, 2, 1, vec![1.0, -3.0, 0.0, 2.0]));
        let x = Tensor3::filled(2, 2, 1, 0.5);
        let h = smoothgrad(&model, &x, Label::Fake, 1, 0.0, 0).unwrap();
        assert!(close(&h.values, &[1.0 / 3.0, 1.0, 0.0, 2.0 / 3.0]));
        assert_eq!(h.argmax(), (0, 1));
        let zero = smoothgrad(&model, &x, Label::Real, 5, 0.1, 0).unwrap();
        assert!(zero.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothgrad_is_seeded_and_validates_arguments() {
        let model = Stub::linear(Tensor3::from_fn(4, 4, 3, |y, x, k| (y * 7 + x * 3 + k) as f64 - 20.0));
        let x = Tensor3::from_fn(4, 4, 3, |y, x, _| (y + x) as f64 / 8.0);
        let a = smoothgrad(&model, &x, Label::Fake, 3, 0.2, 11).unwrap();
        assert_eq!(a, smoothgrad(&model, &x, Label::Fake, 3, 0.2, 11).unwrap());
        // the gradient of a linear model is constant, so noise cannot move it
        assert!(close(&a.values, smoothgrad(&model, &x, Label::Fake, 1, 0.0, 0).unwrap().values.data()));
        assert!(smoothgrad(&model, &x, Label::Fake, 0, 0.2, 0).is_err());
        assert!(smoothgrad(&model, &x, Label::Fake, 2, -0.1, 0).is_err());
    }

    #[test]
    fn perturbation_noise_scales_with_input_range() {
        let x = Tensor3::from_fn(32, 32, 1, |y, _, _| if y < 16 { 0.0 } else { 2.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = perturb(&x, 0.1, &mut rng);
        let d: Vec<f64> = noisy.data().iter().zip(x.data()).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!(mean.abs() < 0.03 && (std - 0.2).abs() < 0.02, "mean {mean} std {std}");
    }

    #[test]
    fn gradcam_single_channel_follows_activation() {
        let acts = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let model = Stub::cam(2, acts.clone(), Tensor3::filled(2, 2, 1, 1.0));
        let x = Tensor3::zeros(2, 2, 1);
        let h = gradcam(&model, &x, Label::Fake, None).unwrap();
        assert!(close(&h.values, &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]));
        let scaled = Stub::cam(2, acts.clone(), Tensor3::filled(2, 2, 1, 7.5));
        assert_eq!(gradcam(&scaled, &x, Label::Fake, None).unwrap(), h);
        let negative = Stub::cam(2, acts, Tensor3::filled(2, 2, 1, -1.0));
        for m in [gradcam(&negative, &x, Label::Fake, None), gradcam_pp(&negative, &x, Label::Fake, None)] {
            assert!(m.unwrap().values.data().iter().all(|&v| v == 0.0));
        }
        assert!(gradcam(&model, &x, Label::Fake, Some("nope")).is_err());
    }

    #[test]
    fn zero_gradients_and_constant_maps_give_zero_heatmaps() {
        let acts = Tensor3::from_fn(3, 3, 2, |y, x, k| (y * 3 + x + k) as f64);
        let x = Tensor3::zeros(6, 6, 1);
        let model = Stub::cam(6, acts, Tensor3::zeros(3, 3, 2));
        assert!(gradcam(&model, &x, Label::Fake, None).unwrap().values.data().iter().all(|&v| v == 0.0));
        assert!(gradcam_pp(&model, &x, Label::Fake, None).unwrap().values.data().iter().all(|&v| v == 0.0));
        let flat = Stub::cam(6, Tensor3::filled(3, 3, 1, 2.0), Tensor3::filled(3, 3, 1, 1.0));
        for m in [Method::Gradcam, Method::GradcamPp, Method::FasterScorecam] {
            let params = ExplainParams { top_k: 1, ..ExplainParams::default() };
            let h = explain(&flat, &x, Label::Fake, m, &params).unwrap();
            assert_eq!(h.values.dims(), (6, 6, 1));
            assert!(h.values.data().iter().all(|&v| v == 0.0), "{m}");
        }
    }

    #[test]
    fn inactive_channel_does_not_change_cams() {
        let acts = Tensor3::from_fn(3, 3, 2, |y, x, k| ((y + 2 * x + k) % 4) as f64);
        let grads = Tensor3::from_fn(3, 3, 2, |y, x, k| (y as f64 - x as f64) * 0.3 + k as f64 * 0.5 + 0.2);
        let widen = |t: &Tensor3, fill: f64| Tensor3::from_fn(3, 3, 3, |y, x, k| if k < 2 { t.get(y, x, k) } else { fill });
        let x = Tensor3::zeros(5, 5, 1);
        let base = Stub::cam(5, acts.clone(), grads.clone());
        let wide = Stub::cam(5, widen(&acts, 0.0), widen(&grads, 0.9));
        for f in [gradcam, gradcam_pp] {
            let (a, b) = (f(&base, &x, Label::Fake, None).unwrap(), f(&wide, &x, Label::Fake, None).unwrap());
            assert!(close(&a.values, b.values.data()));
        }
    }

    #[test]
    fn gradcam_pp_weights_by_hand() {
        let acts = Tensor3::from_vec(1, 2, 1, vec![1.0, 3.0]);
        let grads = Tensor3::from_vec(1, 2, 1, vec![0.5, -2.0]);
        let g = 0.5f64;
        let alpha = g * g / (2.0 * g * g + 4.0 * g * g * g + 1e-12);
        let w = gradcam_pp_weights(&acts, &grads);
        assert!((w[0] - alpha * g).abs() < 1e-15);
    }

    #[test]
    fn scorecam_with_one_channel_is_its_normalised_map() {
        let acts = Tensor3::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 5.0]);
        let model = Stub::cam(4, acts.clone(), Tensor3::zeros(2, 2, 1));
        let x = Tensor3::filled(4, 4, 1, 1.0);
        let h = faster_scorecam(&model, &x, Label::Fake, None, 1).unwrap();
        let expected = acts.resize_bilinear(4, 4).normalized();
        assert!(close(&h.values, expected.data()));
        assert!(faster_scorecam(&model, &x, Label::Fake, None, 2).is_err());
        assert!(faster_scorecam(&model, &x, Label::Fake, None, 0).is_err());
    }

    #[test]
    fn overlay_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let crop = Frame::new(5, 4, 3, (0..60).map(|i| (i * 4) as u8).collect()).unwrap();
        let heat = Heatmap {
            values: Tensor3::from_fn(4, 5, 1, |y, x, _| (y * 5 + x) as f64 / 19.0),
            method: Method::Smoothgrad,
            target_class: Label::Fake,
        };
        let out = overlay(&heat, &crop).unwrap();
        let path = dir.path().join("a/b.png");
        out.save_png(&path).unwrap();
        assert_eq!(Frame::load_png(&path).unwrap(), out);
        let wrong = Frame::filled(4, 4, 3, 0);
        assert!(overlay(&heat, &wrong).is_err());
    }
}
