//! Dense `height × width × channels` tensors in row-major HWC order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self::filled(h, w, c, 0.0)
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f64) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![value; h * w * c],
        }
    }

    /// Panics when `data.len() != h * w * c`.
    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w * c, "tensor data length does not match {h}x{w}x{c}");
        Self { h, w, c, data }
    }

    pub fn from_fn(h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    data.push(f(y, x, k));
                }
            }
        }
        Self { h, w, c, data }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, y: usize, x: usize, k: usize) -> usize {
        (y * self.w + x) * self.c + k
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, k: usize) -> f64 {
        self.data[self.offset(y, x, k)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, k: usize, v: f64) {
        let o = self.offset(y, x, k);
        self.data[o] = v;
    }

    /// One channel as an `h × w × 1` tensor.
    pub fn channel(&self, k: usize) -> Tensor3 {
        Tensor3::from_fn(self.h, self.w, 1, |y, x, _| self.get(y, x, k))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-channel mean over the spatial dimensions.
    pub fn spatial_mean(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.c];
        for px in self.data.chunks_exact(self.c) {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += v;
            }
        }
        let n = (self.h * self.w) as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        sums
    }

    /// Bilinear resize with aligned corners: output corner pixels sample the
    /// input corners exactly and a same-size resize is the identity.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Tensor3 {
        Tensor3::from_vec(
            out_h,
            out_w,
            self.c,
            resize_bilinear(&self.data, self.h, self.w, self.c, out_h, out_w),
        )
    }

    /// Min-max normalization to `[0, 1]`; a constant tensor maps to all zeros.
    pub fn normalized(&self) -> Tensor3 {
        let (lo, hi) = (self.min(), self.max());
        if !(hi > lo) {
            return Tensor3::zeros(self.h, self.w, self.c);
        }
        let range = hi - lo;
        self.map(|v| (v - lo) / range)
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Source coordinate table for an aligned-corner resize along one axis.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = if output > 1 {
        (input - 1) as f64 / (output - 1) as f64
    } else {
        0.0
    };
    (0..output)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = (pos.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear resampling of an HWC buffer (aligned corners).
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, c: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert!(h > 0 && w > 0, "cannot resize an empty image");
    let rows = axis_taps(h, out_h);
    let cols = axis_taps(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for k in 0..c {
                let p00 = src[(y0 * w + x0) * c + k];
                let p01 = src[(y0 * w + x1) * c + k];
                let p10 = src[(y1 * w + x0) * c + k];
                let p11 = src[(y1 * w + x1) * c + k];
                out.push(lerp(lerp(p00, p01, fx), lerp(p10, p11, fx), fy));
            }
        }
    }
    out
}
