//! Keyframe selection from the smoothed inter-frame difference curve.
//!
//! A keyframe is the later frame of a pair whose smoothed mean absolute
//! difference is a local maximum. Smoothing suppresses noise and keeps
//! near-duplicate frames of one scene from being selected repeatedly.

use serde::{Deserialize, Serialize};

use crate::media::{Frame, FrameSequence};
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 9;
pub const DEFAULT_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceCurve {
    /// `values[i]` compares frames `i` and `i + 1`; each lies in `[0, 1]`.
    pub values: Vec<f64>,
    pub smoothed: bool,
    /// Width of the smoothing window, 1 when unsmoothed.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSet {
    /// Strictly increasing frame indices.
    pub indices: Vec<usize>,
    /// Smoothed difference score behind each index.
    pub scores: Vec<f64>,
    pub window: usize,
    pub order: usize,
}

fn check_same_shape(a: &Frame, b: &Frame) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "frame shapes differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    if a.data().is_empty() {
        return Err(Error::invalid("cannot difference empty frames"));
    }
    Ok(())
}

/// Sum of absolute differences over all pixels and channels.
fn difference_total(a: &Frame, b: &Frame) -> Result<u64> {
    check_same_shape(a, b)?;
    Ok(a.data().iter().zip(b.data()).map(|(&x, &y)| u64::from(x.abs_diff(y))).sum())
}

/// Mean absolute difference over all pixels and channels, scaled to `[0, 1]`.
pub fn frame_difference(a: &Frame, b: &Frame) -> Result<f64> {
    let total = difference_total(a, b)?;
    Ok(total as f64 / (a.data().len() as f64 * 255.0))
}

pub fn difference_curve(seq: &FrameSequence) -> Result<DifferenceCurve> {
    if seq.frames.len() < 2 {
        return Err(Error::invalid(format!(
            "a difference curve needs at least 2 frames, got {}",
            seq.frames.len()
        )));
    }
    let values = seq
        .frames
        .windows(2)
        .map(|pair| frame_difference(&pair[0], &pair[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(DifferenceCurve {
        values,
        smoothed: false,
        window: 1,
    })
}

fn check_window(window: usize, len: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("smoothing window must be a positive odd integer, got {window}")));
    }
    if len == 0 || window > 2 * len - 1 {
        return Err(Error::invalid(format!(
            "smoothing window {window} too wide for a curve of length {len}"
        )));
    }
    Ok(())
}

/// Centred moving average. Near the ends the window shrinks to the available
/// samples instead of padding.
pub fn smooth(curve: &DifferenceCurve, window: usize) -> Result<DifferenceCurve> {
    let n = curve.values.len();
    check_window(window, n)?;
    let radius = window / 2;
    let values = (0..n)
        .map(|i| {
            let span = &curve.values[i.saturating_sub(radius)..(i + radius + 1).min(n)];
            let (lo, hi) = span
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            // The mean lies in [lo, hi]; the clamp only removes rounding error.
            (span.iter().sum::<f64>() / span.len() as f64).clamp(lo, hi)
        })
        .collect();
    Ok(DifferenceCurve {
        values,
        smoothed: true,
        window,
    })
}

/// Indices that beat every sample within `order` positions.
///
/// A run of equal values counts as one candidate reported at its leftmost
/// index; it must exceed every in-range sample within `order` positions of
/// either end. A run with no in-range neighbours at all (a constant curve) is
/// not a maximum.
pub fn local_maxima(values: &[f64], order: usize) -> Result<Vec<usize>> {
    if order == 0 {
        return Err(Error::invalid("local maximum order must be at least 1"));
    }
    let n = values.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let v = values[start];
        let mut end = start;
        while end + 1 < n && values[end + 1] == v {
            end += 1;
        }
        let left = start.saturating_sub(order)..start;
        let right = end + 1..(end + 1 + order).min(n);
        let has_neighbour = !left.is_empty() || !right.is_empty();
        if has_neighbour && left.chain(right).all(|j| v > values[j]) {
            out.push(start);
        }
        start = end + 1;
    }
    Ok(out)
}

/// Difference curve, smoothing and local maxima composed. Curve position `i`
/// maps to frame `i + 1`.
///
/// Never returns an empty set: without local maxima the frame with the
/// highest smoothed score is chosen (leftmost on ties), or the middle frame
/// when the smoothed curve is constant.
pub fn extract_keyframes(seq: &FrameSequence, window: usize, order: usize) -> Result<KeyframeSet> {
    let n = seq.frames.len();
    if n < 3 {
        return Err(Error::invalid(format!("keyframe extraction needs at least 3 frames, got {n}")));
    }
    check_window(window, n - 1)?;
    // Window means come straight from integer difference totals, one rounding
    // each, so equal means compare equal.
    let totals = seq
        .frames
        .windows(2)
        .map(|pair| difference_total(&pair[0], &pair[1]))
        .collect::<Result<Vec<_>>>()?;
    let per_pair = seq.frames[0].data().len() as u64 * 255;
    let radius = window / 2;
    let values = (0..totals.len())
        .map(|i| {
            let span = &totals[i.saturating_sub(radius)..(i + radius + 1).min(totals.len())];
            span.iter().sum::<u64>() as f64 / (span.len() as u64 * per_pair) as f64
        })
        .collect();
    let curve = DifferenceCurve {
        values,
        smoothed: true,
        window,
    };
    keyframes_from_curve(&curve, order)
}

/// Keyframe selection on an already smoothed curve.
pub fn keyframes_from_curve(curve: &DifferenceCurve, order: usize) -> Result<KeyframeSet> {
    let values = &curve.values;
    let mut peaks = local_maxima(values, order)?;
    if peaks.is_empty() && !values.is_empty() {
        let first = values[0];
        let fallback = if values.iter().all(|&v| v == first) {
            // Frame floor(n/2) of an n-frame sequence sits at curve position n/2 - 1.
            values.len().div_ceil(2) - 1
        } else {
            values
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
        };
        peaks.push(fallback);
    }
    Ok(KeyframeSet {
        indices: peaks.iter().map(|&i| i + 1).collect(),
        scores: peaks.iter().map(|&i| values[i]).collect(),
        window: curve.window,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: u8) -> Frame {
        Frame::filled(w, h, 1, v)
    }

    fn seq(frames: Vec<Frame>) -> FrameSequence {
        FrameSequence::new("t", 30.0, frames).unwrap()
    }

    #[test]
    fn difference_examples() {
        let a = Frame::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
        let b = Frame::new(2, 2, 1, vec![255, 255, 255, 0]).unwrap();
        assert_eq!(frame_difference(&a, &a).unwrap(), 0.0);
        assert_eq!(frame_difference(&a, &b).unwrap(), 0.25);
        assert_eq!(frame_difference(&gray(3, 3, 0), &gray(3, 3, 255)).unwrap(), 1.0);
        assert!(frame_difference(&gray(3, 3, 0), &gray(3, 4, 0)).is_err());
    }

    #[test]
    fn curve_examples() {
        let c = difference_curve(&seq(vec![gray(4, 4, 9); 3])).unwrap();
        assert_eq!(c.values, vec![0.0, 0.0]);
        assert!(!c.smoothed);
        let c = difference_curve(&seq(vec![gray(4, 4, 0), gray(4, 4, 255), gray(4, 4, 0)])).unwrap();
        assert_eq!(c.values, vec![1.0, 1.0]);
        assert!(difference_curve(&seq(vec![gray(4, 4, 0)])).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let raw = DifferenceCurve {
            values: vec![0.0, 3.0, 0.0, 3.0, 0.0],
            smoothed: false,
            window: 1,
        };
        assert_eq!(smooth(&raw, 1).unwrap().values, raw.values);
        let s = smooth(&raw, 3).unwrap();
        assert_eq!(s.values, vec![1.5, 1.0, 2.0, 1.0, 1.5]);
        assert!(s.smoothed);
        let constant = DifferenceCurve {
            values: vec![0.1; 7],
            smoothed: false,
            window: 1,
        };
        assert_eq!(smooth(&constant, 5).unwrap().values, vec![0.1; 7]);
        assert!(smooth(&raw, 4).is_err());
        assert!(smooth(&raw, 0).is_err());
        assert!(smooth(&raw, 11).is_err());
        assert!(smooth(&raw, 9).is_ok());
    }

    #[test]
    fn maxima_examples() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.0, 2.0, 0.0], 1).unwrap(), vec![1, 3]);
        assert!(local_maxima(&[0.5; 6], 1).unwrap().is_empty());
        assert_eq!(local_maxima(&[0.0, 2.0, 2.0, 0.0], 1).unwrap(), vec![1]);
        assert_eq!(local_maxima(&[0.0, 1.0, 0.0, 2.0, 0.0], 2).unwrap(), vec![3]);
        assert!(local_maxima(&[1.0], 0).is_err());
    }

    #[test]
    fn step_change_yields_single_keyframe() {
        let mut frames = vec![gray(6, 6, 30); 5];
        frames.extend(vec![gray(6, 6, 200); 5]);
        let k = extract_keyframes(&seq(frames), 1, 1).unwrap();
        assert_eq!(k.indices, vec![5]);
        assert_eq!(k.scores, vec![170.0 / 255.0]);
    }

    #[test]
    fn constant_video_falls_back_to_middle_frame() {
        let k = extract_keyframes(&seq(vec![gray(4, 4, 77); 10]), 3, 1).unwrap();
        assert_eq!(k.indices, vec![5]);
        let k = extract_keyframes(&seq(vec![gray(4, 4, 77); 3]), 1, 1).unwrap();
        assert_eq!(k.indices, vec![1]);
    }

    #[test]
    fn rising_curve_peaks_at_last_pair() {
        let frames = [0u8, 1, 3, 6, 10].iter().map(|&v| gray(2, 2, v)).collect();
        let k = extract_keyframes(&seq(frames), 1, 1).unwrap();
        assert_eq!(k.indices, vec![4]);
    }

    #[test]
    fn tied_peaks_fall_back_to_leftmost_argmax() {
        // Differences [2, 0, 2]: with order 2 each peak sees the other, so
        // neither is a strict maximum.
        let frames = [0u8, 2, 2, 4].iter().map(|&v| gray(2, 2, v)).collect();
        let k = extract_keyframes(&seq(frames), 1, 2).unwrap();
        assert_eq!(k.indices, vec![1]);
    }
}
