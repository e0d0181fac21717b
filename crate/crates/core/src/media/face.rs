use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::frame::Frame;
use crate::tensor::resize_bilinear;
use crate::{Error, Result, CROP_SIZE};

/// Half-open pixel rectangle: rows `top..bottom`, columns `left..right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    pub fn new(top: usize, left: usize, bottom: usize, right: usize) -> Self {
        Self {
            top,
            left,
            bottom,
            right,
        }
    }

    pub fn height(&self) -> usize {
        self.bottom.saturating_sub(self.top)
    }

    pub fn width(&self) -> usize {
        self.right.saturating_sub(self.left)
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    /// Checks non-degeneracy and containment in a `height × width` frame.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.area() == 0 {
            return Err(Error::invalid(format!("degenerate bounding box {self:?}")));
        }
        if self.bottom > height || self.right > width {
            return Err(Error::invalid(format!(
                "bounding box {self:?} exceeds {height}x{width} frame"
            )));
        }
        Ok(())
    }
}

/// A face cropped from a video frame and resized to `CROP_SIZE²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCrop {
    pub image: Frame,
    pub source_id: String,
    pub frame_index: usize,
    /// Rank of the face within its frame (0 = largest).
    pub ordinal: usize,
    pub bbox: BBox,
}

impl FaceCrop {
    pub fn from_frame(
        frame: &Frame,
        bbox: BBox,
        source_id: impl Into<String>,
        frame_index: usize,
        ordinal: usize,
    ) -> Result<Self> {
        Ok(Self {
            image: crop_and_resize(frame, bbox)?,
            source_id: source_id.into(),
            frame_index,
            ordinal,
            bbox,
        })
    }

    /// `<frame_index>_<ordinal>`, the file stem used on disk.
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.frame_index, self.ordinal)
    }
}

/// Adapter slot for face detectors. Implementations need not order their
/// output; [`detect_faces`] does.
pub trait FaceDetector: Send + Sync {
    fn detect(&self, frame: &Frame) -> Result<Vec<BBox>>;
}

/// Runs `detector` and orders boxes by area descending, then by
/// `(top, left, bottom, right)`.
pub fn detect_faces(detector: &dyn FaceDetector, frame: &Frame) -> Result<Vec<BBox>> {
    if frame.width() == 0 || frame.height() == 0 {
        return Err(Error::invalid("cannot detect faces in an empty frame"));
    }
    let mut boxes = detector.detect(frame)?;
    boxes.retain(|b| b.validate(frame.height(), frame.width()).is_ok());
    boxes.sort_by(|a, b| {
        b.area()
            .cmp(&a.area())
            .then((a.top, a.left, a.bottom, a.right).cmp(&(b.top, b.left, b.bottom, b.right)))
    });
    boxes.dedup();
    Ok(boxes)
}

/// Crops `bbox` out of `frame` and resamples it bilinearly to `CROP_SIZE²`.
pub fn crop_and_resize(frame: &Frame, bbox: BBox) -> Result<Frame> {
    bbox.validate(frame.height(), frame.width())?;
    let c = frame.channels();
    let (h, w) = (bbox.height(), bbox.width());
    let mut region = Vec::with_capacity(h * w * c);
    for y in bbox.top..bbox.bottom {
        for x in bbox.left..bbox.right {
            region.extend(frame.pixel(y, x).iter().map(|&v| f64::from(v)));
        }
    }
    let resized = resize_bilinear(&region, h, w, c, CROP_SIZE, CROP_SIZE);
    let data = resized.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    Frame::new(CROP_SIZE, CROP_SIZE, c, data)
}

/// Colour of planted face markers in synthetic footage.
pub const MARKER_COLOR: [u8; 3] = [0, 255, 0];

/// Deterministic detector for synthetic footage: every 4-connected blob of
/// marker-coloured pixels is a face, and its bounding box is the detection.
///
/// Colour matching is tolerant so markers survive a YUV round trip.
#[derive(Debug, Clone, Copy)]
pub struct MarkerDetector {
    /// Blobs with fewer pixels are ignored.
    pub min_pixels: usize,
}

impl Default for MarkerDetector {
    fn default() -> Self {
        Self { min_pixels: 4 }
    }
}

impl MarkerDetector {
    fn is_marker(px: &[u8]) -> bool {
        px.len() >= 3 && px[1] >= 200 && px[0] <= 60 && px[2] <= 60
    }
}

impl FaceDetector for MarkerDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<BBox>> {
        let (h, w) = (frame.height(), frame.width());
        let mut seen = vec![false; h * w];
        let mut boxes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..h * w {
            if seen[start] || !Self::is_marker(frame.pixel(start / w, start % w)) {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let (mut top, mut left, mut bottom, mut right) = (h, w, 0, 0);
            let mut count = 0;
            while let Some(i) = queue.pop_front() {
                let (y, x) = (i / w, i % w);
                count += 1;
                top = top.min(y);
                left = left.min(x);
                bottom = bottom.max(y + 1);
                right = right.max(x + 1);
                let neighbours = [
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                ];
                for j in neighbours.into_iter().flatten() {
                    if !seen[j] && Self::is_marker(frame.pixel(j / w, j % w)) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            if count >= self.min_pixels {
                boxes.push(BBox::new(top, left, bottom, right));
            }
        }
        Ok(boxes)
    }
}

/// Delegates detection to an external program.
///
/// The frame is written to the program's stdin as PNG; the program must print
/// a JSON array of `[top, left, bottom, right]` boxes on stdout.
#[derive(Debug, Clone)]
pub struct CommandDetector {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl FaceDetector for CommandDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<BBox>> {
        let mut png = Vec::new();
        let color = if frame.channels() == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::ImageEncoder::write_image(
            image::codecs::png::PngEncoder::new(&mut png),
            frame.data(),
            frame.width() as u32,
            frame.height() as u32,
            color,
        )
        .map_err(|source| Error::Image {
            path: self.program.clone(),
            source,
        })?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(&png)
            .map_err(|e| Error::io(&self.program, e))?;
        let out = child.wait_with_output().map_err(|e| Error::io(&self.program, e))?;
        if !out.status.success() {
            return Err(Error::invalid(format!(
                "face detector {} exited with {}",
                self.program.display(),
                out.status
            )));
        }
        let raw: Vec<[usize; 4]> = serde_json::from_slice(&out.stdout)?;
        Ok(raw.into_iter().map(|[t, l, b, r]| BBox::new(t, l, b, r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::plant_marker;

    #[test]
    fn marker_detector_echoes_planted_box() {
        let mut frame = Frame::rgb_filled(80, 60, [40, 40, 40]);
        let planted = BBox::new(10, 12, 40, 50);
        plant_marker(&mut frame, planted);
        let boxes = detect_faces(&MarkerDetector::default(), &frame).unwrap();
        assert_eq!(boxes, vec![planted]);
    }

    #[test]
    fn blank_frame_has_no_faces() {
        let frame = Frame::rgb_filled(32, 32, [0, 0, 0]);
        assert!(detect_faces(&MarkerDetector::default(), &frame).unwrap().is_empty());
    }

    #[test]
    fn boxes_sorted_by_area_descending() {
        let mut frame = Frame::rgb_filled(100, 100, [10, 10, 10]);
        let small = BBox::new(5, 5, 25, 25); // 400
        let large = BBox::new(50, 50, 80, 80); // 900
        plant_marker(&mut frame, small);
        plant_marker(&mut frame, large);
        let boxes = detect_faces(&MarkerDetector::default(), &frame).unwrap();
        assert_eq!(boxes, vec![large, small]);
        assert_eq!((boxes[0].area(), boxes[1].area()), (900, 400));
    }

    #[test]
    fn identity_crop_is_pixel_exact() {
        let frame = Frame::new(
            300,
            260,
            3,
            (0..300 * 260 * 3).map(|i| ((i * 7919) % 256) as u8).collect(),
        )
        .unwrap();
        let bbox = BBox::new(20, 30, 20 + CROP_SIZE, 30 + CROP_SIZE);
        let crop = crop_and_resize(&frame, bbox).unwrap();
        for y in 0..CROP_SIZE {
            for x in 0..CROP_SIZE {
                assert_eq!(crop.pixel(y, x), frame.pixel(y + 20, x + 30));
            }
        }
    }

    #[test]
    fn constant_region_downsamples_to_constant() {
        let frame = Frame::rgb_filled(500, 500, [12, 200, 99]);
        let crop = crop_and_resize(&frame, BBox::new(10, 20, 458, 468)).unwrap();
        assert!(crop.data().chunks_exact(3).all(|px| px == [12, 200, 99]));
    }

    #[test]
    fn checkerboard_upsample_keeps_corners() {
        let frame = Frame::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
        let crop = crop_and_resize(&frame, BBox::new(0, 0, 2, 2)).unwrap();
        let last = CROP_SIZE - 1;
        assert_eq!(crop.pixel(0, 0), [0]);
        assert_eq!(crop.pixel(0, last), [255]);
        assert_eq!(crop.pixel(last, 0), [255]);
        assert_eq!(crop.pixel(last, last), [0]);
        // At the exact centre all four taps weigh 1/4: 127.5, rounded half away from zero.
        let mid = crop.pixel(CROP_SIZE / 2, CROP_SIZE / 2)[0];
        assert!(mid > 0 && mid < 255, "centre value {mid}");
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let frame = Frame::rgb_filled(10, 10, [0, 0, 0]);
        assert!(matches!(
            crop_and_resize(&frame, BBox::new(3, 3, 3, 8)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(crop_and_resize(&frame, BBox::new(0, 0, 11, 5)).is_err());
    }
}
