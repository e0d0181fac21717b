//! Synthetic data generators for tests, benchmarks and the demo fixture.
//!
//! * discriminative-patch images: fake images carry a high-contrast checker
//!   patch inside one quadrant of a smooth background; real images do not.
//! * an imbalanced version of the same task (majority fake).
//! * short Y4M videos with planted face markers for end-to-end runs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::media::{BBox, Frame, FrameSequence, Y4mWriter, MARKER_COLOR};
use crate::{Label, Result, Tensor3, CROP_SIZE};

/// Draws a one-pixel marker outline along the inside of `bbox`, so that
/// [`MarkerDetector`](crate::media::MarkerDetector) reports exactly `bbox`.
pub fn plant_marker(frame: &mut Frame, bbox: BBox) {
    for y in bbox.top..bbox.bottom {
        for x in bbox.left..bbox.right {
            let edge = y == bbox.top || y + 1 == bbox.bottom || x == bbox.left || x + 1 == bbox.right;
            if edge {
                frame.pixel_mut(y, x)[..3].copy_from_slice(&MARKER_COLOR);
            }
        }
    }
}

/// Random frames drawn from `levels` evenly spaced grey values per channel.
/// Few levels make repeated frames and tied differences likely.
pub fn random_sequence(rng: &mut impl Rng, len: usize, size: usize, levels: u8) -> FrameSequence {
    let levels = levels.max(2);
    let step = 255 / (levels - 1);
    let frames = (0..len)
        .map(|_| {
            let data = (0..size * size * 3).map(|_| rng.random_range(0..levels) * step).collect();
            Frame::new(size, size, 3, data).expect("consistent frame size")
        })
        .collect();
    FrameSequence::new("random", 30.0, frames).expect("consistent frames")
}

pub const PATCH_SIZE: usize = 96;
const CHECKER_CELL: usize = 4;

/// An image of the patch task. `quadrant` is 0..4 in row-major order
/// (top-left, top-right, bottom-left, bottom-right) for fake images.
#[derive(Debug, Clone)]
pub struct PatchImage {
    pub image: Tensor3,
    pub label: Label,
    pub quadrant: Option<usize>,
}

/// Quadrant of pixel `(y, x)` in a `size × size` image.
pub fn quadrant_of(y: usize, x: usize, size: usize) -> usize {
    usize::from(y >= size / 2) * 2 + usize::from(x >= size / 2)
}

/// One `size × size × 3` image with values in `[0, 1]`: a smooth linear
/// gradient background, plus a checker patch for fake images.
pub fn patch_image(rng: &mut impl Rng, label: Label, size: usize) -> PatchImage {
    let base: f64 = rng.random_range(0.4..0.6);
    let tint: [f64; 3] = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let amplitude: f64 = rng.random_range(0.0..0.15);
    let (dy, dx) = (angle.sin(), angle.cos());
    let half = size as f64 / 2.0;
    let mut image = Tensor3::from_fn(size, size, 3, |y, x, k| {
        let t = ((y as f64 - half) * dy + (x as f64 - half) * dx) / size as f64;
        (base + tint[k] + amplitude * t).clamp(0.0, 1.0)
    });
    let quadrant = match label {
        Label::Real => None,
        Label::Fake => {
            let q = rng.random_range(0..4);
            let patch = PATCH_SIZE.min(size / 2);
            let slack = size / 2 - patch;
            let top = (q / 2) * (size / 2) + rng.random_range(0..=slack);
            let left = (q % 2) * (size / 2) + rng.random_range(0..=slack);
            let (lo, hi) = (rng.random_range(0.0..0.2), rng.random_range(0.8..1.0));
            for y in top..top + patch {
                for x in left..left + patch {
                    let on = ((y - top) / CHECKER_CELL + (x - left) / CHECKER_CELL).is_multiple_of(2);
                    for k in 0..3 {
                        image.set(y, x, k, if on { hi } else { lo });
                    }
                }
            }
            Some(q)
        }
    };
    PatchImage { image, label, quadrant }
}

/// `n_real` real then `n_fake` fake crop-sized patch images.
pub fn patch_dataset(n_real: usize, n_fake: usize, seed: u64) -> Vec<(Tensor3, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_n(Label::Real, n_real)
        .chain(std::iter::repeat_n(Label::Fake, n_fake))
        .map(|label| (patch_image(&mut rng, label, CROP_SIZE).image, label))
        .collect()
}

/// Train/validation/test sets of the patch task at a 9:1 fake:real ratio.
#[derive(Debug, Clone)]
pub struct ImbalancedBenchmark {
    pub train: Vec<(Tensor3, Label)>,
    pub val: Vec<(Tensor3, Label)>,
    pub test: Vec<(Tensor3, Label)>,
}

impl ImbalancedBenchmark {
    pub const TRAIN: (usize, usize) = (40, 360);
    pub const VAL: (usize, usize) = (6, 54);
    pub const TEST: (usize, usize) = (20, 180);

    /// Same `seed`, same data.
    pub fn generate(seed: u64) -> Self {
        let part = |(real, fake), salt: u64| patch_dataset(real, fake, seed.wrapping_mul(3).wrapping_add(salt));
        Self {
            train: part(Self::TRAIN, 0),
            val: part(Self::VAL, 1),
            test: part(Self::TEST, 2),
        }
    }
}

/// Layout of the two-video demo fixture.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub real_dir: PathBuf,
    pub fake_dir: PathBuf,
    pub videos: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct FixtureSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fps: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            frames: 300,
            width: 80,
            height: 80,
            fps: 30,
            seed: 7,
        }
    }
}

/// One fixture frame: a marked face box whose content is smooth for real
/// footage and checkered for fake footage, with per-frame brightness jitter.
pub fn fixture_frame(rng: &mut impl Rng, label: Label, spec: &FixtureSpec) -> Frame {
    let (w, h) = (spec.width, spec.height);
    let face = BBox::new(h / 5, w / 5, h - h / 5, w - w / 5);
    let jitter: f64 = rng.random_range(-40.0..40.0);
    let mut frame = Frame::rgb_filled(w, h, [60, 60, 90]);
    for y in 0..h {
        for x in 0..w {
            let inside = y >= face.top && y < face.bottom && x >= face.left && x < face.right;
            let px = frame.pixel_mut(y, x);
            if !inside {
                px.copy_from_slice(&[(60.0 + jitter / 2.0) as u8, 60, 90]);
                continue;
            }
            let shade = 150.0 + 30.0 * (y - face.top) as f64 / face.height() as f64 + jitter;
            let value = match label {
                Label::Real => shade,
                Label::Fake => {
                    let on = ((y - face.top) / 2 + (x - face.left) / 2).is_multiple_of(2);
                    if on { shade + 60.0 } else { shade - 90.0 }
                }
            };
            let v = value.clamp(0.0, 255.0);
            px.copy_from_slice(&[v as u8, (v * 0.8) as u8, (v * 0.7) as u8]);
        }
    }
    plant_marker(&mut frame, face);
    frame
}

/// Writes `<dir>/real/real_clip.y4m` and `<dir>/fake/fake_clip.y4m`.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut videos = Vec::new();
    for label in Label::ALL {
        let label_dir = dir.join(label.as_str());
        std::fs::create_dir_all(&label_dir).map_err(|e| crate::Error::io(&label_dir, e))?;
        let path = label_dir.join(format!("{label}_clip.y4m"));
        let mut writer = Y4mWriter::create(&path, spec.width, spec.height, spec.fps, 1)?;
        for _ in 0..spec.frames {
            writer.write_frame(&fixture_frame(&mut rng, label, spec))?;
        }
        writer.finish()?;
        videos.push(path);
    }
    Ok(Fixture {
        real_dir: dir.join("real"),
        fake_dir: dir.join("fake"),
        videos,
    })
}
