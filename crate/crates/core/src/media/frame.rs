use std::path::Path;

use crate::{Error, Result, Tensor3};

/// An 8-bit image in row-major HWC order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "frame buffer has {} bytes, expected {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn rgb_filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            channels: 3,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [u8] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Intensities scaled to `[0, 1]`.
    pub fn to_unit_tensor(&self) -> Tensor3 {
        Tensor3::from_vec(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f64::from(v as f32 / 255.0)).collect(),
        )
    }

    /// Writes a PNG, creating parent directories as needed.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            n => return Err(Error::invalid(format!("cannot write a {n}-channel frame as PNG"))),
        };
        image::save_buffer(path, &self.data, self.width as u32, self.height as u32, color).map_err(|source| {
            Error::Image {
                path: path.to_path_buf(),
                source,
            }
        })
    }

    /// Loads a PNG as 3-channel RGB.
    pub fn load_png(path: &Path) -> Result<Frame> {
        let img = image::open(path)
            .map_err(|source| match source {
                image::ImageError::IoError(e) => Error::io(path, e),
                source => Error::Image {
                    path: path.to_path_buf(),
                    source,
                },
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Frame::new(w as usize, h as usize, 3, img.into_raw())
    }
}

/// Decoded frames of one video in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub source_id: String,
    pub fps: f64,
    pub frames: Vec<Frame>,
    /// The decoder stopped early on a damaged stream.
    pub partial: bool,
}

impl FrameSequence {
    pub fn new(source_id: impl Into<String>, fps: f64, frames: Vec<Frame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some(bad) = frames.iter().position(|f| !f.same_shape(first)) {
                return Err(Error::invalid(format!("frame {bad} differs in shape from frame 0")));
            }
        }
        if !(fps > 0.0) {
            return Err(Error::invalid(format!("frame rate must be positive, got {fps}")));
        }
        Ok(Self {
            source_id: source_id.into(),
            fps,
            frames,
            partial: false,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
