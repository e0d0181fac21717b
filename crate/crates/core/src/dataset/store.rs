//! Binary tensor files.
//!
//! Layout: 4-byte magic `DFT1`, then height, width and channels as
//! little-endian `u32`, then `h·w·c` little-endian `f32` values in C order.

use std::fs;
use std::path::{Path, PathBuf};

use crate::media::{FaceCrop, Frame};
use crate::{Error, Result, Tensor3};

pub const MAGIC: [u8; 4] = *b"DFT1";
pub const HEADER_LEN: usize = 16;
pub const EXTENSION: &str = "tensor";

pub fn write_tensor(path: &Path, dims: (usize, usize, usize), data: &[f32]) -> Result<()> {
    let (h, w, c) = dims;
    if data.len() != h * w * c {
        return Err(Error::invalid(format!(
            "{} values do not fill a {h}x{w}x{c} tensor",
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    bytes.extend_from_slice(&MAGIC);
    for d in [h, w, c] {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} exceeds u32")))?;
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<((usize, usize, usize), Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(fail(0, format!("bad magic {:02x?}", &bytes[..4])));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let dims = (dim(0), dim(1), dim(2));
    let count = dims
        .0
        .checked_mul(dims.1)
        .and_then(|n| n.checked_mul(dims.2))
        .ok_or_else(|| fail(4, format!("dimensions {dims:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * count {
        return Err(fail(
            HEADER_LEN + payload.len().min(4 * count),
            format!("payload has {} bytes, dimensions {dims:?} need {}", payload.len(), 4 * count),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok((dims, data))
}

/// Stores an 8-bit image as `value / 255` in `f32`.
pub fn save_sample(image: &Frame, path: &Path) -> Result<()> {
    let data: Vec<f32> = image.data().iter().map(|&v| v as f32 / 255.0).collect();
    write_tensor(path, (image.height(), image.width(), image.channels()), &data)
}

/// Writes each crop to `<dir>/<source_id>/<frame_index>_<ordinal>.tensor`.
pub fn save_samples(crops: &[FaceCrop], dir: &Path) -> Result<Vec<PathBuf>> {
    crops
        .iter()
        .map(|crop| {
            let path = dir
                .join(&crop.source_id)
                .join(format!("{}.{EXTENSION}", crop.file_stem()));
            save_sample(&crop.image, &path).map(|()| path)
        })
        .collect()
}

/// Loads a stored sample; values are the stored `f32`s widened exactly.
pub fn load_sample(path: &Path) -> Result<Tensor3> {
    let ((h, w, c), data) = read_tensor(path)?;
    Ok(Tensor3::from_vec(h, w, c, data.into_iter().map(f64::from).collect()))
}
