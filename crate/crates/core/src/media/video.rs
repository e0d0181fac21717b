use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ffmpeg::FfmpegDecoder;
use super::frame::{Frame, FrameSequence};
use super::y4m::Y4mDecoder;
use crate::{Error, Result};

/// Container-level facts about a video file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub path: PathBuf,
    pub frame_count: usize,
    /// Zero when the file is unreadable.
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub readable: bool,
    /// Decoding stopped early on damaged data; the decoded prefix is kept.
    pub partial: bool,
}

impl VideoMeta {
    pub fn unreadable(path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            frame_count: 0,
            fps: 0.0,
            width: 0,
            height: 0,
            readable: false,
            partial: false,
        }
    }
}

/// Native-rate frames straight out of a decoder.
#[derive(Debug, Clone)]
pub struct DecodedVideo {
    pub fps: f64,
    pub frames: Vec<Frame>,
    pub partial: bool,
}

/// Adapter slot for container decoders.
pub trait VideoDecoder: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether this decoder claims the file (usually by extension).
    fn supports(&self, path: &Path) -> bool;

    /// Must report `readable = false` rather than fail when the container is
    /// damaged; errors are reserved for missing files and I/O failures.
    fn probe(&self, path: &Path) -> Result<VideoMeta>;

    fn decode(&self, path: &Path) -> Result<DecodedVideo>;
}

/// An ordered list of decoders; the first one that supports a path wins.
pub struct DecoderSet {
    decoders: Vec<Box<dyn VideoDecoder>>,
}

impl Default for DecoderSet {
    /// Y4M always, plus ffmpeg when it is on `PATH`.
    fn default() -> Self {
        let mut decoders: Vec<Box<dyn VideoDecoder>> = vec![Box::new(Y4mDecoder)];
        if let Some(ff) = FfmpegDecoder::locate() {
            decoders.push(Box::new(ff));
        }
        Self { decoders }
    }
}

impl DecoderSet {
    pub fn new(decoders: Vec<Box<dyn VideoDecoder>>) -> Self {
        Self { decoders }
    }

    pub fn decoder_for(&self, path: &Path) -> Option<&dyn VideoDecoder> {
        self.decoders.iter().find(|d| d.supports(path)).map(|d| d.as_ref())
    }

    pub fn supports(&self, path: &Path) -> bool {
        self.decoder_for(path).is_some()
    }

    pub fn probe(&self, path: &Path) -> Result<VideoMeta> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let decoder = self
            .decoder_for(path)
            .ok_or_else(|| Error::UnsupportedFormat(path.to_path_buf()))?;
        decoder.probe(path)
    }

    /// Decodes and resamples to `target_fps` by nearest-source-frame mapping.
    pub fn decode_frames(&self, path: &Path, target_fps: f64) -> Result<FrameSequence> {
        if !(target_fps > 0.0) {
            return Err(Error::invalid(format!("target fps must be positive, got {target_fps}")));
        }
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let decoder = self
            .decoder_for(path)
            .ok_or_else(|| Error::UnsupportedFormat(path.to_path_buf()))?;
        let decoded = decoder.decode(path)?;
        if decoded.frames.is_empty() {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: "no frames decoded".into(),
            });
        }
        let indices = resample_indices(decoded.frames.len(), decoded.fps, target_fps);
        let frames = indices.iter().map(|&i| decoded.frames[i].clone()).collect();
        let mut seq = FrameSequence::new(source_id_of(path), target_fps, frames)?;
        seq.partial = decoded.partial;
        Ok(seq)
    }

    pub fn purge_corrupted(&self, dir: &Path, dry_run: bool) -> Result<PurgeReport> {
        if !dir.is_dir() {
            return Err(Error::NotFound(dir.to_path_buf()));
        }
        let mut report = PurgeReport::default();
        for path in list_files(dir)? {
            if !self.supports(&path) {
                continue;
            }
            let meta = match self.probe(&path) {
                Ok(meta) => meta,
                Err(e) => {
                    report.failures.push((path, e.to_string()));
                    continue;
                }
            };
            if meta.readable {
                continue;
            }
            if !dry_run {
                if let Err(e) = std::fs::remove_file(&path) {
                    log::error!("could not delete {}: {e}", path.display());
                    report.failures.push((path, e.to_string()));
                    continue;
                }
                log::info!("deleted corrupted video {}", path.display());
            }
            report.removed.push(path);
        }
        Ok(report)
    }
}

/// Outcome of a corruption sweep.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct PurgeReport {
    /// Unreadable files, deleted unless the sweep was a dry run.
    pub removed: Vec<PathBuf>,
    /// Files that could not be probed or deleted, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// Probes with the default decoder set.
pub fn probe_video(path: &Path) -> Result<VideoMeta> {
    DecoderSet::default().probe(path)
}

/// Deletes (or with `dry_run`, only lists) every unreadable video under `dir`.
pub fn purge_corrupted(dir: &Path, dry_run: bool) -> Result<Vec<PathBuf>> {
    DecoderSet::default().purge_corrupted(dir, dry_run).map(|r| r.removed)
}

pub fn decode_frames(path: &Path, target_fps: f64) -> Result<FrameSequence> {
    DecoderSet::default().decode_frames(path, target_fps)
}

/// Source frame for each output frame when resampling `n` frames from
/// `source_fps` to `target_fps`: output `i` takes `round(i · source/target)`,
/// clamped to the last frame. The output length is `round(n · target/source)`.
pub fn resample_indices(n: usize, source_fps: f64, target_fps: f64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let ratio = source_fps / target_fps;
    let count = ((n as f64 / ratio).round() as usize).max(1);
    (0..count)
        .map(|i| ((i as f64 * ratio).round() as usize).min(n - 1))
        .collect()
}

pub(crate) fn source_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub(crate) fn list_files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = list_files(dir)?;
    files.retain(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext)));
    Ok(files)
}

/// Regular files below `dir`, recursively, in sorted order.
pub(crate) fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let entry = entry.map_err(|e| Error::io(&d, e))?;
            let path = entry.path();
            let kind = entry.file_type().map_err(|e| Error::io(&path, e))?;
            if kind.is_dir() {
                stack.push(path);
            } else if kind.is_file() {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
