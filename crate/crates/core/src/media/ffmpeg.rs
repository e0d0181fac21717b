//! Decoder adapter that shells out to `ffprobe`/`ffmpeg` for common
//! containers (mp4, avi, mov, mkv, webm, ...).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::frame::Frame;
use super::video::{DecodedVideo, VideoDecoder, VideoMeta};
use crate::{Error, Result};

const EXTENSIONS: &[&str] = &["mp4", "m4v", "avi", "mov", "mkv", "webm", "mpg", "mpeg", "wmv", "flv", "ts"];

#[derive(Debug, Clone)]
pub struct FfmpegDecoder {
    ffmpeg: PathBuf,
    ffprobe: PathBuf,
}

impl FfmpegDecoder {
    pub fn new(ffmpeg: PathBuf, ffprobe: PathBuf) -> Self {
        Self { ffmpeg, ffprobe }
    }

    /// Finds both binaries on `PATH`.
    pub fn locate() -> Option<Self> {
        let find = |name: &str| {
            std::env::var_os("PATH").and_then(|paths| {
                std::env::split_paths(&paths)
                    .map(|p| p.join(name))
                    .find(|p| p.is_file())
            })
        };
        Some(Self::new(find("ffmpeg")?, find("ffprobe")?))
    }

    fn stream_info(&self, path: &Path) -> Option<(usize, usize, f64)> {
        let out = Command::new(&self.ffprobe)
            .args(["-v", "error", "-select_streams", "v:0", "-show_entries", "stream=width,height,r_frame_rate"])
            .args(["-of", "json"])
            .arg(path)
            .output()
            .ok()?;
        if !out.status.success() {
            return None;
        }
        let json: serde_json::Value = serde_json::from_slice(&out.stdout).ok()?;
        let stream = json.get("streams")?.get(0)?;
        let w = stream.get("width")?.as_u64()? as usize;
        let h = stream.get("height")?.as_u64()? as usize;
        let (n, d) = stream.get("r_frame_rate")?.as_str()?.split_once('/')?;
        let fps = n.parse::<f64>().ok()? / d.parse::<f64>().ok()?;
        (w > 0 && h > 0 && fps.is_finite() && fps > 0.0).then_some((w, h, fps))
    }

    /// Streams raw RGB frames, calling `sink` for each; returns whether ffmpeg
    /// reported an error after the last frame.
    fn stream_frames(&self, path: &Path, w: usize, h: usize, mut sink: impl FnMut(Vec<u8>)) -> Result<bool> {
        let mut child = Command::new(&self.ffmpeg)
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::io(&self.ffmpeg, e))?;
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let mut truncated = false;
        loop {
            let mut buf = vec![0u8; w * h * 3];
            match stdout.read_exact(&mut buf) {
                Ok(()) => sink(buf),
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(_) => {
                    truncated = true;
                    break;
                }
            }
        }
        let status = child.wait().map_err(|e| Error::io(&self.ffmpeg, e))?;
        Ok(truncated || !status.success())
    }
}

impl VideoDecoder for FfmpegDecoder {
    fn name(&self) -> &'static str {
        "ffmpeg"
    }

    fn supports(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
    }

    fn probe(&self, path: &Path) -> Result<VideoMeta> {
        let Some((w, h, fps)) = self.stream_info(path) else {
            return Ok(VideoMeta::unreadable(path));
        };
        let mut frames = 0usize;
        let partial = self.stream_frames(path, w, h, |_| frames += 1)?;
        if partial {
            log::warn!("{}: partial decode after {frames} frames", path.display());
        }
        Ok(VideoMeta {
            path: path.to_path_buf(),
            frame_count: frames,
            fps,
            width: w,
            height: h,
            readable: frames > 0,
            partial: partial && frames > 0,
        })
    }

    fn decode(&self, path: &Path) -> Result<DecodedVideo> {
        let (w, h, fps) = self.stream_info(path).ok_or_else(|| Error::Decode {
            path: path.to_path_buf(),
            message: "ffprobe found no video stream".into(),
        })?;
        let mut frames = Vec::new();
        let partial = self.stream_frames(path, w, h, |buf| {
            frames.push(Frame::new(w, h, 3, buf).expect("buffer sized from stream info"))
        })?;
        Ok(DecodedVideo { fps, frames, partial })
    }
}
