//! YUV4MPEG2 (`.y4m`) reading and writing.
//!
//! Y4M is an uncompressed container, which makes it the decoder of choice for
//! generated fixtures: truncation damage is observable frame by frame. The
//! writer emits full-range 4:4:4; the reader accepts 4:4:4, 4:2:2, the 4:2:0
//! variants and mono, in either colour range.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::frame::Frame;
use super::video::{DecodedVideo, VideoDecoder, VideoMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    C444,
    C422,
    C420,
    Mono,
}

#[derive(Debug, Clone)]
struct Header {
    width: usize,
    height: usize,
    fps: f64,
    chroma: Chroma,
    full_range: bool,
}

impl Header {
    fn chroma_dims(&self) -> (usize, usize) {
        match self.chroma {
            Chroma::C444 => (self.width, self.height),
            Chroma::C422 => (self.width.div_ceil(2), self.height),
            Chroma::C420 => (self.width.div_ceil(2), self.height.div_ceil(2)),
            Chroma::Mono => (0, 0),
        }
    }

    fn frame_bytes(&self) -> usize {
        let (cw, ch) = self.chroma_dims();
        self.width * self.height + 2 * cw * ch
    }
}

fn parse_header(line: &str) -> std::result::Result<Header, String> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err("missing YUV4MPEG2 signature".into());
    }
    let (mut width, mut height, mut fps) = (None, None, None);
    let mut chroma = Chroma::C420;
    let mut full_range = false;
    for tok in tokens {
        let (tag, value) = tok.split_at(1);
        match tag {
            "W" => width = value.parse::<usize>().ok(),
            "H" => height = value.parse::<usize>().ok(),
            "F" => {
                let (n, d) = value.split_once(':').ok_or("malformed frame rate")?;
                let n: f64 = n.parse().map_err(|_| "malformed frame rate")?;
                let d: f64 = d.parse().map_err(|_| "malformed frame rate")?;
                fps = Some(n / d);
            }
            "C" => {
                chroma = match value {
                    "444" => Chroma::C444,
                    "422" => Chroma::C422,
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => Chroma::C420,
                    "mono" => Chroma::Mono,
                    other => return Err(format!("unsupported colorspace C{other}")),
                }
            }
            "X" if value == "COLORRANGE=FULL" => full_range = true,
            _ => {}
        }
    }
    let width = width.filter(|&w| w > 0).ok_or("missing or zero width")?;
    let height = height.filter(|&h| h > 0).ok_or("missing or zero height")?;
    let fps = fps.filter(|f| f.is_finite() && *f > 0.0).ok_or("missing or invalid frame rate")?;
    Ok(Header {
        width,
        height,
        fps,
        chroma,
        full_range,
    })
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn yuv_to_rgb(y: u8, cb: u8, cr: u8, full_range: bool) -> [u8; 3] {
    let (y, cb, cr) = (f64::from(y), f64::from(cb) - 128.0, f64::from(cr) - 128.0);
    if full_range {
        [
            clamp_u8(y + 1.402 * cr),
            clamp_u8(y - 0.344136 * cb - 0.714136 * cr),
            clamp_u8(y + 1.772 * cb),
        ]
    } else {
        let y = 1.164383 * (y - 16.0);
        [
            clamp_u8(y + 1.596027 * cr),
            clamp_u8(y - 0.391762 * cb - 0.812968 * cr),
            clamp_u8(y + 2.017232 * cb),
        ]
    }
}

fn rgb_to_yuv(px: &[u8]) -> [u8; 3] {
    let (r, g, b) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
    [
        clamp_u8(0.299 * r + 0.587 * g + 0.114 * b),
        clamp_u8(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b),
        clamp_u8(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b),
    ]
}

fn planes_to_rgb(h: &Header, buf: &[u8]) -> Frame {
    let (w, ht) = (h.width, h.height);
    let (cw, ch) = h.chroma_dims();
    let luma = &buf[..w * ht];
    let cb = &buf[w * ht..w * ht + cw * ch];
    let cr = &buf[w * ht + cw * ch..];
    let mut out = Vec::with_capacity(w * ht * 3);
    for y in 0..ht {
        for x in 0..w {
            let l = luma[y * w + x];
            let rgb = match h.chroma {
                Chroma::Mono => {
                    let v = if h.full_range {
                        l
                    } else {
                        clamp_u8(1.164383 * (f64::from(l) - 16.0))
                    };
                    [v, v, v]
                }
                chroma => {
                    let (cx, cy) = match chroma {
                        Chroma::C444 => (x, y),
                        Chroma::C422 => (x / 2, y),
                        _ => (x / 2, y / 2),
                    };
                    let ci = cy * cw + cx;
                    yuv_to_rgb(l, cb[ci], cr[ci], h.full_range)
                }
            };
            out.extend_from_slice(&rgb);
        }
    }
    Frame::new(w, ht, 3, out).expect("plane sizes are consistent with the header")
}

/// Streams frames out of a Y4M file.
struct Y4mReader {
    path: PathBuf,
    reader: BufReader<File>,
    header: Header,
    offset: u64,
}

enum Next {
    Frame(Vec<u8>),
    End,
    /// Damaged or truncated frame.
    Broken(String),
}

impl Y4mReader {
    fn open(path: &Path) -> Result<std::result::Result<Self, String>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut line = Vec::new();
        let n = (&mut reader)
            .take(4096)
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 || line.last() != Some(&b'\n') {
            return Ok(Err("missing or unterminated stream header".into()));
        }
        let text = String::from_utf8_lossy(&line[..n - 1]).into_owned();
        Ok(parse_header(&text).map(|header| Self {
            path: path.to_path_buf(),
            reader,
            header,
            offset: n as u64,
        }))
    }

    fn next_frame(&mut self) -> Next {
        let mut line = Vec::new();
        match (&mut self.reader).take(1024).read_until(b'\n', &mut line) {
            Ok(0) => return Next::End,
            Ok(_) => {}
            Err(e) => return Next::Broken(e.to_string()),
        }
        if !line.starts_with(b"FRAME") || line.last() != Some(&b'\n') {
            return Next::Broken(format!("bad frame marker at byte {}", self.offset));
        }
        self.offset += line.len() as u64;
        let mut buf = vec![0u8; self.header.frame_bytes()];
        match self.reader.read_exact(&mut buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Next::Frame(buf)
            }
            Err(e) => Next::Broken(format!("truncated frame at byte {}: {e}", self.offset)),
        }
    }
}

/// Built-in decoder for `.y4m` files.
#[derive(Debug, Default, Clone, Copy)]
pub struct Y4mDecoder;

impl VideoDecoder for Y4mDecoder {
    fn name(&self) -> &'static str {
        "y4m"
    }

    fn supports(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
    }

    fn probe(&self, path: &Path) -> Result<VideoMeta> {
        let mut reader = match Y4mReader::open(path)? {
            Ok(r) => r,
            Err(reason) => {
                log::warn!("{}: unreadable: {reason}", path.display());
                return Ok(VideoMeta::unreadable(path));
            }
        };
        let mut frames = 0usize;
        let partial = loop {
            match reader.next_frame() {
                Next::Frame(_) => frames += 1,
                Next::End => break false,
                Next::Broken(reason) => {
                    log::warn!("{}: partial decode after {frames} frames: {reason}", path.display());
                    break true;
                }
            }
        };
        let h = &reader.header;
        Ok(VideoMeta {
            path: path.to_path_buf(),
            frame_count: frames,
            fps: h.fps,
            width: h.width,
            height: h.height,
            readable: frames > 0,
            partial,
        })
    }

    fn decode(&self, path: &Path) -> Result<DecodedVideo> {
        let mut reader = Y4mReader::open(path)?.map_err(|message| Error::Decode {
            path: path.to_path_buf(),
            message,
        })?;
        let mut frames = Vec::new();
        let partial = loop {
            match reader.next_frame() {
                Next::Frame(buf) => frames.push(planes_to_rgb(&reader.header, &buf)),
                Next::End => break false,
                Next::Broken(reason) => {
                    log::warn!("{}: {reason}", reader.path.display());
                    break true;
                }
            }
        };
        Ok(DecodedVideo {
            fps: reader.header.fps,
            frames,
            partial,
        })
    }
}

/// Writes RGB frames as a full-range 4:4:4 Y4M stream.
pub struct Y4mWriter {
    out: BufWriter<File>,
    path: PathBuf,
    width: usize,
    height: usize,
}

impl Y4mWriter {
    /// `fps` is written as the rational `fps_num:fps_den`.
    pub fn create(path: &Path, width: usize, height: usize, fps_num: u32, fps_den: u32) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(
            out,
            "YUV4MPEG2 W{width} H{height} F{fps_num}:{fps_den} Ip A1:1 C444 XCOLORRANGE=FULL"
        )
        .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            width,
            height,
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        if frame.width() != self.width || frame.height() != self.height || frame.channels() != 3 {
            return Err(Error::invalid(format!(
                "expected a {}x{} RGB frame, got {}x{}x{}",
                self.width,
                self.height,
                frame.width(),
                frame.height(),
                frame.channels()
            )));
        }
        let n = self.width * self.height;
        let mut planes = vec![0u8; 3 * n];
        for (i, px) in frame.data().chunks_exact(3).enumerate() {
            let [y, cb, cr] = rgb_to_yuv(px);
            planes[i] = y;
            planes[n + i] = cb;
            planes[2 * n + i] = cr;
        }
        self.out.write_all(b"FRAME\n").map_err(|e| Error::io(&self.path, e))?;
        self.out.write_all(&planes).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_parsing() {
        let h = parse_header("YUV4MPEG2 W64 H48 F30000:1001 Ip A1:1 C420jpeg").unwrap();
        assert_eq!((h.width, h.height, h.chroma), (64, 48, Chroma::C420));
        assert!((h.fps - 29.97).abs() < 1e-2);
        assert_eq!(h.frame_bytes(), 64 * 48 + 2 * 32 * 24);
        assert!(parse_header("YUV4MPEG2 W64 F30:1").is_err());
        assert!(parse_header("RIFF").is_err());
    }

    #[test]
    fn colour_round_trip_is_close() {
        for rgb in [[0u8, 0, 0], [255, 255, 255], [0, 255, 0], [200, 30, 90], [17, 128, 240]] {
            let [y, cb, cr] = rgb_to_yuv(&rgb);
            let back = yuv_to_rgb(y, cb, cr, true);
            for (a, b) in rgb.iter().zip(back) {
                assert!((i32::from(*a) - i32::from(b)).abs() <= 2, "{rgb:?} -> {back:?}");
            }
        }
    }
}
