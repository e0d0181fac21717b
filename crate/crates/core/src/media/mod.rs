//! Video screening, decoding, face detection and face cropping.

mod face;
mod ffmpeg;
mod frame;
mod video;
pub mod y4m;

pub use face::{crop_and_resize, detect_faces, BBox, CommandDetector, FaceCrop, FaceDetector, MarkerDetector, MARKER_COLOR};
pub use ffmpeg::FfmpegDecoder;
pub use frame::{Frame, FrameSequence};
pub use video::{
    decode_frames, probe_video, purge_corrupted, resample_indices, DecodedVideo, DecoderSet, PurgeReport, VideoDecoder,
    VideoMeta,
};
pub(crate) use video::{list_files, list_files_with_extension, source_id_of};
pub use y4m::{Y4mDecoder, Y4mWriter};
