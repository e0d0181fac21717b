//! End-to-end orchestration: scan → preprocess → split → weights → train →
//! evaluate → explain.
//!
//! Everything lives under `<out_dir>/<run_id>/`. Each stage hashes its inputs
//! (SHA-256 over file contents and the relevant settings); a stage is skipped
//! when the journal holds a `done` entry with the same hash and all of its
//! artifacts still exist.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DetectorSpec, RunConfig};
use crate::dataset::{build_manifest, save_sample, stratified_split, DatasetManifest, Split};
use crate::explain::{explain, overlay, tensor_to_frame, Method};
use crate::imbalance::{class_weights, ClassWeights};
use crate::journal::{Journal, Status};
use crate::keyframe::extract_keyframes;
use crate::media::{
    detect_faces, list_files, source_id_of, CommandDetector, DecoderSet, FaceCrop, FaceDetector, Frame, FrameSequence,
    MarkerDetector,
};
use crate::metrics::{evaluate, EvalReport};
use crate::nn::{Classifier, TinyBackbone};
use crate::trainer::train;
use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Scan,
    Preprocess,
    Split,
    Weights,
    Train,
    Evaluate,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Scan,
        Stage::Preprocess,
        Stage::Split,
        Stage::Weights,
        Stage::Train,
        Stage::Evaluate,
        Stage::Explain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Scan => "scan",
            Stage::Preprocess => "preprocess",
            Stage::Split => "split",
            Stage::Weights => "weights",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Artifact locations relative to the run directory.
pub mod paths {
    pub const SCAN: &str = "scan.json";
    pub const FACES: &str = "faces";
    pub const PREPROCESS: &str = "preprocess.json";
    pub const MANIFEST: &str = "manifest.jsonl";
    pub const WEIGHTS: &str = "weights.json";
    pub const CHECKPOINT: &str = "checkpoint";
    pub const HISTORY: &str = "history.csv";
    pub const REPORT: &str = "report.json";
    pub const CONFUSION: &str = "confusion.png";
    pub const HEATMAPS: &str = "heatmaps";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannedVideo {
    pub path: PathBuf,
    pub label: Label,
    pub sha256: String,
    pub frame_count: usize,
    pub fps: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub videos: Vec<ScannedVideo>,
    /// Unreadable videos (deleted unless `dry_run`).
    pub corrupted: Vec<PathBuf>,
    /// Files skipped for lack of a decoder, or that could not be probed.
    pub skipped: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFaces {
    pub path: PathBuf,
    pub label: Label,
    pub source_id: String,
    /// Frames of the face track, after resampling.
    pub face_frames: usize,
    pub keyframes: Vec<usize>,
    pub crops: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub videos: Vec<VideoFaces>,
    /// Videos yielding no crops, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub artifacts: Vec<PathBuf>,
}

pub struct Pipeline {
    cfg: RunConfig,
    run_dir: PathBuf,
    journal: Journal,
    decoders: DecoderSet,
    detector: Box<dyn FaceDetector>,
}

struct InputHash(Sha256);

impl InputHash {
    fn new(stage: Stage) -> Self {
        let mut h = Sha256::new();
        h.update(stage.as_str());
        Self(h)
    }

    fn value(&mut self, name: &str, value: impl Serialize) -> Result<&mut Self> {
        self.0.update(name.as_bytes());
        self.0.update(serde_json::to_vec(&value)?);
        Ok(self)
    }

    fn file(&mut self, path: &Path) -> Result<&mut Self> {
        self.0.update(path.to_string_lossy().as_bytes());
        self.0.update(fs::read(path).map_err(|e| Error::io(path, e))?);
        Ok(self)
    }

    /// Every file below `dir`, by relative path and content.
    fn tree(&mut self, dir: &Path) -> Result<&mut Self> {
        for path in list_files(dir)? {
            let rel = path.strip_prefix(dir).expect("listed below dir");
            self.0.update(rel.to_string_lossy().as_bytes());
            self.0.update(fs::read(&path).map_err(|e| Error::io(&path, e))?);
        }
        Ok(self)
    }

    fn finish(&mut self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path).map_err(|e| Error::io(path, e))?)))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?)
}

fn reset_dir(dir: &Path) -> Result<()> {
    match fs::remove_dir_all(dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(Error::io(dir, e)),
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Keyframe window shrunk to fit a curve of `len` values.
fn fit_window(window: usize, len: usize) -> usize {
    window.min(2 * len - 1)
}

/// Crops the faces of one video at its keyframes.
///
/// The keyframe curve runs over the largest face of every frame that has a
/// face; at each selected frame every detected face is cropped. Tracks shorter
/// than three frames are kept whole.
pub fn extract_video_faces(
    seq: &FrameSequence,
    detector: &dyn FaceDetector,
    window: usize,
    order: usize,
) -> Result<Vec<FaceCrop>> {
    let mut track: Vec<(usize, Vec<crate::media::BBox>)> = Vec::new();
    for (i, frame) in seq.frames.iter().enumerate() {
        let boxes = detect_faces(detector, frame)?;
        if !boxes.is_empty() {
            track.push((i, boxes));
        }
    }
    let selected: Vec<usize> = if track.len() < 3 {
        (0..track.len()).collect()
    } else {
        let largest: Vec<Frame> = track
            .iter()
            .map(|(i, boxes)| crate::media::crop_and_resize(&seq.frames[*i], boxes[0]))
            .collect::<Result<_>>()?;
        let face_seq = FrameSequence::new(seq.source_id.clone(), seq.fps, largest)?;
        extract_keyframes(&face_seq, fit_window(window, track.len() - 1), order)?.indices
    };
    let mut crops = Vec::new();
    for t in selected {
        let (frame_index, boxes) = &track[t];
        for (ordinal, bbox) in boxes.iter().enumerate() {
            crops.push(FaceCrop::from_frame(
                &seq.frames[*frame_index],
                *bbox,
                seq.source_id.clone(),
                *frame_index,
                ordinal,
            )?);
        }
    }
    Ok(crops)
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let detector: Box<dyn FaceDetector> = match cfg.detector_spec() {
            DetectorSpec::Marker => Box::new(MarkerDetector::default()),
            DetectorSpec::Command(mut argv) => {
                let program = PathBuf::from(argv.remove(0));
                Box::new(CommandDetector { program, args: argv })
            }
        };
        Self::with_parts(cfg, DecoderSet::default(), detector)
    }

    pub fn with_parts(cfg: RunConfig, decoders: DecoderSet, detector: Box<dyn FaceDetector>) -> Result<Self> {
        let run_dir = cfg.run_dir();
        let journal = Journal::open(&run_dir)?;
        Ok(Self {
            cfg,
            run_dir,
            journal,
            decoders,
            detector,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn artifact(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    /// Runs every stage.
    pub fn run(&self) -> Result<Vec<StageOutcome>> {
        self.run_until(Stage::Explain)
    }

    /// Runs all stages up to and including `last`, skipping up-to-date ones.
    pub fn run_until(&self, last: Stage) -> Result<Vec<StageOutcome>> {
        Stage::ALL
            .into_iter()
            .take_while(|&s| s <= last)
            .map(|s| self.run_stage(s))
            .collect()
    }

    fn input_hash(&self, stage: Stage) -> Result<String> {
        let c = &self.cfg;
        let mut h = InputHash::new(stage);
        match stage {
            Stage::Scan => {
                h.value("dirs", (&c.real_dir, &c.fake_dir, c.dry_run))?;
                for dir in [&c.real_dir, &c.fake_dir] {
                    h.tree(dir)?;
                }
            }
            Stage::Preprocess => {
                h.file(&self.artifact(paths::SCAN))?
                    .value("keyframes", (c.target_fps, c.window, c.order, &c.detector))?;
            }
            Stage::Split => {
                h.file(&self.artifact(paths::PREPROCESS))?.value("split", (c.ratios, c.seed))?;
            }
            Stage::Weights => {
                h.file(&self.artifact(paths::MANIFEST))?;
            }
            Stage::Train => {
                h.file(&self.artifact(paths::MANIFEST))?
                    .file(&self.artifact(paths::WEIGHTS))?
                    .value("head", c.head_config())?
                    .value("train", c.train_config())?;
            }
            Stage::Evaluate => {
                h.file(&self.artifact(paths::MANIFEST))?.tree(&self.artifact(paths::CHECKPOINT))?;
            }
            Stage::Explain => {
                h.file(&self.artifact(paths::MANIFEST))?
                    .tree(&self.artifact(paths::CHECKPOINT))?
                    .value("explain", (&c.methods, c.class, c.n, c.sigma, c.top_k, c.seed, c.explain_samples))?;
            }
        }
        Ok(h.finish())
    }

    fn up_to_date(&self, stage: Stage, hash: &str) -> Result<Option<Vec<PathBuf>>> {
        let state = self.journal.replay()?;
        Ok(state.get(stage.as_str()).and_then(|entry| {
            let fresh = entry.input_hash == hash && entry.artifacts.iter().all(|a| self.run_dir.join(a).exists());
            fresh.then(|| entry.artifacts.clone())
        }))
    }

    /// Runs one stage (or skips it when up to date). Its prerequisites'
    /// artifacts must already exist.
    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        let wrap = |e: Error| Error::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        };
        let hash = match self.input_hash(stage) {
            Ok(h) => h,
            Err(e) => {
                self.journal
                    .append(stage.as_str(), Status::Failed, "", Vec::new(), Some(e.to_string()))?;
                return Err(wrap(e));
            }
        };
        if let Some(artifacts) = self.up_to_date(stage, &hash)? {
            log::info!("{stage}: up to date, skipping");
            self.journal
                .append(stage.as_str(), Status::Skipped, &hash, artifacts.clone(), None)?;
            return Ok(StageOutcome {
                stage,
                skipped: true,
                artifacts,
            });
        }
        log::info!("{stage}: running");
        self.journal.append(stage.as_str(), Status::Started, &hash, Vec::new(), None)?;
        let result = match stage {
            Stage::Scan => self.scan(),
            Stage::Preprocess => self.preprocess(),
            Stage::Split => self.split(),
            Stage::Weights => self.weights().map(|_| vec![PathBuf::from(paths::WEIGHTS)]),
            Stage::Train => self.train(),
            Stage::Evaluate => self.evaluate().map(|_| vec![PathBuf::from(paths::REPORT), PathBuf::from(paths::CONFUSION)]),
            Stage::Explain => self.explain(),
        };
        match result {
            Ok(artifacts) => {
                // Scanning may delete corrupted inputs, so its hash is taken afterwards.
                let hash = if stage == Stage::Scan { self.input_hash(stage)? } else { hash };
                self.journal
                    .append(stage.as_str(), Status::Done, &hash, artifacts.clone(), None)?;
                Ok(StageOutcome {
                    stage,
                    skipped: false,
                    artifacts,
                })
            }
            Err(e) => {
                log::error!("{stage}: {e}");
                self.journal
                    .append(stage.as_str(), Status::Failed, &hash, Vec::new(), Some(e.to_string()))?;
                Err(wrap(e))
            }
        }
    }

    fn scan(&self) -> Result<Vec<PathBuf>> {
        let mut report = ScanReport::default();
        for (label, dir) in [(Label::Real, &self.cfg.real_dir), (Label::Fake, &self.cfg.fake_dir)] {
            let purge = self.decoders.purge_corrupted(dir, self.cfg.dry_run)?;
            report.corrupted.extend(purge.removed.iter().cloned());
            report.skipped.extend(purge.failures);
            for path in list_files(dir)? {
                if purge.removed.contains(&path) {
                    continue;
                }
                if !self.decoders.supports(&path) {
                    log::warn!("no decoder for {}, skipping", path.display());
                    report.skipped.push((path, "unsupported format".into()));
                    continue;
                }
                match self.decoders.probe(&path) {
                    Ok(meta) if meta.readable => report.videos.push(ScannedVideo {
                        sha256: sha256_file(&path)?,
                        path,
                        label,
                        frame_count: meta.frame_count,
                        fps: meta.fps,
                        partial: meta.partial,
                    }),
                    Ok(_) => report.skipped.push((path, "unreadable".into())),
                    Err(e) => report.skipped.push((path, e.to_string())),
                }
            }
        }
        if report.videos.is_empty() {
            return Err(Error::invalid("no readable videos found"));
        }
        write_json(&self.artifact(paths::SCAN), &report)?;
        Ok(vec![PathBuf::from(paths::SCAN)])
    }

    fn preprocess(&self) -> Result<Vec<PathBuf>> {
        let scan: ScanReport = read_json(&self.artifact(paths::SCAN))?;
        let faces_dir = self.artifact(paths::FACES);
        reset_dir(&faces_dir)?;
        let mut ids: Vec<(Label, String)> = scan.videos.iter().map(|v| (v.label, source_id_of(&v.path))).collect();
        ids.sort();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("two {} videos share the source id `{}`", dup[0].0, dup[0].1)));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        let results: Vec<Result<Vec<FaceCrop>>> = pool.install(|| {
            scan.videos
                .par_iter()
                .map(|v| {
                    let seq = self.decoders.decode_frames(&v.path, self.cfg.target_fps)?;
                    extract_video_faces(&seq, self.detector.as_ref(), self.cfg.window, self.cfg.order)
                })
                .collect()
        });
        let mut report = PreprocessReport::default();
        for (video, result) in scan.videos.iter().zip(results) {
            let crops = match result {
                Ok(c) if c.is_empty() => {
                    log::warn!("no faces found in {}, skipping", video.path.display());
                    report.skipped.push((video.path.clone(), "no faces detected".into()));
                    continue;
                }
                Ok(c) => c,
                Err(e) => {
                    log::warn!("skipping {}: {e}", video.path.display());
                    report.skipped.push((video.path.clone(), e.to_string()));
                    continue;
                }
            };
            let source_id = source_id_of(&video.path);
            let dir = faces_dir.join(video.label.as_str()).join(&source_id);
            let mut written = Vec::new();
            for crop in &crops {
                let png = dir.join(format!("{}.png", crop.file_stem()));
                crop.image.save_png(&png)?;
                save_sample(&crop.image, &png.with_extension(crate::dataset::store::EXTENSION))?;
                written.push(png.strip_prefix(&self.run_dir).expect("below run dir").to_path_buf());
            }
            let mut keyframes: Vec<usize> = crops.iter().map(|c| c.frame_index).collect();
            keyframes.dedup();
            report.videos.push(VideoFaces {
                path: video.path.clone(),
                label: video.label,
                source_id,
                face_frames: crops.len(),
                keyframes,
                crops: written,
            });
        }
        if report.videos.is_empty() {
            return Err(Error::invalid("no face crops extracted from any video"));
        }
        write_json(&self.artifact(paths::PREPROCESS), &report)?;
        Ok(vec![PathBuf::from(paths::PREPROCESS), PathBuf::from(paths::FACES)])
    }

    fn split(&self) -> Result<Vec<PathBuf>> {
        let faces = self.artifact(paths::FACES);
        let (real, fake) = (faces.join("real"), faces.join("fake"));
        for d in [&real, &fake] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let manifest = build_manifest(&real, &fake)?;
        let manifest = stratified_split(&manifest, self.cfg.ratios, self.cfg.seed)?;
        manifest.write_jsonl(&self.artifact(paths::MANIFEST))?;
        Ok(vec![PathBuf::from(paths::MANIFEST)])
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::read_jsonl(&self.artifact(paths::MANIFEST))
    }

    /// Class weights from the training split; also written to disk.
    pub fn weights(&self) -> Result<ClassWeights> {
        let weights = class_weights(&self.manifest()?.class_counts(Split::Train))?;
        write_json(&self.artifact(paths::WEIGHTS), &weights)?;
        Ok(weights)
    }

    fn train(&self) -> Result<Vec<PathBuf>> {
        let manifest = self.manifest()?;
        let weights: ClassWeights = read_json(&self.artifact(paths::WEIGHTS))?;
        let trained = train(
            &manifest,
            TinyBackbone::seeded(self.cfg.seed),
            &self.cfg.head_config(),
            &self.cfg.train_config(),
            &weights,
        )?;
        let ckpt = self.artifact(paths::CHECKPOINT);
        reset_dir(&ckpt)?;
        trained.model.save_checkpoint(&ckpt)?;
        trained.history.write_csv(&self.artifact(paths::HISTORY))?;
        Ok(vec![PathBuf::from(paths::CHECKPOINT), PathBuf::from(paths::HISTORY)])
    }

    pub fn load_model(&self) -> Result<Classifier<TinyBackbone>> {
        Classifier::load_checkpoint(&self.artifact(paths::CHECKPOINT))
    }

    fn evaluate(&self) -> Result<EvalReport> {
        let model = self.load_model()?;
        let report = evaluate(&model, &self.manifest()?, Some(&self.artifact(paths::CONFUSION)))?;
        write_json(&self.artifact(paths::REPORT), &report)?;
        Ok(report)
    }

    fn explain(&self) -> Result<Vec<PathBuf>> {
        let model = self.load_model()?;
        let manifest = self.manifest()?;
        let mut samples: Vec<_> = manifest.split(Split::Test).collect();
        samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        samples.truncate(self.cfg.explain_samples);
        if samples.is_empty() {
            return Err(Error::invalid("test split is empty; nothing to explain"));
        }
        let out = self.artifact(paths::HEATMAPS);
        reset_dir(&out)?;
        let params = self.cfg.explain_params();
        let mut artifacts = vec![PathBuf::from(paths::HEATMAPS)];
        for method in &self.cfg.methods {
            for record in &samples {
                let path = record
                    .tensor_path
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("sample `{}` has no tensor", record.sample_id)))?;
                let x = crate::dataset::load_sample(path)?;
                let heat = explain(&model, &x, self.cfg.class, *method, &params)?;
                let stem = record.sample_id.replace('/', "__");
                let png = out.join(method.as_str()).join(format!("{stem}.png"));
                overlay(&heat, &tensor_to_frame(&x)?)?.save_png(&png)?;
                heat.save_tensor(&png.with_extension(crate::dataset::store::EXTENSION))?;
                artifacts.push(png.strip_prefix(&self.run_dir).expect("below run dir").to_path_buf());
            }
        }
        Ok(artifacts)
    }

    /// Heatmap overlays written for `method`.
    pub fn heatmaps(&self, method: Method) -> Result<Vec<PathBuf>> {
        let dir = self.artifact(paths::HEATMAPS).join(method.as_str());
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut files = crate::media::list_files_with_extension(&dir, "png")?;
        files.sort();
        Ok(files)
    }

    pub fn report(&self) -> Result<EvalReport> {
        read_json(&self.artifact(paths::REPORT))
    }
}

/// Validated config in, artifacts on disk out.
pub fn run_pipeline(cfg: RunConfig) -> Result<Vec<StageOutcome>> {
    for dir in [&cfg.real_dir, &cfg.fake_dir] {
        if !dir.is_dir() {
            return Err(Error::NotFound(dir.clone()));
        }
    }
    Pipeline::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::BBox;
    use crate::synthetic::plant_marker;

    fn framed(n: usize, face: Option<BBox>) -> FrameSequence {
        let frames = (0..n)
            .map(|i| {
                let mut f = Frame::rgb_filled(32, 32, [(i * 37 % 200) as u8, 10, 10]);
                if let Some(b) = face {
                    plant_marker(&mut f, b);
                }
                f
            })
            .collect();
        FrameSequence::new("v", 30.0, frames).unwrap()
    }

    #[test]
    fn window_is_clamped_to_curve() {
        assert_eq!(fit_window(9, 2), 3);
        assert_eq!(fit_window(9, 10), 9);
        assert_eq!(fit_window(1, 1), 1);
    }

    #[test]
    fn short_tracks_are_kept_whole() {
        let crops = extract_video_faces(&framed(2, Some(BBox::new(4, 4, 20, 20))), &MarkerDetector::default(), 9, 3).unwrap();
        assert_eq!(crops.iter().map(|c| c.frame_index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn faceless_video_yields_nothing() {
        let crops = extract_video_faces(&framed(10, None), &MarkerDetector::default(), 9, 3).unwrap();
        assert!(crops.is_empty());
    }

    #[test]
    fn keyframes_select_subset_of_track() {
        let crops = extract_video_faces(&framed(20, Some(BBox::new(4, 4, 20, 20))), &MarkerDetector::default(), 3, 1).unwrap();
        assert!(!crops.is_empty() && crops.len() < 20);
        assert!(crops.iter().all(|c| c.image.width() == crate::CROP_SIZE));
    }
}
