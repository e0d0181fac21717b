//! Labelled sample manifests, stratified splitting and sample storage.

pub mod store;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::media::Frame;
use crate::{Error, Label, Result};

pub use store::{load_sample, read_tensor, save_sample, save_samples, write_tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub label: Label,
    pub split: Split,
    pub tensor_path: Option<PathBuf>,
    pub source_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut ids: Vec<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate sample_id `{}`", dup[0])));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-label counts within `split`; labels with no records are omitted.
    pub fn class_counts(&self, split: Split) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.split == split) {
            *counts.entry(r.label).or_insert(0) += 1;
        }
        counts
    }

    /// Per-label counts over every record regardless of split.
    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// JSON Lines, one record per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Self::new(records)
    }
}

/// One record per `.png` face crop under `real_dir` and `fake_dir`.
///
/// Crops laid out as `<label_dir>/<source_id>/<name>.png` take their
/// source id from the directory; flat files use their stem. Each record points
/// at the sibling `.tensor` file, which is written from the PNG if absent.
/// Sample ids are `<label>/<relative path without extension>`.
pub fn build_manifest(real_dir: &Path, fake_dir: &Path) -> Result<DatasetManifest> {
    let mut records = Vec::new();
    for (label, dir) in [(Label::Real, real_dir), (Label::Fake, fake_dir)] {
        if !dir.is_dir() {
            return Err(Error::NotFound(dir.to_path_buf()));
        }
        for path in crate::media::list_files_with_extension(dir, "png")? {
            let rel = path.strip_prefix(dir).expect("listed below dir").with_extension("");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            let source_id = parts[0].clone();
            let tensor_path = path.with_extension(store::EXTENSION);
            if !tensor_path.is_file() {
                save_sample(&Frame::load_png(&path)?, &tensor_path)?;
            }
            records.push(SampleRecord {
                sample_id: format!("{label}/{}", parts.join("/")),
                label,
                split: Split::Unassigned,
                tensor_path: Some(tensor_path),
                source_id,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "no face crops found in {} or {}",
            real_dir.display(),
            fake_dir.display()
        )));
    }
    DatasetManifest::new(records)
}

/// Split sizes for `n` items by largest-remainder rounding of `ratios · n`.
/// Remainder ties go to the earlier split.
pub fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assigns train/val/test within each class.
///
/// Records of each class (labels in order, each sorted by sample id) are
/// shuffled with one generator seeded by `seed`, then cut into consecutive
/// runs sized by [`largest_remainder`]. Record order in the output matches the
/// input.
pub fn stratified_split(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    if ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid(format!("split ratios must be positive, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must sum to 1, got {total}")));
    }
    for (label, count) in manifest.label_counts() {
        if count < 3 {
            return Err(Error::invalid(format!(
                "class `{label}` has {count} samples; stratified splitting needs at least 3"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = manifest.clone();
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..out.records.len()).filter(|&i| out.records[i].label == label).collect();
        if members.is_empty() {
            continue;
        }
        members.sort_by(|&a, &b| out.records[a].sample_id.cmp(&out.records[b].sample_id));
        members.shuffle(&mut rng);
        let sizes = largest_remainder(members.len(), &ratios);
        let mut cursor = members.into_iter();
        for (split, size) in Split::ASSIGNED.into_iter().zip(sizes) {
            for i in cursor.by_ref().take(size) {
                out.records[i].split = split;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(real: usize, fake: usize) -> DatasetManifest {
        let rec = |label: Label, i: usize| SampleRecord {
            sample_id: format!("{label}/{i}"),
            label,
            split: Split::Unassigned,
            tensor_path: None,
            source_id: format!("v{}", i % 3),
        };
        DatasetManifest::new(
            (0..real)
                .map(|i| rec(Label::Real, i))
                .chain((0..fake).map(|i| rec(Label::Fake, i)))
                .collect(),
        )
        .unwrap()
    }

    fn write_png(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        Frame::rgb_filled(4, 4, [1, 2, 3]).save_png(path).unwrap();
    }

    #[test]
    fn manifest_from_directories() {
        let dir = tempfile::tempdir().unwrap();
        let (real, fake) = (dir.path().join("real"), dir.path().join("fake"));
        for i in 0..3 {
            write_png(&real.join(format!("r{i}.png")));
        }
        for i in 0..5 {
            write_png(&fake.join("clip").join(format!("{i}_0.png")));
        }
        let m = build_manifest(&real, &fake).unwrap();
        assert_eq!(m.len(), 8);
        let counts = m.class_counts(Split::Unassigned);
        assert_eq!((counts[&Label::Real], counts[&Label::Fake]), (3, 5));
        let fake_rec = m.records.iter().find(|r| r.label == Label::Fake).unwrap();
        assert_eq!(fake_rec.source_id, "clip");
        assert!(fake_rec.tensor_path.as_ref().unwrap().is_file());
    }

    #[test]
    fn empty_real_dir_is_fine_but_both_empty_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let (real, fake) = (dir.path().join("real"), dir.path().join("fake"));
        fs::create_dir_all(&real).unwrap();
        fs::create_dir_all(&fake).unwrap();
        assert!(matches!(build_manifest(&real, &fake), Err(Error::InvalidArgument(_))));
        for i in 0..4 {
            write_png(&fake.join(format!("{i}.png")));
        }
        let m = build_manifest(&real, &fake).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.records.iter().all(|r| r.label == Label::Fake));
    }

    #[test]
    fn duplicate_names_across_labels_get_distinct_ids() {
        let dir = tempfile::tempdir().unwrap();
        let (real, fake) = (dir.path().join("real"), dir.path().join("fake"));
        write_png(&real.join("same.png"));
        write_png(&fake.join("same.png"));
        let m = build_manifest(&real, &fake).unwrap();
        assert_eq!(m.records[0].sample_id, "real/same");
        assert_eq!(m.records[1].sample_id, "fake/same");
    }

    #[test]
    fn even_classes_split_exactly() {
        let m = stratified_split(&manifest(10, 10), [0.8, 0.1, 0.1], 1).unwrap();
        for split in Split::ASSIGNED {
            let expected = if split == Split::Train { 8 } else { 1 };
            let counts = m.class_counts(split);
            assert_eq!((counts[&Label::Real], counts[&Label::Fake]), (expected, expected));
        }
        assert!(m.class_counts(Split::Unassigned).is_empty());
    }

    #[test]
    fn largest_remainder_on_paper_scale_counts() {
        // 0.8·11106 = 8884.8 and 0.1·11106 = 1110.6: floors leave 2 over, which
        // go to train (.8) and then val (.6, earlier than test on the tie).
        assert_eq!(largest_remainder(11106, &[0.8, 0.1, 0.1]), vec![8885, 1111, 1110]);
        // 0.8·2942 = 2353.6, 0.1·2942 = 294.2.
        assert_eq!(largest_remainder(2942, &[0.8, 0.1, 0.1]), vec![2354, 294, 294]);
        let m = stratified_split(&manifest(2942, 11106), [0.8, 0.1, 0.1], 9).unwrap();
        let train = m.class_counts(Split::Train);
        assert!((train[&Label::Fake] as f64 - 0.8 * 11106.0).abs() <= 1.0);
        assert!((train[&Label::Real] as f64 - 0.8 * 2942.0).abs() <= 1.0);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let m = manifest(30, 40);
        let a = stratified_split(&m, [0.8, 0.1, 0.1], 77).unwrap();
        let b = stratified_split(&m, [0.8, 0.1, 0.1], 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_split_requests() {
        let m = manifest(2, 10);
        match stratified_split(&m, [0.8, 0.1, 0.1], 0) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("real"), "{msg}"),
            other => panic!("expected error, got {other:?}"),
        }
        let m = manifest(10, 10);
        assert!(stratified_split(&m, [0.8, 0.1, 0.0], 0).is_err());
        assert!(stratified_split(&m, [0.7, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn manifest_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = stratified_split(&manifest(5, 6), [0.6, 0.2, 0.2], 3).unwrap();
        m.write_jsonl(&path).unwrap();
        assert_eq!(DatasetManifest::read_jsonl(&path).unwrap(), m);
        let first = fs::read_to_string(&path).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        for key in ["sample_id", "label", "split", "tensor_path", "source_id"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }
}
