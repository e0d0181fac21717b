//! Deepfake face detection pipeline.
//!
//! Videos are screened for corruption, decoded, and reduced to face crops at
//! keyframes (local maxima of the smoothed inter-frame difference curve). The
//! crops are split per class, a classifier head is trained with class-weighted
//! cross-entropy, and predictions are explained with saliency and CAM heatmaps.

pub mod config;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod imbalance;
pub mod journal;
pub mod keyframe;
pub mod media;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor3;

/// Ground-truth class of a face crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    /// Index of the label in model outputs and confusion matrices.
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(Error::invalid(format!("unknown label `{other}` (expected real or fake)"))),
        }
    }
}

/// Side length of every face crop fed to the classifier.
pub const CROP_SIZE: usize = 224;
