//! Confusion matrices and accuracy / precision / recall / F1 reports.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, SampleRecord, Split};
use crate::media::Frame;
use crate::nn::{Backbone, Classifier};
use crate::trainer::SampleSource;
use crate::{Error, Label, Result, Tensor3};

/// Predicted label for a probability vector indexed by [`Label::index`].
/// An exact tie goes to `Fake`.
pub fn predict_label(probs: &[f64]) -> Label {
    if probs[Label::Fake.index()] >= probs[Label::Real.index()] {
        Label::Fake
    } else {
        Label::Real
    }
}

/// `counts[true][pred]`, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, truth: Label, pred: Label) -> u64 {
        self.counts[truth.index()][pred.index()]
    }

    /// Samples whose true class is `label`.
    pub fn support(&self, label: Label) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    pub fn scaled(&self, k: u64) -> Self {
        let mut out = *self;
        out.counts.iter_mut().flatten().for_each(|c| *c *= k);
        out
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("cannot tally an empty prediction set"));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class: BTreeMap<Label, ClassScores>,
    /// Support-weighted means of the per-class scores.
    pub weighted: WeightedScores,
}

impl EvalReport {
    /// Mean per-class recall.
    pub fn balanced_accuracy(&self) -> f64 {
        self.per_class.values().map(|s| s.recall).sum::<f64>() / self.per_class.len() as f64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and weighted scores; every 0/0 is taken as 0.
pub fn report(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("cannot report on an empty confusion matrix"));
    }
    let mut per_class = BTreeMap::new();
    for label in Label::ALL {
        let tp = cm.get(label, label);
        let predicted: u64 = Label::ALL.iter().map(|&t| cm.get(t, label)).sum();
        let support = cm.support(label);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(
            label,
            ClassScores {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let weigh = |f: fn(&ClassScores) -> f64| {
        per_class.values().map(|s| s.support as f64 * f(s)).sum::<f64>() / total as f64
    };
    let trace: u64 = Label::ALL.iter().map(|&l| cm.get(l, l)).sum();
    let weighted = WeightedScores {
        precision: weigh(|s| s.precision),
        // support · TP/support is TP; summing the integers keeps it exact.
        recall: trace as f64 / total as f64,
        f1: weigh(|s| s.f1),
    };
    Ok(EvalReport {
        confusion: *cm,
        accuracy: trace as f64 / total as f64,
        per_class,
        weighted,
    })
}

/// Anything that maps an image to class probabilities.
pub trait Predictor: Sync {
    fn predict_proba(&self, x: &Tensor3) -> Result<Vec<f64>>;
}

impl<B: Backbone> Predictor for Classifier<B> {
    fn predict_proba(&self, x: &Tensor3) -> Result<Vec<f64>> {
        Ok(Classifier::predict_proba(self, x))
    }
}

/// Predicts every sample (in parallel) and tallies the report.
pub fn evaluate_on(model: &dyn Predictor, samples: &dyn SampleSource) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation split is empty"));
    }
    let preds: Vec<Label> = (0..samples.len())
        .into_par_iter()
        .map(|i| Ok(predict_label(&model.predict_proba(&samples.image(i)?)?)))
        .collect::<Result<_>>()?;
    let truth: Vec<Label> = (0..samples.len()).map(|i| samples.label(i)).collect();
    report(&confusion(&truth, &preds)?)
}

/// Evaluates on the manifest's test split, optionally rendering the
/// confusion matrix to `render_to`.
pub fn evaluate(model: &dyn Predictor, manifest: &DatasetManifest, render_to: Option<&Path>) -> Result<EvalReport> {
    let test: Vec<SampleRecord> = manifest.split(Split::Test).cloned().collect();
    let report = evaluate_on(model, &test)?;
    if let Some(path) = render_to {
        render_confusion(&report.confusion, path)?;
    }
    Ok(report)
}

/// 3×5 bitmaps for the digits 0–9, one row per byte (low three bits).
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b001, 0b001, 0b001],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

const CELL: usize = 160;

fn draw_number(frame: &mut Frame, n: u64, cy: usize, cx: usize, ink: [u8; 3]) {
    let text = n.to_string();
    let scale = (CELL / (4 * text.len() + 1)).clamp(2, 8);
    let width = text.len() * 4 * scale - scale;
    let (x0, y0) = (cx.saturating_sub(width / 2), cy.saturating_sub(5 * scale / 2));
    for (i, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[usize::from(ch - b'0')];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let y = y0 + row * scale + dy;
                        let x = x0 + (i * 4 + col) * scale + dx;
                        if y < frame.height() && x < frame.width() {
                            frame.pixel_mut(y, x).copy_from_slice(&ink);
                        }
                    }
                }
            }
        }
    }
}

/// Renders the matrix as a 2×2 grid (rows = true class, columns = predicted,
/// both in `real, fake` order) shaded by row-normalised count, with the count
/// written in each cell.
pub fn render_confusion(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let mut frame = Frame::rgb_filled(2 * CELL, 2 * CELL, [255, 255, 255]);
    for t in 0..2 {
        let row_total: u64 = cm.counts[t].iter().sum();
        for p in 0..2 {
            let share = ratio(cm.counts[t][p], row_total);
            let shade = [
                (255.0 * (1.0 - 0.85 * share)) as u8,
                (255.0 * (1.0 - 0.6 * share)) as u8,
                255,
            ];
            for y in t * CELL + 1..(t + 1) * CELL - 1 {
                for x in p * CELL + 1..(p + 1) * CELL - 1 {
                    frame.pixel_mut(y, x).copy_from_slice(&shade);
                }
            }
            let ink = if share > 0.5 { [255, 255, 255] } else { [0, 0, 0] };
            draw_number(&mut frame, cm.counts[t][p], t * CELL + CELL / 2, p * CELL + CELL / 2, ink);
        }
    }
    frame.save_png(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn worked_example() {
        let cm = confusion(&[Fake, Fake, Real, Real], &[Fake, Real, Real, Real]).unwrap();
        let r = report(&cm).unwrap();
        assert_eq!(r.accuracy, 0.75);
        let f = r.per_class[&Fake];
        assert_eq!((f.precision, f.recall), (1.0, 0.5));
        assert!((f.f1 - 2.0 / 3.0).abs() < 1e-15);
        let re = r.per_class[&Real];
        assert!((re.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(re.recall, 1.0);
        assert!((re.f1 - 0.8).abs() < 1e-15);
        // (2 · 2/3 + 2 · 0.8) / 4
        assert!((r.weighted.f1 - 0.733_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_degenerate_predictors() {
        let truth = [Fake, Real, Fake, Real, Real];
        let r = report(&confusion(&truth, &truth).unwrap()).unwrap();
        assert_eq!(r.confusion.counts, [[3, 0], [0, 2]]);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.weighted.precision, r.weighted.recall, r.weighted.f1), (1.0, 1.0, 1.0));
        let r = report(&confusion(&truth, &[Fake; 5]).unwrap()).unwrap();
        assert_eq!(r.confusion.counts, [[0, 3], [0, 2]]);
        assert_eq!(r.per_class[&Real].precision, 0.0);
        assert_eq!(r.per_class[&Real].f1, 0.0);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(confusion(&[Fake], &[Fake, Real]).is_err());
        assert!(report(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn ties_predict_fake() {
        assert_eq!(predict_label(&[0.5, 0.5]), Fake);
        assert_eq!(predict_label(&[0.6, 0.4]), Real);
    }

    #[test]
    fn rendering_writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cm.png");
        let cm = ConfusionMatrix { counts: [[294, 12], [7, 1111]] };
        render_confusion(&cm, &path).unwrap();
        let img = Frame::load_png(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2 * CELL, 2 * CELL));
    }
}
